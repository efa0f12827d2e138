//! Open-set recall and box overlap metrics against ground-truth objects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postprocess::{fit_obb, select_top_k, MIN_HALF_EXTENT};
use crate::types::{ObjectCluster, OrientedBox, Vec3};

pub const DEFAULT_IOU_SAMPLES: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruthGeometry {
    Points(Vec<Vec3>),
    Box(OrientedBox),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub task_index: usize,
    pub geometry: GroundTruthGeometry,
    pub label: Option<String>,
}

impl GroundTruthObject {
    pub fn bounding_box(&self) -> Result<OrientedBox> {
        match &self.geometry {
            GroundTruthGeometry::Points(points) => fit_obb(points),
            GroundTruthGeometry::Box(b) => Ok(*b),
        }
    }
}

/// Inclusive containment test in the box frame.
pub fn box_contains(b: &OrientedBox, point: &Vec3) -> bool {
    let local = b.to_local(point);
    (0..3).all(|k| local[k].abs() <= b.half_extents[k])
}

/// Each box contains the other's centre.
pub fn strict_os_match(est: &OrientedBox, gt: &OrientedBox) -> bool {
    box_contains(est, &gt.center) && box_contains(gt, &est.center)
}

/// At least one box contains the other's centre.
pub fn relaxed_os_match(est: &OrientedBox, gt: &OrientedBox) -> bool {
    box_contains(est, &gt.center) || box_contains(gt, &est.center)
}

fn floored(b: &OrientedBox) -> OrientedBox {
    OrientedBox {
        half_extents: b.half_extents.map(|h| h.max(MIN_HALF_EXTENT)),
        ..*b
    }
}

fn hit_fraction(from: &OrientedBox, into: &OrientedBox, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut hits = 0usize;
    for _ in 0..samples {
        let local = Vec3::new(
            rng.random_range(-1.0..=1.0) * from.half_extents.x,
            rng.random_range(-1.0..=1.0) * from.half_extents.y,
            rng.random_range(-1.0..=1.0) * from.half_extents.z,
        );
        if box_contains(into, &from.from_local(&local)) {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

/// Monte Carlo IoU of two oriented boxes.
///
/// Half the samples are drawn uniformly inside each box; the two hit
/// fractions give two estimates of the intersection volume, which are
/// averaged. Deterministic for a given seed.
pub fn obb_iou(a: &OrientedBox, b: &OrientedBox, samples: usize, seed: u64) -> Result<f64> {
    if samples < 10_000 {
        return Err(Error::InvalidParameter("obb_iou needs at least 10^4 samples".into()));
    }
    let (a, b) = (floored(a), floored(b));
    if (a.center - b.center).norm() > a.bounding_radius() + b.bounding_radius() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = samples / 2;
    let (va, vb) = (a.volume(), b.volume());
    let in_b = hit_fraction(&a, &b, half, &mut rng);
    let in_a = hit_fraction(&b, &a, samples - half, &mut rng);
    let inter = 0.5 * (in_b * va + in_a * vb);
    let union = va + vb - inter;
    Ok(if union > 0.0 { (inter / union).clamp(0.0, 1.0) } else { 0.0 })
}

/// Summary metrics of one mapping run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strict_osr: f64,
    pub relaxed_osr: f64,
    pub mean_iou: f64,
    pub m_acc: f64,
    pub object_count: usize,
}

impl MetricsReport {
    pub fn table(&self) -> String {
        format!(
            "{:<12}{:>10}\n{:<12}{:>10.3}\n{:<12}{:>10.3}\n{:<12}{:>10.3}\n{:<12}{:>10.3}\n{:<12}{:>10}\n",
            "metric", "value",
            "Strict-osR", self.strict_osr,
            "Relaxed-osR", self.relaxed_osr,
            "mIoU", self.mean_iou,
            "mAcc", self.m_acc,
            "objects", self.object_count,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub iou_accuracy_threshold: f64,
    pub iou_samples: usize,
    pub seed: u64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            iou_accuracy_threshold: 0.25,
            iou_samples: DEFAULT_IOU_SAMPLES,
            seed: 0,
        }
    }
}

/// Scores a map against ground truth.
///
/// For a task with n ground-truth instances the n most relevant objects are
/// taken and matched one-to-one by descending IoU. Every ground-truth instance
/// counts once; unmatched instances score zero.
pub fn score_run(
    objects: &[ObjectCluster],
    ground_truth: &[GroundTruthObject],
    task_count: usize,
    opts: &ScoreOptions,
) -> Result<MetricsReport> {
    let mut per_task: Vec<Vec<OrientedBox>> = vec![Vec::new(); task_count];
    for gt in ground_truth {
        let slot = per_task.get_mut(gt.task_index).ok_or(Error::TaskIndex {
            index: gt.task_index,
            count: task_count,
        })?;
        slot.push(gt.bounding_box()?);
    }
    let (mut strict, mut relaxed, mut iou_sum, mut acc) = (0usize, 0usize, 0.0, 0usize);
    let mut pair_seed = opts.seed;
    for (task, gt_boxes) in per_task.iter().enumerate() {
        if gt_boxes.is_empty() || objects.is_empty() {
            continue;
        }
        let detections = select_top_k(objects, task, gt_boxes.len())?;
        let det_boxes: Vec<OrientedBox> = detections
            .iter()
            .map(|c| {
                c.obb.ok_or_else(|| {
                    Error::InvalidParameter(format!("object {} has no bounding box", c.id))
                })
            })
            .collect::<Result<_>>()?;
        let mut pairs = Vec::new();
        for (d, db) in det_boxes.iter().enumerate() {
            for (g, gb) in gt_boxes.iter().enumerate() {
                pair_seed = pair_seed.wrapping_add(1);
                let iou = obb_iou(db, gb, opts.iou_samples, pair_seed)?;
                if iou > 0.0 {
                    pairs.push((iou, d, g));
                }
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut det_used = vec![false; det_boxes.len()];
        let mut gt_used = vec![false; gt_boxes.len()];
        for (iou, d, g) in pairs {
            if det_used[d] || gt_used[g] {
                continue;
            }
            det_used[d] = true;
            gt_used[g] = true;
            strict += strict_os_match(&det_boxes[d], &gt_boxes[g]) as usize;
            relaxed += relaxed_os_match(&det_boxes[d], &gt_boxes[g]) as usize;
            iou_sum += iou;
            acc += (iou > opts.iou_accuracy_threshold) as usize;
        }
    }
    let total = ground_truth.len().max(1) as f64;
    Ok(MetricsReport {
        strict_osr: strict as f64 / total,
        relaxed_osr: relaxed as f64 / total,
        mean_iou: iou_sum / total,
        m_acc: acc as f64 / total,
        object_count: objects.len(),
    })
}
