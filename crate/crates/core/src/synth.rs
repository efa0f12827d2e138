//! Synthetic scenes with known ground truth.
//!
//! Objects are box-shaped shells of Gaussian centroids (plus a few floaters)
//! placed disjointly on a ground plane. A camera orbits the scene at varying
//! range; every frame gets an exact point-splatted depth map and one mask per
//! visible object. Scores follow
//!
//! ```text
//! relevant task:   mu_pos + angle_amp * sin(theta) + eps
//! other tasks:     mu_neg + eps
//! ```
//!
//! and, when the camera-to-object distance lies in `outlier_range`, the
//! relevant score is replaced with probability `outlier_rate` by a draw
//! centred on `mu_neg`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::association::{associate_frame, project_centroid, DepthTolerance};
use crate::error::{Error, Result};
use crate::eval::{GroundTruthGeometry, GroundTruthObject};
use crate::io::{write_json, write_observation_log, GroundTruthRecord, SceneFile};
use crate::types::{CameraFrame, DepthMap, GaussianRecord, Mat3, MaskObservation, ObservationFrame, Rle, TaskList, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    /// Mean horizontal distance of the camera from the scene centre.
    pub radius: f64,
    /// Amplitude of the sinusoidal range variation.
    pub radius_amplitude: f64,
    /// Number of range oscillations over the whole sequence.
    pub radius_cycles: f64,
    pub height: f64,
    pub revolutions: f64,
    pub width: u32,
    pub height_px: u32,
    pub fov_deg: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            radius: 3.5,
            radius_amplitude: 1.0,
            radius_cycles: 2.0,
            height: 1.8,
            revolutions: 1.0,
            width: 320,
            height_px: 240,
            fov_deg: 70.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreModel {
    pub mu_neg: f64,
    pub mu_pos: f64,
    pub sigma_eps: f64,
    pub angle_amp: f64,
    pub outlier_rate: f64,
    /// Camera-to-object distances `[near, far]` in which outliers occur.
    pub outlier_range: [f64; 2],
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            mu_neg: 0.20,
            mu_pos: 0.27,
            sigma_eps: 0.02,
            angle_amp: 0.01,
            outlier_rate: 0.1,
            outlier_range: [4.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_objects: usize,
    /// Defaults to one task per object.
    pub n_tasks: Option<usize>,
    /// Relevant task of each object; defaults to `object % n_tasks`.
    pub relevant_tasks: Option<Vec<usize>>,
    pub gaussians_per_object: usize,
    /// Largest side of an object, metres.
    pub object_extent: f64,
    /// Side of the square area holding object centres, metres.
    pub scene_extent: f64,
    pub n_frames: usize,
    pub orbit: OrbitConfig,
    pub scores: ScoreModel,
    pub floaters_per_object: usize,
    /// Range of floater offsets from the object surface, metres.
    pub floater_distance: [f64; 2],
    /// Objects covering fewer pixels than this in a frame get no mask.
    pub min_mask_pixels: usize,
    /// Emit the depth-tested Gaussian ids of each mask instead of the mask
    /// and depth map.
    pub precomputed_associations: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_objects: 8,
            n_tasks: None,
            relevant_tasks: None,
            gaussians_per_object: 300,
            object_extent: 0.5,
            scene_extent: 4.0,
            n_frames: 40,
            orbit: OrbitConfig::default(),
            scores: ScoreModel::default(),
            floaters_per_object: 4,
            floater_distance: [0.25, 0.6],
            min_mask_pixels: 25,
            precomputed_associations: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Low-noise regime: sigma_eps 0.02, angle_amp 0.01, outlier_rate 0.1.
    pub fn easy(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Noisy regime: sigma_eps 0.04, outlier_rate 0.3.
    pub fn hard(seed: u64) -> Self {
        let mut config = Self::easy(seed);
        config.scores.sigma_eps = 0.04;
        config.scores.outlier_rate = 0.3;
        config
    }

    pub fn task_count(&self) -> usize {
        self.n_tasks.unwrap_or(self.n_objects)
    }

    fn relevant_task(&self, object: usize) -> usize {
        match &self.relevant_tasks {
            Some(tasks) => tasks[object],
            None => object % self.task_count(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.n_objects == 0 || self.gaussians_per_object == 0 {
            return bad("need at least one object with one gaussian");
        }
        if self.task_count() == 0 {
            return bad("need at least one task");
        }
        if let Some(tasks) = &self.relevant_tasks {
            if tasks.len() != self.n_objects || tasks.iter().any(|&t| t >= self.task_count()) {
                return bad("relevant_tasks must name a valid task for every object");
            }
        }
        if !(self.object_extent > 0.0 && self.scene_extent > 0.0) {
            return bad("extents must be positive");
        }
        if !(0.0..=1.0).contains(&self.scores.outlier_rate) {
            return bad("outlier_rate must lie in [0, 1]");
        }
        if self.scores.sigma_eps < 0.0 || self.floater_distance[0] > self.floater_distance[1] {
            return bad("invalid noise or floater range");
        }
        if self.orbit.width == 0 || self.orbit.height_px == 0 || !(self.orbit.fov_deg > 0.0 && self.orbit.fov_deg < 180.0) {
            return bad("invalid image settings");
        }
        Ok(())
    }
}

/// One emitted mask, with what the generator knows about it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTruth {
    pub frame_id: u64,
    pub mask_id: u64,
    pub object: usize,
    pub distance: f64,
    pub in_outlier_range: bool,
    /// The relevant score was replaced by a negative-class draw.
    pub outlier: bool,
    /// Gaussians owning at least one pixel of the mask in the depth buffer.
    pub visible_ids: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub scene: Vec<(u64, Vec3)>,
    /// Owning object of each scene entry.
    pub object_of: Vec<usize>,
    pub is_floater: Vec<bool>,
    pub tasks: TaskList,
    pub frames: Vec<ObservationFrame>,
    pub ground_truth: Vec<GroundTruthObject>,
    pub masks: Vec<MaskTruth>,
}

impl SynthDataset {
    /// Writes `scene.json`, `tasks.json`, `observations.jsonl`, and
    /// `ground_truth.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("scene.json"), &SceneFile::from_centers(self.scene.iter().copied()))?;
        write_json(&dir.join("tasks.json"), &self.tasks.as_slice())?;
        write_observation_log(&dir.join("observations.jsonl"), &self.frames)?;
        let gt: Vec<GroundTruthRecord> = self
            .ground_truth
            .iter()
            .filter_map(GroundTruthRecord::from_object)
            .collect();
        write_json(&dir.join("ground_truth.json"), &gt)?;
        Ok(())
    }
}

struct BoxShape {
    center: Vec3,
    yaw: f64,
    half: Vec3,
}

impl BoxShape {
    fn rotation(&self) -> Mat3 {
        let (s, c) = self.yaw.sin_cos();
        Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    fn footprint_radius(&self) -> f64 {
        self.half.x.hypot(self.half.y)
    }

    /// Uniform point on the box surface.
    fn surface_point(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        let h = self.half;
        let areas = [h.y * h.z, h.y * h.z, h.x * h.z, h.x * h.z, h.x * h.y, h.x * h.y];
        let total: f64 = areas.iter().sum();
        let mut pick = rng.random_range(0.0..total);
        let mut face = 0;
        while face < 5 && pick >= areas[face] {
            pick -= areas[face];
            face += 1;
        }
        let mut u = || rng.random_range(-1.0..=1.0);
        let local = match face {
            0 => Vec3::new(h.x, u() * h.y, u() * h.z),
            1 => Vec3::new(-h.x, u() * h.y, u() * h.z),
            2 => Vec3::new(u() * h.x, h.y, u() * h.z),
            3 => Vec3::new(u() * h.x, -h.y, u() * h.z),
            4 => Vec3::new(u() * h.x, u() * h.y, h.z),
            _ => Vec3::new(u() * h.x, u() * h.y, -h.z),
        };
        self.center + self.rotation() * local
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn place_objects(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<BoxShape>> {
    let mut shapes: Vec<BoxShape> = Vec::with_capacity(config.n_objects);
    let half_scene = config.scene_extent / 2.0;
    for _ in 0..config.n_objects {
        let mut placed = None;
        for _ in 0..10_000 {
            let dims = Vec3::new(
                rng.random_range(0.5..=1.0),
                rng.random_range(0.5..=1.0),
                rng.random_range(0.5..=1.0),
            ) * config.object_extent;
            let half = dims / 2.0;
            let center = Vec3::new(
                rng.random_range(-half_scene..=half_scene),
                rng.random_range(-half_scene..=half_scene),
                half.z,
            );
            let candidate = BoxShape {
                center,
                yaw: rng.random_range(0.0..PI),
                half,
            };
            let clear = shapes.iter().all(|s| {
                let gap = (s.center - candidate.center).xy().norm();
                gap > s.footprint_radius() + candidate.footprint_radius() + config.floater_distance[1] / 2.0
            });
            if clear {
                placed = Some(candidate);
                break;
            }
        }
        shapes.push(placed.ok_or(Error::Placement(config.n_objects))?);
    }
    Ok(shapes)
}

/// Camera looking at `target` from `eye`, with +z forward, +x right, +y down.
pub fn look_at(eye: Vec3, target: Vec3, width: u32, height: u32, fov_deg: f64) -> CameraFrame {
    let forward = (target - eye).normalize();
    let up = Vec3::z();
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let fx = (width as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan();
    CameraFrame {
        rotation,
        translation: -(rotation * eye),
        fx,
        fy: fx,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    }
}

/// Builds a complete dataset. Identical configs give identical datasets.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shapes = place_objects(config, &mut rng)?;

    let mut scene = Vec::new();
    let mut object_of = Vec::new();
    let mut is_floater = Vec::new();
    let per_object = config.gaussians_per_object + config.floaters_per_object;
    for (o, shape) in shapes.iter().enumerate() {
        for i in 0..per_object {
            let floater = i >= config.gaussians_per_object;
            let mut p = shape.surface_point(&mut rng);
            if floater {
                let d = rng.random_range(config.floater_distance[0]..=config.floater_distance[1]);
                p += random_unit(&mut rng) * d;
            }
            scene.push(((o * per_object + i) as u64, p));
            object_of.push(o);
            is_floater.push(floater);
        }
    }

    let tasks = TaskList::new((0..config.task_count()).map(|t| format!("task {t}")))?;
    let ground_truth = shapes
        .iter()
        .enumerate()
        .map(|(o, _)| GroundTruthObject {
            task_index: config.relevant_task(o),
            geometry: GroundTruthGeometry::Points(
                scene
                    .iter()
                    .zip(&object_of)
                    .zip(&is_floater)
                    .filter(|((_, &owner), &fl)| owner == o && !fl)
                    .map(|((g, _), _)| g.1)
                    .collect(),
            ),
            label: Some(format!("object {o}")),
        })
        .collect();

    let records: Vec<GaussianRecord> = scene
        .iter()
        .map(|&(id, center)| GaussianRecord {
            id,
            center,
            posterior: Vec::new(),
            primitive_id: None,
            update_count: 0,
        })
        .collect();
    let sm = &config.scores;
    let noise = Normal::new(0.0, sm.sigma_eps).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let orbit = &config.orbit;
    let target = Vec3::new(0.0, 0.0, config.object_extent / 2.0);
    let mut frames = Vec::with_capacity(config.n_frames);
    let mut masks_truth = Vec::new();
    for f in 0..config.n_frames {
        let s = f as f64 / config.n_frames.max(1) as f64;
        let azimuth = 2.0 * PI * orbit.revolutions * s;
        let radius = orbit.radius + orbit.radius_amplitude * (2.0 * PI * orbit.radius_cycles * s).sin();
        let eye = Vec3::new(radius * azimuth.cos(), radius * azimuth.sin(), orbit.height);
        let camera = look_at(eye, target, orbit.width, orbit.height_px, orbit.fov_deg);

        let pixels = camera.pixel_count();
        let mut zbuf = vec![0.0f32; pixels];
        let mut owner = vec![usize::MAX; pixels];
        for (slot, (_, center)) in scene.iter().enumerate() {
            if let Some(proj) = project_centroid(center, &camera) {
                let px = proj.pixel as usize;
                let z = proj.z_cam as f32;
                if owner[px] == usize::MAX || z < zbuf[px] {
                    zbuf[px] = z;
                    owner[px] = slot;
                }
            }
        }
        let mut object_pixels: Vec<Vec<u32>> = vec![Vec::new(); shapes.len()];
        for (px, &slot) in owner.iter().enumerate() {
            if slot != usize::MAX {
                object_pixels[object_of[slot]].push(px as u32);
            }
        }

        let frame_id = f as u64;
        let mut masks = Vec::new();
        for (o, shape) in shapes.iter().enumerate() {
            if object_pixels[o].is_empty() || object_pixels[o].len() < config.min_mask_pixels {
                continue;
            }
            let mut visible_ids: Vec<u64> = object_pixels[o].iter().map(|&px| scene[owner[px as usize]].0).collect();
            visible_ids.sort_unstable();
            visible_ids.dedup();

            let to_camera = eye - shape.center;
            let distance = to_camera.norm();
            let theta = to_camera.y.atan2(to_camera.x) - shape.yaw;
            let relevant = config.relevant_task(o);
            let in_range = (sm.outlier_range[0]..=sm.outlier_range[1]).contains(&distance);
            let mut scores: Vec<f64> = (0..config.task_count())
                .map(|_| sm.mu_neg + noise.sample(&mut rng))
                .collect();
            let positive = sm.mu_pos + sm.angle_amp * theta.sin() + noise.sample(&mut rng);
            let outlier = in_range && rng.random_bool(sm.outlier_rate);
            scores[relevant] = if outlier {
                sm.mu_neg + noise.sample(&mut rng)
            } else {
                positive
            };

            let mask_id = o as u64;
            masks_truth.push(MaskTruth {
                frame_id,
                mask_id,
                object: o,
                distance,
                in_outlier_range: in_range,
                outlier,
                visible_ids: visible_ids.clone(),
            });
            masks.push(MaskObservation {
                mask_id,
                region: Some(Rle::from_pixels(object_pixels[o].iter().copied())),
                scores,
                gaussian_ids: None,
            });
        }
        let depth = DepthMap {
            width: camera.width,
            height: camera.height,
            depths: zbuf,
        };
        let mut frame = ObservationFrame {
            frame_id,
            camera,
            depth: Some(depth),
            masks,
        };
        if config.precomputed_associations {
            let sets = associate_frame(&frame, &records, &DepthTolerance::default())?;
            for (mask, ids) in frame.masks.iter_mut().zip(sets) {
                mask.region = None;
                mask.gaussian_ids = Some(ids);
            }
            frame.depth = None;
        }
        frames.push(frame);
    }
    Ok(SynthDataset {
        config: config.clone(),
        scene,
        object_of,
        is_floater,
        tasks,
        frames,
        ground_truth,
        masks: masks_truth,
    })
}
