//! Domain types shared by every stage of the mapping pipeline.

use std::collections::{BTreeSet, HashSet};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Ordered list of natural-language tasks. The position of a task is its index
/// everywhere else in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskList {
    tasks: Vec<String>,
}

impl TaskList {
    pub fn new<S: Into<String>>(tasks: impl IntoIterator<Item = S>) -> Result<Self> {
        let tasks: Vec<String> = tasks.into_iter().map(Into::into).collect();
        if tasks.is_empty() {
            return Err(Error::EmptyTaskList);
        }
        let mut seen = HashSet::new();
        for task in &tasks {
            if task.trim().is_empty() || !seen.insert(task.as_str()) {
                return Err(Error::InvalidTask(task.clone()));
            }
        }
        Ok(Self { tasks })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.tasks.get(index).map(String::as_str)
    }

    pub fn index_of(&self, task: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t == task)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tasks
    }
}

/// One 3D Gaussian as seen by the semantic layer: only its centroid matters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRecord {
    pub id: u64,
    pub center: Vec3,
    /// p(y = 1 | observations so far), one entry per task.
    pub posterior: Vec<f64>,
    pub primitive_id: Option<u64>,
    pub update_count: u32,
}

/// An over-segmented group of Gaussians that share mask provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Primitive {
    pub id: u64,
    pub gaussian_ids: BTreeSet<u64>,
}

impl Primitive {
    pub fn len(&self) -> usize {
        self.gaussian_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussian_ids.is_empty()
    }
}

/// A task-level object produced by clustering primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCluster {
    pub id: u64,
    pub primitive_ids: Vec<u64>,
    pub gaussian_ids: Vec<u64>,
    /// T task probabilities followed by the null task; sums to one.
    pub task_dist: Vec<f64>,
    pub prior_mass: f64,
    pub obb: Option<OrientedBox>,
}

impl ObjectCluster {
    /// Highest probability over the real (non-null) tasks.
    pub fn max_task_probability(&self) -> f64 {
        let real = &self.task_dist[..self.task_dist.len().saturating_sub(1)];
        real.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Columns are the box axes expressed in world coordinates.
    pub rotation: Mat3,
    pub half_extents: Vec3,
}

impl OrientedBox {
    pub fn axis_aligned(center: Vec3, half_extents: Vec3) -> Self {
        Self {
            center,
            rotation: Mat3::identity(),
            half_extents,
        }
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.x * self.half_extents.y * self.half_extents.z
    }

    /// Coordinates of a world point in the box frame.
    pub fn to_local(&self, point: &Vec3) -> Vec3 {
        self.rotation.transpose() * (point - self.center)
    }

    pub fn from_local(&self, local: &Vec3) -> Vec3 {
        self.center + self.rotation * local
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_extents.norm()
    }
}

/// Pinhole camera with a camera-from-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraFrame {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be non-zero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidCamera(
                "principal point must lie inside the image".into(),
            ));
        }
        let ortho = self.rotation.transpose() * self.rotation - Mat3::identity();
        if ortho.abs().max() > 1e-6 {
            return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    /// Camera centre in world coordinates.
    pub fn position(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Run-length encoded pixel set over row-major pixel indices.
/// Runs are sorted, non-empty and non-overlapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rle {
    runs: Vec<(u32, u32)>,
}

impl Rle {
    /// Validates `(start, len)` runs against an image of `pixel_count` pixels.
    pub fn from_runs(runs: Vec<(u32, u32)>, pixel_count: usize) -> std::result::Result<Self, String> {
        let mut end_prev = 0u64;
        for (i, &(start, len)) in runs.iter().enumerate() {
            if len == 0 {
                return Err(format!("run {i} has zero length"));
            }
            if i > 0 && (start as u64) < end_prev {
                return Err(format!("run {i} overlaps or precedes the previous run"));
            }
            end_prev = start as u64 + len as u64;
            if end_prev > pixel_count as u64 {
                return Err(format!("run {i} exceeds the image bounds"));
            }
        }
        Ok(Self { runs })
    }

    /// Builds runs from an arbitrary collection of pixel indices.
    pub fn from_pixels(pixels: impl IntoIterator<Item = u32>) -> Self {
        let mut pixels: Vec<u32> = pixels.into_iter().collect();
        pixels.sort_unstable();
        pixels.dedup();
        let mut runs: Vec<(u32, u32)> = Vec::new();
        for p in pixels {
            match runs.last_mut() {
                Some((start, len)) if *start + *len == p => *len += 1,
                _ => runs.push((p, 1)),
            }
        }
        Self { runs }
    }

    pub fn runs(&self) -> &[(u32, u32)] {
        &self.runs
    }

    pub fn pixel_count(&self) -> usize {
        self.runs.iter().map(|&(_, l)| l as usize).sum()
    }

    pub fn contains(&self, pixel: u32) -> bool {
        let idx = self.runs.partition_point(|&(start, _)| start <= pixel);
        idx > 0 && {
            let (start, len) = self.runs[idx - 1];
            pixel - start < len
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = u32> + '_ {
        self.runs.iter().flat_map(|&(start, len)| start..start + len)
    }
}

/// One masked 2D region with its per-task cosine scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskObservation {
    pub mask_id: u64,
    pub region: Option<Rle>,
    pub scores: Vec<f64>,
    /// Precomputed association; when present it is used verbatim.
    pub gaussian_ids: Option<Vec<u64>>,
}

/// Per-pixel depth in metres. Zero or NaN marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub depths: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, depths: Vec<f32>) -> Result<Self> {
        if depths.len() != width as usize * height as usize {
            return Err(Error::InvalidParameter(format!(
                "depth map has {} values for a {width}x{height} image",
                depths.len()
            )));
        }
        Ok(Self {
            width,
            height,
            depths,
        })
    }

    /// Valid depth at a pixel index, if any.
    pub fn at(&self, pixel: usize) -> Option<f64> {
        let d = *self.depths.get(pixel)?;
        (d.is_finite() && d > 0.0).then_some(d as f64)
    }
}

/// Everything observed in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationFrame {
    pub frame_id: u64,
    pub camera: CameraFrame,
    pub depth: Option<DepthMap>,
    pub masks: Vec<MaskObservation>,
}

impl ObservationFrame {
    /// Checks camera validity, depth dimensions, score lengths, and pixel
    /// disjointness of the masks.
    pub fn validate(&self, task_count: usize) -> Result<()> {
        self.camera.validate()?;
        if let Some(depth) = &self.depth {
            if depth.width != self.camera.width || depth.height != self.camera.height {
                return Err(Error::InvalidParameter(format!(
                    "frame {}: depth map is {}x{} but camera is {}x{}",
                    self.frame_id, depth.width, depth.height, self.camera.width, self.camera.height
                )));
            }
        }
        let pixel_count = self.camera.pixel_count();
        let mut claimed = vec![false; if self.masks.iter().any(|m| m.region.is_some()) { pixel_count } else { 0 }];
        for mask in &self.masks {
            if mask.scores.len() != task_count {
                return Err(Error::ScoreLength {
                    expected: task_count,
                    got: mask.scores.len(),
                });
            }
            if let Some(region) = &mask.region {
                for p in region.pixels() {
                    let slot = claimed.get_mut(p as usize).ok_or_else(|| Error::InvalidMask {
                        mask_id: mask.mask_id,
                        reason: "pixel outside the image".into(),
                    })?;
                    if *slot {
                        return Err(Error::InvalidMask {
                            mask_id: mask.mask_id,
                            reason: format!("pixel {p} already belongs to another mask"),
                        });
                    }
                    *slot = true;
                }
            } else if mask.gaussian_ids.is_none() {
                return Err(Error::InvalidMask {
                    mask_id: mask.mask_id,
                    reason: "needs either an rle region or gaussian ids".into(),
                });
            }
        }
        Ok(())
    }
}
