//! Mapping 2D masks to the visible, unoccluded Gaussians behind them.

use crate::error::{Error, Result};
use crate::types::{CameraFrame, DepthMap, GaussianRecord, MaskObservation, ObservationFrame, Vec3};

/// Allowed |z_cam - depth| residual: the larger of an absolute floor and a
/// fraction of the measured depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthTolerance {
    pub absolute: f64,
    pub relative: f64,
}

impl Default for DepthTolerance {
    fn default() -> Self {
        Self {
            absolute: 0.05,
            relative: 0.02,
        }
    }
}

impl DepthTolerance {
    pub fn absolute(meters: f64) -> Self {
        Self {
            absolute: meters,
            relative: 0.0,
        }
    }

    pub fn at(&self, depth: f64) -> f64 {
        self.absolute.max(self.relative * depth)
    }
}

/// A centroid projected into an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub z_cam: f64,
    /// Row-major index of the nearest pixel.
    pub pixel: u32,
}

/// Projects a world point with the pinhole model. `None` if the point is
/// behind the camera or its nearest pixel falls outside the image.
pub fn project_centroid(center: &Vec3, cam: &CameraFrame) -> Option<Projection> {
    let p = cam.to_camera(center);
    if p.z <= 0.0 {
        return None;
    }
    let u = cam.fx * p.x / p.z + cam.cx;
    let v = cam.fy * p.y / p.z + cam.cy;
    let col = u.round();
    let row = v.round();
    if !(col >= 0.0 && row >= 0.0 && col < cam.width as f64 && row < cam.height as f64) {
        return None;
    }
    let pixel = row as u32 * cam.width + col as u32;
    Some(Projection {
        u,
        v,
        z_cam: p.z,
        pixel,
    })
}

fn passes_depth(proj: &Projection, depth: &DepthMap, tol: &DepthTolerance) -> bool {
    match depth.at(proj.pixel as usize) {
        Some(d) => (proj.z_cam - d).abs() <= tol.at(d),
        None => false,
    }
}

/// Gaussians associated with one mask.
///
/// Precomputed ids are returned verbatim. Otherwise a Gaussian is kept when
/// its centroid projects into the mask region and agrees with the depth map
/// at that pixel.
pub fn associate_mask(
    mask: &MaskObservation,
    cam: &CameraFrame,
    depth: Option<&DepthMap>,
    gaussians: &[GaussianRecord],
    tol: &DepthTolerance,
) -> Result<Vec<u64>> {
    if let Some(ids) = &mask.gaussian_ids {
        return Ok(ids.clone());
    }
    let depth = depth.ok_or(Error::MissingDepth {
        mask_id: mask.mask_id,
    })?;
    let region = mask.region.as_ref().ok_or(Error::MissingDepth {
        mask_id: mask.mask_id,
    })?;
    Ok(gaussians
        .iter()
        .filter(|g| {
            project_centroid(&g.center, cam)
                .is_some_and(|proj| region.contains(proj.pixel) && passes_depth(&proj, depth, tol))
        })
        .map(|g| g.id)
        .collect())
}

const NO_MASK: u32 = u32::MAX;

/// Associates every mask of a frame in one pass over the Gaussians.
/// Produces the same sets as calling [`associate_mask`] per mask.
pub fn associate_frame(
    frame: &ObservationFrame,
    gaussians: &[GaussianRecord],
    tol: &DepthTolerance,
) -> Result<Vec<Vec<u64>>> {
    let mut sets: Vec<Vec<u64>> = vec![Vec::new(); frame.masks.len()];
    let mut geometric = false;
    for (i, mask) in frame.masks.iter().enumerate() {
        match &mask.gaussian_ids {
            Some(ids) => sets[i] = ids.clone(),
            None => {
                if frame.depth.is_none() || mask.region.is_none() {
                    return Err(Error::MissingDepth {
                        mask_id: mask.mask_id,
                    });
                }
                geometric = true;
            }
        }
    }
    if !geometric {
        return Ok(sets);
    }
    let cam = &frame.camera;
    let depth = frame.depth.as_ref().expect("checked above");
    let mut labels = vec![NO_MASK; cam.pixel_count()];
    for (i, mask) in frame.masks.iter().enumerate() {
        if mask.gaussian_ids.is_some() {
            continue;
        }
        if let Some(region) = &mask.region {
            for p in region.pixels() {
                if let Some(slot) = labels.get_mut(p as usize) {
                    *slot = i as u32;
                }
            }
        }
    }
    for g in gaussians {
        let Some(proj) = project_centroid(&g.center, cam) else {
            continue;
        };
        let label = labels[proj.pixel as usize];
        if label != NO_MASK && passes_depth(&proj, depth, tol) {
            sets[label as usize].push(g.id);
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Mat3, Rle};

    fn camera() -> CameraFrame {
        CameraFrame {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }

    fn record(id: u64, center: Vec3) -> GaussianRecord {
        GaussianRecord {
            id,
            center,
            posterior: vec![0.05],
            primitive_id: None,
            update_count: 0,
        }
    }

    #[test]
    fn projection_examples() {
        let cam = camera();
        let p = project_centroid(&Vec3::new(0.0, 0.0, 2.0), &cam).unwrap();
        assert_eq!((p.u, p.v, p.z_cam), (320.0, 240.0, 2.0));
        assert!(project_centroid(&Vec3::new(0.0, 0.0, -1.0), &cam).is_none());
        let p = project_centroid(&Vec3::new(0.1, 0.0, 1.0), &cam).unwrap();
        assert_eq!(p.u, 370.0);
        assert!(project_centroid(&Vec3::new(10.0, 0.0, 1.0), &cam).is_none());
    }

    #[test]
    fn precomputed_ids_pass_through() {
        let mask = MaskObservation {
            mask_id: 0,
            region: None,
            scores: vec![0.2],
            gaussian_ids: Some(vec![3, 7]),
        };
        let ids = associate_mask(&mask, &camera(), None, &[], &DepthTolerance::default()).unwrap();
        assert_eq!(ids, vec![3, 7]);
    }

    #[test]
    fn missing_depth_is_an_error() {
        let mask = MaskObservation {
            mask_id: 4,
            region: Some(Rle::from_pixels([0])),
            scores: vec![0.2],
            gaussian_ids: None,
        };
        assert!(matches!(
            associate_mask(&mask, &camera(), None, &[], &DepthTolerance::default()),
            Err(Error::MissingDepth { mask_id: 4 })
        ));
    }

    #[test]
    fn depth_test_includes_surface_and_excludes_occluded() {
        let cam = camera();
        let center_pixel = 240 * 640 + 320;
        let mut depths = vec![0.0f32; cam.pixel_count()];
        depths[center_pixel] = 2.0;
        let depth = DepthMap::new(640, 480, depths).unwrap();
        let mask = MaskObservation {
            mask_id: 0,
            region: Some(Rle::from_pixels([center_pixel as u32])),
            scores: vec![0.2],
            gaussian_ids: None,
        };
        let gaussians = vec![record(1, Vec3::new(0.0, 0.0, 2.0)), record(2, Vec3::new(0.0, 0.0, 3.0))];
        let tol = DepthTolerance::absolute(0.05);
        let ids = associate_mask(&mask, &cam, Some(&depth), &gaussians, &tol).unwrap();
        assert_eq!(ids, vec![1]);
    }

    #[test]
    fn invalid_depth_excludes() {
        let cam = camera();
        let center_pixel = 240 * 640 + 320;
        let mut depths = vec![0.0f32; cam.pixel_count()];
        depths[center_pixel] = f32::NAN;
        let depth = DepthMap::new(640, 480, depths).unwrap();
        let mask = MaskObservation {
            mask_id: 0,
            region: Some(Rle::from_pixels([center_pixel as u32])),
            scores: vec![0.2],
            gaussian_ids: None,
        };
        let gaussians = vec![record(1, Vec3::new(0.0, 0.0, 2.0))];
        let ids = associate_mask(&mask, &cam, Some(&depth), &gaussians, &DepthTolerance::default()).unwrap();
        assert!(ids.is_empty());
    }

    #[test]
    fn relative_tolerance_grows_with_range() {
        let tol = DepthTolerance::default();
        assert_eq!(tol.at(1.0), 0.05);
        assert!((tol.at(10.0) - 0.2).abs() < 1e-12);
    }
}
