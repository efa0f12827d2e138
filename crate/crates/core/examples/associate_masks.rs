//! Project Gaussian centroids into a frame and keep the ones inside a mask
//! that also agree with the depth image.

use taskmap::synth::look_at;
use taskmap::{
    associate_mask, project_centroid, DepthMap, DepthTolerance, MapState, MaskObservation, PipelineConfig, Rle,
    TaskList, Vec3,
};

fn main() -> taskmap::Result<()> {
    let (w, h) = (64, 48);
    let cam = look_at(Vec3::new(0.0, -4.0, 0.0), Vec3::zeros(), w, h, 60.0);

    // A front point, one hidden right behind it, and one off to the side.
    let scene = [
        (0, Vec3::new(0.0, 0.0, 0.0)),
        (1, Vec3::new(0.0, 0.5, 0.0)),
        (2, Vec3::new(1.5, 0.0, 0.0)),
    ];
    let state = MapState::new(scene, TaskList::new(["mug"])?, &PipelineConfig::default())?;

    let mut depth = vec![f32::INFINITY; (w * h) as usize];
    let mut inside = Vec::new();
    for (id, center) in &scene[..2] {
        let proj = project_centroid(center, &cam).expect("in view");
        println!("gaussian {id}: pixel ({:.1}, {:.1}) depth {:.3}", proj.u, proj.v, proj.z_cam);
    }
    let front = project_centroid(&scene[0].1, &cam).unwrap();
    let (cu, cv) = (front.pixel % w, front.pixel / w);
    for v in cv - 3..=cv + 3 {
        for u in cu - 3..=cu + 3 {
            let px = v * w + u;
            depth[px as usize] = front.z_cam as f32;
            inside.push(px);
        }
    }
    let depth = DepthMap::new(w, h, depth)?;
    let mask = MaskObservation {
        mask_id: 0,
        region: Some(Rle::from_pixels(inside)),
        scores: vec![0.27],
        gaussian_ids: None,
    };

    for tol in [DepthTolerance::default(), DepthTolerance::absolute(1.0)] {
        let ids = associate_mask(&mask, &cam, Some(&depth), state.gaussians(), &tol)?;
        println!("tolerance {:.2} m + {:.0}%: {ids:?}", tol.absolute, tol.relative * 100.0);
    }
    Ok(())
}
