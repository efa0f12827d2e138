//! Score estimated boxes against ground truth and compute box IoU.

use taskmap::eval::{relaxed_os_match, strict_os_match};
use taskmap::{obb_iou, score_run, GroundTruthGeometry, GroundTruthObject, ObjectCluster, OrientedBox, ScoreOptions, Vec3};

fn main() -> taskmap::Result<()> {
    let truth = OrientedBox::axis_aligned(Vec3::zeros(), Vec3::new(0.5, 0.5, 0.5));
    let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), 0.3);
    let candidates = [
        ("exact", truth),
        ("shifted", OrientedBox::axis_aligned(Vec3::new(0.3, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.5))),
        ("rotated", OrientedBox { rotation: *rot.matrix(), ..truth }),
        ("inner", OrientedBox::axis_aligned(Vec3::zeros(), Vec3::new(0.2, 0.2, 0.2))),
        ("far", OrientedBox::axis_aligned(Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.5))),
    ];
    println!("{:<8} {:>6} {:>7} {:>8}", "box", "IoU", "strict", "relaxed");
    for (name, b) in &candidates {
        println!(
            "{name:<8} {:>6.3} {:>7} {:>8}",
            obb_iou(b, &truth, 200_000, 0)?,
            strict_os_match(b, &truth),
            relaxed_os_match(b, &truth)
        );
    }

    // Two tasks; the map holds the shifted box for task 0 and the far box for task 1.
    let object = |id: u64, b: OrientedBox, p: f64| ObjectCluster {
        id,
        primitive_ids: vec![id],
        gaussian_ids: vec![id],
        task_dist: vec![p, 0.9 - p, 0.1],
        prior_mass: 0.5,
        obb: Some(b),
    };
    let objects = [object(0, candidates[1].1, 0.8), object(1, candidates[4].1, 0.1)];
    let gts = [
        GroundTruthObject { task_index: 0, geometry: GroundTruthGeometry::Box(truth), label: Some("mug".into()) },
        GroundTruthObject {
            task_index: 1,
            geometry: GroundTruthGeometry::Points(vec![Vec3::new(1.0, 1.0, 0.0), Vec3::new(1.5, 1.2, 0.4), Vec3::new(1.2, 1.6, 0.2)]),
            label: Some("plant".into()),
        },
    ];
    print!("\n{}", score_run(&objects, &gts, 2, &ScoreOptions::default())?.table());
    Ok(())
}
