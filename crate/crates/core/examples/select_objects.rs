//! Build a map, save it, and pull out the objects relevant to each task.

use taskmap::io::{read_json, write_json, OutputMap};
use taskmap::{generate, run_pipeline, select_fraction, select_top_k, PipelineConfig, SynthConfig};

fn main() -> taskmap::Result<()> {
    let data = generate(&SynthConfig::easy(11))?;
    let result = run_pipeline(
        data.scene.iter().copied(),
        data.tasks.clone(),
        data.frames.iter().cloned().map(Ok),
        PipelineConfig::default(),
    )?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("map.json");
    write_json(&path, &OutputMap::from_objects(&result.objects)?)?;
    let objects = read_json::<OutputMap>(&path)?.to_objects();
    println!("{} objects saved to {}", objects.len(), path.display());

    for (t, name) in data.tasks.as_slice().iter().enumerate() {
        let best = select_top_k(&objects, t, 1)?[0];
        let b = best.obb.unwrap();
        let wide: Vec<u64> = select_fraction(&objects, t, 0.5)?.iter().map(|c| c.id).collect();
        println!(
            "{name:>8}: object {} p = {:.3}, {} gaussians, center ({:.2}, {:.2}, {:.2}); within half of best: {wide:?}",
            best.id,
            best.task_dist[t],
            best.gaussian_ids.len(),
            b.center.x,
            b.center.y,
            b.center.z
        );
    }
    Ok(())
}
