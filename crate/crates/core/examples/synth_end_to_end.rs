//! Generate a synthetic scene, write it in the on-disk formats, read it back
//! through the streaming log reader, map it, and score the result.

use taskmap::io::{read_ground_truth, read_json, ObservationReader, SceneFile};
use taskmap::{run_pipeline, score_run, PipelineConfig, ScoreOptions, SynthConfig, TaskList};

fn main() -> taskmap::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = taskmap::generate(&SynthConfig::easy(seed))?;
    let dir = tempfile::tempdir()?;
    data.write_to_dir(dir.path())?;
    println!(
        "wrote {} gaussians, {} frames, {} masks to {}",
        data.scene.len(),
        data.frames.len(),
        data.masks.len(),
        dir.path().display()
    );

    let scene: SceneFile = read_json(&dir.path().join("scene.json"))?;
    let tasks = TaskList::new(read_json::<Vec<String>>(&dir.path().join("tasks.json"))?)?;
    let frames = ObservationReader::open(&dir.path().join("observations.jsonl"))?;
    let task_count = tasks.len();
    let result = run_pipeline(scene.centers(), tasks, frames, PipelineConfig::default())?;

    let f = result.footprint;
    println!(
        "{} primitives -> {} clusters -> {} objects",
        result.primitive_count,
        result.clusters_before_prune,
        result.objects.len()
    );
    println!("semantic bytes: gaussians {} primitives {} objects {}", f.gaussians, f.primitives, f.objects);

    let gts = read_ground_truth(&dir.path().join("ground_truth.json"))?;
    print!("{}", score_run(&result.objects, &gts, task_count, &ScoreOptions::default())?.table());
    Ok(())
}
