//! Stream frames through a `Mapper` and watch the per-Gaussian task
//! posteriors sharpen. Compares recursive updating with score averaging,
//! which only turns scores into posteriors once the stream ends.

use taskmap::{generate, FusionMode, Mapper, PipelineConfig, SynthConfig};

fn main() -> taskmap::Result<()> {
    let data = generate(&SynthConfig::hard(3))?;
    // Any Gaussian of object 0; its relevant task is task 0.
    let probe = data.scene[data.object_of.iter().position(|&o| o == 0).unwrap()].0;

    for fusion in [FusionMode::Bayesian, FusionMode::Averaging] {
        let config = PipelineConfig {
            fusion,
            ..PipelineConfig::default()
        };
        let mut mapper = Mapper::new(data.scene.iter().copied(), data.tasks.clone(), config)?;
        let mut rejected = 0;
        println!("{fusion:?}");
        for frame in &data.frames {
            let report = mapper.ingest(frame)?;
            rejected += report.rejected();
            let g = mapper.state().gaussian(probe).unwrap();
            if fusion == FusionMode::Bayesian && frame.frame_id % 8 == 0 {
                println!(
                    "  frame {:>2}: {} updates, p = {:?}",
                    frame.frame_id,
                    g.update_count,
                    g.posterior.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()
                );
            }
        }
        let result = mapper.finish()?;
        let g = result.state.gaussian(probe).unwrap();
        println!("  final p = {:?}", g.posterior.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>());
        println!(
            "  {rejected} masks rejected, {} primitives, {} objects\n",
            result.primitive_count,
            result.objects.len()
        );
    }
    Ok(())
}
