//! Toggle outlier rejection, kNN filtering, and recursive updating over a
//! few hard-regime seeds.

use taskmap::ablation::report_table;
use taskmap::{run_ablation, AblationSwitches, PipelineConfig, ScoreOptions, SynthConfig};

fn main() -> taskmap::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let opts = ScoreOptions {
        iou_samples: 50_000,
        ..ScoreOptions::default()
    };
    let rows = run_ablation(
        &SynthConfig::hard(0),
        &(0..seeds).collect::<Vec<_>>(),
        &PipelineConfig::default(),
        &AblationSwitches::grid(),
        &opts,
    )?;
    print!("{}", report_table(&rows));
    Ok(())
}
