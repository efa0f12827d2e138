//! Switch-grid ablations over synthetic datasets.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{score_run, MetricsReport, ScoreOptions};
use crate::pipeline::{run_pipeline, MapResult};
use crate::state::{FusionMode, PipelineConfig};
use crate::synth::{generate, SynthConfig, SynthDataset};

/// Which pipeline stages are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSwitches {
    pub outlier_reject: bool,
    pub knn: bool,
    pub bayes_update: bool,
}

impl AblationSwitches {
    pub const FULL: Self = Self {
        outlier_reject: true,
        knn: true,
        bayes_update: true,
    };

    /// All eight combinations, full configuration first.
    pub fn grid() -> Vec<Self> {
        let mut out = Vec::with_capacity(8);
        for bits in 0..8u8 {
            out.push(Self {
                outlier_reject: bits & 1 == 0,
                knn: bits & 2 == 0,
                bayes_update: bits & 4 == 0,
            });
        }
        out
    }

    /// `base` with the disabled stages switched off. Disabled kNN falls back
    /// to default parameters when re-enabled.
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut config = base.clone();
        config.outlier_reject = self.outlier_reject;
        config.knn = if self.knn {
            Some(base.knn.unwrap_or_default())
        } else {
            None
        };
        config.fusion = if self.bayes_update {
            FusionMode::Bayesian
        } else {
            FusionMode::Averaging
        };
        config
    }

    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            outlier_reject: config.outlier_reject,
            knn: config.knn.is_some(),
            bayes_update: config.fusion == FusionMode::Bayesian,
        }
    }
}

/// Mean metrics of one switch setting over all seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub switches: AblationSwitches,
    pub strict_osr: f64,
    pub relaxed_osr: f64,
    pub mean_iou: f64,
    pub m_acc: f64,
    pub object_count: f64,
    pub runs: usize,
}

/// Maps a generated dataset and scores the result against its ground truth.
pub fn map_and_score(
    data: &SynthDataset,
    config: &PipelineConfig,
    opts: &ScoreOptions,
) -> Result<(MapResult, MetricsReport)> {
    let result = run_pipeline(
        data.scene.iter().copied(),
        data.tasks.clone(),
        data.frames.iter().cloned().map(Ok),
        config.clone(),
    )?;
    let report = score_run(&result.objects, &data.ground_truth, data.tasks.len(), opts)?;
    Ok((result, report))
}

/// Runs every switch setting on one dataset per seed and averages the
/// metrics. Rows follow the order of `grid`.
pub fn run_ablation(
    synth: &SynthConfig,
    seeds: &[u64],
    base: &PipelineConfig,
    grid: &[AblationSwitches],
    opts: &ScoreOptions,
) -> Result<Vec<AblationRow>> {
    let mut sums = vec![[0.0f64; 5]; grid.len()];
    for &seed in seeds {
        let data = generate(&SynthConfig {
            seed,
            ..synth.clone()
        })?;
        for (slot, switches) in grid.iter().enumerate() {
            let (_, r) = map_and_score(&data, &switches.apply(base), opts)?;
            let s = &mut sums[slot];
            s[0] += r.strict_osr;
            s[1] += r.relaxed_osr;
            s[2] += r.mean_iou;
            s[3] += r.m_acc;
            s[4] += r.object_count as f64;
        }
    }
    let n = seeds.len().max(1) as f64;
    Ok(grid
        .iter()
        .zip(sums)
        .map(|(&switches, s)| AblationRow {
            switches,
            strict_osr: s[0] / n,
            relaxed_osr: s[1] / n,
            mean_iou: s[2] / n,
            m_acc: s[3] / n,
            object_count: s[4] / n,
            runs: seeds.len(),
        })
        .collect())
}

fn mark(on: bool) -> &'static str {
    if on {
        "x"
    } else {
        ""
    }
}

/// Plain-text table with one row per setting.
pub fn report_table(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:>6}{:>6}{:>6}{:>6}{:>8}{:>8}{:>8}{:>9}\n",
        "OR-phi", "kNN", "BU", "PE", "S-OsR", "R-OsR", "IoU", "objects"
    );
    for row in rows {
        let sw = row.switches;
        out.push_str(&format!(
            "{:>6}{:>6}{:>6}{:>6}{:>8.3}{:>8.3}{:>8.3}{:>9.1}\n",
            mark(sw.outlier_reject),
            mark(sw.knn),
            mark(sw.bayes_update),
            mark(true),
            row.strict_osr,
            row.relaxed_osr,
            row.mean_iou,
            row.object_count
        ));
    }
    out
}
