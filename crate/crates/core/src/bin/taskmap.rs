use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use taskmap::ablation::{report_table, run_ablation, AblationSwitches};
use taskmap::io::{read_ground_truth, read_json, write_json, CalibrationSamples, ObservationReader, OutputMap, SceneFile};
use taskmap::pipeline::run_pipeline;
use taskmap::{
    calibrate, generate, score_run, select_fraction, select_top_k, DepthTolerance, Error, FusionMode, KnnParams,
    LikelihoodModel, PipelineConfig, Result, ScoreOptions, StoppingRule, SynthConfig, TaskList,
};

#[derive(Parser)]
#[command(name = "taskmap", version, about = "Task-driven semantic mapping over 3D Gaussians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the likelihood model to calibration scores.
    Calibrate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Likelihood file supplying parameters that are not fitted.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Build an object map from a scene, a task list, and an observation log.
    Map {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Pick the most relevant objects of a map for one task.
    Select {
        #[arg(long)]
        map: PathBuf,
        /// Task index, or a task name when --tasks is given.
        #[arg(long)]
        task: String,
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long, short = 'k', conflicts_with = "fraction")]
        k: Option<usize>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a map against ground truth.
    Eval {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = taskmap::eval::DEFAULT_IOU_SAMPLES)]
        iou_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        regime: Option<Regime>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the switch grid on synthetic datasets and print a report.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "hard")]
        regime: Regime,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = taskmap::eval::DEFAULT_IOU_SAMPLES)]
        iou_samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Regime {
    Easy,
    Hard,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    likelihood: Option<PathBuf>,
    /// Apply every update, even ones that lower all task posteriors.
    #[arg(long)]
    no_outlier_reject: bool,
    #[arg(long)]
    no_knn: bool,
    /// Average scores over views instead of recursive updating.
    #[arg(long)]
    no_bayes_update: bool,
    #[arg(long, default_value_t = 0.1)]
    prune_threshold: f64,
    /// Stop merging once the cheapest merge costs more than this (nats).
    #[arg(long, conflicts_with = "retain_fraction")]
    stop_delta: Option<f64>,
    /// Stop merging before losing more than 1 - f of the task information.
    #[arg(long)]
    retain_fraction: Option<f64>,
    #[arg(long, default_value_t = 8)]
    knn_k: usize,
    #[arg(long, default_value_t = 2.0)]
    knn_alpha: f64,
    /// Absolute depth tolerance floor, metres.
    #[arg(long)]
    depth_tol: Option<f64>,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let likelihood = match &self.likelihood {
            Some(path) => read_json(path)?,
            None => LikelihoodModel::default(),
        };
        let stop = match (self.stop_delta, self.retain_fraction) {
            (_, Some(rho)) => StoppingRule::RetainFraction(rho),
            (Some(delta), None) => StoppingRule::MaxCost(delta),
            (None, None) => StoppingRule::default(),
        };
        let mut depth_tol = DepthTolerance::default();
        if let Some(tol) = self.depth_tol {
            depth_tol.absolute = tol;
        }
        let config = PipelineConfig {
            likelihood,
            outlier_reject: !self.no_outlier_reject,
            fusion: if self.no_bayes_update {
                FusionMode::Averaging
            } else {
                FusionMode::Bayesian
            },
            knn: (!self.no_knn).then_some(KnnParams {
                k: self.knn_k,
                alpha: self.knn_alpha,
            }),
            prune_threshold: self.prune_threshold,
            stop,
            depth_tol,
        };
        config.validate()?;
        Ok(config)
    }
}

fn read_tasks(path: &Path) -> Result<TaskList> {
    let names: Vec<String> = read_json(path)?;
    TaskList::new(names)
}

fn synth_config(path: Option<&Path>, regime: Option<Regime>, seed: Option<u64>) -> Result<SynthConfig> {
    let mut config = match (path, regime) {
        (Some(p), _) => read_json(p)?,
        (None, Some(Regime::Hard)) => SynthConfig::hard(0),
        (None, _) => SynthConfig::easy(0),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate { samples, out, base } => {
            let samples: CalibrationSamples = read_json(&samples)?;
            let base = match base {
                Some(p) => read_json(&p)?,
                None => LikelihoodModel::default(),
            };
            let model = calibrate(&samples.negative_scores, samples.positive_scores.as_deref(), &base)?;
            write_json(&out, &model)
        }
        Command::Map {
            scene,
            tasks,
            log,
            out,
            pipeline,
        } => {
            let config = pipeline.config()?;
            let scene: SceneFile = read_json(&scene)?;
            let tasks = read_tasks(&tasks)?;
            let frames = ObservationReader::open(&log)?;
            let result = run_pipeline(scene.centers(), tasks, frames, config)?;
            eprintln!(
                "{} primitives, {} clusters, {} objects",
                result.primitive_count,
                result.clusters_before_prune,
                result.objects.len()
            );
            write_json(&out, &OutputMap::from_objects(&result.objects)?)
        }
        Command::Select {
            map,
            task,
            tasks,
            k,
            fraction,
            out,
        } => {
            let map: OutputMap = read_json(&map)?;
            let index = match task.parse::<usize>() {
                Ok(i) => i,
                Err(_) => {
                    let path = tasks.ok_or_else(|| {
                        Error::InvalidParameter("selecting by task name needs --tasks".into())
                    })?;
                    read_tasks(&path)?
                        .index_of(&task)
                        .ok_or_else(|| Error::InvalidTask(task.clone()))?
                }
            };
            let objects = map.to_objects();
            let chosen = match (k, fraction) {
                (_, Some(f)) => select_fraction(&objects, index, f)?,
                (k, None) => select_top_k(&objects, index, k.unwrap_or(1))?,
            };
            let ids: Vec<u64> = chosen.iter().map(|c| c.id).collect();
            let selected = OutputMap {
                objects: map.objects.into_iter().filter(|o| ids.contains(&o.id)).collect(),
            };
            let mut ordered = selected.objects;
            ordered.sort_by_key(|o| ids.iter().position(|id| *id == o.id));
            emit(&OutputMap { objects: ordered }, out.as_deref())
        }
        Command::Eval {
            map,
            ground_truth,
            out,
            iou_samples,
            seed,
        } => {
            let map: OutputMap = read_json(&map)?;
            let gts = read_ground_truth(&ground_truth)?;
            let task_count = map
                .task_count()
                .or_else(|| gts.iter().map(|g| g.task_index + 1).max())
                .unwrap_or(0);
            let opts = ScoreOptions {
                iou_samples,
                seed,
                ..ScoreOptions::default()
            };
            let report = score_run(&map.to_objects(), &gts, task_count, &opts)?;
            print!("{}", report.table());
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            Ok(())
        }
        Command::Synth {
            config,
            regime,
            out,
            seed,
        } => {
            let config = synth_config(config.as_deref(), regime, seed)?;
            let data = generate(&config)?;
            data.write_to_dir(&out)?;
            eprintln!(
                "{} gaussians, {} frames, {} masks",
                data.scene.len(),
                data.frames.len(),
                data.masks.len()
            );
            Ok(())
        }
        Command::Ablate {
            config,
            regime,
            seeds,
            seed,
            iou_samples,
            out,
            pipeline,
        } => {
            let synth = synth_config(config.as_deref(), Some(regime), None)?;
            let base = pipeline.config()?;
            let seeds: Vec<u64> = (seed..seed + seeds).collect();
            let opts = ScoreOptions {
                iou_samples,
                ..ScoreOptions::default()
            };
            let rows = run_ablation(&synth, &seeds, &base, &AblationSwitches::grid(), &opts)?;
            print!("{}", report_table(&rows));
            if let Some(path) = out {
                write_json(&path, &rows)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
