//! The mutable map threaded through frame ingestion.

use std::collections::{BTreeMap, HashMap};

use crate::association::DepthTolerance;
use crate::error::{Error, Result};
use crate::ib::StoppingRule;
use crate::postprocess::KnnParams;
use crate::relevance::LikelihoodModel;
use crate::types::{GaussianRecord, Primitive, TaskList, Vec3};

/// How per-view scores are combined into a per-Gaussian relevance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// Recursive Bayesian updating, one step per accepted view.
    #[default]
    Bayesian,
    /// Mean score over views, converted once at the end.
    Averaging,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub likelihood: LikelihoodModel,
    pub outlier_reject: bool,
    pub fusion: FusionMode,
    /// `None` disables floater removal.
    pub knn: Option<KnnParams>,
    pub prune_threshold: f64,
    pub stop: StoppingRule,
    pub depth_tol: DepthTolerance,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            likelihood: LikelihoodModel::default(),
            outlier_reject: true,
            fusion: FusionMode::Bayesian,
            knn: Some(KnnParams::default()),
            prune_threshold: 0.1,
            stop: StoppingRule::default(),
            depth_tol: DepthTolerance::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.likelihood.validate()?;
        if !(0.0..=1.0).contains(&self.prune_threshold) {
            return Err(Error::InvalidParameter("prune threshold must lie in [0, 1]".into()));
        }
        if let Some(knn) = &self.knn {
            if knn.k == 0 {
                return Err(Error::InvalidParameter("knn k must be at least 1".into()));
            }
        }
        self.stop.validate()
    }
}

#[derive(Debug, Clone, Default)]
struct ScoreSums {
    sums: Vec<f64>,
    count: u32,
}

/// Gaussians, their posteriors, and the current primitive partition.
#[derive(Debug, Clone)]
pub struct MapState {
    tasks: TaskList,
    prior: f64,
    records: Vec<GaussianRecord>,
    index: HashMap<u64, usize>,
    pub(crate) primitives: BTreeMap<u64, Primitive>,
    pub(crate) next_primitive_id: u64,
    score_sums: Vec<ScoreSums>,
}

impl MapState {
    /// Initialises every Gaussian with the configured prior for every task.
    pub fn new(
        scene: impl IntoIterator<Item = (u64, Vec3)>,
        tasks: TaskList,
        config: &PipelineConfig,
    ) -> Result<Self> {
        let prior = config.likelihood.prior_relevant;
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::DegeneratePrior(prior));
        }
        let t = tasks.len();
        let mut records = Vec::new();
        let mut index = HashMap::new();
        for (id, center) in scene {
            if index.insert(id, records.len()).is_some() {
                return Err(Error::DuplicateGaussian(id));
            }
            records.push(GaussianRecord {
                id,
                center,
                posterior: vec![prior; t],
                primitive_id: None,
                update_count: 0,
            });
        }
        if records.is_empty() {
            return Err(Error::EmptyScene);
        }
        Ok(Self {
            tasks,
            prior,
            records,
            index,
            primitives: BTreeMap::new(),
            next_primitive_id: 0,
            score_sums: Vec::new(),
        })
    }

    pub fn tasks(&self) -> &TaskList {
        &self.tasks
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn gaussians(&self) -> &[GaussianRecord] {
        &self.records
    }

    pub fn gaussian(&self, id: u64) -> Option<&GaussianRecord> {
        self.index.get(&id).map(|&slot| &self.records[slot])
    }

    pub fn primitives(&self) -> impl Iterator<Item = &Primitive> {
        self.primitives.values()
    }

    pub fn primitive(&self, id: u64) -> Option<&Primitive> {
        self.primitives.get(&id)
    }

    pub fn primitive_count(&self) -> usize {
        self.primitives.len()
    }

    pub(crate) fn check_scores(&self, scores: &[f64]) -> Result<()> {
        if scores.len() != self.tasks.len() {
            return Err(Error::ScoreLength {
                expected: self.tasks.len(),
                got: scores.len(),
            });
        }
        Ok(())
    }

    /// Resolves ids to storage slots, failing on the first unknown id.
    pub(crate) fn slots_of(&self, ids: &[u64]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| self.index.get(id).copied().ok_or(Error::UnknownGaussian(*id)))
            .collect()
    }

    pub(crate) fn record_mut(&mut self, slot: usize) -> &mut GaussianRecord {
        &mut self.records[slot]
    }

    pub(crate) fn record_by_id_mut(&mut self, id: u64) -> Option<&mut GaussianRecord> {
        let slot = *self.index.get(&id)?;
        Some(&mut self.records[slot])
    }

    pub(crate) fn accumulate(&mut self, slot: usize, scores: &[f64]) {
        if self.score_sums.is_empty() {
            self.score_sums = vec![ScoreSums::default(); self.records.len()];
        }
        let acc = &mut self.score_sums[slot];
        if acc.sums.is_empty() {
            acc.sums = vec![0.0; scores.len()];
        }
        for (s, &phi) in acc.sums.iter_mut().zip(scores) {
            *s += phi;
        }
        acc.count += 1;
        self.records[slot].update_count += 1;
    }

    pub(crate) fn apply_score_means(&mut self, to_posterior: impl Fn(f64) -> f64) {
        for (record, acc) in self.records.iter_mut().zip(&self.score_sums) {
            if acc.count == 0 {
                continue;
            }
            let n = acc.count as f64;
            for (p, s) in record.posterior.iter_mut().zip(&acc.sums) {
                *p = to_posterior(s / n);
            }
        }
        self.score_sums.clear();
    }

    /// Checks that primitive membership and the per-Gaussian back-references
    /// agree and that no primitive is empty.
    pub fn check_partition(&self) -> Result<()> {
        let mut owner: HashMap<u64, u64> = HashMap::new();
        for prim in self.primitives.values() {
            if prim.is_empty() {
                return Err(Error::EmptyPrimitive(prim.id));
            }
            for &g in &prim.gaussian_ids {
                if owner.insert(g, prim.id).is_some() {
                    return Err(Error::InvalidParameter(format!(
                        "gaussian {g} belongs to two primitives"
                    )));
                }
            }
        }
        for record in &self.records {
            if record.primitive_id != owner.get(&record.id).copied() {
                return Err(Error::InvalidParameter(format!(
                    "gaussian {} has a stale primitive reference",
                    record.id
                )));
            }
        }
        Ok(())
    }
}
