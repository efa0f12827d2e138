//! End-to-end mapping: frame ingestion followed by clustering and extraction.

use crate::association::associate_frame;
use crate::error::{Error, Result};
use crate::ib::{agglomerate, prune_irrelevant, MergeGraph, PrimitiveSummary};
use crate::postprocess::{fit_obb, knn_filter};
use crate::primitives::{assign_primitives, primitive_distribution, FrameSet};
use crate::relevance::{accumulate_scores, finalize_averaged, update_gaussians, UpdateOutcome};
use crate::state::{FusionMode, MapState, PipelineConfig};
use crate::types::{ObjectCluster, ObservationFrame, TaskList, Vec3};

/// Per-frame bookkeeping returned by [`Mapper::ingest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameReport {
    pub frame_id: u64,
    pub outcomes: Vec<UpdateOutcome>,
    pub associated: usize,
}

impl FrameReport {
    pub fn rejected(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_rejected()).count()
    }
}

/// Bytes needed to store the semantic layer at each stage of compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SemanticFootprint {
    pub gaussians: usize,
    pub primitives: usize,
    pub objects: usize,
}

/// Output of a completed mapping session.
#[derive(Debug, Clone)]
pub struct MapResult {
    pub objects: Vec<ObjectCluster>,
    pub primitive_count: usize,
    pub clusters_before_prune: usize,
    pub footprint: SemanticFootprint,
    pub state: MapState,
}

/// Streams frames into a map state, one at a time.
#[derive(Debug)]
pub struct Mapper {
    state: MapState,
    config: PipelineConfig,
    last_frame: Option<u64>,
}

impl Mapper {
    pub fn new(scene: impl IntoIterator<Item = (u64, Vec3)>, tasks: TaskList, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let state = MapState::new(scene, tasks, &config)?;
        Ok(Self {
            state,
            config,
            last_frame: None,
        })
    }

    pub fn state(&self) -> &MapState {
        &self.state
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Associates, fuses, and assigns primitives for one frame. Frames must
    /// arrive with strictly increasing ids.
    pub fn ingest(&mut self, frame: &ObservationFrame) -> Result<FrameReport> {
        if let Some(previous) = self.last_frame {
            if frame.frame_id <= previous {
                return Err(Error::FrameOrder {
                    previous,
                    current: frame.frame_id,
                });
            }
        }
        frame.validate(self.state.task_count())?;
        let sets = associate_frame(frame, self.state.gaussians(), &self.config.depth_tol)?;
        let mut seen = std::collections::HashSet::new();
        for &id in sets.iter().flatten() {
            if !seen.insert(id) {
                return Err(Error::OverlappingMasks(id));
            }
        }
        let model = self.config.likelihood;
        let mut frame_sets = Vec::with_capacity(sets.len());
        let mut outcomes = Vec::with_capacity(sets.len());
        for (mask, ids) in frame.masks.iter().zip(sets) {
            let outcome = if ids.is_empty() {
                self.state.check_scores(&mask.scores)?;
                UpdateOutcome::Accepted
            } else {
                match self.config.fusion {
                    FusionMode::Bayesian => {
                        update_gaussians(&mut self.state, &ids, &mask.scores, &model, self.config.outlier_reject)?
                    }
                    FusionMode::Averaging => {
                        accumulate_scores(&mut self.state, &ids, &mask.scores, &model, self.config.outlier_reject)?
                    }
                }
            };
            outcomes.push(outcome);
            frame_sets.push(FrameSet {
                mask_id: mask.mask_id,
                gaussian_ids: ids,
                outcome,
            });
        }
        assign_primitives(&mut self.state, &frame_sets)?;
        self.last_frame = Some(frame.frame_id);
        Ok(FrameReport {
            frame_id: frame.frame_id,
            outcomes,
            associated: seen.len(),
        })
    }

    /// Clusters the primitives into objects, prunes irrelevant ones, removes
    /// floaters, and fits boxes. Object ids are assigned 0.. in output order.
    pub fn finish(mut self) -> Result<MapResult> {
        if self.config.fusion == FusionMode::Averaging {
            finalize_averaged(&mut self.state, &self.config.likelihood);
        }
        let summaries = primitive_summaries(&self.state)?;
        let graph = MergeGraph::build(&summaries);
        let clusters = agglomerate(graph, self.config.stop).clusters();
        let clusters_before_prune = clusters.len();
        let kept = prune_irrelevant(clusters, self.config.prune_threshold);
        let mut objects = Vec::with_capacity(kept.len());
        for (new_id, mut cluster) in kept.into_iter().enumerate() {
            let centers: Vec<Vec3> = cluster
                .gaussian_ids
                .iter()
                .map(|id| self.state.gaussian(*id).expect("clustered ids exist").center)
                .collect();
            let keep = match self.config.knn {
                Some(knn) => knn_filter(&centers, knn.k, knn.alpha),
                None => (0..centers.len()).collect(),
            };
            let kept_centers: Vec<Vec3> = keep.iter().map(|&i| centers[i]).collect();
            cluster.gaussian_ids = keep.iter().map(|&i| cluster.gaussian_ids[i]).collect();
            cluster.obb = Some(fit_obb(&kept_centers)?);
            cluster.id = new_id as u64;
            objects.push(cluster);
        }
        let footprint = measure_footprint(&self.state, summaries.len(), &objects);
        Ok(MapResult {
            objects,
            primitive_count: summaries.len(),
            clusters_before_prune,
            footprint,
            state: self.state,
        })
    }
}

/// Task distribution and centroid bounds of every current primitive.
pub fn primitive_summaries(state: &MapState) -> Result<Vec<PrimitiveSummary>> {
    state
        .primitives()
        .map(|prim| {
            let task_dist = primitive_distribution(state, prim.id)?;
            let mut lo = Vec3::repeat(f64::INFINITY);
            let mut hi = Vec3::repeat(f64::NEG_INFINITY);
            for id in &prim.gaussian_ids {
                let c = state.gaussian(*id).ok_or(Error::UnknownGaussian(*id))?.center;
                lo = lo.inf(&c);
                hi = hi.sup(&c);
            }
            Ok(PrimitiveSummary {
                id: prim.id,
                gaussian_ids: prim.gaussian_ids.iter().copied().collect(),
                task_dist,
                aabb_min: lo,
                aabb_max: hi,
            })
        })
        .collect()
}

const PROB_BYTES: usize = 4;
const ID_BYTES: usize = 4;

/// Storage for the semantic layer at three granularities, counting f32
/// probabilities and u32 ids:
/// - per Gaussian: T probabilities plus a primitive id each;
/// - per primitive: T+1 probabilities each, plus the Gaussian → primitive ids;
/// - per object: T+1 probabilities each, the Gaussian → primitive ids, and a
///   primitive → object id for every primitive in a kept object.
pub fn measure_footprint(state: &MapState, primitive_count: usize, objects: &[ObjectCluster]) -> SemanticFootprint {
    let t = state.task_count();
    let assigned = state.gaussians().iter().filter(|g| g.primitive_id.is_some()).count();
    let gaussians = state.gaussians().len() * (t * PROB_BYTES + ID_BYTES);
    let primitives = primitive_count * (t + 1) * PROB_BYTES + assigned * ID_BYTES;
    let clustered: usize = objects.iter().map(|o| o.primitive_ids.len()).sum();
    let objects_bytes = objects.len() * (t + 1) * PROB_BYTES + assigned * ID_BYTES + clustered * ID_BYTES;
    SemanticFootprint {
        gaussians,
        primitives,
        objects: objects_bytes,
    }
}

/// Runs the whole pipeline over a stream of frames.
pub fn run_pipeline(
    scene: impl IntoIterator<Item = (u64, Vec3)>,
    tasks: TaskList,
    frames: impl IntoIterator<Item = Result<ObservationFrame>>,
    config: PipelineConfig,
) -> Result<MapResult> {
    let mut mapper = Mapper::new(scene, tasks, config)?;
    for frame in frames {
        mapper.ingest(&frame?)?;
    }
    mapper.finish()
}
