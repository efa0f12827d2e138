//! Task-driven semantic mapping over 3D Gaussian centroids.
//!
//! Per-mask cosine scores from a vision-language model are turned into task
//! relevance probabilities and fused across views with a recursive Bayes
//! filter. Gaussians seen together form primitives, which an agglomerative
//! information bottleneck merges into task-granular objects with oriented
//! bounding boxes.
//!
//! ```no_run
//! use taskmap::{generate, run_pipeline, PipelineConfig, SynthConfig};
//!
//! let data = generate(&SynthConfig::easy(0))?;
//! let map = run_pipeline(
//!     data.scene.iter().copied(),
//!     data.tasks.clone(),
//!     data.frames.iter().cloned().map(Ok),
//!     PipelineConfig::default(),
//! )?;
//! println!("{} objects", map.objects.len());
//! # Ok::<(), taskmap::Error>(())
//! ```

pub mod ablation;
pub mod association;
pub mod error;
pub mod eval;
pub mod ib;
pub mod io;
pub mod pipeline;
pub mod postprocess;
pub mod primitives;
pub mod relevance;
pub mod state;
pub mod synth;
pub mod types;

pub use ablation::{run_ablation, AblationRow, AblationSwitches};
pub use association::{associate_frame, associate_mask, project_centroid, DepthTolerance};
pub use error::{Error, Result};
pub use eval::{obb_iou, score_run, GroundTruthGeometry, GroundTruthObject, MetricsReport, ScoreOptions};
pub use ib::{agglomerate, MergeGraph, StoppingRule};
pub use pipeline::{run_pipeline, MapResult, Mapper};
pub use postprocess::{fit_obb, knn_filter, select_fraction, select_top_k, KnnParams};
pub use relevance::{bayes_update, calibrate, posterior_single, LikelihoodModel, UpdateOutcome};
pub use state::{FusionMode, MapState, PipelineConfig};
pub use synth::{generate, SynthConfig, SynthDataset};
pub use types::{
    CameraFrame, DepthMap, GaussianRecord, MaskObservation, ObjectCluster, ObservationFrame, OrientedBox, Primitive,
    Rle, TaskList, Vec3,
};
