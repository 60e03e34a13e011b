//! Synthetic data, k-fold ensemble training, evaluation and experiments.

mod experiments;
mod manifest;
mod metrics;
mod split;
mod synthetic;
mod train;

pub use experiments::{patch_sweep, recovery_experiment, RecoveryReport, SweepRow, SweepTable, REFERENCE_PATCH_LOSSES};
pub use manifest::{DatasetManifest, ManifestRecord, TEST_TAG, TRAIN_TAG};
pub use metrics::{mse, pearson, recovery_score};
pub use split::{kfold, kfold_split, train_test_split, Fold, KFoldSplit};
pub use synthetic::{
    generate_synthetic, load_truth, render_scene, save_truth, scene_truth, synthesize, SceneTruth, SyntheticDataset,
    SyntheticSpec, MANIFEST_FILE, TRUTH_FILE,
};
pub use train::{
    checkpoint_paths, ensemble_patterns, ensemble_predictions, evaluate, evaluate_manifest, load_ensemble,
    save_report, thread_count, train, train_prepared, EvalReport, FoldReport, IsolationAudit, PreparedData,
    TrainOptions, TrainOutcome, REPORT_FILE, THREADS_ENV,
};

use std::path::Path;

use thiserror::Error;

use crate::gaze::GazeError;
use crate::imaging::ImageError;
use crate::model::ModelError;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("invalid settings: {0}")]
    InvalidSpec(String),
    #[error("need at least {needed} training records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("empty split")]
    EmptySplit,
    #[error("targets are constant, correlation is undefined")]
    ConstantTargets,
    #[error("vector is constant, correlation is undefined")]
    ConstantVector,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite loss {loss} in fold {fold}, epoch {epoch}, batch {batch}")]
    NonFiniteLoss { fold: usize, epoch: usize, batch: usize, loss: f64 },
    #[error("test isolation violated: {0}")]
    Isolation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Mixes a stream index into a seed (SplitMix64 finalizer), giving
/// independent generators per image, fold or purpose.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
