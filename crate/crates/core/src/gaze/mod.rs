//! The statistical scan-path model.
//!
//! An image is tiled into `N` regions, each carrying a feature vector. A
//! viewer first takes in the gist of the scene, then fixates a sequence of
//! distinct regions drawn from a transition kernel under inhibition of
//! return (IoR). Log gaze time is additive over fixations, so its
//! expectation can be computed either by summing over every scan-path or by
//! weighting each region's log-duration with the probability that a path
//! visits it. Both routes live here, together with a Monte-Carlo sampler of
//! the same process.
//!
//! Region indices are zero-based throughout.

mod durations;
mod enumerate;
mod kernel;
mod sample;
mod weights;

pub use durations::{DurationModel, LinearDurations};
pub use enumerate::{
    enumerate_scanpaths, enumerate_weights, expected_log_gaze_pathsum, expected_log_gaze_weighted,
    path_count, EnumerationLimits, DEFAULT_MAX_PATHS,
};
pub use kernel::{IorHorizon, TransitionKernel};
pub use sample::{
    monte_carlo_log_gaze, monte_carlo_weights, sample_scanpath, sample_scanpath_with,
    simulate_log_gaze, McEstimate,
};
pub use weights::WeightMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GazeError {
    #[error("every candidate region is masked by inhibition of return")]
    AllMasked,
    #[error("enumeration would produce {paths} scan-paths, above the cap of {cap}")]
    ExplosionGuard { paths: u128, cap: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("exact enumeration requires an infinite IoR horizon")]
    FiniteHorizon,
    #[error("scan-path length must be at least 1")]
    ZeroLength,
}

pub type Result<T> = std::result::Result<T, GazeError>;

/// The state space: a `rows x cols` grid of regions in row-major order, each
/// with a `K`-dimensional feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeField {
    rows: usize,
    cols: usize,
    dim: usize,
    features: Vec<f64>,
}

impl GazeField {
    pub fn new(rows: usize, cols: usize, features: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows * cols;
        if n == 0 {
            return Err(GazeError::InvalidField("grid must have at least one region".into()));
        }
        if features.len() != n {
            return Err(GazeError::DimensionMismatch {
                expected: n,
                got: features.len(),
            });
        }
        let dim = features[0].len();
        let mut flat = Vec::with_capacity(n * dim);
        for f in &features {
            if f.len() != dim {
                return Err(GazeError::DimensionMismatch {
                    expected: dim,
                    got: f.len(),
                });
            }
            flat.extend_from_slice(f);
        }
        Ok(Self {
            rows,
            cols,
            dim,
            features: flat,
        })
    }

    /// A single-row field with one scalar feature per region.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.len(), values.iter().map(|&v| vec![v]).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn feature(&self, region: usize) -> &[f64] {
        &self.features[region * self.dim..(region + 1) * self.dim]
    }

    /// Grid cell `(row, col)` of a region index.
    pub fn cell(&self, region: usize) -> (usize, usize) {
        (region / self.cols, region % self.cols)
    }

    pub fn region(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

/// An ordered sequence of fixated regions together with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPath {
    pub fixations: Vec<usize>,
    pub prob: f64,
}

impl ScanPath {
    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    pub fn contains(&self, region: usize) -> bool {
        self.fixations.contains(&region)
    }
}

/// Expected aggregate gaze time in seconds from an expected log gaze.
pub fn gaze_seconds(expected_log_gaze: f64) -> f64 {
    expected_log_gaze.exp()
}
