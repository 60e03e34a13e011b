use super::{GazeError, Result};

/// Per-region visit weights and the gaze pattern obtained by normalizing them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    weights: Vec<f64>,
    pattern: Vec<f64>,
}

impl WeightMap {
    /// Builds the map from raw weights in `[0, 1]`. If every weight is zero
    /// the pattern is all zeros.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(GazeError::DimensionMismatch { expected: 1, got: 0 });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(GazeError::InvalidField(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let pattern = if total > 0.0 {
            weights.iter().map(|w| w / total).collect()
        } else {
            vec![0.0; weights.len()]
        };
        Ok(Self { weights, pattern })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pattern(&self) -> &[f64] {
        &self.pattern
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}
