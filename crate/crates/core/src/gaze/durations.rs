/// Mean log fixation durations (log-seconds) for the gist fixation and for
/// fixations on individual regions, plus the spread of the per-fixation
/// noise used when simulating.
pub trait DurationModel {
    /// Log-duration of the initial gist fixation given the gist features of
    /// the image and of its context.
    fn gist(&self, gist: &[f64], context: &[f64]) -> f64;

    /// Mean log-duration of a fixation on a region with these features.
    fn local(&self, region: &[f64]) -> f64;

    /// Standard deviation of the Gaussian noise added to each sampled
    /// log-duration (lognormal durations in seconds). Zero means noiseless.
    fn noise_sigma(&self) -> f64 {
        0.0
    }
}

/// Affine duration functions of the features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDurations {
    pub gist_bias: f64,
    pub gist_coef: Vec<f64>,
    pub context_coef: Vec<f64>,
    pub local_bias: f64,
    pub local_coef: Vec<f64>,
    pub sigma: f64,
}

impl LinearDurations {
    /// `mu(S) = S[0]`: each region's single feature is its log-duration.
    pub fn identity() -> Self {
        Self {
            gist_bias: 0.0,
            gist_coef: Vec::new(),
            context_coef: Vec::new(),
            local_bias: 0.0,
            local_coef: vec![1.0],
            sigma: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self {
            local_coef: Vec::new(),
            ..Self::identity()
        }
    }
}

fn dot(coef: &[f64], x: &[f64]) -> f64 {
    coef.iter().zip(x).map(|(c, v)| c * v).sum()
}

impl DurationModel for LinearDurations {
    fn gist(&self, gist: &[f64], context: &[f64]) -> f64 {
        self.gist_bias + dot(&self.gist_coef, gist) + dot(&self.context_coef, context)
    }

    fn local(&self, region: &[f64]) -> f64 {
        self.local_bias + dot(&self.local_coef, region)
    }

    fn noise_sigma(&self) -> f64 {
        self.sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_durations() {
        let d = LinearDurations {
            gist_bias: 0.5,
            gist_coef: vec![1.0],
            context_coef: vec![2.0],
            local_bias: 0.1,
            local_coef: vec![0.9, 0.0],
            sigma: 0.05,
        };
        assert!((d.gist(&[0.2], &[0.1]) - 0.9).abs() < 1e-15);
        assert!((d.local(&[1.0, 7.0]) - 1.0).abs() < 1e-15);
        assert_eq!(d.noise_sigma(), 0.05);
        assert_eq!(LinearDurations::zero().local(&[3.0]), 0.0);
        assert_eq!(LinearDurations::identity().local(&[3.0]), 3.0);
    }
}
