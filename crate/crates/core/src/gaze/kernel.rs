use super::{GazeError, Result};

/// How many past fixations inhibition of return masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IorHorizon {
    /// Every visited region stays masked; paths never revisit.
    Infinite,
    /// Only the most recent `h` fixations are masked (`h >= 1`).
    Last(usize),
}

/// First-order base affinities between regions, an initial fixation
/// distribution, and the IoR masking rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    n: usize,
    affinity: Vec<f64>,
    initial: Vec<f64>,
    horizon: IorHorizon,
}

impl TransitionKernel {
    /// `affinity` is row-major `n x n`: row `i` scores moves out of region `i`.
    pub fn new(affinity: Vec<f64>, initial: Vec<f64>, horizon: IorHorizon) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(GazeError::InvalidKernel("no regions".into()));
        }
        if affinity.len() != n * n {
            return Err(GazeError::DimensionMismatch {
                expected: n * n,
                got: affinity.len(),
            });
        }
        if affinity.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(GazeError::InvalidKernel(
                "affinities must be finite and nonnegative".into(),
            ));
        }
        if initial.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(GazeError::InvalidKernel(
                "initial probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = initial.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(GazeError::InvalidKernel(format!(
                "initial distribution sums to {total}, not 1"
            )));
        }
        if let IorHorizon::Last(0) = horizon {
            return Err(GazeError::InvalidKernel("IoR horizon must be at least 1".into()));
        }
        Ok(Self {
            n,
            affinity,
            initial,
            horizon,
        })
    }

    /// Normalizes `initial` before validating, for callers holding raw scores.
    pub fn from_scores(affinity: Vec<f64>, initial_scores: &[f64], horizon: IorHorizon) -> Result<Self> {
        let total: f64 = initial_scores.iter().sum();
        if !(total > 0.0) {
            return Err(GazeError::InvalidKernel("initial scores sum to zero".into()));
        }
        let initial = initial_scores.iter().map(|s| s / total).collect();
        Self::new(affinity, initial, horizon)
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(vec![1.0; n * n], vec![1.0 / n as f64; n], IorHorizon::Infinite)
            .expect("uniform kernel is valid")
    }

    /// Affinities and initial scores both proportional to a per-region
    /// saliency, independent of the source region.
    pub fn saliency_proportional(saliency: &[f64], horizon: IorHorizon) -> Result<Self> {
        let n = saliency.len();
        let affinity = (0..n).flat_map(|_| saliency.iter().copied()).collect();
        Self::from_scores(affinity, saliency, horizon)
    }

    pub fn with_horizon(mut self, horizon: IorHorizon) -> Result<Self> {
        if let IorHorizon::Last(0) = horizon {
            return Err(GazeError::InvalidKernel("IoR horizon must be at least 1".into()));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> IorHorizon {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn affinity_row(&self, from: usize) -> &[f64] {
        &self.affinity[from * self.n..(from + 1) * self.n]
    }

    /// Next-fixation distribution after fixating `current` with the given
    /// earlier history (oldest first). `current` is appended to the history
    /// internally; under a finite horizon `h` only the last `h` entries of
    /// that combined history are masked.
    pub fn step_distribution(&self, visited: &[usize], current: usize) -> Result<Vec<f64>> {
        let mut masked = vec![false; self.n];
        let history = visited.iter().chain(std::iter::once(&current));
        let len = visited.len() + 1;
        let skip = match self.horizon {
            IorHorizon::Infinite => 0,
            IorHorizon::Last(h) => len.saturating_sub(h),
        };
        for &r in history.skip(skip) {
            if r >= self.n {
                return Err(GazeError::DimensionMismatch {
                    expected: self.n,
                    got: r + 1,
                });
            }
            masked[r] = true;
        }
        let mut out = vec![0.0; self.n];
        self.masked_step_into(current, &masked, &mut out)?;
        Ok(out)
    }

    /// Writes the renormalized, masked affinity row of `current` into `out`.
    pub(crate) fn masked_step_into(&self, current: usize, masked: &[bool], out: &mut [f64]) -> Result<()> {
        let row = self.affinity_row(current);
        let mut total = 0.0;
        for j in 0..self.n {
            let a = if masked[j] { 0.0 } else { row[j] };
            out[j] = a;
            total += a;
        }
        if !(total > 0.0) {
            return Err(GazeError::AllMasked);
        }
        for v in out.iter_mut() {
            *v /= total;
        }
        Ok(())
    }
}
