//! Exact enumeration of revisit-free scan-paths. Only feasible at desk scale,
//! which is what the explosion guard enforces.

use super::{DurationModel, GazeError, GazeField, IorHorizon, Result, ScanPath, TransitionKernel, WeightMap};

pub const DEFAULT_MAX_PATHS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationLimits {
    pub max_paths: u64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_paths: DEFAULT_MAX_PATHS,
        }
    }
}

/// Number of ordered selections of `len` distinct regions out of `n`,
/// i.e. `n! / (n - len)!`, saturating.
pub fn path_count(n: usize, len: usize) -> u128 {
    let len = len.min(n);
    (0..len).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128))
}

fn check(kernel: &TransitionKernel, max_len: usize, limits: EnumerationLimits) -> Result<usize> {
    if max_len == 0 {
        return Err(GazeError::ZeroLength);
    }
    if kernel.horizon() != IorHorizon::Infinite {
        return Err(GazeError::FiniteHorizon);
    }
    let n = kernel.len();
    let paths = path_count(n, max_len);
    if paths > limits.max_paths as u128 {
        return Err(GazeError::ExplosionGuard {
            paths,
            cap: limits.max_paths,
        });
    }
    Ok(max_len.min(n))
}

fn check_field(field: &GazeField, kernel: &TransitionKernel) -> Result<()> {
    if field.len() != kernel.len() {
        return Err(GazeError::DimensionMismatch {
            expected: kernel.len(),
            got: field.len(),
        });
    }
    Ok(())
}

struct Walker<'a> {
    kernel: &'a TransitionKernel,
    len: usize,
    path: Vec<usize>,
    masked: Vec<bool>,
    // one scratch row per depth so recursion does not reallocate
    scratch: Vec<Vec<f64>>,
}

impl Walker<'_> {
    fn walk(&mut self, prob: f64, visit: &mut dyn FnMut(&[usize], f64)) {
        if self.path.len() == self.len {
            visit(&self.path, prob);
            return;
        }
        let depth = self.path.len();
        let current = *self.path.last().expect("walk starts from a first fixation");
        let mut row = std::mem::take(&mut self.scratch[depth]);
        match self.kernel.masked_step_into(current, &self.masked, &mut row) {
            Ok(()) => {
                for next in 0..self.kernel.len() {
                    if self.masked[next] {
                        continue;
                    }
                    self.path.push(next);
                    self.masked[next] = true;
                    self.walk(prob * row[next], visit);
                    self.masked[next] = false;
                    self.path.pop();
                }
            }
            // the process stops early; the truncated path keeps its mass
            Err(_) => visit(&self.path, prob),
        }
        self.scratch[depth] = row;
    }
}

/// Calls `visit(path, prob)` for every scan-path of effective length
/// `min(max_len, N)`.
fn for_each_path(
    kernel: &TransitionKernel,
    max_len: usize,
    limits: EnumerationLimits,
    mut visit: impl FnMut(&[usize], f64),
) -> Result<()> {
    let len = check(kernel, max_len, limits)?;
    let n = kernel.len();
    let mut walker = Walker {
        kernel,
        len,
        path: Vec::with_capacity(len),
        masked: vec![false; n],
        scratch: vec![vec![0.0; n]; len],
    };
    for first in 0..n {
        walker.path.push(first);
        walker.masked[first] = true;
        walker.walk(kernel.initial()[first], &mut visit);
        walker.masked[first] = false;
        walker.path.pop();
    }
    Ok(())
}

/// Every revisit-free scan-path of effective length `min(max_len, N)` with
/// its probability `pi[F1] * prod_t E_t[F_t]`.
pub fn enumerate_scanpaths(
    kernel: &TransitionKernel,
    max_len: usize,
    limits: EnumerationLimits,
) -> Result<Vec<ScanPath>> {
    let mut out = Vec::new();
    for_each_path(kernel, max_len, limits, |path, prob| {
        out.push(ScanPath {
            fixations: path.to_vec(),
            prob,
        })
    })?;
    Ok(out)
}

/// Expected log gaze as a sum over scan-paths of the path probability times
/// the summed log-durations along the path.
pub fn expected_log_gaze_pathsum(
    field: &GazeField,
    kernel: &TransitionKernel,
    durations: &dyn DurationModel,
    max_len: usize,
    gist_log_duration: f64,
    limits: EnumerationLimits,
) -> Result<f64> {
    check_field(field, kernel)?;
    let mu: Vec<f64> = (0..field.len()).map(|j| durations.local(field.feature(j))).collect();
    let mut local = 0.0;
    for_each_path(kernel, max_len, limits, |path, prob| {
        let along: f64 = path.iter().map(|&j| mu[j]).sum();
        local += prob * along;
    })?;
    Ok(gist_log_duration + local)
}

/// Visit weights `w_j`: total probability of the scan-paths containing `j`.
pub fn enumerate_weights(
    kernel: &TransitionKernel,
    max_len: usize,
    limits: EnumerationLimits,
) -> Result<WeightMap> {
    let mut w = vec![0.0; kernel.len()];
    for_each_path(kernel, max_len, limits, |path, prob| {
        for &j in path {
            w[j] += prob;
        }
    })?;
    // guard against 1 + ulp
    for v in &mut w {
        *v = v.min(1.0);
    }
    WeightMap::from_weights(w)
}

/// Expected log gaze from region weights: `gist + sum_j mu(S_j) w_j`.
pub fn expected_log_gaze_weighted(
    field: &GazeField,
    durations: &dyn DurationModel,
    weights: &WeightMap,
    gist_log_duration: f64,
) -> Result<f64> {
    if weights.len() != field.len() {
        return Err(GazeError::DimensionMismatch {
            expected: field.len(),
            got: weights.len(),
        });
    }
    let local: f64 = weights
        .weights()
        .iter()
        .enumerate()
        .map(|(j, w)| durations.local(field.feature(j)) * w)
        .sum();
    Ok(gist_log_duration + local)
}
