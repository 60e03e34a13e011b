use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DurationModel, GazeError, GazeField, IorHorizon, Result, ScanPath, TransitionKernel, WeightMap};

/// A sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        // shifting by the first sample keeps constant inputs exact
        let shift = xs[0];
        let mean = shift + xs.iter().map(|x| x - shift).sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, std_error: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if u < acc {
            return j;
        }
    }
    // rounding left u above the final partial sum
    last
}

/// Draws one scan-path of at most `max_len` fixations from the generative
/// process. Under an infinite horizon the path is revisit-free and its length
/// is `min(max_len, N)` unless the kernel dead-ends first.
pub fn sample_scanpath_with<R: Rng + ?Sized>(
    kernel: &TransitionKernel,
    max_len: usize,
    rng: &mut R,
) -> ScanPath {
    let n = kernel.len();
    let len = match kernel.horizon() {
        IorHorizon::Infinite => max_len.min(n),
        IorHorizon::Last(_) => max_len,
    };
    let mut fixations = Vec::with_capacity(len);
    if len == 0 {
        return ScanPath { fixations, prob: 1.0 };
    }
    let first = categorical(kernel.initial(), rng);
    let mut prob = kernel.initial()[first];
    fixations.push(first);

    let mut masked = vec![false; n];
    let mut recent = VecDeque::new();
    masked[first] = true;
    recent.push_back(first);
    let mut row = vec![0.0; n];
    while fixations.len() < len {
        if let IorHorizon::Last(h) = kernel.horizon() {
            while recent.len() > h {
                let old = recent.pop_front().expect("nonempty");
                if !recent.contains(&old) {
                    masked[old] = false;
                }
            }
        }
        let current = *fixations.last().expect("nonempty");
        if kernel.masked_step_into(current, &masked, &mut row).is_err() {
            break;
        }
        let next = categorical(&row, rng);
        prob *= row[next];
        fixations.push(next);
        masked[next] = true;
        recent.push_back(next);
    }
    ScanPath { fixations, prob }
}

/// Seeded wrapper around [`sample_scanpath_with`].
pub fn sample_scanpath(kernel: &TransitionKernel, max_len: usize, seed: u64) -> ScanPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_scanpath_with(kernel, max_len, &mut rng)
}

fn local_durations(field: &GazeField, kernel: &TransitionKernel, durations: &dyn DurationModel) -> Result<Vec<f64>> {
    if field.len() != kernel.len() {
        return Err(GazeError::DimensionMismatch {
            expected: kernel.len(),
            got: field.len(),
        });
    }
    Ok((0..field.len()).map(|j| durations.local(field.feature(j))).collect())
}

/// Monte-Carlo estimate of the expected log gaze: the mean over sampled
/// paths of `gist + sum_i mu(S_{F_i})`.
pub fn monte_carlo_log_gaze(
    field: &GazeField,
    kernel: &TransitionKernel,
    durations: &dyn DurationModel,
    max_len: usize,
    n_samples: usize,
    seed: u64,
    gist_log_duration: f64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(GazeError::ZeroLength);
    }
    let mu = local_durations(field, kernel, durations)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| {
            let path = sample_scanpath_with(kernel, max_len, &mut rng);
            gist_log_duration + path.fixations.iter().map(|&j| mu[j]).sum::<f64>()
        })
        .collect();
    Ok(McEstimate::from_samples(&samples))
}

/// Simulated per-viewer log gaze times, with each fixation's log-duration
/// drawn around its mean with the duration model's noise.
pub fn simulate_log_gaze(
    field: &GazeField,
    kernel: &TransitionKernel,
    durations: &dyn DurationModel,
    max_len: usize,
    n_viewers: usize,
    seed: u64,
    gist_log_duration: f64,
) -> Result<Vec<f64>> {
    let mu = local_durations(field, kernel, durations)?;
    let sigma = durations.noise_sigma();
    let noise = Normal::new(0.0, sigma).map_err(|e| GazeError::InvalidField(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_viewers)
        .map(|_| {
            let path = sample_scanpath_with(kernel, max_len, &mut rng);
            let mut g = gist_log_duration;
            for &j in &path.fixations {
                g += mu[j] + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            }
            g
        })
        .collect())
}

/// Monte-Carlo visit weights with the per-region binomial standard error,
/// for grids too large to enumerate.
pub fn monte_carlo_weights(
    kernel: &TransitionKernel,
    max_len: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(WeightMap, Vec<f64>)> {
    if n_samples == 0 {
        return Err(GazeError::ZeroLength);
    }
    let n = kernel.len();
    let mut hits = vec![0u64; n];
    let mut seen = vec![false; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let path = sample_scanpath_with(kernel, max_len, &mut rng);
        seen.iter_mut().for_each(|s| *s = false);
        for &j in &path.fixations {
            if !seen[j] {
                seen[j] = true;
                hits[j] += 1;
            }
        }
    }
    let total = n_samples as f64;
    let w: Vec<f64> = hits.iter().map(|&h| h as f64 / total).collect();
    let se = w.iter().map(|&p| (p * (1.0 - p) / total).sqrt()).collect();
    Ok((WeightMap::from_weights(w)?, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::{enumerate_scanpaths, EnumerationLimits, LinearDurations};

    #[test]
    fn single_region_path() {
        for seed in 0..5 {
            let p = sample_scanpath(&TransitionKernel::uniform(1), 4, seed);
            assert_eq!(p.fixations, vec![0]);
            assert_eq!(p.prob, 1.0);
        }
    }

    #[test]
    fn full_length_paths_are_permutations() {
        let k = TransitionKernel::uniform(3);
        for seed in 0..50 {
            let mut p = sample_scanpath(&k, 3, seed).fixations;
            p.sort_unstable();
            assert_eq!(p, vec![0, 1, 2]);
        }
    }

    #[test]
    fn sampled_prob_matches_enumeration() {
        let aff = vec![0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 1.0, 4.0, 0.0];
        let k = TransitionKernel::new(aff, vec![0.2, 0.3, 0.5], IorHorizon::Infinite).unwrap();
        let all = enumerate_scanpaths(&k, 2, EnumerationLimits::default()).unwrap();
        for seed in 0..20 {
            let s = sample_scanpath(&k, 2, seed);
            let e = all.iter().find(|p| p.fixations == s.fixations).unwrap();
            assert!((e.prob - s.prob).abs() < 1e-15);
        }
    }

    #[test]
    fn empirical_frequencies_match_enumeration() {
        let k = TransitionKernel::uniform(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_scanpath_with(&k, 2, &mut rng).fixations).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts.values() {
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn finite_horizon_allows_revisits() {
        let k = TransitionKernel::uniform(2).with_horizon(IorHorizon::Last(1)).unwrap();
        let p = sample_scanpath(&k, 6, 3);
        assert_eq!(p.len(), 6);
        // with two regions and only the current one masked, paths alternate
        for w in p.fixations.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn same_seed_same_path() {
        let k = TransitionKernel::saliency_proportional(&[0.1, 0.5, 0.2, 0.9, 0.3], IorHorizon::Infinite).unwrap();
        for seed in 0..20 {
            assert_eq!(sample_scanpath(&k, 4, seed), sample_scanpath(&k, 4, seed));
        }
    }

    #[test]
    fn monte_carlo_trivial_cases() {
        let field = GazeField::from_scalars(&[0.4, 0.9, 1.3]).unwrap();
        let k = TransitionKernel::uniform(3);
        let est = monte_carlo_log_gaze(&field, &k, &LinearDurations::zero(), 2, 500, 1, 0.7).unwrap();
        assert_eq!(est.mean, 0.7);
        assert_eq!(est.std_error, 0.0);

        let mu = LinearDurations::identity();
        let est = monte_carlo_log_gaze(&field, &k, &mu, 2, 1, 9, 0.1).unwrap();
        let path = sample_scanpath(&k, 2, 9);
        let direct: f64 = 0.1 + path.fixations.iter().map(|&j| field.feature(j)[0]).sum::<f64>();
        assert_eq!(est.mean, direct);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn monte_carlo_weights_saturate() {
        let k = TransitionKernel::saliency_proportional(&[0.1, 0.5, 0.2], IorHorizon::Infinite).unwrap();
        let (w, se) = monte_carlo_weights(&k, 3, 200, 4).unwrap();
        assert_eq!(w.weights(), &[1.0, 1.0, 1.0]);
        assert_eq!(se, vec![0.0; 3]);
    }
}
