//! Procedural scenes whose gaze ground truth comes from the scan-path
//! process itself, so inferred weight maps can be scored.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestRecord, TEST_TAG, TRAIN_TAG};
use super::{derive_seed, PipelineError, Result};
use crate::gaze::{
    enumerate_weights, expected_log_gaze_weighted, monte_carlo_weights, DurationModel, EnumerationLimits, GazeError,
    GazeField, IorHorizon, LinearDurations, TransitionKernel,
};
use crate::imaging::{patchify, save_image, FloatImage, Image};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";

/// Keeps the kernel well defined on an all-black patch.
const SALIENCY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patch_size: usize,
    pub min_blobs: usize,
    pub max_blobs: usize,
    /// Blob standard deviation range in pixels.
    pub blob_sigma: (f64, f64),
    pub blob_amplitude: (f64, f64),
    pub background: f64,
    /// Standard deviation of the per-pixel background noise.
    pub background_noise: f64,
    /// Region log-duration `mu_j = local_bias + local_coef * mean(patch j)`.
    pub local_bias: f64,
    pub local_coef: f64,
    /// Gist log-duration `mu_0 = gist_bias + gist_coef * mean(image)`.
    pub gist_bias: f64,
    pub gist_coef: f64,
    pub max_len: usize,
    /// Standard deviation of the Gaussian noise on the log gaze target.
    pub noise_sigma: f64,
    pub train_count: usize,
    pub test_count: usize,
    /// Monte-Carlo paths per image when enumeration is over the cap.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            grid_rows: 8,
            grid_cols: 8,
            patch_size: 16,
            min_blobs: 1,
            max_blobs: 3,
            blob_sigma: (6.0, 12.0),
            blob_amplitude: (0.5, 1.0),
            background: 0.05,
            background_noise: 0.02,
            local_bias: 0.0,
            local_coef: 1.0,
            gist_bias: 0.0,
            gist_coef: 1.0,
            max_len: 4,
            noise_sigma: 0.05,
            train_count: 500,
            test_count: 50,
            mc_samples: 20_000,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn height(&self) -> usize {
        self.grid_rows * self.patch_size
    }

    pub fn width(&self) -> usize {
        self.grid_cols * self.patch_size
    }

    pub fn regions(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::InvalidSpec(m.into()));
        if self.regions() == 0 || self.patch_size == 0 {
            return bad("grid and patch size must be non-zero");
        }
        if self.min_blobs > self.max_blobs {
            return bad("min_blobs exceeds max_blobs");
        }
        if !(self.blob_sigma.0 > 0.0 && self.blob_sigma.0 <= self.blob_sigma.1) {
            return bad("blob_sigma must be a positive range");
        }
        if self.blob_amplitude.0 > self.blob_amplitude.1 {
            return bad("blob_amplitude must be a range");
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1");
        }
        if self.noise_sigma < 0.0 || self.background_noise < 0.0 {
            return bad("noise levels must be non-negative");
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be positive");
        }
        Ok(())
    }

    pub fn durations(&self) -> LinearDurations {
        LinearDurations {
            gist_bias: self.gist_bias,
            gist_coef: vec![self.gist_coef],
            context_coef: Vec::new(),
            local_bias: self.local_bias,
            local_coef: vec![self.local_coef],
            sigma: 0.0,
        }
    }
}

/// Ground truth for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub image_path: String,
    pub weights: Vec<f64>,
    /// Zero when the weights were enumerated exactly.
    pub std_error: Vec<f64>,
    pub exact: bool,
    pub expected_log_gaze: f64,
}

impl SceneTruth {
    /// The normalized pattern `w / sum(w)`.
    pub fn pattern(&self) -> Vec<f64> {
        let s: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub truth: Vec<SceneTruth>,
}

/// Renders one scene: Gaussian blobs over a noisy dark background.
pub fn render_scene(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Image {
    let (h, w) = (spec.height(), spec.width());
    let blobs = rng.random_range(spec.min_blobs..=spec.max_blobs);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..blobs)
        .map(|_| {
            let cy = rng.random_range(0.0..h as f64);
            let cx = rng.random_range(0.0..w as f64);
            let s = uniform(rng, spec.blob_sigma);
            let a = uniform(rng, spec.blob_amplitude);
            (cy, cx, s, a)
        })
        .collect();
    let noise = Normal::new(0.0, spec.background_noise).expect("validated sigma");
    let mut img = FloatImage::zeros(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            let mut v = spec.background + noise.sample(rng);
            for &(cy, cx, s, a) in &blobs {
                let d2 = (y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2);
                v += a * (-d2 / (2.0 * s * s)).exp();
            }
            img.set(y, x, 0, v.clamp(0.0, 1.0));
        }
    }
    img.to_u8()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// True weights and expected log gaze of a rendered scene. Enumerates when
/// the path count is under the cap, else estimates the weights by
/// Monte-Carlo with `seed`.
pub fn scene_truth(spec: &SyntheticSpec, image: &Image, seed: u64) -> Result<SceneTruth> {
    let grid = patchify(&image.to_float(), spec.patch_size)?;
    if (grid.rows, grid.cols) != (spec.grid_rows, spec.grid_cols) {
        return Err(PipelineError::InvalidSpec(format!(
            "image grid {}x{} does not match spec {}x{}",
            grid.rows, grid.cols, spec.grid_rows, spec.grid_cols
        )));
    }
    let means = grid.patch_means();
    let saliency: Vec<f64> = means.iter().map(|m| m.max(SALIENCY_FLOOR)).collect();
    let kernel = TransitionKernel::saliency_proportional(&saliency, IorHorizon::Infinite)?;
    let (weights, std_error, exact) = match enumerate_weights(&kernel, spec.max_len, EnumerationLimits::default()) {
        Ok(w) => (w, vec![0.0; means.len()], true),
        Err(GazeError::ExplosionGuard { .. }) => {
            let (w, se) = monte_carlo_weights(&kernel, spec.max_len, spec.mc_samples, seed)?;
            (w, se, false)
        }
        Err(e) => return Err(e.into()),
    };
    let field = GazeField::new(grid.rows, grid.cols, means.iter().map(|&m| vec![m]).collect())?;
    let durations = spec.durations();
    let mean = image.to_float().mean();
    let gist = durations.gist(&[mean], &[]);
    let expected_log_gaze = expected_log_gaze_weighted(&field, &durations, &weights, gist)?;
    Ok(SceneTruth {
        image_path: String::new(),
        weights: weights.into_weights(),
        std_error,
        exact,
        expected_log_gaze,
    })
}

fn image_name(i: usize) -> String {
    format!("img_{i:05}.pgm")
}

/// Builds the dataset in memory (images, manifest records and truth). The
/// first `train_count` scenes are tagged train, the rest test.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(Vec<Image>, Vec<ManifestRecord>, Vec<SceneTruth>)> {
    spec.validate()?;
    let total = spec.train_count + spec.test_count;
    let scenes: Vec<(Image, SceneTruth)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, i as u64));
            let image = render_scene(spec, &mut rng);
            let mut truth = scene_truth(spec, &image, rng.random())?;
            truth.image_path = image_name(i);
            Ok((image, truth))
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, u64::MAX));
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| PipelineError::InvalidSpec(e.to_string()))?;
    let mut images = Vec::with_capacity(total);
    let mut records = Vec::with_capacity(total);
    let mut truths = Vec::with_capacity(total);
    for (i, (image, truth)) in scenes.into_iter().enumerate() {
        let g = truth.expected_log_gaze + noise.sample(&mut rng);
        records.push(ManifestRecord {
            image_path: truth.image_path.clone(),
            context_path: None,
            gaze_seconds: g.exp(),
            split_tag: if i < spec.train_count { TRAIN_TAG } else { TEST_TAG }.into(),
        });
        images.push(image);
        truths.push(truth);
    }
    Ok((images, records, truths))
}

/// Writes images, `manifest.jsonl` and `truth.jsonl` into `out_dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<SyntheticDataset> {
    let out_dir = out_dir.as_ref();
    let (images, records, truth) = synthesize(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    for (image, t) in images.iter().zip(&truth) {
        save_image(out_dir.join(&t.image_path), image)?;
    }
    let manifest = DatasetManifest::new(out_dir, records);
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    save_truth(out_dir.join(TRUTH_FILE), &truth)?;
    Ok(SyntheticDataset { manifest, truth })
}

pub fn save_truth(path: impl AsRef<Path>, truth: &[SceneTruth]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for t in truth {
        serde_json::to_writer(&mut out, t).map_err(|e| PipelineError::Manifest(e.to_string()))?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| PipelineError::io(path, e))
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<SceneTruth>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            grid_rows: 2,
            grid_cols: 3,
            patch_size: 8,
            blob_sigma: (2.0, 4.0),
            max_len: 3,
            train_count: 6,
            test_count: 2,
            mc_samples: 2000,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn blank_scene_gives_uniform_pattern() {
        let spec = small_spec();
        let image = Image::filled(spec.height(), spec.width(), 1, 40);
        let t = scene_truth(&spec, &image, 0).unwrap();
        assert!(t.exact);
        for w in &t.weights {
            assert!((w - 0.5).abs() < 1e-12, "{w}");
        }
        let p = t.pattern();
        assert!(p.iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-12));
    }

    #[test]
    fn bright_patch_gets_largest_weight() {
        let spec = small_spec();
        let mut image = Image::filled(spec.height(), spec.width(), 1, 10);
        let mut px = image.to_float();
        for y in 8..16 {
            for x in 8..16 {
                px.set(y, x, 0, 0.9);
            }
        }
        image = px.to_u8();
        let t = scene_truth(&spec, &image, 0).unwrap();
        let argmax = (0..6).max_by(|&a, &b| t.weights[a].total_cmp(&t.weights[b])).unwrap();
        assert_eq!(argmax, 4);
        assert!(t.weights.iter().all(|w| (0.0..=1.0).contains(w)));
        let total: f64 = t.weights.iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn large_grid_falls_back_to_monte_carlo() {
        let spec = SyntheticSpec {
            mc_samples: 500,
            ..SyntheticSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let image = render_scene(&spec, &mut rng);
        let t = scene_truth(&spec, &image, 7).unwrap();
        assert!(!t.exact);
        assert_eq!(t.weights.len(), 64);
        assert!(t.std_error.iter().all(|s| *s <= (0.25f64 / 500.0).sqrt() + 1e-15));
        // every sampled path visits max_len distinct regions
        assert!((t.weights.iter().sum::<f64>() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = small_spec();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let da = generate_synthetic(&spec, a.path()).unwrap();
        generate_synthetic(&spec, b.path()).unwrap();
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 8 + 2);
        for name in names {
            assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
        }
        let loaded = DatasetManifest::load(a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.records, da.manifest.records);
        assert_eq!(loaded.tagged(TEST_TAG), vec![6, 7]);
        assert_eq!(load_truth(a.path().join(TRUTH_FILE)).unwrap(), da.truth);

        let other = SyntheticSpec { seed: 1, ..spec };
        let (_, records, _) = synthesize(&other).unwrap();
        assert_ne!(records, da.manifest.records);
    }

    #[test]
    fn targets_follow_expected_log_gaze() {
        let spec = SyntheticSpec {
            noise_sigma: 0.0,
            ..small_spec()
        };
        let (_, records, truth) = synthesize(&spec).unwrap();
        for (r, t) in records.iter().zip(&truth) {
            assert!((r.gaze_seconds.ln() - t.expected_log_gaze).abs() < 1e-12);
        }
    }
}
