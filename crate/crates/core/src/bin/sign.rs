//! Command-line front end: scan-path simulation and enumeration, synthetic
//! data, training, evaluation, prediction, heatmaps, gradient checks and
//! the patch-size sweep.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use sign_core::gaze::{
    enumerate_scanpaths, enumerate_weights, expected_log_gaze_pathsum, expected_log_gaze_weighted,
    monte_carlo_log_gaze, sample_scanpath, simulate_log_gaze, EnumerationLimits, GazeField, IorHorizon,
    LinearDurations, TransitionKernel,
};
use sign_core::imaging::{load_image, render_heatmap, save_image, HeatmapOptions, Image};
use sign_core::model::gradsuite::run_gradient_suite;
use sign_core::model::{predict_log_gaze, SignConfig, SignInput, SignModel};
use sign_core::pipeline::{
    checkpoint_paths, ensemble_patterns, evaluate_manifest, generate_synthetic, load_ensemble, patch_sweep, train,
    DatasetManifest, SyntheticSpec, TrainOptions, TEST_TAG,
};

type CliResult<T = ()> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "sign", version, about = "Gaze-time modelling from scan-path statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample scan-paths and simulated log gaze times for one instance.
    Simulate(SimulateArgs),
    /// Enumerate every scan-path and compare the two expected-gaze routes.
    Enumerate(InstanceArgs),
    /// Write a synthetic dataset with ground-truth weight maps.
    GenData(GenDataArgs),
    /// Train a k-fold ensemble and evaluate it on the test records.
    Train(TrainArgs),
    /// Evaluate saved checkpoints on a manifest split.
    Eval(EvalArgs),
    /// Predict gaze time for one image.
    Predict(PredictArgs),
    /// Render the inferred gaze pattern of an image as a PPM overlay.
    Heatmap(HeatmapArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Train and evaluate once per patch size.
    Sweep(SweepArgs),
}

/// A scan-path instance: kernel, durations and path length. With no file,
/// a uniform kernel over `--regions` with seeded random durations is used.
#[derive(Args)]
struct InstanceArgs {
    /// JSON file with `affinity` (N*N row-major), `initial`, `mu`, and
    /// optional `gist`, `max_len`, `horizon`.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    regions: usize,
    #[arg(long, default_value_t = 2)]
    max_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Deserialize)]
struct InstanceFile {
    affinity: Vec<f64>,
    initial: Vec<f64>,
    mu: Vec<f64>,
    #[serde(default)]
    gist: f64,
    max_len: Option<usize>,
    horizon: Option<usize>,
}

struct Instance {
    kernel: TransitionKernel,
    field: GazeField,
    durations: LinearDurations,
    gist: f64,
    max_len: usize,
}

impl InstanceArgs {
    fn load(&self) -> CliResult<Instance> {
        let (kernel, mu, gist, max_len) = match &self.instance {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                let f: InstanceFile = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
                let horizon = f.horizon.map_or(IorHorizon::Infinite, IorHorizon::Last);
                let kernel = TransitionKernel::new(f.affinity, f.initial, horizon)?;
                (kernel, f.mu, f.gist, f.max_len.unwrap_or(self.max_len))
            }
            None => {
                if self.regions == 0 {
                    return Err("--regions must be at least 1".into());
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mu = (0..self.regions).map(|_| rng.random_range(-1.0..1.0)).collect();
                (TransitionKernel::uniform(self.regions), mu, 0.0, self.max_len)
            }
        };
        Ok(Instance {
            field: GazeField::from_scalars(&mu)?,
            kernel,
            durations: LinearDurations::identity(),
            gist,
            max_len,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Simulated viewers.
    #[arg(long, default_value_t = 1000)]
    viewers: usize,
    /// Spread of the per-fixation log-duration noise.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Example scan-paths to print.
    #[arg(long, default_value_t = 5)]
    show: usize,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file overriding any synthetic setting.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Spread of the Gaussian noise on log gaze targets.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
}

/// Model and optimizer settings shared by `train` and `sweep`.
#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    manifest: PathBuf,
    /// Model config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr0: f64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Print per-epoch training losses.
    #[arg(long)]
    verbose: bool,
}

impl TrainFlags {
    fn config(&self) -> CliResult<SignConfig> {
        let mut cfg = match &self.config {
            Some(path) => SignConfig::load(path)?,
            None => SignConfig::default(),
        };
        if let Some(p) = self.patch_size {
            cfg.patch_size = p;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            lr0: self.lr0,
            folds: self.folds,
            batch_size: self.batch_size,
            seed: self.seed,
            verbose: self.verbose,
            ..TrainOptions::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32])]
    sizes: Vec<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `fold_*.ckpt` files.
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long, default_value = TEST_TAG)]
    split: String,
    /// Report MSE alone when the targets are constant.
    #[arg(long)]
    allow_constant: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    context: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    context: Option<PathBuf>,
    /// Output PPM path.
    #[arg(long)]
    out: PathBuf,
    /// Blur of the upsampled map in pixels.
    #[arg(long, default_value_t = 0.0)]
    blur: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    seeds: Vec<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Enumerate(a) => enumerate(&a),
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => run_train(&a.flags),
        Command::Eval(a) => eval(&a),
        Command::Predict(a) => predict(&a),
        Command::Heatmap(a) => heatmap(&a),
        Command::Gradcheck(a) => return gradcheck(&a),
        Command::Sweep(a) => sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn simulate(a: &SimulateArgs) -> CliResult {
    let inst = a.instance.load()?;
    let seed = a.instance.seed;
    for s in 0..a.show as u64 {
        let path = sample_scanpath(&inst.kernel, inst.max_len, seed.wrapping_add(s));
        println!("path {s}: {:?} (p = {:.6})", path.fixations, path.prob);
    }
    let durations = LinearDurations {
        sigma: a.sigma,
        ..inst.durations.clone()
    };
    let sims = simulate_log_gaze(&inst.field, &inst.kernel, &durations, inst.max_len, a.viewers, seed, inst.gist)?;
    let mean = sims.iter().sum::<f64>() / sims.len().max(1) as f64;
    println!("viewers: {}", sims.len());
    println!("mean simulated log gaze: {mean:.6}");
    let mc = monte_carlo_log_gaze(&inst.field, &inst.kernel, &inst.durations, inst.max_len, a.viewers, seed, inst.gist)?;
    println!("monte carlo expected log gaze: {:.6} (std error {:.6})", mc.mean, mc.std_error);
    Ok(())
}

fn enumerate(a: &InstanceArgs) -> CliResult {
    let inst = a.load()?;
    let limits = EnumerationLimits::default();
    let paths = enumerate_scanpaths(&inst.kernel, inst.max_len, limits)?;
    let total: f64 = paths.iter().map(|p| p.prob).sum();
    let eq1 = expected_log_gaze_pathsum(&inst.field, &inst.kernel, &inst.durations, inst.max_len, inst.gist, limits)?;
    let weights = enumerate_weights(&inst.kernel, inst.max_len, limits)?;
    let eq2 = expected_log_gaze_weighted(&inst.field, &inst.durations, &weights, inst.gist)?;
    println!("paths: {}", paths.len());
    println!("sum of path probabilities: {total:.15}");
    println!("path-sum expected log gaze: {eq1:.15}");
    println!("weighted expected log gaze: {eq2:.15}");
    println!("difference: {:.3e}", (eq1 - eq2).abs());
    println!("weights: {:?}", weights.weights());
    Ok(())
}

fn gen_data(a: &GenDataArgs) -> CliResult {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => SyntheticSpec {
            seed: a.seed,
            ..SyntheticSpec::default()
        },
    };
    if let Some(v) = a.train {
        spec.train_count = v;
    }
    if let Some(v) = a.test {
        spec.test_count = v;
    }
    if let Some(v) = a.noise {
        spec.noise_sigma = v;
    }
    if let Some(v) = a.max_len {
        spec.max_len = v;
    }
    let data = generate_synthetic(&spec, &a.out_dir)?;
    let exact = data.truth.iter().filter(|t| t.exact).count();
    println!(
        "wrote {} records to {} ({} with enumerated weights, {} Monte-Carlo)",
        data.manifest.len(),
        a.out_dir.display(),
        exact,
        data.truth.len() - exact
    );
    Ok(())
}

fn run_train(f: &TrainFlags) -> CliResult {
    let cfg = f.config()?;
    let manifest = DatasetManifest::load(&f.manifest)?;
    let out = train(&manifest, &cfg, &f.options(), f.out_dir.as_deref())?;
    let r = &out.report;
    println!("folds: {}", r.folds.len());
    println!("test records: {}", r.test_records);
    println!("test mse: {:.6}", r.test_mse);
    println!("test pearson: {}", fmt_opt(r.test_pearson));
    println!("baseline mse: {}", fmt_opt(r.baseline_mse));
    for p in &out.checkpoints {
        println!("checkpoint: {}", p.display());
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let ensemble = load_ensemble(&checkpoint_paths(&a.checkpoints)?)?;
    let report = evaluate_manifest(&manifest, &a.split, &ensemble, a.allow_constant)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn load_inputs(checkpoints: &Path, image: &Path, context: Option<&Path>) -> CliResult<(Vec<SignModel>, Image, SignInput)> {
    let ensemble = load_ensemble(&checkpoint_paths(checkpoints)?)?;
    let img = load_image(image)?;
    let ctx = context.map(load_image).transpose()?;
    let input = SignInput::new(ensemble[0].config(), &img, ctx.as_ref())?;
    Ok((ensemble, img, input))
}

fn predict(a: &PredictArgs) -> CliResult {
    let (ensemble, _, input) = load_inputs(&a.checkpoints, &a.image, a.context.as_deref())?;
    let log = predict_log_gaze(&ensemble, &input)?;
    println!("log gaze: {log:.6}");
    println!("gaze seconds: {:.6}", log.exp());
    Ok(())
}

fn heatmap(a: &HeatmapArgs) -> CliResult {
    let (ensemble, img, input) = load_inputs(&a.checkpoints, &a.image, a.context.as_deref())?;
    let pattern = ensemble_patterns(&ensemble, &[&input])?.remove(0);
    let (rows, cols) = ensemble[0].config().grid();
    let opts = HeatmapOptions {
        blur_sigma: a.blur,
        alpha: a.alpha,
        ..HeatmapOptions::new(rows, cols, img.height, img.width)
    };
    save_image(&a.out, &render_heatmap(&pattern, &opts, Some(&img))?)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> ExitCode {
    let mut failed = 0;
    for &seed in &a.seeds {
        let cases = match run_gradient_suite(seed) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        };
        for c in cases {
            let status = if c.passes() { "ok" } else { "FAIL" };
            println!(
                "seed {seed} {:<24} {status} max rel err {:.2e} ({} checked)",
                c.name, c.report.max_rel_error, c.report.checked
            );
            failed += usize::from(!c.passes());
        }
    }
    if failed > 0 {
        eprintln!("{failed} gradient checks failed");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn sweep(a: &SweepArgs) -> CliResult {
    let cfg = a.flags.config()?;
    let manifest = DatasetManifest::load(&a.flags.manifest)?;
    let table = patch_sweep(&manifest, &cfg, &a.flags.options(), &a.sizes, a.flags.out_dir.as_deref())?;
    println!("{table}");
    if let Some(dir) = &a.flags.out_dir {
        let path = dir.join("sweep.json");
        fs::write(&path, serde_json::to_string_pretty(&table)? + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}
