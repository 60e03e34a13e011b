//! k-fold ensemble training and evaluation.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::DatasetManifest;
use super::metrics::{mse, pearson};
use super::split::{kfold_split, KFoldSplit};
use super::{derive_seed, PipelineError, Result};
use crate::imaging::load_image;
use crate::model::{SignConfig, SignInput, SignModel};
use crate::nn::{lr_schedule, Adam, AdamConfig};

/// Environment variable capping how many folds train at once.
pub const THREADS_ENV: &str = "SIGN_THREADS";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr0: f64,
    pub folds: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Permute training targets across records before fitting, leaving the
    /// test targets intact. Used for the control ensemble.
    pub shuffle_labels: bool,
    /// Fold parallelism; `None` reads `SIGN_THREADS`, then uses every core.
    pub threads: Option<usize>,
    /// Print per-epoch losses to stderr.
    pub verbose: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr0: 1e-3,
            folds: 10,
            batch_size: 16,
            seed: 0,
            shuffle_labels: false,
            threads: None,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_records: usize,
    pub validation_records: usize,
    pub validation_mse: Option<f64>,
    pub test_mse: f64,
    pub test_pearson: Option<f64>,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Evidence that no test record entered a training batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationAudit {
    pub batches: u64,
    pub samples: u64,
    pub test_hits: u64,
    /// SHA-256 over the record digests of every batch, folds in order.
    pub batch_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_records: usize,
    /// Ensemble MSE on log gaze.
    pub test_mse: f64,
    pub test_pearson: Option<f64>,
    /// MSE of predicting the mean training target for every test record.
    pub baseline_mse: Option<f64>,
    pub folds: Vec<FoldReport>,
    pub audit: Option<IsolationAudit>,
}

/// Preprocessed records: network inputs, log targets and content digests.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub inputs: Vec<SignInput>,
    pub targets: Vec<f64>,
    pub digests: Vec<[u8; 32]>,
}

impl PreparedData {
    pub fn load(manifest: &DatasetManifest, cfg: &SignConfig) -> Result<Self> {
        let loaded = manifest
            .records
            .par_iter()
            .map(|r| {
                let path = manifest.resolve(&r.image_path);
                let bytes = fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
                let image = load_image(&path)?;
                let mut hash = Sha256::new();
                hash.update(r.image_path.as_bytes());
                hash.update(&bytes);
                let context = match &r.context_path {
                    Some(c) => {
                        let cpath = manifest.resolve(c);
                        hash.update(fs::read(&cpath).map_err(|e| PipelineError::io(&cpath, e))?);
                        Some(load_image(&cpath)?)
                    }
                    None => None,
                };
                let input = SignInput::new(cfg, &image, context.as_ref())?;
                Ok((input, r.gaze_seconds.ln(), hash.finalize().into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Self {
            inputs: Vec::with_capacity(loaded.len()),
            targets: Vec::with_capacity(loaded.len()),
            digests: Vec::with_capacity(loaded.len()),
        };
        for (i, t, d) in loaded {
            data.inputs.push(i);
            data.targets.push(t);
            data.digests.push(d);
        }
        Ok(data)
    }

    pub fn subset(&self, idx: &[usize]) -> Vec<&SignInput> {
        idx.iter().map(|&i| &self.inputs[i]).collect()
    }
}

pub struct TrainOutcome {
    pub ensemble: Vec<SignModel>,
    pub report: EvalReport,
    pub split: KFoldSplit,
    pub checkpoints: Vec<PathBuf>,
}

struct FoldRun {
    model: SignModel,
    loss_history: Vec<f64>,
    batch_digests: Vec<[u8; 32]>,
    samples: u64,
    test_hits: u64,
}

pub fn thread_count(requested: Option<usize>) -> usize {
    requested
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn checkpoint_name(fold: usize) -> String {
    format!("fold_{fold:02}.ckpt")
}

/// Loads the manifest images, trains one model per fold and evaluates the
/// ensemble on the test records. Checkpoints and `report.json` go to
/// `out_dir` when given.
pub fn train(
    manifest: &DatasetManifest,
    cfg: &SignConfig,
    opts: &TrainOptions,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = PreparedData::load(manifest, cfg)?;
    let split = kfold_split(manifest, opts.folds, opts.seed)?;
    train_prepared(&data, split, cfg, opts, out_dir)
}

pub fn train_prepared(
    data: &PreparedData,
    split: KFoldSplit,
    cfg: &SignConfig,
    opts: &TrainOptions,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if opts.batch_size == 0 || opts.epochs == 0 {
        return Err(PipelineError::InvalidSpec("epochs and batch size must be positive".into()));
    }
    if split.test.is_empty() {
        return Err(PipelineError::EmptySplit);
    }
    let mut targets = data.targets.clone();
    if opts.shuffle_labels {
        let mut permuted: Vec<f64> = split.train.iter().map(|&i| targets[i]).collect();
        permuted.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0x5bff)));
        for (&i, t) in split.train.iter().zip(permuted) {
            targets[i] = t;
        }
    }
    let test_digests: HashSet<[u8; 32]> = split.test.iter().map(|&i| data.digests[i]).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(opts.threads))
        .build()
        .map_err(|e| PipelineError::InvalidSpec(format!("thread pool: {e}")))?;
    let runs: Vec<FoldRun> = pool.install(|| {
        split
            .folds
            .par_iter()
            .enumerate()
            .map(|(f, fold)| train_fold(data, &targets, &test_digests, &fold.train, cfg, opts, f))
            .collect::<Result<_>>()
    })?;

    let mut audit_hash = Sha256::new();
    let mut audit = IsolationAudit {
        batches: 0,
        samples: 0,
        test_hits: 0,
        batch_digest: String::new(),
    };
    for run in &runs {
        for d in &run.batch_digests {
            audit_hash.update(d);
        }
        audit.batches += run.batch_digests.len() as u64;
        audit.samples += run.samples;
        audit.test_hits += run.test_hits;
    }
    audit.batch_digest = hex(&audit_hash.finalize());
    if audit.test_hits > 0 {
        return Err(PipelineError::Isolation(format!("{} test samples reached training batches", audit.test_hits)));
    }

    let ensemble: Vec<SignModel> = runs.iter().map(|r| r.model.clone()).collect();
    let test_inputs = data.subset(&split.test);
    let test_targets: Vec<f64> = split.test.iter().map(|&i| data.targets[i]).collect();
    let mut report = evaluate(&ensemble, &test_inputs, &test_targets, true)?;
    for ((fr, run), fold) in report.folds.iter_mut().zip(&runs).zip(&split.folds) {
        fr.train_records = fold.train.len();
        fr.validation_records = fold.validation.len();
        fr.loss_history = run.loss_history.clone();
        if !fold.validation.is_empty() {
            let pred = member_predictions(&run.model, &data.subset(&fold.validation))?;
            let t: Vec<f64> = fold.validation.iter().map(|&i| targets[i]).collect();
            fr.validation_mse = Some(mse(&pred, &t)?);
        }
    }
    let train_mean = split.train.iter().map(|&i| targets[i]).sum::<f64>() / split.train.len().max(1) as f64;
    report.baseline_mse = Some(mse(&vec![train_mean; test_targets.len()], &test_targets)?);
    report.audit = Some(audit);

    let mut checkpoints = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        for (f, model) in ensemble.iter().enumerate() {
            let path = dir.join(checkpoint_name(f));
            model.save(&path)?;
            checkpoints.push(path);
        }
        save_report(dir.join(REPORT_FILE), &report)?;
    }
    Ok(TrainOutcome {
        ensemble,
        report,
        split,
        checkpoints,
    })
}

fn train_fold(
    data: &PreparedData,
    targets: &[f64],
    test_digests: &HashSet<[u8; 32]>,
    train_idx: &[usize],
    cfg: &SignConfig,
    opts: &TrainOptions,
    fold: usize,
) -> Result<FoldRun> {
    let mut model = SignModel::new(cfg.clone(), derive_seed(opts.seed, 1 + fold as u64))?;
    let mean = train_idx.iter().map(|&i| targets[i]).sum::<f64>() / train_idx.len() as f64;
    model.set_gist_bias(mean);
    let mut adam = Adam::new(
        model.params(),
        AdamConfig {
            lr: opts.lr0,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 1000 + fold as u64));
    let mut order = train_idx.to_vec();
    let mut run = FoldRun {
        model,
        loss_history: Vec::with_capacity(opts.epochs),
        batch_digests: Vec::new(),
        samples: 0,
        test_hits: 0,
    };
    for epoch in 0..opts.epochs {
        adam.set_lr(lr_schedule(epoch, opts.lr0));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(opts.batch_size).enumerate() {
            let mut hash = Sha256::new();
            for &i in batch {
                hash.update(data.digests[i]);
                run.test_hits += u64::from(test_digests.contains(&data.digests[i]));
            }
            run.batch_digests.push(hash.finalize().into());
            run.samples += batch.len() as u64;

            let inputs = data.subset(batch);
            let t: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            run.model.params_mut().zero_grads();
            let loss = run.model.accumulate_gradients(&inputs, &t, cfg.lambda)?;
            if !loss.is_finite() {
                return Err(PipelineError::NonFiniteLoss { fold, epoch, batch: b, loss });
            }
            adam.step(run.model.params_mut()).map_err(crate::model::ModelError::from)?;
            total += loss * batch.len() as f64;
        }
        let epoch_loss = total / order.len() as f64;
        if opts.verbose {
            eprintln!("fold {fold} epoch {} loss {epoch_loss:.6}", epoch + 1);
        }
        run.loss_history.push(epoch_loss);
    }
    Ok(run)
}

const EVAL_CHUNK: usize = 32;

fn member_predictions(model: &SignModel, inputs: &[&SignInput]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_CHUNK) {
        out.extend(model.forward_batch(chunk)?.into_iter().map(|o| o.log_gaze));
    }
    Ok(out)
}

/// Per-member predicted log gaze, `[member][record]`.
pub fn ensemble_predictions(ensemble: &[SignModel], inputs: &[&SignInput]) -> Result<Vec<Vec<f64>>> {
    ensemble.par_iter().map(|m| member_predictions(m, inputs)).collect()
}

/// Inferred gaze pattern per record: member weights averaged, then
/// normalized to sum to one.
pub fn ensemble_patterns(ensemble: &[SignModel], inputs: &[&SignInput]) -> Result<Vec<Vec<f64>>> {
    if ensemble.is_empty() {
        return Err(crate::model::ModelError::EmptyEnsemble.into());
    }
    let per_member: Vec<Vec<Vec<f64>>> = ensemble
        .par_iter()
        .map(|m| {
            let mut w = Vec::with_capacity(inputs.len());
            for chunk in inputs.chunks(EVAL_CHUNK) {
                w.extend(m.forward_batch(chunk)?.into_iter().map(|o| o.weights));
            }
            Ok(w)
        })
        .collect::<Result<_>>()?;
    Ok((0..inputs.len())
        .map(|r| {
            let n = per_member[0][r].len();
            let mut acc = vec![0.0; n];
            for member in &per_member {
                acc.iter_mut().zip(&member[r]).for_each(|(a, w)| *a += w);
            }
            let s: f64 = acc.iter().sum();
            acc.iter().map(|a| a / s).collect()
        })
        .collect())
}

/// Scores the ensemble, and each member alone, against log targets.
/// With constant targets Pearson is undefined: that is an error unless
/// `allow_constant`, in which case only MSE is reported.
pub fn evaluate(
    ensemble: &[SignModel],
    inputs: &[&SignInput],
    targets: &[f64],
    allow_constant: bool,
) -> Result<EvalReport> {
    if inputs.is_empty() {
        return Err(PipelineError::EmptySplit);
    }
    if ensemble.is_empty() {
        return Err(crate::model::ModelError::EmptyEnsemble.into());
    }
    let constant = targets.iter().all(|&t| t == targets[0]);
    if constant && !allow_constant {
        return Err(PipelineError::ConstantTargets);
    }
    let members = ensemble_predictions(ensemble, inputs)?;
    let k = members.len() as f64;
    let combined: Vec<f64> = (0..inputs.len()).map(|r| members.iter().map(|m| m[r]).sum::<f64>() / k).collect();
    let folds = members
        .iter()
        .enumerate()
        .map(|(f, pred)| {
            Ok(FoldReport {
                fold: f,
                train_records: 0,
                validation_records: 0,
                validation_mse: None,
                test_mse: mse(pred, targets)?,
                test_pearson: pearson(pred, targets)?,
                loss_history: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        test_records: inputs.len(),
        test_mse: mse(&combined, targets)?,
        test_pearson: pearson(&combined, targets)?,
        baseline_mse: None,
        folds,
        audit: None,
    })
}

/// Evaluates checkpoints on the records of `manifest` tagged `tag`.
pub fn evaluate_manifest(
    manifest: &DatasetManifest,
    tag: &str,
    ensemble: &[SignModel],
    allow_constant: bool,
) -> Result<EvalReport> {
    let first = ensemble.first().ok_or(crate::model::ModelError::EmptyEnsemble)?;
    let idx = manifest.tagged(tag);
    let subset = DatasetManifest::new(manifest.root.clone(), idx.iter().map(|&i| manifest.records[i].clone()).collect());
    let data = PreparedData::load(&subset, first.config())?;
    let inputs: Vec<&SignInput> = data.inputs.iter().collect();
    evaluate(ensemble, &inputs, &data.targets, allow_constant)
}

pub fn load_ensemble(paths: &[PathBuf]) -> Result<Vec<SignModel>> {
    paths.iter().map(|p| Ok(SignModel::load(p)?)).collect()
}

/// The fold checkpoints in `dir`, in fold order.
pub fn checkpoint_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PipelineError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ckpt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(PipelineError::Manifest(format!("no .ckpt files in {}", dir.display())));
    }
    Ok(paths)
}

pub fn save_report(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report).map_err(|e| PipelineError::Manifest(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
