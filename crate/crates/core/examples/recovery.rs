//! Runs the synthetic recovery experiment and prints the metrics.
//! Settings come from `key=value` arguments: `folds`, `epochs`, `lr0`,
//! `seed`, `train`, `test`, and any model config key.

use std::time::Instant;

use sign_core::model::SignConfig;
use sign_core::pipeline::{generate_synthetic, recovery_experiment, SyntheticSpec, TrainOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = SyntheticSpec::default();
    let mut cfg = SignConfig::default();
    let mut opts = TrainOptions::default();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("expected key=value")?;
        match k {
            "folds" => opts.folds = v.parse()?,
            "epochs" => opts.epochs = v.parse()?,
            "lr0" => opts.lr0 = v.parse()?,
            "seed" => {
                opts.seed = v.parse()?;
                spec.seed = opts.seed;
            }
            "train" => spec.train_count = v.parse()?,
            "test" => spec.test_count = v.parse()?,
            "verbose" => opts.verbose = v.parse()?,
            _ => cfg.set(k, v)?,
        }
    }
    let dir = tempfile::tempdir()?;
    let t = Instant::now();
    let data = generate_synthetic(&spec, dir.path())?;
    eprintln!("generated {} records in {:.1?}", data.manifest.len(), t.elapsed());
    let t = Instant::now();
    let r = recovery_experiment(&data.manifest, &data.truth, &cfg, &opts)?;
    eprintln!("trained in {:.1?}", t.elapsed());
    println!(
        "mse {:.4} baseline {:.4} pearson {:?}",
        r.trained.test_mse,
        r.trained.baseline_mse.unwrap_or(f64::NAN),
        r.trained.test_pearson
    );
    println!("control mse {:.4} pearson {:?}", r.control.test_mse, r.control.test_pearson);
    println!(
        "recovery trained {:.4} control {:.4} wins {}/{}",
        r.trained_mean,
        r.control_mean,
        r.wins,
        r.trained_scores.len()
    );
    for f in &r.trained.folds {
        let h = &f.loss_history;
        println!("fold {} loss {:.4} -> {:.4} val {:?}", f.fold, h[0], h[h.len() - 1], f.validation_mse);
    }
    Ok(())
}
