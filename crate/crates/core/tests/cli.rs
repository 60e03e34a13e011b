use std::path::Path;
use std::process::{Command, Output};

fn sign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sign")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn enumerate_reports_matching_routes() {
    let out = sign(&["enumerate", "--regions", "3", "--max-len", "2", "--seed", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("paths: 6"));
    let diff: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("difference: "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(diff < 1e-10);
}

#[test]
fn enumerate_reads_instance_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    std::fs::write(
        &path,
        r#"{"affinity": [0, 1, 1, 1, 0, 1, 1, 1, 0], "initial": [1, 0, 0], "mu": [1, 2, 3], "max_len": 2}"#,
    )
    .unwrap();
    let out = sign(&["enumerate", "--instance", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    // region 0 always first, then 1 or 2 with equal odds: 1 + 2.5
    assert!(stdout(&out).contains("path-sum expected log gaze: 3.500000000000000"));
}

#[test]
fn simulate_prints_paths_and_estimate() {
    let out = sign(&["simulate", "--regions", "4", "--max-len", "3", "--viewers", "200", "--show", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("path 1:"));
    assert!(text.contains("monte carlo expected log gaze"));
}

#[test]
fn predict_with_missing_image_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sign_core::model::SignConfig {
        feature_dim: 8,
        cnn_channels: 2,
        mlp_hidden: 8,
        head_hidden: 4,
        depth: 1,
        heads: 2,
        ..Default::default()
    };
    sign_core::model::SignModel::new(cfg, 0)
        .unwrap()
        .save(dir.path().join("fold_00.ckpt"))
        .unwrap();
    let missing = dir.path().join("nowhere.pgm");
    let out = sign(&[
        "predict",
        "--checkpoints",
        dir.path().to_str().unwrap(),
        "--image",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains(missing.to_str().unwrap()), "{}", stderr(&out));

    let empty = tempfile::tempdir().unwrap();
    let out = sign(&["predict", "--checkpoints", empty.path().to_str().unwrap(), "--image", "x.pgm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no .ckpt files"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(sign(&["enumerate", "--max-len", "two"]).status.code(), Some(2));
    assert_eq!(sign(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(sign(&["train"]).status.code(), Some(2));
}

#[test]
fn invalid_instance_exits_with_one() {
    let out = sign(&["enumerate", "--regions", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn gradcheck_passes() {
    let out = sign(&["gradcheck", "--seeds", "0"]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    assert!(!stdout(&out).contains("FAIL"));
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("model.cfg");
    std::fs::write(
        &path,
        "feature_dim = 8\ncnn_channels = 2\nmlp_hidden = 8\nhead_hidden = 4\ndepth = 1\nheads = 2\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn data_train_eval_predict_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    let out = sign(&["gen-data", "--out-dir", &d("data"), "--train", "20", "--test", "5", "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("wrote 25 records"));

    let cfg = write_config(dir.path());
    let manifest = d("data/manifest.jsonl");
    let out = sign(&[
        "train", "--manifest", &manifest, "--config", &cfg, "--epochs", "2", "--folds", "2", "--out-dir", &d("run"),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("test records: 5"));
    assert!(dir.path().join("run/report.json").exists());

    let out = sign(&["eval", "--manifest", &manifest, "--checkpoints", &d("run")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["test_records"], 5);

    let image = d("data/img_00000.pgm");
    let out = sign(&["predict", "--checkpoints", &d("run"), "--image", &image]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("gaze seconds:"));

    let out = sign(&["heatmap", "--checkpoints", &d("run"), "--image", &image, "--out", &d("heat.ppm"), "--blur", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let heat = sign_core::imaging::load_image(d("heat.ppm")).unwrap();
    assert_eq!((heat.height, heat.width, heat.channels), (128, 128, 3));
}
