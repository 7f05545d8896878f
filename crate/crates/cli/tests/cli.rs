use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mri_uq::data::{DatasetManifest, Split};
use mri_uq::io::read_image;
use mri_uq::recon::snr_db;
use mri_uq::uq::read_sure_csv;
use serde_json::Value;

fn mri_uq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mri-uq"))
        .args(args)
        .env_remove("MRI_UQ_THREADS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mri_uq(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small dataset with 12 test images.
fn dataset(dir: &Path) -> PathBuf {
    let out = dir.join("data");
    PathBuf::from(ok(&["gen", "--n-images", "80", "--ratios", "0.7,0.15,0.15", "--out", s(&out)]))
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn headers(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path).unwrap().headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn default_gen_writes_600_loadable_images() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = PathBuf::from(ok(&["gen", "--out", s(dir.path())]));
    let manifest = DatasetManifest::load(&manifest_path).unwrap();
    assert_eq!(manifest.images.len(), 600);
    for split in Split::ALL {
        let images = manifest.load_split(dir.path(), split).unwrap();
        assert_eq!(images.len(), manifest.count(split));
        assert!(images.iter().all(|x| x.shape() == (32, 32)));
    }
    assert!(dir.path().join("config.json").is_file());
}

#[test]
fn bad_ratios_exit_2_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = mri_uq(&["gen", "--ratios", "0.5,0.2,0.2", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ratio"));
}

#[test]
fn missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = mri_uq(&["train", "--manifest", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = mri_uq(&["recon", "--manifest", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    let out = mri_uq(&["sure"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_thread_count_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_mri-uq"))
        .args(["qq"])
        .env("MRI_UQ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_checkpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let bogus = dir.path().join("bogus.vaep");
    std::fs::write(&bogus, b"not a checkpoint").unwrap();
    let out = mri_uq(&["recon", "--manifest", s(&manifest), "--checkpoint", s(&bogus), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn train_smoke_run_is_reproducible_and_feeds_later_commands() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let train = |name: &str| {
        let out = dir.path().join(name);
        let ckpt = ok(&["train", "--manifest", s(&manifest), "--iterations", "200", "--seed", "3", "--out", s(&out)]);
        (PathBuf::from(ckpt), std::fs::read(out.join("loss.csv")).unwrap())
    };
    let (ckpt, loss_a) = train("a");
    let (_, loss_b) = train("b");
    assert_eq!(loss_a, loss_b);
    let loss = rows(&dir.path().join("a/loss.csv"));
    assert_eq!(loss.len(), 200);
    let echo: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/config.json")).unwrap()).unwrap();
    assert_eq!(echo["iterations"], 200);
    assert_eq!(echo["seed"], 3);

    // Reported SNR matches a recomputation from the written images.
    let recon_dir = dir.path().join("recon");
    let csv_path = PathBuf::from(ok(&[
        "recon",
        "--manifest",
        s(&manifest),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&recon_dir),
    ]));
    let m = DatasetManifest::load(&manifest).unwrap();
    let truth = m.load_split(manifest.parent().unwrap(), Split::Test).unwrap();
    let recs = rows(&csv_path);
    assert_eq!(recs.len(), truth.len());
    for (rec, x0) in recs.iter().zip(&truth) {
        let x_hat = read_image(recon_dir.join("recon").join(format!("{}.cimg", &rec[0]))).unwrap();
        let reported: f64 = rec[1].parse().unwrap();
        let recomputed = snr_db(&x_hat, x0).unwrap();
        // images are stored as f32
        assert!((reported - recomputed).abs() < 1e-4, "{reported} vs {recomputed}");
    }

    // Collapsed posterior: every draw is identical.
    let map_dir = dir.path().join("map");
    let summary = ok(&[
        "map",
        "--manifest",
        s(&manifest),
        "--checkpoint",
        s(&ckpt),
        "--k",
        "2",
        "--sigma-zero",
        "--out",
        s(&map_dir),
    ]);
    let summary: Value = serde_json::from_slice(&std::fs::read(summary).unwrap()).unwrap();
    assert_eq!(summary["variance"]["max"], 0.0);

    // Emitted maps satisfy error = bias² + variance.
    let summary = ok(&[
        "map",
        "--manifest",
        s(&manifest),
        "--checkpoint",
        s(&ckpt),
        "--k",
        "16",
        "--index",
        "3",
        "--out",
        s(&map_dir),
    ]);
    let stem = summary.strip_suffix("_summary.json").unwrap().to_string();
    let summary: Value = serde_json::from_slice(&std::fs::read(&summary).unwrap()).unwrap();
    let mean = |key: &str| summary[key]["mean"].as_f64().unwrap();
    assert!(mean("variance") > 0.0);
    assert!((mean("error") - mean("bias_sq") - mean("variance")).abs() < 1e-12);
    for layer in ["mean", "variance", "bias_sq", "error"] {
        assert!(Path::new(&format!("{stem}_{layer}.pgm")).is_file());
    }

    // Correlation summary matches an OLS fit of the emitted table.
    let sure_dir = dir.path().join("sure");
    let csv_path = PathBuf::from(ok(&[
        "sure",
        "--manifest",
        s(&manifest),
        "--checkpoint",
        s(&ckpt),
        "--probes",
        "2",
        "--out",
        s(&sure_dir),
    ]));
    let table = read_sure_csv(&csv_path).unwrap();
    let x: Vec<f64> = table.iter().map(|r| r.sure_full).collect();
    let y: Vec<f64> = table.iter().map(|r| r.mse.unwrap()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let corr: Value = serde_json::from_slice(&std::fs::read(sure_dir.join("correlation.json")).unwrap()).unwrap();
    let r2 = corr[0]["r_squared"].as_f64().unwrap();
    assert!((r2 - sxy * sxy / (sxx * syy)).abs() < 1e-9);
}

#[test]
fn identity_recon_reproduces_zero_filled_input() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"input_mode": "zero-filled", "cases": 5}"#).unwrap();
    let out = dir.path().join("recon");
    let csv_path = ok(&[
        "recon",
        "--config",
        s(&config),
        "--identity",
        "--manifest",
        s(&manifest),
        "--out",
        s(&out),
    ]);
    let recs = rows(Path::new(&csv_path));
    assert_eq!(recs.len(), 5);
    for r in &recs {
        assert_eq!(&r[1], &r[3]);
    }
    let echo: Value = serde_json::from_slice(&std::fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["input_mode"], "zero-filled");
    assert_eq!(echo["identity"], true);
}

#[test]
fn identity_sure_rows_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let out = dir.path().join("sure");
    let csv_path = ok(&[
        "sure",
        "--identity",
        "--sweep",
        "--probes",
        "3",
        "--manifest",
        s(&manifest),
        "--out",
        s(&out),
    ]);
    assert_eq!(
        headers(Path::new(&csv_path)),
        ["case_id", "accel", "lambda", "n_rb", "sigma2", "rss", "dof", "sure", "sure_full", "sure_db", "mse", "snr_db"]
    );
    let table = read_sure_csv(&csv_path).unwrap();
    assert_eq!(table.len(), 4 * 12);
    assert!(table.iter().all(|r| r.sure == 0.0 && r.rss == 0.0));
    let ids: Vec<&str> = table[..12].iter().map(|r| r.case_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn qq_tables_compare_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let out = dir.path().join("qq");
    let stats = ok(&["qq", "--manifest", s(&manifest), "--out", s(&out)]);
    let recs = rows(Path::new(&stats));
    assert_eq!(recs.len(), 8);
    for pair in recs.chunks(2) {
        let (plain, comp) = (&pair[0], &pair[1]);
        assert_eq!((&plain[1], &comp[1]), ("zero_filled", "compensated"));
        let kurt: f64 = comp[6].parse().unwrap();
        assert!(kurt.is_finite() && plain[6].parse::<f64>().unwrap().is_finite());
    }
    let at4 = &recs[2..4];
    let abs_mean = |r: &csv::StringRecord| r[3].parse::<f64>().unwrap().abs();
    assert!(abs_mean(&at4[1]) < abs_mean(&at4[0]));
    assert!(!rows(&out.join("qq.csv")).is_empty());
    assert!(!rows(&out.join("histogram.csv")).is_empty());
}

#[test]
fn full_sampling_without_noise_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"accelerations": [1.0], "noise_std": 0.0}"#).unwrap();
    let out = dir.path().join("qq");
    let stats = ok(&["qq", "--config", s(&config), "--manifest", s(&manifest), "--out", s(&out)]);
    for r in rows(Path::new(&stats)) {
        assert_eq!(&r[7], "true", "{r:?}");
    }
}
