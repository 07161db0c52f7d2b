use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use despeckle::dataio::{load_checkpoint, SavedModel};

fn despeckle(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_despeckle"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = despeckle(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// A fresh output directory holding a synthetic corpus of `count` images.
fn corpus(count: usize) -> (tempfile::TempDir, PathBuf, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&out, &["synth", "--count", &count.to_string()]);
    let manifest = out.join("manifest.txt").to_str().unwrap().to_string();
    (dir, out, manifest)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_at_tiny_sigma_keeps_images_clean() {
    let (_dir, out, manifest) = corpus(6);
    ok(&out, &["simulate", "--manifest", &manifest, "--sigma", "0.01"]);
    let mut sidecars = 0;
    for entry in fs::read_dir(out.join("noisy")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "txt") {
            let text = fs::read_to_string(&path).unwrap();
            let psnr: f64 = text
                .lines()
                .find_map(|l| l.strip_prefix("psnr_db = "))
                .unwrap()
                .parse()
                .unwrap();
            assert!(psnr > 35.0, "{}: {psnr}", path.display());
            assert!(text.contains("sigma = 0.01"));
            assert!(path.with_extension("pgm").is_file());
            sidecars += 1;
        }
    }
    assert_eq!(sidecars, 6);
}

#[test]
fn simulate_is_reproducible() {
    let (dir, out, manifest) = corpus(3);
    let other = dir.path().join("again");
    for o in [&out, &other] {
        ok(o, &["--seed", "4", "simulate", "--manifest", &manifest, "--sigma", "0.5"]);
    }
    for name in ["0000_site_000.pgm", "0002_site_002.pgm", "0001_site_001.txt"] {
        assert_eq!(
            fs::read(out.join("noisy").join(name)).unwrap(),
            fs::read(other.join("noisy").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = despeckle(dir.path(), &["simulate", "--manifest", "absent.txt", "--sigma", "0.1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, "seed = 1\nlearning_rte = 0.1\n").unwrap();
    let o = despeckle(dir.path(), &["--config", p(&config), "gradcheck"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn flags_override_config_and_are_logged() {
    let (dir, out, manifest) = corpus(5);
    let config = dir.path().join("run.cfg");
    fs::write(&config, format!("# toy\nepochs = 7\nchannels = 3\nmanifest = {manifest}\nbatch_size = 2\n")).unwrap();
    ok(&out, &["--config", p(&config), "train", "--epochs", "1"]);
    let log = fs::read_to_string(out.join("run.log")).unwrap();
    let train = log.split("[train]").nth(1).unwrap();
    assert!(train.contains("epochs = 1\n"), "{train}");
    assert!(train.contains("channels = 3\n"));
    let trace = fs::read_to_string(out.join("cdae_bn_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn zero_epochs_saves_initial_weights_and_empty_trace() {
    let (_dir, out, manifest) = corpus(5);
    ok(&out, &["train", "--manifest", &manifest, "--epochs", "0", "--batch-size", "2", "--channels", "3", "--no-bn"]);
    let trace = fs::read_to_string(out.join("cdae_trace.csv")).unwrap();
    assert_eq!(trace, "epoch,train_loss,val_loss,seconds\n");
    match load_checkpoint(&out.join("cdae.ckpt")).unwrap() {
        SavedModel::Cdae(m) => {
            assert_eq!(m.bn_param_count(), 0);
            assert!(!m.config().use_bn);
        }
        SavedModel::Dae(_) => panic!("wrong model kind"),
    }
}

#[test]
fn too_few_training_images_is_rejected() {
    let (_dir, out, manifest) = corpus(4);
    let o = despeckle(&out, &["train", "--manifest", &manifest, "--epochs", "1"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn diverging_training_exits_with_numeric_failure() {
    let (_dir, out, manifest) = corpus(5);
    let o = despeckle(
        &out,
        &["train", "--manifest", &manifest, "--epochs", "20", "--batch-size", "2", "--channels", "3", "--learning-rate", "1e200"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn toy_training_reduces_loss() {
    let (_dir, out, manifest) = corpus(8);
    let stdout = ok(
        &out,
        &["train", "--manifest", &manifest, "--test-count", "0", "--epochs", "50", "--batch-size", "4", "--channels", "8", "--sigma", "0.3"],
    );
    let trace = fs::read_to_string(out.join("cdae_bn_trace.csv")).unwrap();
    let losses: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 50);
    assert!(losses[49] < losses[0], "{stdout}");
    assert!(stdout.contains("final loss"));
}

#[test]
fn denoise_is_repeatable_and_scores_against_reference() {
    let (dir, out, manifest) = corpus(5);
    ok(&out, &["train", "--manifest", &manifest, "--epochs", "2", "--batch-size", "2", "--channels", "3"]);
    let ckpt = out.join("cdae_bn.ckpt");
    let input = out.join("images/site_002.pgm");
    let first = dir.path().join("first.pgm");
    let second = dir.path().join("second.pgm");
    let stdout = ok(&out, &["denoise", "--checkpoint", p(&ckpt), "--input", p(&input), "--output", p(&first), "--reference", p(&input)]);
    ok(&out, &["denoise", "--checkpoint", p(&ckpt), "--input", p(&input), "--output", p(&second)]);
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());

    let noisy_row = stdout.lines().find(|l| l.starts_with("Noisy")).expect("noisy row");
    let fields: Vec<&str> = noisy_row.split_whitespace().collect();
    assert_eq!(fields, ["Noisy", "inf", "1.0000"]);
    assert!(stdout.lines().any(|l| l.starts_with("cdae_bn")));
}

#[test]
fn evaluate_report_layout_and_consistency() {
    let (_dir, out, manifest) = corpus(10);
    ok(&out, &["train", "--manifest", &manifest, "--epochs", "1", "--batch-size", "3", "--channels", "3", "--no-bn"]);
    let missing = out.join("nothing.ckpt");
    let trained = out.join("cdae.ckpt");
    let args = ["evaluate", "--manifest", &manifest, "--test-count", "3", "--checkpoint", p(&missing), "--checkpoint", p(&trained)];
    let o = despeckle(&out, &args);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipping"));

    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let layout: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(
        layout,
        [("Noisy", "0.10"), ("lee", "0.10"), ("cdae", "0.10"), ("Noisy", "1.00"), ("lee", "1.00"), ("cdae", "1.00")]
    );
    let noisy_low: f64 = rows[0][2].parse().unwrap();
    let noisy_high: f64 = rows[3][2].parse().unwrap();
    assert!(noisy_high < noisy_low);

    let per_image = fs::read_to_string(out.join("report_per_image.csv")).unwrap();
    for row in &rows {
        let values: Vec<(f64, f64)> = per_image
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[0] == row[0] && f[1] == row[1])
            .map(|f| (f[3].parse().unwrap(), f[4].parse().unwrap()))
            .collect();
        assert_eq!(values.len(), 3);
        let psnr = values.iter().map(|v| v.0).sum::<f64>() / 3.0;
        let ssim = values.iter().map(|v| v.1).sum::<f64>() / 3.0;
        assert!((psnr - row[2].parse::<f64>().unwrap()).abs() < 1e-5, "{row:?}");
        assert!((ssim - row[3].parse::<f64>().unwrap()).abs() < 1e-5, "{row:?}");
    }
}

#[test]
fn evaluate_does_not_depend_on_jobs() {
    let (dir, out, manifest) = corpus(12);
    let other = dir.path().join("parallel");
    ok(&out, &["evaluate", "--manifest", &manifest, "--test-count", "5", "--sigma", "0.2,0.7"]);
    ok(&other, &["--jobs", "3", "evaluate", "--manifest", &manifest, "--test-count", "5", "--sigma", "0.2,0.7"]);
    assert_eq!(
        fs::read(out.join("report_per_image.csv")).unwrap(),
        fs::read(other.join("report_per_image.csv")).unwrap()
    );
}

#[test]
fn gradcheck_passes_and_catches_a_broken_backward() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["gradcheck", "--seeds", "2"]);
    assert!(stdout.contains("all gradient checks passed"));
    for suite in ["conv", "dense", "relu", "sigmoid", "batchnorm", "cdae_tiny", "dae_tiny"] {
        assert!(stdout.contains(suite), "{suite}");
    }

    let o = despeckle(dir.path(), &["gradcheck", "--inject-fault"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("worst offender"));
}
