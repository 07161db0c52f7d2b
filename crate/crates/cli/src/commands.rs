use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use despeckle::baseline::LeeFilter;
use despeckle::dataio::{self, SavedModel};
use despeckle::metrics::{self, Psnr};
use despeckle::model::{self, Cdae, CdaeConfig, Dae, DaeConfig, DaeObjective, Despeckler, TrainConfig};
use despeckle::nn::AdamConfig;
use despeckle::rng::derive_seed;
use despeckle::speckle::{self, SpeckleConfig};
use despeckle::synthetic::{site_series, SiteConfig};
use despeckle::Tensor;
use log::{info, warn};

use crate::config::RunConfig;
use crate::exit::{self, Failure};
use crate::ModelKind;

// Independent streams derived from the run seed.
const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

const DEFAULT_EVAL_SIGMAS: [f64; 2] = [0.1, 1.0];

/// Report order of trained models, after the Lee filter.
const METHOD_ORDER: [&str; 4] = ["ae", "dae", "cdae", "cdae_bn"];

fn prepare_out(config: &RunConfig, command: &str) -> Result<(), Failure> {
    fs::create_dir_all(&config.out)?;
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(config.out.join("run.log"))?;
    writeln!(log, "[{command}]\n{}", config.render())?;
    Ok(())
}

fn manifest_path(config: &RunConfig) -> Result<&Path, Failure> {
    let path = config
        .manifest
        .as_deref()
        .ok_or_else(|| Failure::usage("a manifest is required (--manifest or manifest = ...)"))?;
    if !path.is_file() {
        return Err(Failure::usage(format!("manifest {} not found", path.display())));
    }
    Ok(path)
}

fn split(config: &RunConfig) -> Result<(Vec<PathBuf>, Vec<PathBuf>), Failure> {
    let manifest = dataio::load_manifest(manifest_path(config)?)?;
    let test_count = config.test_count_for(manifest.entries.len());
    Ok(dataio::split_dataset(&manifest, test_count, config.seed)?)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

pub fn synth(config: &RunConfig, count: usize) -> Result<(), Failure> {
    if count == 0 {
        return Err(Failure::usage("--count must be positive"));
    }
    prepare_out(config, "synth")?;
    let dir = config.out.join("images");
    fs::create_dir_all(&dir)?;
    let mut manifest = String::new();
    for (i, image) in site_series(&SiteConfig::default(), count, config.seed)?.iter().enumerate() {
        let name = format!("site_{i:03}.pgm");
        dataio::save_image(image, &dir.join(&name))?;
        manifest.push_str(&format!("images/{name}\n"));
    }
    let path = config.out.join("manifest.txt");
    fs::write(&path, manifest)?;
    println!("wrote {count} images and {}", path.display());
    Ok(())
}

pub fn simulate(config: &RunConfig) -> Result<(), Failure> {
    let sigma = match config.sigma.as_slice() {
        [s] => *s,
        [] => return Err(Failure::usage("simulate needs --sigma")),
        _ => return Err(Failure::usage("simulate takes a single sigma")),
    };
    let manifest = dataio::load_manifest(manifest_path(config)?)?;
    prepare_out(config, "simulate")?;
    let dir = config.out.join("noisy");
    fs::create_dir_all(&dir)?;
    for (i, entry) in manifest.entries.iter().enumerate() {
        let clean = dataio::load_image(&entry.path)?;
        let seed = derive_seed(config.seed, i as u64);
        let pair = speckle::simulate(&clean, &SpeckleConfig::new(sigma, seed)?)?;
        let clipped = pair.noisy.data().iter().filter(|&&v| v > 1.0).count();
        let noisy = pair.noisy.map(|v| v.clamp(0.0, 1.0));
        let psnr = metrics::psnr(&clean, &noisy)?;

        let base = dir.join(format!("{i:04}_{}", stem(&entry.path)));
        dataio::save_image(&noisy, &base.with_extension("pgm"))?;
        let meta = format!(
            "source = {}\nsigma = {sigma}\nseed = {seed}\nclipped_pixels = {clipped}\npsnr_db = {psnr:.4}\n",
            entry.path.display()
        );
        fs::write(base.with_extension("txt"), meta)?;
    }
    println!("speckled {} images at sigma {sigma} into {}", manifest.entries.len(), dir.display());
    Ok(())
}

fn build_model(config: &RunConfig, kind: ModelKind) -> Result<SavedModel, Failure> {
    let seed = derive_seed(config.seed, INIT_STREAM);
    Ok(match kind {
        ModelKind::Cdae => Cdae::new(CdaeConfig::full(config.channels, config.use_bn), seed)?.into(),
        ModelKind::Dae | ModelKind::Ae => {
            let objective = if kind == ModelKind::Dae {
                DaeObjective::Denoise
            } else {
                DaeObjective::Reconstruct
            };
            let dae_config = DaeConfig {
                side: dataio::SIDE,
                hidden: config.hidden,
                objective,
            };
            Dae::new(dae_config, seed)?.into()
        }
    })
}

pub fn train(config: &RunConfig, kind: ModelKind) -> Result<(), Failure> {
    let (train_paths, _) = split(config)?;
    if train_paths.len() < config.batch_size {
        return Err(Failure::usage(format!(
            "{} training images, fewer than the batch size {}",
            train_paths.len(),
            config.batch_size
        )));
    }
    prepare_out(config, "train")?;
    let images = dataio::load_images(&train_paths)?;
    let train_config = TrainConfig {
        sigmas: if config.sigma.is_empty() {
            speckle::sigma_grid()
        } else {
            config.sigma.clone()
        },
        batch_size: config.batch_size,
        epochs: config.epochs,
        adam: AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        seed: derive_seed(config.seed, TRAIN_STREAM),
        validation_fraction: 0.0,
    };

    let mut saved = build_model(config, kind)?;
    let trace = match &mut saved {
        SavedModel::Cdae(m) => model::train(m, &images, &train_config)?,
        SavedModel::Dae(m) => model::train(m, &images, &train_config)?,
    };
    let label = saved.label();
    let checkpoint = config.out.join(format!("{label}.ckpt"));
    dataio::save_checkpoint(&saved, &checkpoint)?;
    fs::write(config.out.join(format!("{label}_trace.csv")), trace.to_csv())?;

    match trace.epochs.last() {
        Some(last) => println!(
            "{label}: {} epochs, initial loss {:.6e}, final loss {:.6e}",
            trace.epochs.len(),
            trace.epochs[0].train_loss,
            last.train_loss
        ),
        None => println!("{label}: no epochs run, initial weights saved"),
    }
    println!("checkpoint {}", checkpoint.display());
    Ok(())
}

fn score_line(label: &str, reference: &Tensor, image: &Tensor) -> Result<String, Failure> {
    let psnr: Psnr = metrics::psnr(reference, image)?;
    let ssim = metrics::ssim(reference, image)?;
    Ok(format!("{label:<10} {psnr:>10.3} {ssim:>8.4}"))
}

pub fn denoise(
    config: &RunConfig,
    checkpoint: &Path,
    input: &Path,
    output: Option<&Path>,
    reference: Option<&Path>,
) -> Result<(), Failure> {
    let model = dataio::load_checkpoint(checkpoint)?;
    let noisy = dataio::resize_to_64(&dataio::load_image(input)?)?;
    let estimate = model.despeckle(&noisy, f64::NAN)?;
    let output = match output {
        Some(p) => p.to_path_buf(),
        None => config.out.join("denoised").join(format!("{}.pgm", stem(input))),
    };
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    dataio::save_image(&estimate, &output)?;
    println!("wrote {}", output.display());

    if let Some(reference) = reference {
        let clean = dataio::resize_to_64(&dataio::load_image(reference)?)?;
        println!("{:<10} {:>10} {:>8}", "method", "PSNR dB", "SSIM");
        println!("{}", score_line(metrics::NOISY_LABEL, &clean, &noisy)?);
        println!("{}", score_line(&model.label(), &clean, &estimate)?);
    }
    Ok(())
}

fn method_rank(label: &str) -> usize {
    METHOD_ORDER
        .iter()
        .position(|m| *m == label)
        .unwrap_or(METHOD_ORDER.len())
}

pub fn evaluate(config: &RunConfig, checkpoints: &[PathBuf], jobs: usize) -> Result<(), Failure> {
    let (_, test_paths) = split(config)?;
    if test_paths.is_empty() {
        return Err(Failure::usage("the test split is empty"));
    }
    let sigmas = if !config.sigma.is_empty() {
        config.sigma.clone()
    } else if config.sigma_grid {
        speckle::sigma_grid()
    } else {
        DEFAULT_EVAL_SIGMAS.to_vec()
    };
    prepare_out(config, "evaluate")?;

    let mut models = Vec::new();
    for path in checkpoints {
        if !path.is_file() {
            warn!("checkpoint {} not found; skipping", path.display());
            continue;
        }
        models.push(dataio::load_checkpoint(path)?);
    }
    models.sort_by_key(|m| method_rank(&m.label()));

    let lee = LeeFilter {
        window: config.window,
        noise_var: config.noise_var,
    };
    let mut methods: Vec<&dyn Despeckler> = vec![&lee];
    methods.extend(models.iter().map(|m| m as &dyn Despeckler));

    let clean = dataio::load_images(&test_paths)?;
    info!("evaluating {} methods on {} images", methods.len(), clean.len());
    let corpus = config
        .manifest
        .as_ref()
        .map(|m| m.display().to_string())
        .unwrap_or_default();
    let report = metrics::evaluate_corpus_jobs(
        &methods,
        &clean,
        &sigmas,
        derive_seed(config.seed, EVAL_STREAM),
        &corpus,
        jobs,
    )?;
    fs::write(config.out.join("report.csv"), report.to_csv())?;
    fs::write(config.out.join("report_per_image.csv"), report.to_per_image_csv())?;
    print!("{report}");
    Ok(())
}

pub fn gradcheck(config: &RunConfig, seeds: u64, inject_fault: bool) -> Result<(), Failure> {
    if seeds == 0 {
        return Err(Failure::usage("--seeds must be positive"));
    }
    let mut worst: Option<(String, f64)> = None;
    for seed in config.seed..config.seed + seeds {
        for suite in model::gradient_suites(seed, inject_fault)? {
            let report = &suite.report;
            println!(
                "{:<10} seed {seed:<4} max rel err {:.3e}  {}",
                suite.name,
                report.max_rel_error(),
                if report.passed { "pass" } else { "FAIL" }
            );
            if report.passed {
                continue;
            }
            println!("{report}");
            if let Some(group) = report.worst() {
                if worst.as_ref().is_none_or(|(_, e)| group.max_rel_error > *e) {
                    worst = Some((format!("{} / {} (seed {seed})", suite.name, group.name), group.max_rel_error));
                }
            }
        }
    }
    match worst {
        None => {
            println!("all gradient checks passed");
            Ok(())
        }
        Some((name, err)) => Err(Failure::new(
            exit::GRADIENT,
            format!("gradient check failed; worst offender {name} with relative error {err:.3e}"),
        )),
    }
}
