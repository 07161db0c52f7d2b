mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use exit::Failure;

/// Speckle simulation, despeckling networks and their evaluation.
#[derive(Debug, Parser)]
#[command(name = "despeckle", version)]
struct Cli {
    /// key = value configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-image evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Directory receiving every output [default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a procedural corpus of clean 64×64 scenes and its manifest.
    Synth {
        #[arg(long, default_value_t = 40)]
        count: usize,
    },
    /// Speckle every image in a manifest.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        /// Noise level (standard deviation of the speckle field).
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Train a model on the manifest's training split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = ModelKind::Cdae)]
        model: ModelKind,
        /// Drop batch normalization from the convolutional model.
        #[arg(long)]
        no_bn: bool,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated training noise levels [default: 0.1 to 1.0].
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Feature maps per convolutional layer.
        #[arg(long)]
        channels: Option<usize>,
        /// Hidden units of the dense autoencoders.
        #[arg(long)]
        hidden: Option<usize>,
    },
    /// Despeckle one image with a trained model.
    Denoise {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to OUT/denoised/<input stem>.pgm.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Clean image to score the input and the estimate against.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Score the Lee filter and trained models on the test split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Comma-separated noise levels [default: 0.1,1.0].
        #[arg(long)]
        sigma: Option<String>,
        /// Use every level from 0.1 to 1.0.
        #[arg(long)]
        sigma_grid: bool,
        /// Lee window side.
        #[arg(long)]
        window: Option<usize>,
        /// Lee noise variance [default: sigma²].
        #[arg(long)]
        noise_var: Option<f64>,
    },
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        /// Number of consecutive seeds starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Images held out for testing when the manifest is untagged.
    #[arg(long)]
    test_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// Convolutional denoising autoencoder on the log image.
    Cdae,
    /// Dense denoising autoencoder.
    Dae,
    /// Dense autoencoder trained to reconstruct clean images.
    Ae,
}

fn apply_data(config: &mut RunConfig, data: &DataArgs) {
    if let Some(m) = &data.manifest {
        config.manifest = Some(m.clone());
    }
    if data.test_count.is_some() {
        config.test_count = data.test_count;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    match &cli.command {
        Command::Synth { .. } | Command::Denoise { .. } | Command::Gradcheck { .. } => {}
        Command::Simulate { data, sigma } => {
            apply_data(&mut config, data);
            if let Some(s) = sigma {
                config.sigma = vec![*s];
            }
        }
        Command::Train {
            data,
            no_bn,
            epochs,
            sigma,
            batch_size,
            learning_rate,
            channels,
            hidden,
            ..
        } => {
            apply_data(&mut config, data);
            if *no_bn {
                config.use_bn = false;
            }
            if let Some(s) = sigma {
                config.sigma = config::parse_sigmas(s)?;
            }
            config.epochs = epochs.unwrap_or(config.epochs);
            config.batch_size = batch_size.unwrap_or(config.batch_size);
            config.learning_rate = learning_rate.unwrap_or(config.learning_rate);
            config.channels = channels.unwrap_or(config.channels);
            config.hidden = hidden.unwrap_or(config.hidden);
        }
        Command::Evaluate {
            data,
            sigma,
            sigma_grid,
            window,
            noise_var,
            ..
        } => {
            apply_data(&mut config, data);
            if let Some(s) = sigma {
                config.sigma = config::parse_sigmas(s)?;
            }
            config.sigma_grid |= *sigma_grid;
            config.window = window.unwrap_or(config.window);
            if noise_var.is_some() {
                config.noise_var = *noise_var;
            }
        }
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = resolve(cli)?;
    match &cli.command {
        Command::Synth { count } => commands::synth(&config, *count),
        Command::Simulate { .. } => commands::simulate(&config),
        Command::Train { model, .. } => commands::train(&config, *model),
        Command::Denoise {
            checkpoint,
            input,
            output,
            reference,
        } => commands::denoise(&config, checkpoint, input, output.as_deref(), reference.as_deref()),
        Command::Evaluate { checkpoint, .. } => commands::evaluate(&config, checkpoint, cli.jobs),
        Command::Gradcheck { seeds, inject_fault } => commands::gradcheck(&config, *seeds, *inject_fault),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            if failure.code == exit::USAGE {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(failure.code)
        }
    }
}
