//! `egain` — dataset generation, GAN pretraining, inversion training,
//! inversion and evaluation from one binary.
//!
//! Exit codes: 0 success, 1 runtime or partial failure, 2 validation,
//! 3 numeric divergence.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use egain_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "egain", version, about = "Layered-latent GAN inversion with wavelet synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a deterministic toy-face dataset and its manifest.
    MakeData {
        /// Output directory (images/ + manifest.json are created inside).
        #[arg(long)]
        out: PathBuf,
        /// Number of images.
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Square image size; must be a power of two >= 16.
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        /// Dataset seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Adversarially pretrain the wavelet generator on a dataset.
    Pretrain {
        /// Path to manifest.json.
        #[arg(long)]
        data: PathBuf,
        /// Optional TOML or JSON config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoint, log and resolved config.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: config::Overrides,
    },
    /// Train the inversion encoders against a frozen pretrained generator.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pretrained generator checkpoint.
        #[arg(long)]
        gan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: config::Overrides,
    },
    /// Invert one image: writes y0.png, y.png, delta.png and codes.json.
    Invert {
        /// Inversion checkpoint.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invert a dataset and write metrics.csv / metrics.json / grid.png.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare metric reports (metrics.json files) across models.
    Compare {
        /// Two or more report paths.
        #[arg(long, num_args = 2.., required = true)]
        reports: Vec<PathBuf>,
        /// Optional directory for comparison.csv / comparison.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Validation(_)
        | Error::CheckpointVersion { .. }
        | Error::CheckpointIncompatible(_) => 2,
        Error::Numeric { .. } => 3,
        Error::Io { .. }
        | Error::Decode { .. }
        | Error::DegenerateInput(_)
        | Error::DegenerateEmbedding
        | Error::CheckpointCorrupt(_) => 1,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::MakeData { out, n, resolution, seed } => {
            commands::make_data(&out, n, resolution, seed)?;
            Ok(0)
        }
        Command::Pretrain { data, config, out, overrides } => {
            commands::pretrain(&data, config.as_deref(), &out, &overrides)?;
            Ok(0)
        }
        Command::Train { data, config, gan, out, overrides } => {
            commands::train(&data, config.as_deref(), &gan, &out, &overrides)?;
            Ok(0)
        }
        Command::Invert { model, image, out } => {
            commands::invert(&model, &image, &out)?;
            Ok(0)
        }
        Command::Evaluate { model, data, out } => commands::evaluate(&model, &data, &out),
        Command::Compare { reports, out } => {
            commands::compare(&reports, out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
