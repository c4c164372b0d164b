//! Config resolution: file (TOML or JSON) -> EGAIN_SEED env var -> flags,
//! with later sources winning. The fully resolved config is written next to
//! every run's outputs.

use clap::Args;
use egain_core::trainer::{FusionMode, TrainConfig};
use egain_core::{Error, Result};
use std::path::Path;

#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// Square image size; must be a power of two >= 16.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// internal | external | off
    #[arg(long)]
    pub fusion: Option<FusionMode>,
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    #[arg(long)]
    pub avg_latent_samples: Option<usize>,
}

fn load_file(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_toml = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text)
            .map_err(|e| Error::validation(format!("bad config {}: {e}", path.display())))
    } else {
        serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("bad config {}: {e}", path.display())))
    }
}

/// Resolve the effective config for a command.
pub fn resolve(
    file: Option<&Path>,
    overrides: &Overrides,
    default_learning_rate: f64,
) -> Result<TrainConfig> {
    let mut cfg = match file {
        Some(p) => load_file(p)?,
        None => TrainConfig { learning_rate: default_learning_rate, ..TrainConfig::default() },
    };
    if let Ok(seed) = std::env::var("EGAIN_SEED") {
        cfg.seed = seed
            .parse()
            .map_err(|_| Error::validation(format!("EGAIN_SEED must be an integer, got {seed:?}")))?;
    }
    if let Some(v) = overrides.resolution {
        cfg.resolution = v;
    }
    if let Some(v) = overrides.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = overrides.steps {
        cfg.steps = v;
    }
    if let Some(v) = overrides.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = overrides.seed {
        cfg.seed = v;
    }
    if let Some(v) = overrides.fusion {
        cfg.fusion_mode = v;
    }
    if let Some(v) = overrides.checkpoint_interval {
        cfg.checkpoint_interval = v;
    }
    if let Some(v) = overrides.avg_latent_samples {
        cfg.avg_latent_samples = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_resolved(cfg: &TrainConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("resolved_config.json");
    let json = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(path, e))
}
