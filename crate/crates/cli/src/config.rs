use std::path::Path;

use salstruct_core::fov::FovPolicy;
use salstruct_core::nn::{Architecture, ModelConfig, TrainConfig};
use serde::Deserialize;

use crate::CliError;

/// Every knob of a run. Values come from defaults, then the config file,
/// then command-line flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub resolution: usize,
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decayed: f64,
    pub decay_epoch: usize,
    pub widths: Vec<usize>,
    pub augment: bool,
    /// Share of each grade in the train split held out for model selection.
    pub val_fraction: f64,
    pub fov_fallback: FovPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            resolution: 64,
            architecture: Architecture::Dual,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_decayed: t.lr_decayed,
            decay_epoch: t.decay_epoch,
            widths: t.model.widths,
            augment: t.augment,
            val_fraction: 0.1,
            fov_fallback: FovPolicy::Error,
        }
    }
}

/// Config-file view: every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub resolution: Option<usize>,
    pub architecture: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub lr_decayed: Option<f64>,
    pub decay_epoch: Option<usize>,
    pub widths: Option<Vec<usize>>,
    pub augment: Option<bool>,
    pub val_fraction: Option<f64>,
    pub fov_fallback: Option<String>,
}

pub fn parse_architecture(s: &str) -> Result<Architecture, CliError> {
    match s {
        "single" => Ok(Architecture::Single),
        "dual" => Ok(Architecture::Dual),
        _ => Err(CliError::Config(format!("architecture must be single or dual, got {s:?}"))),
    }
}

pub fn parse_fov_policy(s: &str) -> Result<FovPolicy, CliError> {
    match s {
        "error" => Ok(FovPolicy::Error),
        "full-frame" => Ok(FovPolicy::FullFrame),
        _ => Err(CliError::Config(format!("fov-fallback must be error or full-frame, got {s:?}"))),
    }
}

impl RunConfig {
    pub fn apply(&mut self, f: &ConfigFile) -> Result<(), CliError> {
        macro_rules! take {
            ($($k:ident),*) => { $( if let Some(v) = f.$k.clone() { self.$k = v; } )* };
        }
        take!(seed, resolution, epochs, batch_size, lr, lr_decayed, decay_epoch, widths, augment, val_fraction);
        if let Some(a) = &f.architecture {
            self.architecture = parse_architecture(a)?;
        }
        if let Some(p) = &f.fov_fallback {
            self.fov_fallback = parse_fov_policy(p)?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut c = Self::default();
        c.apply(&f)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |s: String| Err(CliError::Config(s));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad(format!("widths {:?}", self.widths));
        }
        let d = 1usize << self.widths.len();
        if self.resolution == 0 || !self.resolution.is_multiple_of(d) {
            return bad(format!("resolution {} is not divisible by {d}", self.resolution));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                widths: self.widths.clone(),
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_decayed: self.lr_decayed,
            decay_epoch: self.decay_epoch,
            seed: self.seed,
            augment: self.augment,
            ..TrainConfig::default()
        }
    }
}
