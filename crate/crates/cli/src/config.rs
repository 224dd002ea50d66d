//! Run configuration: model, generator, optimiser and bookkeeping settings
//! in one strict JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tride_core::losses::LossWeights;
use tride_core::synth::GenParams;
use tride_core::ModelConfig;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub base_lr: f64,
    /// Exponent of the polynomial decay.
    pub power: f64,
    pub steps: u64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            base_lr: 1e-4,
            power: 0.9,
            steps: 3000,
            batch_size: 8,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSizes {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Render every test layout under all three weathers (3·n_test files),
    /// so per-weather comparisons share scene content.
    pub paired_test_weather: bool,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            n_train: 256,
            n_val: 32,
            n_test: 64,
            paired_test_weather: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    /// Random horizontal flips (image, depths, radar and regional text).
    pub flip: bool,
    /// Validate (and maybe save the best checkpoint) every this many steps.
    pub val_every: u64,
    /// Use at most this many validation scenes (all when absent).
    pub val_limit: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            flip: true,
            val_every: 250,
            val_limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub data: GenParams,
    pub dataset: SplitSizes,
    pub optim: OptimConfig,
    pub loss: LossWeights,
    pub train: TrainOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            model: ModelConfig::default(),
            data: GenParams::default(),
            dataset: SplitSizes::default(),
            optim: OptimConfig::default(),
            loss: LossWeights::default(),
            train: TrainOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            msg: e.to_string(),
        })?;
        cfg.validate().map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.data.validate()?;
        let o = &self.optim;
        if o.steps == 0 || o.batch_size == 0 {
            return Err(CliError::contract("optim.steps and optim.batch_size must be positive"));
        }
        if !(o.base_lr > 0.0) || !(o.power >= 0.0) {
            return Err(CliError::contract("optim.base_lr must be positive and optim.power non-negative"));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(CliError::contract("Adam betas must lie in [0, 1) and eps must be positive"));
        }
        if self.loss.w_depth < 0.0 || self.loss.w_cls < 0.0 {
            return Err(CliError::contract("loss weights must be non-negative"));
        }
        if self.train.val_every == 0 {
            return Err(CliError::contract("train.val_every must be positive"));
        }
        Ok(())
    }
}
