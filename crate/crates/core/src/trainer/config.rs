//! Training configuration: one structured file, every field materialized
//! with its default so a run can be reproduced from the echoed copy.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{AspectWeights, RejectedRewardMode, WeightError, DEFAULT_WEIGHTS};

/// Which objective the trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Whole-response pairwise loss.
    Dpo,
    /// Segment-weighted loss restricted to the helpfulness aspect.
    OneDDpo,
    /// Segment-weighted loss over all five aspects.
    TwoDDpo,
    /// Selected segment pairs as independent pairwise groups.
    #[default]
    TwoDDpoGrouped,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dpo => "dpo",
            Method::OneDDpo => "one_d_dpo",
            Method::TwoDDpo => "two_d_dpo",
            Method::TwoDDpoGrouped => "two_d_dpo_grouped",
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("beta_target must be positive, got {0}")]
    BadBeta(f64),
    #[error("sft_coeff must be non-negative, got {0}")]
    BadSftCoeff(f64),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("{field} must be at least {min}")]
    TooSmall { field: &'static str, min: u64 },
    #[error("could not read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not parse config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub method: Method,
    /// Target temperature; the adaptive rule rescales per batch so the mean
    /// effective temperature equals this.
    pub beta_target: f64,
    /// Coefficient on the supervised (chosen-response NLL) term.
    pub sft_coeff: f64,
    /// Aspect weights; single-aspect mode overrides these with
    /// helpfulness-only weights.
    pub weights: [f64; 5],
    pub rejected_mode: RejectedRewardMode,
    pub steps: u64,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub logging_interval: u64,

    // policy shape
    pub dim: usize,
    pub hidden: usize,
    pub window: usize,

    // sampling for iterative rounds
    pub sample_temperature: f64,
    pub sample_top_p: f64,
    pub samples_per_instruction: usize,
    pub max_sample_tokens: usize,

    // supervised warm-up when no initial checkpoint is given
    pub sft_epochs: usize,
    pub sft_batch_size: usize,
    pub sft_learning_rate: f64,

    // paths (resolved by the caller)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            method: Method::TwoDDpoGrouped,
            beta_target: 0.2,
            sft_coeff: 0.1,
            weights: DEFAULT_WEIGHTS,
            rejected_mode: RejectedRewardMode::Raw,
            steps: 700,
            batch_size: 1,
            grad_accum: 8,
            seed: 0,
            learning_rate: 1e-3,
            logging_interval: 10,
            dim: 32,
            hidden: 64,
            window: 8,
            sample_temperature: 0.7,
            sample_top_p: 0.8,
            samples_per_instruction: 4,
            max_sample_tokens: 48,
            sft_epochs: 8,
            sft_batch_size: 8,
            sft_learning_rate: 1e-3,
            dataset: None,
            vocab: None,
            init_checkpoint: None,
            output_dir: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.beta_target > 0.0) {
            return Err(ConfigError::BadBeta(self.beta_target));
        }
        if !(self.sft_coeff >= 0.0) {
            return Err(ConfigError::BadSftCoeff(self.sft_coeff));
        }
        AspectWeights::new(self.weights)?;
        for (field, value, min) in [
            ("steps", self.steps, 1),
            ("batch_size", self.batch_size as u64, 1),
            ("grad_accum", self.grad_accum as u64, 1),
            ("logging_interval", self.logging_interval, 1),
            ("samples_per_instruction", self.samples_per_instruction as u64, 2),
            ("dim", self.dim as u64, 1),
            ("hidden", self.hidden as u64, 1),
            ("window", self.window as u64, 1),
        ] {
            if value < min {
                return Err(ConfigError::TooSmall { field, min });
            }
        }
        Ok(())
    }

    /// Effective aspect weights after the method override.
    pub fn effective_weights(&self) -> Result<AspectWeights, WeightError> {
        match self.method {
            Method::OneDDpo => AspectWeights::new(crate::reward::HELPFULNESS_ONLY_WEIGHTS),
            _ => AspectWeights::new(self.weights),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: TrainingConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Full config with every default materialized, suitable for re-running
    /// the exact same job.
    pub fn to_resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
