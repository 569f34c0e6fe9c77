//! Training-config flag overrides: every config field can be set on the
//! command line under the same name it has in the file.

use std::path::PathBuf;

use clap::Args;
use twodpo_core::trainer::{Method, TrainingConfig};
use twodpo_core::RejectedRewardMode;

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    Dpo,
    OneDDpo,
    TwoDDpo,
    TwoDDpoGrouped,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Dpo => Method::Dpo,
            MethodArg::OneDDpo => Method::OneDDpo,
            MethodArg::TwoDDpo => Method::TwoDDpo,
            MethodArg::TwoDDpoGrouped => Method::TwoDDpoGrouped,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum RejectedModeArg {
    Raw,
    Inverted,
}

impl From<RejectedModeArg> for RejectedRewardMode {
    fn from(m: RejectedModeArg) -> RejectedRewardMode {
        match m {
            RejectedModeArg::Raw => RejectedRewardMode::Raw,
            RejectedModeArg::Inverted => RejectedRewardMode::Inverted,
        }
    }
}

/// Flags mirroring the config file fields.
#[derive(Debug, Clone, Args, Default)]
pub struct ConfigOverrides {
    /// Config file to start from (defaults fill anything unset).
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub beta_target: Option<f64>,
    #[arg(long)]
    pub sft_coeff: Option<f64>,
    /// Five comma-separated aspect weights summing to 1.
    #[arg(long, value_delimiter = ',', num_args = 5)]
    pub weights: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub rejected_mode: Option<RejectedModeArg>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub grad_accum: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub logging_interval: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub sample_temperature: Option<f64>,
    #[arg(long)]
    pub sample_top_p: Option<f64>,
    #[arg(long)]
    pub samples_per_instruction: Option<usize>,
    #[arg(long)]
    pub max_sample_tokens: Option<usize>,
    #[arg(long)]
    pub sft_epochs: Option<usize>,
    #[arg(long)]
    pub sft_batch_size: Option<usize>,
    #[arg(long)]
    pub sft_learning_rate: Option<f64>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub init_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl ConfigOverrides {
    /// Load the base config (file or defaults) and apply every flag on top.
    pub fn resolve(&self) -> anyhow::Result<TrainingConfig> {
        let mut config = match &self.config {
            Some(path) => TrainingConfig::load(path)?,
            None => TrainingConfig::default(),
        };
        if let Some(v) = self.method {
            config.method = v.into();
        }
        if let Some(v) = self.beta_target {
            config.beta_target = v;
        }
        if let Some(v) = self.sft_coeff {
            config.sft_coeff = v;
        }
        if let Some(v) = &self.weights {
            let mut w = [0.0; 5];
            w.copy_from_slice(v);
            config.weights = w;
        }
        if let Some(v) = self.rejected_mode {
            config.rejected_mode = v.into();
        }
        if let Some(v) = self.steps {
            config.steps = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.grad_accum {
            config.grad_accum = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = self.logging_interval {
            config.logging_interval = v;
        }
        if let Some(v) = self.dim {
            config.dim = v;
        }
        if let Some(v) = self.hidden {
            config.hidden = v;
        }
        if let Some(v) = self.window {
            config.window = v;
        }
        if let Some(v) = self.sample_temperature {
            config.sample_temperature = v;
        }
        if let Some(v) = self.sample_top_p {
            config.sample_top_p = v;
        }
        if let Some(v) = self.samples_per_instruction {
            config.samples_per_instruction = v;
        }
        if let Some(v) = self.max_sample_tokens {
            config.max_sample_tokens = v;
        }
        if let Some(v) = self.sft_epochs {
            config.sft_epochs = v;
        }
        if let Some(v) = self.sft_batch_size {
            config.sft_batch_size = v;
        }
        if let Some(v) = self.sft_learning_rate {
            config.sft_learning_rate = v;
        }
        if let Some(v) = &self.dataset {
            config.dataset = Some(v.clone());
        }
        if let Some(v) = &self.vocab {
            config.vocab = Some(v.clone());
        }
        if let Some(v) = &self.init_checkpoint {
            config.init_checkpoint = Some(v.clone());
        }
        if let Some(v) = &self.output_dir {
            config.output_dir = Some(v.clone());
        }
        config.validate()?;
        Ok(config)
    }
}
