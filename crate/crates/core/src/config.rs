//! Run configuration: one TOML or JSON document, with environment overrides
//! for endpoints only.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{RemoteEncoderConfig, TrainingConfig};
use crate::error::{Error, Result};
use crate::generate::{builtin_template, GenerationParams, PromptTemplate, DEFAULT_TEMPLATE_ID};
use crate::llm::ChatConfig;
use crate::normalize::DEFAULT_TAU;
use crate::pu::{split_sizes, SpyConfig};
use crate::stage::FewShotPromptConfig;

/// Overrides `chat.base_url`.
pub const BASE_URL_ENV: &str = "WORKFLOW_MINER_BASE_URL";
/// Overrides (or enables) the remote encoder's base URL.
pub const ENCODER_URL_ENV: &str = "WORKFLOW_MINER_ENCODER_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub template_id: u8,
    /// Replaces the built-in pattern for `template_id` when set.
    pub template: Option<String>,
    pub params: GenerationParams,
    /// Paragraph token budget inside the prompt.
    pub max_len: Option<usize>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            template_id: DEFAULT_TEMPLATE_ID,
            template: None,
            params: GenerationParams::default(),
            max_len: Some(512),
        }
    }
}

impl GenerationConfig {
    pub fn template(&self) -> Result<PromptTemplate> {
        match &self.template {
            Some(pattern) => PromptTemplate::new(self.template_id, pattern.clone()),
            None => builtin_template(self.template_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizerConfig {
    pub tau: f64,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig { tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub top_k: usize,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig {
            top_k: crate::analytics::DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_path: Option<PathBuf>,
    pub workdir: PathBuf,
    /// Deterministic backends only: offline generation, keyword stage rules
    /// and the local bag encoder.
    pub offline: bool,
    pub spy: SpyConfig,
    /// Train / validation / test ratios for the paragraph classifier.
    pub split_ratios: [u32; 3],
    pub training: TrainingConfig,
    pub encoder: Option<RemoteEncoderConfig>,
    pub chat: ChatConfig,
    pub generation: GenerationConfig,
    pub normalizer: NormalizerConfig,
    pub stage: FewShotPromptConfig,
    pub analytics: AnalyticsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_path: None,
            workdir: PathBuf::from("work"),
            offline: false,
            spy: SpyConfig::default(),
            split_ratios: [8, 1, 1],
            training: TrainingConfig::default(),
            encoder: None,
            chat: ChatConfig::default(),
            generation: GenerationConfig::default(),
            normalizer: NormalizerConfig::default(),
            stage: FewShotPromptConfig::default(),
            analytics: AnalyticsConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses `.json` files as JSON and anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn apply_env(&mut self) {
        if let Some(url) = std::env::var(BASE_URL_ENV).ok().filter(|u| !u.is_empty()) {
            self.chat.base_url = url;
        }
        if let Some(url) = std::env::var(ENCODER_URL_ENV).ok().filter(|u| !u.is_empty()) {
            self.encoder.get_or_insert_with(RemoteEncoderConfig::default).base_url = url;
        }
    }

    /// One seed for PU sampling, the shallow model, head initialization and
    /// the dataset split.
    pub fn apply_seed(&mut self, seed: u64) {
        self.spy.seed = seed;
        self.spy.shallow.seed = seed;
        self.training.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.spy.validate()?;
        self.training.validate()?;
        split_sizes(10, self.split_ratios)?;
        self.generation.template()?;
        let tau = self.normalizer.tau;
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("normalizer tau must lie in (0, 1], got {tau}")));
        }
        self.stage.validate()?;
        if self.analytics.top_k == 0 {
            return Err(Error::Config("analytics top_k must be at least 1".into()));
        }
        if !self.offline {
            self.chat.validate().map_err(|e| {
                Error::Config(format!("{e}; set [chat] or run with --offline"))
            })?;
            if let Some(enc) = &self.encoder {
                if enc.base_url.is_empty() || enc.batch_size == 0 {
                    return Err(Error::Config("encoder needs a base_url and a positive batch_size".into()));
                }
            }
        }
        Ok(())
    }
}
