//! Run configuration: a human-readable TOML file with one section per
//! subsystem, validated on load, with a stable content hash that names the
//! run directory.

use std::path::Path;

use midl_core::agent::AgentConfig;
use midl_core::ensemble::ModelConfig;
use midl_core::ratio::{ErrorMode, RatioConfig, KL_CLIP, RATIO_CLIP};
use midl_core::toy::ToyMdpSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub dataset_size: usize,
    pub behavior_mean: f64,
    pub behavior_std: f64,
}

impl Default for ToySection {
    fn default() -> Self {
        ToySection {
            dataset_size: 1000,
            behavior_mean: 0.0,
            behavior_std: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub learning_rate: f64,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub networks: usize,
    pub elites: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            learning_rate: m.learning_rate,
            hidden_layers: m.hidden_layers,
            hidden_units: m.hidden_units,
            networks: m.members,
            elites: m.elites,
            batch_size: m.batch_size,
            epochs: m.epochs,
            validation_fraction: m.validation_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    pub model_data_ratio: f64,
    pub discount: f64,
    pub soft_update_tau: f64,
    pub soft_update_period: usize,
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub lambda: f64,
    pub horizon: usize,
    pub penalty_actions: usize,
    pub penalty_state_samples: usize,
    pub g_samples: usize,
    pub error_mode: String,
    pub rollout_period: usize,
    pub rollout_count: usize,
    pub buffer_capacity: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        AgentSection {
            policy_lr: a.actor_lr,
            critic_lr: a.critic_lr,
            alpha_lr: a.alpha_lr,
            batch_size: a.batch_size,
            model_data_ratio: a.model_ratio,
            discount: a.gamma,
            soft_update_tau: a.tau,
            soft_update_period: a.soft_update_period,
            hidden_units: a.hidden_units,
            hidden_layers: a.hidden_layers,
            lambda: a.lambda,
            horizon: a.horizon,
            penalty_actions: a.penalty_actions_per_source,
            penalty_state_samples: a.penalty_state_samples,
            g_samples: a.g_samples,
            error_mode: "kl".to_string(),
            rollout_period: a.rollout_period,
            rollout_count: a.rollout_count,
            buffer_capacity: a.buffer_capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSection {
    pub learning_rate: f64,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub steps_per_refresh: usize,
    /// Fixed clipping ranges; validation rejects departures from them.
    pub kl_clip: [f64; 2],
    pub ratio_clip: [f64; 2],
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        let r = RatioConfig::default();
        DiscriminatorSection {
            learning_rate: r.learning_rate,
            hidden_layers: r.hidden_layers,
            hidden_units: r.hidden_units,
            steps_per_refresh: AgentConfig::default().discriminator_steps,
            kl_clip: [KL_CLIP.0, KL_CLIP.1],
            ratio_clip: [RATIO_CLIP.0, RATIO_CLIP.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub episodes: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection { episodes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: u64,
    pub checkpoint_period: u64,
    pub toy: ToySection,
    pub model: ModelSection,
    pub agent: AgentSection,
    pub discriminator: DiscriminatorSection,
    pub evaluate: EvaluateSection,
}

impl RunConfig {
    pub fn standard() -> Self {
        RunConfig {
            seed: 0,
            iterations: 3000,
            checkpoint_period: 0,
            ..Default::default()
        }
    }

    pub fn from_str_validated(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_validated(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: String| Err(ConfigError::Invalid(msg));
        if self.iterations == 0 {
            return err("iterations must be positive".into());
        }
        if self.toy.dataset_size == 0 {
            return err("toy.dataset_size must be positive".into());
        }
        if self.toy.behavior_std <= 0.0 {
            return err(format!(
                "toy.behavior_std must be positive, got {}",
                self.toy.behavior_std
            ));
        }
        if !(self.agent.discount > 0.0 && self.agent.discount < 1.0) {
            return err(format!(
                "agent.discount must lie in (0, 1), got {}",
                self.agent.discount
            ));
        }
        if !(self.agent.soft_update_tau > 0.0 && self.agent.soft_update_tau < 1.0) {
            return err(format!(
                "agent.soft_update_tau must lie in (0, 1), got {}",
                self.agent.soft_update_tau
            ));
        }
        if !(0.0..=1.0).contains(&self.agent.model_data_ratio) {
            return err(format!(
                "agent.model_data_ratio must lie in [0, 1], got {}",
                self.agent.model_data_ratio
            ));
        }
        if self.agent.lambda < 0.0 {
            return err(format!("agent.lambda must be nonnegative, got {}", self.agent.lambda));
        }
        if self.agent.horizon == 0 {
            return err("agent.horizon must be at least 1".into());
        }
        if self.agent.penalty_actions == 0 {
            return err("agent.penalty_actions must be at least 1".into());
        }
        if self.agent.g_samples == 0 {
            return err("agent.g_samples must be at least 1".into());
        }
        if self.agent.rollout_period == 0 || self.agent.rollout_count == 0 {
            return err("agent rollout period and count must be positive".into());
        }
        for (name, lr) in [
            ("agent.policy_lr", self.agent.policy_lr),
            ("agent.critic_lr", self.agent.critic_lr),
            ("agent.alpha_lr", self.agent.alpha_lr),
            ("model.learning_rate", self.model.learning_rate),
            ("discriminator.learning_rate", self.discriminator.learning_rate),
        ] {
            if !(lr > 0.0) || !lr.is_finite() {
                return err(format!("{name} must be a positive finite number, got {lr}"));
            }
        }
        if self.model.elites > self.model.networks || self.model.elites == 0 {
            return err(format!(
                "model.elites must lie in [1, networks={}], got {}",
                self.model.networks, self.model.elites
            ));
        }
        if !(0.0..1.0).contains(&self.model.validation_fraction) {
            return err("model.validation_fraction must lie in [0, 1)".into());
        }
        if self.error_mode().is_none() {
            return err(format!(
                "agent.error_mode must be `kl` or `literal-ratio`, got `{}`",
                self.agent.error_mode
            ));
        }
        if self.discriminator.kl_clip != [KL_CLIP.0, KL_CLIP.1] {
            return err(format!(
                "discriminator.kl_clip is fixed at [{:e}, {}]",
                KL_CLIP.0, KL_CLIP.1
            ));
        }
        if self.discriminator.ratio_clip != [RATIO_CLIP.0, RATIO_CLIP.1] {
            return err(format!(
                "discriminator.ratio_clip is fixed at [{:e}, {}]",
                RATIO_CLIP.0, RATIO_CLIP.1
            ));
        }
        if self.evaluate.episodes == 0 {
            return err("evaluate.episodes must be positive".into());
        }
        Ok(())
    }

    pub fn error_mode(&self) -> Option<ErrorMode> {
        match self.agent.error_mode.as_str() {
            "kl" => Some(ErrorMode::Kl),
            "literal-ratio" => Some(ErrorMode::LiteralRatio),
            _ => None,
        }
    }

    pub fn toy_spec(&self) -> ToyMdpSpec {
        ToyMdpSpec {
            action_box: (-1.0, 1.0),
            behavior_mean: self.toy.behavior_mean,
            behavior_std: self.toy.behavior_std,
            dataset_size: self.toy.dataset_size,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            members: self.model.networks,
            elites: self.model.elites,
            hidden_layers: self.model.hidden_layers,
            hidden_units: self.model.hidden_units,
            learning_rate: self.model.learning_rate,
            batch_size: self.model.batch_size,
            epochs: self.model.epochs,
            validation_fraction: self.model.validation_fraction,
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.agent.discount,
            tau: self.agent.soft_update_tau,
            actor_lr: self.agent.policy_lr,
            critic_lr: self.agent.critic_lr,
            alpha_lr: self.agent.alpha_lr,
            batch_size: self.agent.batch_size,
            model_ratio: self.agent.model_data_ratio,
            lambda: self.agent.lambda,
            horizon: self.agent.horizon,
            penalty_actions_per_source: self.agent.penalty_actions,
            g_samples: self.agent.g_samples,
            error_mode: self.error_mode().expect("validated"),
            penalty_state_samples: self.agent.penalty_state_samples,
            rollout_period: self.agent.rollout_period,
            rollout_count: self.agent.rollout_count,
            buffer_capacity: self.agent.buffer_capacity,
            discriminator_steps: self.discriminator.steps_per_refresh,
            hidden_units: self.agent.hidden_units,
            hidden_layers: self.agent.hidden_layers,
            soft_update_period: self.agent.soft_update_period,
        }
    }

    pub fn ratio_config(&self) -> RatioConfig {
        RatioConfig {
            hidden_units: self.discriminator.hidden_units,
            hidden_layers: self.discriminator.hidden_layers,
            learning_rate: self.discriminator.learning_rate,
            batch_size: self.agent.batch_size,
        }
    }

    /// FNV-1a over the canonical serialization; names the run directory.
    pub fn content_hash(&self) -> u64 {
        fnv1a(self.to_toml().as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
