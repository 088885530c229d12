//! Flat `key = value` experiment configuration.
//!
//! Resolution order, later wins: built-in defaults, the config file, then
//! environment variables named `SUBNETSIM_<KEY>` (upper-case key), then CLI
//! flags. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subnet_core::controlplane::AllocatorConfig;
use subnet_core::env::EnvConfig;
use subnet_core::mappo::TrainConfig;
use subnet_core::radio::{Fading, RadioConfig};
use subnet_core::world::WorldConfig;
use thiserror::Error;

pub const ENV_PREFIX: &str = "SUBNETSIM_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("environment override {var}: {reason}")]
    Env { var: String, reason: String },
    #[error("invalid config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub episodes: usize,
    /// fixed | random | ia | csi-ia | genie | mappo-eval
    pub policy: String,
    /// Actor checkpoint for `mappo-eval`.
    pub checkpoint: Option<String>,
    /// Sample from the trained actor (false) or take its argmax (true).
    pub greedy_eval: bool,
    /// Write the per-slot trajectory CSV.
    pub trace: bool,

    // deployment and traffic
    pub num_subnetworks: usize,
    pub area_side_m: f64,
    pub subnetwork_radius_m: f64,
    pub device_distance_m: f64,
    pub max_speed_mps: f64,
    pub buffer_capacity: u32,
    pub slot_s: f64,
    pub steps_per_episode: u32,
    pub num_channels: usize,

    // radio
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub pathloss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub rayleigh_fading: bool,
    pub noise_figure_db: f64,
    pub noise_temperature_k: f64,
    pub tx_power_min_dbm: f64,
    pub tx_power_max_dbm: f64,
    pub rate_threshold_se: f64,
    pub payload_bytes: u32,

    // controller
    pub allocation_margin_db: f64,
    pub allocator_max_iterations: usize,
    pub allocator_tolerance_w: f64,

    // agents
    pub history_len: usize,
    pub reward_success: f64,
    pub reward_failure: f64,

    // learner
    pub learning_rate: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub ppo_epochs: usize,
    pub clip_eps: f64,
    pub minibatch_size: usize,
    pub memory_length: usize,
    pub sample_frequency: f64,
    pub hidden_widths: Vec<usize>,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    /// 0 disables gradient-norm clipping.
    pub max_grad_norm: f64,
    /// Write a checkpoint every this many episodes (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        let train = TrainConfig::default();
        Self {
            seed: 1,
            episodes: train.episodes,
            policy: "fixed".into(),
            checkpoint: None,
            greedy_eval: false,
            trace: false,

            num_subnetworks: env.world.num_subnetworks,
            area_side_m: env.world.area_side_m,
            subnetwork_radius_m: env.world.subnetwork_radius_m,
            device_distance_m: env.world.device_distance_m,
            max_speed_mps: env.world.speed_mps,
            buffer_capacity: env.world.buffer_capacity,
            slot_s: env.world.slot_s,
            steps_per_episode: env.steps_per_episode,
            num_channels: env.num_channels,

            carrier_hz: env.radio.carrier_hz,
            bandwidth_hz: env.radio.bandwidth_hz,
            pathloss_exponent: env.radio.pathloss_exponent,
            shadowing_sigma_db: env.radio.shadowing_sigma_db,
            rayleigh_fading: env.radio.fading == Fading::Rayleigh,
            noise_figure_db: env.radio.noise_figure_db,
            noise_temperature_k: env.radio.noise_temperature_k,
            tx_power_min_dbm: env.radio.tx_power_min_dbm,
            tx_power_max_dbm: env.radio.tx_power_max_dbm,
            rate_threshold_se: env.radio.rate_threshold_se,
            payload_bytes: (env.radio.payload_bits / 8.0) as u32,

            allocation_margin_db: env.allocator.target_margin_db,
            allocator_max_iterations: env.allocator.max_iterations,
            allocator_tolerance_w: env.allocator.tolerance_w,

            history_len: env.history_len,
            reward_success: env.reward_success,
            reward_failure: env.reward_failure,

            learning_rate: train.learning_rate,
            discount: train.discount,
            gae_lambda: train.gae_lambda,
            ppo_epochs: train.ppo_epochs,
            clip_eps: train.clip_eps,
            minibatch_size: train.minibatch_size,
            memory_length: train.memory_length,
            sample_frequency: train.sample_frequency,
            hidden_widths: train.hidden_widths.clone(),
            value_coef: train.value_coef,
            entropy_coef: train.entropy_coef,
            normalize_advantages: train.normalize_advantages,
            max_grad_norm: train.max_grad_norm.unwrap_or(0.0),
            checkpoint_every: 100,
        }
    }
}

pub const POLICIES: [&str; 6] = ["fixed", "random", "ia", "csi-ia", "genie", "mappo-eval"];

impl ExperimentConfig {
    /// Parses config text (no environment overrides).
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the defaults when `None`) and applies `SUBNETSIM_*`
    /// overrides from `vars`.
    pub fn load<I>(path: Option<&Path>, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
                text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> =
            vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (var, raw) in overrides {
            let key = var[ENV_PREFIX.len()..].to_ascii_lowercase();
            if key.is_empty() {
                return Err(ConfigError::Env { var, reason: "empty key".into() });
            }
            table.insert(key, parse_scalar(&raw));
        }
        Self::from_table(table)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !POLICIES.contains(&self.policy.as_str()) {
            return Err(ConfigError::Invalid {
                key: "policy".into(),
                reason: format!("`{}` is not one of {}", self.policy, POLICIES.join(", ")),
            });
        }
        if self.episodes == 0 {
            return Err(ConfigError::Invalid { key: "episodes".into(), reason: "must be >= 1".into() });
        }
        if self.payload_bytes == 0 {
            return Err(ConfigError::Invalid { key: "payload_bytes".into(), reason: "must be >= 1".into() });
        }
        if !(self.max_grad_norm.is_finite() && self.max_grad_norm >= 0.0) {
            return Err(ConfigError::Invalid { key: "max_grad_norm".into(), reason: "must be >= 0".into() });
        }
        let core_err = |e: subnet_core::Error| match e {
            subnet_core::Error::Config { key, reason } => {
                ConfigError::Invalid { key: key.into(), reason: reason.into() }
            }
            other => ConfigError::Invalid { key: "?".into(), reason: other.to_string() },
        };
        self.env_config().validate().map_err(core_err)?;
        self.train_config().validate().map_err(core_err)?;
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            world: WorldConfig {
                num_subnetworks: self.num_subnetworks,
                area_side_m: self.area_side_m,
                subnetwork_radius_m: self.subnetwork_radius_m,
                device_distance_m: self.device_distance_m,
                speed_mps: self.max_speed_mps,
                buffer_capacity: self.buffer_capacity,
                slot_s: self.slot_s,
            },
            radio: RadioConfig {
                bandwidth_hz: self.bandwidth_hz,
                carrier_hz: self.carrier_hz,
                pathloss_exponent: self.pathloss_exponent,
                shadowing_sigma_db: self.shadowing_sigma_db,
                fading: if self.rayleigh_fading { Fading::Rayleigh } else { Fading::None },
                noise_figure_db: self.noise_figure_db,
                noise_temperature_k: self.noise_temperature_k,
                tx_power_min_dbm: self.tx_power_min_dbm,
                tx_power_max_dbm: self.tx_power_max_dbm,
                rate_threshold_se: self.rate_threshold_se,
                payload_bits: f64::from(self.payload_bytes) * 8.0,
            },
            allocator: AllocatorConfig {
                target_margin_db: self.allocation_margin_db,
                max_iterations: self.allocator_max_iterations,
                tolerance_w: self.allocator_tolerance_w,
            },
            steps_per_episode: self.steps_per_episode,
            num_channels: self.num_channels,
            history_len: self.history_len,
            reward_success: self.reward_success,
            reward_failure: self.reward_failure,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            discount: self.discount,
            gae_lambda: self.gae_lambda,
            ppo_epochs: self.ppo_epochs,
            episodes: self.episodes,
            clip_eps: self.clip_eps,
            minibatch_size: self.minibatch_size,
            memory_length: self.memory_length,
            sample_frequency: self.sample_frequency,
            hidden_widths: self.hidden_widths.clone(),
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            normalize_advantages: self.normalize_advantages,
            max_grad_norm: (self.max_grad_norm > 0.0).then_some(self.max_grad_norm),
        }
    }
}

/// Reads an environment value as a TOML scalar/array, falling back to a string.
fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_tables() {
        let c = ExperimentConfig::default();
        assert_eq!(c.num_subnetworks, 10);
        assert_eq!(c.bandwidth_hz, 10e6);
        assert_eq!(c.payload_bytes, 64);
        assert_eq!(c.buffer_capacity, 100);
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.minibatch_size, 256);
        assert_eq!(c.memory_length, 64_000);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.shadowing_sigma_db = 6.3;
        c.checkpoint = Some("a/b.json".into());
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::from_toml_str("bandwith_hz = 1e6").unwrap_err();
        assert!(err.to_string().contains("bandwith_hz"), "{err}");
    }

    #[test]
    fn invalid_value_names_key() {
        let err = ExperimentConfig::from_toml_str("clip_eps = 1.5").unwrap_err();
        assert!(err.to_string().contains("clip_eps"), "{err}");
        let err = ExperimentConfig::from_toml_str("policy = \"bogus\"").unwrap_err();
        assert!(err.to_string().contains("policy"), "{err}");
    }

    #[test]
    fn env_overrides_apply() {
        let vars = vec![
            ("SUBNETSIM_NUM_SUBNETWORKS".to_string(), "4".to_string()),
            ("SUBNETSIM_POLICY".to_string(), "genie".to_string()),
            ("SUBNETSIM_HIDDEN_WIDTHS".to_string(), "[32, 32, 32]".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let c = ExperimentConfig::load(None, vars).unwrap();
        assert_eq!(c.num_subnetworks, 4);
        assert_eq!(c.policy, "genie");
        assert_eq!(c.hidden_widths, vec![32, 32, 32]);
        let bad = vec![("SUBNETSIM_NOPE".to_string(), "1".to_string())];
        assert!(ExperimentConfig::load(None, bad).unwrap_err().to_string().contains("nope"));
    }
}
