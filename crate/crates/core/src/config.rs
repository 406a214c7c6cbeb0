//! Scenario and training constants.
//!
//! Configuration documents are flat `key = value` text (TOML syntax, no
//! tables). Keys of [`NetworkConfig`] and [`TrainConfig`] share one namespace;
//! any key may be omitted and falls back to its default. Unknown keys are
//! rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("{key} out of {bound} (got {value})")]
    OutOfRange {
        key: &'static str,
        bound: String,
        value: String,
    },
}

/// Every scenario constant of the wireless MEC environment.
///
/// Units: meters, Hz, W/Hz (noise power spectral density), W, bits, J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_ues: usize,
    pub m_mbs: usize,
    pub t_steps: usize,
    pub area_x_max: f64,
    pub area_y_max: f64,
    pub step_x_max: f64,
    pub step_y_max: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dl: f64,
    pub noise_psd_ul: f64,
    pub p_dl_min: f64,
    pub p_dl_max: f64,
    pub p_ul_min: f64,
    pub p_ul_max: f64,
    pub dl_data_min: f64,
    pub dl_data_max: f64,
    pub ul_data_min: f64,
    pub ul_data_max: f64,
    pub battery_init: f64,
    pub profitability: f64,
    pub scale_b: f64,
    pub scale_f: f64,
    pub weight_q: f64,
    pub weight_h: f64,
    pub weight_w1: f64,
    pub weight_w2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub varkappa: f64,
    pub penalty: f64,
    pub rician_k: f64,
    pub pathloss_alpha: f64,
    pub beta0: f64,
    pub literal_ul_reward: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Defaults for the 4-MBS, 6-UE scenario.
///
/// Noise is -100 dBm/Hz. `beta0`, `battery_init` and the uplink size range
/// are calibration choices, not published constants.
pub fn default_config() -> NetworkConfig {
    NetworkConfig {
        n_ues: 6,
        m_mbs: 4,
        t_steps: 100,
        area_x_max: 100.0,
        area_y_max: 100.0,
        step_x_max: 10.0,
        step_y_max: 10.0,
        bandwidth_hz: 10e9,
        noise_psd_dl: 1e-13,
        noise_psd_ul: 1e-13,
        p_dl_min: 1.5,
        p_dl_max: 2.0,
        p_ul_min: 3.0,
        p_ul_max: 10.0,
        dl_data_min: 800e6,
        dl_data_max: 1000e6,
        ul_data_min: 80e6,
        ul_data_max: 100e6,
        battery_init: 10.0,
        profitability: 10.0,
        scale_b: 1.0,
        scale_f: 1.0,
        weight_q: 0.5,
        weight_h: 0.5,
        weight_w1: 1.0,
        weight_w2: 1.0,
        kappa1: 0.5,
        kappa2: 0.5,
        varkappa: 0.3,
        penalty: -50.0,
        rician_k: 3.0,
        pathloss_alpha: 2.0,
        beta0: 3.0,
        literal_ul_reward: false,
    }
}

fn check(ok: bool, key: &'static str, bound: &str, value: impl ToString) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            key,
            bound: bound.to_string(),
            value: value.to_string(),
        })
    }
}

fn finite_pos(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.n_ues >= 1, "n_ues", "[1,inf)", self.n_ues)?;
        check(self.m_mbs >= 1, "m_mbs", "[1,inf)", self.m_mbs)?;
        check(self.t_steps >= 1, "t_steps", "[1,inf)", self.t_steps)?;
        check(finite_pos(self.area_x_max), "area_x_max", "(0,inf)", self.area_x_max)?;
        check(finite_pos(self.area_y_max), "area_y_max", "(0,inf)", self.area_y_max)?;
        check(self.step_x_max >= 0.0, "step_x_max", "[0,inf)", self.step_x_max)?;
        check(self.step_y_max >= 0.0, "step_y_max", "[0,inf)", self.step_y_max)?;
        check(finite_pos(self.bandwidth_hz), "bandwidth_hz", "(0,inf)", self.bandwidth_hz)?;
        check(finite_pos(self.noise_psd_dl), "noise_psd_dl", "(0,inf)", self.noise_psd_dl)?;
        check(finite_pos(self.noise_psd_ul), "noise_psd_ul", "(0,inf)", self.noise_psd_ul)?;
        check(finite_pos(self.p_dl_min), "p_dl_min", "(0,inf)", self.p_dl_min)?;
        check(self.p_dl_max >= self.p_dl_min, "p_dl_max", "[p_dl_min,inf)", self.p_dl_max)?;
        check(finite_pos(self.p_ul_min), "p_ul_min", "(0,inf)", self.p_ul_min)?;
        check(self.p_ul_max >= self.p_ul_min, "p_ul_max", "[p_ul_min,inf)", self.p_ul_max)?;
        check(self.dl_data_min >= 0.0, "dl_data_min", "[0,inf)", self.dl_data_min)?;
        check(self.dl_data_max >= self.dl_data_min, "dl_data_max", "[dl_data_min,inf)", self.dl_data_max)?;
        check(self.ul_data_min >= 0.0, "ul_data_min", "[0,inf)", self.ul_data_min)?;
        check(self.ul_data_max >= self.ul_data_min, "ul_data_max", "[ul_data_min,inf)", self.ul_data_max)?;
        check(finite_pos(self.battery_init), "battery_init", "(0,inf)", self.battery_init)?;
        check((0.0..=1.0).contains(&self.weight_q), "weight_q", "[0,1]", self.weight_q)?;
        check((0.0..=1.0).contains(&self.weight_h), "weight_h", "[0,1]", self.weight_h)?;
        check(self.kappa1 >= 0.0, "kappa1", "[0,inf)", self.kappa1)?;
        check(self.kappa2 >= 0.0, "kappa2", "[0,inf)", self.kappa2)?;
        check(self.kappa1 + self.kappa2 > 0.0, "kappa1+kappa2", "(0,inf)", self.kappa1 + self.kappa2)?;
        check(self.rician_k >= 0.0, "rician_k", "[0,inf]", self.rician_k)?;
        check(self.pathloss_alpha >= 0.0, "pathloss_alpha", "[0,inf)", self.pathloss_alpha)?;
        check(finite_pos(self.beta0), "beta0", "(0,inf)", self.beta0)?;
        Ok(())
    }
}

/// Optimizer and rollout schedule. None of these values are published
/// constants; they are ordinary PPO defaults sized for desk-scale runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub group_size: usize,
    pub gamma: f64,
    pub lambda_gae: f64,
    pub clip_eps: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub target_sync_interval: usize,
    pub gaussian_logstd_init: f64,
    pub hidden_sizes: Vec<usize>,
    pub normalize_advantages: bool,
    /// Scale training rewards by the running std of discounted returns.
    pub normalize_rewards: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 50_000,
            horizon: 2048,
            epochs: 10,
            group_size: 64,
            gamma: 0.99,
            lambda_gae: 0.95,
            clip_eps: 0.2,
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            target_sync_interval: 4,
            gaussian_logstd_init: -0.5,
            hidden_sizes: vec![64, 64],
            normalize_advantages: true,
            normalize_rewards: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.gamma > 0.0 && self.gamma <= 1.0, "gamma", "(0,1]", self.gamma)?;
        check((0.0..=1.0).contains(&self.lambda_gae), "lambda_gae", "[0,1]", self.lambda_gae)?;
        check(self.clip_eps > 0.0, "clip_eps", "(0,inf)", self.clip_eps)?;
        check(self.horizon >= 1, "horizon", "[1,inf)", self.horizon)?;
        check(self.epochs >= 1, "epochs", "[1,inf)", self.epochs)?;
        check(self.group_size >= 1, "group_size", "[1,inf)", self.group_size)?;
        check(self.target_sync_interval >= 1, "target_sync_interval", "[1,inf)", self.target_sync_interval)?;
        check(finite_pos(self.lr_actor), "lr_actor", "(0,inf)", self.lr_actor)?;
        check(finite_pos(self.lr_critic), "lr_critic", "(0,inf)", self.lr_critic)?;
        check(self.gaussian_logstd_init.is_finite(), "gaussian_logstd_init", "finite", self.gaussian_logstd_init)?;
        check(
            !self.hidden_sizes.is_empty() && self.hidden_sizes.iter().all(|&h| h > 0),
            "hidden_sizes",
            "nonempty list of positive widths",
            format!("{:?}", self.hidden_sizes),
        )?;
        Ok(())
    }
}

/// Both halves of a resolved configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigSet {
    pub net: NetworkConfig,
    pub train: TrainConfig,
}

fn to_table<T: Serialize>(value: &T) -> toml::Table {
    match toml::Value::try_from(value) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("config structs serialize to tables"),
    }
}

/// Integers are accepted wherever a float is expected.
fn coerce(default: &toml::Value, given: toml::Value) -> toml::Value {
    match (default, given) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    }
}

impl ConfigSet {
    /// Parses a flat document on top of `self`, then validates.
    pub fn merge_document(&mut self, text: &str) -> Result<(), ConfigError> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut net = to_table(&self.net);
        let mut train = to_table(&self.train);
        for (key, value) in doc {
            if let Some(slot) = net.get_mut(&key) {
                *slot = coerce(slot, value);
            } else if let Some(slot) = train.get_mut(&key) {
                *slot = coerce(slot, value);
            } else {
                return Err(ConfigError::UnknownKey(key));
            }
        }
        let net: NetworkConfig = net
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let train: TrainConfig = train
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        net.validate()?;
        train.validate()?;
        self.net = net;
        self.train = train;
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse(format!("expected key=value, got `{assignment}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Parse(format!("empty key in `{assignment}`")));
        }
        self.merge_document(&format!("{key} = {value}"))
            .map_err(|e| match e {
                ConfigError::Parse(reason) => ConfigError::BadValue {
                    key: key.to_string(),
                    reason,
                },
                other => other,
            })
    }

    /// Flat document listing every key; reloads to an equal config.
    pub fn to_document(&self) -> String {
        let mut table = to_table(&self.net);
        table.extend(to_table(&self.train));
        toml::to_string(&table).expect("flat table serializes")
    }

    /// Hex SHA-256 of [`ConfigSet::to_document`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_document().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.net.validate()?;
        self.train.validate()
    }
}

/// Loads a document over the defaults.
pub fn load_config(text: &str) -> Result<(NetworkConfig, TrainConfig), ConfigError> {
    let mut set = ConfigSet::default();
    set.merge_document(text)?;
    Ok((set.net, set.train))
}
