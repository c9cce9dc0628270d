//! Simulation parameters, validation, and the flat `key = value` config format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One invariant violation found by [`SimConfig::validate`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigViolation {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("{0} must be finite")]
    NotFinite(&'static str),
    #[error("empty action set: {0}")]
    EmptySet(&'static str),
    #[error("{0} must be strictly increasing with positive entries")]
    NotIncreasing(&'static str),
    #[error("threshold order: rsrp_threshold1_dbm must exceed rsrp_threshold2_dbm")]
    ThresholdOrder,
    #[error("path_loss_exponent must exceed 2")]
    PathLossExponent,
    #[error("tti_ms must be a multiple of the 2 ms slot")]
    TtiNotSlotAligned,
    #[error("prea_set entries must be at least 2")]
    TooFewPreambles,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {}", join_violations(.0))]
    Invalid(Vec<ConfigViolation>),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[ConfigViolation]) -> String {
    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// All simulation parameters. Powers are stored in dBm / dB as configured;
/// the `*_mw` helpers convert to linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cell_radius_km: f64,
    pub n_devices: usize,
    pub n_tti_per_episode: usize,
    pub tti_ms: u32,
    pub path_loss_exponent: f64,
    pub noise_power_dbm: f64,
    pub snr_threshold_db: f64,
    /// Target received preamble power for CE group 0 under full path-loss inversion.
    pub power_ctrl_target_dbm: f64,
    pub bcast_power_dbm: f64,
    pub max_tx_power_dbm: f64,
    pub rsrp_threshold1_dbm: f64,
    pub rsrp_threshold2_dbm: f64,
    pub max_attempts_per_ce: u32,
    pub max_attempts: u32,
    pub max_rrc_wait: u32,
    pub b_rach: u32,
    pub b_data: u32,
    pub prea_set: Vec<u32>,
    pub repe_set: Vec<u32>,
    pub rach_set: Vec<u32>,
    pub beta_a: f64,
    pub beta_b: f64,
    /// Added to every uplink preamble link budget; 0 keeps the literal model.
    pub snr_offset_db: f64,
    pub backoff_ttis: u32,
    pub history_window: usize,
    /// Normalization scale for device counters in the learning state.
    pub obs_device_cap: u32,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cell_radius_km: 12.0,
            n_devices: 30_000,
            n_tti_per_episode: 937,
            tti_ms: 640,
            path_loss_exponent: 4.0,
            noise_power_dbm: -138.0,
            snr_threshold_db: 0.0,
            power_ctrl_target_dbm: 120.0,
            bcast_power_dbm: 35.0,
            max_tx_power_dbm: 23.0,
            rsrp_threshold1_dbm: 0.0,
            rsrp_threshold2_dbm: -5.0,
            max_attempts_per_ce: 5,
            max_attempts: 10,
            max_rrc_wait: 5,
            b_rach: 4,
            b_data: 32,
            prea_set: vec![12, 24, 36, 48],
            repe_set: vec![1, 2, 4, 8, 16, 32],
            rach_set: vec![1, 2, 4],
            beta_a: 3.0,
            beta_b: 4.0,
            snr_offset_db: 0.0,
            backoff_ttis: 0,
            history_window: 4,
            obs_device_cap: 256,
            seed: 1,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl SimConfig {
    /// Every violated invariant, in field order. Empty means valid.
    pub fn violations(&self) -> Vec<ConfigViolation> {
        use ConfigViolation::*;
        let mut out = Vec::new();

        let floats = [
            ("cell_radius_km", self.cell_radius_km),
            ("path_loss_exponent", self.path_loss_exponent),
            ("noise_power_dbm", self.noise_power_dbm),
            ("power_ctrl_target_dbm", self.power_ctrl_target_dbm),
            ("bcast_power_dbm", self.bcast_power_dbm),
            ("max_tx_power_dbm", self.max_tx_power_dbm),
            ("rsrp_threshold1_dbm", self.rsrp_threshold1_dbm),
            ("rsrp_threshold2_dbm", self.rsrp_threshold2_dbm),
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
            ("snr_offset_db", self.snr_offset_db),
        ];
        for (name, v) in floats {
            if !v.is_finite() {
                out.push(NotFinite(name));
            }
        }
        // A threshold of -inf dB (zero linear) is meaningful.
        if self.snr_threshold_db.is_nan() || self.snr_threshold_db == f64::INFINITY {
            out.push(NotFinite("snr_threshold_db"));
        }

        if !(self.cell_radius_km > 0.0) {
            out.push(NonPositive("cell_radius_km"));
        }
        if !(self.path_loss_exponent > 2.0) {
            out.push(PathLossExponent);
        }
        if !(self.beta_a > 0.0) {
            out.push(NonPositive("beta_a"));
        }
        if !(self.beta_b > 0.0) {
            out.push(NonPositive("beta_b"));
        }

        let counts = [
            ("n_devices", self.n_devices as u64),
            ("n_tti_per_episode", self.n_tti_per_episode as u64),
            ("tti_ms", self.tti_ms as u64),
            ("max_attempts_per_ce", self.max_attempts_per_ce as u64),
            ("max_attempts", self.max_attempts as u64),
            ("max_rrc_wait", self.max_rrc_wait as u64),
            ("b_rach", self.b_rach as u64),
            ("b_data", self.b_data as u64),
            ("history_window", self.history_window as u64),
            ("obs_device_cap", self.obs_device_cap as u64),
        ];
        for (name, v) in counts {
            if v == 0 {
                out.push(NonPositive(name));
            }
        }
        if self.tti_ms % 2 != 0 {
            out.push(TtiNotSlotAligned);
        }

        for (name, set) in [
            ("prea_set", &self.prea_set),
            ("repe_set", &self.repe_set),
            ("rach_set", &self.rach_set),
        ] {
            if set.is_empty() {
                out.push(EmptySet(name));
            } else if set[0] == 0 || set.windows(2).any(|w| w[0] >= w[1]) {
                out.push(NotIncreasing(name));
            }
        }
        if self.prea_set.first().is_some_and(|&f| f < 2) {
            out.push(TooFewPreambles);
        }

        if !(self.rsrp_threshold1_dbm > self.rsrp_threshold2_dbm) {
            out.push(ThresholdOrder);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn noise_power_mw(&self) -> f64 {
        db_to_linear(self.noise_power_dbm)
    }

    pub fn bcast_power_mw(&self) -> f64 {
        db_to_linear(self.bcast_power_dbm)
    }

    pub fn max_tx_power_mw(&self) -> f64 {
        db_to_linear(self.max_tx_power_dbm)
    }

    pub fn power_ctrl_target_mw(&self) -> f64 {
        db_to_linear(self.power_ctrl_target_dbm)
    }

    pub fn snr_threshold_linear(&self) -> f64 {
        db_to_linear(self.snr_threshold_db)
    }

    pub fn snr_offset_linear(&self) -> f64 {
        db_to_linear(self.snr_offset_db)
    }

    /// Sets one field from its textual form. Returns `Ok(false)` if `key`
    /// is not a simulation parameter.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        match key {
            "cell_radius_km" => self.cell_radius_km = parse(value)?,
            "n_devices" => self.n_devices = parse(value)?,
            "n_tti_per_episode" => self.n_tti_per_episode = parse(value)?,
            "tti_ms" => self.tti_ms = parse(value)?,
            "path_loss_exponent" => self.path_loss_exponent = parse(value)?,
            "noise_power_dbm" => self.noise_power_dbm = parse(value)?,
            "snr_threshold_db" => self.snr_threshold_db = parse(value)?,
            "power_ctrl_target_dbm" => self.power_ctrl_target_dbm = parse(value)?,
            "bcast_power_dbm" => self.bcast_power_dbm = parse(value)?,
            "max_tx_power_dbm" => self.max_tx_power_dbm = parse(value)?,
            "rsrp_threshold1_dbm" => self.rsrp_threshold1_dbm = parse(value)?,
            "rsrp_threshold2_dbm" => self.rsrp_threshold2_dbm = parse(value)?,
            "max_attempts_per_ce" => self.max_attempts_per_ce = parse(value)?,
            "max_attempts" => self.max_attempts = parse(value)?,
            "max_rrc_wait" => self.max_rrc_wait = parse(value)?,
            "b_rach" => self.b_rach = parse(value)?,
            "b_data" => self.b_data = parse(value)?,
            "prea_set" => self.prea_set = parse_list(value)?,
            "repe_set" => self.repe_set = parse_list(value)?,
            "rach_set" => self.rach_set = parse_list(value)?,
            "beta_a" => self.beta_a = parse(value)?,
            "beta_b" => self.beta_b = parse(value)?,
            "snr_offset_db" => self.snr_offset_db = parse(value)?,
            "backoff_ttis" => self.backoff_ttis = parse(value)?,
            "history_window" => self.history_window = parse(value)?,
            "obs_device_cap" => self.obs_device_cap = parse(value)?,
            "seed" => self.seed = parse(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Serializes every field in the config-file format. `parse` of the
    /// output reproduces `self` exactly.
    pub fn to_kv(&self) -> String {
        let list = |s: &[u32]| s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "cell_radius_km = {:?}", self.cell_radius_km);
        let _ = writeln!(s, "n_devices = {}", self.n_devices);
        let _ = writeln!(s, "n_tti_per_episode = {}", self.n_tti_per_episode);
        let _ = writeln!(s, "tti_ms = {}", self.tti_ms);
        let _ = writeln!(s, "path_loss_exponent = {:?}", self.path_loss_exponent);
        let _ = writeln!(s, "noise_power_dbm = {:?}", self.noise_power_dbm);
        let _ = writeln!(s, "snr_threshold_db = {:?}", self.snr_threshold_db);
        let _ = writeln!(s, "power_ctrl_target_dbm = {:?}", self.power_ctrl_target_dbm);
        let _ = writeln!(s, "bcast_power_dbm = {:?}", self.bcast_power_dbm);
        let _ = writeln!(s, "max_tx_power_dbm = {:?}", self.max_tx_power_dbm);
        let _ = writeln!(s, "rsrp_threshold1_dbm = {:?}", self.rsrp_threshold1_dbm);
        let _ = writeln!(s, "rsrp_threshold2_dbm = {:?}", self.rsrp_threshold2_dbm);
        let _ = writeln!(s, "max_attempts_per_ce = {}", self.max_attempts_per_ce);
        let _ = writeln!(s, "max_attempts = {}", self.max_attempts);
        let _ = writeln!(s, "max_rrc_wait = {}", self.max_rrc_wait);
        let _ = writeln!(s, "b_rach = {}", self.b_rach);
        let _ = writeln!(s, "b_data = {}", self.b_data);
        let _ = writeln!(s, "prea_set = {}", list(&self.prea_set));
        let _ = writeln!(s, "repe_set = {}", list(&self.repe_set));
        let _ = writeln!(s, "rach_set = {}", list(&self.rach_set));
        let _ = writeln!(s, "beta_a = {:?}", self.beta_a);
        let _ = writeln!(s, "beta_b = {:?}", self.beta_b);
        let _ = writeln!(s, "snr_offset_db = {:?}", self.snr_offset_db);
        let _ = writeln!(s, "backoff_ttis = {}", self.backoff_ttis);
        let _ = writeln!(s, "history_window = {}", self.history_window);
        let _ = writeln!(s, "obs_device_cap = {}", self.obs_device_cap);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// Parses a config file containing only simulation keys, starting from
    /// the defaults, and validates the result.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SimConfig::default();
        for entry in kv_entries(text) {
            let (line, key, value) = entry?;
            match cfg.set(key, value) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
                Err(message) => {
                    return Err(ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        message,
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Iterates `(line number, key, value)` over a `key = value` text with `#`
/// comments and blank lines skipped.
pub fn kv_entries(text: &str) -> impl Iterator<Item = Result<(usize, &str, &str), ConfigError>> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            return None;
        }
        Some(match content.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => Ok((line, k.trim(), v.trim())),
            _ => Err(ConfigError::Syntax { line }),
        })
    })
}

pub(crate) fn parse<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

pub(crate) fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let value = value.trim_start_matches(['{', '[']).trim_end_matches(['}', ']']);
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(v.trim())).collect()
}
