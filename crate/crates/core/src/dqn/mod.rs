//! Cooperative multi-agent DQN: one agent per action variable and CE group,
//! all trained on the shared served-devices reward.

pub mod agent;
pub mod checkpoint;
pub mod ensemble;
pub mod mlp;
pub mod replay;
pub mod rmsprop;
pub mod training;

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::config::{parse, parse_list};
use crate::env::EnvError;

pub use agent::{td_targets, Agent};
pub use ensemble::{AgentEnsemble, N_AGENTS};
pub use mlp::Mlp;
pub use replay::{ReplayBuffer, Transition};
pub use rmsprop::{RmsPropParams, RmsPropState};
pub use training::{run_training, CmaDqn, TrainingRun};

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("input has {got} features, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("inconsistent network shape: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid learner setting: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// How the bootstrap term of the TD target is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Target network evaluated at the online network's greedy action.
    #[default]
    Ddqn,
    /// Maximum of the target network.
    DqnMax,
}

impl FromStr for TargetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ddqn" => Ok(Self::Ddqn),
            "dqn-max" => Ok(Self::DqnMax),
            other => Err(format!("unknown target mode {other:?} (expected ddqn or dqn-max)")),
        }
    }
}

impl std::fmt::Display for TargetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ddqn => "ddqn",
            Self::DqnMax => "dqn-max",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DqnConfig {
    pub hidden_layers: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub minibatch: usize,
    pub replay_capacity: usize,
    /// Train steps between target-network copies.
    pub target_sync: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all training TTIs over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub target_mode: TargetMode,
    /// Multiplier applied to the reward before it is stored.
    pub reward_scale: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![128, 128, 128],
            gamma: 0.5,
            learning_rate: 1e-4,
            rms_decay: 0.9,
            rms_epsilon: 1e-6,
            minibatch: 32,
            replay_capacity: 10_000,
            target_sync: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.5,
            target_mode: TargetMode::Ddqn,
            reward_scale: 1.0,
        }
    }
}

impl DqnConfig {
    pub fn rmsprop(&self) -> RmsPropParams {
        RmsPropParams {
            learning_rate: self.learning_rate,
            decay: self.rms_decay,
            epsilon: self.rms_epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |m: &str| Err(DqnError::Config(m.to_string()));
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer of width 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma outside [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.rms_decay) || self.rms_epsilon <= 0.0 {
            return bad("rms_decay must be in [0, 1) and rms_epsilon positive");
        }
        if self.minibatch == 0 || self.replay_capacity < self.minibatch {
            return bad("need 0 < minibatch <= replay_capacity");
        }
        if self.target_sync == 0 {
            return bad("target_sync must be positive");
        }
        let unit = 0.0..=1.0;
        if !(unit.contains(&self.epsilon_start) && unit.contains(&self.epsilon_end))
            || self.epsilon_end > self.epsilon_start
        {
            return bad("need 0 <= epsilon_end <= epsilon_start <= 1");
        }
        if !unit.contains(&self.epsilon_decay_fraction) {
            return bad("epsilon_decay_fraction outside [0, 1]");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        Ok(())
    }

    /// Sets one `key = value` entry; `Ok(false)` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        match key {
            "hidden_layers" => self.hidden_layers = parse_list(value)?,
            "gamma" => self.gamma = parse(value)?,
            "learning_rate" => self.learning_rate = parse(value)?,
            "rms_decay" => self.rms_decay = parse(value)?,
            "rms_epsilon" => self.rms_epsilon = parse(value)?,
            "minibatch" => self.minibatch = parse(value)?,
            "replay_capacity" => self.replay_capacity = parse(value)?,
            "target_sync" => self.target_sync = parse(value)?,
            "epsilon_start" => self.epsilon_start = parse(value)?,
            "epsilon_end" => self.epsilon_end = parse(value)?,
            "epsilon_decay_fraction" => self.epsilon_decay_fraction = parse(value)?,
            "target_mode" => self.target_mode = value.parse()?,
            "reward_scale" => self.reward_scale = parse(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let hidden = self.hidden_layers.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "hidden_layers = {hidden}");
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "rms_decay = {:?}", self.rms_decay);
        let _ = writeln!(s, "rms_epsilon = {:?}", self.rms_epsilon);
        let _ = writeln!(s, "minibatch = {}", self.minibatch);
        let _ = writeln!(s, "replay_capacity = {}", self.replay_capacity);
        let _ = writeln!(s, "target_sync = {}", self.target_sync);
        let _ = writeln!(s, "epsilon_start = {:?}", self.epsilon_start);
        let _ = writeln!(s, "epsilon_end = {:?}", self.epsilon_end);
        let _ = writeln!(s, "epsilon_decay_fraction = {:?}", self.epsilon_decay_fraction);
        let _ = writeln!(s, "target_mode = {}", self.target_mode);
        let _ = writeln!(s, "reward_scale = {:?}", self.reward_scale);
        s
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(cfg: &DqnConfig, total_steps: u64) -> Self {
        Self {
            start: cfg.epsilon_start,
            end: cfg.epsilon_end,
            decay_steps: (total_steps as f64 * cfg.epsilon_decay_fraction).round() as u64,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_valid_and_roundtrip() {
        let cfg = DqnConfig::default();
        cfg.validate().unwrap();
        let mut back = DqnConfig {
            gamma: 0.9,
            target_mode: TargetMode::DqnMax,
            hidden_layers: vec![3],
            ..Default::default()
        };
        for line in cfg.to_kv().lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(back.set(k.trim(), v.trim()).unwrap());
        }
        assert_eq!(back, cfg);
        assert_eq!(back.set("n_devices", "3"), Ok(false));
        assert!(back.set("target_mode", "sarsa").is_err());
    }

    #[test]
    fn invalid_settings() {
        let c = DqnConfig {
            epsilon_end: 0.5,
            epsilon_start: 0.2,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = DqnConfig {
            minibatch: 64,
            replay_capacity: 32,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn epsilon_schedule() {
        let e = EpsilonSchedule::new(&DqnConfig::default(), 1000);
        assert_eq!(e.value(0), 1.0);
        assert!((e.value(250) - 0.55).abs() < 1e-12);
        assert_eq!(e.value(500), 0.1);
        assert_eq!(e.value(10_000), 0.1);
        assert!((0..1200).all(|t| e.value(t + 1) <= e.value(t)));
        let instant = EpsilonSchedule::new(
            &DqnConfig {
                epsilon_decay_fraction: 0.0,
                ..Default::default()
            },
            1000,
        );
        assert_eq!(instant.value(0), 0.1);
    }
}
