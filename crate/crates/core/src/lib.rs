//! NB-IoT uplink random access and data scheduling for three coverage
//! enhancement groups, with per-TTI resource controllers.
//!
//! The simulator ([`env::Environment`]) is driven by a controller producing
//! one [`action::ActionVector`] per TTI: a load-estimation heuristic, static
//! or random baselines ([`controllers`]), or an ensemble of nine cooperative
//! DQN agents ([`dqn`]).

pub mod action;
pub mod cli;
pub mod config;
pub mod controllers;
pub mod dqn;
pub mod env;
pub mod phy;
pub mod rach;
pub mod rng;
pub mod sched;
pub mod traffic;

pub use action::{ActionVector, GroupAction, N_GROUPS};
pub use config::{ConfigError, SimConfig};
pub use env::{EnvError, Environment, ObservationU, StateVector};
pub use rng::{RngStream, Stream};
