//! Nine agents, one per (action variable, CE group), acting jointly.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::agent::Agent;
use super::mlp::{argmax, Mlp};
use super::replay::Transition;
use super::{DqnConfig, DqnError};
use crate::action::{ActionVector, GroupAction, N_GROUPS};
use crate::config::SimConfig;
use crate::env::FEATURES_PER_TTI;
use crate::rng::{RngStream, Stream};

pub const N_AGENTS: usize = 3 * N_GROUPS;

/// Which action variable an agent controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    NRach,
    FPrea,
    NRepe,
}

/// Agents 0-2 pick `n_rach`, 3-5 `f_prea`, 6-8 `n_repe`, each for groups 0-2.
pub fn agent_role(k: usize) -> (Variable, usize) {
    let var = match k / N_GROUPS {
        0 => Variable::NRach,
        1 => Variable::FPrea,
        _ => Variable::NRepe,
    };
    (var, k % N_GROUPS)
}

#[derive(Debug, Clone)]
pub struct AgentEnsemble {
    agents: Vec<Agent>,
    sets: [Vec<u32>; 3],
    cfg: DqnConfig,
    explore: ChaCha8Rng,
    pub epsilon: f64,
    /// Environment steps taken in training so far.
    pub global_step: u64,
    pub episodes_done: u64,
}

impl AgentEnsemble {
    pub fn new(sim: &SimConfig, cfg: &DqnConfig, streams: &RngStream) -> Result<Self, DqnError> {
        cfg.validate()?;
        let input = sim.history_window * FEATURES_PER_TTI;
        let sets = [sim.rach_set.clone(), sim.prea_set.clone(), sim.repe_set.clone()];
        let agents = (0..N_AGENTS)
            .map(|k| {
                let mut sizes = vec![input];
                sizes.extend(&cfg.hidden_layers);
                sizes.push(sets[k / N_GROUPS].len());
                let net = Mlp::new(&sizes, &mut streams.indexed(Stream::Init, k as u32));
                Agent::new(
                    net,
                    cfg.rmsprop(),
                    cfg.replay_capacity,
                    streams.indexed(Stream::ReplaySampling, k as u32),
                )
            })
            .collect();
        Ok(Self {
            agents,
            sets,
            cfg: cfg.clone(),
            explore: streams.substream(Stream::Exploration),
            epsilon: cfg.epsilon_start,
            global_step: 0,
            episodes_done: 0,
        })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [Agent] {
        &mut self.agents
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn action_set(&self, k: usize) -> &[u32] {
        &self.sets[k / N_GROUPS]
    }

    pub fn explore_rng(&self) -> &ChaCha8Rng {
        &self.explore
    }

    pub fn set_explore_rng(&mut self, rng: ChaCha8Rng) {
        self.explore = rng;
    }

    /// Maps per-agent indices into action values.
    pub fn compose(&self, idx: &[usize; N_AGENTS]) -> ActionVector {
        ActionVector {
            groups: std::array::from_fn(|g| {
                GroupAction::new(
                    self.sets[0][idx[g]],
                    self.sets[1][idx[N_GROUPS + g]],
                    self.sets[2][idx[2 * N_GROUPS + g]],
                )
            }),
        }
    }

    pub fn greedy_actions(&self, state: &[f64]) -> Result<(ActionVector, [usize; N_AGENTS]), DqnError> {
        let mut idx = [0; N_AGENTS];
        for (k, agent) in self.agents.iter().enumerate() {
            idx[k] = agent.greedy(state)?;
        }
        Ok((self.compose(&idx), idx))
    }

    /// Epsilon-greedy per agent, independently.
    pub fn select_actions(&mut self, state: &[f64]) -> Result<(ActionVector, [usize; N_AGENTS]), DqnError> {
        let mut idx = [0; N_AGENTS];
        for k in 0..N_AGENTS {
            let explore = self.explore.gen::<f64>() < self.epsilon;
            idx[k] = if explore {
                self.explore.gen_range(0..self.sets[k / N_GROUPS].len())
            } else {
                argmax(&self.agents[k].q_values(state)?)
            };
        }
        Ok((self.compose(&idx), idx))
    }

    /// Gives every agent the same `(s, r, s')` with its own action.
    pub fn store(&mut self, state: &Arc<[f64]>, idx: &[usize; N_AGENTS], reward: f64, next: &Arc<[f64]>, terminal: bool) {
        for (agent, &a) in self.agents.iter_mut().zip(idx) {
            agent.buffer.push(Transition {
                state: Arc::clone(state),
                action: a,
                reward,
                next_state: Arc::clone(next),
                terminal,
            });
        }
    }

    /// One update per agent; returns the pre-update losses.
    pub fn train(&mut self) -> Result<[Option<f64>; N_AGENTS], DqnError> {
        let c = &self.cfg;
        let mut out = [None; N_AGENTS];
        for (k, agent) in self.agents.iter_mut().enumerate() {
            out[k] = agent.train_step(c.minibatch, c.gamma, c.target_mode, c.target_sync)?;
        }
        Ok(out)
    }
}
