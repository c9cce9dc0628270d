//! Online training loop and the trained ensemble as a [`Controller`].

use std::collections::VecDeque;
use std::sync::Arc;

use super::ensemble::AgentEnsemble;
use super::{DqnConfig, DqnError, EpsilonSchedule};
use crate::action::ActionVector;
use crate::config::SimConfig;
use crate::controllers::Controller;
use crate::env::{build_state, EpisodeStats, Environment, ObservationU};
use crate::rng::RngStream;

/// A training campaign of a fixed number of episodes for one seed.
///
/// Episode `e` draws its traffic from `RngStream::new(seed).derive(e)`, the
/// same stream any other controller evaluated on that seed and episode sees.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    env: Environment,
    ensemble: AgentEnsemble,
    streams: RngStream,
    schedule: EpsilonSchedule,
    total_episodes: usize,
}

impl TrainingRun {
    pub fn new(sim: SimConfig, dqn: &DqnConfig, seed: u64, total_episodes: usize) -> Result<Self, DqnError> {
        let streams = RngStream::new(seed);
        let ensemble = AgentEnsemble::new(&sim, dqn, &streams)?;
        Self::resume(sim, ensemble, seed, total_episodes)
    }

    /// Continues with an existing ensemble; its step and episode counters
    /// position the epsilon schedule and the episode streams.
    pub fn resume(sim: SimConfig, ensemble: AgentEnsemble, seed: u64, total_episodes: usize) -> Result<Self, DqnError> {
        let schedule = EpsilonSchedule::new(ensemble.config(), (total_episodes * sim.n_tti_per_episode) as u64);
        Ok(Self {
            env: Environment::new(sim)?,
            ensemble,
            streams: RngStream::new(seed),
            schedule,
            total_episodes,
        })
    }

    pub fn ensemble(&self) -> &AgentEnsemble {
        &self.ensemble
    }

    pub fn into_ensemble(self) -> AgentEnsemble {
        self.ensemble
    }

    pub fn episodes_done(&self) -> usize {
        self.ensemble.episodes_done as usize
    }

    pub fn is_finished(&self) -> bool {
        self.episodes_done() >= self.total_episodes
    }

    /// Plays one episode, storing one transition per agent and running one
    /// update per agent every TTI.
    pub fn run_episode(&mut self) -> Result<EpisodeStats, DqnError> {
        let episode = self.ensemble.episodes_done;
        let scale = self.ensemble.config().reward_scale;
        let mut state: Arc<[f64]> = self.env.reset(&self.streams.derive(episode)).0.into();
        loop {
            self.ensemble.epsilon = self.schedule.value(self.ensemble.global_step);
            let (action, idx) = self.ensemble.select_actions(&state)?;
            let step = self.env.step(&action)?;
            let next: Arc<[f64]> = step.state.0.into();
            self.ensemble.store(&state, &idx, step.reward * scale, &next, step.terminal);
            self.ensemble.train()?;
            self.ensemble.global_step += 1;
            state = next;
            if step.terminal {
                break;
            }
        }
        self.ensemble.episodes_done += 1;
        Ok(self.env.take_stats())
    }
}

/// Trains for `episodes` episodes, handing each episode's statistics to
/// `on_episode` as it completes.
pub fn run_training<F>(
    sim: &SimConfig,
    dqn: &DqnConfig,
    episodes: usize,
    seed: u64,
    mut on_episode: F,
) -> Result<AgentEnsemble, DqnError>
where
    F: FnMut(usize, &EpisodeStats, &AgentEnsemble) -> Result<(), DqnError>,
{
    let mut run = TrainingRun::new(sim.clone(), dqn, seed, episodes)?;
    while !run.is_finished() {
        let stats = run.run_episode()?;
        on_episode(run.episodes_done() - 1, &stats, run.ensemble())?;
    }
    Ok(run.into_ensemble())
}

/// Runs a (trained) ensemble as a controller, rebuilding its state vector
/// from the observations it is given.
#[derive(Debug, Clone)]
pub struct CmaDqn {
    ensemble: AgentEnsemble,
    sim: SimConfig,
    history: VecDeque<(ObservationU, ActionVector)>,
}

impl CmaDqn {
    pub fn new(mut ensemble: AgentEnsemble, sim: &SimConfig, epsilon: f64) -> Self {
        ensemble.epsilon = epsilon;
        Self {
            ensemble,
            sim: sim.clone(),
            history: VecDeque::new(),
        }
    }

    pub fn ensemble(&self) -> &AgentEnsemble {
        &self.ensemble
    }
}

impl Controller for CmaDqn {
    fn name(&self) -> String {
        "cma-dqn".into()
    }

    fn reset(&mut self) {
        self.history.clear();
    }

    fn decide(&mut self) -> ActionVector {
        let state = build_state(&self.history, &self.sim);
        self.ensemble
            .select_actions(&state.0)
            .expect("state length is fixed by the configuration the ensemble was built for")
            .0
    }

    fn observe(&mut self, obs: &ObservationU, action: &ActionVector, _reward: f64) {
        self.history.push_back((*obs, *action));
        while self.history.len() > self.sim.history_window {
            self.history.pop_front();
        }
    }
}
