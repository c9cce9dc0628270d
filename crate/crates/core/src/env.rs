//! One NB-IoT cell stepped one TTI at a time.
//!
//! A step applies an [`ActionVector`], runs random access in every CE group,
//! splits the uplink budget between RACH and data, schedules connected
//! devices, ages the ones left waiting, and returns what the eNB can observe
//! together with the shared reward (devices served this TTI).

use std::collections::VecDeque;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::action::{self, ActionError, ActionVector, N_GROUPS};
use crate::config::{ConfigError, SimConfig};
use crate::phy::{sample_detection, LinkBudget};
use crate::rach::{run_rach_group, Contender, RachError, RachFate};
use crate::rng::{RngStream, Stream};
use crate::sched::{carryover_unserved, schedule_data, PendingEntry, PendingQueue};
use crate::traffic::{self, DeviceState, FailureOutcome, Population, TrafficError};

pub const OBS_PER_GROUP: usize = 5;
pub const OBS_LEN: usize = OBS_PER_GROUP * N_GROUPS;
pub const ACTION_LEN: usize = 3 * N_GROUPS;
pub const FEATURES_PER_TTI: usize = OBS_LEN + ACTION_LEN;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GroupObservation {
    pub v_cp: u32,
    pub v_sp: u32,
    pub v_ip: u32,
    pub v_succ: u32,
    pub v_unsc: u32,
}

/// Per-group counters the eNB observes at the end of a TTI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ObservationU {
    pub groups: [GroupObservation; N_GROUPS],
}

impl ObservationU {
    pub fn served(&self) -> u32 {
        self.groups.iter().map(|g| g.v_succ).sum()
    }
}

/// Flattened, normalized window of the last `M_o` (observation, action) pairs,
/// oldest first, zero-padded at the front.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtiRecord {
    pub tti: usize,
    pub obs: ObservationU,
    pub action: ActionVector,
    pub reward: u32,
    pub arrivals: [u32; N_GROUPS],
    pub drops_rach: [u32; N_GROUPS],
    pub drops_rrc: [u32; N_GROUPS],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeStats {
    pub records: Vec<TtiRecord>,
}

pub const STATS_CSV_HEADER: &str =
    "tti,group,v_cp,v_sp,v_ip,v_succ,v_unsc,n_rach,f_prea,n_repe,reward,arrivals,drops_rach,drops_rrc";

impl EpisodeStats {
    pub fn total_served(&self) -> u64 {
        self.records.iter().map(|r| r.reward as u64).sum()
    }

    pub fn total_arrivals(&self) -> u64 {
        self.records.iter().flat_map(|r| r.arrivals).map(u64::from).sum()
    }

    pub fn total_drops(&self) -> (u64, u64) {
        let rach = self.records.iter().flat_map(|r| r.drops_rach).map(u64::from).sum();
        let rrc = self.records.iter().flat_map(|r| r.drops_rrc).map(u64::from).sum();
        (rach, rrc)
    }

    /// One row per (tti, group).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{STATS_CSV_HEADER}")?;
        for r in &self.records {
            for g in 0..N_GROUPS {
                let o = &r.obs.groups[g];
                let a = &r.action.groups[g];
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.tti,
                    g,
                    o.v_cp,
                    o.v_sp,
                    o.v_ip,
                    o.v_succ,
                    o.v_unsc,
                    a.n_rach,
                    a.f_prea,
                    a.n_repe,
                    r.reward,
                    r.arrivals[g],
                    r.drops_rach[g],
                    r.drops_rrc[g]
                )?;
            }
        }
        Ok(())
    }
}

/// Budget bookkeeping of one step, for invariant checks and reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepInfo {
    pub r_rach: u64,
    pub r_data: u64,
    pub data_used: u64,
    pub contenders: [u32; N_GROUPS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: ObservationU,
    pub reward: f64,
    pub state: StateVector,
    pub terminal: bool,
    pub info: StepInfo,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a terminated episode")]
    Terminated,
    #[error("step called before reset")]
    NotReset,
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Rach(#[from] RachError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone)]
struct EpisodeRngs {
    fading: ChaCha8Rng,
    preamble: ChaCha8Rng,
    scheduling: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: SimConfig,
    uplink: u64,
    pop: Option<Population>,
    queue: PendingQueue,
    history: VecDeque<(ObservationU, ActionVector)>,
    tti: usize,
    terminal: bool,
    rngs: Option<EpisodeRngs>,
    stats: EpisodeStats,
}

impl Environment {
    pub fn new(cfg: SimConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let uplink = action::uplink_re_budget(&cfg)? as u64;
        Ok(Self {
            cfg,
            uplink,
            pop: None,
            queue: PendingQueue::new(),
            history: VecDeque::new(),
            tti: 0,
            terminal: false,
            rngs: None,
            stats: EpisodeStats::default(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn uplink_budget(&self) -> u64 {
        self.uplink
    }

    pub fn state_len(&self) -> usize {
        self.cfg.history_window * FEATURES_PER_TTI
    }

    /// Starts a new episode: fresh placement, CE grouping and activation
    /// schedule from `streams`, empty queue and history.
    pub fn reset(&mut self, streams: &RngStream) -> StateVector {
        self.reset_with(Population::generate(&self.cfg, streams), streams)
    }

    /// Starts a new episode with a given population.
    pub fn reset_with(&mut self, pop: Population, streams: &RngStream) -> StateVector {
        self.pop = Some(pop);
        self.queue = PendingQueue::new();
        self.history.clear();
        self.tti = 0;
        self.terminal = false;
        self.rngs = Some(EpisodeRngs {
            fading: streams.substream(Stream::Fading),
            preamble: streams.substream(Stream::PreambleChoice),
            scheduling: streams.substream(Stream::SchedulingOrder),
        });
        self.stats = EpisodeStats::default();
        self.build_state()
    }

    pub fn population(&self) -> Option<&Population> {
        self.pop.as_ref()
    }

    pub fn queue(&self) -> &PendingQueue {
        &self.queue
    }

    /// Last completed TTI (0 right after reset).
    pub fn tti(&self) -> usize {
        self.tti
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn history(&self) -> impl Iterator<Item = &(ObservationU, ActionVector)> {
        self.history.iter()
    }

    pub fn stats(&self) -> &EpisodeStats {
        &self.stats
    }

    pub fn take_stats(&mut self) -> EpisodeStats {
        std::mem::take(&mut self.stats)
    }

    pub fn step(&mut self, a: &ActionVector) -> Result<StepResult, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminated);
        }
        a.validate(&self.cfg)?;
        let (Some(pop), Some(rngs)) = (self.pop.as_mut(), self.rngs.as_mut()) else {
            return Err(EnvError::NotReset);
        };
        let cfg = &self.cfg;
        let t = self.tti + 1;

        let mut arrivals = [0u32; N_GROUPS];
        for &id in pop.activating_at(t) {
            arrivals[pop.device(id).initial_group] += 1;
        }
        let due = pop.backlogged_at(t);
        let mut contenders: [Vec<Contender>; N_GROUPS] = Default::default();
        for id in due {
            let group = pop.device(id).ce_group;
            contenders[group].push(Contender { id, group });
        }

        let mut obs = ObservationU::default();
        let mut drops_rach = [0u32; N_GROUPS];
        let mut info = StepInfo::default();
        for (g, group_contenders) in contenders.iter().enumerate() {
            info.contenders[g] = group_contenders.len() as u32;
            let ga = &a.groups[g];
            let fading = &mut rngs.fading;
            let devices = pop.devices();
            let outcome = run_rach_group(group_contenders, g, ga, &mut rngs.preamble, |c| {
                let link = LinkBudget::new(devices[c.id].distance_km, c.group, cfg);
                sample_detection(&link, ga.n_repe, cfg, fading)
            })?;
            let o = &mut obs.groups[g];
            o.v_cp = outcome.v_cp;
            o.v_sp = outcome.v_sp;
            o.v_ip = outcome.v_ip;
            for (id, fate) in outcome.fates {
                if fate == RachFate::Success {
                    traffic::register_rach_success(pop.device_mut(id))?;
                    self.queue.push(PendingEntry {
                        device: id,
                        group: g,
                        cost: action::data_re_per_device(g, a, cfg),
                        enqueued_tti: t,
                    });
                } else if pop.fail_attempt(id, t, cfg)? == FailureOutcome::Dropped {
                    drops_rach[g] += 1;
                }
            }
        }

        info.r_rach = action::rach_re_cost(a, cfg);
        info.r_data = self.uplink.saturating_sub(info.r_rach);
        let sched = schedule_data(self.queue.take(), info.r_data, &mut rngs.scheduling);
        assert!(sched.used <= info.r_data, "data allocation exceeds budget");
        info.data_used = sched.used;
        for e in &sched.served {
            traffic::register_served(pop.device_mut(e.device))?;
            obs.groups[e.group].v_succ += 1;
        }

        let mut drops_rrc = [0u32; N_GROUPS];
        let group_of: Vec<(usize, usize)> = sched.unserved.iter().map(|e| (e.device, e.group)).collect();
        carryover_unserved(&mut self.queue, sched.unserved, pop, cfg)?;
        for (id, g) in group_of {
            if pop.device(id).state == DeviceState::Dropped {
                drops_rrc[g] += 1;
            }
        }
        for e in self.queue.entries() {
            obs.groups[e.group].v_unsc += 1;
        }

        let reward = obs.served();
        self.history.push_back((obs, *a));
        while self.history.len() > cfg.history_window {
            self.history.pop_front();
        }
        self.tti = t;
        self.terminal = t >= cfg.n_tti_per_episode;
        self.stats.records.push(TtiRecord {
            tti: t,
            obs,
            action: *a,
            reward,
            arrivals,
            drops_rach,
            drops_rrc,
        });

        Ok(StepResult {
            obs,
            reward: reward as f64,
            state: self.build_state(),
            terminal: self.terminal,
            info,
        })
    }

    pub fn build_state(&self) -> StateVector {
        build_state(&self.history, &self.cfg)
    }
}

/// Flattens up to `history_window` (observation, action) pairs, newest last,
/// into a fixed-length vector with every entry in `[0, 1]`.
///
/// Per TTI: for each group `v_cp, v_sp, v_ip` scaled by the largest possible
/// RAO count, `v_succ, v_unsc` scaled by `obs_device_cap` (saturating), then
/// for each group the `(index + 1) / set size` of `n_rach, f_prea, n_repe`.
pub fn build_state<'a, I>(history: I, cfg: &SimConfig) -> StateVector
where
    I: IntoIterator<Item = &'a (ObservationU, ActionVector)>,
    I::IntoIter: DoubleEndedIterator + ExactSizeIterator,
{
    let m = cfg.history_window;
    let mut v = vec![0.0; m * FEATURES_PER_TTI];
    let rao_max = (cfg.rach_set.last().copied().unwrap_or(1) * cfg.prea_set.last().copied().unwrap_or(1)) as f64;
    let cap = cfg.obs_device_cap as f64;
    let index_frac = |set: &[u32], value: u32| {
        set.iter().position(|&x| x == value).map_or(0.0, |i| (i + 1) as f64 / set.len() as f64)
    };

    let entries = history.into_iter();
    let n = entries.len().min(m);
    // newest entry goes in the last slot
    for (slot, (obs, act)) in (m - n..m).zip(entries.rev().take(n).collect::<Vec<_>>().into_iter().rev()) {
        let base = slot * FEATURES_PER_TTI;
        for (g, o) in obs.groups.iter().enumerate() {
            let b = base + g * OBS_PER_GROUP;
            v[b] = (o.v_cp as f64 / rao_max).min(1.0);
            v[b + 1] = (o.v_sp as f64 / rao_max).min(1.0);
            v[b + 2] = (o.v_ip as f64 / rao_max).min(1.0);
            v[b + 3] = (o.v_succ as f64 / cap).min(1.0);
            v[b + 4] = (o.v_unsc as f64 / cap).min(1.0);
        }
        for (g, ga) in act.groups.iter().enumerate() {
            let b = base + OBS_LEN + g * 3;
            v[b] = index_frac(&cfg.rach_set, ga.n_rach);
            v[b + 1] = index_frac(&cfg.prea_set, ga.f_prea);
            v[b + 2] = index_frac(&cfg.repe_set, ga.n_repe);
        }
    }
    StateVector(v)
}
