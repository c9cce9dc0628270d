//! Device population: activation times, RACH attempt bookkeeping, CE
//! escalation, drops and RRC retention.
//!
//! Each device carries one packet per episode. It activates at a TTI drawn
//! from a Beta profile over the episode, contends until it connects or runs
//! out of attempts, and then waits at most `max_rrc_wait` TTIs for data
//! resources.

use std::io::Write;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use thiserror::Error;

use crate::config::SimConfig;
use crate::phy;
use crate::rng::{RngStream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceState {
    Idle,
    Backlogged,
    ConnectedWaiting,
    Served,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropCause {
    /// Exhausted the total RACH attempt limit.
    RachAttempts,
    /// RRC retention expired before data resources were granted.
    RrcExpiry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub id: usize,
    pub distance_km: f64,
    /// Group assigned by the RSRP rule at placement.
    pub initial_group: usize,
    /// Current group; only ever escalates.
    pub ce_group: usize,
    pub state: DeviceState,
    pub attempts_in_ce: u32,
    pub attempts_total: u32,
    pub rrc_wait: u32,
    /// 1-based TTI at which the packet is generated.
    pub activation_tti: usize,
    /// Earliest TTI of the next RACH attempt while backlogged.
    pub next_attempt_tti: usize,
    pub drop_cause: Option<DropCause>,
}

impl Device {
    pub fn new(id: usize, distance_km: f64, activation_tti: usize, cfg: &SimConfig) -> Self {
        let group = phy::assign_ce_group(distance_km, cfg);
        Self {
            id,
            distance_km,
            initial_group: group,
            ce_group: group,
            state: DeviceState::Idle,
            attempts_in_ce: 0,
            attempts_total: 0,
            rrc_wait: 0,
            activation_tti,
            next_attempt_tti: activation_tti,
            drop_cause: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrafficError {
    #[error("device {id} is {state:?}, expected {expected:?}")]
    WrongState {
        id: usize,
        state: DeviceState,
        expected: DeviceState,
    },
}

/// What a failed attempt did to the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureOutcome {
    Retry,
    Escalated,
    Dropped,
}

/// Shape of the time-limited Beta arrival profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficProfile {
    pub alpha: f64,
    pub beta: f64,
    pub n_tti: usize,
}

impl TrafficProfile {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            alpha: cfg.beta_a,
            beta: cfg.beta_b,
            n_tti: cfg.n_tti_per_episode,
        }
    }

    /// Probability that a packet is generated in 1-based TTI `tti`, i.e. the
    /// Beta mass over `((tti-1)/N, tti/N]`. Integer shapes only (the CDF is
    /// then a finite binomial sum); used for the expected-arrivals overlay.
    pub fn tti_mass(&self, tti: usize) -> f64 {
        let n = self.n_tti as f64;
        beta_cdf_integer(self.alpha, self.beta, tti as f64 / n)
            - beta_cdf_integer(self.alpha, self.beta, (tti - 1) as f64 / n)
    }
}

/// Regularized incomplete beta for integer shapes:
/// `I_x(a, b) = sum_{j=a}^{a+b-1} C(a+b-1, j) x^j (1-x)^{a+b-1-j}`.
fn beta_cdf_integer(a: f64, b: f64, x: f64) -> f64 {
    let (a, b) = (a.round() as u32, b.round() as u32);
    let n = a + b - 1;
    let mut total = 0.0;
    let mut binom = 1.0f64;
    for j in 0..=n {
        if j >= a {
            total += binom * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
        }
        binom = binom * (n - j) as f64 / (j + 1) as f64;
    }
    total
}

/// One activation TTI in `[1, N]` per device. Drawing `x ~ Beta(a, b)` and
/// taking `ceil(x N)` gives each TTI exactly the Beta mass of its interval.
pub fn sample_activation_ttis<R: Rng + ?Sized>(
    n_devices: usize,
    profile: &TrafficProfile,
    rng: &mut R,
) -> Vec<usize> {
    let n = profile.n_tti;
    let beta = Beta::new(profile.alpha, profile.beta).expect("positive beta shapes");
    (0..n_devices)
        .map(|_| {
            let x: f64 = beta.sample(rng);
            ((x * n as f64).ceil() as usize).clamp(1, n)
        })
        .collect()
}

fn expect_state(d: &Device, expected: DeviceState) -> Result<(), TrafficError> {
    if d.state == expected {
        Ok(())
    } else {
        Err(TrafficError::WrongState {
            id: d.id,
            state: d.state,
            expected,
        })
    }
}

/// Counts a failed attempt, escalating the CE group once the per-group limit
/// is reached and dropping at the total limit. In the top group the per-group
/// counter saturates at its limit.
pub fn register_rach_failure(d: &mut Device, cfg: &SimConfig) -> Result<FailureOutcome, TrafficError> {
    expect_state(d, DeviceState::Backlogged)?;
    d.attempts_total += 1;
    d.attempts_in_ce = (d.attempts_in_ce + 1).min(cfg.max_attempts_per_ce);
    if d.attempts_total >= cfg.max_attempts {
        d.state = DeviceState::Dropped;
        d.drop_cause = Some(DropCause::RachAttempts);
        return Ok(FailureOutcome::Dropped);
    }
    if d.attempts_in_ce >= cfg.max_attempts_per_ce && d.ce_group < 2 {
        d.ce_group += 1;
        d.attempts_in_ce = 0;
        return Ok(FailureOutcome::Escalated);
    }
    Ok(FailureOutcome::Retry)
}

pub fn register_rach_success(d: &mut Device) -> Result<(), TrafficError> {
    expect_state(d, DeviceState::Backlogged)?;
    d.state = DeviceState::ConnectedWaiting;
    d.rrc_wait = 0;
    Ok(())
}

pub fn register_served(d: &mut Device) -> Result<(), TrafficError> {
    expect_state(d, DeviceState::ConnectedWaiting)?;
    d.state = DeviceState::Served;
    Ok(())
}

/// Devices of a population, indexed by id.
#[derive(Debug, Clone)]
pub struct Population {
    devices: Vec<Device>,
    /// Device ids activating at each 1-based TTI (index 0 unused).
    activations: Vec<Vec<usize>>,
    backlog: Vec<usize>,
}

impl Population {
    pub fn new(distances: &[f64], activation_ttis: &[usize], cfg: &SimConfig) -> Self {
        assert_eq!(distances.len(), activation_ttis.len());
        let n_tti = activation_ttis.iter().copied().max().unwrap_or(0).max(cfg.n_tti_per_episode);
        let mut activations = vec![Vec::new(); n_tti + 1];
        let devices = distances
            .iter()
            .zip(activation_ttis)
            .enumerate()
            .map(|(id, (&u, &t))| {
                activations[t].push(id);
                Device::new(id, u, t, cfg)
            })
            .collect();
        Self {
            devices,
            activations,
            backlog: Vec::new(),
        }
    }

    /// Places devices and draws activation times from the placement and
    /// traffic sub-streams of `streams`.
    pub fn generate(cfg: &SimConfig, streams: &RngStream) -> Self {
        let distances = phy::place_devices(
            cfg.n_devices,
            cfg.cell_radius_km,
            &mut streams.substream(Stream::Placement),
        );
        let ttis = sample_activation_ttis(
            cfg.n_devices,
            &TrafficProfile::from_config(cfg),
            &mut streams.substream(Stream::Traffic),
        );
        Self::new(&distances, &ttis, cfg)
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn device(&self, id: usize) -> &Device {
        &self.devices[id]
    }

    pub fn device_mut(&mut self, id: usize) -> &mut Device {
        &mut self.devices[id]
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// Ids activating at `t`.
    pub fn activating_at(&self, t: usize) -> &[usize] {
        self.activations.get(t).map_or(&[], |v| v.as_slice())
    }

    /// Activates devices whose packet arrives at `t` and returns, in id
    /// order, every backlogged device due to attempt RACH at `t`.
    pub fn backlogged_at(&mut self, t: usize) -> Vec<usize> {
        if let Some(ids) = self.activations.get(t) {
            for &id in ids {
                let d = &mut self.devices[id];
                if d.state == DeviceState::Idle {
                    d.state = DeviceState::Backlogged;
                    d.next_attempt_tti = t;
                    self.backlog.push(id);
                }
            }
        }
        let devices = &self.devices;
        self.backlog.retain(|&id| devices[id].state == DeviceState::Backlogged);
        self.backlog.sort_unstable();
        self.backlog
            .iter()
            .copied()
            .filter(|&id| devices[id].next_attempt_tti <= t)
            .collect()
    }

    /// Failed attempt at TTI `t`; a retrying device becomes due again after
    /// the configured backoff.
    pub fn fail_attempt(&mut self, id: usize, t: usize, cfg: &SimConfig) -> Result<FailureOutcome, TrafficError> {
        let d = &mut self.devices[id];
        let outcome = register_rach_failure(d, cfg)?;
        d.next_attempt_tti = t + 1 + cfg.backoff_ttis as usize;
        Ok(outcome)
    }

    /// Counts per state, ordered Idle, Backlogged, ConnectedWaiting, Served, Dropped.
    pub fn state_counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for d in &self.devices {
            c[match d.state {
                DeviceState::Idle => 0,
                DeviceState::Backlogged => 1,
                DeviceState::ConnectedWaiting => 2,
                DeviceState::Served => 3,
                DeviceState::Dropped => 4,
            }] += 1;
        }
        c
    }

    /// Writes the activation schedule as `tti,device_id` rows.
    pub fn write_activation_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "tti,device_id")?;
        for (t, ids) in self.activations.iter().enumerate() {
            for id in ids {
                writeln!(out, "{t},{id}")?;
            }
        }
        Ok(())
    }
}

/// Ages every unserved connected device by one TTI. Returns the ids still
/// retained and the ids dropped because their retention ran out.
pub fn expire_rrc(
    pop: &mut Population,
    unserved: &[usize],
    cfg: &SimConfig,
) -> Result<(Vec<usize>, Vec<usize>), TrafficError> {
    let mut retained = Vec::with_capacity(unserved.len());
    let mut dropped = Vec::new();
    for &id in unserved {
        let d = pop.device_mut(id);
        expect_state(d, DeviceState::ConnectedWaiting)?;
        d.rrc_wait += 1;
        if d.rrc_wait >= cfg.max_rrc_wait {
            d.state = DeviceState::Dropped;
            d.drop_cause = Some(DropCause::RrcExpiry);
            dropped.push(id);
        } else {
            retained.push(id);
        }
    }
    Ok((retained, dropped))
}
