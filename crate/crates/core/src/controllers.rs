//! Per-TTI controllers: the load-estimation heuristic (LE-URC) and static /
//! uniform-random baselines. The learned controller lives in [`crate::dqn`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::action::{self, ActionVector, GroupAction, N_GROUPS};
use crate::config::SimConfig;
use crate::env::{GroupObservation, ObservationU};

/// Chooses an [`ActionVector`] at the start of each TTI and is told what
/// happened at its end.
pub trait Controller {
    fn name(&self) -> String;

    /// Clears per-episode state.
    fn reset(&mut self) {}

    fn decide(&mut self) -> ActionVector;

    fn observe(&mut self, _obs: &ObservationU, _action: &ActionVector, _reward: f64) {}
}

/// Moment-matching load estimate from the idle preambles of one RACH period:
/// `log_{(f-1)/f}(v_idle / f)`.
///
/// No idle preamble means the load is unidentifiable and the estimate clamps
/// to `cap`; `v_idle >= f` means nobody transmitted.
pub fn zeta(f_prea: u32, v_idle: f64, cap: f64) -> f64 {
    let f = f_prea as f64;
    if v_idle <= 0.0 {
        return cap;
    }
    if v_idle >= f {
        return 0.0;
    }
    ((v_idle / f).ln() / ((f - 1.0) / f).ln()).min(cap)
}

/// `max(2 v_cp, zeta + delta)` clamped to `[0, cap]`.
pub fn estimate_load(v_cp_prev: u32, zeta_prev: f64, delta: f64, cap: f64) -> f64 {
    (2.0 * v_cp_prev as f64).max(zeta_prev + delta).clamp(0.0, cap)
}

/// Expected devices requesting data when `n` devices contend on `f_prea`
/// preambles, plus those still waiting: `n (1 - 1/f)^(n-1) + v_unsc`.
pub fn expected_requests(n: f64, f_prea: u32, v_unsc_prev: u32) -> f64 {
    let singles = if n <= 0.0 {
        0.0
    } else {
        n * (1.0 - 1.0 / f_prea as f64).powf(n - 1.0)
    };
    singles + v_unsc_prev as f64
}

/// Load-estimation state of one CE group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoadEstimate {
    /// Estimated devices attempting RACH in the coming TTI.
    pub d_hat: f64,
    pub zeta_prev: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LoadEstimator {
    current: LoadEstimate,
    /// Estimates made for the last two TTIs, newest first.
    past: [Option<f64>; 2],
}

impl LoadEstimator {
    /// Estimate for the coming TTI (zero before any observation).
    pub fn current(&self) -> LoadEstimate {
        self.current
    }

    /// Folds in the counters of the TTI that just ended, which ran with `ga`.
    pub fn update(&mut self, obs: &GroupObservation, ga: &GroupAction, cap: f64) -> LoadEstimate {
        // estimate used for the TTI that just ended becomes D^{t-1}
        self.past = [Some(self.current.d_hat), self.past[0]];
        let delta = match self.past {
            [Some(d1), Some(d2)] => d1 - d2,
            _ => 0.0,
        };
        let per_period_idle = obs.v_ip as f64 / ga.n_rach as f64;
        let zeta_prev = ga.n_rach as f64 * zeta(ga.f_prea, per_period_idle, cap);
        self.current = LoadEstimate {
            d_hat: estimate_load(obs.v_cp, zeta_prev, delta, cap),
            zeta_prev,
            delta,
        };
        self.current
    }
}

/// Objective of one joint preamble choice: `sum_i min(E[V_reqs,i], V_up,i)`
/// with `V_up,i = (R_Uplink - R_RACH) / r_DATA,i`. Also returns `R_RACH`.
pub fn le_urc_objective(
    f_prea: [u32; N_GROUPS],
    d_hat: [f64; N_GROUPS],
    v_unsc_prev: [u32; N_GROUPS],
    n_repe: [u32; N_GROUPS],
    n_rach: u32,
    cfg: &SimConfig,
    uplink: u64,
) -> (f64, u64) {
    let a = ActionVector {
        groups: std::array::from_fn(|i| GroupAction::new(n_rach, f_prea[i], n_repe[i])),
    };
    let r_rach = action::rach_re_cost(&a, cfg);
    let residual = uplink.saturating_sub(r_rach) as f64;
    let objective = (0..N_GROUPS)
        .map(|i| {
            let v_up = residual / action::data_re_per_device(i, &a, cfg) as f64;
            expected_requests(d_hat[i], f_prea[i], v_unsc_prev[i]).min(v_up)
        })
        .sum();
    (objective, r_rach)
}

const TIE_EPS: f64 = 1e-9;

/// Enumerates every joint `f_prea` choice and returns the best action.
/// Ties go to the smaller RACH allocation, then to the lexicographically
/// smaller preamble triple.
pub fn le_urc_decide(
    d_hat: [f64; N_GROUPS],
    v_unsc_prev: [u32; N_GROUPS],
    n_repe: [u32; N_GROUPS],
    n_rach: u32,
    cfg: &SimConfig,
    uplink: u64,
) -> ActionVector {
    let set = &cfg.prea_set;
    let mut best: Option<([u32; N_GROUPS], f64, u64)> = None;
    for &f0 in set {
        for &f1 in set {
            for &f2 in set {
                let f = [f0, f1, f2];
                let (obj, r_rach) = le_urc_objective(f, d_hat, v_unsc_prev, n_repe, n_rach, cfg, uplink);
                let better = match best {
                    None => true,
                    Some((bf, bobj, br)) => {
                        obj > bobj + TIE_EPS
                            || ((obj - bobj).abs() <= TIE_EPS && (r_rach < br || (r_rach == br && f < bf)))
                    }
                };
                if better {
                    best = Some((f, obj, r_rach));
                }
            }
        }
    }
    let (f, _, _) = best.expect("non-empty preamble set");
    ActionVector {
        groups: std::array::from_fn(|i| GroupAction::new(n_rach, f[i], n_repe[i])),
    }
}

/// Load-estimation based uplink resource configuration with fixed
/// repetitions per group and a fixed number of RACH periods.
#[derive(Debug, Clone)]
pub struct LeUrc {
    cfg: SimConfig,
    uplink: u64,
    n_repe: [u32; N_GROUPS],
    n_rach: u32,
    estimators: [LoadEstimator; N_GROUPS],
    v_unsc_prev: [u32; N_GROUPS],
}

impl LeUrc {
    pub fn new(cfg: &SimConfig, n_repe: [u32; N_GROUPS]) -> Result<Self, action::ActionError> {
        let n_rach = cfg.rach_set[0];
        let probe = ActionVector {
            groups: std::array::from_fn(|i| GroupAction::new(n_rach, cfg.prea_set[0], n_repe[i])),
        };
        probe.validate(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            uplink: action::uplink_re_budget(cfg)? as u64,
            n_repe,
            n_rach,
            estimators: Default::default(),
            v_unsc_prev: [0; N_GROUPS],
        })
    }

    pub fn estimates(&self) -> [LoadEstimate; N_GROUPS] {
        std::array::from_fn(|i| self.estimators[i].current())
    }
}

impl Controller for LeUrc {
    fn name(&self) -> String {
        let r = self.n_repe;
        format!("le-urc-[{},{},{}]", r[0], r[1], r[2])
    }

    fn reset(&mut self) {
        self.estimators = Default::default();
        self.v_unsc_prev = [0; N_GROUPS];
    }

    fn decide(&mut self) -> ActionVector {
        let d_hat = std::array::from_fn(|i| self.estimators[i].current().d_hat);
        le_urc_decide(d_hat, self.v_unsc_prev, self.n_repe, self.n_rach, &self.cfg, self.uplink)
    }

    fn observe(&mut self, obs: &ObservationU, action: &ActionVector, _reward: f64) {
        let cap = self.cfg.n_devices as f64;
        for i in 0..N_GROUPS {
            self.estimators[i].update(&obs.groups[i], &action.groups[i], cap);
            self.v_unsc_prev[i] = obs.groups[i].v_unsc;
        }
    }
}

/// Replays one fixed configuration every TTI.
#[derive(Debug, Clone)]
pub struct StaticController {
    action: ActionVector,
}

impl StaticController {
    pub fn new(action: ActionVector) -> Self {
        Self { action }
    }
}

impl Controller for StaticController {
    fn name(&self) -> String {
        "static".into()
    }

    fn decide(&mut self) -> ActionVector {
        self.action
    }
}

/// Uniform draw from the action sets, independently per variable.
pub fn random_decide<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> ActionVector {
    let mut pick = |set: &[u32]| set[rng.gen_range(0..set.len())];
    ActionVector {
        groups: std::array::from_fn(|_| {
            let n_rach = pick(&cfg.rach_set);
            let f_prea = pick(&cfg.prea_set);
            let n_repe = pick(&cfg.repe_set);
            GroupAction::new(n_rach, f_prea, n_repe)
        }),
    }
}

#[derive(Debug, Clone)]
pub struct RandomController {
    cfg: SimConfig,
    rng: ChaCha8Rng,
}

impl RandomController {
    pub fn new(cfg: &SimConfig, rng: ChaCha8Rng) -> Self {
        Self { cfg: cfg.clone(), rng }
    }
}

impl Controller for RandomController {
    fn name(&self) -> String {
        "random".into()
    }

    fn decide(&mut self) -> ActionVector {
        random_decide(&self.cfg, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, Stream};
    use proptest::prelude::*;

    const CAP: f64 = 30_000.0;

    #[test]
    fn zeta_examples() {
        let oracle = 0.5f64.ln() / (11.0f64 / 12.0).ln();
        assert!((zeta(12, 6.0, CAP) - oracle).abs() < 1e-12);
        assert!((zeta(12, 6.0, CAP) - 7.966167).abs() < 1e-6);
        assert_eq!(zeta(12, 12.0, CAP), 0.0);
        assert_eq!(zeta(12, 0.0, CAP), CAP);
    }

    #[test]
    fn estimate_examples() {
        assert_eq!(estimate_load(3, 5.0, 0.0, CAP), 6.0);
        assert!((estimate_load(0, 7.9659, -1.0, CAP) - 6.9659).abs() < 1e-12);
        assert_eq!(estimate_load(0, -4.0, 0.0, CAP), 0.0);
        assert_eq!(estimate_load(0, CAP, 10.0, CAP), CAP);
        assert_eq!(LoadEstimator::default().current().d_hat, 0.0);
    }

    #[test]
    fn estimator_recursion() {
        let ga = GroupAction::new(1, 12, 1);
        let mut est = LoadEstimator::default();
        let obs = |cp, ip| GroupObservation {
            v_cp: cp,
            v_ip: ip,
            ..Default::default()
        };
        // t=2: no trend yet
        let e2 = est.update(&obs(0, 6), &ga, CAP);
        assert_eq!(e2.delta, 0.0);
        assert!((e2.d_hat - zeta(12, 6.0, CAP)).abs() < 1e-12);
        // t=3: delta = D2 - D1 = D2 - 0
        let e3 = est.update(&obs(0, 12), &ga, CAP);
        assert!((e3.delta - e2.d_hat).abs() < 1e-12);
        assert!((e3.d_hat - e2.d_hat).abs() < 1e-12);
        // collisions bound it from below
        let e4 = est.update(&obs(5, 12), &ga, CAP);
        assert!(e4.d_hat >= 10.0);
    }

    #[test]
    fn expected_request_examples() {
        assert!((expected_requests(2.0, 12, 0) - 11.0 / 6.0).abs() < 1e-12);
        assert_eq!(expected_requests(0.0, 12, 7), 7.0);
        assert_eq!(expected_requests(1.0, 48, 3), 4.0);
    }

    #[test]
    fn zero_load_takes_smallest_allocation() {
        let cfg = SimConfig::default();
        let a = le_urc_decide([0.0; 3], [0; 3], [1, 4, 8], 1, &cfg, 15360);
        assert_eq!(a, ActionVector { groups: [GroupAction::new(1, 12, 1), GroupAction::new(1, 12, 4), GroupAction::new(1, 12, 8)] });
    }

    #[test]
    fn loaded_group_gets_most_preambles() {
        let cfg = SimConfig::default();
        let a = le_urc_decide([40.0, 0.0, 0.0], [0; 3], [1, 4, 8], 1, &cfg, 15360);
        assert_eq!(a.groups[0].f_prea, 48);
        assert_eq!((a.groups[1].f_prea, a.groups[2].f_prea), (12, 12));
        // single-group check over the four candidates
        let vals: Vec<f64> = [12, 24, 36, 48].iter().map(|&f| expected_requests(40.0, f, 0)).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn starved_budget_stays_feasible() {
        let cfg = SimConfig::default();
        let uplink = 15360;
        for load in [5.0, 50.0, 500.0, 5000.0] {
            let a = le_urc_decide([load; 3], [100; 3], [2, 8, 16], 1, &cfg, uplink);
            assert!(action::rach_re_cost(&a, &cfg) <= uplink);
        }
    }

    #[test]
    fn le_urc_controller_cycle() {
        let cfg = SimConfig::default();
        let mut c = LeUrc::new(&cfg, [1, 4, 8]).unwrap();
        let a = c.decide();
        assert_eq!(a.groups.map(|g| g.f_prea), [12, 12, 12]);
        let mut obs = ObservationU::default();
        obs.groups[2] = GroupObservation { v_cp: 10, v_sp: 1, v_ip: 1, v_succ: 0, v_unsc: 0 };
        c.observe(&obs, &a, 0.0);
        assert!(c.estimates()[2].d_hat >= 20.0);
        assert_eq!(c.decide().groups[2].f_prea, 48);
        c.reset();
        assert_eq!(c.estimates()[2].d_hat, 0.0);
        assert!(LeUrc::new(&cfg, [1, 3, 8]).is_err());
        assert_eq!(c.name(), "le-urc-[1,4,8]");
    }

    #[test]
    fn static_replays() {
        let a = ActionVector::uniform(GroupAction::new(1, 12, 1));
        let mut c = StaticController::new(a);
        assert!((0..5).all(|_| c.decide() == a));
    }

    #[test]
    fn random_support_and_uniformity() {
        let cfg = SimConfig::default();
        let mut rng = RngStream::new(3).substream(Stream::Exploration);
        let n = 10_000;
        let mut counts = vec![0usize; cfg.repe_set.len()];
        for _ in 0..n {
            let a = random_decide(&cfg, &mut rng);
            assert!(a.validate(&cfg).is_ok());
            counts[cfg.repe_set.iter().position(|&v| v == a.groups[1].n_repe).unwrap()] += 1;
        }
        let p = 1.0 / counts.len() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{c}");
        }
    }

    proptest! {
        #[test]
        fn estimate_respects_collision_bound(v_cp in 0u32..100, zeta_prev in -50.0f64..500.0, delta in -50.0f64..50.0) {
            let d = estimate_load(v_cp, zeta_prev, delta, CAP);
            prop_assert!(d >= 2.0 * v_cp as f64);
            prop_assert!(d.is_finite());
        }

        #[test]
        fn zeta_inverts_idle_moment(n in 0.0f64..200.0, fi in 0usize..4) {
            let f = [12u32, 24, 36, 48][fi];
            let fl = f as f64;
            let idle = fl * (1.0 - 1.0 / fl).powf(n);
            prop_assert!((zeta(f, idle, 1e9) - n).abs() < 1e-6 * (1.0 + n));
        }

        #[test]
        fn decide_is_enumeration_argmax(
            d in prop::array::uniform3(0.0f64..120.0),
            unsc in prop::array::uniform3(0u32..40),
            repe in prop::sample::select(vec![[1u32, 4, 8], [2, 8, 16], [1, 1, 1], [8, 16, 32]]),
        ) {
            let cfg = SimConfig::default();
            let uplink = 15360u64;
            let a = le_urc_decide(d, unsc, repe, 1, &cfg, uplink);
            // independent recomputation of the objective for all 64 candidates
            let objective = |f: [u32; 3]| -> f64 {
                let r_rach: u64 = 4 * (0..3).map(|i| f[i] as u64 * repe[i] as u64).sum::<u64>();
                let resid = uplink.saturating_sub(r_rach) as f64;
                (0..3).map(|i| {
                    let n = d[i];
                    let req = if n == 0.0 { 0.0 } else { n * (1.0 - 1.0 / f[i] as f64).powf(n - 1.0) } + unsc[i] as f64;
                    req.min(resid / (32.0 * repe[i] as f64))
                }).sum()
            };
            let chosen = objective(a.groups.map(|g| g.f_prea));
            for f0 in [12, 24, 36, 48] { for f1 in [12, 24, 36, 48] { for f2 in [12, 24, 36, 48] {
                prop_assert!(objective([f0, f1, f2]) <= chosen + 1e-9);
            }}}
        }
    }
}
