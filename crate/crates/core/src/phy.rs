//! Geometry, link budget, CE group assignment and preamble detection.
//!
//! Distances are in km; the path gain is `u^-eta` with no intercept. Symbol
//! groups fade independently with unit-mean exponential power gain, and a
//! repetition is decoded only when all four of its symbol groups clear the
//! SNR threshold.

use rand::Rng;
use rand_distr::Exp1;

use crate::config::SimConfig;

/// Symbol groups per preamble repetition.
pub const SYMBOL_GROUPS: i32 = 4;

/// `n` i.i.d. radial distances of points uniform on a disk of `radius_km`.
pub fn place_devices<R: Rng + ?Sized>(n: usize, radius_km: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        // 1 - U lies in (0, 1], keeping every distance strictly positive.
        .map(|_| radius_km * (1.0 - rng.gen::<f64>()).sqrt())
        .collect()
}

/// Broadcast reference power seen at `distance_km`, in dBm.
pub fn rsrp_dbm(distance_km: f64, cfg: &SimConfig) -> f64 {
    cfg.bcast_power_dbm - 10.0 * cfg.path_loss_exponent * distance_km.log10()
}

/// CE group from the RSRP rule: 0 above threshold 1, 1 between the
/// thresholds (both inclusive), 2 below threshold 2.
pub fn assign_ce_group(distance_km: f64, cfg: &SimConfig) -> usize {
    let rsrp = rsrp_dbm(distance_km, cfg);
    if rsrp > cfg.rsrp_threshold1_dbm {
        0
    } else if rsrp >= cfg.rsrp_threshold2_dbm {
        1
    } else {
        2
    }
}

/// Preamble transmit power in mW. Group 0 inverts the path loss towards the
/// target received power, capped at the device maximum; groups 1 and 2 always
/// transmit at the maximum.
pub fn preamble_tx_power_mw(distance_km: f64, group: usize, cfg: &SimConfig) -> f64 {
    let p_max = cfg.max_tx_power_mw();
    if group == 0 {
        let inversion = cfg.power_ctrl_target_mw() * distance_km.powf(cfg.path_loss_exponent);
        inversion.min(p_max)
    } else {
        p_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub distance_km: f64,
    pub tx_power_mw: f64,
    pub rx_mean_power_mw: f64,
    pub mean_snr_linear: f64,
}

impl LinkBudget {
    pub fn new(distance_km: f64, group: usize, cfg: &SimConfig) -> Self {
        let tx_power_mw = preamble_tx_power_mw(distance_km, group, cfg);
        let rx_mean_power_mw =
            tx_power_mw * distance_km.powf(-cfg.path_loss_exponent) * cfg.snr_offset_linear();
        Self {
            distance_km,
            tx_power_mw,
            rx_mean_power_mw,
            mean_snr_linear: rx_mean_power_mw / cfg.noise_power_mw(),
        }
    }

    /// A link with a given mean SNR, for analysis and tests.
    pub fn with_mean_snr(mean_snr_linear: f64) -> Self {
        Self {
            distance_km: f64::NAN,
            tx_power_mw: f64::NAN,
            rx_mean_power_mw: f64::NAN,
            mean_snr_linear,
        }
    }
}

/// Closed-form detection probability for a threshold-to-mean-SNR ratio.
///
/// `p_sg = exp(-ratio)` per symbol group; a repetition succeeds with `p_sg^4`;
/// the preamble is detected if any of `n_repe` repetitions succeeds.
pub fn detection_probability_for_ratio(ratio: f64, n_repe: u32) -> f64 {
    let p_rep = (-(SYMBOL_GROUPS as f64) * ratio).exp();
    if p_rep >= 1.0 {
        return 1.0;
    }
    // 1 - (1 - p_rep)^n without cancellation for small p_rep
    -((n_repe as f64) * (-p_rep).ln_1p()).exp_m1()
}

pub fn detection_probability(link: &LinkBudget, n_repe: u32, cfg: &SimConfig) -> f64 {
    detection_probability_for_ratio(cfg.snr_threshold_linear() / link.mean_snr_linear, n_repe)
}

/// Draws the fading of every symbol group of every repetition (stopping at
/// the first decoded repetition) and reports whether the preamble is detected.
pub fn sample_detection<R: Rng + ?Sized>(
    link: &LinkBudget,
    n_repe: u32,
    cfg: &SimConfig,
    rng: &mut R,
) -> bool {
    sample_detection_threshold(link.mean_snr_linear, cfg.snr_threshold_linear(), n_repe, rng)
}

pub(crate) fn sample_detection_threshold<R: Rng + ?Sized>(
    mean_snr: f64,
    threshold: f64,
    n_repe: u32,
    rng: &mut R,
) -> bool {
    (0..n_repe).any(|_| {
        let mut all = true;
        for _ in 0..SYMBOL_GROUPS {
            let h: f64 = rng.sample(Exp1);
            all &= h * mean_snr >= threshold;
        }
        all
    })
}

/// Distances at which the RSRP equals each threshold, i.e. the CE ring edges.
pub fn ce_boundaries_km(cfg: &SimConfig) -> (f64, f64) {
    let edge = |thr: f64| 10f64.powf((cfg.bcast_power_dbm - thr) / (10.0 * cfg.path_loss_exponent));
    (edge(cfg.rsrp_threshold1_dbm), edge(cfg.rsrp_threshold2_dbm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::db_to_linear;
    use crate::rng::{RngStream, Stream};
    use proptest::prelude::*;

    #[test]
    fn ce_group_examples() {
        let cfg = SimConfig::default();
        assert_eq!(assign_ce_group(5.0, &cfg), 0);
        assert_eq!(assign_ce_group(10.0, &cfg), 1);
        assert_eq!(assign_ce_group(12.0, &cfg), 2);
        assert!((rsrp_dbm(5.0, &cfg) - 7.0412).abs() < 1e-4);
        assert!((rsrp_dbm(12.0, &cfg) + 8.1673).abs() < 1e-4);
    }

    #[test]
    fn ce_boundaries() {
        let cfg = SimConfig::default();
        let (b1, b2) = ce_boundaries_km(&cfg);
        assert!((b1 - 7.4989).abs() < 1e-4, "{b1}");
        assert!((b2 - 10.0).abs() < 1e-12, "{b2}");
        assert_eq!(assign_ce_group(b1 - 1e-9, &cfg), 0);
        assert_eq!(assign_ce_group(b1 + 1e-9, &cfg), 1);
        assert_eq!(assign_ce_group(10.0 + 1e-9, &cfg), 2);
    }

    #[test]
    fn tx_power_branches() {
        let mut cfg = SimConfig::default();
        let p_max = cfg.max_tx_power_mw();
        assert_eq!(preamble_tx_power_mw(3.0, 1, &cfg), p_max);
        assert_eq!(preamble_tx_power_mw(11.0, 2, &cfg), p_max);
        // literal target power is far above the device maximum
        assert_eq!(preamble_tx_power_mw(3.0, 0, &cfg), p_max);

        cfg.power_ctrl_target_dbm = -10.0;
        let u = 2.0;
        let p = preamble_tx_power_mw(u, 0, &cfg);
        let expected = db_to_linear(-10.0) * u.powi(4);
        assert!((p - expected).abs() < 1e-15);
        let rx = LinkBudget::new(u, 0, &cfg).rx_mean_power_mw;
        assert!((rx - db_to_linear(-10.0)).abs() < 1e-15);
        // far enough away the inversion clips
        assert_eq!(preamble_tx_power_mw(11.0, 0, &cfg), p_max);
    }

    #[test]
    fn closed_form_examples() {
        assert!((detection_probability_for_ratio(1.0, 1) - 0.018316).abs() < 1e-6);
        assert!((detection_probability_for_ratio(1.0, 2) - 0.036296).abs() < 1e-6);
        assert_eq!(detection_probability_for_ratio(0.0, 1), 1.0);
        assert_eq!(detection_probability_for_ratio(0.0, 7), 1.0);
        let cfg = SimConfig {
            snr_threshold_db: f64::NEG_INFINITY,
            ..SimConfig::default()
        };
        assert_eq!(detection_probability(&LinkBudget::with_mean_snr(1e-9), 3, &cfg), 1.0);
    }

    #[test]
    fn zero_threshold_always_detects() {
        let cfg = SimConfig {
            snr_threshold_db: f64::NEG_INFINITY,
            ..SimConfig::default()
        };
        let mut rng = RngStream::new(1).substream(Stream::Fading);
        let link = LinkBudget::with_mean_snr(1e-6);
        assert!((0..1000).all(|_| sample_detection(&link, 1, &cfg, &mut rng)));
    }

    #[test]
    fn vanishing_snr_never_detects() {
        let cfg = SimConfig::default();
        let mut rng = RngStream::new(2).substream(Stream::Fading);
        let link = LinkBudget::with_mean_snr(1e-3);
        let hits = (0..10_000).filter(|_| sample_detection(&link, 4, &cfg, &mut rng)).count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let cfg = SimConfig::default();
        let mut rng = RngStream::new(3).substream(Stream::Fading);
        for (snr, n) in [(1.0, 1), (3.0, 2), (0.8, 8)] {
            let link = LinkBudget::with_mean_snr(snr);
            let p = detection_probability(&link, n, &cfg);
            let trials = 100_000;
            let hits = (0..trials).filter(|_| sample_detection(&link, n, &cfg, &mut rng)).count();
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((hits as f64 / trials as f64 - p).abs() <= 3.0 * sigma, "snr {snr} n {n}");
        }
    }

    #[test]
    fn uniform_disk_moments() {
        let mut rng = RngStream::new(4).substream(Stream::Placement);
        let mut d = place_devices(30_000, 12.0, &mut rng);
        assert!(d.iter().all(|&u| u > 0.0 && u <= 12.0));
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!((mean - 8.0).abs() < 0.05, "{mean}");
        d.sort_by(f64::total_cmp);
        let median = d[d.len() / 2];
        assert!((median - 12.0 / 2f64.sqrt()).abs() < 0.06, "{median}");
    }

    proptest! {
        #[test]
        fn detection_monotone(ratio in 1e-3f64..20.0, n in 1u32..32, scale in 1.0f64..4.0) {
            let p = detection_probability_for_ratio(ratio, n);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(detection_probability_for_ratio(ratio, n + 1) >= p);
            // higher mean SNR is a smaller ratio
            prop_assert!(detection_probability_for_ratio(ratio / scale, n) >= p);
            let single = (-ratio).exp().powi(4);
            prop_assert!((detection_probability_for_ratio(ratio, 1) - single).abs() <= 1e-15 + 1e-12 * single);
        }

        #[test]
        fn ce_group_partitions(u in 1e-3f64..12.0) {
            let cfg = SimConfig::default();
            let g = assign_ce_group(u, &cfg);
            let (b1, b2) = ce_boundaries_km(&cfg);
            let expected = if u < b1 { 0 } else if u <= b2 { 1 } else { 2 };
            // skip the floating-point knife edge at the first boundary
            if (u - b1).abs() > 1e-9 {
                prop_assert_eq!(g, expected);
            }
        }
    }
}
