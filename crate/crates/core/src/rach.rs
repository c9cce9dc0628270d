//! Contention resolution for one CE group in one TTI.

use rand::Rng;
use thiserror::Error;

use crate::action::GroupAction;

/// How the eNB sees one (RACH period, preamble) slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreambleClass {
    Idle,
    Success(usize),
    Collision,
}

/// Per-device result of an attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RachFate {
    Success,
    CollisionFail,
    DetectionFail,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RachOutcome {
    pub v_cp: u32,
    pub v_sp: u32,
    pub v_ip: u32,
    pub fates: Vec<(usize, RachFate)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RachError {
    #[error("device {id} belongs to CE group {actual}, not {expected}")]
    WrongGroup {
        id: usize,
        actual: usize,
        expected: usize,
    },
}

/// One contender in a RACH round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contender {
    pub id: usize,
    pub group: usize,
}

/// Classifies a slot from its choosers and their individual detection flags.
///
/// A lone detected chooser succeeds. A lone undetected chooser leaves the slot
/// looking idle. Two or more choosers always collide; the eNB sees the
/// collision only if at least one copy was detected.
pub fn classify_preamble(choosers: &[(usize, bool)]) -> PreambleClass {
    match choosers {
        [] => PreambleClass::Idle,
        [(id, true)] => PreambleClass::Success(*id),
        [(_, false)] => PreambleClass::Idle,
        many if many.iter().any(|&(_, detected)| detected) => PreambleClass::Collision,
        _ => PreambleClass::Idle,
    }
}

/// Runs one group's random access: every contender picks a RACH period and a
/// preamble uniformly, draws its own detection via `detect`, and every slot
/// is classified. Fates are reported in contender order.
pub fn run_rach_group<R, D>(
    contenders: &[Contender],
    group: usize,
    ga: &GroupAction,
    rng: &mut R,
    mut detect: D,
) -> Result<RachOutcome, RachError>
where
    R: Rng + ?Sized,
    D: FnMut(&Contender) -> bool,
{
    let slots = (ga.n_rach * ga.f_prea) as usize;
    let mut choosers: Vec<Vec<(usize, bool)>> = vec![Vec::new(); slots];
    let mut slot_of = Vec::with_capacity(contenders.len());
    for c in contenders {
        if c.group != group {
            return Err(RachError::WrongGroup {
                id: c.id,
                actual: c.group,
                expected: group,
            });
        }
        let period = rng.gen_range(0..ga.n_rach) as usize;
        let preamble = rng.gen_range(0..ga.f_prea) as usize;
        let slot = period * ga.f_prea as usize + preamble;
        choosers[slot].push((c.id, detect(c)));
        slot_of.push(slot);
    }

    let mut out = RachOutcome::default();
    for slot in &choosers {
        match classify_preamble(slot) {
            PreambleClass::Idle => out.v_ip += 1,
            PreambleClass::Success(_) => out.v_sp += 1,
            PreambleClass::Collision => out.v_cp += 1,
        }
    }
    out.fates = contenders
        .iter()
        .zip(&slot_of)
        .map(|(c, &slot)| {
            let fate = match choosers[slot].as_slice() {
                [(_, true)] => RachFate::Success,
                [(_, false)] => RachFate::DetectionFail,
                _ => RachFate::CollisionFail,
            };
            (c.id, fate)
        })
        .collect();
    Ok(out)
}

/// Expected number of singleton slots when `n` contenders spread uniformly
/// over `m` slots: `n (1 - 1/m)^(n-1)`.
pub fn expected_singletons(n: f64, m: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    n * (1.0 - 1.0 / m).powf(n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn contenders(n: usize, group: usize) -> Vec<Contender> {
        (0..n).map(|id| Contender { id, group }).collect()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_preamble(&[]), PreambleClass::Idle);
        assert_eq!(classify_preamble(&[(1, true)]), PreambleClass::Success(1));
        assert_eq!(classify_preamble(&[(1, false)]), PreambleClass::Idle);
        assert_eq!(classify_preamble(&[(1, true), (2, false)]), PreambleClass::Collision);
        assert_eq!(classify_preamble(&[(1, false), (2, false)]), PreambleClass::Idle);
    }

    #[test]
    fn singleton_detected() {
        let mut rng = RngStream::new(1).substream(Stream::PreambleChoice);
        let out = run_rach_group(&contenders(1, 0), 0, &GroupAction::new(1, 12, 1), &mut rng, |_| true).unwrap();
        assert_eq!((out.v_sp, out.v_ip, out.v_cp), (1, 11, 0));
        assert_eq!(out.fates, vec![(0, RachFate::Success)]);
    }

    #[test]
    fn singleton_undetected_looks_idle() {
        let mut rng = RngStream::new(1).substream(Stream::PreambleChoice);
        let out = run_rach_group(&contenders(1, 2), 2, &GroupAction::new(2, 12, 1), &mut rng, |_| false).unwrap();
        assert_eq!((out.v_sp, out.v_ip, out.v_cp), (0, 24, 0));
        assert_eq!(out.fates, vec![(0, RachFate::DetectionFail)]);
    }

    #[test]
    fn forced_collision() {
        // a single preamble and period forces both devices onto one slot
        let mut rng = RngStream::new(1).substream(Stream::PreambleChoice);
        let out = run_rach_group(&contenders(2, 1), 1, &GroupAction::new(1, 1, 1), &mut rng, |_| true).unwrap();
        assert_eq!((out.v_cp, out.v_sp, out.v_ip), (1, 0, 0));
        assert!(out.fates.iter().all(|&(_, f)| f == RachFate::CollisionFail));
    }

    #[test]
    fn wrong_group_rejected() {
        let mut rng = RngStream::new(1).substream(Stream::PreambleChoice);
        let c = [Contender { id: 4, group: 1 }];
        assert_eq!(
            run_rach_group(&c, 0, &GroupAction::new(1, 12, 1), &mut rng, |_| true),
            Err(RachError::WrongGroup {
                id: 4,
                actual: 1,
                expected: 0
            })
        );
    }

    #[test]
    fn singleton_expectation() {
        let mut rng = RngStream::new(9).substream(Stream::PreambleChoice);
        let trials = 10_000;
        let ga = GroupAction::new(1, 48, 1);
        let c = contenders(10, 0);
        let samples: Vec<f64> = (0..trials)
            .map(|_| run_rach_group(&c, 0, &ga, &mut rng, |_| true).unwrap().v_sp as f64)
            .collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let expected = expected_singletons(10.0, 48.0);
        assert!((expected - 8.2739).abs() < 1e-3);
        assert!((mean - expected).abs() <= 3.0 * (var / trials as f64).sqrt());
    }

    proptest! {
        #[test]
        fn slots_conserved(n in 0usize..60, r in 0usize..3, f in 0usize..4, seed: u64, p in 0.0f64..1.0) {
            let ga = GroupAction::new([1, 2, 4][r], [12, 24, 36, 48][f], 1);
            let mut rng = RngStream::new(seed).substream(Stream::PreambleChoice);
            let mut det = RngStream::new(seed).substream(Stream::Fading);
            let out = run_rach_group(&contenders(n, 0), 0, &ga, &mut rng, |_| det.gen::<f64>() < p).unwrap();
            prop_assert_eq!(out.v_cp + out.v_sp + out.v_ip, ga.rao());
            let successes = out.fates.iter().filter(|f| f.1 == RachFate::Success).count();
            prop_assert_eq!(out.v_sp as usize, successes);
            prop_assert_eq!(out.fates.len(), n);
        }
    }
}
