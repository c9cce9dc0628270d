//! Per-TTI configuration decisions and the uplink resource-element budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;

/// Number of coverage-enhancement groups.
pub const N_GROUPS: usize = 3;

/// Sub-carriers on the uplink carrier; one RE is one sub-carrier for one 2 ms slot.
pub const UPLINK_SUBCARRIERS: u32 = 48;
pub const SLOT_MS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupAction {
    pub n_rach: u32,
    pub f_prea: u32,
    pub n_repe: u32,
}

impl GroupAction {
    pub const fn new(n_rach: u32, f_prea: u32, n_repe: u32) -> Self {
        Self {
            n_rach,
            f_prea,
            n_repe,
        }
    }

    /// Random-access opportunities: preamble-period slots offered this TTI.
    pub fn rao(&self) -> u32 {
        self.n_rach * self.f_prea
    }
}

/// The nine decision variables, indexed by CE group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionVector {
    pub groups: [GroupAction; N_GROUPS],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("group {group}: {field} = {value} is not in the configured set")]
    OutOfSet {
        group: usize,
        field: &'static str,
        value: u32,
    },
    #[error("tti_ms = {0} is not a multiple of the 2 ms slot")]
    TtiNotSlotAligned(u32),
}

impl ActionVector {
    pub const fn uniform(ga: GroupAction) -> Self {
        Self { groups: [ga; N_GROUPS] }
    }

    /// The smallest value of every variable.
    pub fn minimal(cfg: &SimConfig) -> Self {
        Self::uniform(GroupAction::new(cfg.rach_set[0], cfg.prea_set[0], cfg.repe_set[0]))
    }

    pub fn validate(&self, cfg: &SimConfig) -> Result<(), ActionError> {
        for (group, ga) in self.groups.iter().enumerate() {
            for (field, value, set) in [
                ("n_rach", ga.n_rach, &cfg.rach_set),
                ("f_prea", ga.f_prea, &cfg.prea_set),
                ("n_repe", ga.n_repe, &cfg.repe_set),
            ] {
                if !set.contains(&value) {
                    return Err(ActionError::OutOfSet { group, field, value });
                }
            }
        }
        Ok(())
    }

    /// Set indices `[n_rach, f_prea, n_repe]` per group.
    pub fn indices(&self, cfg: &SimConfig) -> Result<[[usize; 3]; N_GROUPS], ActionError> {
        let mut out = [[0; 3]; N_GROUPS];
        for (group, ga) in self.groups.iter().enumerate() {
            for (slot, (field, value, set)) in [
                ("n_rach", ga.n_rach, &cfg.rach_set),
                ("f_prea", ga.f_prea, &cfg.prea_set),
                ("n_repe", ga.n_repe, &cfg.repe_set),
            ]
            .into_iter()
            .enumerate()
            {
                out[group][slot] = set
                    .iter()
                    .position(|&v| v == value)
                    .ok_or(ActionError::OutOfSet { group, field, value })?;
            }
        }
        Ok(out)
    }
}

/// REs available on the uplink in one TTI.
pub fn uplink_re_budget(cfg: &SimConfig) -> Result<u32, ActionError> {
    if cfg.tti_ms % SLOT_MS != 0 {
        return Err(ActionError::TtiNotSlotAligned(cfg.tti_ms));
    }
    Ok(UPLINK_SUBCARRIERS * (cfg.tti_ms / SLOT_MS))
}

/// REs consumed by the random-access procedure of all three groups.
pub fn rach_re_cost(a: &ActionVector, cfg: &SimConfig) -> u64 {
    let per_preamble: u64 = a
        .groups
        .iter()
        .map(|g| g.n_rach as u64 * g.n_repe as u64 * g.f_prea as u64)
        .sum();
    cfg.b_rach as u64 * per_preamble
}

/// REs needed to serve one connected device of `group`.
pub fn data_re_per_device(group: usize, a: &ActionVector, cfg: &SimConfig) -> u64 {
    cfg.b_data as u64 * a.groups[group].n_repe as u64
}

/// REs left for data after the random-access allocation, clamped at zero.
pub fn data_re_budget(a: &ActionVector, cfg: &SimConfig) -> Result<u64, ActionError> {
    Ok((uplink_re_budget(cfg)? as u64).saturating_sub(rach_re_cost(a, cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uplink_budget_examples() {
        let mut cfg = SimConfig::default();
        assert_eq!(uplink_re_budget(&cfg), Ok(15360));
        cfg.tti_ms = 2;
        assert_eq!(uplink_re_budget(&cfg), Ok(48));
        cfg.tti_ms = 4;
        assert_eq!(uplink_re_budget(&cfg), Ok(96));
        cfg.tti_ms = 5;
        assert_eq!(uplink_re_budget(&cfg), Err(ActionError::TtiNotSlotAligned(5)));
    }

    #[test]
    fn rach_cost_examples() {
        let cfg = SimConfig::default();
        let low = ActionVector::uniform(GroupAction::new(1, 12, 1));
        assert_eq!(rach_re_cost(&low, &cfg), 144);
        let high = ActionVector::uniform(GroupAction::new(4, 48, 32));
        assert_eq!(rach_re_cost(&high, &cfg), 73728);
        assert_eq!(data_re_budget(&high, &cfg), Ok(0));
        assert_eq!(data_re_budget(&low, &cfg), Ok(15360 - 144));
    }

    #[test]
    fn data_cost_examples() {
        let cfg = SimConfig::default();
        let mut a = ActionVector::uniform(GroupAction::new(1, 12, 1));
        assert_eq!(data_re_per_device(0, &a, &cfg), 32);
        a.groups[1].n_repe = 2;
        assert_eq!(data_re_per_device(1, &a, &cfg), 64);
        a.groups[2].n_repe = 32;
        assert_eq!(data_re_per_device(2, &a, &cfg), 1024);
    }

    #[test]
    fn validate_and_indices() {
        let cfg = SimConfig::default();
        let a = ActionVector {
            groups: [
                GroupAction::new(1, 12, 1),
                GroupAction::new(2, 36, 8),
                GroupAction::new(4, 48, 32),
            ],
        };
        assert!(a.validate(&cfg).is_ok());
        assert_eq!(a.indices(&cfg).unwrap(), [[0, 0, 0], [1, 2, 3], [2, 3, 5]]);
        let mut bad = a;
        bad.groups[1].f_prea = 13;
        assert_eq!(
            bad.validate(&cfg),
            Err(ActionError::OutOfSet {
                group: 1,
                field: "f_prea",
                value: 13
            })
        );
    }

    fn group_action() -> impl Strategy<Value = GroupAction> {
        (
            prop::sample::select(vec![1u32, 2, 4]),
            prop::sample::select(vec![12u32, 24, 36, 48]),
            prop::sample::select(vec![1u32, 2, 4, 8, 16, 32]),
        )
            .prop_map(|(r, f, n)| GroupAction::new(r, f, n))
    }

    proptest! {
        #[test]
        fn rach_cost_additive_and_monotone(
            g0 in group_action(), g1 in group_action(), g2 in group_action(),
            which in 0usize..3, field in 0usize..3,
        ) {
            let cfg = SimConfig::default();
            let a = ActionVector { groups: [g0, g1, g2] };
            let parts: u64 = a.groups.iter()
                .map(|g| rach_re_cost(&ActionVector::uniform(*g), &cfg) / 3)
                .sum();
            prop_assert_eq!(rach_re_cost(&a, &cfg), parts);

            // bump one variable to the next set value, cost must not drop
            let mut b = a;
            let ga = &mut b.groups[which];
            let (val, set) = match field {
                0 => (&mut ga.n_rach, &cfg.rach_set),
                1 => (&mut ga.f_prea, &cfg.prea_set),
                _ => (&mut ga.n_repe, &cfg.repe_set),
            };
            let idx = set.iter().position(|v| v == val).unwrap();
            if idx + 1 < set.len() {
                *val = set[idx + 1];
            }
            prop_assert!(rach_re_cost(&b, &cfg) >= rach_re_cost(&a, &cfg));
        }
    }
}
