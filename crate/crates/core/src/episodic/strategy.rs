use std::fmt;

use crate::error::{Error, Result};

/// How `N_t` is produced from the acquired sets after episode `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateRule {
    /// `N_t = N_{t-1} ⊗ {A_t}`
    PrevOnRecent,
    /// `N_t = N_{t-1} ⊗ {∪A_i}`
    PrevOnAccum,
    /// `N_t = N_0 ⊗ {A_t}`
    InitOnRecent,
    /// `N_t = N_0 ⊗ {∪A_i}`
    InitOnAccum,
}

impl UpdateRule {
    pub fn from_initial(self) -> bool {
        matches!(self, UpdateRule::InitOnRecent | UpdateRule::InitOnAccum)
    }

    pub fn accumulates(self) -> bool {
        matches!(self, UpdateRule::PrevOnAccum | UpdateRule::InitOnAccum)
    }

    pub fn formula(self) -> &'static str {
        match self {
            UpdateRule::PrevOnRecent => "N_t = N_{t-1} ⊗ {A_t}",
            UpdateRule::PrevOnAccum => "N_t = N_{t-1} ⊗ {∪A_i}",
            UpdateRule::InitOnRecent => "N_t = N_0 ⊗ {A_t}",
            UpdateRule::InitOnAccum => "N_t = N_0 ⊗ {∪A_i}",
        }
    }
}

/// How the final network is obtained when stopping after episode `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FinalRule {
    /// `N_f = N_k`
    LastNetwork,
    /// `N_f = N_k ⊗ {∪A_i}`
    FineTuneAccum,
    /// `N_f = N_0 ⊗ {∪A_i}`
    InitOnAccum,
}

impl FinalRule {
    pub fn formula(self) -> &'static str {
        match self {
            FinalRule::LastNetwork => "N_f = N_k",
            FinalRule::FineTuneAccum => "N_f = N_k ⊗ {∪A_i}",
            FinalRule::InitOnAccum => "N_f = N_0 ⊗ {∪A_i}",
        }
    }
}

/// An episodic strategy: one update rule plus one final-training rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActiveStrategy {
    pub update: UpdateRule,
    pub final_rule: FinalRule,
}

/// Default fraction of the training pool used by the random-subset baseline.
pub const DEFAULT_RANDOM_FRACTION: f64 = 0.74;

/// The seven evaluated strategies, numbered as in the results table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategySpec {
    Active { id: u8, rules: ActiveStrategy },
    /// Regular training on the full training pool.
    FullTraining,
    /// Regular training on a random subset of the pool.
    RandomSubset { fraction: f64 },
}

impl StrategySpec {
    pub const IDS: [u8; 7] = [1, 2, 3, 4, 5, 6, 7];

    pub fn from_id(id: u8) -> Result<Self> {
        Self::with_fraction(id, DEFAULT_RANDOM_FRACTION)
    }

    pub fn with_fraction(id: u8, random_fraction: f64) -> Result<Self> {
        use FinalRule as F;
        use UpdateRule as U;
        let active = |update, final_rule| StrategySpec::Active {
            id,
            rules: ActiveStrategy { update, final_rule },
        };
        Ok(match id {
            1 => active(U::PrevOnRecent, F::FineTuneAccum),
            2 => active(U::PrevOnAccum, F::LastNetwork),
            3 => active(U::PrevOnRecent, F::LastNetwork),
            4 => active(U::InitOnRecent, F::InitOnAccum),
            5 => active(U::InitOnAccum, F::InitOnAccum),
            6 => StrategySpec::FullTraining,
            7 => {
                if !(random_fraction > 0.0 && random_fraction <= 1.0) {
                    return Err(Error::invalid(format!(
                        "random subset fraction must be in (0, 1], got {random_fraction}"
                    )));
                }
                StrategySpec::RandomSubset {
                    fraction: random_fraction,
                }
            }
            _ => return Err(Error::invalid(format!("unknown strategy id {id}"))),
        })
    }

    pub fn id(&self) -> u8 {
        match self {
            StrategySpec::Active { id, .. } => *id,
            StrategySpec::FullTraining => 6,
            StrategySpec::RandomSubset { .. } => 7,
        }
    }

    pub fn active(&self) -> Option<ActiveStrategy> {
        match self {
            StrategySpec::Active { rules, .. } => Some(*rules),
            _ => None,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.active().is_none()
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::Active { id, rules } => write!(
                f,
                "strategy {id}: {}; {}",
                rules.update.formula(),
                rules.final_rule.formula()
            ),
            StrategySpec::FullTraining => f.write_str("strategy 6: full training set"),
            StrategySpec::RandomSubset { fraction } => {
                write!(f, "strategy 7: random {:.0}% of the training set", fraction * 100.0)
            }
        }
    }
}

/// Fraction of the training pool that received labels: the initial split
/// plus everything acquired so far.
pub fn used_fraction(initial_size: usize, accumulated_count: usize, full_train_size: usize) -> Result<f64> {
    if full_train_size == 0 {
        return Err(Error::invalid("full training set size must be positive"));
    }
    let used = initial_size + accumulated_count;
    if used > full_train_size {
        return Err(Error::invalid(format!(
            "{used} labeled images exceed the {full_train_size}-image pool"
        )));
    }
    Ok(used as f64 / full_train_size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_mapping() {
        let rules = |id| StrategySpec::from_id(id).unwrap().active().unwrap();
        assert_eq!(rules(1), ActiveStrategy { update: UpdateRule::PrevOnRecent, final_rule: FinalRule::FineTuneAccum });
        assert_eq!(rules(2), ActiveStrategy { update: UpdateRule::PrevOnAccum, final_rule: FinalRule::LastNetwork });
        assert_eq!(rules(3), ActiveStrategy { update: UpdateRule::PrevOnRecent, final_rule: FinalRule::LastNetwork });
        assert_eq!(rules(4), ActiveStrategy { update: UpdateRule::InitOnRecent, final_rule: FinalRule::InitOnAccum });
        assert_eq!(rules(5), ActiveStrategy { update: UpdateRule::InitOnAccum, final_rule: FinalRule::InitOnAccum });
        assert_eq!(StrategySpec::from_id(6).unwrap(), StrategySpec::FullTraining);
        assert_eq!(
            StrategySpec::from_id(7).unwrap(),
            StrategySpec::RandomSubset { fraction: 0.74 }
        );
        assert!(StrategySpec::from_id(0).is_err());
        assert!(StrategySpec::from_id(8).is_err());
        assert!(StrategySpec::with_fraction(7, 0.0).is_err());
        for id in StrategySpec::IDS {
            assert_eq!(StrategySpec::from_id(id).unwrap().id(), id);
        }
    }

    #[test]
    fn used_fraction_examples() {
        assert!((used_fraction(5000, 32000, 50000).unwrap() - 0.74).abs() < 1e-15);
        assert!((used_fraction(5000, 0, 50000).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(used_fraction(0, 50000, 50000).unwrap(), 1.0);
        assert!(used_fraction(0, 1, 0).is_err());
        assert!(used_fraction(10, 1, 10).is_err());
    }
}
