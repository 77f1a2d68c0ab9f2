//! Type-1 ANFIS comparators built as collapsed interval type-2 rule bases.
//!
//! They reuse the entire inference and training stack: with `c1 == c2` both
//! bounds coincide, the interval width is zero and `q` has no effect.

use crate::init::{build_rulebase, InitConfig, InitError};
use crate::model::{Mode, RuleBase};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    /// Constant consequents (ANFIS-0).
    Zero,
    /// Linear consequents (ANFIS-1).
    One,
}

impl Order {
    pub fn mode(self) -> Mode {
        match self {
            Order::Zero => Mode::Type1Order0,
            Order::One => Mode::Type1Order1,
        }
    }
}

pub fn make_type1(
    cfg: &InitConfig,
    order: Order,
    ranges: &[(f64, f64)],
) -> Result<RuleBase, InitError> {
    let cfg = InitConfig {
        mode: order.mode(),
        ..cfg.clone()
    };
    build_rulebase(&cfg, ranges)
}
