//! Rule-base types for the interval type-2 TSK model.
//!
//! A rule reads `IF x_1 is A_1 AND ... AND x_F is A_F THEN y = w·x + b`, where
//! every `A_f` is a Gaussian membership function whose mean is only known to
//! lie in `[c1, c2]`. Collapsing that interval (`c1 == c2`) recovers an
//! ordinary type-1 ANFIS rule, which is how the baselines are represented.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Smallest admissible Gaussian spread.
pub const SIGMA_MIN: f64 = 0.05;

/// Smallest admissible width of the uncertain-mean interval in IT2 mode.
pub const MIN_SEPARATION: f64 = 0.05;

/// Which family of model a [`RuleBase`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Interval type-2 antecedents with first-order consequents.
    #[serde(rename = "IT2")]
    It2,
    /// Type-1 antecedents, constant consequents (ANFIS-0).
    #[serde(rename = "TYPE1_ORDER0")]
    Type1Order0,
    /// Type-1 antecedents, linear consequents (ANFIS-1).
    #[serde(rename = "TYPE1_ORDER1")]
    Type1Order1,
}

impl Mode {
    pub fn is_type1(self) -> bool {
        !matches!(self, Mode::It2)
    }

    /// Short name used on the command line and in sweep output.
    pub fn cli_name(self) -> &'static str {
        match self {
            Mode::It2 => "it2",
            Mode::Type1Order0 => "anfis0",
            Mode::Type1Order1 => "anfis1",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "it2" => Ok(Mode::It2),
            "anfis0" | "type1_order0" => Ok(Mode::Type1Order0),
            "anfis1" | "type1_order1" => Ok(Mode::Type1Order1),
            other => Err(format!(
                "unknown mode `{other}` (expected it2, anfis0 or anfis1)"
            )),
        }
    }
}

/// Gaussian membership function with an uncertain mean in `[c1, c2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Antecedent {
    pub c1: f64,
    pub c2: f64,
    pub sigma: f64,
}

impl Antecedent {
    pub fn new(c1: f64, c2: f64, sigma: f64) -> Self {
        Self { c1, c2, sigma }
    }

    /// Type-1 Gaussian centred at `c`.
    pub fn collapsed(c: f64, sigma: f64) -> Self {
        Self {
            c1: c,
            c2: c,
            sigma,
        }
    }

    /// Midpoint of the uncertain-mean interval; the lower membership switches
    /// branches here.
    #[inline]
    pub fn mid(&self) -> f64 {
        0.5 * (self.c1 + self.c2)
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.c2 - self.c1
    }
}

/// Linear rule output `w·x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consequent {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Consequent {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub antecedents: Vec<Antecedent>,
    pub consequent: Consequent,
}

/// Ways a [`RuleBase`] can fail its structural invariants.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuleBaseError {
    #[error("rule base must contain at least one rule")]
    NoRules,
    #[error("rules must have at least one antecedent")]
    NoFeatures,
    #[error("rule {rule} has {found} {what} entries, expected {expected}")]
    Ragged {
        rule: usize,
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("type-reduction factor q = {0} lies outside [0, 1]")]
    QOutOfRange(f64),
    #[error("rule {rule}, feature {feature}: {reason}")]
    BadAntecedent {
        rule: usize,
        feature: usize,
        reason: String,
    },
    #[error("rule {rule}: non-finite consequent parameter")]
    NonFiniteConsequent { rule: usize },
    #[error("rule {rule}: zero-order model has non-zero weight")]
    NonZeroOrder0Weight { rule: usize },
}

/// `R` rules over `F` features plus the type-reduction factor `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleBase {
    pub rules: Vec<Rule>,
    pub q: f64,
    pub mode: Mode,
}

impl RuleBase {
    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn n_features(&self) -> usize {
        self.rules.first().map_or(0, |r| r.antecedents.len())
    }

    /// Number of consequent parameters the trainer is allowed to move.
    pub fn trainable_consequent_params(&self) -> usize {
        match self.mode {
            Mode::Type1Order0 => self.n_rules(),
            _ => self.n_rules() * (self.n_features() + 1),
        }
    }

    pub fn antecedents(&self) -> impl Iterator<Item = &Antecedent> {
        self.rules.iter().flat_map(|r| r.antecedents.iter())
    }

    /// Checks the structural invariants every rule base must satisfy.
    ///
    /// The FOU separation constraint is not checked here because a freshly
    /// initialised base may legitimately start narrower than the trainer's
    /// minimum; [`crate::train::enforce_constraints`] owns that invariant.
    pub fn validate(&self) -> Result<(), RuleBaseError> {
        if self.rules.is_empty() {
            return Err(RuleBaseError::NoRules);
        }
        let f = self.n_features();
        if f == 0 {
            return Err(RuleBaseError::NoFeatures);
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(RuleBaseError::QOutOfRange(self.q));
        }
        for (j, rule) in self.rules.iter().enumerate() {
            if rule.antecedents.len() != f {
                return Err(RuleBaseError::Ragged {
                    rule: j,
                    what: "antecedent",
                    found: rule.antecedents.len(),
                    expected: f,
                });
            }
            if rule.consequent.w.len() != f {
                return Err(RuleBaseError::Ragged {
                    rule: j,
                    what: "weight",
                    found: rule.consequent.w.len(),
                    expected: f,
                });
            }
            for (k, a) in rule.antecedents.iter().enumerate() {
                let bad = |reason: String| RuleBaseError::BadAntecedent {
                    rule: j,
                    feature: k,
                    reason,
                };
                if !(a.c1.is_finite() && a.c2.is_finite() && a.sigma.is_finite()) {
                    return Err(bad("non-finite parameter".into()));
                }
                if a.c1 > a.c2 {
                    return Err(bad(format!("c1 = {} exceeds c2 = {}", a.c1, a.c2)));
                }
                if a.sigma <= 0.0 {
                    return Err(bad(format!("sigma = {} must be positive", a.sigma)));
                }
                if self.mode.is_type1() && a.c1 != a.c2 {
                    return Err(bad("type-1 mode requires c1 == c2".into()));
                }
            }
            let cons = &rule.consequent;
            if !cons.b.is_finite() || cons.w.iter().any(|w| !w.is_finite()) {
                return Err(RuleBaseError::NonFiniteConsequent { rule: j });
            }
            if self.mode == Mode::Type1Order0 && cons.w.iter().any(|&w| w != 0.0) {
                return Err(RuleBaseError::NonZeroOrder0Weight { rule: j });
            }
        }
        Ok(())
    }

    /// All trainable and fixed parameters, flattened in a stable order.
    /// Handy for equality checks that must be bit-exact.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = vec![self.q];
        for rule in &self.rules {
            for a in &rule.antecedents {
                out.extend([a.c1, a.c2, a.sigma]);
            }
            out.extend(rule.consequent.w.iter().copied());
            out.push(rule.consequent.b);
        }
        out
    }
}
