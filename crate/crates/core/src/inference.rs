//! Membership evaluation, firing strengths and q-weighted type reduction.

use crate::model::{Antecedent, RuleBase};
use serde::{Deserialize, Serialize};

/// Below this total activation the normalised strengths fall back to `1/R`.
pub const ACTIVATION_FLOOR: f64 = 1e-12;

#[inline]
pub(crate) fn gaussian(x: f64, c: f64, sigma: f64) -> f64 {
    let z = (x - c) / sigma;
    (-0.5 * z * z).exp()
}

/// Lower and upper membership grades of `x`.
///
/// The upper function is a Gaussian shoulder on each side of a plateau of
/// height one over `[c1, c2]`. The lower function takes whichever Gaussian is
/// farther from `x`: the one centred at `c2` when `x <= mid`, otherwise the one
/// centred at `c1`.
#[inline]
pub fn membership_bounds(ant: &Antecedent, x: f64) -> (f64, f64) {
    let lower = if x <= ant.mid() {
        gaussian(x, ant.c2, ant.sigma)
    } else {
        gaussian(x, ant.c1, ant.sigma)
    };
    let upper = if x < ant.c1 {
        gaussian(x, ant.c1, ant.sigma)
    } else if x <= ant.c2 {
        1.0
    } else {
        gaussian(x, ant.c2, ant.sigma)
    };
    (lower, upper)
}

/// Per-rule activation intervals for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct FiringStrengths {
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    pub norm_lower: Vec<f64>,
    pub norm_upper: Vec<f64>,
    /// Raw totals used for normalisation, kept for the gradient pass.
    pub(crate) sum_lower: f64,
    pub(crate) sum_upper: f64,
}

impl FiringStrengths {
    pub(crate) fn lower_floored(&self) -> bool {
        self.sum_lower < ACTIVATION_FLOOR
    }

    pub(crate) fn upper_floored(&self) -> bool {
        self.sum_upper < ACTIVATION_FLOOR
    }
}

fn normalise(raw: &[f64]) -> (Vec<f64>, f64) {
    let sum: f64 = raw.iter().sum();
    if sum < ACTIVATION_FLOOR {
        let u = 1.0 / raw.len() as f64;
        (vec![u; raw.len()], sum)
    } else {
        (raw.iter().map(|m| m / sum).collect(), sum)
    }
}

/// Product t-norm over features followed by per-bound normalisation.
pub fn fire(rb: &RuleBase, x: &[f64]) -> FiringStrengths {
    debug_assert_eq!(x.len(), rb.n_features());
    let mut mu_lower = Vec::with_capacity(rb.n_rules());
    let mut mu_upper = Vec::with_capacity(rb.n_rules());
    for rule in &rb.rules {
        let (mut lo, mut hi) = (1.0, 1.0);
        for (ant, &xf) in rule.antecedents.iter().zip(x) {
            let (l, u) = membership_bounds(ant, xf);
            lo *= l;
            hi *= u;
        }
        mu_lower.push(lo);
        mu_upper.push(hi);
    }
    let (norm_lower, sum_lower) = normalise(&mu_lower);
    let (norm_upper, sum_upper) = normalise(&mu_upper);
    FiringStrengths {
        mu_lower,
        mu_upper,
        norm_lower,
        norm_upper,
        sum_lower,
        sum_upper,
    }
}

/// Output of the lower and upper TSK systems and their q-weighted blend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalPrediction {
    pub y_lower: f64,
    pub y_upper: f64,
    pub y_pred: f64,
    /// `(min, max)` of the two bounds; the lower system's output can exceed
    /// the upper system's, so the pair is sorted here.
    pub interval: (f64, f64),
    pub width: f64,
}

impl IntervalPrediction {
    pub fn new(y_lower: f64, y_upper: f64, q: f64) -> Self {
        // equal bounds would otherwise pick up an ulp of q-dependence
        let y_pred = if y_lower == y_upper {
            y_lower
        } else {
            q * y_lower + (1.0 - q) * y_upper
        };
        Self::from_parts(y_lower, y_upper, y_pred)
    }

    fn from_parts(y_lower: f64, y_upper: f64, y_pred: f64) -> Self {
        let lo = y_lower.min(y_upper);
        let hi = y_lower.max(y_upper);
        Self {
            y_lower,
            y_upper,
            y_pred,
            interval: (lo, hi),
            width: hi - lo,
        }
    }

    /// Applies a monotone increasing map (e.g. target de-standardisation) to
    /// every output. `y_pred` is mapped directly rather than re-blended.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(f(self.y_lower), f(self.y_upper), f(self.y_pred))
    }
}

/// Everything the forward pass produces for one sample; the trainer reuses it.
#[derive(Clone, Debug)]
pub(crate) struct Forward {
    pub strengths: FiringStrengths,
    pub rule_outputs: Vec<f64>,
    pub prediction: IntervalPrediction,
}

pub(crate) fn forward(rb: &RuleBase, x: &[f64]) -> Forward {
    let strengths = fire(rb, x);
    let rule_outputs: Vec<f64> = rb.rules.iter().map(|r| r.consequent.eval(x)).collect();
    let y_lower = dot(&strengths.norm_lower, &rule_outputs);
    let y_upper = dot(&strengths.norm_upper, &rule_outputs);
    Forward {
        prediction: IntervalPrediction::new(y_lower, y_upper, rb.q),
        strengths,
        rule_outputs,
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

pub fn predict_one(rb: &RuleBase, x: &[f64]) -> IntervalPrediction {
    forward(rb, x).prediction
}

pub fn predict_batch<R: AsRef<[f64]>>(rb: &RuleBase, xs: &[R]) -> Vec<IntervalPrediction> {
    xs.iter().map(|x| predict_one(rb, x.as_ref())).collect()
}
