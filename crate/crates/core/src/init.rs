//! Latin-hypercube rule placement and uncertain-mean initialisation.

use crate::model::{Antecedent, Consequent, Mode, Rule, RuleBase, SIGMA_MIN};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InitError {
    #[error("feature {feature} has a degenerate range [{min}, {max}]")]
    DegenerateRange { feature: usize, min: f64, max: f64 },
    #[error("need at least one feature range")]
    NoFeatures,
    #[error("invalid init config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub n_rules: usize,
    /// Fraction of the partition width spanned by the initial uncertain mean.
    pub alpha: f64,
    pub sigma_min: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Assign strata to rules through an independent permutation per feature.
    /// With `false`, rule `j` takes stratum `j` on every feature (a diagonal).
    pub lhs_permute: bool,
    /// Standard deviation of the zero-mean normal used for `w` and `b`.
    pub consequent_std: f64,
    pub q: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            n_rules: 7,
            alpha: 0.2,
            sigma_min: SIGMA_MIN,
            seed: 0,
            mode: Mode::It2,
            lhs_permute: true,
            consequent_std: 0.01,
            q: 0.5,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<(), InitError> {
        if self.n_rules == 0 {
            return Err(InitError::InvalidConfig("n_rules must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(InitError::InvalidConfig(format!(
                "alpha = {} must lie in (0, 1]",
                self.alpha
            )));
        }
        if !(self.sigma_min > 0.0) {
            return Err(InitError::InvalidConfig(
                "sigma_min must be positive".into(),
            ));
        }
        if !(self.consequent_std >= 0.0) {
            return Err(InitError::InvalidConfig(
                "consequent_std must be >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(InitError::InvalidConfig(format!(
                "q = {} must lie in [0, 1]",
                self.q
            )));
        }
        Ok(())
    }
}

fn check_ranges(ranges: &[(f64, f64)]) -> Result<(), InitError> {
    if ranges.is_empty() {
        return Err(InitError::NoFeatures);
    }
    for (feature, &(min, max)) in ranges.iter().enumerate() {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(InitError::DegenerateRange { feature, min, max });
        }
    }
    Ok(())
}

fn lhs_with_rng(
    ranges: &[(f64, f64)],
    n_rules: usize,
    permute: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut centres = vec![vec![0.0; ranges.len()]; n_rules];
    let mut strata: Vec<usize> = (0..n_rules).collect();
    for (f, &(min, max)) in ranges.iter().enumerate() {
        let width = (max - min) / n_rules as f64;
        if permute {
            strata.shuffle(rng);
        }
        for (j, &s) in strata.iter().enumerate() {
            let lo = min + s as f64 * width;
            let hi = if s + 1 == n_rules {
                max
            } else {
                min + (s + 1) as f64 * width
            };
            let c = lo + rng.random::<f64>() * width;
            // keep rounding from spilling into the next stratum
            centres[j][f] = if c < hi { c } else { lo.max(hi.next_down()) };
        }
    }
    centres
}

/// One centre per rule and feature; along every feature each of the `R`
/// equal-width strata holds exactly one centre.
pub fn lhs_centers(
    ranges: &[(f64, f64)],
    n_rules: usize,
    seed: u64,
    permute: bool,
) -> Result<Vec<Vec<f64>>, InitError> {
    check_ranges(ranges)?;
    if n_rules == 0 {
        return Err(InitError::InvalidConfig("n_rules must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(lhs_with_rng(ranges, n_rules, permute, &mut rng))
}

/// Estimated width of one fuzzy partition along a feature when `R` rules
/// are spread over `F` dimensions.
pub fn partition_width(range: (f64, f64), n_rules: usize, n_features: usize) -> f64 {
    let per_dim = (n_rules as f64).powf(1.0 / n_features as f64);
    // R^(1/F) can land a hair above an exact integer (e.g. 1024^0.1)
    let nearest = per_dim.round();
    let parts = if (per_dim - nearest).abs() < 1e-9 {
        nearest
    } else {
        per_dim.ceil()
    };
    (range.1 - range.0) / parts.max(1.0)
}

/// Initial rule base: LHS centres widened into uncertain-mean intervals,
/// spreads from the partition width, and small random consequents.
pub fn build_rulebase(cfg: &InitConfig, ranges: &[(f64, f64)]) -> Result<RuleBase, InitError> {
    cfg.validate()?;
    check_ranges(ranges)?;
    let n_features = ranges.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centres = lhs_with_rng(ranges, cfg.n_rules, cfg.lhs_permute, &mut rng);
    let widths: Vec<f64> = ranges
        .iter()
        .map(|&r| partition_width(r, cfg.n_rules, n_features))
        .collect();
    let normal = Normal::new(0.0, cfg.consequent_std).expect("std validated");

    let rules = centres
        .iter()
        .map(|row| {
            let antecedents = row
                .iter()
                .zip(&widths)
                .map(|(&c, &wf)| {
                    let sigma = (0.5 * wf).max(cfg.sigma_min);
                    if cfg.mode.is_type1() {
                        Antecedent::collapsed(c, sigma)
                    } else {
                        let half = 0.5 * cfg.alpha * wf;
                        Antecedent::new(c - half, c + half, sigma)
                    }
                })
                .collect();
            // Draw w for every mode so all modes share one random stream.
            let mut w: Vec<f64> = (0..n_features).map(|_| normal.sample(&mut rng)).collect();
            let b = normal.sample(&mut rng);
            if cfg.mode == Mode::Type1Order0 {
                w.iter_mut().for_each(|v| *v = 0.0);
            }
            Rule {
                antecedents,
                consequent: Consequent { w, b },
            }
        })
        .collect();

    Ok(RuleBase {
        rules,
        q: cfg.q,
        mode: cfg.mode,
    })
}
