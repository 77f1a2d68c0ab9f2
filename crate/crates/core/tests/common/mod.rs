#![allow(dead_code, clippy::needless_range_loop)]

use it2anfis::dataset::{MinMaxScaler, Split, TargetScaler};
use it2anfis::train::{antecedent_gradients, consequent_gradients, mse};
use it2anfis::{Antecedent, Consequent, Dataset, Mode, Rule, RuleBase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-4;
pub const SEAM_GAP: f64 = 1e-3;
// below this magnitude the central difference is dominated by rounding
const FD_SCALE_FLOOR: f64 = 1e-5;

pub fn random_rulebase(rng: &mut impl Rng, r: usize, f: usize, mode: Mode) -> RuleBase {
    let rules = (0..r)
        .map(|_| {
            let antecedents = (0..f)
                .map(|_| {
                    let c = rng.random_range(0.0..1.0);
                    let sigma = rng.random_range(0.15..0.6);
                    if mode.is_type1() {
                        Antecedent::collapsed(c, sigma)
                    } else {
                        let half = rng.random_range(0.03..0.2);
                        Antecedent::new(c - half, c + half, sigma)
                    }
                })
                .collect();
            let w = (0..f)
                .map(|_| {
                    if mode == Mode::Type1Order0 {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect();
            Rule {
                antecedents,
                consequent: Consequent {
                    w,
                    b: rng.random_range(-1.0..1.0),
                },
            }
        })
        .collect();
    RuleBase {
        rules,
        q: rng.random_range(0.0..=1.0),
        mode,
    }
}

/// Distance from `x` to the nearest point where a membership bound switches
/// branch (`c1`, `c2` and the midpoint).
pub fn seam_distance(rb: &RuleBase, x: &[f64]) -> f64 {
    rb.rules
        .iter()
        .flat_map(|r| r.antecedents.iter().zip(x))
        .map(|(a, &v)| {
            (v - a.c1)
                .abs()
                .min((v - a.c2).abs())
                .min((v - a.mid()).abs())
        })
        .fold(f64::INFINITY, f64::min)
}

pub struct Instance {
    pub rb: RuleBase,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

/// Small random problem whose inputs all sit at least `SEAM_GAP` from any
/// branch seam.
pub fn random_instance(seed: u64, mode: Mode) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.random_range(1..=4);
    let f = rng.random_range(1..=3);
    let n = rng.random_range(1..=16);
    let rb = random_rulebase(&mut rng, r, f, mode);
    let mut xs = Vec::with_capacity(n);
    while xs.len() < n {
        let x: Vec<f64> = (0..f).map(|_| rng.random_range(-0.2..1.2)).collect();
        if seam_distance(&rb, &x) >= SEAM_GAP {
            xs.push(x);
        }
    }
    let ys = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Instance { rb, xs, ys }
}

fn central<F: Fn(&mut RuleBase, f64)>(
    rb: &RuleBase,
    loss: &dyn Fn(&RuleBase) -> f64,
    nudge: F,
) -> f64 {
    let mut plus = rb.clone();
    nudge(&mut plus, FD_STEP);
    let mut minus = rb.clone();
    nudge(&mut minus, -FD_STEP);
    (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub checked: usize,
    pub failed: usize,
    pub worst_rel: f64,
}

impl FdReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        let scale = analytic.abs().max(numeric.abs()).max(FD_SCALE_FLOOR);
        let rel = (analytic - numeric).abs() / scale;
        self.checked += 1;
        self.worst_rel = self.worst_rel.max(rel);
        if rel > FD_REL_TOL {
            self.failed += 1;
        }
    }

    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        self.failed += other.failed;
        self.worst_rel = self.worst_rel.max(other.worst_rel);
    }
}

/// Consequent gradients against half the MSE, antecedent gradients against
/// the MSE. In type-1 modes the shared centre is nudged and compared with
/// `d_c1 + d_c2`.
pub fn fd_check(inst: &Instance) -> FdReport {
    let Instance { rb, xs, ys } = inst;
    let half_mse = |m: &RuleBase| 0.5 * mse(m, xs, ys);
    let full_mse = |m: &RuleBase| mse(m, xs, ys);
    let (d_w, d_b) = consequent_gradients(rb, xs, ys);
    let (d_c1, d_c2) = antecedent_gradients(rb, xs, ys);
    let mut rep = FdReport::default();
    for j in 0..rb.n_rules() {
        if rb.mode != Mode::Type1Order0 {
            for k in 0..rb.n_features() {
                let n = central(rb, &half_mse, |m, h| m.rules[j].consequent.w[k] += h);
                rep.record(d_w[j][k], n);
            }
        }
        let n = central(rb, &half_mse, |m, h| m.rules[j].consequent.b += h);
        rep.record(d_b[j], n);
        for k in 0..rb.n_features() {
            if rb.mode.is_type1() {
                let n = central(rb, &full_mse, |m, h| {
                    let a = &mut m.rules[j].antecedents[k];
                    a.c1 += h;
                    a.c2 += h;
                });
                rep.record(d_c1[j][k] + d_c2[j][k], n);
            } else {
                let n1 = central(rb, &full_mse, |m, h| m.rules[j].antecedents[k].c1 += h);
                rep.record(d_c1[j][k], n1);
                let n2 = central(rb, &full_mse, |m, h| m.rules[j].antecedents[k].c2 += h);
                rep.record(d_c2[j][k], n2);
            }
        }
    }
    rep
}

/// Dataset over already-normalised rows with an explicit split and an
/// identity target scaler.
pub fn dataset_from(x: Vec<Vec<f64>>, y: Vec<f64>, split: Split) -> Dataset {
    let f = x[0].len();
    Dataset {
        feature_names: (1..=f).map(|i| format!("x{i}")).collect(),
        x,
        y,
        feature_scalers: vec![MinMaxScaler { min: 0.0, max: 1.0 }; f],
        target_scaler: TargetScaler {
            mean: 0.0,
            std: 1.0,
        },
        split,
    }
}
