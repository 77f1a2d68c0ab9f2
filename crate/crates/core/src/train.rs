//! Gradient-based training of consequents and uncertain-mean bounds.
//!
//! Each epoch runs mini-batch updates of the linear consequents with an
//! elastic-net penalty, then one full-batch update of every `c1`/`c2` with
//! clipped exact gradients, then constraint repair. Learning rates adapt
//! once per epoch on the change in training MSE, and the model with the best
//! validation MSE is returned.

use crate::dataset::Dataset;
use crate::inference::{forward, predict_one};
use crate::model::{Mode, RuleBase, RuleBaseError, MIN_SEPARATION};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub eta_cons: f64,
    pub eta_ant: f64,
    pub eta_cons_bounds: (f64, f64),
    pub eta_ant_bounds: (f64, f64),
    pub lr_up: f64,
    pub lr_down_cons: f64,
    pub lr_down_ant: f64,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    pub grad_clip: f64,
    pub min_separation: f64,
    pub patience: usize,
    pub seed: u64,
    /// Read `lambda_l1` in original target units. Training happens on a
    /// z-scored target, where an L1 strength `l` acts like `l / std` would on
    /// the raw target; with this flag the trainer divides by the target std
    /// so the penalty keeps its raw-unit meaning. `lambda_l2` is invariant
    /// under the rescaling.
    pub penalties_in_target_units: bool,
    /// Move the uncertain-mean bounds (or the single centre in type-1 mode).
    pub train_antecedents: bool,
    /// Treat `q` as a parameter. Not used by the reference experiments.
    pub learn_q: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            batch_size: 64,
            eta_cons: 0.01,
            eta_ant: 0.001,
            eta_cons_bounds: (1e-5, 0.05),
            eta_ant_bounds: (1e-6, 0.02),
            lr_up: 1.05,
            lr_down_cons: 0.9,
            lr_down_ant: 0.95,
            lambda_l1: 0.05,
            lambda_l2: 0.001,
            grad_clip: 0.1,
            min_separation: MIN_SEPARATION,
            patience: 50,
            seed: 0,
            penalties_in_target_units: true,
            train_antecedents: true,
            learn_q: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        let rates = [
            self.eta_cons,
            self.eta_ant,
            self.eta_cons_bounds.0,
            self.eta_ant_bounds.0,
            self.lr_up,
            self.lr_down_cons,
            self.lr_down_ant,
        ];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("learning rates and factors must be positive".into());
        }
        if self.eta_cons_bounds.0 > self.eta_cons_bounds.1
            || self.eta_ant_bounds.0 > self.eta_ant_bounds.1
        {
            return bad("learning-rate bounds must be ordered".into());
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.lambda_l1 < 0.0 || self.lambda_l2 < 0.0 || self.grad_clip < 0.0 {
            return bad("penalties and clip bound must be non-negative".into());
        }
        Ok(())
    }
}

/// Parameter group that produced a non-finite value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamBlock {
    Consequents,
    Antecedents,
    Loss,
}

impl fmt::Display for ParamBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamBlock::Consequents => "consequent gradients",
            ParamBlock::Antecedents => "antecedent gradients",
            ParamBlock::Loss => "loss",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    InvalidRuleBase(#[from] RuleBaseError),
    #[error("model expects {expected} features, dataset has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("non-finite {block} at epoch {epoch}")]
    NonFinite { epoch: usize, block: ParamBlock },
}

/// One line of the epoch log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub eta_cons: f64,
    pub eta_ant: f64,
    pub checkpointed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub eta_cons: f64,
    pub eta_ant: f64,
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub best_snapshot: RuleBase,
    pub epochs_since_improvement: usize,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, initial: RuleBase) -> Self {
        Self {
            epoch: 0,
            eta_cons: cfg
                .eta_cons
                .clamp(cfg.eta_cons_bounds.0, cfg.eta_cons_bounds.1),
            eta_ant: cfg
                .eta_ant
                .clamp(cfg.eta_ant_bounds.0, cfg.eta_ant_bounds.1),
            best_val_mse: f64::INFINITY,
            best_epoch: 0,
            best_snapshot: initial,
            epochs_since_improvement: 0,
            history: Vec::new(),
            stopped_early: false,
        }
    }
}

/// Gradients of every trainable parameter block, indexed `[rule][feature]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub d_w: Vec<Vec<f64>>,
    pub d_b: Vec<f64>,
    pub d_c1: Vec<Vec<f64>>,
    pub d_c2: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn compute<R: AsRef<[f64]>>(rb: &RuleBase, xs: &[R], ys: &[f64]) -> Self {
        let (d_w, d_b) = consequent_gradients(rb, xs, ys);
        let (d_c1, d_c2) = antecedent_gradients(rb, xs, ys);
        Self {
            d_w,
            d_b,
            d_c1,
            d_c2,
        }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.d_w)
            && self.d_b.iter().all(|v| v.is_finite())
            && all_finite(&self.d_c1)
            && all_finite(&self.d_c2)
    }
}

fn all_finite(m: &[Vec<f64>]) -> bool {
    m.iter().flatten().all(|v| v.is_finite())
}

/// Mean squared error of `y_pred` in the units of `ys`.
pub fn mse<R: AsRef<[f64]>>(rb: &RuleBase, xs: &[R], ys: &[f64]) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (predict_one(rb, x.as_ref()).y_pred - y).powi(2))
        .sum::<f64>()
        / ys.len() as f64
}

/// Batch gradients of the consequent parameters:
/// `d_w[j] = mean(e * phi_j * x)` and `d_b[j] = mean(e * phi_j)` with
/// `e = y_pred - y` and `phi_j` the q-blend of the normalised strengths.
///
/// These are the exact gradients of half the batch MSE.
pub fn consequent_gradients<R: AsRef<[f64]>>(
    rb: &RuleBase,
    xs: &[R],
    ys: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (r, f) = (rb.n_rules(), rb.n_features());
    let mut d_w = vec![vec![0.0; f]; r];
    let mut d_b = vec![0.0; r];
    if ys.is_empty() {
        return (d_w, d_b);
    }
    let q = rb.q;
    for (x, &y) in xs.iter().zip(ys) {
        let x = x.as_ref();
        let fw = forward(rb, x);
        let e = fw.prediction.y_pred - y;
        let fs = &fw.strengths;
        // Already normalised, so these sums are 1 up to rounding.
        let sum_l: f64 = fs.norm_lower.iter().sum();
        let sum_u: f64 = fs.norm_upper.iter().sum();
        for j in 0..r {
            let phi = q * fs.norm_lower[j] / sum_l + (1.0 - q) * fs.norm_upper[j] / sum_u;
            let g = e * phi;
            d_b[j] += g;
            for (dw, xf) in d_w[j].iter_mut().zip(x) {
                *dw += g * xf;
            }
        }
    }
    let inv = 1.0 / ys.len() as f64;
    d_b.iter_mut().for_each(|v| *v *= inv);
    d_w.iter_mut().flatten().for_each(|v| *v *= inv);
    if rb.mode == Mode::Type1Order0 {
        d_w.iter_mut().flatten().for_each(|v| *v = 0.0);
    }
    (d_w, d_b)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Elastic-net gradient step on every `w` and `b`. Zero-order models keep
/// `w` pinned at zero.
pub fn apply_consequent_update(
    rb: &mut RuleBase,
    d_w: &[Vec<f64>],
    d_b: &[f64],
    eta: f64,
    lambda_l1: f64,
    lambda_l2: f64,
) {
    let step = |p: f64, g: f64| p - eta * (g + lambda_l2 * p + lambda_l1 * sign(p));
    let freeze_w = rb.mode == Mode::Type1Order0;
    for (j, rule) in rb.rules.iter_mut().enumerate() {
        let cons = &mut rule.consequent;
        if !freeze_w {
            for (w, g) in cons.w.iter_mut().zip(&d_w[j]) {
                *w = step(*w, *g);
            }
        }
        cons.b = step(cons.b, d_b[j]);
    }
}

/// Exact gradients of the MSE over `(xs, ys)` with respect to every `c1` and
/// `c2`, differentiating membership, product t-norm, normalisation and type
/// reduction. On a branch seam the active branch's one-sided derivative is
/// used; inputs that hit the activation floor contribute nothing.
pub fn antecedent_gradients<R: AsRef<[f64]>>(
    rb: &RuleBase,
    xs: &[R],
    ys: &[f64],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (r, f) = (rb.n_rules(), rb.n_features());
    let mut d_c1 = vec![vec![0.0; f]; r];
    let mut d_c2 = vec![vec![0.0; f]; r];
    if ys.is_empty() {
        return (d_c1, d_c2);
    }
    let q = rb.q;
    let scale = 2.0 / ys.len() as f64;
    for (x, &y) in xs.iter().zip(ys) {
        let x = x.as_ref();
        let fw = forward(rb, x);
        let fs = &fw.strengths;
        let p = &fw.prediction;
        let g = scale * (p.y_pred - y);
        let lower_live = !fs.lower_floored();
        let upper_live = !fs.upper_floored();
        for (j, rule) in rb.rules.iter().enumerate() {
            let yj = fw.rule_outputs[j];
            // dL/d(mu_j) for each bound, times mu_j so that the chain through
            // a Gaussian factor becomes a multiplication by (x - c) / sigma^2.
            let gl = if lower_live {
                q * g * (yj - p.y_lower) / fs.sum_lower * fs.mu_lower[j]
            } else {
                0.0
            };
            let gu = if upper_live {
                (1.0 - q) * g * (yj - p.y_upper) / fs.sum_upper * fs.mu_upper[j]
            } else {
                0.0
            };
            if gl == 0.0 && gu == 0.0 {
                continue;
            }
            for (k, (ant, &xf)) in rule.antecedents.iter().zip(x).enumerate() {
                let inv_s2 = 1.0 / (ant.sigma * ant.sigma);
                if xf <= ant.mid() {
                    d_c2[j][k] += gl * (xf - ant.c2) * inv_s2;
                } else {
                    d_c1[j][k] += gl * (xf - ant.c1) * inv_s2;
                }
                if xf < ant.c1 {
                    d_c1[j][k] += gu * (xf - ant.c1) * inv_s2;
                } else if xf > ant.c2 {
                    d_c2[j][k] += gu * (xf - ant.c2) * inv_s2;
                }
            }
        }
    }
    (d_c1, d_c2)
}

/// Derivative of the MSE with respect to `q`: `mean(2 e (y_lower - y_upper))`.
pub fn q_gradient<R: AsRef<[f64]>>(rb: &RuleBase, xs: &[R], ys: &[f64]) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let p = predict_one(rb, x.as_ref());
            2.0 * (p.y_pred - y) * (p.y_lower - p.y_upper)
        })
        .sum::<f64>()
        / ys.len() as f64
}

/// Clipped gradient step on the uncertain-mean bounds followed by
/// [`enforce_constraints`]. In type-1 modes the two partials are summed and
/// applied to the shared centre so the pair moves rigidly.
pub fn apply_antecedent_update(
    rb: &mut RuleBase,
    d_c1: &[Vec<f64>],
    d_c2: &[Vec<f64>],
    eta: f64,
    clip: f64,
    min_separation: f64,
) {
    let type1 = rb.mode.is_type1();
    for (j, rule) in rb.rules.iter_mut().enumerate() {
        for (k, ant) in rule.antecedents.iter_mut().enumerate() {
            if type1 {
                let c = ant.c1 - eta * (d_c1[j][k] + d_c2[j][k]).clamp(-clip, clip);
                ant.c1 = c;
                ant.c2 = c;
            } else {
                ant.c1 -= eta * d_c1[j][k].clamp(-clip, clip);
                ant.c2 -= eta * d_c2[j][k].clamp(-clip, clip);
            }
        }
    }
    enforce_constraints(rb, min_separation);
}

/// Restores `c1 <= c2` by swapping and widens any interval narrower than
/// `min_separation` symmetrically about its midpoint. Type-1 bases are left
/// alone.
pub fn enforce_constraints(rb: &mut RuleBase, min_separation: f64) {
    if rb.mode.is_type1() {
        return;
    }
    let half = 0.5 * min_separation;
    for ant in rb.rules.iter_mut().flat_map(|r| r.antecedents.iter_mut()) {
        if ant.c1 > ant.c2 {
            std::mem::swap(&mut ant.c1, &mut ant.c2);
        }
        if ant.c2 - ant.c1 < min_separation {
            let mid = ant.mid();
            ant.c1 = mid - half;
            ant.c2 = mid + half;
            while ant.c2 - ant.c1 < min_separation {
                ant.c2 = ant.c2.next_up();
            }
        }
    }
}

/// Grows both rates after an improvement in training MSE, shrinks them
/// otherwise, then clamps each to its bounds.
pub fn adapt_learning_rates(
    state: &mut TrainState,
    cfg: &TrainConfig,
    mse_prev: f64,
    mse_now: f64,
) {
    if mse_prev - mse_now > 0.0 {
        state.eta_cons *= cfg.lr_up;
        state.eta_ant *= cfg.lr_up;
    } else {
        state.eta_cons *= cfg.lr_down_cons;
        state.eta_ant *= cfg.lr_down_ant;
    }
    state.eta_cons = state
        .eta_cons
        .clamp(cfg.eta_cons_bounds.0, cfg.eta_cons_bounds.1);
    state.eta_ant = state
        .eta_ant
        .clamp(cfg.eta_ant_bounds.0, cfg.eta_ant_bounds.1);
}

pub fn train(
    rb: RuleBase,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(RuleBase, TrainState), TrainError> {
    train_with_observer(rb, data, cfg, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch with that epoch's log
/// record and the live (not checkpointed) model.
pub fn train_with_observer(
    mut rb: RuleBase,
    data: &Dataset,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, &RuleBase),
) -> Result<(RuleBase, TrainState), TrainError> {
    cfg.validate()?;
    rb.validate()?;
    if data.n_features() != rb.n_features() {
        return Err(TrainError::DimensionMismatch {
            expected: rb.n_features(),
            found: data.n_features(),
        });
    }
    if data.split.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let (x_train, y_train) = data.subset(&data.split.train);
    let val_idx = if data.split.val.is_empty() {
        &data.split.train
    } else {
        &data.split.val
    };
    let (x_val, y_val) = data.subset(val_idx);

    let lambda_l1 = if cfg.penalties_in_target_units {
        cfg.lambda_l1 / data.target_scaler.std
    } else {
        cfg.lambda_l1
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x_train.len()).collect();
    let mut xb: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut yb: Vec<f64> = Vec::with_capacity(cfg.batch_size);

    let mut state = TrainState::new(cfg, rb.clone());
    let mut mse_prev = mse(&rb, &x_train, &y_train);

    for epoch in 1..=cfg.max_epochs {
        state.epoch = epoch;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.push(x_train[i]);
                yb.push(y_train[i]);
            }
            let (d_w, d_b) = consequent_gradients(&rb, &xb, &yb);
            if !all_finite(&d_w) || d_b.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch,
                    block: ParamBlock::Consequents,
                });
            }
            apply_consequent_update(
                &mut rb,
                &d_w,
                &d_b,
                state.eta_cons,
                lambda_l1,
                cfg.lambda_l2,
            );
        }

        if cfg.train_antecedents {
            let (d_c1, d_c2) = antecedent_gradients(&rb, &x_train, &y_train);
            if !all_finite(&d_c1) || !all_finite(&d_c2) {
                return Err(TrainError::NonFinite {
                    epoch,
                    block: ParamBlock::Antecedents,
                });
            }
            apply_antecedent_update(
                &mut rb,
                &d_c1,
                &d_c2,
                state.eta_ant,
                cfg.grad_clip,
                cfg.min_separation,
            );
        } else {
            enforce_constraints(&mut rb, cfg.min_separation);
        }
        if cfg.learn_q && rb.mode == Mode::It2 {
            let dq = q_gradient(&rb, &x_train, &y_train);
            if dq.is_finite() {
                rb.q = (rb.q - state.eta_ant * dq.clamp(-cfg.grad_clip, cfg.grad_clip))
                    .clamp(0.0, 1.0);
            }
        }

        let train_mse = mse(&rb, &x_train, &y_train);
        let val_mse = mse(&rb, &x_val, &y_val);
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                block: ParamBlock::Loss,
            });
        }
        adapt_learning_rates(&mut state, cfg, mse_prev, train_mse);
        mse_prev = train_mse;

        let checkpointed = val_mse < state.best_val_mse;
        if checkpointed {
            state.best_val_mse = val_mse;
            state.best_epoch = epoch;
            state.best_snapshot = rb.clone();
            state.epochs_since_improvement = 0;
        } else {
            state.epochs_since_improvement += 1;
        }
        let record = EpochRecord {
            epoch,
            train_mse,
            val_mse,
            eta_cons: state.eta_cons,
            eta_ant: state.eta_ant,
            checkpointed,
        };
        state.history.push(record);
        observer(&record, &rb);
        if state.epochs_since_improvement >= cfg.patience {
            state.stopped_early = true;
            break;
        }
    }

    Ok((state.best_snapshot.clone(), state))
}
