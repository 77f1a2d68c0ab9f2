//! Feature-, rule- and instance-level uncertainty read off a trained model.
//!
//! The feature-level measure is the area of the footprint of uncertainty,
//! i.e. the integral of `mu_upper - mu_lower`. Rules are summarised by the
//! mean (and max) of their per-feature areas, and instances by their
//! prediction interval together with the rules that drive it.

use crate::dataset::{MinMaxScaler, Scaling, TargetScaler};
use crate::inference::{fire, membership_bounds, predict_one, IntervalPrediction};
use crate::model::{Antecedent, RuleBase};
use crate::svg::{Scale, Svg};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

pub const DEFAULT_FOU_POINTS: usize = 256;
/// Window half-extension beyond `[c1, c2]`, in units of sigma.
pub const WINDOW_SIGMAS: f64 = 3.0;

pub fn default_window(ant: &Antecedent) -> (f64, f64) {
    (
        ant.c1 - WINDOW_SIGMAS * ant.sigma,
        ant.c2 + WINDOW_SIGMAS * ant.sigma,
    )
}

/// Trapezoidal integral of `mu_upper - mu_lower` over `window` using
/// `n_points` uniform samples.
pub fn fou_area(ant: &Antecedent, window: (f64, f64), n_points: usize) -> f64 {
    assert!(n_points >= 2, "need at least two quadrature points");
    let (lo, hi) = window;
    let step = (hi - lo) / (n_points - 1) as f64;
    let gap = |x: f64| {
        let (l, u) = membership_bounds(ant, x);
        u - l
    };
    let inner: f64 = (1..n_points - 1).map(|i| gap(lo + i as f64 * step)).sum();
    step * (inner + 0.5 * (gap(lo) + gap(hi)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureUncertainty {
    pub rule_index: usize,
    pub feature_index: usize,
    pub fou_area: f64,
    pub interval_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleUncertainty {
    pub rule_index: usize,
    pub mean_fou_area: f64,
    pub max_fou_area: f64,
    pub consequent_l1_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleAttribution {
    pub rule_index: usize,
    pub norm_upper: f64,
    pub norm_lower: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceExplanation {
    pub index: usize,
    /// In original target units.
    pub prediction: IntervalPrediction,
    pub top_rules: Vec<RuleAttribution>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub per_feature: Vec<FeatureUncertainty>,
    pub per_rule: Vec<RuleUncertainty>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_instance: Option<Vec<InstanceExplanation>>,
}

impl UncertaintyReport {
    /// Rule indices from most to least uncertain (ties keep index order).
    pub fn rules_by_uncertainty(&self) -> Vec<usize> {
        let mut rules: Vec<&RuleUncertainty> = self.per_rule.iter().collect();
        rules.sort_by(|a, b| {
            b.mean_fou_area
                .total_cmp(&a.mean_fou_area)
                .then(a.rule_index.cmp(&b.rule_index))
        });
        rules.iter().map(|r| r.rule_index).collect()
    }
}

/// Feature- and rule-level report; `per_instance` is left empty.
pub fn explain_model(rb: &RuleBase) -> UncertaintyReport {
    let mut per_feature = Vec::with_capacity(rb.n_rules() * rb.n_features());
    let mut per_rule = Vec::with_capacity(rb.n_rules());
    for (j, rule) in rb.rules.iter().enumerate() {
        let areas: Vec<f64> = rule
            .antecedents
            .iter()
            .map(|a| fou_area(a, default_window(a), DEFAULT_FOU_POINTS))
            .collect();
        for (k, (a, area)) in rule.antecedents.iter().zip(&areas).enumerate() {
            per_feature.push(FeatureUncertainty {
                rule_index: j,
                feature_index: k,
                fou_area: *area,
                interval_width: a.width(),
            });
        }
        let cons = &rule.consequent;
        per_rule.push(RuleUncertainty {
            rule_index: j,
            mean_fou_area: areas.iter().sum::<f64>() / areas.len() as f64,
            max_fou_area: areas.iter().cloned().fold(0.0, f64::max),
            consequent_l1_norm: cons.w.iter().map(|w| w.abs()).sum::<f64>() + cons.b.abs(),
        });
    }
    UncertaintyReport {
        per_feature,
        per_rule,
        per_instance: None,
    }
}

/// Prediction interval in original units plus rules ranked by their mean
/// normalised activation `(lower + upper) / 2`.
pub fn explain_instance(
    rb: &RuleBase,
    x: &[f64],
    target: TargetScaler,
) -> (IntervalPrediction, Vec<RuleAttribution>) {
    let prediction = predict_one(rb, x).map(|v| target.inverse(v));
    let fs = fire(rb, x);
    let mut top: Vec<RuleAttribution> = (0..rb.n_rules())
        .map(|j| RuleAttribution {
            rule_index: j,
            norm_upper: fs.norm_upper[j],
            norm_lower: fs.norm_lower[j],
        })
        .collect();
    let key = |a: &RuleAttribution| 0.5 * (a.norm_lower + a.norm_upper);
    top.sort_by(|a, b| {
        key(b)
            .total_cmp(&key(a))
            .then(a.rule_index.cmp(&b.rule_index))
    });
    (prediction, top)
}

/// `%g`-style formatting with `sig` significant digits.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if exp < -4 || exp >= sig as i32 {
        let s = format!("{:.*e}", sig.saturating_sub(1), v);
        // trim mantissa zeros: 1.50000e3 -> 1.5e3
        match s.split_once('e') {
            Some((m, e)) if m.contains('.') => {
                format!("{}e{}", m.trim_end_matches('0').trim_end_matches('.'), e)
            }
            _ => s,
        }
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    }
}

/// Human-readable dump of every rule. With scalers, each clause also shows
/// the antecedent and consequent in original units.
pub fn export_rules_text(
    rb: &RuleBase,
    feature_names: &[String],
    scaling: Option<&Scaling>,
) -> String {
    let g = |v: f64| fmt_sig(v, 6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} rules, {} features, mode {}, q = {}",
        rb.n_rules(),
        rb.n_features(),
        rb.mode,
        g(rb.q)
    );
    for (j, rule) in rb.rules.iter().enumerate() {
        let _ = writeln!(out, "\nRule {}", j + 1);
        for (k, a) in rule.antecedents.iter().enumerate() {
            let lead = if k == 0 { "IF " } else { "AND" };
            let name = &feature_names[k];
            let _ = write!(
                out,
                "  {lead} {name} is Gaussian(mean ∈ [{}, {}], σ = {})",
                g(a.c1),
                g(a.c2),
                g(a.sigma)
            );
            if let Some(s) = scaling {
                let fs = s.features[k];
                let _ = write!(
                    out,
                    "    | original: mean ∈ [{}, {}], σ = {}",
                    g(fs.inverse(a.c1)),
                    g(fs.inverse(a.c2)),
                    g(a.sigma * fs.span())
                );
            }
            out.push('\n');
        }
        let cons = &rule.consequent;
        let terms: Vec<String> = cons
            .w
            .iter()
            .zip(feature_names)
            .map(|(w, n)| format!("{}·{}", g(*w), n))
            .collect();
        let _ = write!(out, "  THEN y = {} + {}", terms.join(" + "), g(cons.b));
        if let Some(s) = scaling {
            let (w_orig, b_orig) =
                consequent_in_original_units(&cons.w, cons.b, &s.features, s.target);
            let terms: Vec<String> = w_orig
                .iter()
                .zip(feature_names)
                .map(|(w, n)| format!("{}·{}", g(*w), n))
                .collect();
            let _ = write!(
                out,
                "    | original: y = {} + {}",
                terms.join(" + "),
                g(b_orig)
            );
        }
        out.push('\n');
    }
    out
}

/// Rewrites `y_norm = w·x_norm + b` as `y = w'·x + b'` in original units.
pub fn consequent_in_original_units(
    w: &[f64],
    b: f64,
    features: &[MinMaxScaler],
    target: TargetScaler,
) -> (Vec<f64>, f64) {
    let w_orig: Vec<f64> = w
        .iter()
        .zip(features)
        .map(|(w, s)| target.std * w / s.span())
        .collect();
    let shift: f64 = w
        .iter()
        .zip(features)
        .map(|(w, s)| w * s.min / s.span())
        .sum();
    (w_orig, target.std * (b - shift) + target.mean)
}

/// One SVG per rule: a grid of panels, one per feature, each showing the
/// upper and lower membership functions with the footprint shaded.
pub fn rule_svgs(rb: &RuleBase, feature_names: &[String]) -> Vec<String> {
    const PANEL_W: f64 = 220.0;
    const PANEL_H: f64 = 140.0;
    const SAMPLES: usize = 161;
    let f = rb.n_features();
    let cols = f.clamp(1, 4);
    let rows = f.div_ceil(cols);
    rb.rules
        .iter()
        .enumerate()
        .map(|(j, rule)| {
            let mut svg = Svg::new(cols as f64 * PANEL_W, rows as f64 * PANEL_H + 30.0);
            svg.text(10.0, 20.0, 14.0, "start", &format!("Rule {}", j + 1));
            for (k, a) in rule.antecedents.iter().enumerate() {
                let ox = (k % cols) as f64 * PANEL_W;
                let oy = 30.0 + (k / cols) as f64 * PANEL_H;
                let (x0, x1) = default_window(a);
                let sx = Scale::new((x0, x1), (ox + 10.0, ox + PANEL_W - 10.0));
                let sy = Scale::new((0.0, 1.0), (oy + PANEL_H - 25.0, oy + 10.0));
                let xs: Vec<f64> = (0..SAMPLES)
                    .map(|i| x0 + (x1 - x0) * i as f64 / (SAMPLES - 1) as f64)
                    .collect();
                let bounds: Vec<(f64, f64)> = xs.iter().map(|&x| membership_bounds(a, x)).collect();
                let upper: Vec<(f64, f64)> = xs
                    .iter()
                    .zip(&bounds)
                    .map(|(&x, b)| (sx.at(x), sy.at(b.1)))
                    .collect();
                let lower: Vec<(f64, f64)> = xs
                    .iter()
                    .zip(&bounds)
                    .map(|(&x, b)| (sx.at(x), sy.at(b.0)))
                    .collect();
                let mut band = upper.clone();
                band.extend(lower.iter().rev());
                svg.rect(
                    ox + 5.0,
                    oy + 5.0,
                    PANEL_W - 10.0,
                    PANEL_H - 15.0,
                    "#cccccc",
                );
                svg.polygon(&band, "#4c72b0", 0.3);
                svg.polyline(&upper, "#1f3b73", 1.5, false);
                svg.polyline(&lower, "#1f3b73", 1.5, true);
                svg.text(
                    ox + PANEL_W / 2.0,
                    oy + PANEL_H - 12.0,
                    10.0,
                    "middle",
                    &format!(
                        "{}  [{}, {}]",
                        feature_names.get(k).map_or("?", String::as_str),
                        fmt_sig(a.c1, 3),
                        fmt_sig(a.c2, 3)
                    ),
                );
            }
            svg.finish()
        })
        .collect()
}
