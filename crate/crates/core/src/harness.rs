//! Fit/evaluate pipeline and the seeded rule-count sweep.

use crate::dataset::{normalize_and_split, Dataset, RawTable};
use crate::explain::fmt_sig;
use crate::inference::predict_one;
use crate::init::{build_rulebase, InitConfig, InitError};
use crate::metrics::{evaluate, mean_metrics, MetricSet, MetricsError};
use crate::model::{Mode, RuleBase};
use crate::svg::{Scale, Svg};
use crate::train::{train, TrainConfig, TrainError, TrainState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Run seed for the `seed_index`-th repetition at `rules` rules. Adding rule
/// counts to a sweep never changes the seeds of existing runs.
pub fn run_seed(seed_base: u64, rules: usize, seed_index: usize) -> u64 {
    seed_base * 10_000 + rules as u64 * 100 + seed_index as u64
}

/// Seed of the data split shared by every mode and rule count for one
/// repetition.
pub fn split_seed(seed_base: u64, seed_index: usize) -> u64 {
    seed_base * 10_000 + seed_index as u64
}

/// Metrics in original target units over a set of row indices.
pub fn evaluate_indices(
    rb: &RuleBase,
    data: &Dataset,
    idx: &[usize],
) -> Result<MetricSet, MetricsError> {
    let s = data.target_scaler;
    let (y_true, y_pred): (Vec<f64>, Vec<f64>) = idx
        .iter()
        .map(|&i| {
            (
                s.inverse(data.y[i]),
                s.inverse(predict_one(rb, &data.x[i]).y_pred),
            )
        })
        .unzip();
    evaluate(&y_true, &y_pred)
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: RuleBase,
    pub state: TrainState,
    pub train: MetricSet,
    pub val: Option<MetricSet>,
    pub test: Option<MetricSet>,
}

/// Initialise, train and evaluate one model. `init.mode`, `init.n_rules`
/// and both seeds are taken from the arguments.
pub fn fit(
    data: &Dataset,
    mode: Mode,
    rules: usize,
    seed: u64,
    init: &InitConfig,
    train_cfg: &TrainConfig,
) -> Result<FitOutcome, FitError> {
    let init = InitConfig {
        mode,
        n_rules: rules,
        seed,
        ..init.clone()
    };
    let rb = build_rulebase(&init, &data.train_feature_ranges())?;
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let (model, state) = train(rb, data, &cfg)?;
    let train_m = evaluate_indices(&model, data, &data.split.train)?;
    let val = (!data.split.val.is_empty())
        .then(|| evaluate_indices(&model, data, &data.split.val))
        .transpose()?;
    let test = (!data.split.test.is_empty())
        .then(|| evaluate_indices(&model, data, &data.split.test))
        .transpose()?;
    Ok(FitOutcome {
        model,
        state,
        train: train_m,
        val,
        test,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub rule_counts: Vec<usize>,
    pub n_seeds: usize,
    pub modes: Vec<Mode>,
    pub parallelism: usize,
    pub seed_base: u64,
    pub init: InitConfig,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rule_counts: (5..=50).collect(),
            n_seeds: 10,
            modes: vec![Mode::It2, Mode::Type1Order1, Mode::Type1Order0],
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed_base: 0,
            init: InitConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.rule_counts.is_empty() || self.rule_counts.contains(&0) {
            return Err(SweepError::InvalidConfig(
                "rule_counts must be non-empty and all >= 1".into(),
            ));
        }
        if self.n_seeds == 0 {
            return Err(SweepError::InvalidConfig("n_seeds must be >= 1".into()));
        }
        if self.modes.is_empty() {
            return Err(SweepError::InvalidConfig(
                "at least one mode is required".into(),
            ));
        }
        Ok(())
    }
}

/// One `(mode, rules, seed)` cell of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub mode: Mode,
    pub rules: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub test: Option<MetricSet>,
    pub val: Option<MetricSet>,
    pub wall_ms: u64,
    pub status: String,
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub mode: Mode,
    pub rules: usize,
    pub n_runs: usize,
    pub n_ok: usize,
    pub mean_test_mse: f64,
    pub min_test_mse: f64,
    pub max_test_mse: f64,
    pub mean: MetricSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub runs: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl SweepResult {
    pub fn aggregate(&self, mode: Mode, rules: usize) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.mode == mode && a.rules == rules)
    }

    /// Rule count with the lowest mean test MSE for `mode`, among `candidates`.
    pub fn best_rules(&self, mode: Mode, candidates: &[usize]) -> Option<usize> {
        self.aggregates
            .iter()
            .filter(|a| a.mode == mode && candidates.contains(&a.rules))
            .min_by(|a, b| {
                a.mean_test_mse
                    .total_cmp(&b.mean_test_mse)
                    .then(a.rules.cmp(&b.rules))
            })
            .map(|a| a.rules)
    }

    pub fn test_mses(&self, mode: Mode, rules: usize) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.mode == mode && r.rules == rules)
            .filter_map(|r| r.test.map(|m| m.mse))
            .collect()
    }
}

/// Mean/min/max of test metrics per `(mode, rules)` over successful runs.
/// Groups without a single successful run are omitted.
pub fn aggregate(runs: &[RunRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Mode, usize)> = runs.iter().map(|r| (r.mode, r.rules)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .filter_map(|(mode, rules)| {
            let group: Vec<&RunRow> = runs
                .iter()
                .filter(|r| r.mode == mode && r.rules == rules)
                .collect();
            let tests: Vec<MetricSet> = group
                .iter()
                .filter(|r| r.ok())
                .filter_map(|r| r.test)
                .collect();
            let mean = mean_metrics(&tests)?;
            let mses = tests.iter().map(|m| m.mse);
            Some(AggregateRow {
                mode,
                rules,
                n_runs: group.len(),
                n_ok: tests.len(),
                mean_test_mse: mean.mse,
                min_test_mse: mses.clone().fold(f64::INFINITY, f64::min),
                max_test_mse: mses.fold(f64::NEG_INFINITY, f64::max),
                mean,
            })
        })
        .collect()
}

/// Runs every `(mode, rules, seed)` job on a bounded worker pool. A failing
/// job is recorded in its row's `status`; the sweep carries on.
pub fn run_sweep(raw: &RawTable, cfg: &SweepConfig) -> Result<SweepResult, SweepError> {
    cfg.validate()?;
    let datasets: Vec<Result<Dataset, String>> = (0..cfg.n_seeds)
        .map(|s| normalize_and_split(raw, split_seed(cfg.seed_base, s)).map_err(|e| e.to_string()))
        .collect();

    let mut jobs = Vec::new();
    for &mode in &cfg.modes {
        for &rules in &cfg.rule_counts {
            for seed_index in 0..cfg.n_seeds {
                jobs.push((mode, rules, seed_index));
            }
        }
    }

    let run_job = |&(mode, rules, seed_index): &(Mode, usize, usize)| -> RunRow {
        let seed = run_seed(cfg.seed_base, rules, seed_index);
        let start = Instant::now();
        let result = match &datasets[seed_index] {
            Ok(data) => {
                fit(data, mode, rules, seed, &cfg.init, &cfg.train).map_err(|e| e.to_string())
            }
            Err(e) => Err(e.clone()),
        };
        let wall_ms = start.elapsed().as_millis() as u64;
        match result {
            Ok(out) => RunRow {
                mode,
                rules,
                seed_index,
                seed,
                test: out.test,
                val: out.val,
                wall_ms,
                status: "ok".into(),
            },
            Err(msg) => RunRow {
                mode,
                rules,
                seed_index,
                seed,
                test: None,
                val: None,
                wall_ms,
                status: format!("error: {msg}"),
            },
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .map_err(|e| SweepError::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let mut runs: Vec<RunRow> = pool.install(|| jobs.par_iter().map(run_job).collect());
    runs.sort_by_key(|r| (r.mode, r.rules, r.seed_index));
    let aggregates = aggregate(&runs);
    Ok(SweepResult { runs, aggregates })
}

fn num(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const RUNS_CSV_HEADER: [&str; 10] = [
    "mode",
    "rules",
    "seed",
    "test_mse",
    "test_rmse",
    "test_mae",
    "test_mape",
    "val_mse",
    "wall_ms",
    "status",
];

pub fn write_runs_csv<W: Write>(out: W, runs: &[RunRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_CSV_HEADER)?;
    for r in runs {
        let t = r.test.as_ref();
        w.write_record([
            r.mode.cli_name().to_owned(),
            r.rules.to_string(),
            r.seed.to_string(),
            num(t.map(|m| m.mse)),
            num(t.map(|m| m.rmse)),
            num(t.map(|m| m.mae)),
            num(t.and_then(|m| m.mape)),
            num(r.val.map(|m| m.mse)),
            r.wall_ms.to_string(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates_csv<W: Write>(out: W, rows: &[AggregateRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "mode",
        "rules",
        "n_runs",
        "n_ok",
        "mean_test_mse",
        "min_test_mse",
        "max_test_mse",
        "mean_test_rmse",
        "mean_test_mae",
        "mean_test_mape",
    ])?;
    for a in rows {
        w.write_record([
            a.mode.cli_name().to_owned(),
            a.rules.to_string(),
            a.n_runs.to_string(),
            a.n_ok.to_string(),
            a.mean_test_mse.to_string(),
            a.min_test_mse.to_string(),
            a.max_test_mse.to_string(),
            a.mean.rmse.to_string(),
            a.mean.mae.to_string(),
            num(a.mean.mape),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary document: the configuration, aggregates and per-mode best rule
/// count.
pub fn summary_json(cfg: &SweepConfig, result: &SweepResult) -> serde_json::Value {
    let best: serde_json::Map<String, serde_json::Value> = cfg
        .modes
        .iter()
        .filter_map(|&m| {
            result
                .best_rules(m, &cfg.rule_counts)
                .map(|r| (m.cli_name().to_owned(), serde_json::json!(r)))
        })
        .collect();
    serde_json::json!({
        "config": cfg,
        "n_runs": result.runs.len(),
        "n_failed": result.runs.iter().filter(|r| !r.ok()).count(),
        "best_rules": best,
        "aggregates": result.aggregates,
    })
}

/// Mean test MSE per rule count with a min-max band, one colour per mode.
pub fn sweep_svg(rows: &[AggregateRow]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const M: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom
    let mut svg = Svg::new(W, H);
    if rows.is_empty() {
        svg.text(W / 2.0, H / 2.0, 14.0, "middle", "no successful runs");
        return svg.finish();
    }
    let r_lo = rows.iter().map(|a| a.rules).min().unwrap_or(0) as f64;
    let r_hi = rows.iter().map(|a| a.rules).max().unwrap_or(1) as f64;
    let y_lo = rows
        .iter()
        .map(|a| a.min_test_mse)
        .fold(f64::INFINITY, f64::min);
    let y_hi = rows
        .iter()
        .map(|a| a.max_test_mse)
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (y_hi - y_lo).max(1e-9);
    let sx = Scale::new((r_lo, r_hi), (M.0, W - M.1));
    let sy = Scale::new((y_lo - pad, y_hi + pad), (H - M.3, M.2));

    svg.line((M.0, H - M.3), (W - M.1, H - M.3), "black");
    svg.line((M.0, H - M.3), (M.0, M.2), "black");
    for i in 0..=4 {
        let v = y_lo - pad + (y_hi - y_lo + 2.0 * pad) * i as f64 / 4.0;
        svg.text(M.0 - 6.0, sy.at(v) + 4.0, 10.0, "end", &fmt_sig(v, 4));
    }
    let mut ticks: Vec<usize> = rows.iter().map(|a| a.rules).collect();
    ticks.sort_unstable();
    ticks.dedup();
    let stride = ticks.len().div_ceil(12).max(1);
    for r in ticks.iter().step_by(stride) {
        svg.text(
            sx.at(*r as f64),
            H - M.3 + 16.0,
            10.0,
            "middle",
            &r.to_string(),
        );
    }
    svg.text(
        (M.0 + W - M.1) / 2.0,
        H - 8.0,
        12.0,
        "middle",
        "number of rules",
    );
    svg.text(14.0, M.2 - 8.0, 12.0, "start", "test MSE");

    let colours = ["#1f77b4", "#d62728", "#2ca02c"];
    let mut modes: Vec<Mode> = rows.iter().map(|a| a.mode).collect();
    modes.dedup();
    for (i, mode) in modes.iter().enumerate() {
        let colour = colours[i % colours.len()];
        let group: Vec<&AggregateRow> = rows.iter().filter(|a| a.mode == *mode).collect();
        let mut band: Vec<(f64, f64)> = group
            .iter()
            .map(|a| (sx.at(a.rules as f64), sy.at(a.max_test_mse)))
            .collect();
        band.extend(
            group
                .iter()
                .rev()
                .map(|a| (sx.at(a.rules as f64), sy.at(a.min_test_mse))),
        );
        svg.polygon(&band, colour, 0.2);
        let mean: Vec<(f64, f64)> = group
            .iter()
            .map(|a| (sx.at(a.rules as f64), sy.at(a.mean_test_mse)))
            .collect();
        svg.polyline(&mean, colour, 2.0, false);
        let ly = M.2 + 14.0 * i as f64;
        svg.line((W - M.1 - 110.0, ly), (W - M.1 - 90.0, ly), colour);
        svg.text(W - M.1 - 85.0, ly + 4.0, 11.0, "start", mode.cli_name());
    }
    svg.finish()
}
