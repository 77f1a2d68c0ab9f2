//! One PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.
//!
//! Criteria 11-14 need the Melbourne treatment-plant CSV. Point
//! `IT2ANFIS_ETP_CSV` at it (target column from `IT2ANFIS_ETP_TARGET`,
//! default `energy_mwh`; optional date column from `IT2ANFIS_ETP_DATE`).

mod common;

use common::{fd_check, random_instance, random_rulebase, FdReport};
use it2anfis::dataset::{generate_synthetic, load_csv, normalize_and_split};
use it2anfis::harness::{fit, run_sweep, SweepConfig, SweepResult};
use it2anfis::init::lhs_centers;
use it2anfis::persist::{load_model, save_model};
use it2anfis::train::{mse, train_with_observer};
use it2anfis::{
    membership_bounds, predict_one, Antecedent, InitConfig, Mode, SyntheticSpec, TrainConfig,
    TrainedModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fou_ordering() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut ordered, mut plateau_checked) = (0usize, 0usize);
    let mut bad = 0usize;
    for _ in 0..10_000 {
        let c = rng.random_range(-1.0..2.0);
        let half = rng.random_range(0.0..0.5);
        let a = Antecedent::new(c - half, c + half, rng.random_range(0.01..1.0));
        let x = rng.random_range(-2.0..3.0);
        let (l, u) = membership_bounds(&a, x);
        if l <= u {
            ordered += 1;
        } else {
            bad += 1;
        }
        let inside = rng.random_range(a.c1..=a.c2);
        plateau_checked += 1;
        if membership_bounds(&a, inside).1 != 1.0 {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad == 0 && secs < 1.0,
        format!("{ordered}/10000 ordered, {plateau_checked} plateau points, {secs:.3}s"),
    )
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut total = FdReport::default();
    for seed in 0..100 {
        total.merge(fd_check(&random_instance(seed, Mode::It2)));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        total.failed == 0 && secs < 10.0,
        format!(
            "{} partials, {} over tolerance, worst rel {:.2e}, {secs:.3}s",
            total.checked, total.failed, total.worst_rel
        ),
    )
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, f: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..f).map(|_| rng.random_range(-0.3..1.3)).collect())
        .collect()
}

fn type1_collapse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for mode in [Mode::Type1Order0, Mode::Type1Order1] {
        let mut rb = random_rulebase(&mut rng, 5, 3, mode);
        for x in random_inputs(&mut rng, 500, 3) {
            let preds: Vec<f64> = [0.0, 0.25, 0.5, 0.9, 1.0]
                .iter()
                .map(|&q| {
                    rb.q = q;
                    let p = predict_one(&rb, &x);
                    if p.width != 0.0 {
                        bad += 1;
                    }
                    p.y_pred
                })
                .collect();
            bad += preds
                .iter()
                .filter(|&&v| v.to_bits() != preds[0].to_bits())
                .count();
        }
    }
    outcome(
        bad == 0,
        format!("{bad} violations over 1000 inputs x 5 values of q"),
    )
}

fn type_reduction_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    let mut rb = random_rulebase(&mut rng, 6, 3, Mode::It2);
    for x in random_inputs(&mut rng, 500, 3) {
        for q in [0.0, 0.5, 1.0, rng.random_range(0.0..1.0)] {
            rb.q = q;
            let p = predict_one(&rb, &x);
            let expect = if p.y_lower == p.y_upper {
                p.y_lower
            } else {
                q * p.y_lower + (1.0 - q) * p.y_upper
            };
            if p.y_pred != expect {
                bad += 1;
            }
            if q == 0.5 && p.y_pred != 0.5 * p.y_lower + 0.5 * p.y_upper {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("{bad} mismatches over 2000 evaluations"))
}

struct ReferenceRun {
    min_width: f64,
    crossed: usize,
    lr_violations: usize,
    epochs: usize,
}

fn reference_run() -> ReferenceRun {
    let raw = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let data = normalize_and_split(&raw, 0).unwrap();
    let rb = it2anfis::init::build_rulebase(&InitConfig::default(), &data.train_feature_ranges())
        .unwrap();
    let mut run = ReferenceRun {
        min_width: f64::INFINITY,
        crossed: 0,
        lr_violations: 0,
        epochs: 0,
    };
    train_with_observer(rb, &data, &TrainConfig::default(), |rec, m| {
        run.epochs += 1;
        for a in m.antecedents() {
            run.min_width = run.min_width.min(a.c2 - a.c1);
            if a.c1 > a.c2 {
                run.crossed += 1;
            }
        }
        if !(1e-5..=0.05).contains(&rec.eta_cons) || !(1e-6..=0.02).contains(&rec.eta_ant) {
            run.lr_violations += 1;
        }
    })
    .unwrap();
    run
}

fn lhs_stratification() -> Outcome {
    let mut bad = 0;
    for r in [5usize, 7, 10] {
        for seed in 0..20 {
            let c = lhs_centers(&[(0.0, 1.0); 13], r, seed, true).unwrap();
            for f in 0..13 {
                let mut counts = vec![0; r];
                for row in &c {
                    let s = (0..r)
                        .find(|&s| row[f] < (s + 1) as f64 / r as f64)
                        .unwrap_or(r);
                    if s < r {
                        counts[s] += 1;
                    }
                }
                if counts.iter().any(|&n| n != 1) {
                    bad += 1;
                }
            }
        }
    }
    outcome(
        bad == 0,
        format!("{bad} bad feature columns over R in (5, 7, 10) x 20 seeds"),
    )
}

fn recoverability() -> Outcome {
    let raw = generate_synthetic(&SyntheticSpec {
        n_latent_rules: 1,
        noise_std: 0.0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let data = normalize_and_split(&raw, 0).unwrap();
    let (x, y) = data.subset(&data.split.train);
    let run = |cfg: &TrainConfig| {
        let out = fit(&data, Mode::Type1Order1, 1, 0, &InitConfig::default(), cfg).unwrap();
        (mse(&out.model, &x, &y), out.state.epoch)
    };
    let plain = TrainConfig {
        lambda_l1: 0.0,
        lambda_l2: 0.0,
        ..TrainConfig::default()
    };
    let (m, epochs) = run(&plain);
    let (m_pen, _) = run(&TrainConfig::default());
    outcome(
        m < 1e-3 && epochs <= 500,
        format!(
            "unpenalised train MSE {m:.3e} in {epochs} epochs; with default penalties {m_pen:.3e}"
        ),
    )
}

fn checkpoint_and_determinism() -> Outcome {
    // small and noisy enough that 20 rules overfit before the epoch budget
    let raw = generate_synthetic(&SyntheticSpec {
        n_samples: 150,
        noise_std: 25.0,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let data = normalize_and_split(&raw, 1).unwrap();
    let cfg = TrainConfig {
        max_epochs: 300,
        patience: 20,
        ..TrainConfig::default()
    };
    let a = fit(&data, Mode::It2, 20, 5, &InitConfig::default(), &cfg).unwrap();
    let b = fit(&data, Mode::It2, 20, 5, &InitConfig::default(), &cfg).unwrap();
    let (xv, yv) = data.subset(&data.split.val);
    let returned = mse(&a.model, &xv, &yv);
    let best = a
        .state
        .history
        .iter()
        .map(|r| r.val_mse)
        .fold(f64::INFINITY, f64::min);
    let dominates = a
        .state
        .history
        .iter()
        .all(|r| returned <= r.val_mse + 1e-12);
    let same = a.model == b.model && a.state.history == b.state.history;
    outcome(
        dominates && (returned - best).abs() < 1e-12 && same && a.state.best_epoch < a.state.epoch,
        format!(
            "returned val MSE {returned:.6} (best epoch {} of {}), repeat run identical: {same}",
            a.state.best_epoch, a.state.epoch
        ),
    )
}

fn round_trip() -> Outcome {
    let raw = generate_synthetic(&SyntheticSpec {
        n_samples: 300,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let data = normalize_and_split(&raw, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let out = fit(&data, Mode::It2, 7, 0, &InitConfig::default(), &cfg).unwrap();
    let model = TrainedModel {
        rulebase: out.model,
        scaling: data.scaling(),
        feature_names: data.feature_names.clone(),
        target_name: Some(raw.target_column.clone()),
        seed: Some(0),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&path, &model).unwrap();
    let back = load_model(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut differ = 0;
    for _ in 0..100 {
        let x: Vec<f64> = model
            .scaling
            .features
            .iter()
            .map(|s| rng.random_range(s.min..=s.max))
            .collect();
        let (p, q) = (model.predict_raw(&x), back.predict_raw(&x));
        if p.y_pred.to_bits() != q.y_pred.to_bits() || p.width.to_bits() != q.width.to_bits() {
            differ += 1;
        }
    }
    outcome(
        differ == 0 && back == model,
        format!("{differ}/100 predictions differ"),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn band(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn dataset_criteria(path: &str, report: &mut Vec<(String, Outcome, bool)>) {
    let target = std::env::var("IT2ANFIS_ETP_TARGET").unwrap_or_else(|_| "energy_mwh".into());
    let date = std::env::var("IT2ANFIS_ETP_DATE").ok();
    let raw = match load_csv(path, &target, date.as_deref()) {
        Ok(raw) => raw,
        Err(e) => {
            for n in 11..=13 {
                report.push((
                    format!("{n}"),
                    outcome(false, format!("cannot load data: {e}")),
                    false,
                ));
            }
            return;
        }
    };
    let start = Instant::now();
    let cfg = SweepConfig {
        rule_counts: vec![7, 8, 9, 10, 50],
        n_seeds: 10,
        modes: vec![Mode::It2, Mode::Type1Order1, Mode::Type1Order0],
        ..SweepConfig::default()
    };
    let res: SweepResult = run_sweep(&raw, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let at7: Vec<_> = res
        .runs
        .iter()
        .filter(|r| r.mode == Mode::It2 && r.rules == 7)
        .filter_map(|r| r.test)
        .collect();
    let rmse = mean(&at7.iter().map(|m| m.rmse).collect::<Vec<_>>());
    let mape = at7.iter().filter_map(|m| m.mape).collect::<Vec<_>>();
    let mape = mean(&mape);
    report.push((
        "11 reference accuracy".into(),
        outcome(
            at7.len() == 10 && (rmse - 41.10).abs() <= 0.2 * 41.10 && (mape - 12.34).abs() <= 3.0,
            format!(
                "mean RMSE {rmse:.2} MWh, mean MAPE {mape:.2}% over {} runs, sweep {secs:.0}s",
                at7.len()
            ),
        ),
        false,
    ));

    let agg = |mode, r| res.aggregate(mode, r).map_or(f64::NAN, |a| a.mean_test_mse);
    let region = [7, 8, 9, 10];
    let best_region = region
        .iter()
        .map(|&r| agg(Mode::It2, r))
        .fold(f64::INFINITY, f64::min);
    let at50 = agg(Mode::It2, 50);
    report.push((
        "12 U-shape".into(),
        outcome(
            at50 > best_region,
            format!("min over R=7..10 {best_region:.1}, R=50 {at50:.1}"),
        ),
        false,
    ));

    let r_opt = res.best_rules(Mode::It2, &region).unwrap_or(7);
    let (b_it2, b_a1) = (
        band(&res.test_mses(Mode::It2, r_opt)),
        band(&res.test_mses(Mode::Type1Order1, r_opt)),
    );
    report.push((
        "13 variance".into(),
        outcome(
            b_it2 <= b_a1,
            format!("R={r_opt}: IT2 band {b_it2:.1}, ANFIS-1 band {b_a1:.1}"),
        ),
        false,
    ));

    let (m2, m1, m0) = (
        agg(Mode::It2, r_opt),
        agg(Mode::Type1Order1, r_opt),
        agg(Mode::Type1Order0, r_opt),
    );
    report.push((
        "14 baseline order".into(),
        outcome(
            m2 <= 1.05 * m1 && m1 <= 1.05 * m0,
            format!("R={r_opt}: IT2 {m2:.1}, ANFIS-1 {m1:.1}, ANFIS-0 {m0:.1}"),
        ),
        true,
    ));
}

fn main() {
    let mut report: Vec<(String, Outcome, bool)> = vec![
        ("1 FOU ordering".into(), fou_ordering(), false),
        ("2 gradient oracle".into(), gradient_oracle(), false),
        ("3 type-1 collapse".into(), type1_collapse(), false),
        ("4 type reduction".into(), type_reduction_algebra(), false),
    ];
    let run = reference_run();
    report.push((
        "5 constraints".into(),
        outcome(
            run.crossed == 0 && run.min_width >= 0.05,
            format!(
                "min width {:.6} over {} epochs, {} crossed",
                run.min_width, run.epochs, run.crossed
            ),
        ),
        false,
    ));
    report.push((
        "6 learning-rate bounds".into(),
        outcome(
            run.lr_violations == 0,
            format!("{} epochs out of bounds", run.lr_violations),
        ),
        false,
    ));
    report.push(("7 LHS strata".into(), lhs_stratification(), false));
    report.push(("8 recoverability".into(), recoverability(), false));
    report.push((
        "9 checkpoint/determinism".into(),
        checkpoint_and_determinism(),
        false,
    ));
    report.push(("10 model round-trip".into(), round_trip(), false));

    match std::env::var("IT2ANFIS_ETP_CSV") {
        Ok(path) => dataset_criteria(&path, &mut report),
        Err(_) => println!("criteria 11-14 skipped: set IT2ANFIS_ETP_CSV to the Melbourne ETP csv"),
    }

    let mut failed = 0;
    for (name, o, warn_only) in &report {
        let tag = match (o.pass, warn_only) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => {
                failed += 1;
                "FAIL"
            }
        };
        println!("criterion {name:<26} {tag}  {}", o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
