use it2anfis::dataset::{generate_synthetic, normalize_and_split, TargetScaler};
use it2anfis::explain::{
    default_window, explain_instance, explain_model, export_rules_text, fou_area, rule_svgs,
};
use it2anfis::harness::fit;
use it2anfis::persist::{load_model, save_model};
use it2anfis::{
    membership_bounds, Antecedent, InitConfig, Mode, SyntheticSpec, TrainConfig, TrainedModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trained(mode: Mode, rules: usize) -> (TrainedModel, it2anfis::Dataset) {
    let raw = generate_synthetic(&SyntheticSpec {
        n_samples: 300,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let data = normalize_and_split(&raw, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let out = fit(&data, mode, rules, 1, &InitConfig::default(), &cfg).unwrap();
    let model = TrainedModel {
        rulebase: out.model,
        scaling: data.scaling(),
        feature_names: data.feature_names.clone(),
        target_name: Some("energy_mwh".into()),
        seed: Some(1),
    };
    (model, data)
}

fn simpson(a: &Antecedent, (lo, hi): (f64, f64), n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let gap = |x: f64| {
        let (l, u) = membership_bounds(a, x);
        u - l
    };
    let mut s = gap(lo) + gap(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * gap(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn fou_area_matches_dense_quadrature() {
    let a = Antecedent::new(0.4, 0.6, 0.1);
    let w = default_window(&a);
    let reference = simpson(&a, w, 10_000);
    assert!((fou_area(&a, w, 256) - reference).abs() < 1e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let c = rng.random_range(0.0..1.0);
        let half = rng.random_range(0.0..0.3);
        let a = Antecedent::new(c - half, c + half, rng.random_range(0.05..0.5));
        let w = default_window(&a);
        assert!((fou_area(&a, w, 256) - simpson(&a, w, 10_000)).abs() < 1e-4);
    }
}

#[test]
fn containing_rule_is_more_uncertain() {
    let (mut model, _) = trained(Mode::It2, 2);
    let rb = &mut model.rulebase;
    for k in 0..rb.n_features() {
        rb.rules[0].antecedents[k] = Antecedent::new(0.2, 0.8, 0.2);
        rb.rules[1].antecedents[k] = Antecedent::new(0.4, 0.6, 0.2);
    }
    let rep = explain_model(rb);
    assert!(rep.per_rule[0].mean_fou_area > rep.per_rule[1].mean_fou_area);
    assert_eq!(rep.rules_by_uncertainty(), vec![0, 1]);
}

#[test]
fn report_shape_and_stable_ranking() {
    let (model, _) = trained(Mode::It2, 7);
    let a = explain_model(&model.rulebase);
    let b = explain_model(&model.rulebase);
    assert_eq!(a.per_feature.len(), 7 * 13);
    assert_eq!(a.per_rule.len(), 7);
    assert_eq!(a.rules_by_uncertainty(), b.rules_by_uncertainty());
    assert_eq!(a, b);
}

#[test]
fn type1_report_is_flat() {
    let (model, data) = trained(Mode::Type1Order1, 4);
    let rep = explain_model(&model.rulebase);
    assert!(rep.per_feature.iter().all(|f| f.fou_area == 0.0));
    assert_eq!(rep.rules_by_uncertainty(), vec![0, 1, 2, 3]);
    let (p, _) = explain_instance(&model.rulebase, &data.x[0], data.target_scaler);
    assert_eq!(p.width, 0.0);
}

#[test]
fn instance_width_scales_with_target_std() {
    let (model, data) = trained(Mode::It2, 7);
    let unit = TargetScaler {
        mean: 0.0,
        std: 1.0,
    };
    for x in data.x.iter().take(50) {
        let (std_units, _) = explain_instance(&model.rulebase, x, unit);
        let (mwh, ranked) = explain_instance(&model.rulebase, x, data.target_scaler);
        let expect = std_units.width * data.target_scaler.std;
        assert!((mwh.width - expect).abs() <= 1e-9 * expect.max(1.0));
        let sum: f64 = ranked.iter().map(|r| r.norm_upper).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_rule_takes_all_activation() {
    let (model, data) = trained(Mode::It2, 1);
    let (_, ranked) = explain_instance(&model.rulebase, &data.x[3], data.target_scaler);
    assert_eq!(ranked.len(), 1);
    assert_eq!(
        (
            ranked[0].rule_index,
            ranked[0].norm_upper,
            ranked[0].norm_lower
        ),
        (0, 1.0, 1.0)
    );
}

fn numbers_in(s: &str) -> Vec<f64> {
    s.split(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | 'e' | '+')))
        .filter_map(|t| t.parse::<f64>().ok())
        .collect()
}

#[test]
fn exported_text_shape_and_precision() {
    let (model, _) = trained(Mode::It2, 7);
    let text = export_rules_text(&model.rulebase, &model.feature_names, Some(&model.scaling));
    let blocks: Vec<&str> = text.split("\nRule ").skip(1).collect();
    assert_eq!(blocks.len(), 7);
    for (j, block) in blocks.iter().enumerate() {
        let clauses: Vec<&str> = block
            .lines()
            .filter(|l| l.contains("is Gaussian("))
            .collect();
        assert_eq!(clauses.len(), 13);
        assert_eq!(
            block
                .lines()
                .filter(|l| l.trim_start().starts_with("THEN"))
                .count(),
            1
        );
        for (k, line) in clauses.iter().enumerate() {
            let inner = &line[line.find("Gaussian(").unwrap()..line.find(')').unwrap()];
            let v = numbers_in(inner);
            let a = &model.rulebase.rules[j].antecedents[k];
            for (printed, actual) in v.iter().zip([a.c1, a.c2, a.sigma]) {
                assert!(
                    (printed - actual).abs() <= 5e-6 * actual.abs(),
                    "{printed} vs {actual}"
                );
            }
        }
    }
    let tiny = export_rules_text(&model.rulebase, &model.feature_names, None);
    assert!(!tiny.contains("original"));
}

#[test]
fn rule_svgs_are_wellformed_xml() {
    let (model, _) = trained(Mode::It2, 3);
    let mut names = model.feature_names.clone();
    names[0] = "a<b & \"c\"".into();
    let svgs = rule_svgs(&model.rulebase, &names);
    assert_eq!(svgs.len(), 3);
    for s in &svgs {
        let doc = roxmltree::Document::parse(s).expect("valid XML");
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
}

#[test]
fn save_load_predicts_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for mode in [Mode::It2, Mode::Type1Order1, Mode::Type1Order0] {
        let (model, _) = trained(mode, 5);
        let path = dir.path().join(format!("{mode}.json"));
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        for _ in 0..100 {
            let raw: Vec<f64> = model
                .scaling
                .features
                .iter()
                .map(|s| rng.random_range(s.min - 0.2 * s.span()..s.max + 0.2 * s.span()))
                .collect();
            let (a, b) = (model.predict_raw(&raw), back.predict_raw(&raw));
            assert_eq!(a.y_pred.to_bits(), b.y_pred.to_bits());
            assert_eq!(a.interval.0.to_bits(), b.interval.0.to_bits());
            assert_eq!(a.interval.1.to_bits(), b.interval.1.to_bits());
        }
    }
}
