mod common;

use common::{fd_check, random_instance, random_rulebase, FdReport};
use it2anfis::train::{antecedent_gradients, mse, q_gradient};
use it2anfis::{predict_batch, predict_one, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_mode(mode: Mode, seeds: std::ops::Range<u64>) {
    let mut total = FdReport::default();
    for seed in seeds {
        let rep = fd_check(&random_instance(seed, mode));
        assert_eq!(rep.failed, 0, "seed {seed}: {rep:?}");
        total.merge(rep);
    }
    assert!(total.checked > 500, "{total:?}");
}

#[test]
fn it2_gradients_match_finite_differences() {
    check_mode(Mode::It2, 0..100);
}

#[test]
fn order1_gradients_match_finite_differences() {
    check_mode(Mode::Type1Order1, 100..200);
}

#[test]
fn order0_gradients_match_finite_differences() {
    check_mode(Mode::Type1Order0, 200..300);
}

#[test]
fn q_gradient_matches_finite_differences() {
    for seed in 0..30 {
        let inst = random_instance(seed, Mode::It2);
        let mut rb = inst.rb.clone();
        rb.q = 0.3;
        let g = q_gradient(&rb, &inst.xs, &inst.ys);
        let h = 1e-6;
        let (mut p, mut m) = (rb.clone(), rb.clone());
        p.q += h;
        m.q -= h;
        let n = (mse(&p, &inst.xs, &inst.ys) - mse(&m, &inst.xs, &inst.ys)) / (2.0 * h);
        assert!((g - n).abs() <= 1e-6 * g.abs().max(1.0), "{g} vs {n}");
    }
}

#[test]
fn far_inputs_contribute_no_antecedent_gradient() {
    let inst = random_instance(5, Mode::It2);
    let far = vec![vec![1e4; inst.rb.n_features()]];
    let (d1, d2) = antecedent_gradients(&inst.rb, &far, &[1.0]);
    assert!(d1.iter().chain(&d2).flatten().all(|&v| v == 0.0));
}

#[test]
fn batch_agrees_with_single() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for mode in [Mode::It2, Mode::Type1Order1, Mode::Type1Order0] {
        let rb = random_rulebase(&mut rng, 6, 4, mode);
        let xs: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| rng.random_range(-0.5..1.5)).collect())
            .collect();
        for (x, b) in xs.iter().zip(predict_batch(&rb, &xs)) {
            let s = predict_one(&rb, x);
            assert!((s.y_pred - b.y_pred).abs() <= 1e-12);
            assert!((s.interval.0 - b.interval.0).abs() <= 1e-12);
            assert!((s.interval.1 - b.interval.1).abs() <= 1e-12);
        }
    }
}
