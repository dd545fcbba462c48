use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::regressor::design_row;

fn small_config(seed: u64) -> TrainingConfig {
    TrainingConfig { hidden_size: 6, head_hidden: 5, history_n: 2, seed, ..TrainingConfig::default() }
}

fn observations(depths: Vec<f64>, visible: Vec<bool>) -> KeypointObservationSet {
    let n = depths.len();
    KeypointObservationSet::new(vec![Vector2::new(100.0, 100.0); n], depths, visible).unwrap()
}

/// Estimator with random weights and a random, non-zero recurrent state.
fn random_case(seed: u64) -> (LstmEstimator, DVector<f64>, Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 3;
    let mut cfg = small_config(seed);
    cfg.alpha1 = rng.random_range(0.2..2.0);
    cfg.alpha2 = rng.random_range(0.2..2.0);
    let mut e = LstmEstimator::new(m, cfg).unwrap();
    e.hidden = DVector::from_fn(cfg.hidden_size, |_, _| rng.random_range(-0.5..0.5));
    e.cell = DVector::from_fn(cfg.hidden_size, |_, _| rng.random_range(-0.5..0.5));
    let rel: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.5)).collect();
    // Spread targets so some residuals fall in the linear Huber branch.
    let depths: Vec<f64> = (0..m).map(|_| rng.random_range(0.3..4.0)).collect();
    let visible = vec![true, rng.random_bool(0.7), true];
    let input = DVector::from_fn(m * (cfg.history_n + 1), |_, _| rng.random_range(0.0..1.5));
    (e, input, rel, depths, visible)
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let eps = 1e-5;
    for seed in 0..5 {
        let (e, input, rel, depths, visible) = random_case(seed);
        let (_, grad) = e.loss_and_gradient(&input, &rel, &depths, &visible);
        let analytic: Vec<Vec<f64>> = grad.tensors().into_iter().map(|(_, t)| t.to_vec()).collect();
        let names: Vec<&str> = grad.tensors().into_iter().map(|(n, _)| n).collect();
        let mut probe = e.clone();
        for (ti, tensor) in analytic.iter().enumerate() {
            for (k, &a) in tensor.iter().enumerate() {
                let orig = probe.network.tensors_mut()[ti][k];
                probe.network.tensors_mut()[ti][k] = orig + eps;
                let lp = probe.loss(&input, &rel, &depths, &visible).total();
                probe.network.tensors_mut()[ti][k] = orig - eps;
                let lm = probe.loss(&input, &rel, &depths, &visible).total();
                probe.network.tensors_mut()[ti][k] = orig;
                let numeric = (lp - lm) / (2.0 * eps);
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(err < 1e-4, "seed {seed} {}[{k}]: analytic {a} numeric {numeric}", names[ti]);
            }
        }
    }
}

#[test]
fn zero_network_outputs_biases() {
    let cfg = small_config(0);
    let mut e = LstmEstimator::zeroed(3, cfg).unwrap();
    e.network.head_beta.output.bias = DVector::from_vec(vec![0.1, 0.9, 0.2]);
    e.network.head_depth.output.bias = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let input = DVector::from_element(9, 0.7);
    let out = lstm_forward(&e, &input).unwrap();
    assert_eq!(out.beta.as_slice(), &[0.1, 0.9, 0.2]);
    assert_eq!(out.depth.as_slice(), &[1.0, 2.0, 3.0]);
    assert!(out.beta_per_keypoint.iter().all(|v| *v == 0.0));
    assert!(out.hidden.iter().all(|v| *v == 0.0));
}

#[test]
fn forward_is_reproducible_for_a_seed() {
    let a = LstmEstimator::new(5, TrainingConfig { seed: 42, ..TrainingConfig::default() }).unwrap();
    let b = LstmEstimator::new(5, TrainingConfig { seed: 42, ..TrainingConfig::default() }).unwrap();
    let input = DVector::from_fn(55, |i, _| (i as f64 * 0.37).sin());
    let (oa, ob) = (a.forward(&input).unwrap(), b.forward(&input).unwrap());
    assert_eq!(oa, ob);
    let c = LstmEstimator::new(5, TrainingConfig { seed: 43, ..TrainingConfig::default() }).unwrap();
    assert_ne!(c.forward(&input).unwrap().beta, oa.beta);
}

#[test]
fn input_layout_and_history() {
    let cfg = small_config(1);
    let mut e = LstmEstimator::new(2, cfg).unwrap();
    assert_eq!(e.history(), &[vec![0.0, 0.0], vec![0.0, 0.0]]);
    let obs = observations(vec![1.0, 1.0], vec![true, false]);
    e.train_step(&[0.4, 0.9], &obs).unwrap();
    assert_eq!(e.history(), &[vec![0.4, 0.0], vec![0.0, 0.0]]);
    e.train_step(&[0.5, 0.6], &observations(vec![1.0, 1.0], vec![true, true])).unwrap();
    assert_eq!(e.history(), &[vec![0.5, 0.4], vec![0.6, 0.0]]);
    let x = e.assemble_input(&[0.7, 0.8], &[false, true]);
    assert_eq!(x.as_slice(), &[0.0, 0.5, 0.4, 0.8, 0.6, 0.0]);
}

#[test]
fn main_loss_gradient_when_auxiliaries_off() {
    let (mut e, input, rel, depths, visible) = random_case(9);
    e.config.alpha1 = 0.0;
    e.config.alpha2 = 0.0;
    let (_, grad) = e.loss_and_gradient(&input, &rel, &depths, &visible);

    // Main-loss-only reference: Huber gradient through the coefficient head alone.
    let out = e.network.forward(&input, &e.hidden, &e.cell);
    let beta = DepthRegressorParams::new(out.beta[0], out.beta[1], out.beta[2]);
    let mut d_beta = DVector::zeros(3);
    for i in (0..rel.len()).filter(|&i| visible[i]) {
        let row = design_row(rel[i]);
        let g = huber_grad(depths[i], beta.apply(rel[i]), e.config.huber_delta);
        d_beta += DVector::from_column_slice(row.as_slice()) * g;
    }
    let mut only = e.network.clone();
    only.head_beta_per_keypoint.output.weight.fill(0.0);
    only.head_depth.output.weight.fill(0.0);
    let (o2, cache) = only.forward_cached(&input, &e.hidden, &e.cell);
    let reference = only.backward(
        &input,
        &e.hidden,
        &e.cell,
        &o2,
        &cache,
        &d_beta,
        &DVector::zeros(3 * rel.len()),
        &DVector::zeros(rel.len()),
    );
    assert!(grad.head_beta_per_keypoint.output.weight.iter().all(|v| *v == 0.0));
    assert!(grad.head_depth.output.bias.iter().all(|v| *v == 0.0));
    let diff: f64 = grad
        .tensors()
        .iter()
        .zip(reference.tensors())
        .flat_map(|((_, a), (_, b))| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(diff <= 1e-12, "max diff {diff}");
}

#[test]
fn tau_zero_is_pure_forward() {
    let cfg = TrainingConfig { tau: 0, ..small_config(3) };
    let mut e = LstmEstimator::new(3, cfg).unwrap();
    let before = e.network.clone();
    let rel = [0.3, 0.6, 0.9];
    let input = e.assemble_input(&rel, &[true; 3]);
    let expect = e.forward(&input).unwrap();
    let out = e.train_step(&rel, &observations(vec![1.0, 1.5, 2.0], vec![true; 3])).unwrap();
    assert_eq!(e.network, before);
    assert_eq!(out.beta.to_vector().as_slice(), expect.beta.as_slice());
    assert_eq!(e.hidden, expect.hidden);
}

#[test]
fn all_invisible_leaves_state() {
    let mut e = LstmEstimator::new(3, small_config(4)).unwrap();
    let before = e.clone();
    let r = e.train_step(&[0.1, 0.2, 0.3], &observations(vec![1.0; 3], vec![false; 3]));
    assert!(matches!(r, Err(Error::NoObservation)));
    assert_eq!(e, before);
}

#[test]
fn overflow_rolls_back() {
    let mut e = LstmEstimator::new(3, small_config(5)).unwrap();
    let before = e.clone();
    let r = e.train_step(&[f64::INFINITY, 0.2, 0.3], &observations(vec![1.0; 3], vec![true; 3]));
    assert!(r.is_err());
    assert_eq!(e, before);
    e.network.head_beta.output.weight[(0, 0)] = f64::NAN;
    let snap = e.clone();
    let r = e.train_step(&[0.1, 0.2, 0.3], &observations(vec![1.0; 3], vec![true; 3]));
    assert!(matches!(r, Err(Error::NumericalOverflow)));
    assert_eq!(format!("{e:?}"), format!("{snap:?}"));
}

#[test]
fn online_training_reduces_loss_on_stationary_target() {
    let truth = DepthRegressorParams::new(0.5, 1.2, 0.1);
    let mut e = LstmEstimator::new(5, TrainingConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut first = None;
    let mut last = 0.0;
    for t in 0..500 {
        let rel: Vec<f64> = (0..5)
            .map(|i| 0.3 + 0.15 * i as f64 + 0.1 * (t as f64 * 0.05 + i as f64).sin() + rng.random_range(-0.01..0.01))
            .collect();
        let depths: Vec<f64> = rel.iter().map(|&r| truth.apply(r)).collect();
        let out = e.train_step(&rel, &observations(depths, vec![true; 5])).unwrap();
        first.get_or_insert(out.initial_loss.total());
        last = out.final_loss.total();
    }
    let first = first.unwrap();
    assert!(last < 0.1 * first, "first {first} last {last}");
}

#[test]
fn hybrid_keeps_perfect_prediction() {
    let truth = DepthRegressorParams::new(0.4, 1.1, 0.2);
    let cfg = TrainingConfig { tau: 0, ..small_config(0) };
    let mut e = LstmEstimator::zeroed(3, cfg).unwrap();
    e.network.head_beta.output.bias = DVector::from_column_slice(truth.to_vector().as_slice());
    let mut kf = kf_init();
    for t in 0..20 {
        let rel = [0.3 + 0.01 * t as f64, 0.8, 1.2];
        let depths = rel.iter().map(|&r| truth.apply(r)).collect();
        let beta = hybrid_step(&mut e, &mut kf, &rel, &observations(depths, vec![true; 3])).unwrap();
        assert!(beta.max_abs_diff(&truth) < 1e-9);
    }
}

#[test]
fn hybrid_with_constant_network_is_a_kalman_filter() {
    let constant = DepthRegressorParams::new(0.1, 0.8, 0.3);
    let cfg = TrainingConfig { learning_rate: 1e-300, ..small_config(0) };
    let mut e = LstmEstimator::zeroed(4, cfg).unwrap();
    e.network.head_beta.output.bias = DVector::from_column_slice(constant.to_vector().as_slice());
    let mut hybrid_kf = kf_init();
    let mut reference = kf_init();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let rel: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..1.4)).collect();
        let depths: Vec<f64> = rel.iter().map(|r| 0.3 * r * r + r + 0.1 + rng.random_range(-0.01..0.01)).collect();
        let visible: Vec<bool> = (0..4).map(|_| rng.random_bool(0.8)).collect();
        if !visible.iter().any(|v| *v) {
            continue;
        }
        let obs = observations(depths, visible);
        let beta = hybrid_step(&mut e, &mut hybrid_kf, &rel, &obs).unwrap();

        let predicted = kf_predict_with_mean(&reference, constant);
        let (r, o) = visible_pairs(&rel, &obs);
        reference = kf_update(&predicted, &r, &o).unwrap();
        assert!(beta.max_abs_diff(&reference.mean) < 1e-9);
        assert!((hybrid_kf.covariance - reference.covariance).amax() < 1e-9);
    }
}

fn run_frames(state: &mut EstimatorState, frames: std::ops::Range<u64>) -> Vec<DepthRegressorParams> {
    frames
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
            let rel: Vec<f64> = (0..5).map(|_| rng.random_range(0.2..1.4)).collect();
            let depths: Vec<f64> = rel.iter().map(|r| 0.5 * r * r + 1.2 * r + 0.1).collect();
            state.step(&rel, &observations(depths, vec![true; 5])).unwrap()
        })
        .collect()
}

#[test]
fn checkpoint_resumes_bit_exactly() {
    let cfg = EstimatorConfig {
        training: TrainingConfig {
            hidden_size: 16,
            head_hidden: 8,
            tau: 3,
            optimizer: OptimizerKind::Adam,
            ..TrainingConfig::default()
        },
        ..EstimatorConfig::default()
    };
    for method in [Method::Kf, Method::Lstm, Method::Hybrid, Method::StaticScale] {
        let mut a = EstimatorState::new(method, 5, &cfg).unwrap();
        run_frames(&mut a, 0..10);
        let text = Checkpoint::new(a.clone()).to_json().unwrap();
        let mut b = Checkpoint::from_json(&text).unwrap().state;
        assert_eq!(a, b, "{method}");
        let ta = run_frames(&mut a, 10..20);
        let tb = run_frames(&mut b, 10..20);
        assert_eq!(ta, tb, "{method}");
    }
}

#[test]
fn checkpoint_rejects_unknown_version() {
    let mut ck = Checkpoint::new(EstimatorState::new(Method::Kf, 5, &EstimatorConfig::default()).unwrap());
    ck.version = 99;
    let text = serde_json::to_string(&ck).unwrap();
    assert!(Checkpoint::from_json(&text).is_err());
}

#[test]
fn estimators_are_deterministic() {
    let cfg = EstimatorConfig {
        training: TrainingConfig { hidden_size: 16, head_hidden: 8, ..TrainingConfig::default() },
        ..EstimatorConfig::default()
    };
    for method in [Method::Kf, Method::Lstm, Method::Hybrid] {
        let mut a = EstimatorState::new(method, 5, &cfg).unwrap();
        let mut b = EstimatorState::new(method, 5, &cfg).unwrap();
        assert_eq!(run_frames(&mut a, 0..15), run_frames(&mut b, 0..15));
    }
}

#[test]
fn static_scale_freezes_after_first_observation() {
    let mut s = EstimatorState::new(Method::StaticScale, 2, &EstimatorConfig::default()).unwrap();
    let first = s.step(&[0.5, 1.0], &observations(vec![1.0, 2.0], vec![true, true])).unwrap();
    assert!((first.beta1 - 2.0).abs() < 1e-12 && first.beta0 == 0.0);
    let later = s.step(&[0.5, 1.0], &observations(vec![3.0, 9.0], vec![true, true])).unwrap();
    assert_eq!(first, later);
    assert_eq!(fit_scale(&[0.5], &[1.5]), DepthRegressorParams::new(0.0, 3.0, 0.0));
    // Least squares through the origin: sum(r z) / sum(r^2) = (0.5 + 4) / (0.25 + 1).
    assert!((fit_scale(&[0.5, 1.0], &[1.0, 4.0]).beta1 - 3.6).abs() < 1e-12);
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!(EstimatorState::new(Method::ExternalBaseline, 5, &EstimatorConfig::default()).is_err());
}
