mod common;

use awfl_core::dpca::WorkerShard;
use awfl_core::learner::{
    estimate_l, init_model, local_gradient, local_loss, test_accuracy, GradientVector, MlpSpec, ModelVector,
};
use awfl_core::mathkit::{Lane, RngStream};
use common::{gaussian_matrix, gaussian_vec};

fn problem(seed: u64) -> (MlpSpec, ModelVector, WorkerShard) {
    let spec = MlpSpec::new(6, vec![5, 4], 3).unwrap();
    let w = init_model(&spec, RngStream::new(seed, 0, 0, Lane::ModelInit));
    let labels = (0..12).map(|i| (i * 7 + seed as usize) % 3).collect();
    let shard = WorkerShard::new(gaussian_matrix(6, 12, seed), labels, 0).unwrap();
    (spec, w, shard)
}

fn shifted(w: &ModelVector, dir: &[f64], t: f64) -> ModelVector {
    ModelVector(w.0.iter().zip(dir).map(|(a, b)| a + t * b).collect())
}

/// Fourth-order central difference of the loss along coordinate `i`.
fn fd_coordinate(w: &ModelVector, shard: &WorkerShard, spec: &MlpSpec, i: usize) -> f64 {
    let h = 1e-4;
    let f = |t: f64| {
        let mut x = w.clone();
        x.0[i] += t;
        local_loss(&x, shard, spec).unwrap()
    };
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

#[test]
fn two_hidden_layer_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let (spec, w, shard) = problem(seed);
        let g = local_gradient(&w, &shard, &spec).unwrap();
        for i in 0..w.len() {
            let fd = fd_coordinate(&w, &shard, &spec, i);
            assert!((g.0[i] - fd).abs() <= 1e-8 * (1.0 + fd.abs()), "seed {seed} coord {i}: {} vs {fd}", g.0[i]);
        }
    }
}

/// Spectral norm of the Hessian by power iteration on finite-difference
/// Hessian-vector products.
fn hessian_norm(w: &ModelVector, shard: &WorkerShard, spec: &MlpSpec) -> f64 {
    let hv = |v: &[f64]| -> Vec<f64> {
        let eps = 1e-5;
        let plus = local_gradient(&shifted(w, v, eps), shard, spec).unwrap();
        let minus = local_gradient(&shifted(w, v, -eps), shard, spec).unwrap();
        plus.0.iter().zip(&minus.0).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
    };
    let mut v = gaussian_vec(w.len(), 77, 0);
    let mut lambda = 0.0;
    for _ in 0..300 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let hvv = hv(&v);
        lambda = hvv.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = hvv;
    }
    lambda
}

#[test]
fn lipschitz_estimate_is_bounded_by_hessian_norm() {
    let (spec, w, shard) = problem(4);
    let oracle = hessian_norm(&w, &shard, &spec);
    let est = estimate_l(&w, &shard, &spec, 50, RngStream::new(4, 0, 0, Lane::Lipschitz)).unwrap();
    assert!(est > 0.0);
    assert!(est <= oracle * 1.01, "estimate {est} above Hessian norm {oracle}");
    assert!(est >= oracle / (w.len() as f64).sqrt(), "estimate {est} far below {oracle}");
}

#[test]
fn zero_model_predicts_the_first_class() {
    let (spec, w, shard) = problem(2);
    let zero = ModelVector::zeros(w.len());
    let want = shard.labels.iter().filter(|&&l| l == 0).count() as f64 / shard.len() as f64;
    assert_eq!(test_accuracy(&zero, &shard, &spec).unwrap(), want);
    let loss = local_loss(&zero, &shard, &spec).unwrap();
    assert!((loss - 3.0f64.ln()).abs() < 1e-15);
}

#[test]
fn loss_decreases_along_negative_gradient() {
    let (spec, w, shard) = problem(6);
    let g: GradientVector = local_gradient(&w, &shard, &spec).unwrap();
    let f0 = local_loss(&w, &shard, &spec).unwrap();
    let neg: Vec<f64> = g.0.iter().map(|x| -x).collect();
    let f1 = local_loss(&shifted(&w, &neg, 1e-3), &shard, &spec).unwrap();
    assert!(f1 < f0);
    assert!(((f0 - f1) / 1e-3 - g.norm_sq()).abs() < 1e-3 * g.norm_sq().max(1.0));
}
