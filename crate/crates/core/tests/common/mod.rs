#![allow(dead_code)]

use awfl_core::harness::{DataSource, OptimizerKind, SimConfig};
use awfl_core::mathkit::{sample_real_gaussian, Lane, RngStream};
use nalgebra::DMatrix;

/// `E1(x) = ∫_0^∞ exp(−x eᵘ) du` by adaptive Simpson, independent of the
/// series/continued-fraction implementation under test.
pub fn quadrature_e1(x: f64) -> f64 {
    let f = |u: f64| (-x * u.exp()).exp();
    let upper = (800.0 / x).ln().max(1.0);
    // split at the knee where the integrand starts to fall
    let knee = (1.0 / x).ln().max(0.0);
    let mut total = 0.0;
    let mut a = 0.0;
    for b in [knee, upper] {
        if b > a {
            total += adaptive_simpson(&f, a, b, 1e-14, 50);
            a = b;
        }
    }
    total
}

/// `rel_tol` is relative to a first coarse estimate of the integral.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, rel_tol * whole.abs(), depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = RngStream::new(seed, 0, 0, Lane::Diagnostics).generator();
    DMatrix::from_fn(rows, cols, |_, _| sample_real_gaussian(1.0, &mut rng).unwrap())
}

pub fn gaussian_vec(len: usize, seed: u64, worker: u32) -> Vec<f64> {
    let mut rng = RngStream::new(seed, worker, 0, Lane::Diagnostics).generator();
    (0..len).map(|_| sample_real_gaussian(1.0, &mut rng).unwrap()).collect()
}

/// Small synthetic run that finishes in well under a second.
pub fn tiny_config(optimizer: OptimizerKind) -> SimConfig {
    SimConfig {
        num_frames: 40,
        stepsize: 0.1,
        distances: vec![300.0, 200.0, 400.0],
        raw_dim: 12,
        reduced_dim: 6,
        samples_per_worker: 30,
        test_samples: 90,
        hidden_dims: vec![5],
        optimizer,
        lipschitz_trials: 4,
        data: DataSource::Synthetic {
            classes: 3,
            separation: 3.0,
        },
        ..SimConfig::default()
    }
}
