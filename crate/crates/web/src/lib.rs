//! Browser demo: three interactive views over the simulator core.
//!
//! Every export is a thin wrapper over a plain Rust function so the same
//! logic is testable natively.

use awfl_core::channel::{expected_inv_rho_sq, inverse_scheduling_probability, scheduling_probability, WorkerGeometry};
use awfl_core::dpca::{communication_saving, distributed_pca, max_principal_angle, WorkerShard};
use awfl_core::harness::{run_experiment, OptimizerKind, SimConfig};
use awfl_core::mathkit::{sample_real_gaussian, Lane, RngStream};
use awfl_core::Result;
use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

fn js_error(e: awfl_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// One row per threshold: `[h0, Pr[scheduled], c, E[ρ⁻²]]`, flattened.
pub fn truncation_table(distance: f64, alpha: f64, p0: f64, h0_min: f64, h0_max: f64, points: usize) -> Result<Vec<f64>> {
    let geom = WorkerGeometry::new(distance, alpha)?;
    if !(h0_min > 0.0 && h0_max >= h0_min) || points < 2 {
        return Err(awfl_core::Error::Domain(
            "need 0 < h0_min ≤ h0_max and at least two points".into(),
        ));
    }
    let ratio = (h0_max / h0_min).ln();
    let mut out = Vec::with_capacity(4 * points);
    for i in 0..points {
        let h0 = h0_min * (ratio * i as f64 / (points - 1) as f64).exp();
        out.extend([
            h0,
            scheduling_probability(&geom, h0),
            inverse_scheduling_probability(&geom, h0),
            expected_inv_rho_sq(&geom, h0, p0)?,
        ]);
    }
    Ok(out)
}

/// Running-average `‖∇f‖²` curves of plain and accelerated descent on the
/// same task and channel draws.
#[wasm_bindgen]
pub struct Comparison {
    wfl: Vec<f64>,
    awfl: Vec<f64>,
    wfl_accuracy: f64,
    awfl_accuracy: f64,
}

#[wasm_bindgen]
impl Comparison {
    #[wasm_bindgen(getter)]
    pub fn wfl(&self) -> Vec<f64> {
        self.wfl.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn awfl(&self) -> Vec<f64> {
        self.awfl.clone()
    }

    #[wasm_bindgen(getter, js_name = wflAccuracy)]
    pub fn wfl_accuracy(&self) -> f64 {
        self.wfl_accuracy
    }

    #[wasm_bindgen(getter, js_name = awflAccuracy)]
    pub fn awfl_accuracy(&self) -> f64 {
        self.awfl_accuracy
    }
}

pub fn compare_optimizers(frames: usize, stepsize: f64, momentum: f64, h0: f64, seed: u64) -> Result<Comparison> {
    let base = SimConfig {
        num_frames: frames,
        stepsize,
        truncation: h0,
        seed,
        samples_per_worker: 60,
        test_samples: 300,
        lipschitz_trials: 5,
        ..SimConfig::default()
    };
    let wfl = run_experiment(&base)?;
    let awfl = run_experiment(&SimConfig {
        optimizer: OptimizerKind::Awfl,
        momentum,
        ..base
    })?;
    let curve = |r: &awfl_core::harness::RunOutput| r.records.iter().map(|x| x.running_avg_grad_norm_sq).collect();
    Ok(Comparison {
        wfl: curve(&wfl),
        awfl: curve(&awfl),
        wfl_accuracy: wfl.final_accuracy,
        awfl_accuracy: awfl.final_accuracy,
    })
}

/// `[largest principal angle to centralized PCA, communication saving,
/// leading singular values of the data...]` for a random low-rank dataset
/// plus isotropic noise of the given level.
pub fn pca_summary(raw_dim: usize, rank: usize, workers: usize, reduced_dim: usize, noise: f64, seed: u64) -> Result<Vec<f64>> {
    if rank == 0 || rank > raw_dim || workers == 0 || reduced_dim == 0 || reduced_dim > raw_dim {
        return Err(awfl_core::Error::Domain(
            "need 1 ≤ rank ≤ d0, 1 ≤ d̂0 ≤ d0 and at least one worker".into(),
        ));
    }
    let per_worker = 4 * raw_dim;
    let cols = workers * per_worker;
    let mut rng = RngStream::new(seed, 0, 0, Lane::Diagnostics).generator();
    let mut draw = |r: usize, c: usize| -> Result<DMatrix<f64>> {
        let v = (0..r * c).map(|_| sample_real_gaussian(1.0, &mut rng)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_vec(r, c, v))
    };
    let data = draw(raw_dim, rank)? * draw(rank, cols)? + draw(raw_dim, cols)? * noise;
    let shards = (0..workers)
        .map(|n| WorkerShard::new(data.columns(n * per_worker, per_worker).clone_owned(), vec![0; per_worker], n))
        .collect::<Result<Vec<_>>>()?;
    let (basis, _) = distributed_pca(&shards, reduced_dim)?;

    let svd = data.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let central = DMatrix::from_fn(raw_dim, reduced_dim, |r, c| u[(r, order[c])]);

    let mut out = vec![
        max_principal_angle(basis.matrix(), &central)?,
        communication_saving(raw_dim, reduced_dim),
    ];
    out.extend(order.iter().map(|&i| svd.singular_values[i]));
    Ok(out)
}

#[wasm_bindgen(js_name = truncationTable)]
pub fn truncation_table_js(distance: f64, alpha: f64, p0: f64, h0_min: f64, h0_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    truncation_table(distance, alpha, p0, h0_min, h0_max, points).map_err(js_error)
}

#[wasm_bindgen(js_name = compareOptimizers)]
pub fn compare_optimizers_js(frames: usize, stepsize: f64, momentum: f64, h0: f64, seed: u32) -> Result<Comparison, JsError> {
    compare_optimizers(frames, stepsize, momentum, h0, seed as u64).map_err(js_error)
}

#[wasm_bindgen(js_name = pcaSummary)]
pub fn pca_summary_js(raw_dim: usize, rank: usize, workers: usize, reduced_dim: usize, noise: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    pca_summary(raw_dim, rank, workers, reduced_dim, noise, seed as u64).map_err(js_error)
}
