//! One-shot distributed PCA.
//!
//! Each worker ships the leading `d̂0` columns of `U_n Λ_n` from its local SVD;
//! the server stacks them, takes another SVD and broadcasts the leading left
//! singular vectors `Û`. Workers then train on `Ûᵀ A_n`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One worker's raw (or projected) dataset, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerShard {
    pub samples: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub worker_id: usize,
}

impl WorkerShard {
    pub fn new(samples: DMatrix<f64>, labels: Vec<usize>, worker_id: usize) -> Result<Self> {
        if samples.ncols() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                samples.ncols(),
                labels.len()
            )));
        }
        Ok(Self {
            samples,
            labels,
            worker_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0 || self.samples.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFactor {
    /// `d0 × d̂0`, columns `σ_j u_j` in non-increasing `σ_j` order.
    pub scaled_basis: DMatrix<f64>,
    pub worker_id: usize,
}

/// Orthonormal `d0 × d̂0` projection basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBasis {
    basis: DMatrix<f64>,
}

impl GlobalBasis {
    /// Wraps a matrix that is assumed to have orthonormal columns.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn raw_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn reduced_dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Thin SVD with singular values sorted descending and a deterministic sign
/// per left singular vector.
fn sorted_left_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = a.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut sorted = DMatrix::zeros(u.nrows(), order.len());
    let mut values = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        let mut col = u.column(src).clone_owned();
        fix_sign(col.as_mut_slice());
        sorted.set_column(dst, &col);
        values.push(svd.singular_values[src]);
    }
    Ok((sorted, values))
}

/// Flips `v` so its largest-magnitude entry is positive (first one wins ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Leading `d̂0` columns of `U_n Λ_n`. Directions beyond the numerical rank of
/// the shard come back as zero columns.
pub fn local_factor(shard: &WorkerShard, reduced_dim: usize) -> Result<LocalFactor> {
    if shard.is_empty() {
        return Err(Error::Empty("worker shard has no samples"));
    }
    let d0 = shard.dim();
    if reduced_dim == 0 || reduced_dim > d0 {
        return Err(Error::Domain(format!(
            "reduced dimension must lie in 1..={d0}, got {reduced_dim}"
        )));
    }
    let (u, sigma) = sorted_left_svd(&shard.samples)?;
    let cutoff = sigma.first().copied().unwrap_or(0.0)
        * f64::EPSILON
        * shard.samples.nrows().max(shard.samples.ncols()) as f64;
    let mut scaled_basis = DMatrix::zeros(d0, reduced_dim);
    for j in 0..reduced_dim.min(sigma.len()) {
        if sigma[j] > cutoff {
            scaled_basis.set_column(j, &(u.column(j) * sigma[j]));
        }
    }
    Ok(LocalFactor {
        scaled_basis,
        worker_id: shard.worker_id,
    })
}

/// Server-side merge: SVD of the worker factors stacked side by side in
/// worker-id order.
pub fn merge_factors(factors: &[LocalFactor]) -> Result<GlobalBasis> {
    let first = factors.first().ok_or(Error::Empty("no local factors to merge"))?;
    let (d0, k) = first.scaled_basis.shape();
    if let Some(bad) = factors.iter().find(|f| f.scaled_basis.shape() != (d0, k)) {
        return Err(Error::Shape(format!(
            "worker {} factor is {:?}, expected {:?}",
            bad.worker_id,
            bad.scaled_basis.shape(),
            (d0, k)
        )));
    }
    let mut ordered: Vec<&LocalFactor> = factors.iter().collect();
    ordered.sort_by_key(|f| f.worker_id);

    let mut stacked = DMatrix::zeros(d0, k * ordered.len());
    for (slot, f) in ordered.iter().enumerate() {
        stacked.view_mut((0, slot * k), (d0, k)).copy_from(&f.scaled_basis);
    }
    let (u, _) = sorted_left_svd(&stacked)?;
    Ok(GlobalBasis {
        basis: u.columns(0, k).clone_owned(),
    })
}

/// `Ûᵀ A_n`, labels carried over.
pub fn project(basis: &GlobalBasis, shard: &WorkerShard) -> Result<WorkerShard> {
    if basis.raw_dim() != shard.dim() {
        return Err(Error::Shape(format!(
            "basis expects {}-dimensional samples, shard has {}",
            basis.raw_dim(),
            shard.dim()
        )));
    }
    Ok(WorkerShard {
        samples: basis.basis.tr_mul(&shard.samples),
        labels: shard.labels.clone(),
        worker_id: shard.worker_id,
    })
}

/// Runs the whole protocol over `shards` and returns the basis together with
/// the projected shards.
pub fn distributed_pca(shards: &[WorkerShard], reduced_dim: usize) -> Result<(GlobalBasis, Vec<WorkerShard>)> {
    let factors = shards
        .iter()
        .map(|s| local_factor(s, reduced_dim))
        .collect::<Result<Vec<_>>>()?;
    let basis = merge_factors(&factors)?;
    let projected = shards
        .iter()
        .map(|s| project(&basis, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((basis, projected))
}

/// Fraction of per-frame uplink saved by reducing the input dimension,
/// `1 − d̂0 / d0`.
pub fn communication_saving(raw_dim: usize, reduced_dim: usize) -> f64 {
    1.0 - reduced_dim as f64 / raw_dim as f64
}

/// Sines of the principal angles between the column spaces of two matrices
/// with orthonormal columns, largest first.
///
/// Computed from `‖(I − AAᵀ)B‖` rather than `acos` of `AᵀB`, which loses all
/// precision for angles below ~1e-8.
pub fn principal_angle_sines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "subspaces live in R^{} and R^{}",
            a.nrows(),
            b.nrows()
        )));
    }
    let residual = b - a * a.tr_mul(b);
    let mut s: Vec<f64> = residual.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(s)
}

/// Largest principal angle (radians) between two orthonormal bases.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let sines = principal_angle_sines(a, b)?;
    Ok(sines.first().copied().unwrap_or(0.0).clamp(0.0, 1.0).asin())
}
