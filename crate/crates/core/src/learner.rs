//! tanh MLP with a softmax cross-entropy head, trained on full local batches.
//!
//! Parameters are stored flat, layer by layer as `(W1, b1, W2, b2, …)` with
//! each `W` of shape `fan_out × fan_in` in row-major order.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::dpca::WorkerShard;
use crate::error::{Error, Result};
use crate::mathkit::RngStream;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            output_dim,
        };
        if spec.widths().any(|w| w == 0) {
            return Err(Error::Domain(format!("MLP layer widths must be positive: {spec:?}")));
        }
        Ok(spec)
    }

    fn widths(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.output_dim))
    }

    /// `(fan_in, fan_out)` for every affine layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let w: Vec<usize> = self.widths().collect();
        w.windows(2).map(|p| (p[0], p[1])).collect()
    }

    /// Total parameter count `d1 = Σ (fan_in + 1)·fan_out`.
    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|(i, o)| (i + 1) * o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

macro_rules! flat_vector {
    ($t:ty) => {
        impl $t {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn norm_sq(&self) -> f64 {
                self.0.iter().map(|x| x * x).sum()
            }

            pub fn norm(&self) -> f64 {
                self.norm_sq().sqrt()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }
        }

        impl From<Vec<f64>> for $t {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

flat_vector!(ModelVector);
flat_vector!(GradientVector);

struct Layer {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
}

fn unpack(spec: &MlpSpec, w: &ModelVector) -> Result<Vec<Layer>> {
    if w.len() != spec.num_params() {
        return Err(Error::Shape(format!(
            "model has {} parameters, spec needs {}",
            w.len(),
            spec.num_params()
        )));
    }
    let mut offset = 0;
    let mut layers = Vec::new();
    for (fan_in, fan_out) in spec.layers() {
        let weights = DMatrix::from_row_slice(fan_out, fan_in, &w.0[offset..offset + fan_in * fan_out]);
        offset += fan_in * fan_out;
        let bias = DVector::from_column_slice(&w.0[offset..offset + fan_out]);
        offset += fan_out;
        layers.push(Layer { weights, bias });
    }
    Ok(layers)
}

fn check_shard(spec: &MlpSpec, shard: &WorkerShard) -> Result<()> {
    if shard.dim() != spec.input_dim {
        return Err(Error::Shape(format!(
            "samples are {}-dimensional, model expects {}",
            shard.dim(),
            spec.input_dim
        )));
    }
    if shard.is_empty() {
        return Err(Error::Empty("shard has no samples"));
    }
    if let Some(bad) = shard.labels.iter().find(|&&l| l >= spec.output_dim) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {} classes",
            spec.output_dim
        )));
    }
    Ok(())
}

/// Activations of every layer; the last entry holds the logits.
fn forward(layers: &[Layer], x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.clone());
    for (l, layer) in layers.iter().enumerate() {
        let mut z = &layer.weights * acts.last().expect("input pushed");
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        if l + 1 < layers.len() {
            z.apply(|v| *v = v.tanh());
        }
        acts.push(z);
    }
    acts
}

/// Column-wise softmax (in place) and the per-column log-sum-exp.
fn softmax_columns(logits: &mut DMatrix<f64>) -> Vec<f64> {
    let mut lse = Vec::with_capacity(logits.ncols());
    for mut col in logits.column_iter_mut() {
        let max = col.max();
        let sum: f64 = col.iter().map(|v| (v - max).exp()).sum();
        col.apply(|v| *v = (*v - max).exp() / sum);
        lse.push(max + sum.ln());
    }
    lse
}

/// Softmax probabilities for a single logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut m = DMatrix::from_column_slice(logits.len(), 1, logits);
    softmax_columns(&mut m);
    m.as_slice().to_vec()
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(spec: &MlpSpec, stream: RngStream) -> ModelVector {
    let mut rng = stream.generator();
    let mut params = Vec::with_capacity(spec.num_params());
    for (fan_in, fan_out) in spec.layers() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ModelVector(params)
}

/// Mean softmax cross-entropy of the model on a shard.
pub fn local_loss(w: &ModelVector, shard: &WorkerShard, spec: &MlpSpec) -> Result<f64> {
    check_shard(spec, shard)?;
    let layers = unpack(spec, w)?;
    let mut acts = forward(&layers, &shard.samples);
    let logits = acts.pop().expect("at least one layer");
    Ok(cross_entropy(&logits, &shard.labels))
}

fn cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (col, &label) in logits.column_iter().zip(labels) {
        let max = col.max();
        let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - col[label];
    }
    total / labels.len() as f64
}

/// Full-batch gradient of [`local_loss`] by backpropagation, together with the loss.
pub fn local_loss_and_gradient(
    w: &ModelVector,
    shard: &WorkerShard,
    spec: &MlpSpec,
) -> Result<(f64, GradientVector)> {
    check_shard(spec, shard)?;
    let layers = unpack(spec, w)?;
    let mut acts = forward(&layers, &shard.samples);
    let mut delta = acts.pop().expect("at least one layer");
    let loss = cross_entropy(&delta, &shard.labels);

    let m = shard.len() as f64;
    softmax_columns(&mut delta);
    for (j, &label) in shard.labels.iter().enumerate() {
        delta[(label, j)] -= 1.0;
    }
    delta /= m;

    let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let prev = &acts[l];
        let dw = &delta * prev.transpose();
        let db = delta.column_sum();
        if l > 0 {
            let mut back = layers[l].weights.tr_mul(&delta);
            back.zip_apply(prev, |d, a| *d *= 1.0 - a * a);
            delta = back;
        }
        grads.push((dw, db));
    }
    grads.reverse();

    let mut flat = Vec::with_capacity(spec.num_params());
    for (dw, db) in grads {
        for r in 0..dw.nrows() {
            flat.extend(dw.row(r).iter());
        }
        flat.extend(db.iter());
    }
    Ok((loss, GradientVector(flat)))
}

pub fn local_gradient(w: &ModelVector, shard: &WorkerShard, spec: &MlpSpec) -> Result<GradientVector> {
    local_loss_and_gradient(w, shard, spec).map(|(_, g)| g)
}

/// Logits for every sample, one column per sample.
pub fn predict_logits(w: &ModelVector, samples: &DMatrix<f64>, spec: &MlpSpec) -> Result<DMatrix<f64>> {
    if samples.nrows() != spec.input_dim {
        return Err(Error::Shape(format!(
            "samples are {}-dimensional, model expects {}",
            samples.nrows(),
            spec.input_dim
        )));
    }
    let layers = unpack(spec, w)?;
    Ok(forward(&layers, samples).pop().expect("at least one layer"))
}

/// Index of the largest entry; ties and NaNs resolve to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Fraction of samples whose argmax logit equals the label.
pub fn test_accuracy(w: &ModelVector, testset: &WorkerShard, spec: &MlpSpec) -> Result<f64> {
    if testset.is_empty() {
        return Err(Error::Empty("test set has no samples"));
    }
    let logits = predict_logits(w, &testset.samples, spec)?;
    let correct = logits
        .column_iter()
        .zip(&testset.labels)
        .filter(|(col, &label)| argmax(col.iter().copied()) == label)
        .count();
    Ok(correct as f64 / testset.len() as f64)
}

/// Spread of the local gradients around their mean, `(1/N) Σ ‖y_n − ȳ‖²`.
pub fn estimate_g(gradients: &[GradientVector]) -> f64 {
    let Some(first) = gradients.first() else {
        return 0.0;
    };
    let n = gradients.len() as f64;
    let mut mean = vec![0.0; first.len()];
    for g in gradients {
        for (m, v) in mean.iter_mut().zip(&g.0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    gradients
        .iter()
        .map(|g| g.0.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum::<f64>()
        / n
}

/// Lower-bound estimate of a gradient map's Lipschitz constant: the largest
/// `‖∇(w+δ) − ∇(w)‖ / ‖δ‖` over `trials` random perturbations of norm `radius`.
pub fn estimate_lipschitz<F>(grad: F, w: &ModelVector, trials: usize, radius: f64, stream: RngStream) -> Result<f64>
where
    F: Fn(&ModelVector) -> Result<GradientVector>,
{
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    let base = grad(w)?;
    let mut rng = stream.generator();
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let dir: Vec<f64> = (0..w.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let step: Vec<f64> = dir.iter().map(|x| x * radius / norm).collect();
        let moved = ModelVector(w.0.iter().zip(&step).map(|(a, b)| a + b).collect());
        let g = grad(&moved)?;
        let diff = g.0.iter().zip(&base.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        best = best.max(diff / radius);
    }
    Ok(best)
}

/// Default perturbation radius used by [`estimate_l`].
pub const LIPSCHITZ_RADIUS: f64 = 1e-3;

/// Diagnostic lower bound on the smoothness constant of `f_n` around `w`.
pub fn estimate_l(w: &ModelVector, shard: &WorkerShard, spec: &MlpSpec, trials: usize, stream: RngStream) -> Result<f64> {
    estimate_lipschitz(|x| local_gradient(x, shard, spec), w, trials, LIPSCHITZ_RADIUS, stream)
}
