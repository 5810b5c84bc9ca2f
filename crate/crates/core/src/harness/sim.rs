//! The per-frame training loop.

use log::{info, warn};
use nalgebra::DMatrix;

use crate::channel::{aggregate, draw_channel_frame, make_transmit_plan, transmit, NoiseModel, WorkerGeometry};
use crate::dpca::{local_factor, merge_factors, project, GlobalBasis, WorkerShard};
use crate::error::{Error, Result};
use crate::harness::config::{DataSource, OptimizerKind, SimConfig};
use crate::harness::dataset::{load_idx, split_even, SyntheticTask};
use crate::learner::{
    estimate_g, estimate_l, init_model, local_loss_and_gradient, test_accuracy, GradientVector, MlpSpec, ModelVector,
};
use crate::mathkit::{Lane, RngStream};
use crate::optim::{stepsize_guard, AdamHyper, AdamState, MomentumState, ServerOptimizer, StepsizeGuard};
use crate::parallel::map_indexed;

/// Raw (unprojected) training shards and the server-side test set.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Vec<WorkerShard>,
    pub test: WorkerShard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    /// `‖∇f(w_k)‖²` from the exact local gradients.
    pub grad_norm_sq: f64,
    pub running_avg_grad_norm_sq: f64,
    pub loss: f64,
    pub test_accuracy: Option<f64>,
    pub channel_usages: u64,
    /// Running maximum of the per-frame gradient spread.
    pub empirical_g: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<FrameRecord>,
    pub final_model: ModelVector,
    pub final_accuracy: f64,
    pub spec: MlpSpec,
    pub basis: GlobalBasis,
    pub lipschitz_estimate: f64,
    pub guard: StepsizeGuard,
    pub empirical_g: f64,
    /// `f(w_0) − min_k f(w_k)`, a stand-in for `f(w_0) − f*`.
    pub initial_gap_estimate: f64,
}

impl RunOutput {
    pub fn d1(&self) -> usize {
        self.spec.num_params()
    }

    /// `(1/K) Σ_k ‖∇f(w_k)‖²` over the whole run.
    pub fn time_avg_grad_norm_sq(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.running_avg_grad_norm_sq)
    }
}

fn take_columns(data: &WorkerShard, count: usize) -> WorkerShard {
    WorkerShard {
        samples: data.samples.columns(0, count).clone_owned(),
        labels: data.labels[..count].to_vec(),
        worker_id: data.worker_id,
    }
}

/// Builds the datasets described by the config.
pub fn prepare_data(config: &SimConfig) -> Result<PreparedData> {
    let n = config.num_workers();
    let total = n * config.samples_per_worker;
    let (global, test) = match &config.data {
        DataSource::Synthetic { classes, separation } => {
            let base = RngStream::new(config.seed, 0, 0, Lane::Data);
            let task = SyntheticTask::new(config.raw_dim, *classes, *separation, base)?;
            (task.sample(total, base.with_worker(1)), task.sample(config.test_samples, base.with_worker(2)))
        }
        DataSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(train_images, train_labels)?;
            if train.len() < total {
                return Err(Error::config(
                    "samples_per_worker",
                    format!("{total} training samples requested, {} available", train.len()),
                ));
            }
            let test = load_idx(test_images, test_labels)?;
            let keep = config.test_samples.min(test.len());
            (take_columns(&train, total), take_columns(&test, keep))
        }
    };
    if config.reduced_dim > global.dim() {
        return Err(Error::config(
            "reduced_dim",
            format!("exceeds the raw sample dimension {}", global.dim()),
        ));
    }
    Ok(PreparedData {
        train: split_even(&global, n)?,
        test,
    })
}

fn centered(shard: &WorkerShard) -> WorkerShard {
    let mean = shard.samples.column_mean();
    let mut samples = shard.samples.clone();
    for mut col in samples.column_iter_mut() {
        col -= &mean;
    }
    WorkerShard {
        samples,
        labels: shard.labels.clone(),
        worker_id: shard.worker_id,
    }
}

/// One-shot distributed PCA over the raw shards. Returns the basis, the
/// projected shards and the projected test set.
pub fn reduce_dimension(config: &SimConfig, data: &PreparedData) -> Result<(GlobalBasis, Vec<WorkerShard>, WorkerShard)> {
    let factors = map_indexed(data.train.len(), |n| {
        let shard = &data.train[n];
        if config.center_before_pca {
            local_factor(&centered(shard), config.reduced_dim)
        } else {
            local_factor(shard, config.reduced_dim)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let basis = merge_factors(&factors)?;
    let train = data.train.iter().map(|s| project(&basis, s)).collect::<Result<Vec<_>>>()?;
    let test = project(&basis, &data.test)?;
    Ok((basis, train, test))
}

struct WorkerOutcome {
    loss: f64,
    gradient: GradientVector,
    received: GradientVector,
}

struct Uplink<'a> {
    kind: OptimizerKind,
    geometries: &'a [WorkerGeometry],
    noise: NoiseModel,
    h0: f64,
    p0: f64,
    seed: u64,
}

impl Uplink<'_> {
    fn send(&self, worker: usize, frame: usize, gradient: &GradientVector) -> Result<GradientVector> {
        if !self.kind.uses_channel() {
            return Ok(gradient.clone());
        }
        let geom = &self.geometries[worker];
        let key = RngStream::new(self.seed, worker as u32, frame as u64, Lane::Channel);
        let channel = draw_channel_frame(geom, gradient.len(), self.h0, key)?;
        let plan = make_transmit_plan(&channel, gradient, self.p0, self.h0, geom)?;
        transmit(gradient, &plan, &channel, &self.noise, key.with_lane(Lane::Noise))
    }

    fn usages_per_frame(&self, d1: usize) -> u64 {
        let per_worker = if self.kind.uses_channel() { d1 + 1 } else { d1 };
        (self.geometries.len() * per_worker) as u64
    }
}

fn build_optimizer(config: &SimConfig, d1: usize) -> Result<ServerOptimizer> {
    Ok(match config.optimizer {
        OptimizerKind::Wfl | OptimizerKind::Ef => ServerOptimizer::Descent { eta: config.stepsize },
        OptimizerKind::Awfl => ServerOptimizer::Nesterov(MomentumState::new(d1, config.momentum, config.stepsize)?),
        OptimizerKind::Adam | OptimizerKind::EfAdam => ServerOptimizer::Adam {
            state: AdamState::new(d1),
            hyper: AdamHyper {
                eta: config.stepsize,
                beta1: config.adam_beta1,
                beta2: config.adam_beta2,
                epsilon: config.adam_epsilon,
            },
        },
    })
}

/// Generates the data described by `config` and runs the experiment.
pub fn run_experiment(config: &SimConfig) -> Result<RunOutput> {
    config.validate()?;
    let data = prepare_data(config)?;
    run_experiment_on(config, &data)
}

/// Runs distributed PCA once, then `K` frames of local gradients, uplink,
/// aggregation and server update.
pub fn run_experiment_on(config: &SimConfig, data: &PreparedData) -> Result<RunOutput> {
    config.validate()?;
    let n = config.num_workers();
    if data.train.len() != n {
        return Err(Error::Shape(format!("{} shards for {n} workers", data.train.len())));
    }
    let (basis, shards, test) = reduce_dimension(config, data)?;
    let spec = MlpSpec::new(config.reduced_dim, config.hidden_dims.clone(), config.classes())?;
    let d1 = spec.num_params();

    let mut w = init_model(&spec, RngStream::new(config.seed, 0, 0, Lane::ModelInit));
    let lipschitz_estimate = estimate_l(
        &w,
        &shards[0],
        &spec,
        config.lipschitz_trials,
        RngStream::new(config.seed, 0, 0, Lane::Lipschitz),
    )?;
    let guard = stepsize_guard(config.stepsize, config.momentum, lipschitz_estimate.max(f64::MIN_POSITIVE))?;
    match config.optimizer {
        OptimizerKind::Awfl if !guard.awfl_ok() => warn!(
            "stepsize {} exceeds the accelerated bound {:.4e} (L ≈ {lipschitz_estimate:.4e})",
            config.stepsize, guard.awfl_threshold
        ),
        OptimizerKind::Wfl | OptimizerKind::Ef if !guard.wfl_ok() => warn!(
            "stepsize {} exceeds the descent bound {:.4e} (L ≈ {lipschitz_estimate:.4e})",
            config.stepsize, guard.wfl_threshold
        ),
        _ => {}
    }
    info!(
        "d0 = {}, d̂0 = {}, d1 = {d1}, N = {n}, K = {}, optimizer = {}",
        basis.raw_dim(),
        basis.reduced_dim(),
        config.num_frames,
        config.optimizer.as_str()
    );

    let geometries = config.geometries()?;
    let uplink = Uplink {
        kind: config.optimizer,
        geometries: &geometries,
        noise: config.noise()?,
        h0: config.truncation,
        p0: config.power_budget,
        seed: config.seed,
    };
    let mut optimizer = build_optimizer(config, d1)?;
    let eval_period = config.eval_period();
    let usages_per_frame = uplink.usages_per_frame(d1);

    let mut records = Vec::with_capacity(config.num_frames);
    let mut grad_norm_sum = 0.0;
    let mut empirical_g: f64 = 0.0;
    let mut initial_loss = None;
    let mut min_loss = f64::INFINITY;
    let mut warned_non_finite = false;

    for k in 0..config.num_frames {
        let outcomes = map_indexed(n, |worker| -> Result<WorkerOutcome> {
            let (loss, gradient) = local_loss_and_gradient(&w, &shards[worker], &spec)?;
            let received = uplink.send(worker, k, &gradient)?;
            Ok(WorkerOutcome {
                loss,
                gradient,
                received,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        let loss = outcomes.iter().map(|o| o.loss).sum::<f64>() / n as f64;
        let gradients: Vec<GradientVector> = outcomes.iter().map(|o| o.gradient.clone()).collect();
        let true_gradient = aggregate(&gradients)?;
        let grad_norm_sq = true_gradient.norm_sq();
        grad_norm_sum += grad_norm_sq;
        empirical_g = empirical_g.max(estimate_g(&gradients));
        initial_loss.get_or_insert(loss);
        min_loss = min_loss.min(loss);
        if !loss.is_finite() && !warned_non_finite {
            warn!("loss became non-finite at frame {k}; the run has diverged");
            warned_non_finite = true;
        }

        let evaluate = k % eval_period == 0 || k + 1 == config.num_frames;
        records.push(FrameRecord {
            frame: k,
            grad_norm_sq,
            running_avg_grad_norm_sq: grad_norm_sum / (k + 1) as f64,
            loss,
            test_accuracy: if evaluate { Some(test_accuracy(&w, &test, &spec)?) } else { None },
            channel_usages: usages_per_frame * (k as u64 + 1),
            empirical_g,
        });

        let received: Vec<GradientVector> = outcomes.into_iter().map(|o| o.received).collect();
        let agg = aggregate(&received)?;
        optimizer.step(&mut w, &agg)?;
    }

    let final_accuracy = test_accuracy(&w, &test, &spec)?;
    Ok(RunOutput {
        records,
        final_model: w,
        final_accuracy,
        spec,
        basis,
        lipschitz_estimate,
        guard,
        empirical_g,
        initial_gap_estimate: initial_loss.map_or(0.0, |f0| f0 - min_loss),
    })
}

/// Convenience for tests and the demo: raw sample matrix of every shard side by side.
pub fn concatenate(shards: &[WorkerShard]) -> DMatrix<f64> {
    let rows = shards.first().map_or(0, |s| s.dim());
    let cols = shards.iter().map(|s| s.len()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for s in shards {
        out.view_mut((0, offset), (rows, s.len())).copy_from(&s.samples);
        offset += s.len();
    }
    out
}
