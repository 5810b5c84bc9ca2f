//! Experiment configuration: a flat TOML key/value file.
//!
//! Every key is optional except `distances`; see `configs/` for complete
//! examples and the README for the full schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::channel::{NoiseModel, WorkerGeometry};
use crate::error::{Error, Result};

/// Power spectral density of the receiver noise, mW/Hz.
pub const DEFAULT_NOISE_PSD: f64 = 3.981_071_705_534_972e-18; // 10^(−17.4)
pub const DEFAULT_BANDWIDTH_HZ: f64 = 2.0e5;
pub const DEFAULT_SERVER_NOISE_FIGURE_DB: f64 = 5.0;

/// Worker distances (m) of the six-worker deployment.
pub const SIX_WORKER_DISTANCES: [f64; 6] = [416.33, 435.07, 389.01, 475.76, 251.43, 163.21];

/// Worker distances (m) of the twelve-worker deployment.
pub const TWELVE_WORKER_DISTANCES: [f64; 12] = [
    284.43, 396.79, 407.76, 444.18, 465.94, 438.90, 206.80, 435.08, 280.54, 183.13, 460.88, 362.27,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Plain descent on the channel aggregate.
    Wfl,
    /// Nesterov-accelerated descent on the channel aggregate.
    Awfl,
    /// Adam on the channel aggregate.
    Adam,
    /// Plain descent on exact gradients (no channel).
    Ef,
    /// Adam on exact gradients (no channel).
    EfAdam,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "wfl" => Self::Wfl,
            "awfl" => Self::Awfl,
            "adam" => Self::Adam,
            "ef" => Self::Ef,
            "ef-adam" => Self::EfAdam,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Wfl => "wfl",
            Self::Awfl => "awfl",
            Self::Adam => "adam",
            Self::Ef => "ef",
            Self::EfAdam => "ef-adam",
        }
    }

    pub fn uses_channel(&self) -> bool {
        matches!(self, Self::Wfl | Self::Awfl | Self::Adam)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        separation: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub num_frames: usize,
    pub stepsize: f64,
    pub momentum: f64,
    pub truncation: f64,
    /// mW
    pub power_budget: f64,
    pub pathloss_exponent: f64,
    /// σ² in mW per channel usage.
    pub noise_variance: f64,
    /// One entry per worker, metres.
    pub distances: Vec<f64>,
    pub raw_dim: usize,
    pub reduced_dim: usize,
    pub samples_per_worker: usize,
    pub test_samples: usize,
    pub hidden_dims: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub mc_draws: usize,
    pub verify_dim: usize,
    pub eval_every: Option<usize>,
    pub center_before_pca: bool,
    pub lipschitz_trials: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub data: DataSource,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    num_workers: Option<usize>,
    num_frames: Option<usize>,
    stepsize: Option<f64>,
    momentum: Option<f64>,
    truncation: Option<f64>,
    power_budget: Option<f64>,
    pathloss_exponent: Option<f64>,
    noise_variance: Option<f64>,
    noise_psd: Option<f64>,
    bandwidth: Option<f64>,
    noise_figure_db: Option<f64>,
    distances: Vec<f64>,
    raw_dim: Option<usize>,
    reduced_dim: Option<usize>,
    samples_per_worker: Option<usize>,
    test_samples: Option<usize>,
    hidden_dims: Option<Vec<usize>>,
    optimizer: Option<String>,
    seed: Option<u64>,
    mc_draws: Option<usize>,
    verify_dim: Option<usize>,
    eval_every: Option<usize>,
    center_before_pca: Option<bool>,
    lipschitz_trials: Option<usize>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_epsilon: Option<f64>,
    dataset: Option<String>,
    classes: Option<usize>,
    separation: Option<f64>,
    idx_train_images: Option<PathBuf>,
    idx_train_labels: Option<PathBuf>,
    idx_test_images: Option<PathBuf>,
    idx_test_labels: Option<PathBuf>,
}

impl Default for SimConfig {
    /// Desk-scale synthetic setup on the six-worker geometry.
    fn default() -> Self {
        Self {
            num_frames: 500,
            stepsize: 0.05,
            momentum: 0.0,
            truncation: 1e-3,
            power_budget: 200.0,
            pathloss_exponent: 2.2,
            noise_variance: DEFAULT_NOISE_PSD
                * DEFAULT_BANDWIDTH_HZ
                * 10f64.powf(DEFAULT_SERVER_NOISE_FIGURE_DB / 10.0),
            distances: SIX_WORKER_DISTANCES.to_vec(),
            raw_dim: 32,
            reduced_dim: 16,
            samples_per_worker: 100,
            test_samples: 600,
            hidden_dims: vec![16],
            optimizer: OptimizerKind::Wfl,
            seed: 1,
            mc_draws: 100_000,
            verify_dim: 64,
            eval_every: None,
            center_before_pca: false,
            lipschitz_trials: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            data: DataSource::Synthetic {
                classes: 3,
                separation: 3.0,
            },
        }
    }
}

impl SimConfig {
    pub fn num_workers(&self) -> usize {
        self.distances.len()
    }

    pub fn geometries(&self) -> Result<Vec<WorkerGeometry>> {
        self.distances
            .iter()
            .map(|&d| WorkerGeometry::new(d, self.pathloss_exponent))
            .collect()
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.noise_variance)
    }

    pub fn classes(&self) -> usize {
        match self.data {
            DataSource::Synthetic { classes, .. } => classes,
            DataSource::Idx { .. } => 10,
        }
    }

    /// Accuracy evaluation period, `max(1, K/200)` unless configured.
    pub fn eval_period(&self) -> usize {
        self.eval_every.unwrap_or((self.num_frames / 200).max(1)).max(1)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string().trim_end().to_string()))?;
        raw.resolve()
    }

    /// Checks the invariants every consumer relies on.
    pub fn validate(&self) -> Result<()> {
        if self.distances.is_empty() {
            return Err(Error::config("distances", "at least one worker is required"));
        }
        if let Some(d) = self.distances.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::config("distances", format!("distance {d} is not positive")));
        }
        if self.num_frames == 0 {
            return Err(Error::config("num_frames", "must be at least 1"));
        }
        if !(self.stepsize > 0.0 && self.stepsize.is_finite()) {
            return Err(Error::config("stepsize", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if self.optimizer.uses_channel() && !(self.truncation > 0.0 && self.truncation.is_finite()) {
            return Err(Error::config("truncation", "must be positive when the channel is enabled"));
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return Err(Error::config("power_budget", "must be positive"));
        }
        if !(self.pathloss_exponent > 0.0 && self.pathloss_exponent.is_finite()) {
            return Err(Error::config("pathloss_exponent", "must be positive"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::config("noise_variance", "must be non-negative"));
        }
        if self.reduced_dim == 0 {
            return Err(Error::config("reduced_dim", "must be at least 1"));
        }
        if self.samples_per_worker == 0 {
            return Err(Error::config("samples_per_worker", "must be at least 1"));
        }
        if self.test_samples == 0 {
            return Err(Error::config("test_samples", "must be at least 1"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden_dims", "layer widths must be positive"));
        }
        if self.lipschitz_trials == 0 {
            return Err(Error::config("lipschitz_trials", "must be at least 1"));
        }
        if self.mc_draws == 0 {
            return Err(Error::config("mc_draws", "must be at least 1"));
        }
        if self.verify_dim == 0 {
            return Err(Error::config("verify_dim", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_epsilon > 0.0) {
            return Err(Error::config("adam_beta1/adam_beta2/adam_epsilon", "invalid Adam hyper-parameters"));
        }
        match &self.data {
            DataSource::Synthetic { classes, separation } => {
                if self.raw_dim == 0 {
                    return Err(Error::config("raw_dim", "must be at least 1"));
                }
                if *classes < 2 {
                    return Err(Error::config("classes", "need at least two classes"));
                }
                if !(*separation >= 0.0 && separation.is_finite()) {
                    return Err(Error::config("separation", "must be non-negative"));
                }
                if self.reduced_dim > self.raw_dim {
                    return Err(Error::config("reduced_dim", "cannot exceed raw_dim"));
                }
            }
            DataSource::Idx { .. } => {}
        }
        Ok(())
    }
}

impl RawConfig {
    fn resolve(self) -> Result<SimConfig> {
        let defaults = SimConfig::default();
        if let Some(n) = self.num_workers {
            if n != self.distances.len() {
                return Err(Error::config(
                    "distances",
                    format!("num_workers is {n} but {} distances are listed", self.distances.len()),
                ));
            }
        }

        let triple = [self.noise_psd, self.bandwidth, self.noise_figure_db];
        let noise_variance = match (self.noise_variance, triple) {
            (Some(_), [None, None, None]) | (None, [None, None, None]) => {
                self.noise_variance.unwrap_or(defaults.noise_variance)
            }
            (None, [Some(psd), Some(bw), Some(nf)]) => NoiseModel::from_spectral_density(psd, bw, nf)
                .map_err(|e| Error::config("noise_psd", e.to_string()))?
                .variance,
            (Some(_), _) => {
                return Err(Error::config(
                    "noise_variance",
                    "give either noise_variance or (noise_psd, bandwidth, noise_figure_db), not both",
                ))
            }
            (None, _) => {
                return Err(Error::config(
                    "noise_psd",
                    "noise_psd, bandwidth and noise_figure_db must be given together",
                ))
            }
        };

        let optimizer = match self.optimizer.as_deref() {
            None => defaults.optimizer,
            Some(s) => OptimizerKind::parse(s)
                .ok_or_else(|| Error::config("optimizer", format!("unknown optimizer `{s}` (wfl, awfl, adam, ef, ef-adam)")))?,
        };

        let data = match self.dataset.as_deref().unwrap_or("synthetic") {
            "synthetic" => DataSource::Synthetic {
                classes: self.classes.unwrap_or(3),
                separation: self.separation.unwrap_or(3.0),
            },
            "idx" => {
                let need = |p: Option<PathBuf>, field: &str| p.ok_or_else(|| Error::config(field, "required when dataset = \"idx\""));
                DataSource::Idx {
                    train_images: need(self.idx_train_images, "idx_train_images")?,
                    train_labels: need(self.idx_train_labels, "idx_train_labels")?,
                    test_images: need(self.idx_test_images, "idx_test_images")?,
                    test_labels: need(self.idx_test_labels, "idx_test_labels")?,
                }
            }
            other => return Err(Error::config("dataset", format!("unknown dataset `{other}` (synthetic, idx)"))),
        };

        let config = SimConfig {
            num_frames: self.num_frames.unwrap_or(defaults.num_frames),
            stepsize: self.stepsize.unwrap_or(defaults.stepsize),
            momentum: self.momentum.unwrap_or(defaults.momentum),
            truncation: self.truncation.unwrap_or(defaults.truncation),
            power_budget: self.power_budget.unwrap_or(defaults.power_budget),
            pathloss_exponent: self.pathloss_exponent.unwrap_or(defaults.pathloss_exponent),
            noise_variance,
            distances: self.distances,
            raw_dim: self.raw_dim.unwrap_or(defaults.raw_dim),
            reduced_dim: self.reduced_dim.unwrap_or(defaults.reduced_dim),
            samples_per_worker: self.samples_per_worker.unwrap_or(defaults.samples_per_worker),
            test_samples: self.test_samples.unwrap_or(defaults.test_samples),
            hidden_dims: self.hidden_dims.unwrap_or(defaults.hidden_dims),
            optimizer,
            seed: self.seed.unwrap_or(defaults.seed),
            mc_draws: self.mc_draws.unwrap_or(defaults.mc_draws),
            verify_dim: self.verify_dim.unwrap_or(defaults.verify_dim),
            eval_every: self.eval_every,
            center_before_pca: self.center_before_pca.unwrap_or(false),
            lipschitz_trials: self.lipschitz_trials.unwrap_or(defaults.lipschitz_trials),
            adam_beta1: self.adam_beta1.unwrap_or(defaults.adam_beta1),
            adam_beta2: self.adam_beta2.unwrap_or(defaults.adam_beta2),
            adam_epsilon: self.adam_epsilon.unwrap_or(defaults.adam_epsilon),
            data,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ConfigParse(format!("cannot read {}: {e}", path.display())))?;
    SimConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let c = SimConfig::from_toml_str("distances = [100.0, 200.0]").unwrap();
        assert_eq!(c.num_workers(), 2);
        assert_eq!(c.optimizer, OptimizerKind::Wfl);
        assert!((c.noise_variance - 2.518e-12).abs() < 1e-15);
    }

    #[test]
    fn missing_distances_names_the_field() {
        let err = SimConfig::from_toml_str("num_frames = 3").unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("distances"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = SimConfig::from_toml_str("distances = [1.0]\nlearning_rate = 0.1").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn noise_triple_resolves_to_variance() {
        let c = SimConfig::from_toml_str(
            "distances = [1.0]\nnoise_psd = 3.981071705534972e-18\nbandwidth = 2e5\nnoise_figure_db = 5.0",
        )
        .unwrap();
        assert!((c.noise_variance - 2.52e-12).abs() < 0.01e-12);

        let partial = SimConfig::from_toml_str("distances = [1.0]\nbandwidth = 2e5").unwrap_err();
        assert!(partial.to_string().contains("noise_psd"));
        let both = SimConfig::from_toml_str("distances = [1.0]\nnoise_variance = 1.0\nbandwidth = 2e5").unwrap_err();
        assert!(both.to_string().contains("noise_variance"));
    }

    #[test]
    fn validation_names_fields() {
        for (text, field) in [
            ("distances = []", "distances"),
            ("distances = [1.0]\nnum_workers = 2", "distances"),
            ("distances = [1.0]\nmomentum = 1.0", "momentum"),
            ("distances = [1.0]\ntruncation = 0.0", "truncation"),
            ("distances = [1.0]\noptimizer = \"sgd\"", "optimizer"),
            ("distances = [1.0]\nreduced_dim = 64\nraw_dim = 32", "reduced_dim"),
            ("distances = [-1.0]", "distances"),
            ("distances = [1.0]\ndataset = \"idx\"", "idx_train_images"),
        ] {
            match SimConfig::from_toml_str(text) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn error_free_runs_may_skip_truncation() {
        let c = SimConfig::from_toml_str("distances = [1.0]\ntruncation = 0.0\noptimizer = \"ef\"").unwrap();
        assert_eq!(c.optimizer, OptimizerKind::Ef);
    }

    #[test]
    fn eval_period() {
        let mut c = SimConfig::default();
        c.num_frames = 2000;
        assert_eq!(c.eval_period(), 10);
        c.num_frames = 50;
        assert_eq!(c.eval_period(), 1);
        c.eval_every = Some(7);
        assert_eq!(c.eval_period(), 7);
    }
}
