//! Experiment orchestration: configuration, data, the training loop, metrics
//! and bound evaluation.

pub mod bounds;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod sim;
pub mod stats;
pub mod sweep;

pub use bounds::{eval_theorem_bounds, BoundInputs, RateTerms, TheoremReport};
pub use config::{load_config, DataSource, OptimizerKind, SimConfig};
pub use dataset::{load_idx, synth_dataset, SyntheticTask};
pub use metrics::{parse_metrics_csv, write_metrics_csv};
pub use sim::{prepare_data, run_experiment, run_experiment_on, FrameRecord, PreparedData, RunOutput};
pub use sweep::{apply_sweep, SweepParam};
