mod common;

use awfl_core::dpca::WorkerShard;
use awfl_core::harness::config::SIX_WORKER_DISTANCES;
use awfl_core::harness::dataset::{load_any, read_cache, write_cache, write_idx};
use awfl_core::harness::metrics::{metrics_csv_string, parse_metrics_csv};
use awfl_core::harness::{
    eval_theorem_bounds, load_config, load_idx, prepare_data, run_experiment, run_experiment_on, BoundInputs,
    OptimizerKind, SimConfig,
};
use awfl_core::Error;
use common::tiny_config;
use nalgebra::DMatrix;

fn workspace_file(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn shipped_configs_load() {
    let paper = load_config(workspace_file("configs/paper_fmnist_6.toml")).unwrap();
    assert_eq!(paper.num_workers(), 6);
    assert_eq!(paper.distances, SIX_WORKER_DISTANCES.to_vec());
    assert!((paper.noise_variance - 2.518e-12).abs() < 1e-15);
    assert_eq!(paper.reduced_dim, 500);
    let channel = load_config(workspace_file("configs/paper_channel_6.toml")).unwrap();
    assert_eq!(channel.optimizer, OptimizerKind::Awfl);
    let desk = load_config(workspace_file("configs/desk_12.toml")).unwrap();
    assert_eq!(desk.num_workers(), 12);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "num_frames = 10\n").unwrap();
    let err = load_config(&path).unwrap_err();
    assert!(err.is_config_error());
    assert!(err.to_string().contains("distances"), "{err}");

    std::fs::write(&path, "distances = [100.0]\nstepsize = -1.0\n").unwrap();
    let err = load_config(&path).unwrap_err();
    assert!(matches!(&err, Error::Config { field, .. } if field == "stepsize"), "{err}");

    std::fs::write(&path, "distances = [100.0]\nmystery = 3\n").unwrap();
    assert!(load_config(&path).unwrap_err().to_string().contains("mystery"));

    assert!(load_config(dir.path().join("missing.toml")).unwrap_err().is_config_error());
}

#[test]
fn idx_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = (dir.path().join("img"), dir.path().join("lab"));
    let pixels = DMatrix::from_fn(6, 3, |r, c| ((r * 40 + c * 7) % 256) as f64 / 255.0);
    let data = WorkerShard::new(pixels.clone(), vec![3, 0, 9], 0).unwrap();
    write_idx(&images, &labels, &data, 2, 3).unwrap();
    let back = load_idx(&images, &labels).unwrap();
    assert_eq!(back.labels, vec![3, 0, 9]);
    assert!((back.samples - pixels).abs().max() < 1e-15);
    assert_eq!(load_any(&images, Some(labels.as_path())).unwrap().len(), 3);
    assert!(load_any(&images, None).is_err());

    let bytes = std::fs::read(&images).unwrap();
    std::fs::write(&images, &bytes[..bytes.len() - 1]).unwrap();
    let err = load_idx(&images, &labels).unwrap_err();
    assert!(err.to_string().contains("truncat"), "{err}");

    let mut bad = bytes.clone();
    bad[3] = 0x01;
    std::fs::write(&images, &bad).unwrap();
    assert!(load_idx(&images, &labels).unwrap_err().to_string().contains("magic"));

    std::fs::write(&images, &bytes).unwrap();
    let short = WorkerShard::new(DMatrix::zeros(6, 2), vec![1, 2], 0).unwrap();
    write_idx(dir.path().join("x"), &labels, &short, 2, 3).unwrap();
    assert!(load_idx(&images, &labels).is_err());
}

#[test]
fn idx_full_intensity_pixel_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = (dir.path().join("img"), dir.path().join("lab"));
    let mut raw = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2];
    raw.extend([255u8, 0]);
    std::fs::write(&images, raw).unwrap();
    std::fs::write(&labels, [0, 0, 8, 1, 0, 0, 0, 1, 7]).unwrap();
    let data = load_idx(&images, &labels).unwrap();
    assert_eq!(data.samples.as_slice(), &[1.0, 0.0]);
    assert_eq!(data.labels, vec![7]);
}

#[test]
fn cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    let data = WorkerShard::new(common::gaussian_matrix(4, 5, 1), vec![0, 1, 2, 1, 0], 0).unwrap();
    write_cache(&path, &data).unwrap();
    assert_eq!(read_cache(&path).unwrap(), data);
    assert_eq!(load_any(&path, None).unwrap(), data);
}

#[test]
fn runs_are_deterministic() {
    let config = tiny_config(OptimizerKind::Awfl);
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&config).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_model, b.final_model);
    let mut other = config.clone();
    other.seed += 1;
    assert_ne!(run_experiment(&other).unwrap().records, a.records);
}

#[test]
fn running_average_and_usage_accounting() {
    let config = tiny_config(OptimizerKind::Wfl);
    let out = run_experiment(&config).unwrap();
    let n = config.num_workers() as u64;
    let d1 = out.d1() as u64;
    let mut sum = 0.0;
    for r in &out.records {
        sum += r.grad_norm_sq;
        let avg = sum / (r.frame + 1) as f64;
        assert!((r.running_avg_grad_norm_sq - avg).abs() <= 1e-12 * avg.max(1.0));
        assert_eq!(r.channel_usages, (r.frame as u64 + 1) * n * (d1 + 1));
    }
    let k = config.num_frames as u64;
    assert_eq!(out.records.last().unwrap().channel_usages, k * n * (d1 + 1));
    let ef = run_experiment(&tiny_config(OptimizerKind::Ef)).unwrap();
    assert_eq!(ef.records.last().unwrap().channel_usages, k * n * d1);
}

#[test]
fn transparent_channel_matches_error_free_training() {
    let mut wfl = tiny_config(OptimizerKind::Wfl);
    wfl.noise_variance = 0.0;
    wfl.truncation = 1e-12;
    let mut ef = wfl.clone();
    ef.optimizer = OptimizerKind::Ef;
    let a = run_experiment(&wfl).unwrap();
    let b = run_experiment(&ef).unwrap();
    for (x, y) in a.final_model.0.iter().zip(&b.final_model.0) {
        assert!((x - y).abs() < 1e-9);
    }
    for (x, y) in a.records.iter().zip(&b.records) {
        assert!((x.loss - y.loss).abs() < 1e-9);
    }
}

#[test]
fn momentum_free_awfl_is_wfl() {
    let mut awfl = tiny_config(OptimizerKind::Awfl);
    awfl.momentum = 0.0;
    let wfl = tiny_config(OptimizerKind::Wfl);
    let a = run_experiment(&awfl).unwrap();
    let b = run_experiment(&wfl).unwrap();
    assert_eq!(a.final_model, b.final_model);
    assert_eq!(a.records, b.records);
}

#[test]
fn every_optimizer_reduces_the_loss() {
    for kind in [
        OptimizerKind::Wfl,
        OptimizerKind::Awfl,
        OptimizerKind::Adam,
        OptimizerKind::Ef,
        OptimizerKind::EfAdam,
    ] {
        let mut config = tiny_config(kind);
        config.momentum = 0.5;
        config.stepsize = if matches!(kind, OptimizerKind::Adam | OptimizerKind::EfAdam) { 0.01 } else { 0.1 };
        let out = run_experiment(&config).unwrap();
        let first = out.records.first().unwrap().loss;
        let last = out.records.last().unwrap().loss;
        assert!(last < first, "{kind:?}: {first} -> {last}");
        assert!(out.records.last().unwrap().test_accuracy.is_some());
    }
}

#[test]
fn metrics_survive_a_csv_round_trip() {
    let out = run_experiment(&tiny_config(OptimizerKind::Awfl)).unwrap();
    assert_eq!(parse_metrics_csv(&metrics_csv_string(&out.records)).unwrap(), out.records);
}

#[test]
fn prepared_data_can_be_reused() {
    let config = tiny_config(OptimizerKind::Wfl);
    let data = prepare_data(&config).unwrap();
    assert_eq!(data.train.len(), 3);
    assert!(data.train.iter().all(|s| s.len() == 30));
    assert_eq!(run_experiment_on(&config, &data).unwrap().records, run_experiment(&config).unwrap().records);
    let mut mismatch = config.clone();
    mismatch.distances.push(100.0);
    assert!(run_experiment_on(&mismatch, &data).is_err());
}

#[test]
fn bound_report_from_a_run() {
    let config = SimConfig {
        momentum: 0.5,
        ..tiny_config(OptimizerKind::Awfl)
    };
    let out = run_experiment(&config).unwrap();
    let report = eval_theorem_bounds(
        &config,
        &BoundInputs {
            d1: out.d1(),
            empirical_g: out.empirical_g,
            lipschitz: out.lipschitz_estimate,
            initial_gap: out.initial_gap_estimate,
            measured: out.time_avg_grad_norm_sq(),
        },
    )
    .unwrap();
    assert!(report.awfl.transient < report.wfl.transient);
    assert!(report.awfl.floor_printed > report.wfl.floor_printed);
    assert!(report.wfl.floor_consistent >= report.wfl.floor_printed);
    assert!(out.initial_gap_estimate > 0.0);
}
