use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use awfl_core::dpca::{communication_saving, distributed_pca};
use awfl_core::harness::dataset::{load_any, split_even, write_cache};
use awfl_core::harness::metrics::write_metrics_csv;
use awfl_core::harness::stats::{aggregate_statistics, inv_rho_sq_statistics, plan_statistics, random_unit_gradients};
use awfl_core::harness::sweep::{apply_sweep, parse_values, SweepParam};
use awfl_core::harness::{eval_theorem_bounds, load_config, run_experiment, BoundInputs, OptimizerKind, SimConfig};
use awfl_core::parallel::with_threads;
use awfl_core::{Error, Result};

/// Largest accepted `‖mean aggregate − ∇f‖ / ‖∇f‖` in `verify-stats`.
const BIAS_TOLERANCE: f64 = 0.02;
/// Largest accepted relative error of the Monte Carlo `E[ρ⁻²]`.
const INV_RHO_TOLERANCE: f64 = 0.02;
/// Largest accepted relative deviation from the power budget.
const POWER_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "awfl", version, about = "Analog wireless federated learning simulator")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with the configured optimizer and write per-frame metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Metrics CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo checks of the uplink statistics for the configured deployment.
    VerifyStats {
        #[arg(long)]
        config: PathBuf,
    },
    /// One-shot distributed PCA on a dataset file.
    Pca {
        /// IDX image file or dataset cache.
        #[arg(long = "in")]
        input: PathBuf,
        /// IDX label file (required for IDX input).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Output dimension.
        #[arg(long)]
        dim: usize,
        /// Number of simulated workers the samples are split over.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Cache file for the projected samples.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a run for several values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// h0, dhat0 or N.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Directory for one metrics CSV per value.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn run(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let config = load_config(config_path)?;
    let output = run_experiment(&config)?;
    if let Some(path) = out {
        write_metrics_csv(&output.records, path)?;
    }
    let report = eval_theorem_bounds(
        &config,
        &BoundInputs {
            d1: output.d1(),
            empirical_g: output.empirical_g,
            lipschitz: output.lipschitz_estimate,
            initial_gap: output.initial_gap_estimate,
            measured: output.time_avg_grad_norm_sq(),
        },
    )?;
    println!("optimizer            {}", config.optimizer.as_str());
    println!("model parameters d1  {}", output.d1());
    println!("final accuracy       {:.4}", output.final_accuracy);
    println!("avg ‖∇f‖²            {:.6e}", report.measured);
    println!("L estimate           {:.6e}", output.lipschitz_estimate);
    println!(
        "stepsize bounds      wfl {:.4e} ({}), awfl {:.4e} ({})",
        output.guard.wfl_threshold,
        if output.guard.wfl_ok() { "ok" } else { "exceeded" },
        output.guard.awfl_threshold,
        if output.guard.awfl_ok() { "ok" } else { "exceeded" },
    );
    println!("c1, c2               {:.6e}, {:.6e}", report.constants.c1, report.constants.c2);
    let terms = if matches!(config.optimizer, OptimizerKind::Awfl) { &report.awfl } else { &report.wfl };
    println!(
        "rate bound           {:.6e} (with p0⁻¹ on σ²), {:.6e} (without)",
        terms.total_printed(),
        terms.total_consistent()
    );
    Ok(())
}

fn verify_stats(config_path: &Path) -> Result<bool> {
    let config = load_config(config_path)?;
    let geometries = config.geometries()?;
    let noise = config.noise()?;
    let (h0, p0, seed, draws, d1) = (
        config.truncation,
        config.power_budget,
        config.seed,
        config.mc_draws,
        config.verify_dim,
    );
    let mut ok = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        ok &= pass;
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };

    let ys = random_unit_gradients(geometries.len(), d1, seed)?;
    let agg = aggregate_statistics(&geometries, &ys, h0, p0, &noise, draws, seed)?;
    check(
        "unbiasedness",
        agg.relative_bias <= BIAS_TOLERANCE,
        format!("relative deviation {:.4e} over {draws} frames", agg.relative_bias),
    );
    check(
        "second-moment bound",
        agg.bound_slack() >= 0.0,
        format!(
            "E‖agg‖² = {:.6e}, bound = {:.6e}, slack = {:.6e}",
            agg.second_moment,
            agg.bound,
            agg.bound_slack()
        ),
    );
    for (n, geom) in geometries.iter().enumerate() {
        let r = inv_rho_sq_statistics(geom, d1, h0, p0, draws, seed.wrapping_add(n as u64 + 1))?;
        check(
            &format!("E[ρ⁻²] worker {n}"),
            r.relative_error() <= INV_RHO_TOLERANCE,
            format!(
                "Monte Carlo {:.6e} ± {:.1e}, closed form {:.6e}",
                r.monte_carlo, r.standard_error, r.closed_form
            ),
        );
        let p = plan_statistics(geom, d1, h0, p0, draws.min(10_000), seed.wrapping_add(n as u64 + 1))?;
        check(
            &format!("power budget worker {n}"),
            p.max_power_error <= POWER_TOLERANCE,
            format!(
                "max relative error {:.2e}, scheduled {:.4} vs {:.4}",
                p.max_power_error, p.scheduled_fraction, p.scheduling_probability
            ),
        );
    }
    Ok(ok)
}

fn pca(input: &Path, labels: Option<&Path>, dim: usize, workers: usize, out: Option<&Path>) -> Result<()> {
    let data = load_any(input, labels)?;
    let shards = split_even(&data, workers)?;
    let (basis, projected) = distributed_pca(&shards, dim)?;
    println!("samples              {}", data.len());
    println!("dimension            {} -> {}", basis.raw_dim(), basis.reduced_dim());
    println!(
        "communication saving {:.2}%",
        100.0 * communication_saving(basis.raw_dim(), basis.reduced_dim())
    );
    if let Some(path) = out {
        let mut samples = nalgebra::DMatrix::zeros(dim, data.len());
        let mut offset = 0;
        for s in &projected {
            samples.columns_mut(offset, s.len()).copy_from(&s.samples);
            offset += s.len();
        }
        let merged = awfl_core::dpca::WorkerShard::new(samples, data.labels.clone(), 0)?;
        write_cache(path, &merged)?;
    }
    Ok(())
}

fn sweep(config_path: &Path, param: &str, values: &str, out_dir: &Path) -> Result<()> {
    let base: SimConfig = load_config(config_path)?;
    let param = SweepParam::parse(param)
        .ok_or_else(|| Error::ConfigParse(format!("unknown sweep parameter '{param}' (expected h0, dhat0 or N)")))?;
    let values = parse_values(values)?;
    let configs = values
        .iter()
        .map(|&v| apply_sweep(&base, param, v))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    println!("{},final_accuracy,avg_grad_norm_sq,csv", param.as_str());
    for (value, config) in values.iter().zip(&configs) {
        let output = run_experiment(config)?;
        let path = out_dir.join(format!("sweep_{}_{value}.csv", param.as_str()));
        write_metrics_csv(&output.records, &path)?;
        println!(
            "{value},{:.4},{:.6e},{}",
            output.final_accuracy,
            output.time_avg_grad_norm_sq(),
            path.display()
        );
    }
    Ok(())
}

fn report(result: Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    with_threads(cli.threads, || match cli.command {
        Command::Run { config, out } => report(run(&config, out.as_deref())),
        Command::VerifyStats { config } => match verify_stats(&config) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(2),
            Err(e) => report(Err(e)),
        },
        Command::Pca {
            input,
            labels,
            dim,
            workers,
            out,
        } => report(pca(&input, labels.as_deref(), dim, workers, out.as_deref())),
        Command::Sweep {
            config,
            param,
            values,
            out_dir,
        } => report(sweep(&config, &param, &values, &out_dir)),
    })
}
