//! Command-line entry point: validation, single realizations, ensembles,
//! integration sweeps, metric recomputation, and observed-data comparison.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stormgrid::config::RunConfig;
use stormgrid::ensemble::{
    self, compare_observed, critical_index, load_results, partition_resilient_vulnerable,
    run_ensemble, sensitivity_sweep, store_results, summarize, EnsembleInputs, ObservedTrajectory,
};
use stormgrid::runtime::load_run;
use stormgrid::seed::realization_seed;
use stormgrid::sim::{
    build_hazard_table, largest_failure, run_realization_with_table, write_events_csv,
    write_trajectory_csv, SimParams,
};
use stormgrid::testbed::{write_testbed, TestbedKind};

#[derive(Parser)]
#[command(
    name = "stormgrid",
    version,
    about = "Monte Carlo simulation of storm-driven cascading grid outages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and all referenced datasets; exit 0 iff clean
    Validate {
        /// Path to config.json
        config: PathBuf,
    },
    /// Run a single seeded realization and write trajectory/events CSVs
    Simulate {
        config: PathBuf,
        /// Realization seed [default: derived from the config's master seed]
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: the config's output_dir]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded ensemble and write summary.json plus stored results
    Ensemble {
        config: PathBuf,
        /// Realization count [default: the config's ensemble.n]
        #[arg(long)]
        n: Option<usize>,
        /// Worker thread count [default: all cores]
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Renewable-integration sensitivity sweep with paired seeds
    Sweep {
        config: PathBuf,
        /// Integration levels as start:end:step fractions, e.g. 0.1:0.8:0.1
        #[arg(long)]
        levels: String,
        /// Realizations per level [default: the config's ensemble.n]
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute summary.json from stored realization results
    Metrics {
        /// Directory holding manifest.json and realization files
        results: PathBuf,
        /// Config used for the original run (for grid and horizon)
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare an ensemble summary against an observed outage trajectory
    Compare {
        config: PathBuf,
        /// Stored results directory (from `ensemble`)
        results: PathBuf,
        /// Observed CSV [default: the config's observed path]
        #[arg(long)]
        observed: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a self-contained synthetic testbed directory
    Testbed {
        /// One of: toy-radial, solar-heavy-30, large-100
        kind: String,
        /// Target directory
        out: PathBuf,
    },
}

fn set_workers(workers: Option<usize>) -> Result<(), String> {
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn parse_levels(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step): (f64, f64, f64) = (
                start.parse().map_err(|_| format!("bad level: {start}"))?,
                end.parse().map_err(|_| format!("bad level: {end}"))?,
                step.parse().map_err(|_| format!("bad step: {step}"))?,
            );
            if step <= 0.0 {
                return Err("level step must be positive".into());
            }
            let mut levels = Vec::new();
            let mut x = start;
            while x <= end + 1e-9 {
                levels.push((x * 1e9).round() / 1e9);
                x += step;
            }
            Ok(levels)
        }
        _ => spec
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| format!("bad level: {s}")))
            .collect(),
    }
}

/// Clear-sky solar profile used to define the integration level: the
/// diurnal shape evaluated over the horizon.
fn clear_sky_profile(params: &SimParams) -> Vec<f64> {
    (0..params.steps)
        .map(|t| params.diurnal.value(params.time_at(t)))
        .collect()
}

fn write_summary(
    summary: &ensemble::EnsembleSummary,
    config: &RunConfig,
    out: &Path,
) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let mut doc = serde_json::to_value(summary).map_err(|e| e.to_string())?;
    doc.as_object_mut()
        .expect("summary is an object")
        .insert("config_hash".into(), config.hash().into());
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_vec_pretty(&doc).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    Ok(())
}

fn cmd_validate(config_path: &Path) -> Result<(), String> {
    let run = load_run(config_path)?;
    log::info!(
        "config ok: {} buses, {} lines, {} generators, {} feeders, {} steps",
        run.grid.buses.len(),
        run.grid.lines.len(),
        run.grid.generators.len(),
        run.grid.feeders.len(),
        run.params.steps
    );
    println!("ok");
    Ok(())
}

fn cmd_simulate(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), String> {
    let run = load_run(config_path)?;
    let seed = seed.unwrap_or_else(|| realization_seed(run.config.ensemble.master_seed, 0));
    let table = build_hazard_table(&run.grid, &run.track, &run.roughness, &run.params)
        .map_err(|e| e.to_string())?;
    let result = run_realization_with_table(&run.grid, &table, &run.curves, &run.params, seed)?;
    let out = out.unwrap_or_else(|| run.config.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    write_trajectory_csv(&result, &run.params, &out.join("trajectory.csv"))
        .map_err(|e| e.to_string())?;
    write_events_csv(&result, &out.join("events.csv")).map_err(|e| e.to_string())?;
    std::fs::write(
        out.join("realization.json"),
        serde_json::to_vec_pretty(&result).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    log::info!(
        "seed {seed}: final performance {:.4}, blackout step {:?}",
        result.trajectory.last().copied().unwrap_or(f64::NAN),
        result.blackout_step
    );
    Ok(())
}

fn cmd_ensemble(
    config_path: &Path,
    n: Option<usize>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), String> {
    set_workers(workers)?;
    let run = load_run(config_path)?;
    let n = n.unwrap_or(run.config.ensemble.n);
    let table = build_hazard_table(&run.grid, &run.track, &run.roughness, &run.params)
        .map_err(|e| e.to_string())?;
    let inputs = EnsembleInputs {
        grid: &run.grid,
        table: &table,
        curves: &run.curves,
        params: &run.params,
    };
    let (results, summary) = run_ensemble(&inputs, n, run.config.ensemble.master_seed);
    let out = out.unwrap_or_else(|| run.config.output_dir.clone());
    store_results(
        &out.join("results"),
        &results,
        run.config.ensemble.master_seed,
        &run.config.hash(),
        summary.failed_count,
    )
    .map_err(|e| e.to_string())?;
    let (resilient, vulnerable) = partition_resilient_vulnerable(&results);
    ensemble::write_points_csv(&resilient, &out.join("points_resilient.csv"))
        .map_err(|e| e.to_string())?;
    ensemble::write_points_csv(&vulnerable, &out.join("points_vulnerable.csv"))
        .map_err(|e| e.to_string())?;
    write_summary(&summary, &run.config, &out)?;
    log::info!(
        "{n} realizations: blackout probability {:.3}, {} failed",
        summary.blackout_probability,
        summary.failed_count
    );
    Ok(())
}

fn cmd_sweep(
    config_path: &Path,
    levels: &str,
    n: Option<usize>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), String> {
    set_workers(workers)?;
    let run = load_run(config_path)?;
    let levels = parse_levels(levels)?;
    let n = n.unwrap_or(run.config.ensemble.n);
    let table = build_hazard_table(&run.grid, &run.track, &run.roughness, &run.params)
        .map_err(|e| e.to_string())?;
    let profile = clear_sky_profile(&run.params);
    let (rows, _) = sensitivity_sweep(
        &run.grid,
        &table,
        &run.track,
        &run.roughness,
        &run.curves,
        &run.params,
        &profile,
        &levels,
        n,
        run.config.ensemble.master_seed,
    )?;
    let out = out.unwrap_or_else(|| run.config.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    ensemble::write_sweep_csv(&rows, &out.join("sweep.csv")).map_err(|e| e.to_string())?;
    for row in &rows {
        log::info!(
            "level {:.2}: blackout probability {:.3}",
            row.level,
            row.blackout_probability
        );
    }
    Ok(())
}

fn cmd_metrics(results: &Path, config_path: &Path, out: Option<PathBuf>) -> Result<(), String> {
    let run = load_run(config_path)?;
    let (manifest, stored) = load_results(results)?;
    let summary = summarize(&stored, &run.grid, run.params.steps, manifest.failed_count);
    let out = out.unwrap_or_else(|| run.config.output_dir.clone());
    write_summary(&summary, &run.config, &out)?;
    // spot-check that stored metrics agree with recomputation
    for r in &stored {
        let lf = largest_failure(&r.trajectory);
        if lf != r.largest_failure {
            return Err(format!(
                "stored largest_failure {:?} disagrees with recomputation {:?} (seed {})",
                r.largest_failure, lf, r.seed
            ));
        }
    }
    let ci = critical_index(&stored, &run.grid);
    if ci != summary.critical_index {
        return Err("critical index recomputation mismatch".into());
    }
    log::info!("recomputed summary for {} stored realizations", stored.len());
    Ok(())
}

fn cmd_compare(
    config_path: &Path,
    results: &Path,
    observed: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), String> {
    let run = load_run(config_path)?;
    let observed_path = observed
        .or_else(|| run.config.observed.clone())
        .ok_or("no observed data path given (flag or config.observed)")?;
    let observed = ObservedTrajectory::load(&observed_path).map_err(|e| e.to_string())?;
    let (manifest, stored) = load_results(results)?;
    let summary = summarize(&stored, &run.grid, run.params.steps, manifest.failed_count);
    let report = compare_observed(&summary, &run.params, &observed).map_err(|e| e.to_string())?;
    let out = out.unwrap_or_else(|| run.config.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    std::fs::write(
        out.join("comparison.json"),
        serde_json::to_vec_pretty(&report).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    log::info!(
        "observed curve inside the 5-95% band at {:.1}% of aligned steps",
        report.coverage_5_95 * 100.0
    );
    Ok(())
}

fn cmd_testbed(kind: &str, out: &Path) -> Result<(), String> {
    let kind = TestbedKind::parse(kind)
        .ok_or_else(|| format!("unknown testbed '{kind}' (toy-radial, solar-heavy-30, large-100)"))?;
    write_testbed(kind, out).map_err(|e| e.to_string())?;
    log::info!("wrote testbed to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let (result, validation): (Result<(), String>, bool) = match &cli.command {
        Command::Validate { config } => (cmd_validate(config), true),
        Command::Simulate { config, seed, out } => {
            (cmd_simulate(config, *seed, out.clone()), false)
        }
        Command::Ensemble {
            config,
            n,
            workers,
            out,
        } => (cmd_ensemble(config, *n, *workers, out.clone()), false),
        Command::Sweep {
            config,
            levels,
            n,
            workers,
            out,
        } => (cmd_sweep(config, levels, *n, *workers, out.clone()), false),
        Command::Metrics {
            results,
            config,
            out,
        } => (cmd_metrics(results, config, out.clone()), false),
        Command::Compare {
            config,
            results,
            observed,
            out,
        } => (
            cmd_compare(config, results, observed.clone(), out.clone()),
            false,
        ),
        Command::Testbed { kind, out } => (cmd_testbed(kind, out), false),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if validation {
                // machine-readable error list for validation failures
                let doc = serde_json::json!({ "errors": [e] });
                println!("{doc}");
                ExitCode::from(2)
            } else {
                log::error!("{e}");
                ExitCode::from(1)
            }
        }
    }
}
