//! Seeded realization ensembles: parallel execution, summary statistics,
//! resilient/vulnerable partitioning, per-line critical indices, renewable
//! integration sweeps, and observed-data comparison.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::grid::{scale_renewable_integration, GridModel};
use crate::seed::realization_seed;
use crate::sim::{run_realization_with_table, HazardTable, RealizationResult, SimParams};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Quantile levels reported per step, percent.
pub const QUANTILE_LEVELS: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargestFailurePoint {
    pub step: usize,
    pub performance: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub schema_version: u32,
    pub n: usize,
    pub failed_count: usize,
    pub blackout_probability: f64,
    /// Per-step count of realizations whose blackout occurred at that step.
    pub blackout_histogram: Vec<usize>,
    pub resilient_count: usize,
    pub vulnerable_count: usize,
    /// line id -> fraction of realizations where the line's failure step
    /// equals the blackout step.
    pub critical_index: BTreeMap<String, f64>,
    /// Per-step performance quantiles at `QUANTILE_LEVELS`, outer index is
    /// the quantile level.
    pub quantiles: Vec<Vec<f64>>,
    pub largest_failure_points: Vec<LargestFailurePoint>,
}

/// Empirical quantile with linear interpolation over the sorted sample.
fn quantile(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Per-line blackout-coincidence fraction: the count of realizations where
/// the line failed at exactly the blackout step, over all realizations.
pub fn critical_index(results: &[RealizationResult], grid: &GridModel) -> BTreeMap<String, f64> {
    let n = results.len().max(1);
    let mut out = BTreeMap::new();
    for l in &grid.lines {
        let hits = results
            .iter()
            .filter(|r| {
                matches!(
                    (r.blackout_step, r.failed_components.get(&l.id)),
                    (Some(b), Some(&f)) if b == f
                )
            })
            .count();
        out.insert(l.id.clone(), hits as f64 / n as f64);
    }
    out
}

/// Split results by blackout occurrence, with the largest-failure point
/// cloud per class for external density estimation.
pub fn partition_resilient_vulnerable(
    results: &[RealizationResult],
) -> (Vec<LargestFailurePoint>, Vec<LargestFailurePoint>) {
    let mut resilient = Vec::new();
    let mut vulnerable = Vec::new();
    for r in results {
        let (step, drop) = r.largest_failure;
        let point = LargestFailurePoint {
            step,
            performance: r.trajectory.get(step).copied().unwrap_or(f64::NAN),
            drop,
        };
        if r.blackout_step.is_some() {
            vulnerable.push(point);
        } else {
            resilient.push(point);
        }
    }
    (resilient, vulnerable)
}

/// Aggregate a completed result set into the ensemble summary.
pub fn summarize(
    results: &[RealizationResult],
    grid: &GridModel,
    steps: usize,
    failed_count: usize,
) -> EnsembleSummary {
    let n = results.len();
    let blackouts = results.iter().filter(|r| r.blackout_step.is_some()).count();
    let mut histogram = vec![0usize; steps];
    for r in results {
        if let Some(b) = r.blackout_step {
            if b < steps {
                histogram[b] += 1;
            }
        }
    }
    let mut quantiles = vec![Vec::with_capacity(steps); QUANTILE_LEVELS.len()];
    for t in 0..steps {
        let mut column: Vec<f64> = results
            .iter()
            .filter_map(|r| r.trajectory.get(t).copied())
            .collect();
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (qi, &pct) in QUANTILE_LEVELS.iter().enumerate() {
            quantiles[qi].push(quantile(&column, pct));
        }
    }
    let (resilient, vulnerable) = partition_resilient_vulnerable(results);
    let mut points = Vec::with_capacity(n);
    points.extend(resilient.iter().cloned());
    points.extend(vulnerable.iter().cloned());
    EnsembleSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        n,
        failed_count,
        blackout_probability: if n > 0 { blackouts as f64 / n as f64 } else { 0.0 },
        blackout_histogram: histogram,
        resilient_count: resilient.len(),
        vulnerable_count: vulnerable.len(),
        critical_index: critical_index(results, grid),
        quantiles,
        largest_failure_points: points,
    }
}

/// Inputs a realization worker needs, bundled for reuse by sweeps.
pub struct EnsembleInputs<'a> {
    pub grid: &'a GridModel,
    pub table: &'a HazardTable,
    pub curves: &'a crate::fragility::FragilitySet,
    pub params: &'a SimParams,
}

/// Run `n` realizations with seeds derived from `master_seed`. Results come
/// back in index order regardless of worker count, so every downstream
/// statistic is scheduling-independent.
pub fn run_ensemble(
    inputs: &EnsembleInputs,
    n: usize,
    master_seed: u64,
) -> (Vec<RealizationResult>, EnsembleSummary) {
    let outcomes: Vec<Result<RealizationResult, String>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(master_seed, i as u64);
            run_realization_with_table(inputs.grid, inputs.table, inputs.curves, inputs.params, seed)
        })
        .collect();
    let mut results = Vec::with_capacity(n);
    let mut failed_count = 0usize;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => results.push(r),
            Err(e) => {
                log::warn!("realization {i} failed: {e}");
                failed_count += 1;
            }
        }
    }
    let summary = summarize(&results, inputs.grid, inputs.params.steps, failed_count);
    (results, summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub blackout_probability: f64,
    pub median_blackout_step: Option<usize>,
    pub n: usize,
}

/// Median blackout step among realizations that black out.
fn median_blackout_step(results: &[RealizationResult]) -> Option<usize> {
    let mut steps: Vec<usize> = results.iter().filter_map(|r| r.blackout_step).collect();
    if steps.is_empty() {
        return None;
    }
    steps.sort_unstable();
    Some(steps[steps.len() / 2])
}

/// Renewable-integration sensitivity sweep with paired seeds: realization i
/// draws the same component resistances at every level, so only the
/// generation mix differs.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep(
    grid: &GridModel,
    table: &HazardTable,
    track: &crate::hazard::StormTrack,
    roughness: &crate::hazard::RoughnessMap,
    curves: &crate::fragility::FragilitySet,
    params: &SimParams,
    solar_profile: &[f64],
    levels: &[f64],
    n_per_level: usize,
    master_seed: u64,
) -> Result<(Vec<SweepRow>, Vec<EnsembleSummary>), String> {
    let mut rows = Vec::with_capacity(levels.len());
    let mut summaries = Vec::with_capacity(levels.len());
    for &level in levels {
        let scaled = scale_renewable_integration(grid, level, solar_profile)
            .map_err(|e| e.to_string())?;
        // rescaling can introduce BTM units on feeders that had none;
        // extend the shared table with their (cheap, single-site) series
        let mut level_table = table.clone();
        crate::sim::extend_hazard_table(&mut level_table, &scaled, track, roughness, params)
            .map_err(|e| e.to_string())?;
        let inputs = EnsembleInputs {
            grid: &scaled,
            table: &level_table,
            curves,
            params,
        };
        let (results, summary) = run_ensemble(&inputs, n_per_level, master_seed);
        rows.push(SweepRow {
            level,
            blackout_probability: summary.blackout_probability,
            median_blackout_step: median_blackout_step(&results),
            n: n_per_level,
        });
        summaries.push(summary);
    }
    Ok((rows, summaries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedPoint {
    pub time: DateTime<Utc>,
    pub region: String,
    pub pct_with_power: f64,
}

/// Observed outage trajectory, aggregate plus per-region curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedTrajectory {
    pub points: Vec<ObservedPoint>,
}

impl ObservedTrajectory {
    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| MetricsError::MisalignedTimeGrid(e.to_string()))?;
        let mut points = Vec::new();
        for rec in rdr.deserialize::<(String, String, f64)>() {
            let (time, region, pct) =
                rec.map_err(|e| MetricsError::MisalignedTimeGrid(e.to_string()))?;
            let time = DateTime::parse_from_rfc3339(&time)
                .map_err(|e| MetricsError::MisalignedTimeGrid(e.to_string()))?
                .with_timezone(&Utc);
            if !(0.0..=100.0).contains(&pct) {
                return Err(MetricsError::MisalignedTimeGrid(format!(
                    "pct_with_power {pct} outside [0, 100]"
                )));
            }
            points.push(ObservedPoint {
                time,
                region,
                pct_with_power: pct,
            });
        }
        if points.is_empty() {
            return Err(MetricsError::MisalignedTimeGrid(
                "observed file has no rows".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Aggregate curve: mean over regions sharing a timestamp, time-sorted.
    pub fn aggregate(&self) -> Vec<(DateTime<Utc>, f64)> {
        let mut by_time: BTreeMap<DateTime<Utc>, (f64, usize)> = BTreeMap::new();
        for p in &self.points {
            let e = by_time.entry(p.time).or_insert((0.0, 0));
            e.0 += p.pct_with_power;
            e.1 += 1;
        }
        by_time
            .into_iter()
            .map(|(t, (sum, c))| (t, sum / c as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonStep {
    pub time: DateTime<Utc>,
    pub observed: f64,
    /// Simulated quantile band at `QUANTILE_LEVELS`, same units (percent).
    pub band: Vec<f64>,
    pub within_5_95: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub steps: Vec<ComparisonStep>,
    pub coverage_5_95: f64,
    pub observed_blackout_time: Option<DateTime<Utc>>,
    /// Whether the observed blackout time falls inside the support of the
    /// simulated blackout-step histogram.
    pub observed_blackout_in_histogram_support: bool,
}

/// Align the observed curve with the simulation grid by timestamp and
/// report band coverage plus blackout-time positioning.
pub fn compare_observed(
    summary: &EnsembleSummary,
    params: &SimParams,
    observed: &ObservedTrajectory,
) -> Result<ComparisonReport, MetricsError> {
    let aggregate = observed.aggregate();
    let mut steps = Vec::new();
    let mut covered = 0usize;
    for (time, pct) in &aggregate {
        let offset = (*time - params.start).num_minutes();
        if offset < 0 || offset % params.step_minutes != 0 {
            continue;
        }
        let t = (offset / params.step_minutes) as usize;
        if t >= params.steps {
            continue;
        }
        let band: Vec<f64> = summary.quantiles.iter().map(|q| q[t] * 100.0).collect();
        let within = *pct >= band[0] - 1e-9 && *pct <= band[band.len() - 1] + 1e-9;
        if within {
            covered += 1;
        }
        steps.push(ComparisonStep {
            time: *time,
            observed: *pct,
            band,
            within_5_95: within,
        });
    }
    if steps.is_empty() {
        return Err(MetricsError::MisalignedTimeGrid(
            "no observed timestamps fall on the simulation grid".into(),
        ));
    }
    let observed_blackout_time = aggregate
        .iter()
        .find(|(_, pct)| *pct <= 0.0)
        .map(|(t, _)| *t);
    let in_support = match observed_blackout_time {
        None => false,
        Some(t) => {
            let offset = (t - params.start).num_minutes();
            if offset < 0 || offset % params.step_minutes != 0 {
                false
            } else {
                let step = (offset / params.step_minutes) as usize;
                let support: Vec<usize> = summary
                    .blackout_histogram
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(s, _)| s)
                    .collect();
                match (support.first(), support.last()) {
                    (Some(&lo), Some(&hi)) => step >= lo && step <= hi,
                    _ => false,
                }
            }
        }
    };
    let coverage = covered as f64 / steps.len() as f64;
    Ok(ComparisonReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        steps,
        coverage_5_95: coverage,
        observed_blackout_time,
        observed_blackout_in_histogram_support: in_support,
    })
}

/// Results-on-disk layout: one JSON per realization plus a manifest, so
/// metrics can be recomputed without re-simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub n: usize,
    pub master_seed: u64,
    pub config_hash: String,
    pub failed_count: usize,
    pub files: Vec<String>,
}

pub fn store_results(
    dir: &Path,
    results: &[RealizationResult],
    master_seed: u64,
    config_hash: &str,
    failed_count: usize,
) -> std::io::Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let name = format!("realization_{i:05}.json");
        fs::write(dir.join(&name), serde_json::to_vec_pretty(r)?)?;
        files.push(name);
    }
    let manifest = Manifest {
        schema_version: SUMMARY_SCHEMA_VERSION,
        n: results.len(),
        master_seed,
        config_hash: config_hash.to_string(),
        failed_count,
        files,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_results(dir: &Path) -> Result<(Manifest, Vec<RealizationResult>), String> {
    let manifest: Manifest = serde_json::from_slice(
        &fs::read(dir.join("manifest.json")).map_err(|e| format!("manifest.json: {e}"))?,
    )
    .map_err(|e| format!("manifest.json: {e}"))?;
    let mut results = Vec::with_capacity(manifest.files.len());
    for name in &manifest.files {
        let r: RealizationResult =
            serde_json::from_slice(&fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?)
                .map_err(|e| format!("{name}: {e}"))?;
        results.push(r);
    }
    Ok((manifest, results))
}

/// Write the largest-failure point clouds for one class.
pub fn write_points_csv(points: &[LargestFailurePoint], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "performance", "drop"])?;
    for p in points {
        w.write_record([
            p.step.to_string(),
            format!("{}", p.performance),
            format!("{}", p.drop),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["level", "blackout_probability", "median_blackout_step", "n"])?;
    for r in rows {
        w.write_record([
            format!("{}", r.level),
            format!("{}", r.blackout_probability),
            r.median_blackout_step
                .map(|s| s.to_string())
                .unwrap_or_default(),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
