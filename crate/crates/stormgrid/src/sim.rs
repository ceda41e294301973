//! One seeded realization: hazard sampling, damage accumulation, cascade,
//! frequency screening, and re-dispatch over the discretized event horizon.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::dispatch::{build_problem, solve_dispatch, CostWeights, PrevDispatch, SolveStatus};
use crate::error::HazardError;
use crate::fragility::{
    available_generation, sample_resistances, solar_fraction, update_damage, DamageState,
    DiurnalShape, FragilitySet, ResistanceAssignment, SolarReductionParams,
};
use crate::geo::{self, GeoPoint};
use crate::grid::{GeneratorKind, GridModel};
use crate::hazard::{
    component_wind, RoughnessMap, StormTrack, WindParams, GEOMETRY_SAMPLE_SPACING_M,
};
use crate::network::{cascade, max_rocof, TripRule};
use crate::seed::{splitmix64, SplitMix};

/// Everything a realization needs besides grid/track/curves data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub start: DateTime<Utc>,
    pub steps: usize,
    pub step_minutes: i64,
    pub wind: WindParams,
    pub solar: SolarReductionParams,
    pub diurnal: DiurnalShape,
    /// RoCoF survival threshold, Hz/s (closed interval).
    pub rocof_limit: f64,
    pub weights: CostWeights,
    pub trip_rule: TripRule,
    pub f0_hz: f64,
}

impl SimParams {
    pub fn time_at(&self, step: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(self.step_minutes * step as i64)
    }
}

/// Per-step hazard intensities for every component that needs them. The
/// wind field does not depend on the realization seed, so one table serves
/// a whole ensemble.
#[derive(Debug, Clone, Default)]
pub struct HazardTable {
    /// component id -> per-step wind speed, m/s
    pub wind: HashMap<String, Vec<f64>>,
    /// unit id (incl. BTM aggregates) -> per-step solar capacity fraction
    pub solar: HashMap<String, Vec<f64>>,
}

impl HazardTable {
    pub fn wind_at(&self, step: usize) -> HashMap<String, f64> {
        self.wind
            .iter()
            .map(|(k, v)| (k.clone(), v[step]))
            .collect()
    }

    pub fn solar_at(&self, step: usize) -> HashMap<String, f64> {
        self.solar
            .iter()
            .map(|(k, v)| (k.clone(), v[step]))
            .collect()
    }
}

fn bus_point(grid: &GridModel, bus_id: &str) -> GeoPoint {
    let idx = grid.bus_index();
    let b = &grid.buses[idx[bus_id]];
    GeoPoint {
        lat: b.lat,
        lon: b.lon,
    }
}

/// Precompute per-component winds and per-unit solar fractions over the
/// horizon. Line/feeder geometries are densified to the standard spacing.
pub fn build_hazard_table(
    grid: &GridModel,
    track: &StormTrack,
    roughness: &RoughnessMap,
    params: &SimParams,
) -> Result<HazardTable, HazardError> {
    let mut table = HazardTable::default();
    extend_hazard_table(&mut table, grid, track, roughness, params)?;
    Ok(table)
}

/// Add any series the table is missing for `grid`'s components. Used by
/// integration sweeps, where rescaling introduces BTM units on feeders
/// that had none.
pub fn extend_hazard_table(
    table: &mut HazardTable,
    grid: &GridModel,
    track: &StormTrack,
    roughness: &RoughnessMap,
    params: &SimParams,
) -> Result<(), HazardError> {
    let times: Vec<DateTime<Utc>> = (0..params.steps).map(|s| params.time_at(s)).collect();
    let mut geoms: Vec<(String, Vec<GeoPoint>)> = Vec::new();
    for l in &grid.lines {
        let pts = if l.span_points.len() >= 2 {
            geo::densify(&l.span_points, GEOMETRY_SAMPLE_SPACING_M)
        } else {
            let ends = vec![bus_point(grid, &l.from_bus), bus_point(grid, &l.to_bus)];
            geo::densify(&ends, GEOMETRY_SAMPLE_SPACING_M)
        };
        geoms.push((l.id.clone(), pts));
    }
    for f in &grid.feeders {
        let pts = if f.route_points.len() >= 2 {
            geo::densify(&f.route_points, GEOMETRY_SAMPLE_SPACING_M)
        } else {
            vec![bus_point(grid, &f.substation_bus)]
        };
        geoms.push((f.id.clone(), pts));
        if f.btm_solar_capacity > 0.0 {
            // the BTM aggregate shares the feeder's service territory
            geoms.push((f.btm_unit_id(), vec![bus_point(grid, &f.substation_bus)]));
        }
    }
    for g in &grid.generators {
        if g.kind == GeneratorKind::BtmSolar {
            continue;
        }
        geoms.push((g.id.clone(), vec![bus_point(grid, &g.bus)]));
    }
    for (id, pts) in geoms {
        if table.wind.contains_key(&id) {
            continue;
        }
        let mut series = Vec::with_capacity(times.len());
        for &t in &times {
            series.push(component_wind(track, t, &pts, &params.wind, roughness)?);
        }
        table.wind.insert(id, series);
    }

    let mut solar_sites: Vec<(String, GeoPoint)> = Vec::new();
    for g in &grid.generators {
        if g.kind.is_solar() && g.kind != GeneratorKind::BtmSolar {
            solar_sites.push((g.id.clone(), bus_point(grid, &g.bus)));
        }
    }
    for f in &grid.feeders {
        if f.btm_solar_capacity > 0.0 {
            solar_sites.push((f.btm_unit_id(), bus_point(grid, &f.substation_bus)));
        }
    }
    for (id, site) in solar_sites {
        if table.solar.contains_key(&id) {
            continue;
        }
        let mut series = Vec::with_capacity(times.len());
        for &t in &times {
            series.push(solar_fraction(track, t, site, &params.solar, &params.diurnal)?);
        }
        table.solar.insert(id, series);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ComponentFailed,
    LineTrippedOverload,
    SubgridRemovedRocof,
    ShedChange,
    /// Generator stranded in a non-functional island; tripped for the
    /// remainder of the event.
    GeneratorIsolated,
}

impl EventKind {
    pub fn token(self) -> &'static str {
        match self {
            EventKind::ComponentFailed => "component_failed",
            EventKind::LineTrippedOverload => "line_tripped_overload",
            EventKind::SubgridRemovedRocof => "subgrid_removed_rocof",
            EventKind::ShedChange => "shed_change",
            EventKind::GeneratorIsolated => "generator_isolated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub kind: EventKind,
    pub component: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub seed: u64,
    /// Fraction of customers with electricity, one entry per step.
    pub trajectory: Vec<f64>,
    /// Gross demand served, MW, one entry per step.
    pub served_mw: Vec<f64>,
    /// Gross demand unserved, MW, one entry per step.
    pub shed_mw: Vec<f64>,
    pub events: Vec<Event>,
    pub blackout_step: Option<usize>,
    /// (step, drop): largest decrease between consecutive steps, labeled at
    /// the later step; ties broken earliest.
    pub largest_failure: (usize, f64),
    /// Final damage record: component id -> failure step.
    pub failed_components: BTreeMap<String, usize>,
}

/// Largest consecutive-step performance drop; (0, 0.0) when the trajectory
/// never decreases.
pub fn largest_failure(trajectory: &[f64]) -> (usize, f64) {
    let mut best = (0usize, 0.0f64);
    for t in 1..trajectory.len() {
        let drop = trajectory[t - 1] - trajectory[t];
        if drop > best.1 {
            best = (t, drop);
        }
    }
    best
}

/// Live per-feeder service bookkeeping within a step.
struct FeederOutcome {
    served_fraction: f64,
    shed_mw: f64,
}

/// Run one seeded realization using a precomputed hazard table.
pub fn run_realization_with_table(
    grid: &GridModel,
    table: &HazardTable,
    curves: &FragilitySet,
    params: &SimParams,
    seed: u64,
) -> Result<RealizationResult, String> {
    let assignment = sample_resistances(grid, curves, seed).map_err(|e| e.to_string())?;
    run_realization_assigned(grid, table, &assignment, params, seed)
}

/// Same, but with the component resistances supplied by the caller (preset
/// and hardening experiments).
pub fn run_realization_assigned(
    grid: &GridModel,
    table: &HazardTable,
    assignment: &ResistanceAssignment,
    params: &SimParams,
    seed: u64,
) -> Result<RealizationResult, String> {
    let mut rng = SplitMix::new(splitmix64(seed ^ 0x7470_5f63_6173_6361));
    let mut damage = DamageState::default();
    let mut events: Vec<Event> = Vec::new();
    let mut trajectory = Vec::with_capacity(params.steps);
    let mut served_mw_series = Vec::with_capacity(params.steps);
    let mut shed_mw_series = Vec::with_capacity(params.steps);
    let mut blackout_step: Option<usize> = None;

    let total_customers: f64 = grid.total_customers() as f64;
    let mut prev = PrevDispatch::default();
    // first step relaxes ramps: build_problem treats prev=None specially
    let mut have_prev = false;
    let mut forced_off: HashSet<String> = HashSet::new();
    let mut dead_feeders: HashSet<String> = HashSet::new();
    let mut prev_feeder_shed: HashMap<String, f64> = HashMap::new();
    let bus_index = grid.bus_index();

    for t in 0..params.steps {
        // (1) environmental damage
        let wind_now = table.wind_at(t);
        let mut newly = update_damage(&mut damage, assignment, &wind_now, t);
        newly.sort();
        for id in &newly {
            events.push(Event {
                step: t,
                kind: EventKind::ComponentFailed,
                component: id.clone(),
                magnitude: wind_now.get(id).copied().unwrap_or(0.0),
            });
        }

        if blackout_step.is_some() {
            // no restoration: keep recording zeros, damage log continues
            trajectory.push(0.0);
            served_mw_series.push(0.0);
            shed_mw_series.push(grid.feeders.iter().map(|f| f.demand_at(t)).sum());
            continue;
        }

        let solar_now = table.solar_at(t);
        let mut avail = available_generation(grid, &damage, assignment, &wind_now, &solar_now);
        for id in &forced_off {
            if let Some(a) = avail.get_mut(id) {
                *a = 0.0;
            }
        }

        let feeder_gross: Vec<f64> = grid.feeders.iter().map(|f| f.demand_at(t)).collect();
        let feeder_net: Vec<f64> = grid
            .feeders
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                if damage.is_failed(&f.id) || dead_feeders.contains(&f.id) {
                    0.0
                } else {
                    let btm = avail.get(&f.btm_unit_id()).copied().unwrap_or(0.0);
                    (feeder_gross[fi] - btm).max(0.0)
                }
            })
            .collect();

        // previous dispatch mapped onto the current topology; generation
        // from failed or forced-off units is dropped
        let gen_active: Vec<bool> = grid
            .generators
            .iter()
            .map(|g| {
                if !g.available || forced_off.contains(&g.id) || damage.is_failed(&g.id) {
                    false
                } else if have_prev {
                    prev.by_gen.get(&g.id).map(|&(c, _)| c).unwrap_or(false)
                } else {
                    true
                }
            })
            .collect();
        let mut injections: HashMap<usize, f64> = HashMap::new();
        for (gi, g) in grid.generators.iter().enumerate() {
            if !gen_active[gi] || g.kind == GeneratorKind::BtmSolar {
                continue;
            }
            let out = prev.by_gen.get(&g.id).map(|&(_, p)| p).unwrap_or(0.0);
            if out != 0.0 {
                *injections.entry(bus_index[g.bus.as_str()]).or_insert(0.0) += out;
            }
        }
        // before the first dispatch nothing flows, so the cascade sees an
        // empty injection vector on step 0
        if have_prev {
            for (fi, f) in grid.feeders.iter().enumerate() {
                if feeder_net[fi] <= 0.0 {
                    continue;
                }
                let prev_shed = prev_feeder_shed.get(&f.id).copied().unwrap_or(0.0);
                let load = (feeder_net[fi] - prev_shed).max(0.0);
                if load != 0.0 {
                    *injections
                        .entry(bus_index[f.substation_bus.as_str()])
                        .or_insert(0.0) -= load;
                }
            }
        }

        // (2)+(3) islanding and overload cascade
        let outcome = cascade(
            grid,
            &mut damage,
            &gen_active,
            &feeder_net,
            &injections,
            &params.trip_rule,
            &mut rng,
            t,
        );
        let mut tripped_sorted = outcome.tripped.clone();
        tripped_sorted.sort();
        for (li, _) in &tripped_sorted {
            events.push(Event {
                step: t,
                kind: EventKind::LineTrippedOverload,
                component: grid.lines[*li].id.clone(),
                magnitude: grid.lines[*li].emergency_rating,
            });
        }

        // (4) frequency screen per functional sub-grid on inherited injections
        let mut survivors: Vec<&crate::network::SubGrid> = Vec::new();
        for sub in &outcome.subgrids {
            if !sub.functional {
                // strand any still-active generation
                for &gi in &sub.generators {
                    let g = &grid.generators[gi];
                    if gen_active[gi] && g.kind != GeneratorKind::BtmSolar {
                        if forced_off.insert(g.id.clone()) {
                            events.push(Event {
                                step: t,
                                kind: EventKind::GeneratorIsolated,
                                component: g.id.clone(),
                                magnitude: prev.by_gen.get(&g.id).map(|&(_, p)| p).unwrap_or(0.0),
                            });
                        }
                    }
                }
                for &fi in &sub.feeders {
                    dead_feeders.insert(grid.feeders[fi].id.clone());
                }
                continue;
            }
            let mut gen_sum = 0.0;
            let mut load_sum = 0.0;
            let mut fleet: Vec<(f64, f64)> = Vec::new();
            for &gi in &sub.generators {
                let g = &grid.generators[gi];
                if !gen_active[gi] || g.kind == GeneratorKind::BtmSolar {
                    continue;
                }
                gen_sum += prev.by_gen.get(&g.id).map(|&(_, p)| p).unwrap_or(0.0);
                if g.kind.is_synchronous() {
                    fleet.push((g.inertia_h, g.p_max));
                }
            }
            for &fi in &sub.feeders {
                let f = &grid.feeders[fi];
                let prev_shed = prev_feeder_shed.get(&f.id).copied().unwrap_or(0.0);
                load_sum += (feeder_net[fi] - prev_shed).max(0.0);
            }
            let imbalance = gen_sum - load_sum;
            let rocof = max_rocof(imbalance, params.f0_hz, &fleet);
            if have_prev && rocof.abs() > params.rocof_limit {
                let slack_id = sub
                    .slack_bus
                    .map(|b| grid.buses[b].id.clone())
                    .unwrap_or_default();
                events.push(Event {
                    step: t,
                    kind: EventKind::SubgridRemovedRocof,
                    component: slack_id,
                    magnitude: rocof,
                });
                for &gi in &sub.generators {
                    let g = &grid.generators[gi];
                    if g.kind != GeneratorKind::BtmSolar {
                        forced_off.insert(g.id.clone());
                    }
                }
                for &fi in &sub.feeders {
                    dead_feeders.insert(grid.feeders[fi].id.clone());
                }
                continue;
            }
            survivors.push(sub);
        }

        // (5)+(6) re-dispatch each surviving sub-grid
        let mut outcomes: HashMap<String, FeederOutcome> = HashMap::new();
        let mut next_prev = PrevDispatch::default();
        for sub in survivors {
            let (problem, gen_idx, load_idx) = build_problem(
                grid,
                sub,
                &damage,
                &avail,
                if have_prev { Some(&prev) } else { None },
                params.weights,
                params.step_minutes as f64,
                &feeder_gross,
            );
            // dead feeders keep zero net demand via feeder_net; rebuild the
            // loads with the netted values
            let mut problem = problem;
            for (k, &fi) in load_idx.iter().enumerate() {
                problem.loads[k].demand = feeder_net[fi];
            }
            let sol = solve_dispatch(&problem);
            if sol.status == SolveStatus::Infeasible {
                // numerical failure degrades the sub-grid, never aborts
                for &gi in &sub.generators {
                    let g = &grid.generators[gi];
                    if g.kind != GeneratorKind::BtmSolar && forced_off.insert(g.id.clone()) {
                        events.push(Event {
                            step: t,
                            kind: EventKind::GeneratorIsolated,
                            component: g.id.clone(),
                            magnitude: 0.0,
                        });
                    }
                }
                for &fi in &sub.feeders {
                    dead_feeders.insert(grid.feeders[fi].id.clone());
                }
                continue;
            }
            for (k, &gi) in gen_idx.iter().enumerate() {
                next_prev.by_gen.insert(
                    grid.generators[gi].id.clone(),
                    (sol.committed[k], sol.output[k]),
                );
            }
            for (k, &fi) in load_idx.iter().enumerate() {
                let f = &grid.feeders[fi];
                if dead_feeders.contains(&f.id) {
                    continue;
                }
                let net = problem.loads[k].demand;
                let served_fraction = if net <= 0.0 {
                    1.0 // BTM covers the feeder entirely
                } else {
                    ((net - sol.shed[k]) / net).clamp(0.0, 1.0)
                };
                outcomes.insert(
                    f.id.clone(),
                    FeederOutcome {
                        served_fraction,
                        shed_mw: sol.shed[k],
                    },
                );
            }
        }

        // bookkeeping: performance and shed-change events
        let mut served_customers = 0.0;
        let mut served_mw = 0.0;
        let mut new_shed: HashMap<String, f64> = HashMap::new();
        let mut feeders_sorted: Vec<usize> = (0..grid.feeders.len()).collect();
        feeders_sorted.sort_by(|&a, &b| grid.feeders[a].id.cmp(&grid.feeders[b].id));
        for fi in feeders_sorted {
            let f = &grid.feeders[fi];
            let alive = !damage.is_failed(&f.id) && !dead_feeders.contains(&f.id);
            let (fraction, shed) = match (alive, outcomes.get(&f.id)) {
                (true, Some(o)) => (o.served_fraction, o.shed_mw),
                (true, None) => (0.0, feeder_net[fi]), // unserved island
                (false, _) => (0.0, 0.0),
            };
            served_customers += fraction * f.customers as f64;
            if alive && fraction > 0.0 {
                served_mw += (feeder_gross[fi] - shed).max(0.0);
            }
            // failed and removed feeders stop logging: their drop is already
            // covered by component_failed / subgrid_removed events
            if alive {
                let old = prev_feeder_shed.get(&f.id).copied().unwrap_or(0.0);
                if (shed - old).abs() > 1e-6 {
                    events.push(Event {
                        step: t,
                        kind: EventKind::ShedChange,
                        component: f.id.clone(),
                        magnitude: shed - old,
                    });
                }
                new_shed.insert(f.id.clone(), shed);
            }
        }
        let performance = if total_customers > 0.0 {
            (served_customers / total_customers).clamp(0.0, 1.0)
        } else {
            1.0
        };
        trajectory.push(performance);
        let total_gross: f64 = feeder_gross.iter().sum();
        served_mw_series.push(served_mw);
        shed_mw_series.push((total_gross - served_mw).max(0.0));
        prev = next_prev;
        prev_feeder_shed = new_shed;
        have_prev = true;
        if performance <= 0.0 {
            blackout_step = Some(t);
        }
    }

    let lf = largest_failure(&trajectory);
    Ok(RealizationResult {
        seed,
        trajectory,
        served_mw: served_mw_series,
        shed_mw: shed_mw_series,
        events,
        blackout_step,
        largest_failure: lf,
        failed_components: damage.failed.clone(),
    })
}

/// Convenience wrapper that builds the hazard table itself.
pub fn run_realization(
    grid: &GridModel,
    track: &StormTrack,
    curves: &FragilitySet,
    roughness: &RoughnessMap,
    params: &SimParams,
    seed: u64,
) -> Result<RealizationResult, String> {
    let table = build_hazard_table(grid, track, roughness, params).map_err(|e| e.to_string())?;
    run_realization_with_table(grid, &table, curves, params, seed)
}

/// Write the per-step trajectory CSV next to a realization.
pub fn write_trajectory_csv(
    result: &RealizationResult,
    params: &SimParams,
    path: &std::path::Path,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "time_utc", "performance", "served_mw", "shed_mw"])?;
    for (t, perf) in result.trajectory.iter().enumerate() {
        w.write_record([
            t.to_string(),
            params.time_at(t).to_rfc3339(),
            format!("{perf}"),
            format!("{}", result.served_mw[t]),
            format!("{}", result.shed_mw[t]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write the event log CSV.
pub fn write_events_csv(result: &RealizationResult, path: &std::path::Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "kind", "component", "magnitude"])?;
    for e in &result.events {
        w.write_record([
            e.step.to_string(),
            e.kind.token().to_string(),
            e.component.clone(),
            format!("{}", e.magnitude),
        ])?;
    }
    w.flush()?;
    Ok(())
}
