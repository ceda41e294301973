//! Transmission-network topology analysis, DC power flow, the OPA-style
//! overload-tripping cascade, and the imbalance / RoCoF stability screen.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::NetworkError;
use crate::fragility::DamageState;
use crate::grid::GridModel;
use crate::seed::SplitMix;

/// Default RoCoF threshold, Hz/s.
pub const DEFAULT_ROCOF_LIMIT: f64 = 2.0;

/// A connected component of the intact network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGrid {
    /// Bus indices into `GridModel::buses`.
    pub buses: Vec<usize>,
    /// Intact member line indices.
    pub lines: Vec<usize>,
    /// Member generator indices (all, active or not).
    pub generators: Vec<usize>,
    /// Member intact feeder indices.
    pub feeders: Vec<usize>,
    /// Slack bus index; None when no active generator exists.
    pub slack_bus: Option<usize>,
    /// Has at least one active generator and some served demand.
    pub functional: bool,
}

/// Partition the network into connected sub-grids over intact lines.
///
/// `gen_active[g]` marks generators that are candidates for dispatch
/// (available, not tripped); `feeder_demand[f]` is the current net demand of
/// each intact feeder. Sub-grids without an active generator or without
/// demand are non-functional. The slack is the bus of the highest-inertia
/// active generator, ties broken by lowest generator id.
pub fn find_subgrids(
    grid: &GridModel,
    damage: &DamageState,
    gen_active: &[bool],
    feeder_demand: &[f64],
) -> Vec<SubGrid> {
    let n = grid.buses.len();
    let bus_index = grid.bus_index();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (li, l) in grid.lines.iter().enumerate() {
        if damage.is_failed(&l.id) {
            continue;
        }
        let a = bus_index[l.from_bus.as_str()];
        let b = bus_index[l.to_bus.as_str()];
        adj[a].push((b, li));
        adj[b].push((a, li));
    }
    let mut comp = vec![usize::MAX; n];
    let mut n_comp = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = n_comp;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = n_comp;
                    stack.push(v);
                }
            }
        }
        n_comp += 1;
    }

    let mut subs: Vec<SubGrid> = (0..n_comp)
        .map(|_| SubGrid {
            buses: Vec::new(),
            lines: Vec::new(),
            generators: Vec::new(),
            feeders: Vec::new(),
            slack_bus: None,
            functional: false,
        })
        .collect();
    for (b, c) in comp.iter().enumerate() {
        subs[*c].buses.push(b);
    }
    for (li, l) in grid.lines.iter().enumerate() {
        if !damage.is_failed(&l.id) {
            subs[comp[bus_index[l.from_bus.as_str()]]].lines.push(li);
        }
    }
    for (gi, g) in grid.generators.iter().enumerate() {
        subs[comp[bus_index[g.bus.as_str()]]].generators.push(gi);
    }
    for (fi, f) in grid.feeders.iter().enumerate() {
        if !damage.is_failed(&f.id) {
            subs[comp[bus_index[f.substation_bus.as_str()]]].feeders.push(fi);
        }
    }
    for sub in &mut subs {
        let mut best: Option<(f64, &str, usize)> = None;
        for &gi in &sub.generators {
            if !gen_active[gi] {
                continue;
            }
            let g = &grid.generators[gi];
            let candidate = (g.inertia_h, g.id.as_str(), bus_index[g.bus.as_str()]);
            best = match best {
                None => Some(candidate),
                Some(cur) => {
                    if candidate.0 > cur.0 || (candidate.0 == cur.0 && candidate.1 < cur.1) {
                        Some(candidate)
                    } else {
                        Some(cur)
                    }
                }
            };
        }
        sub.slack_bus = best.map(|(_, _, bus)| bus);
        let has_demand = sub.feeders.iter().any(|&fi| feeder_demand[fi] > 0.0);
        sub.functional = sub.slack_bus.is_some() && has_demand;
    }
    subs
}

/// Angles and line flows from a DC power-flow solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// line index -> MW, positive from->to.
    pub flows: HashMap<usize, f64>,
    /// bus index -> radians relative to the slack.
    pub angles: HashMap<usize, f64>,
}

/// Solve B·theta = P over one sub-grid. `injections_mw` is indexed by bus;
/// any residual is absorbed at the slack bus.
pub fn dc_power_flow(
    grid: &GridModel,
    sub: &SubGrid,
    injections_mw: &HashMap<usize, f64>,
) -> Result<FlowSolution, NetworkError> {
    let slack = sub
        .slack_bus
        .ok_or_else(|| NetworkError::SingularSystem("sub-grid has no slack bus".into()))?;
    let bus_index = grid.bus_index();
    // local numbering with the slack removed
    let mut local: HashMap<usize, usize> = HashMap::new();
    for &b in &sub.buses {
        if b != slack {
            let k = local.len();
            local.insert(b, k);
        }
    }
    let n = local.len();
    let mut angles = HashMap::new();
    angles.insert(slack, 0.0);
    let mut flows = HashMap::new();
    if n > 0 {
        let mut b_mat = DMatrix::<f64>::zeros(n, n);
        let mut p = DVector::<f64>::zeros(n);
        for &b in &sub.buses {
            if let Some(&k) = local.get(&b) {
                p[k] = injections_mw.get(&b).copied().unwrap_or(0.0) / grid.system_base;
            }
        }
        for &li in &sub.lines {
            let l = &grid.lines[li];
            let i = bus_index[l.from_bus.as_str()];
            let j = bus_index[l.to_bus.as_str()];
            let b = 1.0 / l.reactance;
            match (local.get(&i), local.get(&j)) {
                (Some(&ki), Some(&kj)) => {
                    b_mat[(ki, ki)] += b;
                    b_mat[(kj, kj)] += b;
                    b_mat[(ki, kj)] -= b;
                    b_mat[(kj, ki)] -= b;
                }
                (Some(&ki), None) => b_mat[(ki, ki)] += b,
                (None, Some(&kj)) => b_mat[(kj, kj)] += b,
                (None, None) => {}
            }
        }
        let lu = b_mat.clone().lu();
        let mut theta = lu
            .solve(&p)
            .ok_or_else(|| NetworkError::SingularSystem("B matrix is singular".into()))?;
        // one step of iterative refinement
        if let Some(correction) = lu.solve(&(&p - &b_mat * &theta)) {
            theta += correction;
        }
        let residual = (&b_mat * &theta - &p).amax();
        if !residual.is_finite() || residual > 1e-9 {
            return Err(NetworkError::SingularSystem(format!(
                "ill-conditioned solve, residual {residual:.3e} pu"
            )));
        }
        for (&b, &k) in &local {
            angles.insert(b, theta[k]);
        }
    }
    for &li in &sub.lines {
        let l = &grid.lines[li];
        let ti = angles[&bus_index[l.from_bus.as_str()]];
        let tj = angles[&bus_index[l.to_bus.as_str()]];
        flows.insert(li, (ti - tj) / l.reactance * grid.system_base);
    }
    Ok(FlowSolution { flows, angles })
}

/// Overload trip rule. The default trips deterministically above the
/// emergency rating; the probabilistic variant additionally trips lines
/// loaded between the normal and emergency ratings with a fixed probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRule {
    pub probabilistic: bool,
    pub trip_probability: f64,
}

impl Default for TripRule {
    fn default() -> Self {
        Self {
            probabilistic: false,
            trip_probability: 0.0,
        }
    }
}

/// Outcome of one cascade fixed-point run.
#[derive(Debug, Clone, Default)]
pub struct CascadeOutcome {
    /// (line index, cascade iteration) in trip order.
    pub tripped: Vec<(usize, usize)>,
    /// Sub-grids after the final topology update.
    pub subgrids: Vec<SubGrid>,
    /// Sub-grids that became unsolvable and were degraded to non-functional.
    pub degraded: Vec<usize>,
}

/// Run the overload-tripping loop to a fixed point. `injections_mw` is the
/// carried-over injection at each bus; sub-grid residuals land on the slack.
/// Terminates within `grid.lines.len()` iterations since every iteration
/// removes at least one line.
#[allow(clippy::too_many_arguments)]
pub fn cascade(
    grid: &GridModel,
    damage: &mut DamageState,
    gen_active: &[bool],
    feeder_demand: &[f64],
    injections_mw: &HashMap<usize, f64>,
    rule: &TripRule,
    rng: &mut SplitMix,
    step: usize,
) -> CascadeOutcome {
    let mut out = CascadeOutcome::default();
    let mut iteration = 0usize;
    loop {
        iteration += 1;
        let mut subgrids = find_subgrids(grid, damage, gen_active, feeder_demand);
        let mut to_trip: Vec<usize> = Vec::new();
        let mut degraded: Vec<usize> = Vec::new();
        for (si, sub) in subgrids.iter().enumerate() {
            if !sub.functional {
                continue;
            }
            // balance within the sub-grid: residual to the slack
            let mut inj: HashMap<usize, f64> = HashMap::new();
            let mut total = 0.0;
            for &b in &sub.buses {
                let v = injections_mw.get(&b).copied().unwrap_or(0.0);
                inj.insert(b, v);
                total += v;
            }
            if let Some(slack) = sub.slack_bus {
                *inj.entry(slack).or_insert(0.0) -= total;
            }
            match dc_power_flow(grid, sub, &inj) {
                Ok(sol) => {
                    for (&li, &flow) in &sol.flows {
                        let l = &grid.lines[li];
                        if flow.abs() > l.emergency_rating {
                            to_trip.push(li);
                        } else if rule.probabilistic
                            && flow.abs() > l.rating
                            && rng.next_f64() < rule.trip_probability
                        {
                            to_trip.push(li);
                        }
                    }
                }
                Err(_) => degraded.push(si),
            }
        }
        if to_trip.is_empty() || iteration > grid.lines.len() {
            for &si in &degraded {
                subgrids[si].functional = false;
            }
            out.degraded = degraded;
            out.subgrids = subgrids;
            return out;
        }
        to_trip.sort_unstable();
        to_trip.dedup();
        for li in to_trip {
            if damage.fail(&grid.lines[li].id, step) {
                out.tripped.push((li, iteration));
            }
        }
    }
}

/// Eq.-style sub-grid imbalance: total generation minus total served demand.
pub fn power_imbalance(generation_mw: f64, demand_mw: f64) -> f64 {
    generation_mw - demand_mw
}

/// Maximum rate of change of frequency for a sub-grid, Hz/s.
///
/// `sync_fleet` lists (H seconds, nominal MW) for every committed
/// synchronous generator in the sub-grid. Zero inertia with a nonzero
/// imbalance yields an infinite RoCoF; zero imbalance yields zero.
pub fn max_rocof(imbalance_mw: f64, f0_hz: f64, sync_fleet: &[(f64, f64)]) -> f64 {
    let denom: f64 = sync_fleet.iter().map(|(h, p)| 2.0 * h * p).sum();
    if denom <= 0.0 {
        if imbalance_mw == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(imbalance_mw)
        }
    } else {
        f0_hz * imbalance_mw / denom
    }
}

/// Per-sub-grid stability result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub imbalance_mw: f64,
    pub max_rocof: f64,
    pub stable: bool,
}

/// Screen sub-grids against the RoCoF limit. A sub-grid survives at exactly
/// the limit (the threshold must be exceeded to trip).
pub fn stability_verdict(imbalance_mw: f64, f0_hz: f64, sync_fleet: &[(f64, f64)], limit: f64) -> StabilityVerdict {
    let rocof = max_rocof(imbalance_mw, f0_hz, sync_fleet);
    StabilityVerdict {
        imbalance_mw,
        max_rocof: rocof,
        stable: rocof.abs() <= limit,
    }
}
