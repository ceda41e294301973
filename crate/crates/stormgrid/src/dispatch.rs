//! Per-step, per-sub-grid operation problem: commitment, re-dispatch,
//! renewable curtailment, and minimal load shedding under DC network,
//! capacity, and ramp constraints.
//!
//! The default path is merit-order commitment plus an LP over outputs,
//! flows, and shedding, improved by local commitment flips. An exhaustive
//! commitment enumeration is available for small fleets and anchors the
//! tests.

use std::collections::HashMap;

use minilp::{ComparisonOp, OptimizationDirection, Problem as LpProblem, Variable};
use serde::{Deserialize, Serialize};

use crate::fragility::DamageState;
use crate::grid::{GeneratorKind, GridModel};
use crate::network::SubGrid;

/// Balance tolerance for the standalone feasibility checker, MW.
pub const BALANCE_TOL_MW: f64 = 1e-6;

/// Objective cost weights, $/MWh. The simulator enforces
/// VOLL >> curtailment >> generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub voll: f64,
    pub curtailment: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            voll: 10_000.0,
            curtailment: 100.0,
        }
    }
}

/// One dispatchable or curtailable unit of a sub-grid problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchUnit {
    pub id: String,
    /// Local bus index within the problem.
    pub bus: usize,
    pub p_min: f64,
    /// Availability-adjusted maximum output this step.
    pub p_avail: f64,
    /// Ramp capability over one step, MW (infinite on the first step).
    pub ramp_mw: f64,
    pub cost: f64,
    pub p_prev: f64,
    pub committed_prev: bool,
    /// Curtailable renewables carry no commitment variable or minimum.
    pub curtailable: bool,
}

impl DispatchUnit {
    /// Output bounds while committed. A freshly started unit (p_prev = 0)
    /// may jump to its minimum even if the ramp is tighter.
    pub fn on_bounds(&self) -> (f64, f64) {
        if self.curtailable {
            return (0.0, self.p_avail);
        }
        let lo = (self.p_prev - self.ramp_mw).max(self.p_min);
        let hi = (self.p_prev + self.ramp_mw).max(self.p_min).min(self.p_avail);
        (lo, hi)
    }

    /// Whether the unit can remain online this step.
    pub fn committable(&self) -> bool {
        if self.curtailable {
            return self.p_avail > 0.0;
        }
        if !self.committed_prev {
            return false; // startup delay: produces nothing this step
        }
        let (lo, hi) = self.on_bounds();
        lo <= hi + 1e-9 && self.p_avail > 0.0
    }
}

/// One load (distribution feeder) with BTM output already netted off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchLoad {
    pub id: String,
    pub bus: usize,
    pub demand: f64,
}

/// One line of the sub-grid with its emergency limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchLine {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub limit: f64,
}

/// Self-contained single-period dispatch problem over one sub-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchProblem {
    pub n_buses: usize,
    /// Local index of the slack bus (angle reference).
    pub slack: usize,
    pub units: Vec<DispatchUnit>,
    pub loads: Vec<DispatchLoad>,
    pub lines: Vec<DispatchLine>,
    pub base_mva: f64,
    pub weights: CostWeights,
}

impl DispatchProblem {
    pub fn total_demand(&self) -> f64 {
        self.loads.iter().map(|l| l.demand).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Heuristic,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub committed: Vec<bool>,
    pub output: Vec<f64>,
    pub shed: Vec<f64>,
    /// Bus angles, radians, slack at zero.
    pub angles: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
}

impl DispatchSolution {
    pub fn total_shed(&self) -> f64 {
        self.shed.iter().sum()
    }
}

/// Solve the LP for a fixed commitment pattern. `on[i]` is ignored for
/// curtailable units (they are always in, bounded by availability).
fn solve_fixed_commitment(p: &DispatchProblem, on: &[bool]) -> Option<DispatchSolution> {
    let mut lp = LpProblem::new(OptimizationDirection::Minimize);
    let mut constant = 0.0;
    let mut unit_vars: Vec<Option<Variable>> = Vec::with_capacity(p.units.len());
    for (i, u) in p.units.iter().enumerate() {
        let active = if u.curtailable { u.p_avail > 0.0 } else { on[i] && u.committed_prev };
        if !active {
            unit_vars.push(None);
            continue;
        }
        let (lo, hi) = u.on_bounds();
        if lo > hi + 1e-9 {
            return None;
        }
        let coeff = if u.curtailable {
            constant += p.weights.curtailment * u.p_avail;
            u.cost - p.weights.curtailment
        } else {
            u.cost
        };
        unit_vars.push(Some(lp.add_var(coeff, (lo, hi.max(lo)))));
    }
    let shed_vars: Vec<Variable> = p
        .loads
        .iter()
        .map(|l| lp.add_var(p.weights.voll, (0.0, l.demand.max(0.0))))
        .collect();
    let theta_vars: Vec<Option<Variable>> = (0..p.n_buses)
        .map(|b| {
            if b == p.slack {
                None
            } else {
                Some(lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
            }
        })
        .collect();

    // nodal balance: gen + shed - net line export = demand
    let mut balance: Vec<Vec<(Variable, f64)>> = vec![Vec::new(); p.n_buses];
    let mut rhs: Vec<f64> = vec![0.0; p.n_buses];
    for (i, u) in p.units.iter().enumerate() {
        if let Some(v) = unit_vars[i] {
            balance[u.bus].push((v, 1.0));
        }
    }
    for (d, l) in p.loads.iter().enumerate() {
        balance[l.bus].push((shed_vars[d], 1.0));
        rhs[l.bus] += l.demand;
    }
    for line in &p.lines {
        let b = p.base_mva / line.reactance;
        // flow = b * (theta_from - theta_to), leaves `from`, enters `to`
        for (bus, sign) in [(line.from, -1.0), (line.to, 1.0)] {
            if let Some(v) = theta_vars[line.from] {
                balance[bus].push((v, sign * b));
            }
            if let Some(v) = theta_vars[line.to] {
                balance[bus].push((v, -sign * b));
            }
        }
    }
    for b in 0..p.n_buses {
        // merge duplicate variable entries; minilp wants unique columns
        let mut acc: HashMap<Variable, f64> = HashMap::new();
        for (v, c) in &balance[b] {
            *acc.entry(*v).or_insert(0.0) += c;
        }
        let expr: Vec<(Variable, f64)> = acc.into_iter().collect();
        lp.add_constraint(expr, ComparisonOp::Eq, rhs[b]);
    }
    for line in &p.lines {
        let b = p.base_mva / line.reactance;
        let mut expr: HashMap<Variable, f64> = HashMap::new();
        if let Some(v) = theta_vars[line.from] {
            *expr.entry(v).or_insert(0.0) += b;
        }
        if let Some(v) = theta_vars[line.to] {
            *expr.entry(v).or_insert(0.0) -= b;
        }
        let expr: Vec<(Variable, f64)> = expr.into_iter().collect();
        if expr.is_empty() {
            continue;
        }
        lp.add_constraint(expr.clone(), ComparisonOp::Le, line.limit);
        lp.add_constraint(expr, ComparisonOp::Ge, -line.limit);
    }

    let sol = lp.solve().ok()?;
    let mut committed = Vec::with_capacity(p.units.len());
    let mut output = Vec::with_capacity(p.units.len());
    for (i, u) in p.units.iter().enumerate() {
        match unit_vars[i] {
            Some(v) => {
                committed.push(true);
                output.push(sol[v]);
            }
            None => {
                // a newly started unit is committed but produces nothing yet
                committed.push(!u.curtailable && on[i] && !u.committed_prev);
                output.push(0.0);
            }
        }
    }
    let shed: Vec<f64> = shed_vars.iter().map(|v| sol[*v]).collect();
    let angles: Vec<f64> = theta_vars
        .iter()
        .map(|tv| tv.map(|v| sol[v]).unwrap_or(0.0))
        .collect();
    Some(DispatchSolution {
        committed,
        output,
        shed,
        angles,
        objective: sol.objective() + constant,
        status: SolveStatus::Heuristic,
    })
}

/// Fleets up to this many commitment candidates are searched exhaustively;
/// larger fleets fall back to greedy merit order plus single-flip search.
pub const EXHAUSTIVE_CANDIDATE_LIMIT: usize = 12;

/// Indices of units that take part in the commitment search.
fn commitment_candidates(p: &DispatchProblem) -> Vec<usize> {
    (0..p.units.len())
        .filter(|&i| !p.units[i].curtailable && p.units[i].committable())
        .collect()
}

/// Merit-order starting pattern: commit in cost order until capacity covers
/// the demand, then keep going only if a unit's floor is already forced.
fn greedy_pattern(p: &DispatchProblem, candidates: &[usize]) -> Vec<bool> {
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| {
        p.units[a]
            .cost
            .partial_cmp(&p.units[b].cost)
            .unwrap()
            .then_with(|| p.units[a].id.cmp(&p.units[b].id))
    });
    let renewable_cap: f64 = p
        .units
        .iter()
        .filter(|u| u.curtailable)
        .map(|u| u.p_avail)
        .sum();
    let demand = p.total_demand();
    let mut on = vec![false; p.units.len()];
    let mut cap = renewable_cap;
    for &i in &order {
        if cap >= demand {
            break;
        }
        on[i] = true;
        cap += p.units[i].on_bounds().1;
    }
    on
}

/// Network-relaxed optimum for a fixed pattern: outputs at their floors,
/// then merit-order fill, shedding any remaining deficit. This is a lower
/// bound on the LP objective for the same pattern, and exact whenever the
/// resulting flows respect the line limits.
fn copper_plate(p: &DispatchProblem, on: &[bool]) -> Option<(Vec<f64>, f64, f64)> {
    let mut output = vec![0.0; p.units.len()];
    let mut active: Vec<usize> = Vec::new();
    let mut floor_sum = 0.0;
    for (i, u) in p.units.iter().enumerate() {
        let included = if u.curtailable { u.p_avail > 0.0 } else { on[i] && u.committed_prev };
        if !included {
            continue;
        }
        let (lo, hi) = u.on_bounds();
        if lo > hi + 1e-9 {
            return None;
        }
        output[i] = lo;
        floor_sum += lo;
        active.push(i);
    }
    let demand = p.total_demand();
    if floor_sum > demand + 1e-9 {
        return None; // over-generation: no feasible balance without dumping
    }
    // merit order by the LP's effective coefficient: curtailable units earn
    // back the curtailment penalty for every MW produced
    let effective = |i: usize| {
        let u = &p.units[i];
        if u.curtailable {
            u.cost - p.weights.curtailment
        } else {
            u.cost
        }
    };
    active.sort_by(|&a, &b| {
        effective(a)
            .partial_cmp(&effective(b))
            .unwrap()
            .then_with(|| p.units[a].id.cmp(&p.units[b].id))
    });
    let mut remaining = demand - floor_sum;
    for &i in &active {
        if remaining <= 0.0 {
            break;
        }
        let (lo, hi) = p.units[i].on_bounds();
        let take = (hi - lo).min(remaining);
        output[i] += take;
        remaining -= take;
    }
    let shed = remaining.max(0.0);
    let mut objective = p.weights.voll * shed;
    for (i, u) in p.units.iter().enumerate() {
        objective += u.cost * output[i];
        if u.curtailable {
            objective += p.weights.curtailment * (u.p_avail - output[i]).max(0.0);
        }
    }
    Some((output, shed, objective))
}

/// Solve bus angles for fixed injections; None when the reduced system is
/// singular (disconnected problem, handed back to the LP path).
fn solve_angles(p: &DispatchProblem, injection: &[f64]) -> Option<Vec<f64>> {
    let n = p.n_buses;
    if n <= 1 {
        return Some(vec![0.0; n]);
    }
    // local numbering with the slack removed
    let reduced: Vec<Option<usize>> = {
        let mut k = 0usize;
        (0..n)
            .map(|b| {
                if b == p.slack {
                    None
                } else {
                    let idx = k;
                    k += 1;
                    Some(idx)
                }
            })
            .collect()
    };
    let m = n - 1;
    let mut b_mat = nalgebra::DMatrix::<f64>::zeros(m, m);
    for line in &p.lines {
        let b = p.base_mva / line.reactance;
        match (reduced[line.from], reduced[line.to]) {
            (Some(i), Some(j)) => {
                b_mat[(i, i)] += b;
                b_mat[(j, j)] += b;
                b_mat[(i, j)] -= b;
                b_mat[(j, i)] -= b;
            }
            (Some(i), None) | (None, Some(i)) => b_mat[(i, i)] += b,
            (None, None) => {}
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for (b, inj) in injection.iter().enumerate() {
        if let Some(i) = reduced[b] {
            rhs[i] = *inj;
        }
    }
    let theta = b_mat.lu().solve(&rhs)?;
    let mut angles = vec![0.0; n];
    for (b, r) in reduced.iter().enumerate() {
        if let Some(i) = r {
            angles[b] = theta[*i];
        }
    }
    Some(angles)
}

/// Network-free commitment search plus a single flow check. Succeeds on the
/// (common) uncongested steps without touching the LP solver; the result is
/// then exactly the LP optimum for the chosen pattern.
fn fast_path(p: &DispatchProblem, candidates: &[usize]) -> Option<DispatchSolution> {
    let (best_on, best) = if candidates.len() <= EXHAUSTIVE_CANDIDATE_LIMIT {
        // exhaustive over patterns: the cheapest relaxation, once its flows
        // check out below, is the exact optimum over all patterns
        let mut best: Option<(Vec<bool>, (Vec<f64>, f64, f64))> = None;
        for mask in 0..(1u64 << candidates.len()) {
            let mut on = vec![false; p.units.len()];
            for (k, &i) in candidates.iter().enumerate() {
                on[i] = mask & (1 << k) != 0;
            }
            if let Some(cp) = copper_plate(p, &on) {
                let better = match &best {
                    None => true,
                    Some((_, b)) => cp.2 < b.2 - 1e-9,
                };
                if better {
                    best = Some((on, cp));
                }
            }
        }
        best?
    } else {
        let mut best_on = greedy_pattern(p, candidates);
        let mut best = copper_plate(p, &best_on)?;
        for _ in 0..3 {
            let mut improved = false;
            for &i in candidates {
                let mut trial = best_on.clone();
                trial[i] = !trial[i];
                if let Some(cp) = copper_plate(p, &trial) {
                    if cp.2 < best.2 - 1e-9 {
                        best_on = trial;
                        best = cp;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (best_on, best)
    };
    let (output, total_shed, objective) = best;
    // proportional shed allocation (the relaxation carries no location)
    let demand = p.total_demand();
    let shed: Vec<f64> = p
        .loads
        .iter()
        .map(|l| {
            if demand > 0.0 {
                total_shed * l.demand / demand
            } else {
                0.0
            }
        })
        .collect();
    let mut injection = vec![0.0; p.n_buses];
    for (i, u) in p.units.iter().enumerate() {
        injection[u.bus] += output[i];
    }
    for (d, l) in p.loads.iter().enumerate() {
        injection[l.bus] -= l.demand - shed[d];
    }
    let angles = solve_angles(p, &injection)?;
    for line in &p.lines {
        let flow = p.base_mva / line.reactance * (angles[line.from] - angles[line.to]);
        if flow.abs() > line.limit + 1e-6 {
            return None; // congested: the relaxation is not attainable
        }
    }
    let committed: Vec<bool> = p
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| !u.curtailable && best_on[i] && u.committed_prev)
        .collect();
    Some(DispatchSolution {
        committed,
        output,
        shed,
        angles,
        objective,
        status: SolveStatus::Heuristic,
    })
}

/// Commit offline units (startup delay: they produce nothing this step) when
/// online capacity cannot cover the demand. Objective-neutral this step.
fn commit_offline_for_deficit(p: &DispatchProblem, sol: &mut DispatchSolution) {
    let online_cap: f64 = p
        .units
        .iter()
        .enumerate()
        .filter(|(i, u)| u.curtailable || sol.committed[*i])
        .map(|(_, u)| u.on_bounds().1)
        .sum();
    let mut deficit = p.total_demand() - online_cap;
    if deficit <= 0.0 {
        return;
    }
    let mut offline: Vec<usize> = (0..p.units.len())
        .filter(|&i| {
            let u = &p.units[i];
            !u.curtailable && !u.committed_prev && u.p_avail >= u.p_min && u.p_avail > 0.0
        })
        .collect();
    offline.sort_by(|&a, &b| {
        p.units[a]
            .cost
            .partial_cmp(&p.units[b].cost)
            .unwrap()
            .then_with(|| p.units[a].id.cmp(&p.units[b].id))
    });
    for i in offline {
        if deficit <= 0.0 {
            break;
        }
        sol.committed[i] = true;
        deficit -= p.units[i].p_avail;
    }
}

/// Default solve path: greedy commitment, LP dispatch, then single-flip
/// local search over the commitment pattern.
pub fn solve_dispatch(p: &DispatchProblem) -> DispatchSolution {
    let candidates = commitment_candidates(p);
    if let Some(mut sol) = fast_path(p, &candidates) {
        commit_offline_for_deficit(p, &mut sol);
        return sol;
    }
    let mut best: Option<DispatchSolution> = None;
    if candidates.len() <= EXHAUSTIVE_CANDIDATE_LIMIT {
        for mask in 0..(1u64 << candidates.len()) {
            let mut on = vec![false; p.units.len()];
            for (k, &i) in candidates.iter().enumerate() {
                on[i] = mask & (1 << k) != 0;
            }
            if let Some(sol) = solve_fixed_commitment(p, &on) {
                let better = match &best {
                    None => true,
                    Some(b) => sol.objective < b.objective - 1e-12,
                };
                if better {
                    best = Some(sol);
                }
            }
        }
    } else {
        // greedy start plus single-flip local search over the pattern
        let mut best_on = greedy_pattern(p, &candidates);
        let mut best_here = solve_fixed_commitment(p, &best_on);
        if best_here.is_none() {
            let off = vec![false; p.units.len()];
            best_here = solve_fixed_commitment(p, &off);
            best_on = off;
        }
        if let Some(mut best_sol) = best_here {
            for _ in 0..2 {
                let mut improved = false;
                for &i in &candidates {
                    let mut trial = best_on.clone();
                    trial[i] = !trial[i];
                    if let Some(sol) = solve_fixed_commitment(p, &trial) {
                        if sol.objective < best_sol.objective - 1e-9 {
                            best_on = trial;
                            best_sol = sol;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            best = Some(best_sol);
        }
    }
    let mut best_sol = match best {
        Some(s) => s,
        None => {
            // all-off is always representable: shed everything
            return DispatchSolution {
                committed: vec![false; p.units.len()],
                output: vec![0.0; p.units.len()],
                shed: p.loads.iter().map(|l| l.demand).collect(),
                angles: vec![0.0; p.n_buses],
                objective: p.weights.voll * p.total_demand(),
                status: SolveStatus::Infeasible,
            };
        }
    };
    commit_offline_for_deficit(p, &mut best_sol);
    rebalance_shed_within_buses(p, &mut best_sol);
    best_sol
}

/// Exhaustive commitment enumeration for fleets with at most `max_units`
/// dispatchable candidates. Returns None when the fleet is too large.
pub fn solve_dispatch_exact(p: &DispatchProblem, max_units: usize) -> Option<DispatchSolution> {
    let candidates = commitment_candidates(p);
    if candidates.len() > max_units {
        return None;
    }
    let mut best: Option<(Vec<bool>, DispatchSolution)> = None;
    for mask in 0..(1u64 << candidates.len()) {
        let mut on = vec![false; p.units.len()];
        for (k, &i) in candidates.iter().enumerate() {
            on[i] = mask & (1 << k) != 0;
        }
        if let Some(sol) = solve_fixed_commitment(p, &on) {
            let better = match &best {
                None => true,
                Some((_, b)) => sol.objective < b.objective - 1e-12,
            };
            if better {
                best = Some((on, sol));
            }
        }
    }
    let (_, mut sol) = best?;
    sol.status = SolveStatus::Optimal;
    commit_offline_for_deficit(p, &mut sol);
    rebalance_shed_within_buses(p, &mut sol);
    Some(sol)
}

/// Shedding at one bus is interchangeable between the feeders it serves;
/// reallocate each bus's total shed proportionally to feeder net demand so
/// the allocation is deterministic.
fn rebalance_shed_within_buses(p: &DispatchProblem, sol: &mut DispatchSolution) {
    for b in 0..p.n_buses {
        let idx: Vec<usize> = (0..p.loads.len()).filter(|&d| p.loads[d].bus == b).collect();
        if idx.len() < 2 {
            continue;
        }
        let total_shed: f64 = idx.iter().map(|&d| sol.shed[d]).sum();
        let total_demand: f64 = idx.iter().map(|&d| p.loads[d].demand).sum();
        if total_demand <= 0.0 {
            continue;
        }
        for &d in &idx {
            sol.shed[d] = total_shed * p.loads[d].demand / total_demand;
        }
    }
}

/// Standalone feasibility checker, independent of the solver path.
pub fn check_solution(p: &DispatchProblem, sol: &DispatchSolution, tol: f64) -> Result<(), String> {
    for (i, u) in p.units.iter().enumerate() {
        let out = sol.output[i];
        if u.curtailable {
            if out < -tol || out > u.p_avail + tol {
                return Err(format!("unit {} output {out} outside [0, {}]", u.id, u.p_avail));
            }
            continue;
        }
        if sol.committed[i] && u.committed_prev {
            let (lo, hi) = u.on_bounds();
            if out < lo - tol || out > hi + tol {
                return Err(format!("unit {} output {out} outside [{lo}, {hi}]", u.id));
            }
        } else if out.abs() > tol {
            return Err(format!("offline unit {} has nonzero output {out}", u.id));
        }
    }
    let mut injection = vec![0.0; p.n_buses];
    for (i, u) in p.units.iter().enumerate() {
        injection[u.bus] += sol.output[i];
    }
    for (d, l) in p.loads.iter().enumerate() {
        if sol.shed[d] < -tol || sol.shed[d] > l.demand + tol {
            return Err(format!("load {} shed {} outside [0, {}]", l.id, sol.shed[d], l.demand));
        }
        injection[l.bus] -= l.demand - sol.shed[d];
    }
    for line in &p.lines {
        let flow = p.base_mva / line.reactance * (sol.angles[line.from] - sol.angles[line.to]);
        if flow.abs() > line.limit + tol.max(1e-6) {
            return Err(format!("line {} flow {flow} exceeds limit {}", line.id, line.limit));
        }
        injection[line.from] -= flow;
        injection[line.to] += flow;
    }
    for (b, r) in injection.iter().enumerate() {
        if r.abs() > BALANCE_TOL_MW.max(tol) {
            return Err(format!("bus {b} balance residual {r}"));
        }
    }
    Ok(())
}

/// Previous-step dispatch used for ramp coupling.
#[derive(Debug, Clone, Default)]
pub struct PrevDispatch {
    /// generator id -> (committed, output MW)
    pub by_gen: HashMap<String, (bool, f64)>,
}

/// Assemble the sub-grid problem from grid data, availability, and the
/// previous step. BTM output is netted into feeder demand (floored at zero;
/// surplus is spilled, never exported).
#[allow(clippy::too_many_arguments)]
pub fn build_problem(
    grid: &GridModel,
    sub: &SubGrid,
    damage: &DamageState,
    availability: &HashMap<String, f64>,
    prev: Option<&PrevDispatch>,
    weights: CostWeights,
    dt_minutes: f64,
    feeder_demand: &[f64],
) -> (DispatchProblem, Vec<usize>, Vec<usize>) {
    let mut bus_local: HashMap<usize, usize> = HashMap::new();
    let bus_index = grid.bus_index();
    let mut bus_ids = Vec::new();
    for &b in &sub.buses {
        bus_local.insert(b, bus_ids.len());
        bus_ids.push(b);
    }
    let slack = sub.slack_bus.map(|b| bus_local[&b]).unwrap_or(0);

    let mut units = Vec::new();
    let mut unit_gen_indices = Vec::new();
    for &gi in &sub.generators {
        let g = &grid.generators[gi];
        if g.kind == GeneratorKind::BtmSolar {
            continue; // netted into feeder demand
        }
        let p_avail = availability.get(&g.id).copied().unwrap_or(0.0);
        let (committed_prev, p_prev, ramp_mw) = match prev {
            None => (g.available, 0.0, f64::INFINITY),
            Some(pd) => {
                let (c, out) = pd.by_gen.get(&g.id).copied().unwrap_or((false, 0.0));
                (c, out, g.ramp_rate * dt_minutes / 1.0)
            }
        };
        units.push(DispatchUnit {
            id: g.id.clone(),
            bus: bus_local[&bus_index[g.bus.as_str()]],
            p_min: g.p_min,
            p_avail,
            ramp_mw,
            cost: g.marginal_cost,
            p_prev,
            committed_prev,
            curtailable: !g.kind.is_synchronous(),
        });
        unit_gen_indices.push(gi);
    }

    let mut loads = Vec::new();
    let mut load_feeder_indices = Vec::new();
    for &fi in &sub.feeders {
        let f = &grid.feeders[fi];
        if damage.is_failed(&f.id) {
            continue;
        }
        let gross = feeder_demand[fi];
        let btm = availability.get(&f.btm_unit_id()).copied().unwrap_or(0.0);
        let net = (gross - btm).max(0.0);
        loads.push(DispatchLoad {
            id: f.id.clone(),
            bus: bus_local[&bus_index[f.substation_bus.as_str()]],
            demand: net,
        });
        load_feeder_indices.push(fi);
    }

    let lines = sub
        .lines
        .iter()
        .map(|&li| {
            let l = &grid.lines[li];
            DispatchLine {
                id: l.id.clone(),
                from: bus_local[&bus_index[l.from_bus.as_str()]],
                to: bus_local[&bus_index[l.to_bus.as_str()]],
                reactance: l.reactance,
                limit: l.emergency_rating,
            }
        })
        .collect();

    (
        DispatchProblem {
            n_buses: bus_ids.len(),
            slack,
            units,
            loads,
            lines,
            base_mva: grid.system_base,
            weights,
        },
        unit_gen_indices,
        load_feeder_indices,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, bus: usize, p_min: f64, p_avail: f64, cost: f64) -> DispatchUnit {
        DispatchUnit {
            id: id.into(),
            bus,
            p_min,
            p_avail,
            ramp_mw: f64::INFINITY,
            cost,
            p_prev: 0.0,
            committed_prev: true,
            curtailable: false,
        }
    }

    fn load(id: &str, bus: usize, demand: f64) -> DispatchLoad {
        DispatchLoad {
            id: id.into(),
            bus,
            demand,
        }
    }

    fn single_bus(units: Vec<DispatchUnit>, loads: Vec<DispatchLoad>) -> DispatchProblem {
        DispatchProblem {
            n_buses: 1,
            slack: 0,
            units,
            loads,
            lines: Vec::new(),
            base_mva: 100.0,
            weights: CostWeights::default(),
        }
    }

    #[test]
    fn adequate_copper_plate_sheds_nothing() {
        let p = single_bus(
            vec![unit("g1", 0, 0.0, 150.0, 20.0)],
            vec![load("f1", 0, 100.0)],
        );
        let sol = solve_dispatch(&p);
        assert!(sol.total_shed().abs() < 1e-9);
        assert!((sol.output[0] - 100.0).abs() < 1e-9);
        check_solution(&p, &sol, 1e-7).unwrap();
    }

    #[test]
    fn deficit_equals_shedding_when_unconstrained() {
        let p = single_bus(
            vec![unit("g1", 0, 0.0, 70.0, 20.0)],
            vec![load("f1", 0, 100.0)],
        );
        let sol = solve_dispatch(&p);
        assert!((sol.total_shed() - 30.0).abs() < 1e-9);
        check_solution(&p, &sol, 1e-7).unwrap();
    }

    #[test]
    fn congested_import_sheds_the_difference() {
        // generation pocket feeding an 80 MW load through a 50 MW line, with
        // 20 MW of local generation at the load: shed exactly 10 MW
        let p = DispatchProblem {
            n_buses: 2,
            slack: 0,
            units: vec![unit("big", 0, 0.0, 500.0, 10.0), unit("local", 1, 0.0, 20.0, 30.0)],
            loads: vec![load("f1", 1, 80.0)],
            lines: vec![DispatchLine {
                id: "tie".into(),
                from: 0,
                to: 1,
                reactance: 0.1,
                limit: 50.0,
            }],
            base_mva: 100.0,
            weights: CostWeights::default(),
        };
        let sol = solve_dispatch(&p);
        assert!((sol.total_shed() - 10.0).abs() < 1e-6, "shed {}", sol.total_shed());
        check_solution(&p, &sol, 1e-6).unwrap();
        // LP oracle: the exact path agrees
        let exact = solve_dispatch_exact(&p, 12).unwrap();
        assert!((exact.objective - sol.objective).abs() <= 1e-6 * exact.objective.abs().max(1.0));
    }

    #[test]
    fn proportional_shed_within_a_bus() {
        let p = single_bus(
            vec![unit("g1", 0, 0.0, 70.0, 20.0)],
            vec![load("f1", 0, 60.0), load("f2", 0, 40.0)],
        );
        let sol = solve_dispatch(&p);
        assert!((sol.total_shed() - 30.0).abs() < 1e-9);
        assert!((sol.shed[0] - 18.0).abs() < 1e-9);
        assert!((sol.shed[1] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn renewables_are_curtailed_before_load_is_shed() {
        let mut wind = unit("w1", 0, 0.0, 80.0, 0.0);
        wind.curtailable = true;
        let p = single_bus(
            vec![unit("g1", 0, 40.0, 100.0, 20.0), wind],
            vec![load("f1", 0, 100.0)],
        );
        let sol = solve_dispatch(&p);
        assert!(sol.total_shed().abs() < 1e-9);
        // thermal at its floor, wind supplying the rest
        assert!((sol.output[0] - 40.0).abs() < 1e-9);
        assert!((sol.output[1] - 60.0).abs() < 1e-9);
        check_solution(&p, &sol, 1e-7).unwrap();
    }

    #[test]
    fn over_commitment_is_resolved_by_decommitting() {
        // both units previously on; the expensive one's floor forces
        // over-generation unless it is switched off
        let mut a = unit("a", 0, 0.0, 100.0, 10.0);
        a.p_prev = 50.0;
        let mut b = unit("b", 0, 60.0, 100.0, 50.0);
        b.p_prev = 60.0;
        let mut p = single_bus(vec![a, b], vec![load("f1", 0, 50.0)]);
        p.units[0].ramp_mw = f64::INFINITY;
        p.units[1].ramp_mw = f64::INFINITY;
        let sol = solve_dispatch(&p);
        assert!(sol.committed[0]);
        assert!(!sol.committed[1]);
        assert!((sol.output[0] - 50.0).abs() < 1e-9);
        check_solution(&p, &sol, 1e-7).unwrap();
    }

    #[test]
    fn startup_delay_commits_but_does_not_generate() {
        let mut cold = unit("cold", 0, 10.0, 100.0, 5.0);
        cold.committed_prev = false;
        let p = single_bus(
            vec![unit("hot", 0, 0.0, 30.0, 20.0), cold],
            vec![load("f1", 0, 80.0)],
        );
        let sol = solve_dispatch(&p);
        // deficit of 50 -> the cold unit is committed for next step
        assert!(sol.committed[1]);
        assert_eq!(sol.output[1], 0.0);
        assert!((sol.total_shed() - 50.0).abs() < 1e-9);
        check_solution(&p, &sol, 1e-7).unwrap();
    }

    #[test]
    fn first_step_relaxes_ramps() {
        let u = DispatchUnit {
            id: "g".into(),
            bus: 0,
            p_min: 0.0,
            p_avail: 200.0,
            ramp_mw: f64::INFINITY,
            cost: 10.0,
            p_prev: 0.0,
            committed_prev: true,
            curtailable: false,
        };
        let (lo, hi) = u.on_bounds();
        assert_eq!((lo, hi), (0.0, 200.0));
    }

    #[test]
    fn ramp_limits_bind_between_steps() {
        let mut g = unit("g", 0, 0.0, 200.0, 10.0);
        g.p_prev = 100.0;
        g.ramp_mw = 20.0;
        let p = single_bus(vec![g], vec![load("f1", 0, 150.0)]);
        let sol = solve_dispatch(&p);
        assert!((sol.output[0] - 120.0).abs() < 1e-9);
        assert!((sol.total_shed() - 30.0).abs() < 1e-9);
        check_solution(&p, &sol, 1e-7).unwrap();
    }

    #[test]
    fn exact_path_matches_heuristic_on_small_fleets() {
        let p = single_bus(
            vec![
                unit("a", 0, 20.0, 80.0, 12.0),
                unit("b", 0, 0.0, 60.0, 25.0),
                unit("c", 0, 30.0, 90.0, 8.0),
            ],
            vec![load("f1", 0, 120.0)],
        );
        let h = solve_dispatch(&p);
        let e = solve_dispatch_exact(&p, 12).unwrap();
        assert!(
            (h.objective - e.objective).abs() <= 1e-6 * e.objective.abs().max(1.0),
            "heuristic {} vs exact {}",
            h.objective,
            e.objective
        );
        check_solution(&p, &h, 1e-7).unwrap();
        check_solution(&p, &e, 1e-7).unwrap();
    }

    #[test]
    fn objective_monotone_in_demand() {
        let mk = |d: f64| {
            single_bus(
                vec![unit("a", 0, 10.0, 80.0, 12.0), unit("b", 0, 0.0, 60.0, 25.0)],
                vec![load("f1", 0, d)],
            )
        };
        let mut last = f64::NEG_INFINITY;
        for d in [20.0, 50.0, 90.0, 130.0, 180.0] {
            let obj = solve_dispatch_exact(&mk(d), 12).unwrap().objective;
            assert!(obj >= last - 1e-9, "objective decreased at demand {d}");
            last = obj;
        }
    }
}
