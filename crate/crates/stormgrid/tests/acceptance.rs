//! End-to-end acceptance suite. Each test covers one release criterion and
//! prints a single PASS/FAIL line (visible with `--nocapture`); tolerances
//! are pinned as constants below.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};

use stormgrid::dispatch::{
    check_solution, solve_dispatch, solve_dispatch_exact, CostWeights, DispatchLine, DispatchLoad,
    DispatchProblem, DispatchUnit, SolveStatus,
};
use stormgrid::ensemble::{
    critical_index, run_ensemble, sensitivity_sweep, store_results, EnsembleInputs,
};
use stormgrid::fragility::{sample_resistances, DamageState};
use stormgrid::geo::GeoPoint;
use stormgrid::grid::{Bus, Feeder, Generator, GeneratorKind, GridModel, Line};
use stormgrid::hazard::{RoughnessMap, StormTrack};
use stormgrid::network::{cascade, dc_power_flow, max_rocof, SubGrid, TripRule};
use stormgrid::seed::{component_uniform, realization_seed, SplitMix};
use stormgrid::sim::{
    build_hazard_table, largest_failure, run_realization_assigned, run_realization_with_table,
    SimParams,
};
use stormgrid::testbed::{default_fragility, default_track, large_100, solar_heavy_30, toy_radial};

// criterion 1
const ROCOF_REL_TOL: f64 = 1e-12;
const ROCOF_WORKED_TOL: f64 = 1e-6;
const ROCOF_BUDGET: Duration = Duration::from_secs(1);
// criterion 2
const FLOW_ORACLE_TOL_MW: f64 = 1e-8;
const FLOW_RESIDUAL_TOL: f64 = 1e-9; // x system base
const FLOW_BUDGET: Duration = Duration::from_secs(10);
// criterion 3
const KS_TOL: f64 = 0.02;
const KS_SAMPLES: usize = 10_000;
// criterion 4
const DISPATCH_REL_TOL: f64 = 1e-6;
const DISPATCH_BUDGET: Duration = Duration::from_secs(60);
// criterion 7
const SWEEP_BUDGET: Duration = Duration::from_secs(600);
// criterion 8
const THROUGHPUT_BUDGET: Duration = Duration::from_secs(300);

fn report(criterion: u32, name: &str, errs: &[String]) {
    let verdict = if errs.is_empty() { "PASS" } else { "FAIL" };
    println!("[criterion {criterion}] {name}: {verdict}");
    assert!(errs.is_empty(), "criterion {criterion} failed: {errs:#?}");
}

fn params_139() -> SimParams {
    SimParams {
        start: Utc.with_ymd_and_hms(2022, 9, 18, 0, 0, 0).unwrap(),
        steps: 139,
        step_minutes: 10,
        wind: Default::default(),
        solar: Default::default(),
        diurnal: Default::default(),
        rocof_limit: 2.0,
        weights: Default::default(),
        trip_rule: Default::default(),
        f0_hz: 60.0,
    }
}

#[test]
fn criterion_1_rocof_exactness() {
    let t0 = Instant::now();
    let mut errs = Vec::new();
    let mut rng = SplitMix::new(1);
    for case in 0..1000 {
        let f0 = 45.0 + 20.0 * rng.next_f64();
        let dp = 1000.0 * (rng.next_f64() - 0.5);
        let fleet: Vec<(f64, f64)> = (0..1 + (rng.next_u64() % 6) as usize)
            .map(|_| (1.0 + 9.0 * rng.next_f64(), 10.0 + 990.0 * rng.next_f64()))
            .collect();
        let direct = f0 * dp / fleet.iter().map(|(h, p)| 2.0 * h * p).sum::<f64>();
        let got = max_rocof(dp, f0, &fleet);
        let rel = (got - direct).abs() / direct.abs().max(f64::MIN_POSITIVE);
        if rel > ROCOF_REL_TOL {
            errs.push(format!("case {case}: relative error {rel:.3e}"));
        }
    }
    // worked case: 60 Hz, -120 MW, fleet inertia 2*(5*600 + 4*400) = 9200 MW.s
    let worked = max_rocof(-120.0, 60.0, &[(5.0, 600.0), (4.0, 400.0)]);
    if (worked - (-0.782609)).abs() > ROCOF_WORKED_TOL {
        errs.push(format!("worked case returned {worked}"));
    }
    let elapsed = t0.elapsed();
    if elapsed > ROCOF_BUDGET {
        errs.push(format!("runtime {elapsed:?} over budget {ROCOF_BUDGET:?}"));
    }
    report(1, "frequency screen matches direct evaluation", &errs);
}

fn bus(id: &str) -> Bus {
    Bus {
        id: id.into(),
        name: id.into(),
        lat: 18.0,
        lon: -66.0,
        voltage_class: 115.0,
        region: "r".into(),
    }
}

fn line(id: &str, from: &str, to: &str, x: f64, rating: f64, emergency: f64) -> Line {
    Line {
        id: id.into(),
        from_bus: from.into(),
        to_bus: to.into(),
        reactance: x,
        rating,
        emergency_rating: emergency,
        span_points: vec![GeoPoint::new(18.0, -66.0), GeoPoint::new(18.1, -66.1)],
    }
}

fn thermal(id: &str, bus: &str, p_max: f64) -> Generator {
    Generator {
        id: id.into(),
        bus: bus.into(),
        kind: GeneratorKind::Thermal,
        p_max,
        p_min: 0.0,
        ramp_rate: p_max,
        inertia_h: 5.0,
        marginal_cost: 10.0,
        available: true,
    }
}

fn feeder(id: &str, bus: &str, peak: f64) -> Feeder {
    Feeder {
        id: id.into(),
        substation_bus: bus.into(),
        peak_demand: peak,
        demand_shape: vec![1.0],
        customers: 1000,
        btm_solar_capacity: 0.0,
        route_points: vec![GeoPoint::new(18.0, -66.0), GeoPoint::new(18.1, -66.0)],
    }
}

/// Random connected network: spanning tree plus extra chords.
fn random_network(rng: &mut SplitMix, max_buses: usize) -> (GridModel, Vec<f64>) {
    let n = 2 + (rng.next_u64() as usize) % (max_buses - 1);
    let buses: Vec<Bus> = (0..n).map(|i| bus(&format!("b{i}"))).collect();
    let mut lines = Vec::new();
    for i in 1..n {
        let parent = (rng.next_u64() as usize) % i;
        lines.push(line(
            &format!("t{i}"),
            &format!("b{parent}"),
            &format!("b{i}"),
            0.05 + 0.25 * rng.next_f64(),
            100.0,
            120.0,
        ));
    }
    let extra = (rng.next_u64() as usize) % (n + 1);
    for k in 0..extra {
        let a = (rng.next_u64() as usize) % n;
        let b = (rng.next_u64() as usize) % n;
        if a != b {
            lines.push(line(
                &format!("c{k}"),
                &format!("b{a}"),
                &format!("b{b}"),
                0.05 + 0.25 * rng.next_f64(),
                100.0,
                120.0,
            ));
        }
    }
    // zero-sum injections with the slack (bus 0) balancing the rest
    let mut inj: Vec<f64> = (0..n).map(|_| 200.0 * (rng.next_f64() - 0.5)).collect();
    inj[0] = -inj[1..].iter().sum::<f64>();
    let grid = GridModel {
        buses,
        lines,
        generators: vec![thermal("g0", "b0", 500.0)],
        feeders: vec![feeder("f1", &format!("b{}", n - 1), 50.0)],
        system_base: 100.0,
        rated_frequency: 60.0,
    };
    (grid, inj)
}

fn whole_grid_subgrid(grid: &GridModel) -> SubGrid {
    SubGrid {
        buses: (0..grid.buses.len()).collect(),
        lines: (0..grid.lines.len()).collect(),
        generators: (0..grid.generators.len()).collect(),
        feeders: (0..grid.feeders.len()).collect(),
        slack_bus: Some(0),
        functional: true,
    }
}

/// Independent oracle: assemble the reduced susceptance system and solve it
/// with plain Gaussian elimination with partial pivoting (no nalgebra).
fn oracle_flows(grid: &GridModel, inj: &[f64]) -> HashMap<usize, f64> {
    let n = grid.buses.len();
    let idx: HashMap<&str, usize> = grid
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let m = n - 1; // slack is bus 0
    let mut a = vec![vec![0.0f64; m]; m];
    let mut p = vec![0.0f64; m];
    for (i, v) in inj.iter().enumerate().skip(1) {
        p[i - 1] = v / grid.system_base;
    }
    for l in &grid.lines {
        let i = idx[l.from_bus.as_str()];
        let j = idx[l.to_bus.as_str()];
        let b = 1.0 / l.reactance;
        if i > 0 {
            a[i - 1][i - 1] += b;
        }
        if j > 0 {
            a[j - 1][j - 1] += b;
        }
        if i > 0 && j > 0 {
            a[i - 1][j - 1] -= b;
            a[j - 1][i - 1] -= b;
        }
    }
    // forward elimination with partial pivoting
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        p.swap(col, pivot);
        for row in col + 1..m {
            let factor = a[row][col] / a[col][col];
            for k in col..m {
                a[row][k] -= factor * a[col][k];
            }
            p[row] -= factor * p[col];
        }
    }
    let mut theta = vec![0.0f64; m];
    for row in (0..m).rev() {
        let mut acc = p[row];
        for k in row + 1..m {
            acc -= a[row][k] * theta[k];
        }
        theta[row] = acc / a[row][row];
    }
    let angle = |b: usize| if b == 0 { 0.0 } else { theta[b - 1] };
    grid.lines
        .iter()
        .enumerate()
        .map(|(li, l)| {
            let i = idx[l.from_bus.as_str()];
            let j = idx[l.to_bus.as_str()];
            (li, (angle(i) - angle(j)) / l.reactance * grid.system_base)
        })
        .collect()
}

#[test]
fn criterion_2_dc_flow_oracle_equivalence() {
    let t0 = Instant::now();
    let mut errs = Vec::new();
    let mut rng = SplitMix::new(2);
    for case in 0..200 {
        let (grid, inj) = random_network(&mut rng, 20);
        let sub = whole_grid_subgrid(&grid);
        let inj_map: HashMap<usize, f64> = inj.iter().copied().enumerate().collect();
        let sol = match dc_power_flow(&grid, &sub, &inj_map) {
            Ok(s) => s,
            Err(e) => {
                errs.push(format!("case {case}: solve failed: {e}"));
                continue;
            }
        };
        let oracle = oracle_flows(&grid, &inj);
        for (li, flow) in &sol.flows {
            if (flow - oracle[li]).abs() > FLOW_ORACLE_TOL_MW {
                errs.push(format!(
                    "case {case} line {li}: {flow} vs oracle {}",
                    oracle[li]
                ));
            }
        }
        // nodal balance at every non-slack bus
        let idx = grid.bus_index();
        for (b, bref) in grid.buses.iter().enumerate().skip(1) {
            let mut net = inj[b];
            for (li, l) in grid.lines.iter().enumerate() {
                if idx[l.from_bus.as_str()] == b {
                    net -= sol.flows[&li];
                }
                if idx[l.to_bus.as_str()] == b {
                    net += sol.flows[&li];
                }
            }
            if net.abs() > FLOW_RESIDUAL_TOL * grid.system_base {
                errs.push(format!("case {case} bus {}: residual {net:.3e}", bref.id));
            }
        }
    }
    // equal-reactance triangle: 90 MW from b0 to b1 splits 60 direct / 30+30
    let grid = GridModel {
        buses: vec![bus("b0"), bus("b1"), bus("b2")],
        lines: vec![
            line("l01", "b0", "b1", 0.1, 100.0, 120.0),
            line("l02", "b0", "b2", 0.1, 100.0, 120.0),
            line("l21", "b2", "b1", 0.1, 100.0, 120.0),
        ],
        generators: vec![thermal("g0", "b0", 200.0)],
        feeders: vec![feeder("f1", "b1", 90.0)],
        system_base: 100.0,
        rated_frequency: 60.0,
    };
    let sub = whole_grid_subgrid(&grid);
    let inj = HashMap::from([(0, 90.0), (1, -90.0)]);
    let sol = dc_power_flow(&grid, &sub, &inj).unwrap();
    for (li, want) in [(0usize, 60.0), (1, 30.0), (2, 30.0)] {
        if (sol.flows[&li] - want).abs() > 1e-9 {
            errs.push(format!("triangle line {li}: {} != {want}", sol.flows[&li]));
        }
    }
    let elapsed = t0.elapsed();
    if elapsed > FLOW_BUDGET {
        errs.push(format!("runtime {elapsed:?} over budget {FLOW_BUDGET:?}"));
    }
    report(2, "dc power flow matches independent dense solve", &errs);
}

#[test]
fn criterion_3_fragility_sampling() {
    let mut errs = Vec::new();
    let curves = default_fragility();
    for (class, curve) in &curves.curves {
        // sample through the same substream path the simulator uses
        let mut resistances: Vec<f64> = (0..KS_SAMPLES)
            .map(|i| curve.resistance_at(component_uniform(3, &format!("{}-{i}", class.token()))))
            .collect();
        resistances.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = resistances.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, r) in resistances.iter().enumerate() {
            let f = curve.cdf(*r);
            ks = ks.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
        }
        if ks >= KS_TOL {
            errs.push(format!("{}: KS distance {ks:.4}", class.token()));
        }
        if curve.resistance_at(0.5) != curve.median_ms {
            errs.push(format!("{}: u=0.5 is not the exact median", class.token()));
        }
    }
    if curves.curves.len() != 5 {
        errs.push("expected five component classes".into());
    }
    report(3, "resistance sampling reproduces the fragility curves", &errs);
}

/// Random dispatch instance over a chain network, at most 12 units.
fn random_dispatch_problem(rng: &mut SplitMix) -> DispatchProblem {
    let n_buses = 2 + (rng.next_u64() as usize) % 4;
    let n_units = 1 + (rng.next_u64() as usize) % 12;
    let units: Vec<DispatchUnit> = (0..n_units)
        .map(|k| {
            let p_min = if rng.next_f64() < 0.5 {
                0.0
            } else {
                5.0 + 15.0 * rng.next_f64()
            };
            let p_avail = p_min + 10.0 + 90.0 * rng.next_f64();
            let committed_prev = rng.next_f64() < 0.7;
            let p_prev = if committed_prev {
                p_min + (p_avail - p_min) * rng.next_f64()
            } else {
                0.0
            };
            DispatchUnit {
                id: format!("g{k}"),
                bus: (rng.next_u64() as usize) % n_buses,
                p_min,
                p_avail,
                ramp_mw: if rng.next_f64() < 0.3 {
                    5.0 + 20.0 * rng.next_f64()
                } else {
                    1e9
                },
                cost: 5.0 + 45.0 * rng.next_f64(),
                p_prev,
                committed_prev,
                curtailable: rng.next_f64() < 0.4,
            }
        })
        .collect();
    let loads: Vec<DispatchLoad> = (0..n_buses)
        .map(|b| DispatchLoad {
            id: format!("d{b}"),
            bus: b,
            demand: 80.0 * rng.next_f64(),
        })
        .collect();
    let lines: Vec<DispatchLine> = (1..n_buses)
        .map(|b| DispatchLine {
            id: format!("l{b}"),
            from: b - 1,
            to: b,
            reactance: 0.1,
            limit: if rng.next_f64() < 0.3 {
                40.0 + 60.0 * rng.next_f64()
            } else {
                1e6
            },
        })
        .collect();
    DispatchProblem {
        n_buses,
        slack: units[0].bus,
        units,
        loads,
        lines,
        base_mva: 100.0,
        weights: CostWeights::default(),
    }
}

#[test]
fn criterion_4_dispatch_matches_exhaustive_enumeration() {
    let t0 = Instant::now();
    let mut errs = Vec::new();
    let mut rng = SplitMix::new(4);
    for case in 0..100 {
        let p = random_dispatch_problem(&mut rng);
        let heuristic = solve_dispatch(&p);
        if heuristic.status == SolveStatus::Infeasible {
            errs.push(format!("case {case}: heuristic infeasible"));
            continue;
        }
        if let Err(e) = check_solution(&p, &heuristic, 1e-6) {
            errs.push(format!("case {case}: checker rejected heuristic: {e}"));
        }
        let exact = match solve_dispatch_exact(&p, 12) {
            Some(s) => s,
            None => {
                errs.push(format!("case {case}: exact enumeration failed"));
                continue;
            }
        };
        if let Err(e) = check_solution(&p, &exact, 1e-6) {
            errs.push(format!("case {case}: checker rejected exact: {e}"));
        }
        let rel = (heuristic.objective - exact.objective).abs() / exact.objective.abs().max(1.0);
        if rel > DISPATCH_REL_TOL {
            errs.push(format!(
                "case {case}: heuristic {} vs exact {} (rel {rel:.3e})",
                heuristic.objective, exact.objective
            ));
        }
        // adequate, unconstrained variant of the same instance sheds nothing
        let mut easy = p.clone();
        for l in &mut easy.lines {
            l.limit = 1e9;
        }
        for u in &mut easy.units {
            u.ramp_mw = 1e9;
            u.p_min = 0.0;
            u.committed_prev = true;
        }
        let capacity: f64 = easy.units.iter().map(|u| u.p_avail).sum();
        if capacity >= easy.total_demand() {
            let sol = solve_dispatch(&easy);
            if sol.total_shed() > 1e-6 {
                errs.push(format!(
                    "case {case}: adequate instance shed {}",
                    sol.total_shed()
                ));
            }
        }
    }
    let elapsed = t0.elapsed();
    if elapsed > DISPATCH_BUDGET {
        errs.push(format!("runtime {elapsed:?} over budget {DISPATCH_BUDGET:?}"));
    }
    report(4, "dispatch heuristic matches exhaustive commitment", &errs);
}

#[test]
fn criterion_5_cascade_fixed_point() {
    let mut errs = Vec::new();
    // hand-computed sequence: three equal parallel lines at 30 MW each; one
    // exogenous failure pushes the survivors to 45 > 40 and both trip at once
    let grid = GridModel {
        buses: vec![bus("b0"), bus("b1")],
        lines: vec![
            line("la", "b0", "b1", 0.1, 40.0, 40.0),
            line("lb", "b0", "b1", 0.1, 40.0, 40.0),
            line("lc", "b0", "b1", 0.1, 40.0, 40.0),
        ],
        generators: vec![thermal("g0", "b0", 200.0)],
        feeders: vec![feeder("f1", "b1", 90.0)],
        system_base: 100.0,
        rated_frequency: 60.0,
    };
    let inj = HashMap::from([(0, 90.0), (1, -90.0)]);
    let mut rng = SplitMix::new(5);
    let mut damage = DamageState::default();
    let quiet = cascade(
        &grid,
        &mut damage,
        &[true],
        &[90.0],
        &inj,
        &TripRule::default(),
        &mut rng,
        0,
    );
    if !quiet.tripped.is_empty() {
        errs.push("cascade tripped lines at 30/30/30".into());
    }
    damage.fail("la", 1);
    let out = cascade(
        &grid,
        &mut damage,
        &[true],
        &[90.0],
        &inj,
        &TripRule::default(),
        &mut rng,
        1,
    );
    let mut tripped: Vec<usize> = out.tripped.iter().map(|(li, _)| *li).collect();
    tripped.sort_unstable();
    if tripped != vec![1, 2] || !out.tripped.iter().all(|(_, it)| *it == 1) {
        errs.push(format!("trip sequence {:?}", out.tripped));
    }
    // 500 randomized damage scenarios terminate within |lines| iterations
    for case in 0..500 {
        let (g, inj_vec) = random_network(&mut rng, 20);
        let mut damage = DamageState::default();
        for l in &g.lines {
            if rng.next_f64() < 0.2 {
                damage.fail(&l.id, 0);
            }
        }
        let inj_map: HashMap<usize, f64> = inj_vec.iter().copied().enumerate().collect();
        let feeder_demand = vec![50.0; g.feeders.len()];
        let out = cascade(
            &g,
            &mut damage,
            &[true],
            &feeder_demand,
            &inj_map,
            &TripRule::default(),
            &mut rng,
            1,
        );
        if let Some((_, worst)) = out.tripped.iter().max_by_key(|(_, it)| *it) {
            if *worst > g.lines.len() {
                errs.push(format!("case {case}: {worst} iterations"));
            }
        }
    }
    report(5, "overload cascade reaches the hand-computed fixed point", &errs);
}

#[test]
fn criterion_6_ensemble_determinism_across_workers() {
    let mut errs = Vec::new();
    let grid = solar_heavy_30(139);
    let params = params_139();
    let curves = default_fragility();
    let table = build_hazard_table(&grid, &default_track(), &RoughnessMap::uniform(0.03), &params)
        .unwrap();
    let inputs = EnsembleInputs {
        grid: &grid,
        table: &table,
        curves: &curves,
        params: &params,
    };
    let mut renders: Vec<String> = Vec::new();
    for workers in [1usize, 4, 8, 1] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap();
        let (results, summary) = pool.install(|| run_ensemble(&inputs, 50, 20220918));
        renders.push(serde_json::to_string(&(results, summary)).unwrap());
    }
    for (i, r) in renders.iter().enumerate().skip(1) {
        if r != &renders[0] {
            errs.push(format!("render {i} differs from worker-count-1 baseline"));
        }
    }
    report(6, "ensembles are bitwise identical across worker counts", &errs);
}

#[test]
fn criterion_7_qualitative_patterns() {
    let t0 = Instant::now();
    let mut errs = Vec::new();
    let grid = solar_heavy_30(139);
    let params = params_139();
    let curves = default_fragility();
    let roughness = RoughnessMap::uniform(0.03);
    let track = default_track();
    let table = build_hazard_table(&grid, &track, &roughness, &params).unwrap();
    let n = 200usize;
    let master = 20220918u64;

    // (a) blackout probability non-decreasing in integration level within 1 SE
    let profile: Vec<f64> = (0..params.steps)
        .map(|t| params.diurnal.value(params.time_at(t)))
        .collect();
    let levels = [0.1, 0.3, 0.5, 0.7];
    let (rows, _) = sensitivity_sweep(
        &grid, &table, &track, &roughness, &curves, &params, &profile, &levels, n, master,
    )
    .unwrap();
    for w in rows.windows(2) {
        let (p0, p1) = (w[0].blackout_probability, w[1].blackout_probability);
        let se = ((p0 * (1.0 - p0) + p1 * (1.0 - p1)) / n as f64).sqrt();
        if p1 < p0 - se {
            errs.push(format!(
                "sweep decreased {p0:.3} -> {p1:.3} (level {} -> {}, se {se:.3})",
                w[0].level, w[1].level
            ));
        }
    }
    println!(
        "  sweep blackout probabilities: {:?}",
        rows.iter()
            .map(|r| (r.level, r.blackout_probability))
            .collect::<Vec<_>>()
    );

    // (b) x1.2 vmax does not increase mean final performance (paired seeds)
    let mut strong_points = track.points.clone();
    for p in &mut strong_points {
        p.vmax *= 1.2;
    }
    let strong_track = StormTrack::new(strong_points).unwrap();
    let strong_table = build_hazard_table(&grid, &strong_track, &roughness, &params).unwrap();
    let mean_final = |table| -> f64 {
        (0..n)
            .map(|i| {
                let seed = realization_seed(master, i as u64);
                let r = run_realization_with_table(&grid, table, &curves, &params, seed).unwrap();
                *r.trajectory.last().unwrap()
            })
            .sum::<f64>()
            / n as f64
    };
    let base_perf = mean_final(&table);
    let strong_perf = mean_final(&strong_table);
    println!("  mean final performance: base {base_perf:.4}, x1.2 vmax {strong_perf:.4}");
    if strong_perf > base_perf + 1e-12 {
        errs.push(format!(
            "stronger storm improved performance: {base_perf} -> {strong_perf}"
        ));
    }

    // (c) preset-resistance harness: reinforce the weakest 1% / 10% of
    // components to near the top of their class and report probability deltas
    let blackout_prob = |reinforce_frac: Option<f64>| -> f64 {
        let blackouts = (0..n)
            .filter(|&i| {
                let seed = realization_seed(master, i as u64);
                let mut assignment = sample_resistances(&grid, &curves, seed).unwrap();
                if let Some(frac) = reinforce_frac {
                    let mut ranked: Vec<(f64, String)> = assignment
                        .entries
                        .iter()
                        .map(|(id, e)| (e.u, id.clone()))
                        .collect();
                    ranked.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let k = ((ranked.len() as f64 * frac).ceil() as usize).max(1);
                    for (_, id) in ranked.into_iter().take(k) {
                        assignment = stormgrid::fragility::preset_resistance_rank(
                            &assignment,
                            &curves,
                            &id,
                            0.99,
                        )
                        .unwrap();
                    }
                }
                let r = run_realization_assigned(&grid, &table, &assignment, &params, seed).unwrap();
                r.blackout_step.is_some()
            })
            .count();
        blackouts as f64 / n as f64
    };
    let base_p = blackout_prob(None);
    let p01 = blackout_prob(Some(0.01));
    let p10 = blackout_prob(Some(0.10));
    println!(
        "  preset-resistance deltas: baseline {base_p:.3}, weakest 1% reinforced {p01:.3} \
         (delta {:+.3}), weakest 10% reinforced {p10:.3} (delta {:+.3})",
        p01 - base_p,
        p10 - base_p
    );
    // the harness must run the experiment shape and emit the deltas; the
    // direction/size of the published deltas depends on the (proprietary)
    // grid and is not asserted here
    for p in [base_p, p01, p10] {
        if !(0.0..=1.0).contains(&p) {
            errs.push(format!("preset harness produced probability {p}"));
        }
    }
    let elapsed = t0.elapsed();
    if elapsed > SWEEP_BUDGET {
        errs.push(format!("runtime {elapsed:?} over budget {SWEEP_BUDGET:?}"));
    }
    report(7, "qualitative sensitivity patterns hold at desk scale", &errs);
}

#[test]
fn criterion_8_throughput() {
    let mut errs = Vec::new();
    let grid = large_100(139);
    let params = params_139();
    let curves = default_fragility();
    let table = build_hazard_table(&grid, &default_track(), &RoughnessMap::uniform(0.03), &params)
        .unwrap();
    let inputs = EnsembleInputs {
        grid: &grid,
        table: &table,
        curves: &curves,
        params: &params,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let t0 = Instant::now();
    let (results, summary) = pool.install(|| run_ensemble(&inputs, 1000, 20220918));
    let elapsed = t0.elapsed();
    println!(
        "  1000 x {} steps on {} buses / {} lines in {elapsed:?} \
         (blackout probability {:.3})",
        params.steps,
        grid.buses.len(),
        grid.lines.len(),
        summary.blackout_probability
    );
    if results.len() != 1000 || summary.failed_count != 0 {
        errs.push(format!(
            "{} results, {} failed",
            results.len(),
            summary.failed_count
        ));
    }
    if elapsed > THROUGHPUT_BUDGET {
        errs.push(format!("runtime {elapsed:?} over budget {THROUGHPUT_BUDGET:?}"));
    }
    report(8, "ensemble throughput meets the five-minute budget", &errs);
}

#[test]
fn criterion_9_metric_recomputation() {
    let mut errs = Vec::new();
    let grid = toy_radial(139);
    let params = params_139();
    let curves = default_fragility();
    let table = build_hazard_table(&grid, &default_track(), &RoughnessMap::uniform(0.03), &params)
        .unwrap();
    let inputs = EnsembleInputs {
        grid: &grid,
        table: &table,
        curves: &curves,
        params: &params,
    };
    let (results, summary) = run_ensemble(&inputs, 50, 20220918);
    let dir = tempfile::tempdir().unwrap();
    store_results(dir.path(), &results, 20220918, "acceptance", 0).unwrap();
    let (_, stored) = stormgrid::ensemble::load_results(dir.path()).unwrap();
    for (i, r) in stored.iter().enumerate() {
        if largest_failure(&r.trajectory) != r.largest_failure {
            errs.push(format!("realization {i}: largest_failure drifted"));
        }
    }
    let recomputed = critical_index(&stored, &grid);
    if recomputed != summary.critical_index {
        errs.push("critical_index recomputed from disk differs".into());
    }
    // hand enumeration on the toy radial grid
    for l in &grid.lines {
        let hits = results
            .iter()
            .filter(|r| match (r.blackout_step, r.failed_components.get(&l.id)) {
                (Some(b), Some(&f)) => b == f,
                _ => false,
            })
            .count();
        let expect = hits as f64 / results.len() as f64;
        if summary.critical_index[&l.id] != expect {
            errs.push(format!(
                "{}: critical index {} != hand count {expect}",
                l.id, summary.critical_index[&l.id]
            ));
        }
    }
    report(9, "stored metrics recompute bitwise", &errs);
}
