//! Synthetic, fully self-contained test systems: a toy radial feeder for
//! hand-checkable metrics, a solar-heavy ~30-bus mesh for sensitivity
//! studies, and a ~100-bus system for throughput runs. All three are
//! generated deterministically and shipped alongside a matching storm
//! track, fragility table, and run config.

use std::fs;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};

use crate::config::{EnsembleConfig, RunConfig, CONFIG_SCHEMA_VERSION};
use crate::fragility::{ComponentClass, FragilityCurve, FragilitySet};
use crate::geo::GeoPoint;
use crate::grid::{Bus, Feeder, Generator, GeneratorKind, GridModel, Line};
use crate::hazard::{write_track, StormTrack, TrackPoint};
use crate::seed::SplitMix;

/// Shared reference location for the synthetic systems (open tropical
/// waters; nothing ties the coordinates to a real network).
const LAT0: f64 = 19.0;
const LON0: f64 = -65.0;

/// Degrees of latitude per bus-grid row / column.
const SPACING_DEG: f64 = 0.08;

fn diurnal_shape(steps: usize) -> Vec<f64> {
    // morning trough, evening peak; stays within [0.55, 1.0]
    (0..steps)
        .map(|t| {
            let frac = t as f64 / (steps.max(2) - 1) as f64;
            0.775 + 0.225 * (std::f64::consts::TAU * (frac - 0.80)).cos()
        })
        .collect()
}

fn bus(id: usize, lat: f64, lon: f64) -> Bus {
    Bus {
        id: format!("b{id:03}"),
        name: format!("bus {id}"),
        lat,
        lon,
        voltage_class: 115.0,
        region: format!("r{}", id % 4),
    }
}

fn straight_span(grid_buses: &[Bus], from: usize, to: usize) -> Vec<GeoPoint> {
    vec![
        GeoPoint {
            lat: grid_buses[from].lat,
            lon: grid_buses[from].lon,
        },
        GeoPoint {
            lat: grid_buses[to].lat,
            lon: grid_buses[to].lon,
        },
    ]
}

/// Default fragility table used by every shipped testbed. Medians are
/// deliberately within reach of the shipped storm so ensembles mix
/// survivals and blackouts.
pub fn default_fragility() -> FragilitySet {
    let mut set = FragilitySet::default();
    for (class, median, beta) in [
        (ComponentClass::TransmissionLine, 72.0, 0.25),
        (ComponentClass::TransmissionTower, 80.0, 0.20),
        (ComponentClass::DistributionFeeder, 62.0, 0.30),
        (ComponentClass::UtilitySolar, 64.0, 0.20),
        (ComponentClass::RooftopSolar, 56.0, 0.25),
    ] {
        set.curves.insert(
            class,
            FragilityCurve {
                class,
                median_ms: median,
                beta,
            },
        );
    }
    set
}

/// Storm track crossing the system from south-west to north-east over the
/// default one-day horizon, peaking near the center.
pub fn default_track() -> StormTrack {
    let start = Utc.with_ymd_and_hms(2022, 9, 18, 0, 0, 0).unwrap();
    let waypoints = [
        // (hours, dlat, dlon, vmax m/s, rmax km)
        (0.0, -0.90, -1.10, 35.0, 45.0),
        (3.0, -0.60, -0.75, 40.0, 40.0),
        (6.0, -0.35, -0.45, 46.0, 35.0),
        (9.0, -0.12, -0.18, 52.0, 30.0),
        (12.0, 0.12, 0.10, 55.0, 28.0),
        (15.0, 0.35, 0.40, 52.0, 30.0),
        (18.0, 0.60, 0.72, 46.0, 34.0),
        (21.0, 0.85, 1.05, 40.0, 38.0),
        (24.0, 1.10, 1.40, 35.0, 42.0),
    ];
    let points = waypoints
        .iter()
        .map(|&(h, dlat, dlon, vmax, rmax)| TrackPoint {
            time: start + Duration::minutes((h * 60.0) as i64),
            center: GeoPoint {
                lat: LAT0 + 2.0 * SPACING_DEG + dlat,
                lon: LON0 + 2.0 * SPACING_DEG + dlon,
            },
            vmax,
            rmax_km: rmax,
        })
        .collect();
    StormTrack::new(points).expect("hand-written track is valid")
}

/// Four-bus radial chain with one generator behind a single tie line; when
/// the tie fails, the whole system blacks out in the same step. Critical
/// indices are hand-enumerable.
pub fn toy_radial(steps: usize) -> GridModel {
    let buses: Vec<Bus> = (0..4)
        .map(|i| bus(i, LAT0 + i as f64 * 0.02, LON0 + i as f64 * 0.05))
        .collect();
    let mk_line = |id: usize, from: usize, to: usize, rating: f64| Line {
        id: format!("l{id:03}"),
        from_bus: buses[from].id.clone(),
        to_bus: buses[to].id.clone(),
        reactance: 0.10,
        rating,
        emergency_rating: rating * 1.25,
        span_points: straight_span(&buses, from, to),
    };
    let lines = vec![
        mk_line(0, 0, 1, 120.0),
        mk_line(1, 1, 2, 80.0),
        mk_line(2, 2, 3, 60.0),
    ];
    let generators = vec![Generator {
        id: "g000".into(),
        bus: buses[0].id.clone(),
        kind: GeneratorKind::Thermal,
        p_max: 100.0,
        p_min: 0.0,
        ramp_rate: 5.0,
        inertia_h: 5.0,
        marginal_cost: 20.0,
        available: true,
    }];
    let shape = diurnal_shape(steps);
    let feeders = (1..4)
        .map(|i| Feeder {
            id: format!("f{i:03}"),
            substation_bus: buses[i].id.clone(),
            peak_demand: 20.0,
            demand_shape: shape.clone(),
            customers: 20_000,
            btm_solar_capacity: 0.0,
            route_points: vec![
                GeoPoint {
                    lat: buses[i].lat,
                    lon: buses[i].lon,
                },
                GeoPoint {
                    lat: buses[i].lat + 0.01,
                    lon: buses[i].lon,
                },
            ],
        })
        .collect();
    GridModel {
        buses,
        lines,
        generators,
        feeders,
        system_base: 100.0,
        rated_frequency: 60.0,
    }
}

/// ~30-bus meshed system with a high solar share (utility-scale plus BTM),
/// used for the renewable-integration sensitivity sweep.
pub fn solar_heavy_30(steps: usize) -> GridModel {
    let rows = 6usize;
    let cols = 5usize;
    let mut buses = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            buses.push(bus(
                r * cols + c,
                LAT0 + r as f64 * SPACING_DEG,
                LON0 + c as f64 * SPACING_DEG,
            ));
        }
    }
    let mut rng = SplitMix::new(0x5eed_0030);
    let mut lines = Vec::new();
    let mut add_line = |lines: &mut Vec<Line>, from: usize, to: usize, rating: f64| {
        let id = lines.len();
        lines.push(Line {
            id: format!("l{id:03}"),
            from_bus: buses[from].id.clone(),
            to_bus: buses[to].id.clone(),
            reactance: 0.06 + 0.08 * rng.next_f64(),
            rating,
            emergency_rating: rating * 1.25,
            span_points: straight_span(&buses, from, to),
        });
    };
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                add_line(&mut lines, i, i + 1, 90.0);
            }
            if r + 1 < rows {
                add_line(&mut lines, i, i + cols, 110.0);
            }
        }
    }

    let mut generators = Vec::new();
    let gen = |generators: &mut Vec<Generator>,
                   bus_i: usize,
                   kind: GeneratorKind,
                   p_max: f64,
                   p_min: f64,
                   ramp: f64,
                   h: f64,
                   cost: f64| {
        let id = generators.len();
        generators.push(Generator {
            id: format!("g{id:03}"),
            bus: buses[bus_i].id.clone(),
            kind,
            p_max,
            p_min,
            ramp_rate: ramp,
            inertia_h: h,
            marginal_cost: cost,
            available: true,
        });
    };
    gen(&mut generators, 0, GeneratorKind::Thermal, 120.0, 30.0, 4.0, 9.0, 22.0);
    gen(&mut generators, 14, GeneratorKind::Thermal, 90.0, 20.0, 3.5, 8.0, 28.0);
    gen(&mut generators, 27, GeneratorKind::Thermal, 70.0, 15.0, 3.0, 7.0, 35.0);
    gen(&mut generators, 9, GeneratorKind::Hydro, 40.0, 0.0, 8.0, 6.0, 8.0);
    gen(&mut generators, 6, GeneratorKind::UtilitySolar, 45.0, 0.0, 45.0, 0.0, 1.0);
    gen(&mut generators, 17, GeneratorKind::UtilitySolar, 40.0, 0.0, 40.0, 0.0, 1.0);
    gen(&mut generators, 23, GeneratorKind::UtilitySolar, 35.0, 0.0, 35.0, 0.0, 1.0);
    gen(&mut generators, 29, GeneratorKind::Wind, 30.0, 0.0, 30.0, 0.0, 1.5);

    let shape = diurnal_shape(steps);
    let mut feeders = Vec::new();
    for (k, &bus_i) in [1, 3, 4, 7, 8, 11, 12, 13, 16, 18, 19, 21, 22, 24, 26, 28]
        .iter()
        .enumerate()
    {
        let peak = 10.0 + 8.0 * rng.next_f64();
        let btm = 2.0 + 3.0 * rng.next_f64();
        feeders.push(Feeder {
            id: format!("f{k:03}"),
            substation_bus: buses[bus_i].id.clone(),
            peak_demand: (peak * 10.0).round() / 10.0,
            demand_shape: shape.clone(),
            customers: (peak * 1000.0).round() as u64,
            btm_solar_capacity: (btm * 10.0).round() / 10.0,
            route_points: vec![
                GeoPoint {
                    lat: buses[bus_i].lat,
                    lon: buses[bus_i].lon,
                },
                GeoPoint {
                    lat: buses[bus_i].lat + 0.02,
                    lon: buses[bus_i].lon + 0.01,
                },
            ],
        });
    }
    GridModel {
        buses,
        lines,
        generators,
        feeders,
        system_base: 100.0,
        rated_frequency: 60.0,
    }
}

/// ~100-bus / ~150-line system sized for the throughput target.
pub fn large_100(steps: usize) -> GridModel {
    let rows = 10usize;
    let cols = 10usize;
    let mut buses = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            buses.push(bus(
                r * cols + c,
                LAT0 + r as f64 * 0.05,
                LON0 + c as f64 * 0.05,
            ));
        }
    }
    let mut rng = SplitMix::new(0x5eed_0100);
    let mut lines = Vec::new();
    let mut add_line = |lines: &mut Vec<Line>, from: usize, to: usize, rating: f64| {
        let id = lines.len();
        lines.push(Line {
            id: format!("l{id:03}"),
            from_bus: buses[from].id.clone(),
            to_bus: buses[to].id.clone(),
            reactance: 0.05 + 0.10 * rng.next_f64(),
            rating,
            emergency_rating: rating * 1.25,
            span_points: straight_span(&buses, from, to),
        });
    };
    // all horizontal edges keep every row connected; column 0 ties the
    // rows together; extra vertical edges densify the mesh to ~150 lines
    for r in 0..rows {
        for c in 0..cols - 1 {
            add_line(&mut lines, r * cols + c, r * cols + c + 1, 100.0);
        }
    }
    for r in 0..rows - 1 {
        add_line(&mut lines, r * cols, (r + 1) * cols, 140.0);
    }
    'outer: for stride in [2usize, 3] {
        for r in 0..rows - 1 {
            for c in (stride..cols).step_by(stride) {
                if lines.len() >= 150 {
                    break 'outer;
                }
                let (a, b) = (r * cols + c, (r + 1) * cols + c);
                if !lines
                    .iter()
                    .any(|l| l.from_bus == buses[a].id && l.to_bus == buses[b].id)
                {
                    add_line(&mut lines, a, b, 120.0);
                }
            }
        }
    }

    let mut generators = Vec::new();
    let gen = |generators: &mut Vec<Generator>,
                   bus_i: usize,
                   kind: GeneratorKind,
                   p_max: f64,
                   p_min: f64,
                   ramp: f64,
                   h: f64,
                   cost: f64| {
        let id = generators.len();
        generators.push(Generator {
            id: format!("g{id:03}"),
            bus: buses[bus_i].id.clone(),
            kind,
            p_max,
            p_min,
            ramp_rate: ramp,
            inertia_h: h,
            marginal_cost: cost,
            available: true,
        });
    };
    for (k, &bus_i) in [0, 9, 33, 45, 66, 90, 99].iter().enumerate() {
        gen(
            &mut generators,
            bus_i,
            GeneratorKind::Thermal,
            140.0 - 8.0 * k as f64,
            20.0,
            4.0,
            8.0 + 0.4 * k as f64,
            18.0 + 4.0 * k as f64,
        );
    }
    gen(&mut generators, 55, GeneratorKind::Hydro, 60.0, 0.0, 10.0, 6.0, 8.0);
    for (k, &bus_i) in [12, 38, 61, 84].iter().enumerate() {
        gen(
            &mut generators,
            bus_i,
            GeneratorKind::UtilitySolar,
            50.0 - 5.0 * k as f64,
            0.0,
            50.0,
            0.0,
            1.0,
        );
    }
    gen(&mut generators, 77, GeneratorKind::Wind, 40.0, 0.0, 40.0, 0.0, 1.5);

    let shape = diurnal_shape(steps);
    let mut feeders = Vec::new();
    let mut k = 0usize;
    for bus_i in 0..buses.len() {
        if bus_i % 5 == 0 || generators.iter().any(|g| g.bus == buses[bus_i].id) {
            continue;
        }
        let peak = 6.0 + 8.0 * rng.next_f64();
        feeders.push(Feeder {
            id: format!("f{k:03}"),
            substation_bus: buses[bus_i].id.clone(),
            peak_demand: (peak * 10.0).round() / 10.0,
            demand_shape: shape.clone(),
            customers: (peak * 1000.0).round() as u64,
            btm_solar_capacity: if bus_i % 3 == 0 { 2.0 } else { 0.0 },
            route_points: vec![
                GeoPoint {
                    lat: buses[bus_i].lat,
                    lon: buses[bus_i].lon,
                },
                GeoPoint {
                    lat: buses[bus_i].lat + 0.01,
                    lon: buses[bus_i].lon,
                },
            ],
        });
        k += 1;
    }
    GridModel {
        buses,
        lines,
        generators,
        feeders,
        system_base: 100.0,
        rated_frequency: 60.0,
    }
}

pub fn write_fragility_csv(set: &FragilitySet, path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "median_ms", "beta"])?;
    for curve in set.curves.values() {
        w.write_record([
            curve.class.token(),
            &curve.median_ms.to_string(),
            &curve.beta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Named testbed selector for the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestbedKind {
    ToyRadial,
    SolarHeavy30,
    Large100,
}

impl TestbedKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "toy-radial" => Some(Self::ToyRadial),
            "solar-heavy-30" => Some(Self::SolarHeavy30),
            "large-100" => Some(Self::Large100),
            _ => None,
        }
    }

    pub fn build(self, steps: usize) -> GridModel {
        match self {
            Self::ToyRadial => toy_radial(steps),
            Self::SolarHeavy30 => solar_heavy_30(steps),
            Self::Large100 => large_100(steps),
        }
    }
}

/// Write a complete, runnable testbed directory: grid tables, storm track,
/// fragility table, and a ready-to-use config.json.
pub fn write_testbed(kind: TestbedKind, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let steps = 139;
    let grid = kind.build(steps);
    crate::grid::write_grid(&grid, &dir.join("grid"))?;
    write_track(&default_track(), &dir.join("track.csv"))?;
    write_fragility_csv(&default_fragility(), &dir.join("fragility.csv"))?;
    let config = RunConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        grid_dir: "grid".into(),
        track: "track.csv".into(),
        roughness: None,
        default_z0_m: crate::config::DEFAULT_Z0_M,
        fragility: "fragility.csv".into(),
        observed: None,
        horizon: Default::default(),
        wind: Default::default(),
        solar: Default::default(),
        diurnal: Default::default(),
        rocof_limit_hz_per_s: 2.0,
        f0_hz: 60.0,
        costs: Default::default(),
        trip_rule: Default::default(),
        ensemble: EnsembleConfig {
            n: 200,
            master_seed: 20220918,
        },
        output_dir: "out".into(),
    };
    fs::write(
        dir.join("config.json"),
        serde_json::to_vec_pretty(&config)?,
    )?;
    Ok(())
}
