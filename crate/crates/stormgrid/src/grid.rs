//! Static power-system data model: buses, lines, generators, distribution
//! feeders, CSV ingestion and validation, and renewable-integration scaling.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::geo::{self, GeoPoint};

pub const DEFAULT_SYSTEM_BASE_MVA: f64 = 100.0;
pub const DEFAULT_RATED_FREQUENCY_HZ: f64 = 60.0;

/// Customers imputed per MW of peak demand when the input omits counts.
const CUSTOMERS_PER_MW: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Thermal,
    Hydro,
    UtilitySolar,
    Wind,
    BtmSolar,
}

impl GeneratorKind {
    pub fn is_synchronous(self) -> bool {
        matches!(self, GeneratorKind::Thermal | GeneratorKind::Hydro)
    }

    pub fn is_solar(self) -> bool {
        matches!(self, GeneratorKind::UtilitySolar | GeneratorKind::BtmSolar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub voltage_class: f64,
    pub region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    /// Per-unit reactance on the system base.
    pub reactance: f64,
    /// Normal continuous rating, MW.
    pub rating: f64,
    /// Short-duration emergency rating, MW; trips occur above this.
    pub emergency_rating: f64,
    /// Route samples used for hazard evaluation.
    pub span_points: Vec<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub bus: String,
    pub kind: GeneratorKind,
    pub p_max: f64,
    pub p_min: f64,
    /// MW per minute.
    pub ramp_rate: f64,
    /// Inertia constant H in seconds; 0 for inverter-based kinds.
    pub inertia_h: f64,
    /// $/MWh.
    pub marginal_cost: f64,
    /// Pre-event availability flag.
    pub available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feeder {
    pub id: String,
    pub substation_bus: String,
    pub peak_demand: f64,
    /// Per-time-step demand multipliers; the last entry extends to the end
    /// of the horizon. Default is a constant 1.0.
    pub demand_shape: Vec<f64>,
    pub customers: u64,
    /// Aggregate behind-the-meter rooftop PV on this feeder, MW.
    pub btm_solar_capacity: f64,
    pub route_points: Vec<GeoPoint>,
}

impl Feeder {
    /// Demand in MW at step `t` (shape index clamped to the last entry).
    pub fn demand_at(&self, t: usize) -> f64 {
        let m = if self.demand_shape.is_empty() {
            1.0
        } else {
            self.demand_shape[t.min(self.demand_shape.len() - 1)]
        };
        self.peak_demand * m
    }

    /// Sum of per-step demands over `steps` steps (MW-steps; multiply by the
    /// step length to get energy).
    pub fn demand_energy(&self, steps: usize) -> f64 {
        (0..steps).map(|t| self.demand_at(t)).sum()
    }

    /// Stable id of the feeder's implicit aggregate BTM solar unit.
    pub fn btm_unit_id(&self) -> String {
        format!("{}::btm", self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub feeders: Vec<Feeder>,
    pub system_base: f64,
    pub rated_frequency: f64,
}

impl GridModel {
    pub fn bus_index(&self) -> HashMap<&str, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    pub fn total_customers(&self) -> u64 {
        self.feeders.iter().map(|f| f.customers).sum()
    }

    pub fn total_peak_demand(&self) -> f64 {
        self.feeders.iter().map(|f| f.peak_demand).sum()
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let mut seen = std::collections::HashSet::new();
        for id in self
            .buses
            .iter()
            .map(|b| &b.id)
            .chain(self.lines.iter().map(|l| &l.id))
            .chain(self.generators.iter().map(|g| &g.id))
            .chain(self.feeders.iter().map(|f| &f.id))
        {
            if !seen.insert(id.clone()) {
                return Err(GridError::InvariantViolation(format!("duplicate id {id:?}")));
            }
        }
        let buses = self.bus_index();
        for b in &self.buses {
            if !(-90.0..=90.0).contains(&b.lat) || !(-180.0..=180.0).contains(&b.lon) {
                return Err(GridError::InvariantViolation(format!(
                    "bus {} has out-of-range coordinates",
                    b.id
                )));
            }
            if b.voltage_class <= 0.0 {
                return Err(GridError::InvariantViolation(format!(
                    "bus {} voltage class must be positive",
                    b.id
                )));
            }
        }
        for l in &self.lines {
            if l.from_bus == l.to_bus {
                return Err(GridError::InvariantViolation(format!("line {} is a self-loop", l.id)));
            }
            for end in [&l.from_bus, &l.to_bus] {
                if !buses.contains_key(end.as_str()) {
                    return Err(GridError::DanglingReference(end.clone()));
                }
            }
            if !(l.rating > 0.0 && l.rating <= l.emergency_rating) {
                return Err(GridError::InvariantViolation(format!(
                    "line {} ratings must satisfy 0 < rating <= emergency_rating",
                    l.id
                )));
            }
            if l.reactance <= 0.0 {
                return Err(GridError::InvariantViolation(format!(
                    "line {} reactance must be positive",
                    l.id
                )));
            }
            if l.span_points.len() < 2 {
                return Err(GridError::InvariantViolation(format!(
                    "line {} needs at least 2 span points",
                    l.id
                )));
            }
        }
        for g in &self.generators {
            if !buses.contains_key(g.bus.as_str()) {
                return Err(GridError::DanglingReference(g.bus.clone()));
            }
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                return Err(GridError::InvariantViolation(format!(
                    "generator {} must satisfy 0 <= p_min <= p_max",
                    g.id
                )));
            }
            if g.ramp_rate < 0.0 || g.inertia_h < 0.0 {
                return Err(GridError::InvariantViolation(format!(
                    "generator {} ramp rate and inertia must be non-negative",
                    g.id
                )));
            }
            if g.inertia_h > 0.0 && !g.kind.is_synchronous() {
                return Err(GridError::InvariantViolation(format!(
                    "generator {} is inverter-based but has H > 0",
                    g.id
                )));
            }
        }
        for f in &self.feeders {
            if !buses.contains_key(f.substation_bus.as_str()) {
                return Err(GridError::DanglingReference(f.substation_bus.clone()));
            }
            if f.peak_demand < 0.0 || f.btm_solar_capacity < 0.0 {
                return Err(GridError::InvariantViolation(format!(
                    "feeder {} demand and BTM capacity must be non-negative",
                    f.id
                )));
            }
            if f.demand_shape.iter().any(|m| !(0.0..=1.5).contains(m)) {
                return Err(GridError::InvariantViolation(format!(
                    "feeder {} demand multipliers must lie in [0, 1.5]",
                    f.id
                )));
            }
            if f.route_points.is_empty() {
                return Err(GridError::InvariantViolation(format!(
                    "feeder {} needs route points",
                    f.id
                )));
            }
        }
        if !self.generators.iter().any(|g| g.inertia_h > 0.0) {
            return Err(GridError::InvariantViolation(
                "grid needs at least one synchronous generator with H > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Paths of the five grid tables.
#[derive(Debug, Clone)]
pub struct GridPaths {
    pub buses: PathBuf,
    pub lines: PathBuf,
    pub generators: PathBuf,
    pub feeders: PathBuf,
    /// Optional demand-shape table.
    pub shapes: Option<PathBuf>,
}

impl GridPaths {
    /// Conventional file names under one directory.
    pub fn in_dir(dir: &Path) -> Self {
        let shapes = dir.join("shapes.csv");
        Self {
            buses: dir.join("buses.csv"),
            lines: dir.join("lines.csv"),
            generators: dir.join("generators.csv"),
            feeders: dir.join("feeders.csv"),
            shapes: shapes.exists().then_some(shapes),
        }
    }
}

#[derive(Deserialize)]
struct BusRow {
    id: String,
    name: String,
    lat: f64,
    lon: f64,
    kv: f64,
    region: String,
}

#[derive(Deserialize)]
struct LineRow {
    id: String,
    from: String,
    to: String,
    x_pu: f64,
    rating_mw: f64,
    emergency_mw: f64,
    geometry_wkt: String,
}

#[derive(Deserialize)]
struct GeneratorRow {
    id: String,
    bus: String,
    kind: String,
    p_max_mw: f64,
    p_min_mw: f64,
    ramp_mw_min: f64,
    h_s: f64,
    cost: f64,
    available: bool,
}

#[derive(Deserialize)]
struct FeederRow {
    id: String,
    bus: String,
    peak_mw: f64,
    customers: Option<u64>,
    btm_mw: f64,
    geometry_wkt: String,
    shape_id: Option<String>,
}

#[derive(Deserialize)]
struct ShapeRow {
    shape_id: String,
    step: usize,
    multiplier: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, GridError> {
    if !path.exists() {
        return Err(GridError::MissingFile(path.display().to_string()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| GridError::ParseError {
            file: path.display().to_string(),
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<T>().enumerate() {
        out.push(rec.map_err(|e| GridError::ParseError {
            file: path.display().to_string(),
            row: i + 2, // 1-based, after the header
            column: String::new(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn parse_kind(s: &str) -> Result<GeneratorKind, String> {
    match s {
        "thermal" => Ok(GeneratorKind::Thermal),
        "hydro" => Ok(GeneratorKind::Hydro),
        "utility_solar" => Ok(GeneratorKind::UtilitySolar),
        "wind" => Ok(GeneratorKind::Wind),
        "btm_solar" => Ok(GeneratorKind::BtmSolar),
        other => Err(format!("unknown generator kind {other:?}")),
    }
}

fn kind_token(k: GeneratorKind) -> &'static str {
    match k {
        GeneratorKind::Thermal => "thermal",
        GeneratorKind::Hydro => "hydro",
        GeneratorKind::UtilitySolar => "utility_solar",
        GeneratorKind::Wind => "wind",
        GeneratorKind::BtmSolar => "btm_solar",
    }
}

/// Load and validate a grid from CSV tables.
pub fn load_grid(paths: &GridPaths) -> Result<GridModel, GridError> {
    let bus_rows: Vec<BusRow> = read_rows(&paths.buses)?;
    let line_rows: Vec<LineRow> = read_rows(&paths.lines)?;
    let gen_rows: Vec<GeneratorRow> = read_rows(&paths.generators)?;
    let feeder_rows: Vec<FeederRow> = read_rows(&paths.feeders)?;
    let mut shapes: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
    if let Some(shape_path) = &paths.shapes {
        for row in read_rows::<ShapeRow>(shape_path)? {
            shapes.entry(row.shape_id).or_default().push((row.step, row.multiplier));
        }
    }
    for steps in shapes.values_mut() {
        steps.sort_by_key(|(s, _)| *s);
    }

    let buses = bus_rows
        .into_iter()
        .map(|r| Bus {
            id: r.id,
            name: r.name,
            lat: r.lat,
            lon: r.lon,
            voltage_class: r.kv,
            region: r.region,
        })
        .collect();

    let mut lines = Vec::with_capacity(line_rows.len());
    for (i, r) in line_rows.into_iter().enumerate() {
        let span = geo::parse_linestring(&r.geometry_wkt).map_err(|e| GridError::ParseError {
            file: paths.lines.display().to_string(),
            row: i + 2,
            column: "geometry_wkt".into(),
            message: e,
        })?;
        lines.push(Line {
            id: r.id,
            from_bus: r.from,
            to_bus: r.to,
            reactance: r.x_pu,
            rating: r.rating_mw,
            emergency_rating: r.emergency_mw,
            span_points: span,
        });
    }

    let mut generators = Vec::with_capacity(gen_rows.len());
    for (i, r) in gen_rows.into_iter().enumerate() {
        let kind = parse_kind(&r.kind).map_err(|e| GridError::ParseError {
            file: paths.generators.display().to_string(),
            row: i + 2,
            column: "kind".into(),
            message: e,
        })?;
        generators.push(Generator {
            id: r.id,
            bus: r.bus,
            kind,
            p_max: r.p_max_mw,
            p_min: r.p_min_mw,
            ramp_rate: r.ramp_mw_min,
            inertia_h: r.h_s,
            marginal_cost: r.cost,
            available: r.available,
        });
    }

    let mut feeders = Vec::with_capacity(feeder_rows.len());
    for (i, r) in feeder_rows.into_iter().enumerate() {
        let route = geo::parse_linestring(&r.geometry_wkt).map_err(|e| GridError::ParseError {
            file: paths.feeders.display().to_string(),
            row: i + 2,
            column: "geometry_wkt".into(),
            message: e,
        })?;
        let demand_shape = match r.shape_id.as_deref() {
            Some(sid) if !sid.is_empty() => shapes
                .get(sid)
                .map(|v| v.iter().map(|(_, m)| *m).collect())
                .ok_or_else(|| GridError::DanglingReference(sid.to_string()))?,
            _ => vec![1.0],
        };
        let customers = r
            .customers
            .unwrap_or_else(|| (r.peak_mw * CUSTOMERS_PER_MW).round() as u64);
        feeders.push(Feeder {
            id: r.id,
            substation_bus: r.bus,
            peak_demand: r.peak_mw,
            demand_shape,
            customers,
            btm_solar_capacity: r.btm_mw,
            route_points: route,
        });
    }

    let grid = GridModel {
        buses,
        lines,
        generators,
        feeders,
        system_base: DEFAULT_SYSTEM_BASE_MVA,
        rated_frequency: DEFAULT_RATED_FREQUENCY_HZ,
    };
    grid.validate()?;
    Ok(grid)
}

/// Write the grid back out as the five CSV tables. `load_grid` on the output
/// reproduces the model exactly.
pub fn write_grid(grid: &GridModel, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("buses.csv"))?;
    w.write_record(["id", "name", "lat", "lon", "kv", "region"])?;
    for b in &grid.buses {
        w.write_record([
            b.id.as_str(),
            b.name.as_str(),
            &b.lat.to_string(),
            &b.lon.to_string(),
            &b.voltage_class.to_string(),
            b.region.as_str(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("lines.csv"))?;
    w.write_record(["id", "from", "to", "x_pu", "rating_mw", "emergency_mw", "geometry_wkt"])?;
    for l in &grid.lines {
        w.write_record([
            l.id.as_str(),
            l.from_bus.as_str(),
            l.to_bus.as_str(),
            &l.reactance.to_string(),
            &l.rating.to_string(),
            &l.emergency_rating.to_string(),
            &geo::to_linestring(&l.span_points),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("generators.csv"))?;
    w.write_record([
        "id", "bus", "kind", "p_max_mw", "p_min_mw", "ramp_mw_min", "h_s", "cost", "available",
    ])?;
    for g in &grid.generators {
        w.write_record([
            g.id.as_str(),
            g.bus.as_str(),
            kind_token(g.kind),
            &g.p_max.to_string(),
            &g.p_min.to_string(),
            &g.ramp_rate.to_string(),
            &g.inertia_h.to_string(),
            &g.marginal_cost.to_string(),
            &g.available.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("feeders.csv"))?;
    w.write_record(["id", "bus", "peak_mw", "customers", "btm_mw", "geometry_wkt", "shape_id"])?;
    for f in &grid.feeders {
        w.write_record([
            f.id.as_str(),
            f.substation_bus.as_str(),
            &f.peak_demand.to_string(),
            &f.customers.to_string(),
            &f.btm_solar_capacity.to_string(),
            &geo::to_linestring(&f.route_points),
            f.id.as_str(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("shapes.csv"))?;
    w.write_record(["shape_id", "step", "multiplier"])?;
    for f in &grid.feeders {
        for (step, m) in f.demand_shape.iter().enumerate() {
            w.write_record([f.id.as_str(), &step.to_string(), &m.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Fraction of demand energy met by BTM solar over `solar_profile.len()`
/// steps, where `solar_profile[t]` is the clear-sky per-MW output fraction.
pub fn integration_level(grid: &GridModel, solar_profile: &[f64]) -> f64 {
    let steps = solar_profile.len();
    let per_mw: f64 = solar_profile.iter().sum();
    let solar: f64 = grid.feeders.iter().map(|f| f.btm_solar_capacity * per_mw).sum();
    let demand: f64 = grid.feeders.iter().map(|f| f.demand_energy(steps)).sum();
    if demand <= 0.0 {
        0.0
    } else {
        solar / demand
    }
}

/// Rescale each feeder's BTM solar capacity so the island-wide expected
/// solar energy over the horizon equals `target_level` of total demand
/// energy, with per-feeder capacity proportional to demand energy.
pub fn scale_renewable_integration(
    grid: &GridModel,
    target_level: f64,
    solar_profile: &[f64],
) -> Result<GridModel, GridError> {
    if !(0.05..=0.95).contains(&target_level) {
        return Err(GridError::InfeasibleTarget(target_level));
    }
    let steps = solar_profile.len();
    let per_mw: f64 = solar_profile.iter().sum();
    if per_mw <= 0.0 {
        return Err(GridError::InfeasibleTarget(target_level));
    }
    let total_demand: f64 = grid.feeders.iter().map(|f| f.demand_energy(steps)).sum();
    let mut out = grid.clone();
    for f in &mut out.feeders {
        let share = if total_demand > 0.0 {
            f.demand_energy(steps) / total_demand
        } else {
            0.0
        };
        f.btm_solar_capacity = target_level * total_demand * share / per_mw;
    }
    Ok(out)
}
