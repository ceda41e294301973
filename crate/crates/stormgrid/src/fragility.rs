//! Component vulnerability: fragility curves inverted into per-realization
//! wind resistances, absorbing damage evolution, hurricane cloud-cover solar
//! reduction, and per-step available generation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::VulnerabilityError;
use crate::geo::GeoPoint;
use crate::grid::{GeneratorKind, GridModel};
use crate::hazard::StormTrack;
use crate::seed::component_uniform;

/// Typical wind-turbine cut-off speed, m/s.
pub const WIND_TURBINE_CUTOFF_MS: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentClass {
    TransmissionLine,
    TransmissionTower,
    DistributionFeeder,
    UtilitySolar,
    RooftopSolar,
}

impl ComponentClass {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "transmission_line" => Some(Self::TransmissionLine),
            "transmission_tower" => Some(Self::TransmissionTower),
            "distribution_feeder" => Some(Self::DistributionFeeder),
            "utility_solar" => Some(Self::UtilitySolar),
            "rooftop_solar" => Some(Self::RooftopSolar),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Self::TransmissionLine => "transmission_line",
            Self::TransmissionTower => "transmission_tower",
            Self::DistributionFeeder => "distribution_feeder",
            Self::UtilitySolar => "utility_solar",
            Self::RooftopSolar => "rooftop_solar",
        }
    }
}

/// Lognormal fragility curve: failure probability at wind `w` is
/// Phi((ln w - ln median) / beta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragilityCurve {
    pub class: ComponentClass,
    /// Median failure wind speed, m/s.
    pub median_ms: f64,
    /// Log standard deviation.
    pub beta: f64,
}

impl FragilityCurve {
    pub fn cdf(&self, wind: f64) -> f64 {
        if wind <= 0.0 {
            return 0.0;
        }
        let n = Normal::new(0.0, 1.0).unwrap();
        n.cdf((wind.ln() - self.median_ms.ln()) / self.beta)
    }

    /// Inverse fragility: the resistance at cumulative probability `u`.
    pub fn resistance_at(&self, u: f64) -> f64 {
        self.median_ms * (self.beta * inverse_std_normal(u)).exp()
    }
}

/// Standard normal quantile. Exactly zero at the median.
pub fn inverse_std_normal(u: f64) -> f64 {
    if u == 0.5 {
        0.0
    } else {
        Normal::new(0.0, 1.0).unwrap().inverse_cdf(u)
    }
}

/// The set of curves keyed by component class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FragilitySet {
    pub curves: BTreeMap<ComponentClass, FragilityCurve>,
}

impl FragilitySet {
    pub fn get(&self, class: ComponentClass) -> Result<&FragilityCurve, VulnerabilityError> {
        self.curves
            .get(&class)
            .ok_or_else(|| VulnerabilityError::MissingCurve(class.token().into()))
    }

    /// Read fragility.csv (class,median_ms,beta).
    pub fn load(path: &Path) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Row {
            class: String,
            median_ms: f64,
            beta: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let mut set = FragilitySet::default();
        for rec in rdr.deserialize::<Row>() {
            let r = rec.map_err(|e| e.to_string())?;
            let class = ComponentClass::parse(&r.class)
                .ok_or_else(|| format!("unknown component class {:?}", r.class))?;
            if r.median_ms <= 0.0 || r.beta <= 0.0 {
                return Err(format!("fragility curve for {} must have positive parameters", r.class));
            }
            set.curves.insert(
                class,
                FragilityCurve {
                    class,
                    median_ms: r.median_ms,
                    beta: r.beta,
                },
            );
        }
        Ok(set)
    }
}

/// One sampled resistance, with enough context to re-invert after a preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceEntry {
    pub class: ComponentClass,
    /// The uniform draw behind the resistance.
    pub u: f64,
    /// Sampled wind resistance, m/s.
    pub resistance: f64,
}

/// Per-component, time-invariant wind resistances for one realization.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResistanceAssignment {
    pub entries: BTreeMap<String, ResistanceEntry>,
}

impl ResistanceAssignment {
    pub fn resistance(&self, id: &str) -> Option<f64> {
        self.entries.get(id).map(|e| e.resistance)
    }
}

/// Sample the full assignment for one realization. Each component draws from
/// a substream keyed by (seed, component id); a transmission line is merged
/// with its towers by taking the minimum of the line-class and tower-class
/// draws.
pub fn sample_resistances(
    grid: &GridModel,
    curves: &FragilitySet,
    seed: u64,
) -> Result<ResistanceAssignment, VulnerabilityError> {
    let mut out = ResistanceAssignment::default();
    if !grid.lines.is_empty() {
        let line_curve = curves.get(ComponentClass::TransmissionLine)?;
        let tower_curve = curves.curves.get(&ComponentClass::TransmissionTower);
        for l in &grid.lines {
            let u = component_uniform(seed, &l.id);
            let mut r = line_curve.resistance_at(u);
            if let Some(tc) = tower_curve {
                let ut = component_uniform(seed, &format!("{}#tower", l.id));
                r = r.min(tc.resistance_at(ut));
            }
            out.entries.insert(
                l.id.clone(),
                ResistanceEntry {
                    class: ComponentClass::TransmissionLine,
                    u,
                    resistance: r,
                },
            );
        }
    }
    if !grid.feeders.is_empty() {
        let fc = curves.get(ComponentClass::DistributionFeeder)?;
        for f in &grid.feeders {
            let u = component_uniform(seed, &f.id);
            out.entries.insert(
                f.id.clone(),
                ResistanceEntry {
                    class: ComponentClass::DistributionFeeder,
                    u,
                    resistance: fc.resistance_at(u),
                },
            );
        }
    }
    for g in &grid.generators {
        let class = match g.kind {
            GeneratorKind::UtilitySolar => ComponentClass::UtilitySolar,
            GeneratorKind::BtmSolar => ComponentClass::RooftopSolar,
            _ => continue,
        };
        let curve = curves.get(class)?;
        let u = component_uniform(seed, &g.id);
        out.entries.insert(
            g.id.clone(),
            ResistanceEntry {
                class,
                u,
                resistance: curve.resistance_at(u),
            },
        );
    }
    // implicit aggregate BTM unit per feeder with capacity
    let needs_rooftop = grid.feeders.iter().any(|f| f.btm_solar_capacity > 0.0);
    if needs_rooftop {
        let rc = curves.get(ComponentClass::RooftopSolar)?;
        for f in &grid.feeders {
            if f.btm_solar_capacity > 0.0 {
                let id = f.btm_unit_id();
                let u = component_uniform(seed, &id);
                out.entries.insert(
                    id,
                    ResistanceEntry {
                        class: ComponentClass::RooftopSolar,
                        u,
                        resistance: rc.resistance_at(u),
                    },
                );
            }
        }
    }
    Ok(out)
}

/// Replace one component's uniform draw with `rank` and re-invert, leaving
/// every other component untouched.
pub fn preset_resistance_rank(
    assignment: &ResistanceAssignment,
    curves: &FragilitySet,
    component: &str,
    rank: f64,
) -> Result<ResistanceAssignment, VulnerabilityError> {
    let mut out = assignment.clone();
    let entry = out
        .entries
        .get_mut(component)
        .ok_or_else(|| VulnerabilityError::UnknownComponent(component.to_string()))?;
    let curve = curves.get(entry.class)?;
    entry.u = rank;
    entry.resistance = curve.resistance_at(rank);
    Ok(out)
}

/// Absorbing component damage: once failed, failed for the whole event.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DamageState {
    /// Failed component id -> step index of failure.
    pub failed: BTreeMap<String, usize>,
}

impl DamageState {
    pub fn is_failed(&self, id: &str) -> bool {
        self.failed.contains_key(id)
    }

    pub fn fail(&mut self, id: &str, step: usize) -> bool {
        if self.failed.contains_key(id) {
            false
        } else {
            self.failed.insert(id.to_string(), step);
            true
        }
    }
}

/// Fail every intact component whose wind exceeds its resistance. Returns
/// the ids newly failed at this step, in sorted order.
pub fn update_damage(
    state: &mut DamageState,
    assignment: &ResistanceAssignment,
    component_wind: &HashMap<String, f64>,
    step: usize,
) -> Vec<String> {
    let mut newly = Vec::new();
    for (id, entry) in &assignment.entries {
        if state.is_failed(id) {
            continue;
        }
        if let Some(w) = component_wind.get(id) {
            if *w > entry.resistance {
                state.fail(id, step);
                newly.push(id.clone());
            }
        }
    }
    newly
}

/// Cloud-shield solar decay parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarReductionParams {
    /// Normalized radius (multiples of rmax) at/below which the reduction
    /// saturates.
    pub inner_radius_factor: f64,
    /// Normalized radius at/above which irradiance is unaffected.
    pub outer_radius_factor: f64,
    /// Remaining irradiance fraction inside the core.
    pub min_fraction: f64,
}

impl Default for SolarReductionParams {
    fn default() -> Self {
        Self {
            inner_radius_factor: 1.0,
            outer_radius_factor: 8.0,
            min_fraction: 0.25,
        }
    }
}

impl SolarReductionParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 <= self.inner_radius_factor && self.inner_radius_factor < self.outer_radius_factor)
        {
            return Err("solar reduction radii must satisfy 0 <= inner < outer".into());
        }
        if !(0.0..=1.0).contains(&self.min_fraction) {
            return Err("solar min_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Clear-sky diurnal output shape. The default is a daylight plateau from
/// 10:00 to 22:00 UTC; an hourly table can override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalShape {
    pub start_hour: u32,
    pub end_hour: u32,
    /// Optional 24-entry hourly table; takes precedence over the plateau.
    #[serde(default)]
    pub hourly: Option<Vec<f64>>,
}

impl Default for DiurnalShape {
    fn default() -> Self {
        Self {
            start_hour: 10,
            end_hour: 22,
            hourly: None,
        }
    }
}

impl DiurnalShape {
    pub fn value(&self, t: DateTime<Utc>) -> f64 {
        let hour = t.hour();
        if let Some(table) = &self.hourly {
            return table.get(hour as usize).copied().unwrap_or(0.0);
        }
        if hour >= self.start_hour && hour < self.end_hour {
            1.0
        } else {
            0.0
        }
    }
}

/// Fraction of clear-sky solar output at `site` and time `t`: piecewise
/// linear in storm-centered normalized distance, times the diurnal shape.
pub fn solar_fraction(
    track: &StormTrack,
    t: DateTime<Utc>,
    site: GeoPoint,
    params: &SolarReductionParams,
    diurnal: &DiurnalShape,
) -> Result<f64, crate::error::HazardError> {
    let state = track.state_at(t)?;
    let r_km = crate::geo::distance_m(state.center, site) / 1000.0;
    let d = r_km / state.rmax_km;
    let spatial = if d <= params.inner_radius_factor {
        params.min_fraction
    } else if d >= params.outer_radius_factor {
        1.0
    } else {
        let f = (d - params.inner_radius_factor)
            / (params.outer_radius_factor - params.inner_radius_factor);
        params.min_fraction + f * (1.0 - params.min_fraction)
    };
    Ok(spatial * diurnal.value(t))
}

/// Per-step maximum available output for every generation unit, including
/// the implicit BTM aggregates (keyed by `Feeder::btm_unit_id`).
///
/// `gen_wind` and `gen_solar_fraction` are local hazard values at the unit's
/// connection point for this step.
pub fn available_generation(
    grid: &GridModel,
    damage: &DamageState,
    assignment: &ResistanceAssignment,
    gen_wind: &HashMap<String, f64>,
    gen_solar_fraction: &HashMap<String, f64>,
) -> HashMap<String, f64> {
    let _ = assignment;
    let mut out = HashMap::new();
    for g in &grid.generators {
        let avail = if !g.available {
            0.0
        } else {
            match g.kind {
                GeneratorKind::Thermal | GeneratorKind::Hydro => g.p_max,
                GeneratorKind::Wind => {
                    let w = gen_wind.get(&g.id).copied().unwrap_or(0.0);
                    if w > WIND_TURBINE_CUTOFF_MS {
                        0.0
                    } else {
                        g.p_max
                    }
                }
                GeneratorKind::UtilitySolar | GeneratorKind::BtmSolar => {
                    if damage.is_failed(&g.id) {
                        0.0
                    } else {
                        let f = gen_solar_fraction.get(&g.id).copied().unwrap_or(1.0);
                        g.p_max * f
                    }
                }
            }
        };
        out.insert(g.id.clone(), avail.max(0.0));
    }
    for f in &grid.feeders {
        if f.btm_solar_capacity <= 0.0 {
            continue;
        }
        let id = f.btm_unit_id();
        let avail = if damage.is_failed(&id) || damage.is_failed(&f.id) {
            0.0
        } else {
            let frac = gen_solar_fraction.get(&id).copied().unwrap_or(1.0);
            f.btm_solar_capacity * frac
        };
        out.insert(id, avail.max(0.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests_support::two_bus_fixture;
    use chrono::TimeZone;

    fn curves() -> FragilitySet {
        let mut set = FragilitySet::default();
        for (class, m, b) in [
            (ComponentClass::TransmissionLine, 55.0, 0.25),
            (ComponentClass::TransmissionTower, 60.0, 0.2),
            (ComponentClass::DistributionFeeder, 40.0, 0.3),
            (ComponentClass::UtilitySolar, 50.0, 0.2),
            (ComponentClass::RooftopSolar, 45.0, 0.25),
        ] {
            set.curves.insert(
                class,
                FragilityCurve {
                    class,
                    median_ms: m,
                    beta: b,
                },
            );
        }
        set
    }

    #[test]
    fn median_draw_returns_median_exactly() {
        let c = FragilityCurve {
            class: ComponentClass::DistributionFeeder,
            median_ms: 40.0,
            beta: 0.3,
        };
        assert_eq!(c.resistance_at(0.5), 40.0);
    }

    #[test]
    fn upper_tail_draw() {
        let c = FragilityCurve {
            class: ComponentClass::TransmissionLine,
            median_ms: 50.0,
            beta: 0.2,
        };
        let r = c.resistance_at(0.975);
        assert!((r - 73.99).abs() < 0.05, "{r}");
    }

    #[test]
    fn sampling_is_deterministic_and_order_independent() {
        let g = two_bus_fixture();
        let a = sample_resistances(&g, &curves(), 99).unwrap();
        let b = sample_resistances(&g, &curves(), 99).unwrap();
        assert_eq!(a, b);
        let c = sample_resistances(&g, &curves(), 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn missing_curve_is_reported() {
        let g = two_bus_fixture();
        let mut set = curves();
        set.curves.remove(&ComponentClass::DistributionFeeder);
        assert!(matches!(
            sample_resistances(&g, &set, 1),
            Err(VulnerabilityError::MissingCurve(_))
        ));
    }

    #[test]
    fn sampled_resistances_match_lognormal_cdf() {
        // statistical oracle: empirical CDF of 10k per-component draws vs the
        // closed-form lognormal CDF, KS distance below 0.02
        let c = FragilityCurve {
            class: ComponentClass::DistributionFeeder,
            median_ms: 40.0,
            beta: 0.3,
        };
        let mut samples: Vec<f64> = (0..10_000)
            .map(|i| c.resistance_at(component_uniform(7, &format!("c{i}"))))
            .collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        let mut ks = 0.0f64;
        for (i, x) in samples.iter().enumerate() {
            let f = c.cdf(*x);
            ks = ks.max((f - i as f64 / n).abs());
            ks = ks.max(((i + 1) as f64 / n - f).abs());
        }
        assert!(ks < 0.02, "KS distance {ks}");
    }

    #[test]
    fn preset_rank_overrides_one_component() {
        let g = two_bus_fixture();
        let set = curves();
        let a = sample_resistances(&g, &set, 5).unwrap();
        let b = preset_resistance_rank(&a, &set, "l1", 0.5).unwrap();
        // median of the merged line entry class (line curve)
        assert_eq!(b.entries["l1"].resistance, 55.0);
        for (id, e) in &a.entries {
            if id != "l1" {
                assert_eq!(e, &b.entries[id]);
            }
        }
        assert!(matches!(
            preset_resistance_rank(&a, &set, "nope", 0.5),
            Err(VulnerabilityError::UnknownComponent(_))
        ));
    }

    #[test]
    fn damage_is_absorbing_and_idempotent() {
        let g = two_bus_fixture();
        let a = sample_resistances(&g, &curves(), 3).unwrap();
        let mut winds: HashMap<String, f64> = HashMap::new();
        for id in a.entries.keys() {
            winds.insert(id.clone(), 40.0);
        }
        let mut st = DamageState::default();
        // all resistances above 50 -> no change
        let mut strong = a.clone();
        for e in strong.entries.values_mut() {
            e.resistance = 55.0;
        }
        assert!(update_damage(&mut st, &strong, &winds, 0).is_empty());
        // threshold rule: only the weakened line drops
        let mut weak = strong.clone();
        weak.entries.get_mut("l1").unwrap().resistance = 30.0;
        let newly = update_damage(&mut st, &weak, &winds, 4);
        assert_eq!(newly, vec!["l1".to_string()]);
        assert_eq!(st.failed["l1"], 4);
        let snapshot = st.clone();
        assert!(update_damage(&mut st, &weak, &winds, 5).is_empty());
        assert_eq!(st, snapshot);
    }

    #[test]
    fn scaled_winds_fail_a_superset() {
        let g = two_bus_fixture();
        let a = sample_resistances(&g, &curves(), 11).unwrap();
        let mut base: HashMap<String, f64> = HashMap::new();
        for (i, id) in a.entries.keys().enumerate() {
            base.insert(id.clone(), 25.0 + 7.0 * i as f64);
        }
        let scaled: HashMap<String, f64> =
            base.iter().map(|(k, v)| (k.clone(), v * 1.3)).collect();
        let mut st1 = DamageState::default();
        let mut st2 = DamageState::default();
        update_damage(&mut st1, &a, &base, 0);
        update_damage(&mut st2, &a, &scaled, 0);
        for id in st1.failed.keys() {
            assert!(st2.failed.contains_key(id));
        }
    }

    #[test]
    fn solar_fraction_piecewise() {
        let track = StormTrack::new(vec![
            crate::hazard::TrackPoint {
                time: chrono::Utc.with_ymd_and_hms(2022, 9, 18, 12, 0, 0).unwrap(),
                center: GeoPoint::new(18.0, -66.0),
                vmax: 45.0,
                rmax_km: 30.0,
            },
            crate::hazard::TrackPoint {
                time: chrono::Utc.with_ymd_and_hms(2022, 9, 18, 18, 0, 0).unwrap(),
                center: GeoPoint::new(18.0, -66.0),
                vmax: 45.0,
                rmax_km: 30.0,
            },
        ])
        .unwrap();
        let params = SolarReductionParams::default();
        let diurnal = DiurnalShape::default();
        let t = chrono::Utc.with_ymd_and_hms(2022, 9, 18, 14, 0, 0).unwrap();
        // at the center: core saturation
        let f_core = solar_fraction(&track, t, GeoPoint::new(18.0, -66.0), &params, &diurnal).unwrap();
        assert_eq!(f_core, params.min_fraction);
        // far outside the shield: full daylight output
        let f_far = solar_fraction(&track, t, GeoPoint::new(18.0, -60.0), &params, &diurnal).unwrap();
        assert_eq!(f_far, 1.0);
        // night: zero regardless of distance
        let night = chrono::Utc.with_ymd_and_hms(2022, 9, 18, 13, 0, 0).unwrap();
        let _ = night;
        let t_night = chrono::Utc.with_ymd_and_hms(2022, 9, 18, 23, 0, 0).unwrap();
        assert!(track.state_at(t_night).is_err()); // outside span is rejected
        // continuity: fractions rise monotonically with distance
        let mut last = 0.0;
        for k in 0..20 {
            let lon = -66.0 + 0.12 * k as f64;
            let f = solar_fraction(&track, t, GeoPoint::new(18.0, lon), &params, &diurnal).unwrap();
            assert!(f >= last - 1e-12 && (0.0..=1.0).contains(&f));
            last = f;
        }
    }

    #[test]
    fn generation_availability_rules() {
        let mut g = two_bus_fixture();
        g.generators.push(crate::grid::Generator {
            id: "w1".into(),
            bus: "b1".into(),
            kind: GeneratorKind::Wind,
            p_max: 50.0,
            p_min: 0.0,
            ramp_rate: 50.0,
            inertia_h: 0.0,
            marginal_cost: 0.0,
            available: true,
        });
        g.generators.push(crate::grid::Generator {
            id: "s1".into(),
            bus: "b2".into(),
            kind: GeneratorKind::UtilitySolar,
            p_max: 100.0,
            p_min: 0.0,
            ramp_rate: 100.0,
            inertia_h: 0.0,
            marginal_cost: 0.0,
            available: true,
        });
        let assignment = sample_resistances(&g, &curves(), 1).unwrap();
        let damage = DamageState::default();
        let mut wind = HashMap::new();
        wind.insert("w1".to_string(), 26.0);
        let mut frac = HashMap::new();
        frac.insert("s1".to_string(), 0.268);
        let avail = available_generation(&g, &damage, &assignment, &wind, &frac);
        assert_eq!(avail["w1"], 0.0); // above the 25 m/s cutoff
        assert!((avail["s1"] - 26.8).abs() < 1e-12);
        assert_eq!(avail["g1"], 200.0);
        // intact solar under clear sky gives full output
        let clear: HashMap<String, f64> = HashMap::new();
        let avail2 = available_generation(&g, &damage, &assignment, &clear, &clear);
        assert_eq!(avail2["s1"], 100.0);
    }
}
