//! Tropical-cyclone surface wind field: best-track ingestion and
//! interpolation, parametric radial wind profiles, translation asymmetry,
//! and log-profile land roughness conversion.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::HazardError;
use crate::geo::{self, GeoPoint};

/// Anemometer reference height for the log wind profile, meters.
const Z_REF_HEIGHT_M: f64 = 10.0;
/// Open-water aerodynamic roughness length, meters.
pub const Z0_OPEN_WATER_M: f64 = 0.0003;
/// Spacing for resampling line geometries before taking the span maximum.
pub const GEOMETRY_SAMPLE_SPACING_M: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub time: DateTime<Utc>,
    pub center: GeoPoint,
    /// Maximum sustained wind, m/s.
    pub vmax: f64,
    /// Radius of maximum wind, km.
    pub rmax_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StormTrack {
    pub points: Vec<TrackPoint>,
}

impl StormTrack {
    pub fn new(points: Vec<TrackPoint>) -> Result<Self, HazardError> {
        if points.len() < 2 {
            return Err(HazardError::DegenerateTrack);
        }
        for w in points.windows(2) {
            if w[1].time <= w[0].time {
                return Err(HazardError::DegenerateTrack);
            }
        }
        Ok(Self { points })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.points[0].time
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.points[self.points.len() - 1].time
    }

    fn segment_index(&self, t: DateTime<Utc>) -> Result<usize, HazardError> {
        if t < self.start() || t > self.end() {
            return Err(HazardError::OutOfRange(t.to_rfc3339()));
        }
        // last segment whose start is <= t
        let mut i = self.points.partition_point(|p| p.time <= t);
        if i > 0 {
            i -= 1;
        }
        Ok(i.min(self.points.len() - 2))
    }

    /// Storm state (center, vmax, rmax) at time `t`, great-circle in space,
    /// linear in time for intensity and size.
    pub fn state_at(&self, t: DateTime<Utc>) -> Result<TrackPoint, HazardError> {
        let i = self.segment_index(t)?;
        let (a, b) = (&self.points[i], &self.points[i + 1]);
        if t == a.time {
            return Ok(*a);
        }
        if t == b.time {
            return Ok(*b);
        }
        let span = (b.time - a.time).num_milliseconds() as f64;
        let f = (t - a.time).num_milliseconds() as f64 / span;
        Ok(TrackPoint {
            time: t,
            center: geo::intermediate(a.center, b.center, f),
            vmax: a.vmax + f * (b.vmax - a.vmax),
            rmax_km: a.rmax_km + f * (b.rmax_km - a.rmax_km),
        })
    }
}

/// Resample a track to a fixed `dt_minutes` cadence. Original fixes that
/// land on the lattice are preserved verbatim; the tail is truncated if the
/// span is not a multiple of `dt_minutes`.
pub fn interpolate_track(track: &StormTrack, dt_minutes: i64) -> Result<StormTrack, HazardError> {
    if dt_minutes <= 0 {
        return Err(HazardError::DegenerateTrack);
    }
    let mut points = Vec::new();
    let mut t = track.start();
    while t <= track.end() {
        points.push(track.state_at(t)?);
        t += Duration::minutes(dt_minutes);
    }
    StormTrack::new(points)
}

/// Storm translation velocity at `t` as (east, north) m/s. Centered finite
/// difference over adjacent samples; one-sided at the track ends.
pub fn translation_velocity(
    track: &StormTrack,
    t: DateTime<Utc>,
) -> Result<(f64, f64), HazardError> {
    let i = track.segment_index(t)?;
    let n = track.points.len();
    // index of the sample the query falls on (or just before)
    let (lo, hi) = if i == 0 && t <= track.points[0].time {
        (0, 1)
    } else if t >= track.points[n - 1].time {
        (n - 2, n - 1)
    } else if i == 0 {
        (0, 1)
    } else {
        (i - 1, i + 1)
    };
    let (a, b) = (&track.points[lo], &track.points[hi]);
    let dt_s = (b.time - a.time).num_milliseconds() as f64 / 1000.0;
    let (de, dn) = geo::east_north_m(a.center, b.center);
    Ok((de / dt_s, dn / dt_s))
}

/// Radial wind profile selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindProfile {
    /// Solid-body rotation inside rmax, (rmax/r)^alpha decay outside.
    ModifiedRankine { alpha: f64 },
    /// Holland pressure-profile wind with shape parameter B.
    Holland { b: f64 },
}

impl Default for WindProfile {
    fn default() -> Self {
        WindProfile::ModifiedRankine { alpha: 0.5 }
    }
}

/// Axisymmetric tangential wind speed at radius `r_km` from the center.
pub fn radial_wind(r_km: f64, vmax: f64, rmax_km: f64, profile: WindProfile) -> f64 {
    debug_assert!(r_km >= 0.0 && rmax_km > 0.0);
    match profile {
        WindProfile::ModifiedRankine { alpha } => {
            if r_km <= rmax_km {
                vmax * r_km / rmax_km
            } else {
                vmax * (rmax_km / r_km).powf(alpha)
            }
        }
        WindProfile::Holland { b } => {
            if r_km <= 0.0 {
                0.0
            } else {
                let x = (rmax_km / r_km).powf(b);
                vmax * (x * (1.0 - x).exp()).sqrt()
            }
        }
    }
}

/// Full wind-field parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindParams {
    #[serde(default)]
    pub profile: WindProfile,
    /// Fraction of the translation speed added as background flow.
    pub background_flow_fraction: f64,
    /// Rotation of the background flow, degrees counterclockwise.
    pub background_flow_rotation_deg: f64,
    /// Global multiplicative gust factor applied to the surface wind.
    pub gust_factor: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            profile: WindProfile::default(),
            background_flow_fraction: 0.55,
            background_flow_rotation_deg: 20.0,
            gust_factor: 1.0,
        }
    }
}

impl WindParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.background_flow_fraction) {
            return Err("background_flow_fraction must lie in [0, 1]".into());
        }
        match self.profile {
            WindProfile::ModifiedRankine { alpha } if alpha <= 0.0 => {
                Err("modified-Rankine alpha must be positive".into())
            }
            WindProfile::Holland { b } if b <= 0.0 => Err("Holland B must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// Aerodynamic roughness length raster (ESRI ASCII grid), with an
/// open-water reference value used off-raster.
#[derive(Debug)]
pub struct RoughnessMap {
    ncols: usize,
    nrows: usize,
    xll: f64,
    yll: f64,
    cellsize: f64,
    nodata: f64,
    /// Row-major, first row is the northernmost.
    values: Vec<f64>,
    pub z0_ref: f64,
    warned_outside: AtomicBool,
}

impl RoughnessMap {
    /// Uniform roughness everywhere (no raster supplied).
    pub fn uniform(z0_ref: f64) -> Self {
        Self {
            ncols: 0,
            nrows: 0,
            xll: 0.0,
            yll: 0.0,
            cellsize: 1.0,
            nodata: -9999.0,
            values: Vec::new(),
            z0_ref,
            warned_outside: AtomicBool::new(true),
        }
    }

    /// Parse an ESRI ASCII grid of z0 in meters.
    pub fn from_ascii_grid(path: &Path, z0_ref: f64) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut tokens = text.split_whitespace();
        let mut header = std::collections::HashMap::new();
        let mut first_value: Option<f64> = None;
        while let Some(tok) = tokens.next() {
            if let Ok(v) = tok.parse::<f64>() {
                first_value = Some(v);
                break;
            }
            let key = tok.to_ascii_lowercase();
            let val: f64 = tokens
                .next()
                .ok_or_else(|| format!("missing value for header key {key}"))?
                .parse()
                .map_err(|e| format!("bad value for {key}: {e}"))?;
            header.insert(key, val);
        }
        let get = |k: &str| header.get(k).copied().ok_or_else(|| format!("missing header {k}"));
        let ncols = get("ncols")? as usize;
        let nrows = get("nrows")? as usize;
        let xll = get("xllcorner")?;
        let yll = get("yllcorner")?;
        let cellsize = get("cellsize")?;
        let nodata = header.get("nodata_value").copied().unwrap_or(-9999.0);
        let mut values = Vec::with_capacity(ncols * nrows);
        if let Some(v) = first_value {
            values.push(v);
        }
        for tok in tokens {
            values.push(tok.parse::<f64>().map_err(|e| format!("bad cell value: {e}"))?);
        }
        if values.len() != ncols * nrows {
            return Err(format!(
                "expected {} cells, found {}",
                ncols * nrows,
                values.len()
            ));
        }
        Ok(Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
            z0_ref,
            warned_outside: AtomicBool::new(false),
        })
    }

    /// Roughness length at a site; off-raster or nodata falls back to the
    /// open-water reference (warning logged once).
    pub fn z0_at(&self, site: GeoPoint) -> f64 {
        if self.values.is_empty() {
            return self.z0_ref;
        }
        let col = ((site.lon - self.xll) / self.cellsize).floor();
        let row_from_bottom = ((site.lat - self.yll) / self.cellsize).floor();
        if col < 0.0
            || row_from_bottom < 0.0
            || col as usize >= self.ncols
            || row_from_bottom as usize >= self.nrows
        {
            if !self.warned_outside.swap(true, Ordering::Relaxed) {
                log::warn!("site outside roughness raster; using open-water z0");
            }
            return self.z0_ref;
        }
        let row = self.nrows - 1 - row_from_bottom as usize;
        let v = self.values[row * self.ncols + col as usize];
        if v == self.nodata || v <= 0.0 {
            self.z0_ref
        } else {
            v
        }
    }

    /// Log-profile conversion factor from open water to the site surface.
    pub fn factor_at(&self, site: GeoPoint) -> f64 {
        let z0 = self.z0_at(site);
        let f = (Z_REF_HEIGHT_M / z0).ln() / (Z_REF_HEIGHT_M / self.z0_ref).ln();
        f.max(0.0)
    }
}

/// Surface wind speed at a site and time: rotational wind turned 90° CCW
/// from the radial direction, plus the rotated background flow, converted
/// to the local surface roughness.
pub fn wind_at(
    track: &StormTrack,
    t: DateTime<Utc>,
    site: GeoPoint,
    params: &WindParams,
    roughness: &RoughnessMap,
) -> Result<f64, HazardError> {
    let state = track.state_at(t)?;
    let (de, dn) = geo::east_north_m(state.center, site);
    let r_m = (de * de + dn * dn).sqrt();
    let v_rot = radial_wind(r_m / 1000.0, state.vmax, state.rmax_km, params.profile);
    let (mut e, mut n) = (0.0, 0.0);
    if r_m > 1e-9 {
        // tangential direction, counterclockwise (northern hemisphere)
        e += v_rot * (-dn / r_m);
        n += v_rot * (de / r_m);
    }
    let (te, tn) = translation_velocity(track, t)?;
    let th = params.background_flow_rotation_deg.to_radians();
    let (ct, st) = (th.cos(), th.sin());
    let beta = params.background_flow_fraction;
    e += beta * (te * ct - tn * st);
    n += beta * (te * st + tn * ct);
    let open_water = (e * e + n * n).sqrt();
    Ok((open_water * roughness.factor_at(site) * params.gust_factor).max(0.0))
}

/// Hazard intensity for an extended component: the maximum of `wind_at`
/// over the geometry's sample points.
pub fn component_wind(
    track: &StormTrack,
    t: DateTime<Utc>,
    geometry: &[GeoPoint],
    params: &WindParams,
    roughness: &RoughnessMap,
) -> Result<f64, HazardError> {
    let mut max = 0.0f64;
    for p in geometry {
        max = max.max(wind_at(track, t, *p, params, roughness)?);
    }
    Ok(max)
}

/// Read a track CSV (time_iso8601,lat,lon,vmax_ms,rmax_km).
pub fn load_track(path: &Path) -> Result<StormTrack, String> {
    #[derive(Deserialize)]
    struct Row {
        time_iso8601: DateTime<Utc>,
        lat: f64,
        lon: f64,
        vmax_ms: f64,
        rmax_km: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut points = Vec::new();
    for rec in rdr.deserialize::<Row>() {
        let r = rec.map_err(|e| e.to_string())?;
        points.push(TrackPoint {
            time: r.time_iso8601,
            center: GeoPoint::new(r.lat, r.lon),
            vmax: r.vmax_ms,
            rmax_km: r.rmax_km,
        });
    }
    StormTrack::new(points).map_err(|e| e.to_string())
}

/// Write a track CSV in the same format `load_track` reads.
pub fn write_track(track: &StormTrack, path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_iso8601", "lat", "lon", "vmax_ms", "rmax_km"])?;
    for p in &track.points {
        w.write_record([
            p.time.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            p.center.lat.to_string(),
            p.center.lon.to_string(),
            p.vmax.to_string(),
            p.rmax_km.to_string(),
        ])?;
    }
    w.flush()
}
