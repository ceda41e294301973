//! Great-circle geometry helpers and WKT LINESTRING parsing.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Geographic point, degrees WGS84.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Haversine distance in meters.
pub fn distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

/// East/north displacement of `b` relative to `a` in meters, using a local
/// tangent-plane approximation at the midpoint latitude.
pub fn east_north_m(a: GeoPoint, b: GeoPoint) -> (f64, f64) {
    let mean_lat = 0.5 * (a.lat + b.lat);
    let east = (b.lon - a.lon).to_radians() * mean_lat.to_radians().cos() * EARTH_RADIUS_M;
    let north = (b.lat - a.lat).to_radians() * EARTH_RADIUS_M;
    (east, north)
}

/// Point at fraction `f` along the great circle from `a` to `b` (slerp).
pub fn intermediate(a: GeoPoint, b: GeoPoint, f: f64) -> GeoPoint {
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let d = distance_m(a, b) / EARTH_RADIUS_M;
    if d < 1e-12 {
        return a;
    }
    let sa = ((1.0 - f) * d).sin() / d.sin();
    let sb = (f * d).sin() / d.sin();
    let x = sa * lat1.cos() * lon1.cos() + sb * lat2.cos() * lon2.cos();
    let y = sa * lat1.cos() * lon1.sin() + sb * lat2.cos() * lon2.sin();
    let z = sa * lat1.sin() + sb * lat2.sin();
    GeoPoint {
        lat: z.atan2((x * x + y * y).sqrt()).to_degrees(),
        lon: y.atan2(x).to_degrees(),
    }
}

/// Resample a polyline so consecutive samples are at most `max_spacing_m`
/// apart. Original vertices are kept.
pub fn densify(points: &[GeoPoint], max_spacing_m: f64) -> Vec<GeoPoint> {
    let mut out = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        out.push(a);
        let d = distance_m(a, b);
        if d > max_spacing_m {
            let segments = (d / max_spacing_m).ceil() as usize;
            for k in 1..segments {
                out.push(intermediate(a, b, k as f64 / segments as f64));
            }
        }
    }
    if let Some(last) = points.last() {
        out.push(*last);
    }
    out
}

/// Parse a WKT `LINESTRING(lon lat, lon lat, ...)`.
pub fn parse_linestring(wkt: &str) -> Result<Vec<GeoPoint>, String> {
    let s = wkt.trim();
    let upper = s.to_ascii_uppercase();
    if !upper.starts_with("LINESTRING") {
        return Err(format!("expected LINESTRING, got {s:?}"));
    }
    let open = s.find('(').ok_or_else(|| "missing '('".to_string())?;
    let close = s.rfind(')').ok_or_else(|| "missing ')'".to_string())?;
    if close <= open {
        return Err("malformed parentheses".to_string());
    }
    let mut pts = Vec::new();
    for pair in s[open + 1..close].split(',') {
        let mut it = pair.split_whitespace();
        let lon: f64 = it
            .next()
            .ok_or_else(|| "empty coordinate pair".to_string())?
            .parse()
            .map_err(|e| format!("bad lon in {pair:?}: {e}"))?;
        let lat: f64 = it
            .next()
            .ok_or_else(|| format!("missing lat in {pair:?}"))?
            .parse()
            .map_err(|e| format!("bad lat in {pair:?}: {e}"))?;
        pts.push(GeoPoint { lat, lon });
    }
    if pts.len() < 2 {
        return Err("LINESTRING needs at least 2 points".to_string());
    }
    Ok(pts)
}

/// Serialize points back to WKT, lon-lat order.
pub fn to_linestring(points: &[GeoPoint]) -> String {
    let coords: Vec<String> = points.iter().map(|p| format!("{} {}", p.lon, p.lat)).collect();
    format!("LINESTRING({})", coords.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_degree_of_latitude() {
        let a = GeoPoint::new(18.0, -66.0);
        let b = GeoPoint::new(19.0, -66.0);
        let d = distance_m(a, b);
        assert!((d - 111_194.9).abs() < 10.0, "{d}");
    }

    #[test]
    fn intermediate_endpoints() {
        let a = GeoPoint::new(18.0, -67.0);
        let b = GeoPoint::new(19.5, -65.0);
        let m0 = intermediate(a, b, 0.0);
        let m1 = intermediate(a, b, 1.0);
        assert!((m0.lat - a.lat).abs() < 1e-9 && (m0.lon - a.lon).abs() < 1e-9);
        assert!((m1.lat - b.lat).abs() < 1e-9 && (m1.lon - b.lon).abs() < 1e-9);
        let mid = intermediate(a, b, 0.5);
        let d1 = distance_m(a, mid);
        let d2 = distance_m(mid, b);
        assert!((d1 - d2).abs() < 1.0);
    }

    #[test]
    fn densify_respects_spacing() {
        let pts = vec![GeoPoint::new(18.0, -67.0), GeoPoint::new(18.0, -66.0)];
        let dense = densify(&pts, 1000.0);
        assert!(dense.len() > 100);
        for w in dense.windows(2) {
            assert!(distance_m(w[0], w[1]) <= 1000.0 + 1.0);
        }
        assert_eq!(dense.first(), pts.first());
        assert_eq!(dense.last(), pts.last());
    }

    #[test]
    fn wkt_round_trip() {
        let pts = vec![GeoPoint::new(18.25, -66.5), GeoPoint::new(18.5, -66.0)];
        let wkt = to_linestring(&pts);
        assert_eq!(parse_linestring(&wkt).unwrap(), pts);
    }

    #[test]
    fn wkt_rejects_garbage() {
        assert!(parse_linestring("POINT(1 2)").is_err());
        assert!(parse_linestring("LINESTRING(1 2)").is_err());
    }
}
