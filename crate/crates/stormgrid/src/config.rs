//! Run configuration: one JSON document covering paths, horizon, hazard
//! parameters, stability threshold, dispatch costs, and ensemble settings.
//! Every physical default lives here, not buried in the solvers.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch::CostWeights;
use crate::fragility::{DiurnalShape, SolarReductionParams};
use crate::hazard::WindParams;
use crate::network::TripRule;
use crate::sim::SimParams;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Default surface roughness length for land cells when no raster is
/// supplied, m (open terrain with scattered obstacles).
pub const DEFAULT_Z0_M: f64 = 0.03;

fn default_schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 9, 18, 0, 0, 0).unwrap()
}

fn default_end() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 9, 18, 23, 0, 0).unwrap()
}

fn default_step_minutes() -> i64 {
    10
}

fn default_rocof_limit() -> f64 {
    2.0
}

fn default_f0() -> f64 {
    60.0
}

fn default_z0() -> f64 {
    DEFAULT_Z0_M
}

fn default_n() -> usize {
    1000
}

fn default_master_seed() -> u64 {
    20220918
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonConfig {
    #[serde(default = "default_start")]
    pub start_utc: DateTime<Utc>,
    #[serde(default = "default_end")]
    pub end_utc: DateTime<Utc>,
    #[serde(default = "default_step_minutes")]
    pub step_minutes: i64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            start_utc: default_start(),
            end_utc: default_end(),
            step_minutes: default_step_minutes(),
        }
    }
}

impl HorizonConfig {
    /// Step count including both endpoints (the default horizon is 139).
    pub fn steps(&self) -> usize {
        ((self.end_utc - self.start_utc).num_minutes() / self.step_minutes) as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            master_seed: default_master_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    /// Directory containing buses.csv, lines.csv, generators.csv,
    /// feeders.csv (and optional shapes.csv).
    pub grid_dir: PathBuf,
    /// Storm track CSV (time_iso8601,lat,lon,vmax_ms,rmax_km).
    pub track: PathBuf,
    /// Optional ESRI ASCII roughness raster; uniform `default_z0_m`
    /// otherwise.
    #[serde(default)]
    pub roughness: Option<PathBuf>,
    #[serde(default = "default_z0")]
    pub default_z0_m: f64,
    /// Fragility table CSV (class,median_ms,beta).
    pub fragility: PathBuf,
    /// Optional observed-outage CSV (time_iso8601,region,pct_with_power).
    #[serde(default)]
    pub observed: Option<PathBuf>,
    #[serde(default)]
    pub horizon: HorizonConfig,
    #[serde(default)]
    pub wind: WindParams,
    #[serde(default)]
    pub solar: SolarReductionParams,
    #[serde(default)]
    pub diurnal: DiurnalShape,
    #[serde(default = "default_rocof_limit")]
    pub rocof_limit_hz_per_s: f64,
    #[serde(default = "default_f0")]
    pub f0_hz: f64,
    #[serde(default)]
    pub costs: CostWeights,
    #[serde(default)]
    pub trip_rule: TripRule,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unsupported schema_version {found}; this binary supports {supported}")]
    SchemaVersion { found: u32, supported: u32 },
    #[error("referenced path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig =
            serde_json::from_str(&raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: cfg.schema_version,
                supported: CONFIG_SCHEMA_VERSION,
            });
        }
        // relative paths resolve against the config file's directory
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Ok(cfg.resolved(base))
    }

    fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.grid_dir);
        fix(&mut self.track);
        fix(&mut self.fragility);
        if let Some(r) = self.roughness.as_mut() {
            fix(r);
        }
        if let Some(o) = self.observed.as_mut() {
            fix(o);
        }
        fix(&mut self.output_dir);
        self
    }

    /// Structural checks that do not require opening the data files.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in [&self.grid_dir, &self.track, &self.fragility] {
            if !p.exists() {
                return Err(ConfigError::MissingPath(p.clone()));
            }
        }
        for p in [&self.roughness, &self.observed].into_iter().flatten() {
            if !p.exists() {
                return Err(ConfigError::MissingPath(p.clone()));
            }
        }
        if self.horizon.step_minutes <= 0 {
            return Err(ConfigError::Invalid("step_minutes must be positive".into()));
        }
        if self.horizon.end_utc < self.horizon.start_utc {
            return Err(ConfigError::Invalid("horizon ends before it starts".into()));
        }
        if self.rocof_limit_hz_per_s <= 0.0 {
            return Err(ConfigError::Invalid("rocof limit must be positive".into()));
        }
        if self.f0_hz <= 0.0 {
            return Err(ConfigError::Invalid("f0_hz must be positive".into()));
        }
        if !(self.costs.voll > self.costs.curtailment && self.costs.curtailment >= 0.0) {
            return Err(ConfigError::Invalid(
                "cost ordering violated: need voll > curtailment >= 0".into(),
            ));
        }
        self.wind
            .validate()
            .map_err(ConfigError::Invalid)?;
        self.solar
            .validate()
            .map_err(ConfigError::Invalid)?;
        if self.ensemble.n == 0 {
            return Err(ConfigError::Invalid("ensemble n must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            start: self.horizon.start_utc,
            steps: self.horizon.steps(),
            step_minutes: self.horizon.step_minutes,
            wind: self.wind,
            solar: self.solar,
            diurnal: self.diurnal.clone(),
            rocof_limit: self.rocof_limit_hz_per_s,
            weights: self.costs,
            trip_rule: self.trip_rule,
            f0_hz: self.f0_hz,
        }
    }

    /// Stable hash of the canonicalized config, stamped onto every output
    /// for provenance.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        format!("{digest:x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_139_steps() {
        let h = HorizonConfig::default();
        assert_eq!(h.steps(), 139);
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let raw = r#"{
            "grid_dir": "grid",
            "track": "track.csv",
            "fragility": "fragility.csv"
        }"#;
        let cfg: RunConfig = serde_json::from_str(raw).unwrap();
        assert_eq!(cfg.schema_version, CONFIG_SCHEMA_VERSION);
        assert_eq!(cfg.rocof_limit_hz_per_s, 2.0);
        assert_eq!(cfg.costs.voll, 10_000.0);
        assert_eq!(cfg.ensemble.n, 1000);
    }

    #[test]
    fn unknown_schema_version_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("config.json");
        fs::write(
            &p,
            r#"{"schema_version": 99, "grid_dir": "g", "track": "t", "fragility": "f"}"#,
        )
        .unwrap();
        match RunConfig::load(&p) {
            Err(ConfigError::SchemaVersion { found: 99, .. }) => {}
            other => panic!("expected schema refusal, got {other:?}"),
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let raw = r#"{"grid_dir": "g", "track": "t", "fragility": "f"}"#;
        let a: RunConfig = serde_json::from_str(raw).unwrap();
        let b: RunConfig = serde_json::from_str(raw).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.rocof_limit_hz_per_s = 1.0;
        assert_ne!(a.hash(), c.hash());
    }
}
