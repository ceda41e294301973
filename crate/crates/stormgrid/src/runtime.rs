//! Loading a full run context (config + datasets) for the CLI and for
//! foreign-language callers.

use std::path::Path;

use crate::config::RunConfig;
use crate::fragility::FragilitySet;
use crate::grid::{load_grid, GridModel, GridPaths};
use crate::hazard::{load_track, RoughnessMap, StormTrack};
use crate::sim::SimParams;

/// Everything a run needs, loaded and validated.
pub struct LoadedRun {
    pub config: RunConfig,
    pub grid: GridModel,
    pub track: StormTrack,
    pub curves: FragilitySet,
    pub roughness: RoughnessMap,
    pub params: SimParams,
}

pub fn load_run(config_path: &Path) -> Result<LoadedRun, String> {
    let config = RunConfig::load(config_path).map_err(|e| e.to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    let grid = load_grid(&GridPaths::in_dir(&config.grid_dir)).map_err(|e| e.to_string())?;
    grid.validate().map_err(|e| e.to_string())?;
    let track = load_track(&config.track)?;
    let curves = FragilitySet::load(&config.fragility)?;
    let roughness = match &config.roughness {
        Some(p) => RoughnessMap::from_ascii_grid(p, config.default_z0_m)?,
        None => RoughnessMap::uniform(config.default_z0_m),
    };
    let params = config.sim_params();
    Ok(LoadedRun {
        config,
        grid,
        track,
        curves,
        roughness,
        params,
    })
}
