//! TOML config files: terrain calibration, campaign grid, controller gains.
//!
//! Three human-editable files drive the toolchain. The terrain file carries
//! a provenance tag on every slip anchor (`paper` for values stated in the
//! reference measurements, `derived` for values computed from stated ratios,
//! `free` for interpolations chosen to connect anchors). Loaders validate
//! schema versions and model invariants before anything runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{CampaignConfig, DEFAULT_BASE_SEED, DEFAULT_TRIALS_PER_CONFIG};
use crate::controller::PidGains;
use crate::scaling::TESTED_HEIGHTS_MM;
use crate::terrain::{by_name, default_catalog, TerrainModel};

/// Version stamp shared by all three config files.
pub const CONFIG_SCHEMA: u32 = 1;

/// Config load/save failures.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io failed at {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("config parse failed at {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("config render failed: {0}")]
    Render(String),
    #[error("unsupported config schema {got}, expected {expected}")]
    Schema { expected: u32, got: u32 },
    #[error("campaign references unknown terrain {0:?}")]
    UnknownTerrain(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Terrain calibration file: the full catalog with per-anchor provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainFile {
    pub schema: u32,
    pub terrain: Vec<TerrainModel>,
}

impl Default for TerrainFile {
    fn default() -> Self {
        Self { schema: CONFIG_SCHEMA, terrain: default_catalog() }
    }
}

/// Campaign grid file; terrains are referenced by name into the calibration
/// catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignFile {
    pub schema: u32,
    pub terrains: Vec<String>,
    pub heights_mm: Vec<f64>,
    pub trials_per_config: usize,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for CampaignFile {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            terrains: default_catalog().into_iter().map(|t| t.name).collect(),
            heights_mm: TESTED_HEIGHTS_MM.to_vec(),
            trials_per_config: DEFAULT_TRIALS_PER_CONFIG,
            base_seed: DEFAULT_BASE_SEED,
            output_dir: None,
        }
    }
}

/// Controller gains file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainsFile {
    pub schema: u32,
    #[serde(flatten)]
    pub gains: PidGains<f64>,
}

impl Default for GainsFile {
    fn default() -> Self {
        Self { schema: CONFIG_SCHEMA, gains: PidGains::default() }
    }
}

fn check_schema(got: u32) -> Result<(), ConfigError> {
    if got != CONFIG_SCHEMA {
        return Err(ConfigError::Schema { expected: CONFIG_SCHEMA, got });
    }
    Ok(())
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), detail: e.to_string() })?;
    toml::from_str(&text)
        .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), detail: e.to_string() })
}

/// Loads and validates the terrain calibration catalog.
pub fn load_terrain_file(path: &Path) -> Result<Vec<TerrainModel>, ConfigError> {
    let file: TerrainFile = read_toml(path)?;
    check_schema(file.schema)?;
    for terrain in &file.terrain {
        terrain
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("terrain {}: {e}", terrain.name)))?;
    }
    Ok(file.terrain)
}

/// Loads the campaign grid file (terrain names unresolved).
pub fn load_campaign_file(path: &Path) -> Result<CampaignFile, ConfigError> {
    let file: CampaignFile = read_toml(path)?;
    check_schema(file.schema)?;
    Ok(file)
}

/// Loads and validates controller gains.
pub fn load_gains_file(path: &Path) -> Result<PidGains<f64>, ConfigError> {
    let file: GainsFile = read_toml(path)?;
    check_schema(file.schema)?;
    file.gains.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(file.gains)
}

/// Resolves a campaign file against a terrain catalog and gains.
pub fn resolve_campaign(
    file: &CampaignFile,
    catalog: &[TerrainModel],
    gains: PidGains<f64>,
) -> Result<CampaignConfig, ConfigError> {
    let mut terrains = Vec::with_capacity(file.terrains.len());
    for name in &file.terrains {
        let model = by_name(catalog, name)
            .map_err(|_| ConfigError::UnknownTerrain(name.clone()))?;
        terrains.push(model.clone());
    }
    Ok(CampaignConfig {
        terrains,
        heights_mm: file.heights_mm.clone(),
        trials_per_config: file.trials_per_config,
        base_seed: file.base_seed,
        output_dir: file.output_dir.clone(),
        gains,
    })
}

/// Renders one config value as TOML with a comment banner.
fn render<T: Serialize>(banner: &str, value: &T) -> Result<String, ConfigError> {
    let body = toml::to_string_pretty(value).map_err(|e| ConfigError::Render(e.to_string()))?;
    Ok(format!("{banner}\n{body}"))
}

/// Default terrain file rendered as TOML with the provenance key explained.
pub fn render_default_terrain_toml() -> Result<String, ConfigError> {
    render(
        "# Terrain calibration catalog.\n\
         # Each slip anchor carries a provenance tag:\n\
         #   paper   - value stated directly in the reference measurements\n\
         #   derived - value computed from stated ratios or deltas\n\
         #   free    - interpolation chosen to connect anchors smoothly\n\
         # slip_noise_sigma is the trial-to-trial standard deviation; the\n\
         # immobilization block marks heights below which the wheel cannot\n\
         # progress (full_slip spins in place, stall stops the motor).",
        &TerrainFile::default(),
    )
}

/// Default campaign file rendered as TOML.
pub fn render_default_campaign_toml() -> Result<String, ConfigError> {
    render(
        "# Campaign grid: every listed terrain is run at every height,\n\
         # trials_per_config times. Terrain names resolve against the\n\
         # calibration catalog (terrain.toml). Heights are grouser heights\n\
         # in millimetres within [0, 17.5]. Seeds are assigned\n\
         # base_seed + cell_index * trials_per_config + trial_index.\n\
         # Uncomment output_dir to write trial logs and reports to disk.\n\
         # output_dir = \"out/campaign\"",
        &CampaignFile::default(),
    )
}

/// Default gains file rendered as TOML.
pub fn render_default_gains_toml() -> Result<String, ConfigError> {
    render(
        "# Grouser height controller gains. Errors are in millimetres and\n\
         # the output is a unitless servo command saturated to\n\
         # [-output_limit, output_limit]; ts_s is the control period and\n\
         # derivative_filter_s the derivative low-pass time constant.\n\
         # integral_limit clamps the integral state (anti-windup).",
        &GainsFile::default(),
    )
}

/// Writes the three default config files into a directory.
pub fn write_default_configs(dir: &Path) -> Result<(), ConfigError> {
    fs::create_dir_all(dir)
        .map_err(|e| ConfigError::Io { path: dir.to_path_buf(), detail: e.to_string() })?;
    for (name, text) in [
        ("terrain.toml", render_default_terrain_toml()?),
        ("campaign.toml", render_default_campaign_toml()?),
        ("gains.toml", render_default_gains_toml()?),
    ] {
        let path = dir.join(name);
        fs::write(&path, text)
            .map_err(|e| ConfigError::Io { path, detail: e.to_string() })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terrain_file_round_trips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("terrain.toml");
        fs::write(&path, render_default_terrain_toml().unwrap()).unwrap();
        let catalog = load_terrain_file(&path).unwrap();
        assert_eq!(catalog, default_catalog());
    }

    #[test]
    fn terrain_anchors_carry_provenance_tags_in_the_file() {
        let text = render_default_terrain_toml().unwrap();
        for tag in ["provenance = \"paper\"", "provenance = \"derived\"", "provenance = \"free\""]
        {
            assert!(text.contains(tag), "missing {tag}");
        }
        assert!(text.contains("full_slip"));
        assert!(text.contains("stall"));
    }

    #[test]
    fn campaign_file_resolves_against_the_catalog() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("campaign.toml");
        fs::write(&path, render_default_campaign_toml().unwrap()).unwrap();
        let file = load_campaign_file(&path).unwrap();
        let config =
            resolve_campaign(&file, &default_catalog(), PidGains::default()).unwrap();
        assert_eq!(config.terrains.len(), 5);
        assert_eq!(config.heights_mm, TESTED_HEIGHTS_MM.to_vec());
        assert_eq!(config.trials_per_config, 25);
        assert_eq!(config.base_seed, DEFAULT_BASE_SEED);
        config.validate().unwrap();
    }

    #[test]
    fn gains_file_round_trips_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gains.toml");
        fs::write(&path, render_default_gains_toml().unwrap()).unwrap();
        let gains = load_gains_file(&path).unwrap();
        assert_eq!(gains, PidGains::default());
    }

    #[test]
    fn unknown_terrain_names_are_rejected() {
        let file = CampaignFile {
            terrains: vec!["mystery_regolith".into()],
            ..CampaignFile::default()
        };
        let err = resolve_campaign(&file, &default_catalog(), PidGains::default());
        assert!(matches!(err, Err(ConfigError::UnknownTerrain(_))));
    }

    #[test]
    fn wrong_schema_versions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gains.toml");
        let file = GainsFile { schema: 2, ..GainsFile::default() };
        fs::write(&path, toml::to_string_pretty(&file).unwrap()).unwrap();
        assert!(matches!(load_gains_file(&path), Err(ConfigError::Schema { got: 2, .. })));
    }

    #[test]
    fn malformed_toml_reports_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("terrain.toml");
        fs::write(&path, "schema = nope").unwrap();
        assert!(matches!(load_terrain_file(&path), Err(ConfigError::Parse { .. })));
        let missing = dir.path().join("absent.toml");
        assert!(matches!(load_terrain_file(&missing), Err(ConfigError::Io { .. })));
    }

    #[test]
    fn invalid_loaded_models_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("terrain.toml");
        let mut file = TerrainFile::default();
        file.terrain[0].anchors[0].height_mm = 2.0;
        fs::write(&path, toml::to_string_pretty(&file).unwrap()).unwrap();
        assert!(matches!(load_terrain_file(&path), Err(ConfigError::Invalid(_))));
    }

    /// The files shipped in the repo's config/ directory must stay in sync
    /// with the embedded defaults.
    #[test]
    fn shipped_config_files_match_the_embedded_defaults() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config");
        let catalog = load_terrain_file(&root.join("terrain.toml")).unwrap();
        assert_eq!(catalog, default_catalog());
        let campaign = load_campaign_file(&root.join("campaign.toml")).unwrap();
        assert_eq!(campaign, CampaignFile::default());
        let gains = load_gains_file(&root.join("gains.toml")).unwrap();
        assert_eq!(gains, PidGains::default());
    }
}
