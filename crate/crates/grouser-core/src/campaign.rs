//! Deterministic trial-grid campaigns: every terrain at every height,
//! repeated trials per cell, run in parallel with disjoint seeds.
//!
//! Seeds are assigned `base_seed + cell_index * trials_per_config +
//! trial_index`, so no two trials share a random stream and the report is
//! byte-identical across reruns regardless of scheduling. When an output
//! directory is set, the runner writes one log per trial under
//! `<terrain>/h<height>/trial_<k>.jsonl` plus `campaign.json` and
//! `report.csv` at the root.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cam::{CamProfile, HEIGHT_MAX_MM};
use crate::controller::PidGains;
use crate::estimators::{aggregate, Aggregate, EstimatorError};
use crate::scaling::TESTED_HEIGHTS_MM;
use crate::sim::{run_trial_with_table, SimConfig, SimError, TrialRecord};
use crate::terrain::{default_catalog, TerrainModel};

/// Default trials per (terrain, height) cell.
pub const DEFAULT_TRIALS_PER_CONFIG: usize = 25;
/// Default campaign base seed.
pub const DEFAULT_BASE_SEED: u64 = 99_991;

/// Campaign failures.
#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Table(#[from] crate::cam::CamError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("campaign io failed at {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("report serialization failed: {0}")]
    Serialize(String),
}

/// Grid definition for one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub terrains: Vec<TerrainModel>,
    pub heights_mm: Vec<f64>,
    pub trials_per_config: usize,
    pub base_seed: u64,
    /// Trial logs and reports land here; `None` keeps the campaign in memory.
    pub output_dir: Option<PathBuf>,
    pub gains: PidGains<f64>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            terrains: default_catalog(),
            heights_mm: TESTED_HEIGHTS_MM.to_vec(),
            trials_per_config: DEFAULT_TRIALS_PER_CONFIG,
            base_seed: DEFAULT_BASE_SEED,
            output_dir: None,
            gains: PidGains::default(),
        }
    }
}

impl CampaignConfig {
    /// Checks the grid before any simulation starts.
    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.terrains.is_empty() {
            return Err(CampaignError::Config("no terrains configured".into()));
        }
        if self.heights_mm.is_empty() {
            return Err(CampaignError::Config("no heights configured".into()));
        }
        if self.trials_per_config == 0 {
            return Err(CampaignError::Config("trials_per_config must be at least 1".into()));
        }
        for h in &self.heights_mm {
            if !h.is_finite() || !(0.0..=HEIGHT_MAX_MM).contains(h) {
                return Err(CampaignError::Config(format!(
                    "height {h} mm outside [0, {HEIGHT_MAX_MM}]"
                )));
            }
        }
        for terrain in &self.terrains {
            terrain
                .validate()
                .map_err(|e| CampaignError::Config(format!("terrain {}: {e}", terrain.name)))?;
        }
        let mut names: Vec<&str> = self.terrains.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.terrains.len() {
            return Err(CampaignError::Config("terrain names must be unique".into()));
        }
        let trials = self.terrains.len() * self.heights_mm.len() * self.trials_per_config;
        if (trials as u64).checked_add(self.base_seed).is_none() {
            return Err(CampaignError::Config("base_seed too close to u64::MAX".into()));
        }
        Ok(())
    }

    /// Seed for one trial; injective over the whole grid.
    pub fn trial_seed(&self, cell_idx: usize, trial_idx: usize) -> u64 {
        self.base_seed + (cell_idx * self.trials_per_config + trial_idx) as u64
    }

    /// Trial config for one cell and trial index.
    pub fn trial_config(&self, cell_idx: usize, trial_idx: usize) -> SimConfig {
        let terrain_idx = cell_idx / self.heights_mm.len();
        let height_idx = cell_idx % self.heights_mm.len();
        let mut config = SimConfig::for_terrain(
            self.terrains[terrain_idx].clone(),
            self.heights_mm[height_idx],
            self.trial_seed(cell_idx, trial_idx),
        );
        config.gains = self.gains;
        config.frame_period_s = self.gains.ts_s;
        config
    }

    fn cell_count(&self) -> usize {
        self.terrains.len() * self.heights_mm.len()
    }
}

/// Aggregates for one (terrain, height) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub terrain: String,
    pub height_mm: f64,
    pub n_trials: usize,
    pub n_completed: usize,
    /// Trials that errored rather than completing or immobilizing.
    pub n_faulted: usize,
    /// Error text from faulted trials, in trial order.
    pub fault_messages: Vec<String>,
    /// Slip estimated from sensors, over completed trials.
    pub slip: Option<Aggregate>,
    /// Plant ground-truth slip over completed trials.
    pub slip_true: Option<Aggregate>,
    pub travel_time_s: Option<Aggregate>,
    pub energy_j: Option<Aggregate>,
}

/// Lowest-mean-travel-time height for one terrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainOptimum {
    pub terrain: String,
    pub best_height_mm: f64,
    pub mean_travel_time_s: f64,
}

/// Full campaign output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub cells: Vec<CellReport>,
    pub total_trials: usize,
    /// Per-terrain argmin over heights of mean travel time (completed cells).
    pub optima: Vec<TerrainOptimum>,
}

impl CampaignReport {
    /// Cell lookup by terrain name and height.
    pub fn cell(&self, terrain: &str, height_mm: f64) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.terrain == terrain && (c.height_mm - height_mm).abs() < 1e-9)
    }

    /// Flat per-cell CSV (one row per cell, blank fields when absent).
    pub fn to_csv(&self) -> Result<String, CampaignError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "terrain",
            "height_mm",
            "n_trials",
            "n_completed",
            "n_faulted",
            "slip_mean",
            "slip_std",
            "travel_time_mean_s",
            "travel_time_std_s",
            "energy_mean_j",
            "energy_std_j",
        ])
        .map_err(|e| CampaignError::Serialize(e.to_string()))?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for cell in &self.cells {
            w.write_record([
                cell.terrain.clone(),
                format!("{:.1}", cell.height_mm),
                cell.n_trials.to_string(),
                cell.n_completed.to_string(),
                cell.n_faulted.to_string(),
                fmt(cell.slip.map(|a| a.mean)),
                fmt(cell.slip.and_then(|a| a.std_dev)),
                fmt(cell.travel_time_s.map(|a| a.mean)),
                fmt(cell.travel_time_s.and_then(|a| a.std_dev)),
                fmt(cell.energy_j.map(|a| a.mean)),
                fmt(cell.energy_j.and_then(|a| a.std_dev)),
            ])
            .map_err(|e| CampaignError::Serialize(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CampaignError::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CampaignError::Serialize(e.to_string()))
    }
}

/// Directory for one cell's trial logs.
pub fn cell_dir(root: &Path, terrain: &str, height_mm: f64) -> PathBuf {
    root.join(terrain).join(format!("h{height_mm:.1}"))
}

/// One trial's outcome inside a campaign.
enum TrialOutcome {
    Record(Box<TrialRecord>),
    Fault(String),
}

/// Runs the whole grid and assembles the report (and output tree, if set).
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    config.validate()?;
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CampaignError::Io { path: dir.clone(), detail: e.to_string() })?;
    }
    // All cells share one cam table; clone per trial instead of resampling.
    let probe = config.trial_config(0, 0);
    let table = CamProfile::from_printed_table(probe.cam_mode).sample_polar(probe.table_samples)?;

    let cell_count = config.cell_count();
    let tasks: Vec<(usize, usize)> = (0..cell_count)
        .flat_map(|c| (0..config.trials_per_config).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<(usize, usize, TrialOutcome)> = tasks
        .par_iter()
        .map(|&(cell_idx, trial_idx)| {
            let trial_config = config.trial_config(cell_idx, trial_idx);
            let outcome = match run_trial_with_table(&trial_config, table.clone()) {
                Ok(record) => TrialOutcome::Record(Box::new(record)),
                Err(e) => TrialOutcome::Fault(e.to_string()),
            };
            (cell_idx, trial_idx, outcome)
        })
        .collect();

    // Ordered reduction: group by cell in grid order.
    let mut per_cell: Vec<Vec<(usize, TrialOutcome)>> = (0..cell_count).map(|_| Vec::new()).collect();
    for (cell_idx, trial_idx, outcome) in outcomes {
        per_cell[cell_idx].push((trial_idx, outcome));
    }
    let mut cells = Vec::with_capacity(cell_count);
    for (cell_idx, mut outcomes) in per_cell.into_iter().enumerate() {
        outcomes.sort_by_key(|(trial_idx, _)| *trial_idx);
        let terrain = &config.terrains[cell_idx / config.heights_mm.len()];
        let height_mm = config.heights_mm[cell_idx % config.heights_mm.len()];
        let mut records = Vec::new();
        let mut fault_messages = Vec::new();
        for (_, outcome) in outcomes {
            match outcome {
                TrialOutcome::Record(r) => records.push(*r),
                TrialOutcome::Fault(message) => fault_messages.push(message),
            }
        }
        if let Some(dir) = &config.output_dir {
            let cell_path = cell_dir(dir, &terrain.name, height_mm);
            fs::create_dir_all(&cell_path)
                .map_err(|e| CampaignError::Io { path: cell_path.clone(), detail: e.to_string() })?;
            for (k, record) in records.iter().enumerate() {
                record.write_log(&cell_path.join(format!("trial_{k}.jsonl")))?;
            }
        }
        cells.push(reduce_cell(
            &terrain.name,
            height_mm,
            config.trials_per_config,
            fault_messages,
            &records,
        )?);
    }

    let optima = find_optima(config, &cells);
    let report = CampaignReport {
        config: config.clone(),
        cells,
        total_trials: cell_count * config.trials_per_config,
        optima,
    };
    if let Some(dir) = &config.output_dir {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CampaignError::Serialize(e.to_string()))?;
        let json_path = dir.join("campaign.json");
        fs::write(&json_path, json)
            .map_err(|e| CampaignError::Io { path: json_path, detail: e.to_string() })?;
        let csv_path = dir.join("report.csv");
        fs::write(&csv_path, report.to_csv()?)
            .map_err(|e| CampaignError::Io { path: csv_path, detail: e.to_string() })?;
    }
    Ok(report)
}

/// Collapses one cell's records into aggregates.
fn reduce_cell(
    terrain: &str,
    height_mm: f64,
    n_trials: usize,
    fault_messages: Vec<String>,
    records: &[TrialRecord],
) -> Result<CellReport, CampaignError> {
    let n_completed = records.iter().filter(|r| r.completed).count();
    let stat = |values: Vec<Option<f64>>| -> Result<Option<Aggregate>, CampaignError> {
        if values.iter().all(|v| v.is_none()) {
            return Ok(None);
        }
        Ok(Some(aggregate(&values)?))
    };
    let slip = stat(records.iter().map(|r| r.slip_est).collect())?;
    let slip_true = stat(
        records.iter().map(|r| r.completed.then_some(r.slip_true)).collect(),
    )?;
    let travel_time_s = stat(records.iter().map(|r| r.travel_time_s).collect())?;
    let energy_j = stat(records.iter().map(|r| r.energy_j).collect())?;
    Ok(CellReport {
        terrain: terrain.to_string(),
        height_mm,
        n_trials,
        n_completed,
        n_faulted: fault_messages.len(),
        fault_messages,
        slip,
        slip_true,
        travel_time_s,
        energy_j,
    })
}

/// Per-terrain argmin over heights of mean travel time.
fn find_optima(config: &CampaignConfig, cells: &[CellReport]) -> Vec<TerrainOptimum> {
    let mut optima = Vec::new();
    for terrain in &config.terrains {
        let best = cells
            .iter()
            .filter(|c| c.terrain == terrain.name)
            .filter_map(|c| c.travel_time_s.map(|t| (c.height_mm, t.mean)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((best_height_mm, mean_travel_time_s)) = best {
            optima.push(TerrainOptimum {
                terrain: terrain.name.clone(),
                best_height_mm,
                mean_travel_time_s,
            });
        }
    }
    optima
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::sim::EndReason;
    use crate::terrain::by_name;

    fn small_config() -> CampaignConfig {
        let catalog = default_catalog();
        CampaignConfig {
            terrains: vec![
                by_name(&catalog, "pea_gravel").unwrap().clone(),
                by_name(&catalog, "coarse_rock").unwrap().clone(),
            ],
            heights_mm: vec![3.5, 7.0],
            trials_per_config: 3,
            base_seed: 99,
            output_dir: None,
            gains: PidGains::default(),
        }
    }

    #[test]
    fn seeds_are_injective_over_the_grid() {
        let config = small_config();
        let mut seen = HashSet::new();
        for cell in 0..config.cell_count() {
            for trial in 0..config.trials_per_config {
                assert!(seen.insert(config.trial_seed(cell, trial)));
            }
        }
        assert_eq!(seen.len(), 12);
        assert_eq!(config.trial_seed(0, 0), 99);
        assert_eq!(config.trial_seed(3, 2), 99 + 3 * 3 + 2);
    }

    #[test]
    fn grid_covers_every_terrain_height_pair() {
        let config = small_config();
        let report = run_campaign(&config).unwrap();
        assert_eq!(report.cells.len(), 4);
        assert_eq!(report.total_trials, 12);
        for terrain in ["pea_gravel", "coarse_rock"] {
            for height in [3.5, 7.0] {
                let cell = report.cell(terrain, height).unwrap();
                assert_eq!(cell.n_trials, 3);
                assert_eq!(cell.n_completed, 3);
                assert_eq!(cell.n_faulted, 0);
                assert!(cell.slip.is_some());
            }
        }
    }

    #[test]
    fn rerun_with_same_base_seed_is_byte_identical() {
        let config = small_config();
        let a = serde_json::to_vec(&run_campaign(&config).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_campaign(&config).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn immobilized_cells_report_zero_completions() {
        let catalog = default_catalog();
        let config = CampaignConfig {
            terrains: vec![by_name(&catalog, "loose_sand").unwrap().clone()],
            heights_mm: vec![0.0],
            trials_per_config: 2,
            base_seed: 5,
            output_dir: None,
            gains: PidGains::default(),
        };
        let report = run_campaign(&config).unwrap();
        let cell = &report.cells[0];
        assert_eq!(cell.n_completed, 0);
        assert!(cell.slip.is_none());
        assert!(cell.travel_time_s.is_none());
        assert!(report.optima.is_empty());
    }

    #[test]
    fn argmin_prefers_the_lowest_mean_travel_time() {
        let catalog = default_catalog();
        let config = CampaignConfig {
            terrains: vec![by_name(&catalog, "pea_gravel").unwrap().clone()],
            heights_mm: vec![3.5, 7.0, 10.5],
            trials_per_config: 8,
            base_seed: 1234,
            output_dir: None,
            gains: PidGains::default(),
        };
        let report = run_campaign(&config).unwrap();
        assert_eq!(report.optima.len(), 1);
        assert_eq!(report.optima[0].terrain, "pea_gravel");
        assert_eq!(report.optima[0].best_height_mm, 7.0);
    }

    #[test]
    fn output_tree_matches_the_documented_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config();
        config.trials_per_config = 2;
        config.output_dir = Some(dir.path().to_path_buf());
        let report = run_campaign(&config).unwrap();
        assert!(dir.path().join("campaign.json").is_file());
        assert!(dir.path().join("report.csv").is_file());
        for terrain in ["pea_gravel", "coarse_rock"] {
            for height in ["h3.5", "h7.0"] {
                for trial in ["trial_0.jsonl", "trial_1.jsonl"] {
                    let path = dir.path().join(terrain).join(height).join(trial);
                    assert!(path.is_file(), "missing {path:?}");
                }
            }
        }
        let log_path = dir.path().join("pea_gravel").join("h7.0").join("trial_1.jsonl");
        let record = TrialRecord::read_log(&log_path).unwrap();
        assert_eq!(record.config.seed, config.trial_seed(1, 1));
        assert_eq!(record.end_reason, EndReason::Completed);
        let loaded: CampaignReport = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("campaign.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(loaded, report);
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().next().unwrap().starts_with("terrain,height_mm"));
    }

    #[test]
    fn invalid_grids_are_rejected_before_running() {
        let mut no_heights = small_config();
        no_heights.heights_mm.clear();
        assert!(matches!(run_campaign(&no_heights), Err(CampaignError::Config(_))));
        let mut bad_height = small_config();
        bad_height.heights_mm = vec![18.0];
        assert!(matches!(run_campaign(&bad_height), Err(CampaignError::Config(_))));
        let mut zero_trials = small_config();
        zero_trials.trials_per_config = 0;
        assert!(matches!(run_campaign(&zero_trials), Err(CampaignError::Config(_))));
        let mut dup = small_config();
        let clone = dup.terrains[0].clone();
        dup.terrains.push(clone);
        assert!(matches!(run_campaign(&dup), Err(CampaignError::Config(_))));
    }
}
