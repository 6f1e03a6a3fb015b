//! Config-driven experiment harness.
//!
//! An experiment is declared as a TOML file: where the traffic grid comes
//! from, which maps to use (explicit files or a seeded generator), the data
//! requirement, reward modes, learner configurations, baseline toggles, and
//! the seed list. [`run_experiment`] executes the full
//! seed x learner x reward-mode x variant matrix, writing per-run training
//! curves, a summary table, route plans, and an SVG convergence plot into
//! the output directory. [`run_sweep`] repeats an experiment while varying
//! one parameter and adds a comparison table plus an overlay plot.
//!
//! Everything a run writes is deterministic for a given config, so rerunning
//! an experiment reproduces its curve files byte for byte. The only wall
//! clock outputs (plot timestamps and run durations in the summary) can be
//! silenced with the no-timestamp option for fully reproducible bundles.

mod run;

pub mod plot;

pub use run::{
    run_experiment, run_sweep, ExperimentOutcome, MapPlans, RunOptions, RunRecord, SweepOutcome,
    Variant,
};

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Algorithm, LearnerConfig, TrainError, DEFAULT_EVAL_CADENCE};
use crate::env::{BandwidthMap, Cell, EnvError, EnvParams, RewardMode};
use crate::planner::{optimal_route, PlanError};
use crate::traffic::{bin_heatmap, load_heatmap_csv, IngestError, IngestSpec, TrafficGrid};

/// Configuration problems: unreadable files, TOML syntax or unknown keys,
/// and semantic validation failures. These map to CLI exit code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid experiment configuration: {0}")]
    Invalid(String),
}

/// Execution failures after a config validated. These map to CLI exit code 1;
/// files already written stay on disk.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("map generation failed: {0}")]
    Generation(String),
    #[error("worker pool setup failed: {0}")]
    Parallel(String),
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Where the traffic grid comes from: a grid file, or a raw heatmap CSV
/// binned by an ingest spec.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestSpec>,
}

/// Seeded generator for bandwidth maps: `count` maps, each with
/// `num_high_bw` distinct high-bandwidth cells drawn uniformly from the
/// non-endpoint cells.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MapGeneratorSpec {
    pub rows: usize,
    pub cols: usize,
    pub start: [usize; 2],
    pub dest: [usize; 2],
    pub num_high_bw: usize,
    pub count: usize,
    pub seed: u64,
}

/// Where the bandwidth maps come from: explicit files or a generator spec.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MapSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<MapGeneratorSpec>,
}

/// Which reward-ablation agents to train alongside the base agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineToggles {
    #[serde(default)]
    pub bandwidth_unaware: bool,
    #[serde(default)]
    pub traffic_unaware: bool,
}

/// Whether to compute oracle and baseline route plans for each map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerToggle {
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for PlannerToggle {
    fn default() -> Self {
        Self { enabled: true }
    }
}

/// Optional overrides of the environment defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_limit: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_heading: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantizer: Option<f64>,
}

fn default_true() -> bool {
    true
}

fn default_requirement() -> f64 {
    1.0
}

fn default_reward_modes() -> Vec<RewardMode> {
    vec![RewardMode::Step]
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_eval_cadence() -> u64 {
    DEFAULT_EVAL_CADENCE
}

/// A full experiment declaration, deserialized from TOML. Unknown keys are
/// rejected by name.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub traffic: TrafficSource,
    pub maps: MapSource,
    #[serde(default = "default_requirement")]
    pub requirement: f64,
    #[serde(default = "default_reward_modes")]
    pub reward_modes: Vec<RewardMode>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub learners: Vec<LearnerConfig>,
    #[serde(default)]
    pub baselines: BaselineToggles,
    #[serde(default)]
    pub planner: PlannerToggle,
    #[serde(default)]
    pub env: EnvOverrides,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_eval_cadence")]
    pub eval_cadence: u64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Canonical TOML rendering, suitable for echoing the effective config
    /// into a result bundle; parsing it back reproduces this exact config.
    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self)
            .map_err(|e| ConfigError::Invalid(format!("config not serializable: {e}")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));

        match (&self.traffic.grid_file, &self.traffic.heatmap_csv) {
            (Some(_), Some(_)) => {
                return invalid("give either traffic.grid_file or traffic.heatmap_csv, not both".into())
            }
            (None, None) => {
                return invalid("traffic needs a grid_file or a heatmap_csv".into());
            }
            (Some(grid), None) => {
                if !grid.exists() {
                    return invalid(format!("traffic grid file {} does not exist", grid.display()));
                }
            }
            (None, Some(csv)) => {
                if !csv.exists() {
                    return invalid(format!("heatmap csv {} does not exist", csv.display()));
                }
                if self.traffic.ingest.is_none() {
                    return invalid("traffic.heatmap_csv needs a traffic.ingest spec".into());
                }
            }
        }

        match (&self.maps.files, &self.maps.generator) {
            (Some(_), Some(_)) => {
                return invalid("give either maps.files or maps.generator, not both".into())
            }
            (None, None) => return invalid("maps needs files or a generator".into()),
            (Some(files), None) => {
                if files.is_empty() {
                    return invalid("maps.files must not be empty".into());
                }
                for file in files {
                    if !file.exists() {
                        return invalid(format!("map file {} does not exist", file.display()));
                    }
                }
            }
            (None, Some(spec)) => {
                if spec.count == 0 {
                    return invalid("maps.generator.count must be at least 1".into());
                }
                if spec.rows * spec.cols < 2 {
                    return invalid("maps.generator grid needs at least two cells".into());
                }
                if spec.num_high_bw > spec.rows * spec.cols - 2 {
                    return invalid(format!(
                        "maps.generator.num_high_bw {} exceeds the {} non-endpoint cells",
                        spec.num_high_bw,
                        spec.rows * spec.cols - 2
                    ));
                }
                for (name, [r, c]) in [("start", spec.start), ("dest", spec.dest)] {
                    if r >= spec.rows || c >= spec.cols {
                        return invalid(format!(
                            "maps.generator.{name} ({r}, {c}) is outside the {}x{} grid",
                            spec.rows, spec.cols
                        ));
                    }
                }
                if spec.start == spec.dest {
                    return invalid("maps.generator start and dest must differ".into());
                }
            }
        }

        if self.seeds.is_empty() {
            return invalid("seeds must not be empty".into());
        }
        if self.reward_modes.is_empty() {
            return invalid("reward_modes must not be empty".into());
        }
        if self.learners.is_empty() && !self.planner.enabled {
            return invalid("enable at least one learner or the planner".into());
        }
        for learner in &self.learners {
            learner
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if !(self.requirement.is_finite() && self.requirement >= 0.0) {
            return invalid(format!(
                "requirement must be finite and non-negative, got {}",
                self.requirement
            ));
        }
        if self.eval_cadence == 0 {
            return invalid("eval_cadence must be positive".into());
        }
        self.env_params()?;
        Ok(())
    }

    /// Environment parameters implied by the requirement plus any overrides.
    pub fn env_params(&self) -> Result<EnvParams, ConfigError> {
        let mut params = EnvParams::new(self.requirement);
        if let Some(limit) = self.env.step_limit {
            params.step_limit = limit;
        }
        if let Some(scale) = self.env.transfer_scale {
            params.transfer_scale = scale;
        }
        if let Some(heading) = &self.env.initial_heading {
            params.initial_heading = heading
                .parse()
                .map_err(|e: String| ConfigError::Invalid(e))?;
        }
        if let Some(q) = self.env.quantizer {
            params.quantizer = Some(q);
        }
        params
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(params)
    }
}

/// One swept parameter and its values; everything else in the base config
/// stays fixed.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(
    tag = "parameter",
    content = "values",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum SweepSpec {
    NumHighBw(Vec<usize>),
    NumMaps(Vec<usize>),
    Requirement(Vec<f64>),
    RewardMode(Vec<RewardMode>),
    Algorithm(Vec<Algorithm>),
}

impl SweepSpec {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let spec: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn parameter_name(&self) -> &'static str {
        match self {
            SweepSpec::NumHighBw(_) => "num_high_bw",
            SweepSpec::NumMaps(_) => "num_maps",
            SweepSpec::Requirement(_) => "requirement",
            SweepSpec::RewardMode(_) => "reward_mode",
            SweepSpec::Algorithm(_) => "algorithm",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepSpec::NumHighBw(v) => v.len(),
            SweepSpec::NumMaps(v) => v.len(),
            SweepSpec::Requirement(v) => v.len(),
            SweepSpec::RewardMode(v) => v.len(),
            SweepSpec::Algorithm(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value_labels(&self) -> Vec<String> {
        match self {
            SweepSpec::NumHighBw(v) => v.iter().map(|x| x.to_string()).collect(),
            SweepSpec::NumMaps(v) => v.iter().map(|x| x.to_string()).collect(),
            SweepSpec::Requirement(v) => v.iter().map(|x| x.to_string()).collect(),
            SweepSpec::RewardMode(v) => v.iter().map(|x| x.to_string()).collect(),
            SweepSpec::Algorithm(v) => v.iter().map(|x| x.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.len() < 2 {
            return Err(ConfigError::Invalid(format!(
                "a sweep needs at least two values for {}",
                self.parameter_name()
            )));
        }
        Ok(())
    }

    /// Base config with the i-th sweep value substituted in.
    pub fn apply(&self, base: &ExperimentConfig, index: usize) -> Result<ExperimentConfig, ConfigError> {
        let mut config = base.clone();
        match self {
            SweepSpec::NumHighBw(values) => {
                let spec = config.maps.generator.as_mut().ok_or_else(|| {
                    ConfigError::Invalid(
                        "sweeping num_high_bw requires a maps.generator section".into(),
                    )
                })?;
                spec.num_high_bw = values[index];
            }
            SweepSpec::NumMaps(values) => {
                let spec = config.maps.generator.as_mut().ok_or_else(|| {
                    ConfigError::Invalid(
                        "sweeping num_maps requires a maps.generator section".into(),
                    )
                })?;
                spec.count = values[index];
            }
            SweepSpec::Requirement(values) => {
                config.requirement = values[index];
            }
            SweepSpec::RewardMode(values) => {
                config.reward_modes = vec![values[index]];
            }
            SweepSpec::Algorithm(values) => {
                if config.learners.is_empty() {
                    return Err(ConfigError::Invalid(
                        "sweeping algorithm requires at least one learner".into(),
                    ));
                }
                for learner in &mut config.learners {
                    learner.algorithm = values[index];
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

impl fmt::Display for SweepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} over {:?}", self.parameter_name(), self.value_labels())
    }
}

/// Loads the traffic grid named by the config, binning a heatmap if needed.
pub fn load_traffic(source: &TrafficSource) -> Result<TrafficGrid, RunError> {
    if let Some(path) = &source.grid_file {
        return Ok(TrafficGrid::read_grid_file(path)?);
    }
    let csv = source
        .heatmap_csv
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("traffic needs a grid_file or a heatmap_csv".into()))?;
    let spec = source
        .ingest
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("traffic.heatmap_csv needs a traffic.ingest spec".into()))?;
    let points = load_heatmap_csv(csv)?;
    Ok(bin_heatmap(&points, spec)?)
}

/// Loads map files in order, numbering them by position.
pub fn load_map_files(files: &[PathBuf]) -> Result<Vec<BandwidthMap>, RunError> {
    files
        .iter()
        .enumerate()
        .map(|(i, path)| Ok(BandwidthMap::read_map_file(path, i as u32)?))
        .collect()
}

const GENERATION_ATTEMPTS_PER_MAP: usize = 50;

/// Samples `spec.count` distinct maps, each with `spec.num_high_bw` distinct
/// high-bandwidth cells drawn uniformly from non-endpoint cells. Maps on
/// which the requirement cannot be met are rejected and redrawn, up to a
/// bounded number of attempts.
pub fn generate_maps(
    spec: &MapGeneratorSpec,
    traffic: &TrafficGrid,
    params: &EnvParams,
) -> Result<Vec<BandwidthMap>, RunError> {
    let start = Cell::new(spec.start[0], spec.start[1]);
    let dest = Cell::new(spec.dest[0], spec.dest[1]);
    let candidates: Vec<Cell> = (0..spec.rows)
        .flat_map(|r| (0..spec.cols).map(move |c| Cell::new(r, c)))
        .filter(|&c| c != start && c != dest)
        .collect();
    if spec.num_high_bw > candidates.len() {
        return Err(RunError::Generation(format!(
            "{} high-bandwidth cells requested but only {} non-endpoint cells exist",
            spec.num_high_bw,
            candidates.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut maps = Vec::with_capacity(spec.count);
    let mut seen = BTreeSet::new();
    let budget = spec.count * GENERATION_ATTEMPTS_PER_MAP;
    let mut attempts = 0;
    while maps.len() < spec.count {
        if attempts >= budget {
            return Err(RunError::Generation(format!(
                "gave up after {attempts} attempts: {} of {} maps found with a \
                 satisfiable requirement of {}",
                maps.len(),
                spec.count,
                params.requirement
            )));
        }
        attempts += 1;

        let picks = rand::seq::index::sample(&mut rng, candidates.len(), spec.num_high_bw);
        let cells: Vec<Cell> = picks.iter().map(|i| candidates[i]).collect();
        let map = BandwidthMap::new(
            spec.rows,
            spec.cols,
            start,
            dest,
            cells,
            maps.len() as u32,
        )
        .map_err(|e| RunError::Generation(e.to_string()))?;

        if !seen.insert(map.to_map_string()) {
            continue;
        }
        if params.requirement > 0.0 && !optimal_route(&map, traffic, params)?.feasible {
            continue;
        }
        maps.push(map);
    }
    Ok(maps)
}
