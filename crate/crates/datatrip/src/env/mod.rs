//! The grid-world MDP: heading-relative movement over a traffic-weighted
//! grid, binary-bandwidth data transfer, two reward functions, and the
//! episode lifecycle with multi-map sampling.
//!
//! The core transition lives in the pure [`step`] function so that planners
//! and replay tools share bit-identical dynamics with the trainable [`Env`].

mod map;
mod trace;

pub use map::BandwidthMap;
pub use trace::{write_trace_csv, TraceRecord};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::traffic::TrafficGrid;

/// Guard against division by zero in the transfer formula.
pub const DENSITY_EPSILON: f64 = 1e-9;

/// Errors from environment construction, stepping, and map file I/O.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("step called before reset")]
    NotReset,
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

/// A grid coordinate. Row 0 is the north edge, column 0 the west edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Row-major index within a grid of the given width.
    pub fn index(&self, cols: usize) -> usize {
        self.row * cols + self.col
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// One of the four travel directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heading {
    North,
    South,
    East,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::South, Heading::East, Heading::West];

    /// Heading after a 90 degree counterclockwise turn.
    pub fn left(self) -> Self {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    /// Heading after a 90 degree clockwise turn.
    pub fn right(self) -> Self {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    /// (row, col) displacement of one step along this heading.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::South => (1, 0),
            Heading::East => (0, 1),
            Heading::West => (0, -1),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Heading::North => 0,
            Heading::South => 1,
            Heading::East => 2,
            Heading::West => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Heading::ALL.get(i).copied()
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Heading::North => "north",
            Heading::South => "south",
            Heading::East => "east",
            Heading::West => "west",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Heading {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "north" => Ok(Heading::North),
            "south" => Ok(Heading::South),
            "east" => Ok(Heading::East),
            "west" => Ok(Heading::West),
            other => Err(format!("unknown heading {other:?}")),
        }
    }
}

/// A heading-relative move. Left and right rotate the heading 90 degrees and
/// then advance one cell; forward advances without turning.
///
/// The declaration order doubles as the deterministic tie-break order used by
/// greedy evaluation and the planner: forward < left < right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Forward,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Forward, Action::Left, Action::Right];

    /// The heading after applying this action's rotation.
    pub fn rotate(self, heading: Heading) -> Heading {
        match self {
            Action::Forward => heading,
            Action::Left => heading.left(),
            Action::Right => heading.right(),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Action::Forward => 0,
            Action::Left => 1,
            Action::Right => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Action::ALL.get(i).copied()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::Forward => "forward",
            Action::Left => "left",
            Action::Right => "right",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Action::Forward),
            "left" => Ok(Action::Left),
            "right" => Ok(Action::Right),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

/// Selects which reward function shapes the learning signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// +1 for every transfer-granting high-bandwidth visit.
    Step,
    /// +3 once, on the step the data requirement is first met.
    Cumulative,
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardMode::Step => write!(f, "step"),
            RewardMode::Cumulative => write!(f, "cumulative"),
        }
    }
}

/// Reward constants. Defaults give +1 per transfer-granting visit (step
/// mode), +3 on meeting the requirement (cumulative mode), +10 at the
/// destination once the requirement is met, and a per-step punishment of
/// -density/mean_density at the occupied cell.
///
/// `flat_step_penalty` is an extra constant subtracted every step; it is 0 by
/// default and only used by the traffic-unaware ablation, where it replaces
/// the density punishment so that shorter routes are still preferred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub mode: RewardMode,
    pub high_bw_step_reward: f64,
    pub requirement_bonus: f64,
    pub destination_reward: f64,
    pub punishment_scale: f64,
    pub flat_step_penalty: f64,
}

impl RewardConfig {
    pub fn new(mode: RewardMode) -> Self {
        Self {
            mode,
            high_bw_step_reward: 1.0,
            requirement_bonus: 3.0,
            destination_reward: 10.0,
            punishment_scale: 1.0,
            flat_step_penalty: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.destination_reward > 0.0) {
            return Err(EnvError::Config(format!(
                "destination_reward must be positive, got {}",
                self.destination_reward
            )));
        }
        for (name, v) in [
            ("high_bw_step_reward", self.high_bw_step_reward),
            ("requirement_bonus", self.requirement_bonus),
            ("punishment_scale", self.punishment_scale),
            ("flat_step_penalty", self.flat_step_penalty),
        ] {
            if !v.is_finite() {
                return Err(EnvError::Config(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::new(RewardMode::Step)
    }
}

/// Episode-level knobs that are not reward constants: the data requirement,
/// the step limit, the transfer unit scale, the initial heading, and the
/// data-axis quantization resolution used by tabular learners and planners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    /// Transfer units the agent must accumulate before the destination
    /// becomes terminal.
    pub requirement: f64,
    /// Episodes truncate (and count as failures) after this many steps.
    pub step_limit: u32,
    /// Unit scale of the transfer formula.
    pub transfer_scale: f64,
    pub initial_heading: Heading,
    /// Data-axis resolution; `None` selects requirement/100, or 1 when the
    /// requirement is 0.
    pub quantizer: Option<f64>,
}

impl EnvParams {
    pub fn new(requirement: f64) -> Self {
        Self {
            requirement,
            step_limit: 200,
            transfer_scale: 1.0,
            initial_heading: Heading::North,
            quantizer: None,
        }
    }

    /// The effective data-axis resolution.
    pub fn data_resolution(&self) -> f64 {
        match self.quantizer {
            Some(q) => q,
            None if self.requirement == 0.0 => 1.0,
            None => self.requirement / 100.0,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.requirement >= 0.0) || !self.requirement.is_finite() {
            return Err(EnvError::Config(format!(
                "requirement must be a finite non-negative number, got {}",
                self.requirement
            )));
        }
        if self.step_limit == 0 {
            return Err(EnvError::Config("step_limit must be at least 1".into()));
        }
        if !(self.transfer_scale > 0.0) || !self.transfer_scale.is_finite() {
            return Err(EnvError::Config(format!(
                "transfer_scale must be positive, got {}",
                self.transfer_scale
            )));
        }
        if let Some(q) = self.quantizer {
            if !(q > 0.0) || !q.is_finite() {
                return Err(EnvError::Config(format!(
                    "quantizer must be positive, got {q}"
                )));
            }
        }
        Ok(())
    }
}

/// The full mutable state of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeState {
    pub cell: Cell,
    pub heading: Heading,
    /// Transfer units still to be moved; 0 means the requirement is met.
    pub data_remaining: f64,
    /// Sum of delay indices accrued so far.
    pub trip_time: f64,
    pub steps: u32,
    pub map_id: u32,
}

impl EpisodeState {
    pub fn requirement_met(&self) -> bool {
        self.data_remaining == 0.0
    }
}

/// Everything one transition produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: EpisodeState,
    pub reward: f64,
    pub terminal: bool,
    pub transferred_this_step: f64,
}

/// The discrete key tabular learners index on: map, cell, heading, and the
/// quantized amount of data still to transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub map_id: u32,
    pub cell_index: u32,
    pub heading: Heading,
    pub data_bucket: u32,
}

/// Discretizes an episode state at data resolution `q`.
///
/// The data bucket is `ceil(data_remaining / q)`, capped at
/// `ceil(requirement / q)` so the key space stays bounded; bucket 0 means the
/// requirement is met.
pub fn encode_state(state: &EpisodeState, cols: usize, requirement: f64, q: f64) -> StateKey {
    debug_assert!(q > 0.0);
    let cap = (requirement / q).ceil();
    let bucket = (state.data_remaining / q).ceil().min(cap).max(0.0);
    StateKey {
        map_id: state.map_id,
        cell_index: state.cell.index(cols) as u32,
        heading: state.heading,
        data_bucket: bucket as u32,
    }
}

/// Transfer units gained by one visit to `cell`: the inverse-density formula
/// `(1/density) * delay`, normalized by the mean density so that a visit to a
/// mean-density cell yields `delay * scale` units.
///
/// The numerator product is evaluated before the division; callers that rely
/// on exact arithmetic over dyadic densities depend on that order.
pub fn transfer_amount(cell: Cell, traffic: &TrafficGrid, scale: f64) -> f64 {
    let density = traffic.density(cell.row, cell.col).max(DENSITY_EPSILON);
    traffic.mean_density() * traffic.delay(cell.row, cell.col) / density * scale
}

/// The episode state every rollout starts from on a given map.
pub fn initial_state(map: &BandwidthMap, params: &EnvParams) -> EpisodeState {
    EpisodeState {
        cell: map.start(),
        heading: params.initial_heading,
        data_remaining: params.requirement,
        trip_time: 0.0,
        steps: 0,
        map_id: map.map_id(),
    }
}

/// Whether a state ends its episode: at the destination with the requirement
/// met, or out of steps.
pub fn is_terminal(state: &EpisodeState, map: &BandwidthMap, params: &EnvParams) -> bool {
    (state.cell == map.destination() && state.requirement_met())
        || state.steps >= params.step_limit
}

/// Applies one action. Pure: identical inputs yield identical outcomes.
///
/// The heading always rotates per the action. If the target cell is on the
/// grid the agent moves there, pays the entered cell's delay index, and (on a
/// high-bandwidth cell, with data still to transfer) receives a transfer
/// capped at `data_remaining`. If the target is off-grid the agent stays put
/// and pays the current cell's delay for the wasted move. The reward is the
/// density punishment at the occupied cell plus whichever positive terms the
/// reward mode grants. Reaching the destination without the requirement met
/// is not terminal.
pub fn step(
    state: &EpisodeState,
    action: Action,
    map: &BandwidthMap,
    traffic: &TrafficGrid,
    reward_cfg: &RewardConfig,
    params: &EnvParams,
) -> Result<StepOutcome, EnvError> {
    if is_terminal(state, map, params) {
        return Err(EnvError::EpisodeOver);
    }

    let mut next = *state;
    next.heading = action.rotate(state.heading);
    next.steps += 1;

    let (dr, dc) = next.heading.delta();
    let target_row = state.cell.row as isize + dr;
    let target_col = state.cell.col as isize + dc;
    let in_grid = target_row >= 0
        && target_col >= 0
        && (target_row as usize) < map.rows()
        && (target_col as usize) < map.cols();

    let mut transferred = 0.0;
    if in_grid {
        let target = Cell::new(target_row as usize, target_col as usize);
        next.cell = target;
        next.trip_time += traffic.delay(target.row, target.col);
        if map.is_high_bw(target) && next.data_remaining > 0.0 {
            let amount = transfer_amount(target, traffic, params.transfer_scale);
            transferred = amount.min(next.data_remaining);
            next.data_remaining -= transferred;
        }
    } else {
        next.trip_time += traffic.delay(state.cell.row, state.cell.col);
    }

    let occupied = next.cell;
    let punishment = reward_cfg.punishment_scale
        * traffic.density(occupied.row, occupied.col)
        / traffic.mean_density();
    let mut reward = -punishment - reward_cfg.flat_step_penalty;

    match reward_cfg.mode {
        RewardMode::Step => {
            if transferred > 0.0 {
                reward += reward_cfg.high_bw_step_reward;
            }
        }
        RewardMode::Cumulative => {
            if transferred > 0.0 && next.requirement_met() {
                reward += reward_cfg.requirement_bonus;
            }
        }
    }

    let at_goal = occupied == map.destination() && next.requirement_met();
    if at_goal {
        reward += reward_cfg.destination_reward;
    }
    let terminal = at_goal || next.steps >= params.step_limit;

    Ok(StepOutcome {
        next_state: next,
        reward,
        terminal,
        transferred_this_step: transferred,
    })
}

/// Stateful episode driver over a sampled map set: seeds an RNG, resets into
/// a uniformly sampled map, and steps until terminal.
#[derive(Debug, Clone)]
pub struct Env {
    maps: Vec<BandwidthMap>,
    traffic: TrafficGrid,
    reward_cfg: RewardConfig,
    params: EnvParams,
    rng: ChaCha8Rng,
    state: Option<EpisodeState>,
}

impl Env {
    pub fn new(
        maps: Vec<BandwidthMap>,
        traffic: TrafficGrid,
        reward_cfg: RewardConfig,
        params: EnvParams,
        seed: u64,
    ) -> Result<Self, EnvError> {
        if maps.is_empty() {
            return Err(EnvError::Config("map set must not be empty".into()));
        }
        for map in &maps {
            if map.rows() != traffic.rows() || map.cols() != traffic.cols() {
                return Err(EnvError::Config(format!(
                    "map {} is {}x{} but the traffic grid is {}x{}",
                    map.map_id(),
                    map.rows(),
                    map.cols(),
                    traffic.rows(),
                    traffic.cols()
                )));
            }
        }
        reward_cfg.validate()?;
        params.validate()?;
        Ok(Self {
            maps,
            traffic,
            reward_cfg,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: None,
        })
    }

    /// Starts a new episode on a uniformly sampled map.
    pub fn reset(&mut self) -> EpisodeState {
        let idx = self.rng.random_range(0..self.maps.len());
        self.reset_on_map(idx)
    }

    /// Starts a new episode on a specific map of the set. Used by greedy
    /// evaluation, which visits every map in turn.
    pub fn reset_on_map(&mut self, map_index: usize) -> EpisodeState {
        let state = initial_state(&self.maps[map_index], &self.params);
        self.state = Some(state);
        state
    }

    /// Applies one action to the current episode.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        let state = self.state.ok_or(EnvError::NotReset)?;
        let map = &self.maps[state.map_id as usize];
        let outcome = step(
            &state,
            action,
            map,
            &self.traffic,
            &self.reward_cfg,
            &self.params,
        )?;
        self.state = Some(outcome.next_state);
        Ok(outcome)
    }

    pub fn state(&self) -> Option<&EpisodeState> {
        self.state.as_ref()
    }

    pub fn maps(&self) -> &[BandwidthMap] {
        &self.maps
    }

    pub fn traffic(&self) -> &TrafficGrid {
        &self.traffic
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn reward_cfg(&self) -> &RewardConfig {
        &self.reward_cfg
    }

    pub fn encode(&self, state: &EpisodeState) -> StateKey {
        encode_state(
            state,
            self.traffic.cols(),
            self.params.requirement,
            self.params.data_resolution(),
        )
    }
}
