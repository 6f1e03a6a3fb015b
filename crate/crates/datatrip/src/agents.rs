//! Tabular reinforcement learning on the routing environment.
//!
//! Two desk-scale learners share one interface: Q-learning (off-policy
//! one-step TD with a max over next-state values) and a one-step
//! actor-critic (softmax action preferences driven by the TD error of a
//! learned state value). Both explore with an epsilon-greedy wrapper whose
//! epsilon decays linearly, and both are exactly reproducible from a seed.
//!
//! The quantized state key deliberately omits elapsed time and step count,
//! so the undiscounted return is well defined per key and the tables stay
//! small. Training progress is sampled as a [`TrainingCurve`]: every
//! evaluation cadence the current table is rolled out greedily on every map
//! and the mean trip time and success rate are recorded.
//!
//! [`make_baseline_reward`] derives the two reward ablations studied against
//! the full agent: one blind to bandwidth (no transfer rewards, requirement
//! still enforced), one blind to traffic (no density punishment, flat per-step
//! cost instead).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    encode_state, initial_state, Action, BandwidthMap, Env, EnvError, EnvParams, RewardConfig,
    StateKey,
};
use crate::traffic::TrafficGrid;

/// How often training pauses for a frozen greedy evaluation, in environment
/// steps.
pub const DEFAULT_EVAL_CADENCE: u64 = 1_000;

/// Errors from training, evaluation, and checkpoint I/O.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint {path}: {message}")]
    Format { path: String, message: String },
}

/// The two tabular learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QLearning,
    ActorCritic,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::QLearning => write!(f, "q_learning"),
            Algorithm::ActorCritic => write!(f, "actor_critic"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "q_learning" => Ok(Algorithm::QLearning),
            "actor_critic" => Ok(Algorithm::ActorCritic),
            other => Err(format!(
                "unknown algorithm {other:?}, expected q_learning or actor_critic"
            )),
        }
    }
}

/// The reward ablations of the baseline study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    BandwidthUnaware,
    TrafficUnaware,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineKind::BandwidthUnaware => write!(f, "bandwidth_unaware"),
            BaselineKind::TrafficUnaware => write!(f, "traffic_unaware"),
        }
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bandwidth_unaware" => Ok(BaselineKind::BandwidthUnaware),
            "traffic_unaware" => Ok(BaselineKind::TrafficUnaware),
            other => Err(format!(
                "unknown baseline {other:?}, expected bandwidth_unaware or traffic_unaware"
            )),
        }
    }
}

/// Training hyperparameters. The discount factor is fixed at 1: episodes
/// are bounded by the step limit, so undiscounted returns are finite and
/// trip time comparisons need no horizon correction.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    /// Step size for the critic's value updates (actor-critic only).
    pub critic_rate: f64,
    pub initial_epsilon: f64,
    pub final_epsilon: f64,
    /// Steps over which epsilon anneals linearly; defaults to half the
    /// training budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_decay_steps: Option<u64>,
    pub training_steps: u64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::QLearning,
            learning_rate: 0.1,
            critic_rate: 0.1,
            initial_epsilon: 1.0,
            final_epsilon: 0.05,
            epsilon_decay_steps: None,
            training_steps: 100_000,
            seed: 1,
        }
    }
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, training_steps: u64, seed: u64) -> Self {
        Self {
            algorithm,
            training_steps,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(TrainError::Config(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(self.critic_rate > 0.0 && self.critic_rate <= 1.0) {
            return Err(TrainError::Config(format!(
                "critic_rate must be in (0, 1], got {}",
                self.critic_rate
            )));
        }
        for (name, eps) in [
            ("initial_epsilon", self.initial_epsilon),
            ("final_epsilon", self.final_epsilon),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(TrainError::Config(format!(
                    "{name} must be in [0, 1], got {eps}"
                )));
            }
        }
        if self.training_steps == 0 {
            return Err(TrainError::Config("training_steps must be positive".into()));
        }
        if self.epsilon_decay_steps == Some(0) {
            return Err(TrainError::Config(
                "epsilon_decay_steps must be positive when given".into(),
            ));
        }
        Ok(())
    }

    /// Exploration rate before taking step number `step` (0-based).
    pub fn epsilon_at(&self, step: u64) -> f64 {
        let horizon = self
            .epsilon_decay_steps
            .unwrap_or_else(|| (self.training_steps / 2).max(1));
        if step >= horizon {
            return self.final_epsilon;
        }
        let frac = step as f64 / horizon as f64;
        self.initial_epsilon + (self.final_epsilon - self.initial_epsilon) * frac
    }
}

/// Per-state learned values: one slot per action plus a state value. For
/// Q-learning the slots are action values and the state value is unused;
/// for actor-critic they are softmax preferences and the critic's estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TableEntry {
    pub actions: [f64; 3],
    pub state_value: f64,
}

/// Sparse map from encoded states to learned values. Missing keys read as
/// zeros, so an empty table behaves like a freshly initialized one.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    algorithm: Algorithm,
    entries: BTreeMap<StateKey, TableEntry>,
}

impl ValueTable {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            entries: BTreeMap::new(),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, key: &StateKey) -> TableEntry {
        self.entries.get(key).copied().unwrap_or_default()
    }

    pub fn action_values(&self, key: &StateKey) -> [f64; 3] {
        self.entry(key).actions
    }

    pub fn state_value(&self, key: &StateKey) -> f64 {
        self.entry(key).state_value
    }

    pub fn keys(&self) -> impl Iterator<Item = &StateKey> {
        self.entries.keys()
    }

    /// Highest-valued action, ties broken by declaration order
    /// (forward < left < right).
    pub fn greedy_action(&self, key: &StateKey) -> Action {
        let values = self.action_values(key);
        let mut best = Action::Forward;
        for action in Action::ALL {
            if values[action.index()] > values[best.index()] {
                best = action;
            }
        }
        best
    }

    /// The actor's softmax distribution over actions. For Q-learning tables
    /// this is still well defined but unused by training.
    pub fn policy(&self, key: &StateKey) -> [f64; 3] {
        softmax(self.action_values(key))
    }

    fn entry_mut(&mut self, key: StateKey) -> &mut TableEntry {
        self.entries.entry(key).or_default()
    }

    /// Text checkpoint: versioned header describing the key schema, then one
    /// line per state in sorted key order, so identical tables produce
    /// identical bytes.
    pub fn dump_string(&self) -> String {
        let mut out = String::new();
        out.push_str("datatrip-values v1\n");
        out.push_str(&format!("algorithm {}\n", self.algorithm));
        out.push_str("key map_id cell_index heading data_bucket\n");
        out.push_str("columns forward left right state_value\n");
        out.push_str(&format!("entries {}\n", self.entries.len()));
        for (key, entry) in &self.entries {
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {}\n",
                key.map_id,
                key.cell_index,
                key.heading,
                key.data_bucket,
                entry.actions[0],
                entry.actions[1],
                entry.actions[2],
                entry.state_value
            ));
        }
        out
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<(), TrainError> {
        fs::write(path, self.dump_string()).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let fail = |message: String| TrainError::Format {
            path: path.display().to_string(),
            message,
        };

        let mut lines = text.lines();
        let mut expect = |want: &str| -> Result<&str, TrainError> {
            let line = lines
                .next()
                .ok_or_else(|| fail(format!("missing {want} line")))?;
            Ok(line)
        };

        let version = expect("version")?;
        if version != "datatrip-values v1" {
            return Err(fail(format!("unsupported version line {version:?}")));
        }
        let algorithm_line = expect("algorithm")?;
        let algorithm = algorithm_line
            .strip_prefix("algorithm ")
            .ok_or_else(|| fail(format!("expected algorithm line, got {algorithm_line:?}")))?
            .parse::<Algorithm>()
            .map_err(&fail)?;
        let key_line = expect("key schema")?;
        if key_line != "key map_id cell_index heading data_bucket" {
            return Err(fail(format!("unexpected key schema {key_line:?}")));
        }
        let columns_line = expect("columns")?;
        if columns_line != "columns forward left right state_value" {
            return Err(fail(format!("unexpected columns line {columns_line:?}")));
        }
        let entries_line = expect("entries")?;
        let count: usize = entries_line
            .strip_prefix("entries ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| fail(format!("expected entry count, got {entries_line:?}")))?;

        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| fail("fewer entries than the header declares".into()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 8 {
                return Err(fail(format!("expected 8 fields, got {:?}", line)));
            }
            let parse_num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| fail(format!("bad number {s:?}: {e}")))
            };
            let key = StateKey {
                map_id: fields[0]
                    .parse()
                    .map_err(|e| fail(format!("bad map_id {:?}: {e}", fields[0])))?,
                cell_index: fields[1]
                    .parse()
                    .map_err(|e| fail(format!("bad cell_index {:?}: {e}", fields[1])))?,
                heading: fields[2]
                    .parse()
                    .map_err(|e: String| fail(e))?,
                data_bucket: fields[3]
                    .parse()
                    .map_err(|e| fail(format!("bad data_bucket {:?}: {e}", fields[3])))?,
            };
            let entry = TableEntry {
                actions: [
                    parse_num(fields[4])?,
                    parse_num(fields[5])?,
                    parse_num(fields[6])?,
                ],
                state_value: parse_num(fields[7])?,
            };
            entries.insert(key, entry);
        }
        if lines.next().is_some() {
            return Err(fail("trailing content after the declared entries".into()));
        }
        Ok(Self { algorithm, entries })
    }
}

fn softmax(values: [f64; 3]) -> [f64; 3] {
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps = values.map(|v| (v - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

/// One evaluation sample on the training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub step: u64,
    /// Mean trip time over successful greedy rollouts; absent when none
    /// succeeded.
    pub mean_trip_time: Option<f64>,
    pub success_rate: f64,
}

/// Greedy-evaluation metrics sampled at a fixed cadence during training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingCurve {
    pub samples: Vec<CurveSample>,
}

impl TrainingCurve {
    /// Serializes as `step,mean_trip_time,success_rate`; a missing mean is
    /// an empty field.
    pub fn csv_string(&self) -> String {
        let mut out = String::from("step,mean_trip_time,success_rate\n");
        for s in &self.samples {
            let mean = s
                .mean_trip_time
                .map(|m| m.to_string())
                .unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", s.step, mean, s.success_rate));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        fs::write(path, self.csv_string()).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let fail = |message: String| TrainError::Format {
            path: path.display().to_string(),
            message,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some("step,mean_trip_time,success_rate") => {}
            other => return Err(fail(format!("unexpected header {other:?}"))),
        }
        let mut samples = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(fail(format!("expected 3 fields, got {line:?}")));
            }
            let step = fields[0]
                .parse()
                .map_err(|e| fail(format!("bad step {:?}: {e}", fields[0])))?;
            let mean_trip_time = if fields[1].is_empty() {
                None
            } else {
                Some(
                    fields[1]
                        .parse()
                        .map_err(|e| fail(format!("bad trip time {:?}: {e}", fields[1])))?,
                )
            };
            let success_rate = fields[2]
                .parse()
                .map_err(|e| fail(format!("bad success rate {:?}: {e}", fields[2])))?;
            samples.push(CurveSample {
                step,
                mean_trip_time,
                success_rate,
            });
        }
        Ok(Self { samples })
    }
}

/// One greedy rollout's result. Failed rollouts (step limit reached before
/// a valid arrival) report an infinite trip time as the sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    pub map_id: u32,
    pub trip_time: f64,
    pub success: bool,
}

/// Aggregate greedy-evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean trip time over successful rollouts; absent when none succeeded.
    pub mean_trip_time: Option<f64>,
    pub success_rate: f64,
    pub per_map: Vec<EvalOutcome>,
}

/// Rolls the table's greedy policy out on every map, deterministically
/// (ties resolve forward < left < right), truncating at the step limit.
/// Failures count against the success rate but are excluded from the mean
/// trip time.
pub fn evaluate_greedy(
    table: &ValueTable,
    maps: &[BandwidthMap],
    traffic: &TrafficGrid,
    reward_cfg: &RewardConfig,
    params: &EnvParams,
    episodes_per_map: usize,
) -> EvalReport {
    let q = params.data_resolution();
    let mut per_map = Vec::with_capacity(maps.len() * episodes_per_map);
    for map in maps {
        for _ in 0..episodes_per_map {
            let mut state = initial_state(map, params);
            loop {
                let key = encode_state(&state, map.cols(), params.requirement, q);
                let action = table.greedy_action(&key);
                let out = crate::env::step(&state, action, map, traffic, reward_cfg, params)
                    .expect("greedy rollout never steps a terminal state");
                state = out.next_state;
                if out.terminal {
                    break;
                }
            }
            let success = state.cell == map.destination() && state.requirement_met();
            per_map.push(EvalOutcome {
                map_id: map.map_id(),
                trip_time: if success { state.trip_time } else { f64::INFINITY },
                success,
            });
        }
    }

    let successes: Vec<f64> = per_map
        .iter()
        .filter(|o| o.success)
        .map(|o| o.trip_time)
        .collect();
    let mean_trip_time = if successes.is_empty() {
        None
    } else {
        Some(successes.iter().sum::<f64>() / successes.len() as f64)
    };
    let success_rate = if per_map.is_empty() {
        0.0
    } else {
        per_map.iter().filter(|o| o.success).count() as f64 / per_map.len() as f64
    };
    EvalReport {
        mean_trip_time,
        success_rate,
        per_map,
    }
}

const BEHAVIOR_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Runs the configured learner for its full budget of environment steps and
/// returns the learned table with the evaluation curve. Exactly reproducible
/// given the seed: the environment's map sampling and the behavior policy
/// draw from independent streams derived from it.
pub fn train(
    maps: &[BandwidthMap],
    traffic: &TrafficGrid,
    reward_cfg: &RewardConfig,
    params: &EnvParams,
    learner: &LearnerConfig,
    eval_cadence: u64,
) -> Result<(ValueTable, TrainingCurve), TrainError> {
    learner.validate()?;
    if eval_cadence == 0 {
        return Err(TrainError::Config("eval cadence must be positive".into()));
    }

    let mut env = Env::new(
        maps.to_vec(),
        traffic.clone(),
        *reward_cfg,
        *params,
        learner.seed,
    )?;
    let mut behavior_rng = ChaCha8Rng::seed_from_u64(learner.seed ^ BEHAVIOR_SEED_SALT);
    let mut table = ValueTable::new(learner.algorithm);
    let mut curve = TrainingCurve::default();

    let mut state = env.reset();
    for step_index in 0..learner.training_steps {
        let key = env.encode(&state);
        let epsilon = learner.epsilon_at(step_index);
        let action = behavior_action(&table, &key, learner.algorithm, epsilon, &mut behavior_rng);
        let out = env.step(action)?;
        let next_key = env.encode(&out.next_state);

        match learner.algorithm {
            Algorithm::QLearning => {
                let bootstrap = if out.terminal {
                    0.0
                } else {
                    table
                        .action_values(&next_key)
                        .iter()
                        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                };
                let target = out.reward + bootstrap;
                let entry = table.entry_mut(key);
                let slot = &mut entry.actions[action.index()];
                *slot += learner.learning_rate * (target - *slot);
            }
            Algorithm::ActorCritic => {
                let bootstrap = if out.terminal {
                    0.0
                } else {
                    table.state_value(&next_key)
                };
                let delta = out.reward + bootstrap - table.state_value(&key);
                let pi = table.policy(&key);
                let entry = table.entry_mut(key);
                entry.state_value += learner.critic_rate * delta;
                for b in Action::ALL {
                    let indicator = if b == action { 1.0 } else { 0.0 };
                    entry.actions[b.index()] +=
                        learner.learning_rate * delta * (indicator - pi[b.index()]);
                }
            }
        }

        state = if out.terminal {
            env.reset()
        } else {
            out.next_state
        };

        if (step_index + 1) % eval_cadence == 0 {
            let report = evaluate_greedy(&table, maps, traffic, reward_cfg, params, 1);
            curve.samples.push(CurveSample {
                step: step_index + 1,
                mean_trip_time: report.mean_trip_time,
                success_rate: report.success_rate,
            });
        }
    }

    Ok((table, curve))
}

fn behavior_action(
    table: &ValueTable,
    key: &StateKey,
    algorithm: Algorithm,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Action {
    if rng.random::<f64>() < epsilon {
        return Action::ALL[rng.random_range(0..Action::ALL.len())];
    }
    match algorithm {
        Algorithm::QLearning => table.greedy_action(key),
        Algorithm::ActorCritic => {
            let pi = table.policy(key);
            let roll: f64 = rng.random();
            let mut cumulative = 0.0;
            for action in Action::ALL {
                cumulative += pi[action.index()];
                if roll < cumulative {
                    return action;
                }
            }
            Action::Right
        }
    }
}

/// Derives the ablated reward configuration for a baseline agent.
///
/// Bandwidth-unaware removes the transfer rewards but keeps the destination
/// gated on the requirement: the agent is unrewarded for the requirement,
/// not exempt from it. Traffic-unaware removes density punishment and
/// substitutes a flat cost of 1 per step so shorter routes still win.
/// Both transformations are idempotent.
pub fn make_baseline_reward(kind: BaselineKind, base: &RewardConfig) -> RewardConfig {
    let mut cfg = *base;
    match kind {
        BaselineKind::BandwidthUnaware => {
            cfg.high_bw_step_reward = 0.0;
            cfg.requirement_bonus = 0.0;
        }
        BaselineKind::TrafficUnaware => {
            cfg.punishment_scale = 0.0;
            cfg.flat_step_penalty = 1.0;
        }
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Cell, Heading};

    fn corridor() -> (Vec<BandwidthMap>, TrafficGrid, EnvParams) {
        let traffic = TrafficGrid::uniform(1, 3, 1000.0).unwrap();
        let map = BandwidthMap::new(1, 3, Cell::new(0, 0), Cell::new(0, 2), [], 0).unwrap();
        let mut params = EnvParams::new(0.0);
        params.initial_heading = Heading::East;
        (vec![map], traffic, params)
    }

    #[test]
    fn corridor_policy_learns_two_forwards() {
        let (maps, traffic, params) = corridor();
        let reward_cfg = RewardConfig::default();
        for algorithm in [Algorithm::QLearning, Algorithm::ActorCritic] {
            let learner = LearnerConfig::new(algorithm, 10_000, 3);
            let (table, curve) =
                train(&maps, &traffic, &reward_cfg, &params, &learner, 2_500).unwrap();

            let report = evaluate_greedy(&table, &maps, &traffic, &reward_cfg, &params, 1);
            assert_eq!(report.mean_trip_time, Some(3.0), "{algorithm} missed");
            assert_eq!(report.success_rate, 1.0);

            let q = params.data_resolution();
            let start = initial_state(&maps[0], &params);
            let key = encode_state(&start, 3, params.requirement, q);
            assert_eq!(table.greedy_action(&key), Action::Forward);
            let mid = crate::env::step(
                &start,
                Action::Forward,
                &maps[0],
                &traffic,
                &reward_cfg,
                &params,
            )
            .unwrap()
            .next_state;
            let mid_key = encode_state(&mid, 3, params.requirement, q);
            assert_eq!(table.greedy_action(&mid_key), Action::Forward);

            assert_eq!(curve.samples.len(), 4);
            assert!(curve.samples.windows(2).all(|w| w[0].step < w[1].step));
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_runs() {
        let (maps, traffic, params) = corridor();
        let reward_cfg = RewardConfig::default();
        let learner = LearnerConfig::new(Algorithm::ActorCritic, 5_000, 11);
        let (table_a, curve_a) =
            train(&maps, &traffic, &reward_cfg, &params, &learner, 500).unwrap();
        let (table_b, curve_b) =
            train(&maps, &traffic, &reward_cfg, &params, &learner, 500).unwrap();
        assert_eq!(curve_a.csv_string(), curve_b.csv_string());
        assert_eq!(table_a.dump_string(), table_b.dump_string());
    }

    #[test]
    fn missing_keys_read_as_zeros_and_ties_prefer_forward() {
        let table = ValueTable::new(Algorithm::QLearning);
        let key = StateKey {
            map_id: 9,
            cell_index: 4,
            heading: Heading::South,
            data_bucket: 2,
        };
        assert_eq!(table.action_values(&key), [0.0, 0.0, 0.0]);
        assert_eq!(table.state_value(&key), 0.0);
        assert_eq!(table.greedy_action(&key), Action::Forward);
        let pi = table.policy(&key);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pi.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn training_only_creates_reachable_state_keys() {
        let (maps, traffic, params) = corridor();
        let learner = LearnerConfig::new(Algorithm::QLearning, 3_000, 5);
        let (table, _) = train(
            &maps,
            &traffic,
            &RewardConfig::default(),
            &params,
            &learner,
            1_000,
        )
        .unwrap();
        assert!(!table.is_empty());
        for key in table.keys() {
            assert_eq!(key.map_id, 0);
            assert!(key.cell_index < 3);
            assert_eq!(key.data_bucket, 0);
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let (maps, traffic, params) = corridor();
        let learner = LearnerConfig::new(Algorithm::ActorCritic, 2_000, 7);
        let (table, _) = train(
            &maps,
            &traffic,
            &RewardConfig::default(),
            &params,
            &learner,
            1_000,
        )
        .unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("values.txt");
        table.write_checkpoint(&path).unwrap();
        let loaded = ValueTable::read_checkpoint(&path).unwrap();
        assert_eq!(table, loaded);

        let dump = table.dump_string();
        assert!(dump.starts_with("datatrip-values v1\nalgorithm actor_critic\n"));
        assert!(dump.contains("key map_id cell_index heading data_bucket\n"));

        std::fs::write(&path, "datatrip-values v9\n").unwrap();
        assert!(matches!(
            ValueTable::read_checkpoint(&path),
            Err(TrainError::Format { .. })
        ));
    }

    #[test]
    fn epsilon_anneals_linearly_to_the_floor() {
        let learner = LearnerConfig::new(Algorithm::QLearning, 10_000, 0);
        assert_eq!(learner.epsilon_at(0), 1.0);
        let mid = learner.epsilon_at(2_500);
        assert!((mid - 0.525).abs() < 1e-12);
        assert_eq!(learner.epsilon_at(5_000), 0.05);
        assert_eq!(learner.epsilon_at(9_999), 0.05);

        let mut custom = learner.clone();
        custom.epsilon_decay_steps = Some(100);
        assert_eq!(custom.epsilon_at(100), 0.05);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut learner = LearnerConfig::new(Algorithm::QLearning, 1_000, 0);
        learner.learning_rate = 0.0;
        assert!(learner.validate().is_err());
        let mut learner = LearnerConfig::new(Algorithm::QLearning, 1_000, 0);
        learner.initial_epsilon = 1.5;
        assert!(learner.validate().is_err());
        let mut learner = LearnerConfig::new(Algorithm::QLearning, 1_000, 0);
        learner.training_steps = 0;
        assert!(learner.validate().is_err());
    }

    #[test]
    fn baseline_rewards_match_their_definitions() {
        let base = RewardConfig::default();
        let bw = make_baseline_reward(BaselineKind::BandwidthUnaware, &base);
        assert_eq!(bw.high_bw_step_reward, 0.0);
        assert_eq!(bw.requirement_bonus, 0.0);
        assert_eq!(bw.destination_reward, 10.0);
        assert_eq!(bw.punishment_scale, base.punishment_scale);

        let tu = make_baseline_reward(BaselineKind::TrafficUnaware, &base);
        assert_eq!(tu.punishment_scale, 0.0);
        assert_eq!(tu.flat_step_penalty, 1.0);
        assert_eq!(tu.high_bw_step_reward, base.high_bw_step_reward);

        assert_eq!(make_baseline_reward(BaselineKind::BandwidthUnaware, &bw), bw);
        assert_eq!(make_baseline_reward(BaselineKind::TrafficUnaware, &tu), tu);
    }

    #[test]
    fn bandwidth_ablation_changes_only_positive_terms() {
        let mut densities = vec![1000.0; 16];
        densities[5] = 2500.0;
        densities[10] = 3200.0;
        let traffic = TrafficGrid::from_densities(4, 4, densities).unwrap();
        let map = BandwidthMap::new(
            4,
            4,
            Cell::new(3, 0),
            Cell::new(0, 3),
            [Cell::new(1, 1)],
            0,
        )
        .unwrap();
        let mut params = EnvParams::new(1.0);
        params.initial_heading = Heading::North;
        let base = RewardConfig::default();
        let ablated = make_baseline_reward(BaselineKind::BandwidthUnaware, &base);

        let script = [
            Action::Forward,
            Action::Forward,
            Action::Right,
            Action::Left,
            Action::Forward,
            Action::Right,
        ];
        let mut state = initial_state(&map, &params);
        for action in script {
            let with_base =
                crate::env::step(&state, action, &map, &traffic, &base, &params).unwrap();
            let with_ablated =
                crate::env::step(&state, action, &map, &traffic, &ablated, &params).unwrap();
            assert_eq!(with_base.next_state, with_ablated.next_state);
            let expected_gap = if with_base.transferred_this_step > 0.0 {
                base.high_bw_step_reward
            } else {
                0.0
            };
            assert_eq!(with_base.reward - with_ablated.reward, expected_gap);
            state = with_base.next_state;
        }
    }

    #[test]
    fn actor_critic_preferences_stay_finite() {
        let traffic = TrafficGrid::uniform(3, 3, 1000.0).unwrap();
        let map = BandwidthMap::new(
            3,
            3,
            Cell::new(0, 0),
            Cell::new(0, 2),
            [Cell::new(2, 1)],
            0,
        )
        .unwrap();
        let mut params = EnvParams::new(1.0);
        params.initial_heading = Heading::East;
        let learner = LearnerConfig::new(Algorithm::ActorCritic, 30_000, 2);
        let (table, _) = train(
            &[map],
            &traffic,
            &RewardConfig::default(),
            &params,
            &learner,
            10_000,
        )
        .unwrap();
        for key in table.keys() {
            let entry = table.entry(key);
            for v in entry.actions {
                assert!(v.is_finite() && v.abs() < 1e4);
            }
            assert!(entry.state_value.is_finite());
        }
    }

    #[test]
    fn untrained_table_fails_the_detour_map() {
        let traffic = TrafficGrid::uniform(3, 3, 1000.0).unwrap();
        let map = BandwidthMap::new(
            3,
            3,
            Cell::new(0, 0),
            Cell::new(0, 2),
            [Cell::new(2, 1)],
            0,
        )
        .unwrap();
        let mut params = EnvParams::new(1.0);
        params.initial_heading = Heading::East;
        let table = ValueTable::new(Algorithm::QLearning);
        let report = evaluate_greedy(
            &table,
            &[map],
            &traffic,
            &RewardConfig::default(),
            &params,
            1,
        );
        assert_eq!(report.success_rate, 0.0);
        assert_eq!(report.mean_trip_time, None);
        assert_eq!(report.per_map.len(), 1);
        assert!(!report.per_map[0].success);
        assert!(report.per_map[0].trip_time.is_infinite());
    }

    #[test]
    fn trained_greedy_matches_the_planner_on_the_detour_map() {
        let traffic = TrafficGrid::uniform(3, 3, 1000.0).unwrap();
        let map = BandwidthMap::new(
            3,
            3,
            Cell::new(0, 0),
            Cell::new(0, 2),
            [Cell::new(2, 1)],
            0,
        )
        .unwrap();
        let mut params = EnvParams::new(1.0);
        params.initial_heading = Heading::East;
        let reward_cfg = RewardConfig::default();
        let oracle = crate::planner::optimal_route(&map, &traffic, &params).unwrap();
        assert_eq!(oracle.total_time, 9.0);

        let learner = LearnerConfig::new(Algorithm::QLearning, 60_000, 4);
        let (table, _) = train(
            &[map.clone()],
            &traffic,
            &reward_cfg,
            &params,
            &learner,
            20_000,
        )
        .unwrap();
        let report = evaluate_greedy(&table, &[map], &traffic, &reward_cfg, &params, 1);
        assert_eq!(report.success_rate, 1.0);
        assert_eq!(report.mean_trip_time, Some(oracle.total_time));
    }

    #[test]
    fn curve_csv_round_trips_and_counts_rows() {
        let (maps, traffic, params) = corridor();
        let learner = LearnerConfig::new(Algorithm::QLearning, 4_000, 8);
        let (_, curve) = train(
            &maps,
            &traffic,
            &RewardConfig::default(),
            &params,
            &learner,
            1_000,
        )
        .unwrap();
        assert_eq!(curve.samples.len(), 4);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        curve.write_csv(&path).unwrap();
        let loaded = TrainingCurve::read_csv(&path).unwrap();
        assert_eq!(curve, loaded);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,mean_trip_time,success_rate\n"));
    }

    #[test]
    fn traffic_blind_training_costs_true_time() {
        // 7x7 with a congested middle corridor: densities proportional to
        // their delay categories, so less punishment means less trip time
        // and the comparison is apples to apples. The hop-count agent saves
        // two moves by driving straight through; the full agent learns the
        // detour. Aggregated over seeds, the full agent's final greedy trip
        // time must not exceed the traffic-blind agent's.
        let mut densities = vec![2000.0; 49];
        for col in 1..=5 {
            densities[3 * 7 + col] = 3000.0;
        }
        let traffic = TrafficGrid::from_densities(7, 7, densities).unwrap();
        let map = BandwidthMap::new(7, 7, Cell::new(3, 0), Cell::new(3, 6), [], 0).unwrap();
        let params = EnvParams::new(0.0);
        let base = RewardConfig::default();
        let blind = make_baseline_reward(BaselineKind::TrafficUnaware, &base);

        let final_time = |reward_cfg: &RewardConfig, seed: u64| {
            let learner = LearnerConfig::new(Algorithm::QLearning, 40_000, seed);
            let (table, _) = train(
                std::slice::from_ref(&map),
                &traffic,
                reward_cfg,
                &params,
                &learner,
                40_000,
            )
            .unwrap();
            let report = evaluate_greedy(
                &table,
                std::slice::from_ref(&map),
                &traffic,
                reward_cfg,
                &params,
                1,
            );
            report.mean_trip_time.expect("trained policy completes")
        };

        let seeds = [1, 2, 3, 4, 5];
        let base_mean: f64 =
            seeds.iter().map(|&s| final_time(&base, s)).sum::<f64>() / seeds.len() as f64;
        let blind_mean: f64 =
            seeds.iter().map(|&s| final_time(&blind, s)).sum::<f64>() / seeds.len() as f64;
        assert!(
            base_mean <= blind_mean,
            "density-aware training ended slower ({base_mean}) than traffic-blind ({blind_mean})"
        );
    }
}
