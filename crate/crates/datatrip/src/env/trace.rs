//! Optional per-step episode traces for debugging rollouts.

use std::fs;
use std::path::Path;

use super::{Action, EnvError, Heading, StepOutcome};

/// One row of an episode trace: the action taken and the state after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: u32,
    pub row: usize,
    pub col: usize,
    pub heading: Heading,
    pub action: Action,
    pub reward: f64,
    pub trip_time: f64,
    pub data_remaining: f64,
}

impl TraceRecord {
    /// Builds a record from one step's outcome.
    pub fn from_outcome(action: Action, outcome: &StepOutcome) -> Self {
        let s = &outcome.next_state;
        Self {
            step: s.steps,
            row: s.cell.row,
            col: s.cell.col,
            heading: s.heading,
            action,
            reward: outcome.reward,
            trip_time: s.trip_time,
            data_remaining: s.data_remaining,
        }
    }
}

/// Writes a trace as CSV with the columns
/// `step,row,col,heading,action,reward,trip_time,data_remaining`.
pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<(), EnvError> {
    let mut out = String::from("step,row,col,heading,action,reward,trip_time,data_remaining\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.step, r.row, r.col, r.heading, r.action, r.reward, r.trip_time, r.data_remaining
        ));
    }
    fs::write(path, out).map_err(|source| EnvError::Io {
        path: path.display().to_string(),
        source,
    })
}
