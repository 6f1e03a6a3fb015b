//! Route planning for vehicles that must move data while they drive.
//!
//! A vehicle crosses a traffic-weighted grid toward a destination. Cells
//! either have high-bandwidth network coverage or none, and the vehicle must
//! transfer a required amount of data at high-bandwidth cells before the
//! destination will end the trip. Denser traffic means slower cells, so the
//! interesting routes trade detours through coverage against time lost in
//! congestion.
//!
//! The crate has five parts:
//!
//! - [`traffic`] turns a raw traversal-count heatmap into a grid of densities
//!   and per-cell delay indices (the time model).
//! - [`env`] is the episodic grid environment: heading-relative moves, data
//!   transfer, both reward functions, and the episode lifecycle.
//! - [`planner`] computes exact minimum-time routes under the data
//!   requirement, plus bandwidth-unaware and traffic-unaware baselines.
//! - [`agents`] trains tabular Q-learning and one-step actor-critic policies
//!   on the environment and evaluates them greedily.
//! - [`bench`] runs config-driven experiments and sweeps, writing metrics
//!   CSVs and SVG convergence plots.
//!
//! The accompanying guide (`book/`) walks through each part with runnable
//! examples; the `datatrip` CLI exposes the same machinery as subcommands.

pub mod agents;
pub mod bench;
pub mod env;
pub mod planner;
pub mod traffic;

#[cfg(doctest)]
mod guide;
