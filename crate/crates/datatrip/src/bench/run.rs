//! Experiment and sweep execution.
//!
//! [`run_experiment`] turns a validated [`ExperimentConfig`] into an output
//! bundle: generated map files, per-map route plans with an oracle table,
//! one directory per training run holding the curve CSV and the value-table
//! checkpoint, a summary CSV across all runs, and a convergence plot.
//! [`run_sweep`] repeats that for each value of a swept parameter and adds
//! a comparison CSV plus an overlay plot of the mean curves.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::agents::{
    evaluate_greedy, make_baseline_reward, train, Algorithm, BaselineKind, LearnerConfig,
    TrainingCurve,
};
use crate::env::{BandwidthMap, EnvParams, RewardConfig, RewardMode};
use crate::planner::{
    bandwidth_unaware_route, optimal_route, traffic_unaware_route, write_plan_csv, RoutePlan,
};
use crate::traffic::TrafficGrid;

use super::plot::{line_chart, ChartSpec, Series, PALETTE};
use super::{
    generate_maps, load_map_files, load_traffic, write_text, ConfigError, ExperimentConfig,
    RunError, SweepSpec,
};

/// Which reward signal a run trained on: the full one or one of the two
/// ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Base,
    BandwidthUnaware,
    TrafficUnaware,
}

impl Variant {
    fn reward_config(self, mode: RewardMode) -> RewardConfig {
        let base = RewardConfig::new(mode);
        match self {
            Variant::Base => base,
            Variant::BandwidthUnaware => {
                make_baseline_reward(BaselineKind::BandwidthUnaware, &base)
            }
            Variant::TrafficUnaware => make_baseline_reward(BaselineKind::TrafficUnaware, &base),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::BandwidthUnaware => "bandwidth_unaware",
            Variant::TrafficUnaware => "traffic_unaware",
        })
    }
}

/// Execution knobs that live outside the experiment definition.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for the run matrix; 0 or 1 means sequential.
    pub jobs: usize,
    /// Omit wall-clock fields and plot timestamps so reruns are
    /// byte-identical.
    pub no_timestamp: bool,
    /// Original config text to echo into the output bundle.
    pub echo_config: Option<String>,
}

/// One training run's results.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub learner_index: usize,
    pub algorithm: Algorithm,
    pub reward_mode: RewardMode,
    pub variant: Variant,
    pub seed: u64,
    /// Mean greedy trip time over maps after training; absent when every
    /// rollout failed.
    pub final_trip_time: Option<f64>,
    pub final_success_rate: f64,
    pub wall_seconds: f64,
    pub curve: TrainingCurve,
    pub run_dir: PathBuf,
}

/// Oracle and baseline plans for one map.
#[derive(Debug, Clone)]
pub struct MapPlans {
    pub map_id: u32,
    pub optimal: RoutePlan,
    pub bandwidth_unaware: RoutePlan,
    pub traffic_unaware: RoutePlan,
}

/// Everything an experiment produced, with paths into the output bundle.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub maps: Vec<BandwidthMap>,
    pub plans: Vec<MapPlans>,
    /// Mean optimal trip time over maps with a feasible route.
    pub oracle_mean_time: Option<f64>,
    pub records: Vec<RunRecord>,
    pub summary_path: PathBuf,
    pub plot_path: Option<PathBuf>,
}

/// A sweep's results: one experiment per value plus the comparison outputs.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub out_dir: PathBuf,
    pub comparison_path: PathBuf,
    pub plot_path: PathBuf,
    pub runs: Vec<(String, ExperimentOutcome)>,
}

struct RunSpec {
    learner_index: usize,
    multi_learner: bool,
    learner: LearnerConfig,
    mode: RewardMode,
    variant: Variant,
    seed: u64,
}

impl RunSpec {
    fn dir_name(&self) -> String {
        let base = format!(
            "{}_{}_{}_seed{}",
            self.learner.algorithm, self.mode, self.variant, self.seed
        );
        if self.multi_learner {
            format!("learner{}_{}", self.learner_index, base)
        } else {
            base
        }
    }
}

fn build_specs(config: &ExperimentConfig) -> Vec<RunSpec> {
    let mut variants = vec![Variant::Base];
    if config.baselines.bandwidth_unaware {
        variants.push(Variant::BandwidthUnaware);
    }
    if config.baselines.traffic_unaware {
        variants.push(Variant::TrafficUnaware);
    }
    let multi_learner = config.learners.len() > 1;

    let mut specs = Vec::new();
    for (learner_index, learner) in config.learners.iter().enumerate() {
        for &mode in &config.reward_modes {
            for &variant in &variants {
                for &seed in &config.seeds {
                    let mut learner = learner.clone();
                    learner.seed = seed;
                    specs.push(RunSpec {
                        learner_index,
                        multi_learner,
                        learner,
                        mode,
                        variant,
                        seed,
                    });
                }
            }
        }
    }
    specs
}

fn create_dir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn now_timestamp(options: &RunOptions) -> Option<u64> {
    if options.no_timestamp {
        None
    } else {
        Some(
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .unwrap_or_default()
                .as_secs(),
        )
    }
}

fn execute_run(
    spec: &RunSpec,
    maps: &[BandwidthMap],
    traffic: &TrafficGrid,
    params: &EnvParams,
    runs_dir: &Path,
    eval_cadence: u64,
) -> Result<RunRecord, RunError> {
    let reward_cfg = spec.variant.reward_config(spec.mode);
    let started = Instant::now();
    let (table, curve) = train(maps, traffic, &reward_cfg, params, &spec.learner, eval_cadence)?;
    let wall_seconds = started.elapsed().as_secs_f64();
    let report = evaluate_greedy(&table, maps, traffic, &reward_cfg, params, 1);

    let run_dir = runs_dir.join(spec.dir_name());
    create_dir(&run_dir)?;
    curve.write_csv(&run_dir.join("curve.csv"))?;
    table.write_checkpoint(&run_dir.join("values.txt"))?;

    Ok(RunRecord {
        learner_index: spec.learner_index,
        algorithm: spec.learner.algorithm,
        reward_mode: spec.mode,
        variant: spec.variant,
        seed: spec.seed,
        final_trip_time: report.mean_trip_time,
        final_success_rate: report.success_rate,
        wall_seconds,
        curve,
        run_dir,
    })
}

fn curve_points(curve: &TrainingCurve) -> Vec<(f64, Option<f64>)> {
    curve
        .samples
        .iter()
        .map(|s| (s.step as f64, s.mean_trip_time))
        .collect()
}

fn mean_curve(records: &[&RunRecord]) -> Vec<(f64, Option<f64>)> {
    let len = records
        .iter()
        .map(|r| r.curve.samples.len())
        .max()
        .unwrap_or(0);
    (0..len)
        .map(|i| {
            let step = records
                .iter()
                .find_map(|r| r.curve.samples.get(i).map(|s| s.step))
                .unwrap_or(0);
            let values: Vec<f64> = records
                .iter()
                .filter_map(|r| r.curve.samples.get(i).and_then(|s| s.mean_trip_time))
                .collect();
            let mean = if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            };
            (step as f64, mean)
        })
        .collect()
}

/// Groups records by training configuration (everything but the seed),
/// preserving first-seen order.
fn families(records: &[RunRecord]) -> Vec<(String, Vec<&RunRecord>)> {
    let mut out: Vec<(String, Vec<&RunRecord>)> = Vec::new();
    for record in records {
        let label = family_label_of(record);
        match out.iter_mut().find(|(l, _)| *l == label) {
            Some((_, members)) => members.push(record),
            None => out.push((label, vec![record])),
        }
    }
    out
}

fn family_label_of(record: &RunRecord) -> String {
    format!(
        "learner{} {} {} {}",
        record.learner_index, record.algorithm, record.reward_mode, record.variant
    )
}

fn display_family_label(label: &str, multi_learner: bool) -> String {
    if multi_learner {
        label.to_string()
    } else {
        label.split_once(' ').map(|(_, rest)| rest.to_string()).unwrap_or_else(|| label.to_string())
    }
}

fn convergence_chart(
    records: &[RunRecord],
    oracle_mean_time: Option<f64>,
    timestamp: Option<u64>,
) -> String {
    let multi_learner = records
        .iter()
        .any(|r| r.learner_index != records[0].learner_index);
    let mut series = Vec::new();
    for (i, (label, members)) in families(records).into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()].to_string();
        for record in &members {
            series.push(Series {
                label: None,
                color: color.clone(),
                width: 1.0,
                opacity: 0.35,
                dashed: false,
                points: curve_points(&record.curve),
            });
        }
        series.push(Series {
            label: Some(display_family_label(&label, multi_learner)),
            color,
            width: 2.5,
            opacity: 1.0,
            dashed: false,
            points: mean_curve(&members),
        });
    }
    let spec = ChartSpec {
        title: "training convergence".into(),
        x_label: "environment steps".into(),
        y_label: "trip completion time".into(),
        h_line: oracle_mean_time.map(|v| (v, "planner optimum".into())),
        timestamp,
    };
    line_chart(&spec, &series)
}

fn summary_csv(
    records: &[RunRecord],
    oracle_mean_time: Option<f64>,
    no_timestamp: bool,
) -> String {
    let mut csv = String::from(
        "algorithm,reward_mode,variant,seed,final_trip_time,final_success_rate,\
         oracle_mean_time,oracle_gap_percent,wall_clock_seconds\n",
    );
    for r in records {
        let gap = match (r.final_trip_time, oracle_mean_time) {
            (Some(final_time), Some(oracle)) if oracle > 0.0 => {
                ((final_time - oracle) / oracle * 100.0).to_string()
            }
            _ => String::new(),
        };
        let wall = if no_timestamp {
            String::new()
        } else {
            format!("{:.3}", r.wall_seconds)
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.algorithm,
            r.reward_mode,
            r.variant,
            r.seed,
            fmt_opt(r.final_trip_time),
            r.final_success_rate,
            fmt_opt(oracle_mean_time),
            gap,
            wall
        ));
    }
    csv
}

/// Executes the full run matrix of an experiment and writes its output
/// bundle. Rerunning the same config into the same directory reproduces
/// every CSV byte for byte; plots and summary wall-clock fields also
/// reproduce when `no_timestamp` is set.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentOutcome, RunError> {
    config.validate()?;
    let out_dir = config.output_dir.clone();
    create_dir(&out_dir)?;
    if let Some(text) = &options.echo_config {
        write_text(&out_dir.join("config.toml"), text)?;
    }

    let traffic = load_traffic(&config.traffic)?;
    let params = config.env_params()?;
    let (maps, generated) = match (&config.maps.files, &config.maps.generator) {
        (Some(files), None) => (load_map_files(files)?, false),
        (None, Some(spec)) => (generate_maps(spec, &traffic, &params)?, true),
        _ => {
            return Err(ConfigError::Invalid("maps needs files or a generator".into()).into());
        }
    };
    for map in &maps {
        if map.rows() != traffic.rows() || map.cols() != traffic.cols() {
            return Err(ConfigError::Invalid(format!(
                "map {} is {}x{} but the traffic grid is {}x{}",
                map.map_id(),
                map.rows(),
                map.cols(),
                traffic.rows(),
                traffic.cols()
            ))
            .into());
        }
    }
    if generated {
        let maps_dir = out_dir.join("maps");
        create_dir(&maps_dir)?;
        for map in &maps {
            map.write_map_file(&maps_dir.join(format!("map_{:03}.map", map.map_id())))?;
        }
    }

    let mut plans = Vec::new();
    if config.planner.enabled {
        let plans_dir = out_dir.join("plans");
        create_dir(&plans_dir)?;
        let mut oracle_csv = String::from(
            "map_id,optimal_time,optimal_hops,optimal_feasible,bandwidth_unaware_time,\
             bandwidth_unaware_feasible,traffic_unaware_time,traffic_unaware_feasible\n",
        );
        for map in &maps {
            let optimal = optimal_route(map, &traffic, &params)?;
            let bandwidth_unaware = bandwidth_unaware_route(map, &traffic, &params)?;
            let traffic_unaware = traffic_unaware_route(map, &traffic, &params)?;
            write_plan_csv(
                &plans_dir.join(format!("map_{:03}_optimal.csv", map.map_id())),
                &optimal,
            )?;
            let time_of = |p: &RoutePlan| {
                if p.total_time.is_finite() {
                    p.total_time.to_string()
                } else {
                    String::new()
                }
            };
            oracle_csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                map.map_id(),
                time_of(&optimal),
                optimal.total_hops,
                optimal.feasible,
                time_of(&bandwidth_unaware),
                bandwidth_unaware.feasible,
                time_of(&traffic_unaware),
                traffic_unaware.feasible,
            ));
            plans.push(MapPlans {
                map_id: map.map_id(),
                optimal,
                bandwidth_unaware,
                traffic_unaware,
            });
        }
        write_text(&plans_dir.join("oracle.csv"), &oracle_csv)?;
    }
    let feasible_times: Vec<f64> = plans
        .iter()
        .filter(|p| p.optimal.feasible)
        .map(|p| p.optimal.total_time)
        .collect();
    let oracle_mean_time = if feasible_times.is_empty() {
        None
    } else {
        Some(feasible_times.iter().sum::<f64>() / feasible_times.len() as f64)
    };

    let specs = build_specs(config);
    let records = if specs.is_empty() {
        Vec::new()
    } else {
        let runs_dir = out_dir.join("runs");
        create_dir(&runs_dir)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs.max(1))
            .build()
            .map_err(|e| RunError::Parallel(e.to_string()))?;
        pool.install(|| {
            specs
                .par_iter()
                .map(|spec| {
                    execute_run(spec, &maps, &traffic, &params, &runs_dir, config.eval_cadence)
                })
                .collect::<Result<Vec<_>, RunError>>()
        })?
    };

    let summary_path = out_dir.join("summary.csv");
    write_text(
        &summary_path,
        &summary_csv(&records, oracle_mean_time, options.no_timestamp),
    )?;

    let plot_path = if records.is_empty() {
        None
    } else {
        let path = out_dir.join("plot.svg");
        write_text(
            &path,
            &convergence_chart(&records, oracle_mean_time, now_timestamp(options)),
        )?;
        Some(path)
    };

    Ok(ExperimentOutcome {
        out_dir,
        maps,
        plans,
        oracle_mean_time,
        records,
        summary_path,
        plot_path,
    })
}

/// Runs the experiment once per sweep value, each into its own subdirectory,
/// then writes a comparison CSV and an overlay plot of mean curves.
pub fn run_sweep(
    base: &ExperimentConfig,
    sweep: &SweepSpec,
    options: &RunOptions,
) -> Result<SweepOutcome, RunError> {
    base.validate()?;
    sweep.validate()?;
    let out_dir = base.output_dir.clone();
    create_dir(&out_dir)?;
    if let Some(text) = &options.echo_config {
        write_text(&out_dir.join("config.toml"), text)?;
    }

    let labels = sweep.value_labels();
    let mut runs = Vec::with_capacity(sweep.len());
    for (index, label) in labels.iter().enumerate() {
        let mut config = sweep.apply(base, index)?;
        config.output_dir = out_dir.join(format!("{}_{}", sweep.parameter_name(), label));
        let sub_options = RunOptions {
            jobs: options.jobs,
            no_timestamp: options.no_timestamp,
            echo_config: None,
        };
        let outcome = run_experiment(&config, &sub_options)?;
        runs.push((label.clone(), outcome));
    }

    let mut comparison = String::from(
        "parameter,value,algorithm,reward_mode,variant,seed,final_trip_time,\
         final_success_rate,oracle_mean_time,oracle_gap_percent\n",
    );
    for (label, outcome) in &runs {
        for r in &outcome.records {
            let gap = match (r.final_trip_time, outcome.oracle_mean_time) {
                (Some(final_time), Some(oracle)) if oracle > 0.0 => {
                    ((final_time - oracle) / oracle * 100.0).to_string()
                }
                _ => String::new(),
            };
            comparison.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                sweep.parameter_name(),
                label,
                r.algorithm,
                r.reward_mode,
                r.variant,
                r.seed,
                fmt_opt(r.final_trip_time),
                r.final_success_rate,
                fmt_opt(outcome.oracle_mean_time),
                gap
            ));
        }
    }
    let comparison_path = out_dir.join("comparison.csv");
    write_text(&comparison_path, &comparison)?;

    let multi_family = runs
        .iter()
        .any(|(_, o)| families(&o.records).len() > 1);
    let mut series = Vec::new();
    for (label, outcome) in &runs {
        for (family, members) in families(&outcome.records) {
            let name = if multi_family {
                format!(
                    "{}={} {}",
                    sweep.parameter_name(),
                    label,
                    display_family_label(&family, false)
                )
            } else {
                format!("{}={}", sweep.parameter_name(), label)
            };
            series.push(Series {
                label: Some(name),
                color: PALETTE[series.len() % PALETTE.len()].to_string(),
                width: 2.0,
                opacity: 1.0,
                dashed: false,
                points: mean_curve(&members),
            });
        }
    }
    let spec = ChartSpec {
        title: format!("sweep over {}", sweep.parameter_name()),
        x_label: "environment steps".into(),
        y_label: "trip completion time".into(),
        h_line: None,
        timestamp: now_timestamp(options),
    };
    let plot_path = out_dir.join("sweep_plot.svg");
    write_text(&plot_path, &line_chart(&spec, &series))?;

    Ok(SweepOutcome {
        out_dir,
        comparison_path,
        plot_path,
        runs,
    })
}
