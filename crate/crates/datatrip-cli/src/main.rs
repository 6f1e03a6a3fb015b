//! Command-line front end for the route-planning benchmark suite.
//!
//! Subcommands cover the whole workflow: `ingest` bins a raw traversal
//! heatmap into a traffic grid file, `genmaps` samples bandwidth maps,
//! `solve` runs the exact planner and both baselines on one map, `train`
//! executes a config-driven experiment, `sweep` repeats an experiment over
//! one varied parameter, and `plot` re-renders charts from curve CSVs.
//!
//! Exit codes: 0 on success, 2 for configuration and validation problems
//! (including unknown config keys and bad flags), 1 for runtime failures.
//! Partial results already written stay on disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use datatrip::agents::TrainingCurve;
use datatrip::bench::{
    self,
    plot::{line_chart, ChartSpec, Series, PALETTE},
    ConfigError, ExperimentConfig, MapGeneratorSpec, RunError, RunOptions, SweepSpec,
};
use datatrip::env::{BandwidthMap, Cell, EnvParams};
use datatrip::planner::{
    bandwidth_unaware_route, optimal_route, traffic_unaware_route, write_plan_csv,
    write_plan_summary_csv,
};
use datatrip::traffic::{bin_heatmap, load_heatmap_csv, CropBox, HeatPoint, IngestSpec, TrafficGrid};

#[derive(Parser)]
#[command(
    name = "datatrip",
    version,
    about = "Traffic-aware route planning benchmarks: ingest, plan, train, compare"
)]
struct Cli {
    /// Seed override: genmaps uses it directly; train and sweep replace the
    /// config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for independent training runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Output directory (train and sweep default to the config's own).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Omit timestamps and wall-clock fields so outputs are byte-reproducible.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin a traversal heatmap CSV into a traffic grid file.
    Ingest(IngestArgs),
    /// Generate bandwidth map files with seeded high-bandwidth placement.
    Genmaps(GenmapsArgs),
    /// Solve one map exactly: optimal route plus both baseline planners.
    Solve(SolveArgs),
    /// Run a config-driven training experiment.
    Train(TrainArgs),
    /// Run an experiment once per value of a swept parameter.
    Sweep(SweepArgs),
    /// Re-render an SVG chart from training-curve CSVs.
    Plot(PlotArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Heatmap CSV with an `x,y,traversals` header.
    #[arg(long)]
    heatmap: PathBuf,

    #[arg(long)]
    rows: usize,

    #[arg(long)]
    cols: usize,

    /// Rotation in degrees, counterclockwise, about the crop-box centroid.
    #[arg(long, default_value_t = 0.0)]
    rotation: f64,

    /// Crop box as min_x,min_y,max_x,max_y; defaults to the data's bounding
    /// box.
    #[arg(long, value_parser = parse_crop)]
    crop: Option<CropBox>,
}

#[derive(Args)]
struct GenmapsArgs {
    /// Traffic grid file fixing the map dimensions.
    #[arg(long)]
    traffic: PathBuf,

    /// Start cell as row,col.
    #[arg(long, value_parser = parse_cell)]
    start: Cell,

    /// Destination cell as row,col.
    #[arg(long, value_parser = parse_cell)]
    dest: Cell,

    /// High-bandwidth cells per map.
    #[arg(long)]
    num_high_bw: usize,

    /// Number of maps to generate.
    #[arg(long)]
    count: usize,

    /// Transfer requirement each map must be able to satisfy.
    #[arg(long, default_value_t = 1.0)]
    requirement: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    traffic: PathBuf,

    /// Bandwidth map file to solve.
    #[arg(long)]
    map: PathBuf,

    #[arg(long, default_value_t = 1.0)]
    requirement: f64,

    #[arg(long)]
    step_limit: Option<u32>,

    #[arg(long)]
    transfer_scale: Option<f64>,

    /// Transfer quantization unit; defaults to requirement/100.
    #[arg(long)]
    quantizer: Option<f64>,

    /// Initial heading: north, south, east, or west.
    #[arg(long)]
    heading: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Base experiment TOML file.
    #[arg(long)]
    config: PathBuf,

    /// Sweep TOML file naming the parameter and its values.
    #[arg(long)]
    sweep: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Training-curve CSV; repeat for overlays.
    #[arg(long = "curve", required = true)]
    curves: Vec<PathBuf>,

    /// Legend label per curve, in order; defaults to the file stems.
    #[arg(long = "label")]
    labels: Vec<String>,

    /// Horizontal reference value drawn as a dashed line.
    #[arg(long)]
    oracle: Option<f64>,

    #[arg(long, default_value = "training convergence")]
    title: String,

    /// Output file name within the output directory.
    #[arg(long, default_value = "plot.svg")]
    name: String,
}

fn parse_cell(text: &str) -> Result<Cell, String> {
    let (row, col) = text
        .split_once(',')
        .ok_or_else(|| format!("expected row,col, got {text:?}"))?;
    let row = row.trim().parse().map_err(|e| format!("bad row: {e}"))?;
    let col = col.trim().parse().map_err(|e| format!("bad col: {e}"))?;
    Ok(Cell::new(row, col))
}

fn parse_crop(text: &str) -> Result<CropBox, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected min_x,min_y,max_x,max_y, got {text:?}"));
    }
    let mut values = [0.0; 4];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad coordinate {part:?}: {e}"))?;
    }
    Ok(CropBox {
        min_x: values[0],
        min_y: values[1],
        max_x: values[2],
        max_y: values[3],
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Validation problems exit with 2, runtime failures with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(RunError::Config(_)) = cause.downcast_ref::<RunError>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    match &cli.command {
        Command::Ingest(args) => ingest(args, &out),
        Command::Genmaps(args) => genmaps(args, &out, cli.seed.unwrap_or(1)),
        Command::Solve(args) => solve(args, &out),
        Command::Train(args) => train(args, &cli),
        Command::Sweep(args) => sweep(args, &cli),
        Command::Plot(args) => plot(args, &out, cli.no_timestamp),
    }
}

fn create_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn bounding_box(points: &[HeatPoint]) -> Result<CropBox> {
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for p in points {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    if !min_x.is_finite() {
        return Err(ConfigError::Invalid("heatmap has no points to bound".into()).into());
    }
    if max_x - min_x <= 0.0 {
        min_x -= 0.5;
        max_x += 0.5;
    }
    if max_y - min_y <= 0.0 {
        min_y -= 0.5;
        max_y += 0.5;
    }
    Ok(CropBox {
        min_x,
        min_y,
        max_x,
        max_y,
    })
}

fn ingest(args: &IngestArgs, out: &Path) -> Result<()> {
    let points = load_heatmap_csv(&args.heatmap)?;
    let crop = match args.crop {
        Some(crop) => crop,
        None => bounding_box(&points)?,
    };
    let spec = IngestSpec {
        rotation_degrees: args.rotation,
        crop,
        rows: args.rows,
        cols: args.cols,
    };
    let grid = bin_heatmap(&points, &spec)?;
    create_out_dir(out)?;
    let path = out.join("traffic.grid");
    grid.write_grid_file(&path)?;
    println!(
        "wrote {} ({}x{} cells from {} points, mean density {:.1})",
        path.display(),
        grid.rows(),
        grid.cols(),
        points.len(),
        grid.mean_density()
    );
    Ok(())
}

fn genmaps(args: &GenmapsArgs, out: &Path, seed: u64) -> Result<()> {
    let traffic = TrafficGrid::read_grid_file(&args.traffic)?;
    let rows = traffic.rows();
    let cols = traffic.cols();
    let bounds_check = |name: &str, cell: Cell| -> Result<()> {
        if cell.row >= rows || cell.col >= cols {
            return Err(ConfigError::Invalid(format!(
                "{name} {cell} lies outside the {rows}x{cols} traffic grid"
            ))
            .into());
        }
        Ok(())
    };
    bounds_check("start", args.start)?;
    bounds_check("dest", args.dest)?;
    if args.start == args.dest {
        return Err(ConfigError::Invalid("start and dest must differ".into()).into());
    }
    if args.num_high_bw > rows * cols - 2 {
        return Err(ConfigError::Invalid(format!(
            "{} high-bandwidth cells requested but only {} non-endpoint cells exist",
            args.num_high_bw,
            rows * cols - 2
        ))
        .into());
    }
    if args.count == 0 {
        return Err(ConfigError::Invalid("count must be at least 1".into()).into());
    }

    let spec = MapGeneratorSpec {
        rows,
        cols,
        start: [args.start.row, args.start.col],
        dest: [args.dest.row, args.dest.col],
        num_high_bw: args.num_high_bw,
        count: args.count,
        seed,
    };
    let params = EnvParams::new(args.requirement);
    let maps = bench::generate_maps(&spec, &traffic, &params)?;
    create_out_dir(out)?;
    for map in &maps {
        let path = out.join(format!("map_{:03}.map", map.map_id()));
        map.write_map_file(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn solve_params(args: &SolveArgs) -> Result<EnvParams> {
    let mut params = EnvParams::new(args.requirement);
    if let Some(limit) = args.step_limit {
        params.step_limit = limit;
    }
    if let Some(scale) = args.transfer_scale {
        params.transfer_scale = scale;
    }
    if let Some(q) = args.quantizer {
        params.quantizer = Some(q);
    }
    if let Some(heading) = &args.heading {
        params.initial_heading = heading
            .parse()
            .map_err(|e: String| ConfigError::Invalid(e))?;
    }
    params
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(params)
}

fn solve(args: &SolveArgs, out: &Path) -> Result<()> {
    let traffic = TrafficGrid::read_grid_file(&args.traffic)?;
    let map = BandwidthMap::read_map_file(&args.map, 0)?;
    let params = solve_params(args)?;

    let plans = [
        ("optimal", optimal_route(&map, &traffic, &params)?),
        (
            "bandwidth_unaware",
            bandwidth_unaware_route(&map, &traffic, &params)?,
        ),
        (
            "traffic_unaware",
            traffic_unaware_route(&map, &traffic, &params)?,
        ),
    ];

    create_out_dir(out)?;
    println!(
        "{:<18} {:>10} {:>6} {:>12} {:>9}",
        "planner", "time", "hops", "transferred", "feasible"
    );
    for (name, plan) in &plans {
        write_plan_csv(&out.join(format!("plan_{name}.csv")), plan)?;
        write_plan_summary_csv(&out.join(format!("plan_{name}_summary.csv")), plan)?;
        let time = if plan.total_time.is_finite() {
            plan.total_time.to_string()
        } else {
            "-".to_string()
        };
        println!(
            "{:<18} {:>10} {:>6} {:>12} {:>9}",
            name, time, plan.total_hops, plan.data_transferred, plan.feasible
        );
    }
    println!("plan files in {}", out.display());
    Ok(())
}

/// Loads the experiment config and applies the global overrides.
fn effective_config(path: &Path, cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_toml_file(path)?;
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    config.validate()?;
    Ok(config)
}

fn train(args: &TrainArgs, cli: &Cli) -> Result<()> {
    let config = effective_config(&args.config, cli)?;
    let options = RunOptions {
        jobs: cli.jobs,
        no_timestamp: cli.no_timestamp,
        echo_config: Some(config.to_toml_string()?),
    };
    let outcome = bench::run_experiment(&config, &options)?;
    print!(
        "{}",
        fs::read_to_string(&outcome.summary_path)
            .with_context(|| format!("reading {}", outcome.summary_path.display()))?
    );
    println!("results in {}", outcome.out_dir.display());
    Ok(())
}

fn sweep(args: &SweepArgs, cli: &Cli) -> Result<()> {
    let base = effective_config(&args.config, cli)?;
    let spec = SweepSpec::from_toml_file(&args.sweep)?;
    let options = RunOptions {
        jobs: cli.jobs,
        no_timestamp: cli.no_timestamp,
        echo_config: Some(base.to_toml_string()?),
    };
    let outcome = bench::run_sweep(&base, &spec, &options)?;
    print!(
        "{}",
        fs::read_to_string(&outcome.comparison_path)
            .with_context(|| format!("reading {}", outcome.comparison_path.display()))?
    );
    println!("results in {}", outcome.out_dir.display());
    Ok(())
}

fn plot(args: &PlotArgs, out: &Path, no_timestamp: bool) -> Result<()> {
    if !args.labels.is_empty() && args.labels.len() != args.curves.len() {
        return Err(ConfigError::Invalid(format!(
            "{} labels given for {} curves",
            args.labels.len(),
            args.curves.len()
        ))
        .into());
    }
    let mut series = Vec::with_capacity(args.curves.len());
    for (i, path) in args.curves.iter().enumerate() {
        let curve = TrainingCurve::read_csv(path)?;
        let label = args.labels.get(i).cloned().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("curve {i}"))
        });
        series.push(Series {
            label: Some(label),
            color: PALETTE[i % PALETTE.len()].to_string(),
            width: 2.0,
            opacity: 1.0,
            dashed: false,
            points: curve
                .samples
                .iter()
                .map(|s| (s.step as f64, s.mean_trip_time))
                .collect(),
        });
    }
    let spec = ChartSpec {
        title: args.title.clone(),
        x_label: "environment steps".into(),
        y_label: "trip completion time".into(),
        h_line: args.oracle.map(|v| (v, "reference".into())),
        timestamp: if no_timestamp {
            None
        } else {
            Some(
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .unwrap_or_default()
                    .as_secs(),
            )
        },
    };
    create_out_dir(out)?;
    let path = out.join(&args.name);
    fs::write(&path, line_chart(&spec, &series))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}
