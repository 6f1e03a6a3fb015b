//! End-to-end tests that drive the compiled binary through the full
//! workflow: ingest a heatmap, generate maps, solve, train, sweep, and
//! re-plot, checking files on disk and process exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn datatrip(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datatrip"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_heatmap(dir: &Path) {
    // One point per cell of a 3x3 grid at (col+0.5, row+0.5), with counts
    // that exercise three of the four delay categories.
    let counts = [100, 500, 900, 1200, 1500, 1800, 2300, 2500, 2800];
    let mut csv = String::from("x,y,traversals\n");
    for row in 0..3 {
        for col in 0..3 {
            csv.push_str(&format!(
                "{}.5,{}.5,{}\n",
                col,
                row,
                counts[row * 3 + col]
            ));
        }
    }
    fs::write(dir.join("heatmap.csv"), csv).unwrap();
}

#[test]
fn ingest_bins_points_into_a_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    write_heatmap(dir.path());
    let out = datatrip(
        dir.path(),
        &[
            "ingest",
            "--heatmap",
            "heatmap.csv",
            "--rows",
            "3",
            "--cols",
            "3",
            "--crop",
            "0,0,3,3",
            "--out",
            ".",
        ],
    );
    assert_success(&out);
    let grid = fs::read_to_string(dir.path().join("traffic.grid")).unwrap();
    assert_eq!(
        grid,
        "3 3\n100 500 900\n1200 1500 1800\n2300 2500 2800\n"
    );
}

#[test]
fn ingest_without_crop_uses_the_bounding_box() {
    let dir = tempfile::tempdir().unwrap();
    write_heatmap(dir.path());
    let out = datatrip(
        dir.path(),
        &[
            "ingest", "--heatmap", "heatmap.csv", "--rows", "1", "--cols", "1", "--out", ".",
        ],
    );
    assert_success(&out);
    let grid = fs::read_to_string(dir.path().join("traffic.grid")).unwrap();
    let total: f64 = 100.0 + 500.0 + 900.0 + 1200.0 + 1500.0 + 1800.0 + 2300.0 + 2500.0 + 2800.0;
    assert_eq!(grid, format!("1 1\n{total}\n"));
}

fn write_grid(dir: &Path) {
    fs::write(
        dir.join("traffic.grid"),
        "3 3\n1000 1000 1000\n1000 1000 1000\n1000 1000 1000\n",
    )
    .unwrap();
}

#[test]
fn genmaps_is_deterministic_and_respects_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path());
    let args = [
        "genmaps",
        "--traffic",
        "traffic.grid",
        "--start",
        "2,0",
        "--dest",
        "0,2",
        "--num-high-bw",
        "2",
        "--count",
        "3",
        "--requirement",
        "1",
        "--seed",
        "9",
        "--out",
        "maps",
    ];
    assert_success(&datatrip(dir.path(), &args));
    let first: Vec<String> = (0..3)
        .map(|i| fs::read_to_string(dir.path().join(format!("maps/map_{i:03}.map"))).unwrap())
        .collect();
    assert_success(&datatrip(dir.path(), &args));
    for (i, text) in first.iter().enumerate() {
        let again =
            fs::read_to_string(dir.path().join(format!("maps/map_{i:03}.map"))).unwrap();
        assert_eq!(&again, text, "map {i} changed between identical runs");
    }

    let mut other_seed: Vec<&str> = args.to_vec();
    other_seed[14] = "10";
    let out_pos = other_seed.len() - 1;
    other_seed[out_pos] = "maps2";
    assert_success(&datatrip(dir.path(), &other_seed));
    let changed = (0..3).any(|i| {
        fs::read_to_string(dir.path().join(format!("maps2/map_{i:03}.map"))).unwrap()
            != first[i]
    });
    assert!(changed, "a different seed should sample different maps");
}

#[test]
fn solve_writes_plans_and_prints_the_comparison() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path());
    fs::write(
        dir.path().join("map.map"),
        "3 3\nstart 2 0\ndest 0 2\nhighbw 1\n1 1\n",
    )
    .unwrap();
    let out = datatrip(
        dir.path(),
        &[
            "solve",
            "--traffic",
            "traffic.grid",
            "--map",
            "map.map",
            "--requirement",
            "1",
            "--out",
            "plans",
        ],
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("optimal"));
    assert!(stdout.contains("bandwidth_unaware"));
    assert!(stdout.contains("traffic_unaware"));
    for name in ["optimal", "bandwidth_unaware", "traffic_unaware"] {
        assert!(dir.path().join(format!("plans/plan_{name}.csv")).exists());
        assert!(dir
            .path()
            .join(format!("plans/plan_{name}_summary.csv"))
            .exists());
    }
    let summary =
        fs::read_to_string(dir.path().join("plans/plan_optimal_summary.csv")).unwrap();
    assert!(summary.ends_with(",true\n"), "route must be feasible: {summary}");
}

fn write_experiment_config(dir: &Path) {
    fs::write(
        dir.join("experiment.toml"),
        r#"
requirement = 0.0
seeds = [1]
eval_cadence = 100
output_dir = "results"

[traffic]
grid_file = "traffic.grid"

[maps.generator]
rows = 3
cols = 3
start = [2, 0]
dest = [0, 2]
num_high_bw = 1
count = 2
seed = 5

[[learners]]
algorithm = "q_learning"
training_steps = 300
"#,
    )
    .unwrap();
}

#[test]
fn train_writes_a_bundle_and_its_echoed_config_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path());
    write_experiment_config(dir.path());

    let out = datatrip(
        dir.path(),
        &[
            "train",
            "--config",
            "experiment.toml",
            "--no-timestamp",
            "--out",
            "bundle_a",
        ],
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("algorithm,reward_mode,variant,seed"));

    let curve_rel = "runs/q_learning_step_base_seed1/curve.csv";
    let curve_a = fs::read_to_string(dir.path().join("bundle_a").join(curve_rel)).unwrap();
    assert_eq!(curve_a.lines().count(), 1 + 3, "300 steps at cadence 100");
    assert!(dir.path().join("bundle_a/plot.svg").exists());
    assert!(dir.path().join("bundle_a/summary.csv").exists());
    assert!(dir.path().join("bundle_a/plans/oracle.csv").exists());

    let echoed = dir.path().join("bundle_a/config.toml");
    assert!(echoed.exists());
    let out = datatrip(
        dir.path(),
        &[
            "train",
            "--config",
            "bundle_a/config.toml",
            "--no-timestamp",
            "--out",
            "bundle_b",
        ],
    );
    assert_success(&out);
    let curve_b = fs::read_to_string(dir.path().join("bundle_b").join(curve_rel)).unwrap();
    assert_eq!(curve_a, curve_b, "echoed config must reproduce the run");
}

#[test]
fn unknown_config_keys_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path());
    write_experiment_config(dir.path());
    let mut text = fs::read_to_string(dir.path().join("experiment.toml")).unwrap();
    text = text.replace("requirement = 0.0", "requirement = 0.0\nwarp_speed = 9");
    fs::write(dir.path().join("experiment.toml"), text).unwrap();

    let out = datatrip(dir.path(), &["train", "--config", "experiment.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("warp_speed"),
        "error must name the unknown key: {stderr}"
    );
}

#[test]
fn missing_files_exit_2_for_config_and_1_for_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = datatrip(dir.path(), &["train", "--config", "nope.toml"]);
    assert_eq!(out.status.code(), Some(2), "unreadable config is a config error");

    let out = datatrip(
        dir.path(),
        &[
            "solve",
            "--traffic",
            "nope.grid",
            "--map",
            "nope.map",
        ],
    );
    assert_eq!(out.status.code(), Some(1), "missing data files are runtime errors");

    let out = datatrip(dir.path(), &["solve"]);
    assert_eq!(out.status.code(), Some(2), "missing required flags are usage errors");
}

#[test]
fn sweep_runs_each_value_and_writes_the_comparison() {
    let dir = tempfile::tempdir().unwrap();
    write_grid(dir.path());
    write_experiment_config(dir.path());
    fs::write(
        dir.path().join("sweep.toml"),
        "parameter = \"requirement\"\nvalues = [0.0, 1.0]\n",
    )
    .unwrap();

    let out = datatrip(
        dir.path(),
        &[
            "sweep",
            "--config",
            "experiment.toml",
            "--sweep",
            "sweep.toml",
            "--no-timestamp",
            "--out",
            "sweep_out",
        ],
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("parameter,value,algorithm"));
    assert!(dir.path().join("sweep_out/comparison.csv").exists());
    assert!(dir.path().join("sweep_out/sweep_plot.svg").exists());
    assert!(dir
        .path()
        .join("sweep_out/requirement_0/summary.csv")
        .exists());
    assert!(dir
        .path()
        .join("sweep_out/requirement_1/summary.csv")
        .exists());
}

#[test]
fn plot_rerenders_curves_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("curve.csv"),
        "step,mean_trip_time,success_rate\n100,20,0.5\n200,,0\n300,12,1\n",
    )
    .unwrap();
    let out = datatrip(
        dir.path(),
        &[
            "plot",
            "--curve",
            "curve.csv",
            "--label",
            "demo run",
            "--oracle",
            "9.5",
            "--no-timestamp",
            "--out",
            ".",
        ],
    );
    assert_success(&out);
    let svg = fs::read_to_string(dir.path().join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("demo run"));
    assert!(svg.contains("reference"));
    assert!(svg.contains("trip completion time"));
    assert!(!svg.contains("created"));
}
