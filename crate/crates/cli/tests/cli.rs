use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_shepard-hjb");

const EIKONAL: &str = r#"{
  "seed": 3,
  "problem": {"name": "eikonal"},
  "mesh": {"kind": "random-clustered", "domain": {"lower": [-1, -1], "upper": [1, 1]},
           "n": 120, "pool_size": 6000, "seed": 3},
  "solver": {"fill_samples": 5000},
  "tuner": {"range": {"theta_min": 1.0, "theta_max": 1.4, "step": 0.2}},
  "simulate": {"starts": [{"kind": "point", "coords": [0.7, 0.7]},
                          {"kind": "point", "coords": [-0.5, 0.2]}],
               "horizon": 1.5, "uncontrolled": true, "snapshots": [0, 2]}
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("SHEPARD_HJB_OUT")
        .env_remove("SHEPARD_HJB_THREADS")
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), config).unwrap();
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn solve_then_simulate_writes_hashed_artifacts() {
    let dir = setup(EIKONAL);
    let out = dir.path().join("o");
    let o = run(dir.path(), &["solve", "--config", "c.json", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(dir.path(), &["simulate", "--config", "c.json", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let hash = json(&out.join("value.json"))["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for f in ["mesh.json", "profile.json", "costs.json"] {
        assert_eq!(json(&out.join(f))["config_hash"], hash.as_str(), "{f}");
    }
    let profile = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert_eq!(profile.lines().count(), 1 + 3);
    for f in [
        "trajectory_0.csv",
        "trajectory_1_uncontrolled.csv",
        "trajectory_0_step2.csv",
        "costs.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let costs = json(&out.join("costs.json"));
    let runs = costs["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for r in runs {
        assert!(r["controlled"].as_f64().unwrap() <= r["uncontrolled"].as_f64().unwrap());
    }
}

#[test]
fn value_file_round_trips_to_17_digits() {
    let dir = setup(EIKONAL);
    let o = run(dir.path(), &["solve", "--config", "c.json", "--out", "o"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("o/value.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    let v: Vec<&str> = row.split(',').collect();
    let x: f64 = v[1].parse().unwrap();
    assert_eq!(format!("{x:.16e}").parse::<f64>().unwrap(), x);
    let mantissa = v[1].split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{}", v[1]);
}

#[test]
fn hash_follows_the_config_not_the_output_dir() {
    let dir = setup(EIKONAL);
    assert_eq!(code(&run(dir.path(), &["mesh", "--config", "c.json", "--out", "a"])), 0);
    assert_eq!(code(&run(dir.path(), &["mesh", "--config", "c.json", "--out", "b"])), 0);
    assert_eq!(code(&run(dir.path(), &["mesh", "--config", "c.json", "--out", "c", "--seed", "4"])), 0);
    let h = |d: &str| json(&dir.path().join(d).join("mesh.json"))["config_hash"].clone();
    assert_eq!(h("a"), h("b"));
    assert_ne!(h("a"), h("c"));
    // same seed, same mesh
    assert_eq!(
        fs::read_to_string(dir.path().join("a/mesh.csv")).unwrap(),
        fs::read_to_string(dir.path().join("b/mesh.csv")).unwrap()
    );
}

#[test]
fn environment_sets_the_output_dir() {
    let dir = setup(EIKONAL);
    let o = Command::new(BIN)
        .args(["mesh", "--config", "c.json"])
        .current_dir(dir.path())
        .env("SHEPARD_HJB_OUT", "from-env")
        .env("SHEPARD_HJB_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("from-env/mesh.csv").exists());
}

#[test]
fn bad_input_exits_with_the_input_code() {
    let dir = setup(r#"{"problem": {"name": "eikonal"}, "unexpected": true}"#);
    let o = run(dir.path(), &["mesh", "--config", "c.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unexpected"));

    let dir = setup(EIKONAL);
    assert_eq!(code(&run(dir.path(), &["table", "no-such-table", "--config", "c.json"])), 2);
    assert_eq!(code(&run(dir.path(), &["solve", "--config", "c.json", "--fixed-theta", "-1"])), 2);
    assert_eq!(code(&run(dir.path(), &["mesh", "--config", "c.json", "--threads", "abc"])), 2);
    // simulate needs a solved value function
    assert_eq!(code(&run(dir.path(), &["simulate", "--config", "c.json", "--out", "empty"])), 4);
}

#[test]
fn missing_config_exits_with_the_io_code() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["mesh", "--config", "nope.json"])), 4);
}

#[test]
fn sweep_cap_exits_with_the_convergence_code_and_keeps_artifacts() {
    let dir = setup(
        r#"{"problem": {"name": "eikonal"},
            "mesh": {"kind": "uniform-grid", "domain": {"lower": [-1, -1], "upper": [1, 1]}, "counts": [11, 11]},
            "solver": {"dt": 0.1, "max_sweeps": 2}}"#,
    );
    let o = run(dir.path(), &["solve", "--config", "c.json", "--out", "o", "--fixed-theta", "0.8"]);
    assert_eq!(code(&o), 3);
    assert!(dir.path().join("o/value.csv").exists());
    assert_eq!(json(&dir.path().join("o/value.json"))["converged"], false);
}

#[test]
fn noisy_simulation_is_reproducible() {
    let cfg = EIKONAL.replace(r#""horizon": 1.5"#, r#""horizon": 1.5, "noise": {"std": 0.02, "seed": 11}"#);
    let dir = setup(&cfg);
    assert_eq!(code(&run(dir.path(), &["solve", "--config", "c.json", "--out", "o"])), 0);
    let read = || fs::read_to_string(dir.path().join("o/trajectory_0.csv")).unwrap();
    assert_eq!(code(&run(dir.path(), &["simulate", "--config", "c.json", "--out", "o"])), 0);
    let first = read();
    assert_eq!(code(&run(dir.path(), &["simulate", "--config", "c.json", "--out", "o", "--threads", "1"])), 0);
    assert_eq!(first, read());
    assert_eq!(json(&dir.path().join("o/costs.json"))["runs"][0]["noise_seed"], 11);
}

#[test]
fn repeats_use_consecutive_seeds() {
    let dir = setup(
        r#"{"problem": {"name": "eikonal"},
            "table": {"example1_sizes": [60],
                      "example1": {"pool_size": 2000, "fill_samples": 2000,
                                   "range": {"theta_min": 1.0, "theta_max": 1.2, "step": 0.2}}}}"#,
    );
    let o = run(dir.path(), &["table", "example1", "--config", "c.json", "--out", "o", "--seed", "7", "--repeats", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let raw = fs::read_to_string(dir.path().join("o/example1_runs.csv")).unwrap();
    let seeds: Vec<&str> = raw.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["7", "8", "9"]);
    let summary = json(&dir.path().join("o/example1.json"));
    assert_eq!(summary["repeats"], 3);
    assert_eq!(summary["rows"][0]["runs"], 3);
}

#[test]
fn check_passes_on_a_grid() {
    let dir = setup(
        r#"{"problem": {"name": "eikonal"},
            "mesh": {"kind": "uniform-grid", "domain": {"lower": [-1, -1], "upper": [1, 1]}, "counts": [15, 15]},
            "solver": {"dt": 0.1}}"#,
    );
    let o = run(dir.path(), &["check", "--config", "c.json", "--fixed-theta", "0.7"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
