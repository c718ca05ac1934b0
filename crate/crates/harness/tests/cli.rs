use std::path::{Path, PathBuf};
use std::process::Command;

use gem_core::solver1d::Fidelity;
use gem_harness::{compute, estimate, load_config, ExperimentKind, ExperimentSpec, SweepAxis, WorkCapExceeded};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gem-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn gem(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gem"))
        .args(args)
        .output()
        .expect("gem runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn storage_cycle_writes_versioned_artifacts() {
    let out = scratch("storage");
    let conf = configs().join("rb87.conf");
    let run = gem(&[
        "storage-cycle",
        "--config",
        conf.to_str().unwrap(),
        "--fidelity",
        "coarse",
        "--set",
        "hold_time=1 us",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(
        run.status.code(),
        Some(0),
        "{stdout}\n{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(stdout.contains("PASS total efficiency"), "{stdout}");

    let csv = read(&out.join("breakdown.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# gem-csv 1"));
    assert!(csv.contains("# experiment: storage-cycle"));
    assert!(csv.contains("# fidelity: coarse"));
    assert!(csv.lines().any(|l| l.starts_with("channel,analytic,numeric,ratio,")));
    for name in ["input.csv", "output.csv", "input.svg", "output.svg"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let svg = read(&out.join("output.svg"));
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));

    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["experiment"], "storage-cycle");
    assert!(summary["values"]["analytic.total"].as_f64().unwrap() > 0.9);
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn bad_input_exits_two() {
    let conf = configs().join("rb87.conf");
    let conf = conf.to_str().unwrap();
    let bad = gem(&["efficiency-budget", "--config", conf, "--set", "no_such_key=1"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("no_such_key"));

    let unknown = gem(&["no-such-experiment", "--config", conf]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let out = scratch("sweep");
    let conf = configs().join("rb87.conf");
    let run = gem(&[
        "efficiency-budget",
        "--config",
        conf.to_str().unwrap(),
        "--sweep",
        "diffusion=0.002,0.004",
        "--sweep",
        "hold_time=0 us,2 us",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let index: serde_json::Value = serde_json::from_str(&read(&out.join("sweep.json"))).unwrap();
    let points = index["points"].as_array().unwrap();
    assert_eq!(points.len(), 4);
    for (i, p) in points.iter().enumerate() {
        assert_eq!(p["index"], i);
        assert!(out
            .join(p["directory"].as_str().unwrap())
            .join("summary.json")
            .is_file());
    }
    assert_eq!(points[1]["overrides"][0], "diffusion=0.002");
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn oversized_run_is_refused_with_advice() {
    let spec = ExperimentSpec {
        kind: ExperimentKind::BeamWidth,
        config: load_config(&configs().join("narrowing.conf")).unwrap(),
        sweeps: vec!["diffusion=0.002,0.004,0.006".parse::<SweepAxis>().unwrap()],
        out_dir: PathBuf::new(),
        fidelity: Fidelity::Fine,
        max_cell_steps: 1e9,
    };
    let est = estimate(&spec).unwrap();
    assert!(est > 1e9);
    let err = compute(&spec).unwrap_err();
    let cap = err.downcast_ref::<WorkCapExceeded>().expect("work cap error");
    assert_eq!(cap.points, 3);
    assert!(err.to_string().contains("--fidelity"));
}
