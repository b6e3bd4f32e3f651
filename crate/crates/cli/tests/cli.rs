use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcbf-sim"))
        .args(args)
        .env_remove("RCBF_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_outputs_and_exits_zero_when_safe() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a1");
    let o = sim(&[
        "run",
        "--preset",
        "mission-a-1",
        "--seed",
        "7",
        "--duration-days",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in ["trajectory.csv", "summary.json", "report.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let s = summary(&out);
    assert_eq!(s["summary"]["seed"], 7);
    assert_eq!(s["summary"]["steps"], 2880);
    assert_eq!(s["config"]["seed"], 7);
    assert!(stdout(&o).contains("status          SAFE"));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2882);
}

#[test]
fn violation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("inside.toml");
    std::fs::write(
        &scenario,
        "preset = \"mission-a-1\"\nx0 = [-3.0e7, 0.0, 0.0, 0.0, 0.0, 0.0]\nduration = 600.0\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = sim(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("VIOLATED"));
    let strict = sim(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--strict",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stderr).starts_with("error:"));
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    for args in [
        vec!["run", "--preset", "mission-q", "--out", out],
        vec![
            "run",
            "--preset",
            "mission-a-1",
            "--rcbf-variant",
            "sideways",
            "--out",
            out,
        ],
        vec![
            "run",
            "--preset",
            "mission-a-1",
            "--rcbf-variant",
            "predictive-rad",
            "--out",
            out,
        ],
        vec![
            "run",
            "--preset",
            "mission-a-1",
            "--disturbance-mode",
            "gentle",
            "--out",
            out,
        ],
        vec![
            "run",
            "--preset",
            "mission-b",
            "--full-duration",
            "--out",
            out,
        ],
        vec![
            "run",
            "--preset",
            "mission-a-1",
            "--sweep",
            "seeds=3..3",
            "--out",
            out,
        ],
        vec![
            "run",
            "--scenario",
            "/nonexistent/scenario.toml",
            "--out",
            out,
        ],
    ] {
        let o = sim(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&o.stderr).contains("error"),
            "{args:?}"
        );
    }
    assert_ne!(
        sim(&["run", "--preset", "mission-a-1", "--scenario", "x.toml"])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn variant_override_orders_closest_approach() {
    let dir = tempfile::tempdir().unwrap();
    let mut closest = Vec::new();
    for preset in ["mission-a-1", "mission-a-4"] {
        let out = dir.path().join(preset);
        let o = sim(&["run", "--preset", preset, "--out", out.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        closest.push(summary(&out)["summary"]["min_distance"].as_f64().unwrap());
    }
    assert!(closest[1] < closest[0], "{closest:?}");
}

#[test]
fn sweep_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&[
        "run",
        "--preset",
        "mission-a-2",
        "--duration-days",
        "0.5",
        "--sweep",
        "seeds=2..5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    for seed in 2..5 {
        assert_eq!(
            summary(&dir.path().join(format!("seed-{seed}")))["summary"]["seed"],
            seed
        );
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rcbf-sim"))
        .args(["run", "--preset", "mission-a-1", "--duration-days", "0.1"])
        .env("RCBF_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn preset_prints_loadable_toml() {
    let o = sim(&["preset", "--preset", "mission-a-3", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("seed = 4"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a3.toml");
    std::fs::write(&path, &text).unwrap();
    let again = sim(&["preset", "--scenario", path.to_str().unwrap()]);
    assert_eq!(stdout(&again), text);
    let list = stdout(&sim(&["preset", "--list"]));
    assert_eq!(list.lines().count(), 5);
}

#[test]
fn mesh_command_writes_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    let o = sim(&[
        "mesh",
        "--n-points",
        "120",
        "--semi-axes",
        "3,2,1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("120 vertices"));
    let body = std::fs::read_to_string(&path).unwrap();
    assert_eq!(body.lines().filter(|l| !l.starts_with('#')).count(), 120);
}

#[test]
fn oracles_report() {
    let o = sim(&["oracle", "double-integrator"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let err: f64 = text.rsplit("= ").next().unwrap().trim().parse().unwrap();
    assert!(err < 1e-4);
    let a = stdout(&sim(&["oracle", "a-max"]));
    assert!(a.contains("4.55e-5") && a.contains("0.0523"));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["run", "--bogus"],
        vec!["frobnicate"],
        vec!["mesh", "--semi-axes", "1,2", "--out", "/tmp/x"],
        vec!["run"],
    ] {
        let o = sim(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(sim(&["--help"]).status.code(), Some(0));
}
