use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const OBSTACLE_AHEAD: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/assets/properties/obstacle_ahead.asg"
);
const PROPS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/assets/properties");

fn asgmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asgmon"))
        .args(args)
        .env_remove("ASGMON_OM")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Scene with obstacle `gap` metres ahead of the ego in the same lane.
fn obstacle_scene(velocity: Option<f64>, gap: f64) -> String {
    let obstacle = match velocity {
        Some(v) => format!(
            r#"{{"id":"obs","class":"Static","attrs":{{"velocity":{v},"position":[{gap},-1.75]}}}}"#
        ),
        None => format!(r#"{{"id":"obs","class":"Static","attrs":{{"position":[{gap},-1.75]}}}}"#),
    };
    format!(
        r#"{{"t":0.0,"ego":"ego","nodes":[{{"id":"ego","class":"Vehicle","attrs":{{"velocity":5.0,"position":[0.0,-1.75]}}}},{obstacle},{{"id":"l1","class":"Lane","attrs":{{}}}}],"edges":[{{"src":"ego","rel":"isIn","dst":"l1"}},{{"src":"obs","rel":"isIn","dst":"l1"}},{{"src":"obs","rel":"inFrontOf","dst":"ego"}}]}}"#
    )
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn check_satisfying_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "scene.json", &obstacle_scene(Some(0.0), 10.0));
    let out = asgmon(&[
        "check",
        "--om",
        "default",
        "--asg",
        OBSTACLE_AHEAD,
        "--csg",
        p(&scene),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["result"], "Satisfied");
    assert_eq!(v["property"], "ObstacleAhead");
    assert_eq!(v["witness"]["obstacle"], "obs");
    assert_eq!(v["witness"]["lane"], "l1");
}

#[test]
fn check_violated_and_error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let fast = write(dir.path(), "fast.json", &obstacle_scene(Some(1.0), 10.0));
    let out = asgmon(&["check", "--asg", OBSTACLE_AHEAD, "--csg", p(&fast)]);
    assert_eq!(code(&out), 1);
    let v: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["cause"]["kind"], "PredicateFailed");
    assert_eq!(v["cause"]["index"], 0);

    let blind = write(dir.path(), "blind.json", &obstacle_scene(None, 10.0));
    let out = asgmon(&["check", "--asg", OBSTACLE_AHEAD, "--csg", p(&blind)]);
    assert_eq!(code(&out), 3);
    let v: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["result"], "Error");
    assert_eq!(v["cause"]["name"], "obstacle.velocity");
}

#[test]
fn check_with_oracle_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "scene.json", &obstacle_scene(Some(0.0), 25.0));
    let out = asgmon(&[
        "check",
        "--asg",
        OBSTACLE_AHEAD,
        "--csg",
        p(&scene),
        "--oracle",
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn missing_file_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "scene.json", &obstacle_scene(Some(0.0), 10.0));
    let out = asgmon(&["check", "--asg", "no/such/file.asg", "--csg", p(&scene)]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).is_empty());
    assert!(stderr(&out).contains("no/such/file.asg"));

    let out = asgmon(&[
        "check",
        "--asg",
        OBSTACLE_AHEAD,
        "--csg",
        "no/such/scene.json",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_om_from_environment_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "scene.json", &obstacle_scene(Some(0.0), 10.0));
    let out = Command::new(env!("CARGO_BIN_EXE_asgmon"))
        .args(["check", "--asg", OBSTACLE_AHEAD, "--csg", p(&scene)])
        .env("ASGMON_OM", "no/such/schema.om")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn exclusive_flags_are_rejected() {
    let out = asgmon(&["export", "--asg", OBSTACLE_AHEAD, "--csg", "x.jsonl"]);
    assert_eq!(code(&out), 2);
    let out = asgmon(&["gen", "--scenario", "P1", "--script", "x.json"]);
    assert_eq!(code(&out), 2);
    let out = asgmon(&["gen", "--scenario", "P3"]);
    assert_eq!(code(&out), 2);
    let out = asgmon(&["gen", "--scenario", "P1", "--perturb", "nope=1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn monitor_p2_nominal_with_phases() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("p2.jsonl");
    let out = asgmon(&["gen", "--scenario", "P2", "--out", p(&trace)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 200);

    let out = asgmon(&[
        "monitor",
        "--om",
        "default",
        "--props",
        PROPS,
        "--in",
        p(&trace),
        "--phases",
        "P2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("accepted"), "{}", stderr(&out));
    assert!(stderr(&out).contains("complete=true"));

    // Every stdout line is a verdict; the last ones carry the final phase.
    let lines: Vec<Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // 200 scenes, nine bundled properties in the directory.
    assert_eq!(lines.len(), 200 * 9);
    let mut seen: Vec<u64> = lines
        .iter()
        .map(|v| v["phase_index"].as_u64().unwrap())
        .collect();
    seen.dedup();
    assert_eq!(seen, vec![0, 1, 2, 3, 4]);
}

#[test]
fn monitor_is_deterministic_and_flags_violations() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("p2.jsonl");
    let out = asgmon(&[
        "gen",
        "--scenario",
        "P2",
        "--perturb",
        "rear_gap=-20",
        "--out",
        p(&trace),
    ]);
    assert_eq!(code(&out), 0);
    let prop = format!("{PROPS}/P2-2.asg");
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for target in [&a, &b] {
        let out = asgmon(&[
            "monitor",
            "--props",
            &prop,
            "--in",
            p(&trace),
            "--out",
            p(target),
        ]);
        assert_eq!(code(&out), 1);
    }
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    let failed = String::from_utf8(first)
        .unwrap()
        .lines()
        .filter(|l| l.contains(r#""kind":"PredicateFailed","index":0"#))
        .count();
    assert!(failed > 0);
}

#[test]
fn monitor_rejects_out_of_order_stream() {
    let dir = tempfile::tempdir().unwrap();
    let late = obstacle_scene(Some(0.0), 10.0).replace(r#""t":0.0"#, r#""t":1.0"#);
    let trace = write(
        dir.path(),
        "bad.jsonl",
        &format!("{late}\n{}\n", obstacle_scene(Some(0.0), 10.0)),
    );
    let out = asgmon(&["monitor", "--props", OBSTACLE_AHEAD, "--in", p(&trace)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.jsonl:2"), "{}", stderr(&out));
}

#[test]
fn monitor_oracle_on_p1() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("p1.jsonl");
    assert_eq!(
        code(&asgmon(&["gen", "--scenario", "P1", "--out", p(&trace)])),
        0
    );
    let out = asgmon(&[
        "monitor",
        "--phases",
        "P1",
        "--in",
        p(&trace),
        "--oracle",
        "--out",
        p(&dir.path().join("v.jsonl")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn gen_script_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("p1.json");
    let out = asgmon(&[
        "gen",
        "--scenario",
        "P1",
        "--perturb",
        "rear_gap=-5",
        "--emit-script",
        "--out",
        p(&script),
    ]);
    assert_eq!(code(&out), 0);
    let from_script = asgmon(&["gen", "--script", p(&script)]);
    let direct = asgmon(&["gen", "--scenario", "P1", "--perturb", "rear_gap=-5"]);
    assert_eq!(code(&from_script), 0);
    assert_eq!(from_script.stdout, direct.stdout);
    assert_eq!(stdout(&direct).lines().count(), 120);
}

#[test]
fn export_dot() {
    let out = asgmon(&["export", "--asg", OBSTACLE_AHEAD]);
    assert_eq!(code(&out), 0);
    let dot = stdout(&out);
    assert!(dot.starts_with("digraph G {"));
    assert!(dot.contains(r#""obstacle" -> "ego" [label="inFrontOf"];"#));

    let dir = tempfile::tempdir().unwrap();
    let trace = write(dir.path(), "s.jsonl", &obstacle_scene(Some(0.0), 10.0));
    let out = asgmon(&["export", "--csg", p(&trace)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains(r#""obs" -> "l1" [label="isIn"];"#));
    let out = asgmon(&["export", "--csg", p(&trace), "--frame", "3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_reports_percentiles() {
    let out = asgmon(&[
        "bench",
        "--nodes",
        "30",
        "--pattern",
        "4",
        "--frames",
        "20",
        "--seed",
        "7",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let p50 = v["p50_ms"].as_f64().unwrap();
    let p99 = v["p99_ms"].as_f64().unwrap();
    assert!(0.0 <= p50 && p50 <= p99);
    assert_eq!(v["frames"], 20);
}
