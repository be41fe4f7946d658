use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const GRID: &str = r#""grid": {"p_min": 94.0, "p_max": 106.0, "n_p": 101, "n_t": 100}"#;

fn config(players: &str, cost: &str) -> String {
    format!(
        r#"{{
  "market": {{"sigma": 1.0, "lambda": 0.01, "T": 1.0, "p0": 100.0}},
  "cost": {cost},
  "players": [{players}],
  {GRID}
}}"#
    )
}

const LINEAR: &str = r#"{"kind": "linear", "kappa": 0.01}"#;
const CALL: &str =
    r#"{"utility": {"kind": "risk_neutral"}, "payoff": {"kind": "smoothed_call", "K": 100.0}}"#;
const SHORT_CALL: &str = r#"{"utility": {"kind": "risk_neutral"}, "payoff": {"kind": "negated", "inner": {"kind": "smoothed_call", "K": 100.0}}}"#;
const ZERO: &str = r#"{"utility": {"kind": "risk_neutral"}, "payoff": {"kind": "zero"}}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn illiq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_illiq"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn check_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let good = write(tmp.path(), "good.json", &config(CALL, LINEAR));
    let out = illiq(&["check", "--config", s(&good)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["certified"], Value::Bool(true));
    assert!(report["speed_bound"].as_f64().unwrap() > 0.0);

    let table: Vec<String> = (0..=400)
        .map(|k| {
            let z = -100.0 + 0.5 * k as f64;
            format!("[{z}, {}]", f64::atan(z))
        })
        .collect();
    let arctan = format!(
        r#"{{"kind": "custom_table", "table": [{}]}}"#,
        table.join(",")
    );
    let bad = write(tmp.path(), "arctan.json", &config(CALL, &arctan));
    let out_dir = tmp.path().join("check");
    assert_eq!(
        code(&illiq(&[
            "check",
            "--config",
            s(&bad),
            "--out",
            s(&out_dir)
        ])),
        2
    );
    assert_eq!(manifest(&out_dir)["command"], "check");

    assert_eq!(
        code(&illiq(&[
            "check",
            "--config",
            s(&tmp.path().join("missing.json"))
        ])),
        1
    );
    let garbage = write(tmp.path(), "garbage.json", "{not json");
    assert_eq!(code(&illiq(&["check", "--config", s(&garbage)])), 1);
    assert_eq!(code(&illiq(&["check", "--bogus"])), 1);
}

#[test]
fn solve_closed_and_fd() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "call.json", &config(CALL, LINEAR));
    let closed = tmp.path().join("closed");
    let out = illiq(&[
        "solve",
        "--config",
        s(&cfg),
        "--method",
        "closed",
        "--out",
        s(&closed),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(closed.join("solution.csv")).unwrap();
    assert!(csv.starts_with("t,p,v_1,grad_1,speed_1,agg_speed\n"));
    assert_eq!(csv.lines().count(), 1 + 101 * 100);
    let m = manifest(&closed);
    assert_eq!(
        m["outputs"],
        serde_json::json!(["solution.csv", "surplus.csv", "solve.json"])
    );
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);

    let fd = tmp.path().join("fd");
    let out = illiq(&[
        "solve",
        "--config",
        s(&cfg),
        "--method",
        "fd",
        "--grid",
        "101,200",
        "--out",
        s(&fd),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(
        text.contains("closed-form sup diff (interior)") && text.contains("within 1e-2"),
        "{text}"
    );
    assert!(
        text.contains("speed bound check") && text.contains(": ok"),
        "{text}"
    );

    let picard = tmp.path().join("picard");
    let out = illiq(&[
        "solve",
        "--config",
        s(&cfg),
        "--method",
        "picard",
        "--out",
        s(&picard),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn closed_method_rejects_cara_pairs() {
    let tmp = TempDir::new().unwrap();
    let players = r#"{"utility": {"kind": "cara", "alpha": 0.01}, "payoff": {"kind": "smoothed_call", "K": 100.0}},
        {"utility": {"kind": "cara", "alpha": 0.01}, "payoff": {"kind": "negated", "inner": {"kind": "smoothed_call", "K": 100.0}}}"#;
    let cfg = write(tmp.path(), "cara.json", &config(players, LINEAR));
    let out = illiq(&[
        "solve",
        "--config",
        s(&cfg),
        "--method",
        "closed",
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn simulate_zero_game_and_mismatch() {
    let tmp = TempDir::new().unwrap();
    let zero = write(tmp.path(), "zero.json", &config(ZERO, LINEAR));
    let sol_dir = tmp.path().join("sol");
    assert_eq!(
        code(&illiq(&[
            "solve",
            "--config",
            s(&zero),
            "--out",
            s(&sol_dir)
        ])),
        0
    );
    let sol = sol_dir.join("solution.csv");
    let sim = tmp.path().join("sim");
    let out = illiq(&[
        "simulate",
        "--config",
        s(&zero),
        "--solution",
        s(&sol),
        "--paths",
        "50",
        "--seed",
        "7",
        "--out",
        s(&sim),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(sim.join("paths.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["path", "t", "P", "X_1", "R_1"]);
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[3].parse::<f64>().unwrap(), 0.0);
        rows += 1;
    }
    assert_eq!(rows, 50 * 501);
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(sim.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["players"][0]["z"], 0.0);
    assert_eq!(manifest(&sim)["seed"], 7);

    let other = write(tmp.path(), "call.json", &config(CALL, LINEAR));
    let out = illiq(&[
        "simulate",
        "--config",
        s(&other),
        "--solution",
        s(&sol),
        "--paths",
        "10",
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert_eq!(code(&out), 5);
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "call.json", &config(CALL, LINEAR));
    let sol_dir = tmp.path().join("sol");
    assert_eq!(
        code(&illiq(&[
            "solve",
            "--config",
            s(&cfg),
            "--out",
            s(&sol_dir)
        ])),
        0
    );
    let sol = sol_dir.join("solution.csv");
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let out = illiq(&[
            "simulate",
            "--config",
            s(&cfg),
            "--solution",
            s(&sol),
            "--paths",
            "20",
            "--seed",
            "3",
            "--out",
            s(&dir),
        ]);
        assert_eq!(code(&out), 0);
        fs::read(dir.join("paths.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn sweeps() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("split");
    let res = illiq(&[
        "sweep",
        "--study",
        "split",
        "--N",
        "1,10,100",
        "--grid",
        "201,50",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", stdout(&res));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("split_assertions.json")).unwrap())
            .unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["values"], serde_json::json!(["1", "10", "100"]));
    assert!(fs::read_to_string(out.join("split.csv"))
        .unwrap()
        .starts_with("param,value,metric,p,y\n"));

    let out = tmp.path().join("spread");
    let res = illiq(&[
        "sweep",
        "--study",
        "spread",
        "--s",
        "0,0.002,0.004",
        "--grid",
        "101,100",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", stdout(&res));

    let both_long = write(
        tmp.path(),
        "long.json",
        &config(&format!("{CALL}, {CALL}"), LINEAR),
    );
    let out = tmp.path().join("zs");
    let res = illiq(&[
        "sweep",
        "--study",
        "zero_sum",
        "--config",
        s(&both_long),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 6);
    assert!(String::from_utf8_lossy(&res.stderr).contains("aggregate_speed_vanishes"));
    assert!(out.join("zero_sum.csv").exists());

    let offset = write(
        tmp.path(),
        "offset.json",
        &config(&format!("{CALL}, {SHORT_CALL}"), LINEAR),
    );
    let res = illiq(&[
        "sweep",
        "--study",
        "zero_sum",
        "--config",
        s(&offset),
        "--out",
        s(&tmp.path().join("zs2")),
    ]);
    assert_eq!(code(&res), 0);

    assert_eq!(
        code(&illiq(&[
            "sweep",
            "--study",
            "nonsense",
            "--out",
            s(&tmp.path().join("n"))
        ])),
        1
    );
    let two = write(
        tmp.path(),
        "two.json",
        &config(&format!("{CALL}, {CALL}"), LINEAR),
    );
    let res = illiq(&[
        "sweep",
        "--study",
        "spread",
        "--config",
        s(&two),
        "--out",
        s(&tmp.path().join("sp2")),
    ]);
    assert_eq!(code(&res), 3);
}

#[test]
fn thread_cap_is_validated() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "call.json", &config(CALL, LINEAR));
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_illiq"))
            .args(["check", "--config", s(&cfg)])
            .env("ILLIQ_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1")), 0);
    assert_eq!(code(&run("zero")), 1);
}
