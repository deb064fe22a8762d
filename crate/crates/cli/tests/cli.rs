use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fitolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fitolab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_scenario_file_is_a_usage_error() {
    assert_eq!(code(&fitolab(&["run", "/nonexistent/scenario.json"])), 2);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(code(&fitolab(&["paxos"])), 2);
}

#[test]
fn schema_violation_is_a_usage_error_naming_the_action() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"scenario_id":"bad","substrate":"fito","n_procs":2,"lab":"raw",
            "schedule":[{"action":"txn_decide","txn_id":0,"outcome":"completed"}]}"#,
    )
    .unwrap();
    let o = fitolab(&["run", p(&path)]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("schedule[0]") && err.contains("txn_decide"),
        "{err}"
    );
}

#[test]
fn expected_impossibility_exits_zero() {
    let o = fitolab(&[
        "--format",
        "json",
        "consensus",
        "--protocol",
        "rw",
        "--inputs",
        "0,1",
    ]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["verdicts"][0]["name"], "violation-found");
    assert_eq!(report["verdicts"][0]["status"], "pass");
    assert!(report["witness"].is_array());
}

#[test]
fn cas_is_certified() {
    let o = fitolab(&[
        "--format",
        "json",
        "consensus",
        "--protocol",
        "cas",
        "--inputs",
        "0,1",
    ]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["verdicts"][0]["name"], "certified");
    assert_eq!(report["verdicts"][0]["status"], "pass");
}

#[test]
fn unexpected_verdict_exits_one_and_keeps_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    let report = dir.path().join("r.json");
    fs::write(
        &scenario,
        r#"{"scenario_id":"wrong","substrate":"fito","n_procs":2,"lab":"consensus",
            "lab_params":{"protocol":"rw","inputs":[0,1],"expect":"certified"}}"#,
    )
    .unwrap();
    let o = fitolab(&[
        "--format",
        "json",
        "--report-out",
        p(&report),
        "run",
        p(&scenario),
    ]);
    assert_eq!(code(&o), 1);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["verdicts"][0]["status"], "fail");
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for id in [
        "timeout-retry-fito",
        "vector-clocks-vs-emergent-order-bilateral",
        "cap-partition-fito-ap",
    ] {
        let a = dir.path().join(format!("{id}-a.jsonl"));
        let b = dir.path().join(format!("{id}-b.jsonl"));
        assert_eq!(code(&fitolab(&["--trace-out", p(&a), "run", id])), 0);
        assert_eq!(code(&fitolab(&["--trace-out", p(&b), "run", id])), 0);
        let (a, b) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert!(!a.is_empty());
        assert_eq!(a, b, "{id}");
    }
}

#[test]
fn seed_flag_overrides_and_is_reported() {
    let o = fitolab(&[
        "--seed",
        "42",
        "--format",
        "json",
        "run",
        "clock-offset-bilateral",
    ]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["seed"], 42);
}

#[test]
fn ordering_commands_read_a_written_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let ts = dir.path().join("ts.json");
    assert_eq!(
        code(&fitolab(&[
            "--trace-out",
            p(&trace),
            "run",
            "vector-clocks-vs-emergent-order-fito"
        ])),
        0
    );

    let o = fitolab(&[
        "--format",
        "json",
        "ordering",
        "pomset",
        "--trace",
        p(&trace),
    ]);
    assert_eq!(code(&o), 0);
    let pomset: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(pomset["events"].as_array().unwrap().len(), 6);
    assert!(pomset["reduced_edges"].is_array());

    fs::write(
        &ts,
        r#"[{"process":0,"seq":1,"time":100},{"process":1,"seq":1,"time":105}]"#,
    )
    .unwrap();
    let o = fitolab(&[
        "--format",
        "json",
        "ordering",
        "lww",
        "--trace",
        p(&trace),
        "--timestamps",
        p(&ts),
    ]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["winner"], serde_json::json!({"process": 1, "seq": 1}));
    assert_eq!(r["anomalies"][0]["kind"], "LwwSurplusOrder");
}

#[test]
fn catalog_runs_clean() {
    let o = fitolab(&["catalog", "--run"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 13);
}

#[test]
fn lab_commands_exit_zero() {
    for args in [
        &["two-generals", "--rounds", "4", "--mask", "1101"][..],
        &["two-generals", "--bilateral", "--decide", "not-occurred"],
        &["cap", "--mode", "bilateral"],
        &[
            "clocks",
            "--d0",
            "100",
            "--theta",
            "-3",
            "--jitter",
            "0.5",
            "--substrate",
            "fito",
        ],
    ] {
        let o = fitolab(args);
        assert_eq!(
            code(&o),
            0,
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stdout)
        );
    }
}
