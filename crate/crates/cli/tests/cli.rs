use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn fairpay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairpay")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn payout_reproduces_worked_example() {
    let cfg = fixture("worked/payout.json");
    let out = fairpay(&["payout", "--config", path(&cfg)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let amounts: Vec<&str> = report["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["payment"]["minor"].as_u64().unwrap())
        .map(|m| match m {
            1240108 => "12401.08",
            177158 => "1771.58",
            708633 => "7086.33",
            _ => "unexpected",
        })
        .collect();
    assert_eq!(amounts, ["12401.08", "1771.58", "7086.33"]);
    assert_eq!(report["residual"], -1);
    // Explainability: delta, game source, method and axioms are embedded.
    assert!(report["basis"]["delta"].is_object());
    assert!(report["provenance"]["game_source"].as_str().unwrap().contains("table-variant.json"));
    assert!(report["provenance"]["method"].is_object());
    assert!(report["provenance"]["axioms"]["efficiency"]["pass"].as_bool().unwrap());

    let md = fairpay(&["payout", "--config", path(&cfg), "--format", "markdown"]);
    let md = stdout(&md);
    for amount in ["12401.08 USD", "1771.58 USD", "7086.33 USD"] {
        assert!(md.contains(amount), "{md}");
    }
}

#[test]
fn payout_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("worked/subset-results-config.json");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for target in [&a, &b] {
        let out = fairpay(&["payout", "--config", path(&cfg), "--output", path(target)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    assert!(String::from_utf8(first).unwrap().starts_with("player,phi,share,payment_minor,payment,currency\n"));

    let reseeded = dir.path().join("c.csv");
    let out = fairpay(&["payout", "--config", path(&cfg), "--seed", "1", "--output", path(&reseeded)]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&reseeded).unwrap());
}

#[test]
fn report_rerenders_stored_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let out = fairpay(&["payout", "--config", path(&fixture("worked/commits.json")), "--format", "json", "--output", path(&json)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let md = fairpay(&["report", "--input", path(&json), "--format", "markdown"]);
    assert!(md.status.success());
    assert!(stdout(&md).contains("| alice | 3/2 | 1/2 |"), "{}", stdout(&md));
    let again = fairpay(&["report", "--input", path(&json), "--format", "json"]);
    assert_eq!(stdout(&again).as_bytes(), std::fs::read(&json).unwrap().as_slice());
}

#[test]
fn shapley_prints_three_player_reference() {
    let out = fairpay(&["shapley", "--config", path(&fixture("three-player/shapley.json"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("1/2 1/2 1"));
    assert!(text.contains("all axioms: pass"));
}

#[test]
fn game_lists_the_printed_table_from_commits() {
    let out = fairpay(&["game", "--config", path(&fixture("worked/commits.json")), "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let last = rows.as_array().unwrap().last().unwrap();
    assert_eq!(last["coalition"], serde_json::json!(["alice", "bob", "carol"]));
    assert_eq!(last["value"], "3");
}

#[test]
fn validate_exit_codes() {
    let gap = fairpay(&["validate", "--risk-model", path(&fixture("invalid/scale-gap.json"))]);
    assert_eq!(gap.status.code(), Some(1));
    assert!(stderr(&gap).contains("non-contiguous"));
    let gap_cfg = fairpay(&["validate", "--config", path(&fixture("invalid/scale-gap-config.json"))]);
    assert_eq!(gap_cfg.status.code(), Some(1));

    let ok = fairpay(&["validate", "--config", path(&fixture("worked/commits.json"))]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));

    let missing = fairpay(&["validate", "--config", "/nonexistent/config.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = fairpay(&["payout", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn exact_solver_over_capacity_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let players: Vec<String> = (0..30).map(|i| format!("dev{i:02}")).collect();
    let attribution: Vec<serde_json::Value> = (0..30)
        .map(|i| serde_json::json!({"leaf": format!("U{i}"), "authors": [players[i]]}))
        .collect();
    let leaves: Vec<serde_json::Value> = (0..30).map(|i| serde_json::json!({"id": format!("U{i}")})).collect();
    let risk = serde_json::json!({
        "scales": {
            "likelihood": {"name": "l", "kind": "lookup", "categories": [{"label": "x", "lo": "1", "hi": "1"}]},
            "impact": {"name": "d", "kind": "lookup", "categories": [{"label": "x", "lo": "1", "hi": "1"}]}
        },
        "threats": [{"id": "T", "controls": [{"id": "C", "leaves": leaves}]}],
        "assessments": []
    });
    std::fs::write(dir.path().join("risk.json"), risk.to_string()).unwrap();
    std::fs::write(dir.path().join("attribution.json"), serde_json::Value::Array(attribution).to_string()).unwrap();
    let config = |solver: serde_json::Value| {
        serde_json::json!({
            "risk_model": "risk.json",
            "players": players,
            "source": {"kind": "attribution", "path": "attribution.json"},
            "aggregation": "sum", "clamp": true, "normalized": true,
            "solver": solver,
            "rounding": "per-recipient",
            "output": {"format": "json"}
        })
        .to_string()
    };
    let exact = dir.path().join("exact.json");
    std::fs::write(&exact, config(serde_json::json!({"kind": "exact"}))).unwrap();
    let out = fairpay(&["shapley", "--config", path(&exact)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("monte-carlo"));

    let mc = dir.path().join("mc.json");
    std::fs::write(&mc, config(serde_json::json!({"kind": "monte-carlo", "samples": 50, "seed": 1}))).unwrap();
    let out = fairpay(&["shapley", "--config", path(&mc)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).lines().next().unwrap().split(' ').all(|x| x == "1/30"));
}

#[test]
fn plan_cherry_pick_filters_authors() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.json");
    let out = fairpay(&[
        "plan-cherry-pick",
        "--config",
        path(&fixture("worked/commits.json")),
        "--base",
        "5d0b3aa",
        "--subset",
        "alice,carol",
        "--output",
        path(&plan_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    let steps = plan["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 5);
    assert_eq!(steps[3]["commits"], serde_json::json!(["9c41e07", "2b7f9d1", "71d2c64", "a8e6f30"]));

    let unknown = fairpay(&["plan-cherry-pick", "--config", path(&fixture("worked/commits.json")), "--base", "ffff", "--subset", "bob"]);
    assert_eq!(unknown.status.code(), Some(1));
}
