//! End-to-end runs of the `worldsim` binary on small suites.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CATEGORIES: [&str; 8] = [
    "forward_backward",
    "accel_decel",
    "left_right",
    "traffic",
    "speeding",
    "open_set_object",
    "plane",
    "planning",
];

fn worldsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_worldsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = worldsim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/table1_responses.jsonl")
}

/// Config with `n` scenarios for each listed category.
fn config(dir: &Path, cats: &[&str], n: usize) -> PathBuf {
    let counts: serde_json::Map<String, Value> = cats.iter().map(|c| (c.to_string(), Value::from(n))).collect();
    let path = dir.join("config.json");
    let body = serde_json::json!({ "suite": { "counts": counts }, "workers": 2 });
    std::fs::write(&path, body.to_string()).unwrap();
    path
}

fn gen(dir: &Path, cats: &[&str], n: usize) -> PathBuf {
    let cfg = config(dir, cats, n);
    let out = dir.join("out");
    ok(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn jsonl(p: &Path) -> Vec<Value> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut all = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                all.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    all.sort();
    all
}

/// Accuracy column of `accuracy.csv` keyed by (model, category) for non-probe rows.
fn accuracy_rows(dir: &Path) -> Vec<(String, String, String)> {
    std::fs::read_to_string(dir.join("accuracy.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>())
        .filter(|f| f[2].is_empty())
        .map(|f| (f[0].clone(), f[1].clone(), f[5].clone()))
        .collect()
}

#[test]
fn gen_is_deterministic_and_covers_all_categories() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = gen(a.path(), &CATEGORIES, 1);
    let out_b = gen(b.path(), &CATEGORIES, 1);

    let manifest = read_json(&out_a.join("manifest.json"));
    let mut cats: Vec<&str> = manifest["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["category"].as_str().unwrap())
        .collect();
    cats.dedup();
    assert_eq!(cats.len(), 8);

    let fa = files(&out_a);
    assert_eq!(fa, files(&out_b));
    let mut compared = 0;
    for f in fa.iter().filter(|f| f.extension().is_some_and(|e| e == "png" || e == "json")) {
        if f.to_string_lossy().starts_with("run_meta") {
            continue;
        }
        assert_eq!(std::fs::read(out_a.join(f)).unwrap(), std::fs::read(out_b.join(f)).unwrap(), "{f:?}");
        compared += 1;
    }
    assert!(compared > 8);

    let meta = read_json(&out_a.join("run_meta_gen.json"));
    assert_eq!(meta["command"], "gen");
    assert_eq!(meta["seed"], 2024);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn frames_flag_sets_grid_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &["traffic"], 1);
    let out = dir.path().join("out");
    ok(&["gen", "--config", s(&cfg), "--out", s(&out), "--frames", "3,6,9"]);
    let manifest = read_json(&out.join("manifest.json"));
    let mut counts: Vec<u64> = manifest["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["frame_count"].as_u64().unwrap())
        .collect();
    counts.sort();
    assert_eq!(counts, vec![3, 6, 9]);
    for n in [3, 6, 9] {
        assert!(out.join(format!("traffic_000/grid_{n}.png")).is_file());
    }
}

#[test]
fn oracle_eval_resume_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), &["traffic", "planning"], 2);
    let manifest = out.join("manifest.json");
    ok(&["eval", "--out", s(&out), "--model", "oracle"]);
    let log = out.join("responses/oracle.jsonl");
    let first = jsonl(&log);
    assert_eq!(first.len(), read_json(&manifest)["records"].as_array().unwrap().len());
    assert!(first.iter().all(|r| r["parsed"]["label"] == r["truth"]));

    ok(&["eval", "--out", s(&out), "--model", "oracle", "--resume"]);
    assert_eq!(jsonl(&log).len(), first.len());
    assert!(out.join("run_meta_eval.json").is_file());

    let report = dir.path().join("report");
    ok(&["score", "--out", s(&out), "--manifest", s(&manifest), "--report-dir", s(&report)]);
    assert!(report.join("metrics.json").is_file());
    for (model, cat, acc) in accuracy_rows(&report) {
        assert_eq!(model, "oracle");
        if cat == "traffic" || cat == "planning" {
            assert_eq!(acc, "1.000000");
        } else {
            assert_eq!(acc, "");
        }
    }
    assert!(report.join("plots/accuracy.svg").is_file());
}

#[test]
fn scripted_replay_and_fixture_scores() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report");
    ok(&["score", "--log", s(&fixture()), "--report-dir", s(&report)]);
    let table: Vec<(String, String, String)> = accuracy_rows(&report);
    let get = |m: &str, c: &str| -> f64 {
        table.iter().find(|r| r.0 == m && r.1 == c).unwrap().2.parse().unwrap()
    };
    let gpt = [0.50, 0.32, 0.55, 0.75, 0.53, 0.80, 0.53, 0.55];
    let claude = [0.48, 0.47, 0.50, 0.62, 0.55, 0.70, 0.47, 0.45];
    let order = ["forward_backward", "accel_decel", "left_right", "traffic", "speeding", "open_set_object", "plane", "planning"];
    for (i, cat) in order.iter().enumerate() {
        assert!((get("GPT-4V", cat) - gpt[i]).abs() < 0.01, "GPT-4V {cat}");
        assert!((get("Claude3", cat) - claude[i]).abs() < 0.01, "Claude3 {cat}");
    }

    // Replay the Claude3 traffic replies through the scripted client.
    let cfg = config(dir.path(), &["traffic"], 1);
    let out = dir.path().join("out");
    let script = dir.path().join("script.jsonl");
    let lines: Vec<String> = std::fs::read_to_string(fixture())
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"model\":\"Claude3\"") && l.contains("\"scenario_id\":\"traffic_000\""))
        .map(str::to_string)
        .collect();
    assert!(!lines.is_empty());
    std::fs::write(&script, lines.join("\n") + "\n").unwrap();
    ok(&["gen", "--config", s(&cfg), "--out", s(&out), "--frames", "3"]);
    let model = format!("scripted:{}#Claude3", s(&script));
    ok(&["eval", "--config", s(&cfg), "--out", s(&out), "--frames", "3", "--model", &model]);
    let replayed = jsonl(&out.join("responses/Claude3.jsonl"));
    assert_eq!(replayed.len(), 1);
    let original: Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(replayed[0]["raw"], original["raw"]);
}

#[test]
fn single_category_log_gives_single_category_report() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("traffic.jsonl");
    let text = std::fs::read_to_string(fixture()).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| l.contains("\"category\":\"traffic\"")).collect();
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();
    let report = dir.path().join("report");
    ok(&["score", "--log", s(&log), "--report-dir", s(&report)]);
    let confusion: Vec<_> = files(&report)
        .into_iter()
        .filter(|f| f.to_string_lossy().starts_with("confusion_"))
        .collect();
    assert_eq!(confusion, vec![PathBuf::from("confusion_traffic.csv")]);
    for (_, cat, acc) in accuracy_rows(&report) {
        assert_eq!(acc.is_empty(), cat != "traffic", "{cat}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = dir.path().join("out");
    let code = |args: &[&str]| worldsim(args).status.code().unwrap();
    assert_eq!(code(&["score", "--out", s(&out), "--log", s(&empty)]), 5);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"sede": 1}"#).unwrap();
    assert_eq!(code(&["gen", "--config", s(&bad), "--out", s(&out)]), 2);
    assert_eq!(code(&["eval", "--out", s(&out), "--model", "nobody"]), 2);
}

#[test]
fn probes_are_tagged_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let out = gen(dir.path(), &["forward_backward", "traffic"], 4);
    let cfg = dir.path().join("config.json");
    let manifest = read_json(&out.join("manifest.json"));
    let backward = manifest["records"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["label"] == "backward")
        .expect("suite has a backward scenario")["scenario_id"]
        .as_str()
        .unwrap()
        .to_string();

    let probe = |id: &str| {
        worldsim(&["probe", "--config", s(&cfg), "--out", s(&out), "--scenario", id, "--probe", "add_barrier_backward"])
    };
    assert!(probe(&backward).status.success());
    let manifest = read_json(&out.join("manifest.json"));
    let tagged: Vec<&Value> = manifest["records"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["scenario_id"] == backward.as_str() && !r["probe"].is_null())
        .collect();
    assert!(!tagged.is_empty());
    assert!(tagged.iter().all(|r| r["probe"] == "add_barrier_backward"));

    assert_eq!(probe("traffic_000").status.code(), Some(2));
}
