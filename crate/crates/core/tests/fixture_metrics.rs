use std::path::PathBuf;

use worldsim_core::eval::{parse_answer, read_log, render_report, score, EvalRecord, Ratio, ScriptedClient};
use worldsim_core::eval::{ModelClient, QueryRequest};
use worldsim_core::Category;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/table1_responses.jsonl")
}

fn records() -> Vec<EvalRecord> {
    read_log(&fixture()).unwrap()
}

#[test]
fn stored_labels_match_parser() {
    for r in records() {
        assert_eq!(parse_answer(&r.raw, r.category), r.parsed, "{} {}", r.model, r.scenario_id);
    }
}

#[test]
fn sixty_records_per_model_and_category() {
    let m = score(&records()).unwrap();
    for model in ["GPT-4V", "Claude3"] {
        for cat in Category::ALL {
            assert_eq!(m.get(model, cat).unwrap().accuracy.den, 60, "{model} {cat}");
        }
    }
}

#[test]
fn gpt4v_traffic_and_speeding() {
    let m = score(&records()).unwrap();
    let traffic = m.get("GPT-4V", Category::Traffic).unwrap();
    assert_eq!(traffic.accuracy, Ratio::new(45, 60));
    let speeding = m.get("GPT-4V", Category::Speeding).unwrap();
    assert_eq!(speeding.recall["speeding"], Ratio::new(2, 30));
    // 96.7 % of replies say no speeding
    assert_eq!(speeding.distribution["no_speeding"], Ratio::new(58, 60));
    let claude = m.get("Claude3", Category::Speeding).unwrap();
    assert_eq!(claude.distribution["speeding"], Ratio::new(49, 60));
}

#[test]
fn gpt4v_accel_bias_towards_decelerate() {
    let m = score(&records()).unwrap();
    let c = &m.get("GPT-4V", Category::AccelDecel).unwrap().confusion;
    let (acc, dec) = (0, 1);
    assert!(c.col_sum(dec) > c.col_sum(acc));
    // more false "accelerate" on decelerating scenes than true ones
    assert!(c.counts[dec][acc] > c.counts[acc][acc]);
}

#[test]
fn report_accuracy_table_matches_to_three_decimals() {
    let m = score(&records()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    render_report(&m, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut seen = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        if &row[0] != "GPT-4V" {
            continue;
        }
        let cat: Category = row[1].parse().unwrap();
        let want = m.get("GPT-4V", cat).unwrap().accuracy.value().unwrap();
        let got: f64 = row[5].parse().unwrap();
        assert!((got - want).abs() < 5e-4);
        assert_eq!(row[3].parse::<u64>().unwrap(), m.get("GPT-4V", cat).unwrap().accuracy.num);
        seen += 1;
    }
    assert_eq!(seen, 8);
}

#[test]
fn scripted_replay_reproduces_fixture_labels() {
    let client = ScriptedClient::from_jsonl(&fixture(), Some("GPT-4V")).unwrap();
    assert_eq!(client.tag(), "GPT-4V");
    for r in records().into_iter().filter(|r| r.model == "GPT-4V") {
        let raw = client
            .query(&QueryRequest {
                scenario_id: r.scenario_id.clone(),
                category: r.category,
                frame_count: r.frame_count,
                prompt: String::new(),
                image_png: Vec::new(),
                truth: None,
            })
            .unwrap();
        assert_eq!(parse_answer(&raw, r.category).label, r.parsed.label);
    }
}
