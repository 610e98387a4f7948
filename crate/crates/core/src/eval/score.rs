//! Response records and the metric fold over them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::parse::{parse_answer, ParsedAnswer};
use super::EvalError;
use crate::scenarios::Category;

/// Confusion column for replies with no recoverable label.
pub const UNPARSEABLE: &str = "unparseable";

/// One line of the response log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scenario_id: String,
    pub category: Category,
    pub frame_count: usize,
    pub model: String,
    pub prompt_hash: String,
    pub raw: String,
    pub parsed: ParsedAnswer,
    pub truth: String,
    pub level: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<String>,
    pub latency_secs: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

impl EvalRecord {
    pub fn is_correct(&self) -> bool {
        self.parsed.label.as_deref() == Some(self.truth.as_str())
    }

    /// Label used in the confusion matrix.
    pub fn response_label(&self) -> &str {
        match self.parsed.label.as_deref() {
            Some(l) if self.category.answer_set().contains(&l) => l,
            _ => UNPARSEABLE,
        }
    }

    /// Re-derives `parsed` from `raw`.
    pub fn reparse(&mut self) {
        self.parsed = parse_answer(&self.raw, self.category);
    }
}

/// Reads a JSONL response log; blank lines are skipped.
pub fn read_log(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let file = std::fs::File::open(path).map_err(|e| EvalError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EvalError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| EvalError::Log {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Exact count ratio; `den` may be zero for empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    /// `None` when the denominator is zero.
    pub fn value(&self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub category: Category,
    /// Counterfactual variant, if the records came from a probe scene.
    pub probe: Option<String>,
}

/// Rows are ground-truth labels, columns the answer set plus
/// [`UNPARSEABLE`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(category: Category) -> Self {
        let rows: Vec<String> = category.answer_set().iter().map(|s| s.to_string()).collect();
        let mut cols = rows.clone();
        cols.push(UNPARSEABLE.to_string());
        let counts = vec![vec![0; cols.len()]; rows.len()];
        Self { rows, cols, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correct predictions; the unparseable column never lies on the diagonal.
    pub fn trace(&self) -> u64 {
        (0..self.rows.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownCell {
    pub level: String,
    pub frame_count: usize,
    pub accuracy: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub accuracy: Ratio,
    pub confusion: Confusion,
    /// Share of responses per column label (answer set plus unparseable).
    pub distribution: BTreeMap<String, Ratio>,
    /// Fraction of each ground-truth label answered correctly.
    pub recall: BTreeMap<String, Ratio>,
    /// Accuracy per (parameter level, frame count), sorted by key.
    pub breakdown: Vec<BreakdownCell>,
    pub unparseable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(with = "cells_as_list")]
    pub cells: BTreeMap<CellKey, CategoryMetrics>,
    pub total_records: u64,
}

mod cells_as_list {
    use super::{CategoryMetrics, CellKey};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Cell {
        key: CellKey,
        metrics: CategoryMetrics,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<CellKey, CategoryMetrics>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<_> = m
            .iter()
            .map(|(k, v)| Cell {
                key: k.clone(),
                metrics: v.clone(),
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<CellKey, CategoryMetrics>, D::Error> {
        let v = Vec::<Cell>::deserialize(d)?;
        Ok(v.into_iter().map(|c| (c.key, c.metrics)).collect())
    }
}

impl MetricsReport {
    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self.cells.keys().map(|k| k.model.clone()).collect();
        m.dedup();
        m
    }

    /// Main (non-probe) cell for a model and category.
    pub fn get(&self, model: &str, category: Category) -> Option<&CategoryMetrics> {
        self.cells.get(&CellKey {
            model: model.to_string(),
            category,
            probe: None,
        })
    }
}

/// Pure fold over the records. Records whose truth label lies outside the
/// category's answer set are rejected.
pub fn score(records: &[EvalRecord]) -> Result<MetricsReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let mut cells: BTreeMap<CellKey, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        if !r.category.answer_set().contains(&r.truth.as_str()) {
            return Err(EvalError::InvalidRecord(format!(
                "{}: truth {:?} is not a {} label",
                r.scenario_id, r.truth, r.category
            )));
        }
        cells
            .entry(CellKey {
                model: r.model.clone(),
                category: r.category,
                probe: r.probe.clone(),
            })
            .or_default()
            .push(r);
    }
    let cells = cells
        .into_iter()
        .map(|(key, recs)| {
            let m = category_metrics(key.category, &recs);
            (key, m)
        })
        .collect();
    Ok(MetricsReport {
        cells,
        total_records: records.len() as u64,
    })
}

fn category_metrics(category: Category, recs: &[&EvalRecord]) -> CategoryMetrics {
    let mut confusion = Confusion::new(category);
    let mut breakdown_counts: BTreeMap<(String, usize), (u64, u64)> = BTreeMap::new();
    for r in recs {
        let i = confusion.rows.iter().position(|l| *l == r.truth).expect("validated truth");
        let j = confusion
            .cols
            .iter()
            .position(|l| l == r.response_label())
            .expect("column exists");
        confusion.counts[i][j] += 1;
        let e = breakdown_counts.entry((r.level.clone(), r.frame_count)).or_default();
        e.0 += u64::from(r.is_correct());
        e.1 += 1;
    }
    let total = confusion.total();
    let distribution = confusion
        .cols
        .iter()
        .enumerate()
        .map(|(j, l)| (l.clone(), Ratio::new(confusion.col_sum(j), total)))
        .collect();
    let recall = confusion
        .rows
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), Ratio::new(confusion.counts[i][i], confusion.row_sum(i))))
        .collect();
    let unparseable = confusion.col_sum(confusion.cols.len() - 1);
    CategoryMetrics {
        accuracy: Ratio::new(confusion.trace(), total),
        confusion,
        distribution,
        recall,
        breakdown: breakdown_counts
            .into_iter()
            .map(|((level, frame_count), (c, n))| BreakdownCell {
                level,
                frame_count,
                accuracy: Ratio::new(c, n),
            })
            .collect(),
        unparseable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(cat: Category, truth: &str, answer: Option<&str>, frames: usize) -> EvalRecord {
        let raw = answer.map(|a| format!("ANSWER: {a}")).unwrap_or_default();
        EvalRecord {
            scenario_id: "s".into(),
            category: cat,
            frame_count: frames,
            model: "m".into(),
            prompt_hash: "h".into(),
            parsed: parse_answer(&raw, cat),
            raw,
            truth: truth.into(),
            level: "l".into(),
            probe: None,
            latency_secs: 0.0,
            timestamp: 0.0,
        }
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(score(&[]), Err(EvalError::EmptyLog)));
    }

    #[test]
    fn traffic_45_of_60() {
        let mut recs = Vec::new();
        for i in 0..60 {
            let truth = if i % 2 == 0 { "traffic" } else { "no_traffic" };
            let ans = if i < 45 { truth } else if truth == "traffic" { "no_traffic" } else { "traffic" };
            recs.push(record(Category::Traffic, truth, Some(ans), 3));
        }
        let r = score(&recs).unwrap();
        let m = r.get("m", Category::Traffic).unwrap();
        assert_eq!(m.accuracy, Ratio::new(45, 60));
        assert_eq!(m.accuracy.value(), Some(0.75));
    }

    #[test]
    fn unparseable_counts_as_wrong() {
        let recs = vec![
            record(Category::Plane, "can_keep_moving", None, 3),
            record(Category::Plane, "can_keep_moving", Some("can_keep_moving"), 3),
        ];
        let m = score(&recs).unwrap().get("m", Category::Plane).unwrap().clone();
        assert_eq!(m.accuracy, Ratio::new(1, 2));
        assert_eq!(m.unparseable, 1);
        assert_eq!(m.distribution[UNPARSEABLE], Ratio::new(1, 2));
    }

    #[test]
    fn speeding_detection_rate() {
        let mut recs = Vec::new();
        for i in 0..30 {
            recs.push(record(
                Category::Speeding,
                "speeding",
                Some(if i < 2 { "speeding" } else { "no_speeding" }),
                6,
            ));
        }
        let m = score(&recs).unwrap().get("m", Category::Speeding).unwrap().clone();
        assert_eq!(m.recall["speeding"], Ratio::new(2, 30));
    }

    #[test]
    fn bad_truth_rejected() {
        let recs = vec![record(Category::Plane, "forward", Some("forward"), 3)];
        assert!(matches!(score(&recs), Err(EvalError::InvalidRecord(_))));
    }
}
