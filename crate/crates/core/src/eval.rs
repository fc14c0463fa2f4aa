//! Id-aligned binary classification metrics.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ingest::schema::AttackCategory;
use crate::ingest::{LabeledInstance, RawLogRecord};
use crate::pipeline::AnalysisRecord;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("duplicate prediction id {0}")]
    DuplicatePrediction(u64),
    #[error("duplicate ground-truth id {0}")]
    DuplicateTruth(u64),
    #[error("ground-truth record {0} has no label")]
    Unlabeled(u64),
    #[error("{path}: line {line}: {message}")]
    Jsonl { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Label and category for one ground-truth row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth {
    pub id: u64,
    pub label: u8,
    pub category: AttackCategory,
}

impl From<&LabeledInstance> for GroundTruth {
    fn from(i: &LabeledInstance) -> Self {
        Self {
            id: i.id,
            label: i.y,
            category: i.category,
        }
    }
}

impl TryFrom<&RawLogRecord> for GroundTruth {
    type Error = EvalError;

    fn try_from(r: &RawLogRecord) -> Result<Self, Self::Error> {
        match (r.label, r.attack_cat) {
            (Some(label), Some(category)) => Ok(Self {
                id: r.id,
                label,
                category,
            }),
            _ => Err(EvalError::Unlabeled(r.id)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub n_aligned: u64,
    pub n_missing_predictions: u64,
    /// Predictions whose id has no ground-truth row.
    pub n_unmatched_predictions: u64,
    pub n_fallbacks: u64,
    /// Exact attack-category agreement over aligned rows.
    pub category_accuracy: f64,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default)]
    pub undefined: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricsReport {
    /// Derive all metrics from confusion counts.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let n = tp + fp + fn_ + tn;
        let mut undefined = Vec::new();
        let mut get = |name: &str, v: Option<f64>| {
            v.unwrap_or_else(|| {
                undefined.push(name.to_string());
                0.0
            })
        };
        let precision = get("precision", ratio(tp, tp + fp));
        let recall = get("recall", ratio(tp, tp + fn_));
        let accuracy = get("accuracy", ratio(tp + tn, n));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            undefined.push("f1".to_string());
            0.0
        };
        Self {
            accuracy,
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
            n_aligned: n,
            n_missing_predictions: 0,
            n_unmatched_predictions: 0,
            n_fallbacks: 0,
            category_accuracy: 0.0,
            undefined,
        }
    }

    /// Table with one row: model name then the four headline percentages.
    pub fn table(&self, model_name: &str) -> String {
        let pct = |v: f64| format!("{:.2}%", v * 100.0);
        let name_w = model_name.len().max("Model".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$} | {:>9} | {:>9} | {:>9} | {:>9}",
            "Model", "Accuracy", "Precision", "Recall", "F1 Score"
        );
        let _ = writeln!(out, "{}", "-".repeat(name_w + 4 * 12));
        let _ = writeln!(
            out,
            "{:<name_w$} | {:>9} | {:>9} | {:>9} | {:>9}",
            model_name,
            pct(self.accuracy),
            pct(self.precision),
            pct(self.recall),
            pct(self.f1)
        );
        let _ = writeln!(
            out,
            "aligned={} missing={} unmatched={} fallbacks={} tp={} fp={} fn={} tn={}",
            self.n_aligned,
            self.n_missing_predictions,
            self.n_unmatched_predictions,
            self.n_fallbacks,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        );
        out
    }
}

/// Join predictions to ground truth on id and score the binary labels.
/// Label 1 (attack) is the positive class.
pub fn compute_metrics(predictions: &[AnalysisRecord], truth: &[GroundTruth]) -> Result<MetricsReport, EvalError> {
    let mut by_id: HashMap<u64, &AnalysisRecord> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.log_id, p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.log_id));
        }
    }
    let mut truth_ids = HashSet::with_capacity(truth.len());
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    let mut missing = 0u64;
    let mut category_hits = 0u64;
    for t in truth {
        if !truth_ids.insert(t.id) {
            return Err(EvalError::DuplicateTruth(t.id));
        }
        let Some(p) = by_id.get(&t.id) else {
            missing += 1;
            continue;
        };
        match (p.label == 1, t.label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
        category_hits += u64::from(p.attack_cat == t.category);
    }

    let mut report = MetricsReport::from_counts(tp, fp, fn_, tn);
    report.n_missing_predictions = missing;
    report.n_unmatched_predictions = predictions.iter().filter(|p| !truth_ids.contains(&p.log_id)).count() as u64;
    report.n_fallbacks = predictions.iter().filter(|p| p.used_fallback).count() as u64;
    report.category_accuracy = ratio(category_hits, report.n_aligned).unwrap_or(0.0);
    Ok(report)
}

/// Path of the human-readable table written next to a JSON report.
pub fn table_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("txt")
}

/// Write the report as JSON to `path` and as a table next to it.
pub fn emit_report(report: &MetricsReport, path: &Path, model_name: &str) -> Result<(), EvalError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| EvalError::Io { path: p, source }
    };
    fs::write(path, serde_json::to_string_pretty(report)?).map_err(io(path))?;
    let tpath = table_path(path);
    fs::write(&tpath, report.table(model_name)).map_err(io(&tpath))?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<MetricsReport, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Read analysis records from a JSON-lines file.
pub fn read_predictions(path: &Path) -> Result<Vec<AnalysisRecord>, EvalError> {
    let file = fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| EvalError::Jsonl {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(id: u64, label: u8) -> AnalysisRecord {
        AnalysisRecord {
            log_id: id,
            label,
            attack_cat: if label == 1 { AttackCategory::Generic } else { AttackCategory::Normal },
            short_summary: String::new(),
            lr_confidence: 0.5,
            used_fallback: false,
            fallback_reason: None,
            summary_truncated: false,
            stm_snapshot_size: 0,
            retrieved_count: 0,
        }
    }

    fn truth(id: u64, label: u8) -> GroundTruth {
        GroundTruth {
            id,
            label,
            category: if label == 1 { AttackCategory::DoS } else { AttackCategory::Normal },
        }
    }

    #[test]
    fn hand_computed_case() {
        let r = MetricsReport::from_counts(2, 1, 1, 6);
        assert!((r.precision - 0.6667).abs() < 1e-4);
        assert!((r.recall - 0.6667).abs() < 1e-4);
        assert!((r.f1 - 0.6667).abs() < 1e-4);
        assert!((r.accuracy - 0.8).abs() < 1e-4);
        assert!(r.undefined.is_empty());

        let r = MetricsReport::from_counts(2, 1, 2, 10);
        assert!((r.precision - 0.6667).abs() < 1e-4);
        assert!((r.recall - 0.5).abs() < 1e-4);
        assert!((r.f1 - 0.5714).abs() < 1e-4);
        assert!((r.accuracy - 0.8).abs() < 1e-4);
    }

    #[test]
    fn all_correct() {
        let preds: Vec<_> = (0..6).map(|i| pred(i, (i % 2) as u8)).collect();
        let gt: Vec<_> = (0..6).map(|i| truth(i, (i % 2) as u8)).collect();
        let r = compute_metrics(&preds, &gt).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let r = compute_metrics(&[pred(1, 0)], &[truth(1, 0)]).unwrap();
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.f1, 0.0);
        assert!(r.undefined.contains(&"precision".to_string()));
        assert!(r.undefined.contains(&"recall".to_string()));
        let empty = compute_metrics(&[], &[]).unwrap();
        assert!(empty.undefined.contains(&"accuracy".to_string()));
    }

    #[test]
    fn missing_and_unmatched() {
        let r = compute_metrics(&[pred(1, 1), pred(9, 1)], &[truth(1, 1), truth(2, 0)]).unwrap();
        assert_eq!(r.n_aligned, 1);
        assert_eq!(r.n_missing_predictions, 1);
        assert_eq!(r.n_unmatched_predictions, 1);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(matches!(
            compute_metrics(&[pred(1, 1), pred(1, 0)], &[]),
            Err(EvalError::DuplicatePrediction(1))
        ));
        assert!(matches!(
            compute_metrics(&[], &[truth(3, 1), truth(3, 1)]),
            Err(EvalError::DuplicateTruth(3))
        ));
    }

    #[test]
    fn report_files() {
        let r = MetricsReport::from_counts(2, 1, 1, 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        emit_report(&r, &path, "DM-RAG").unwrap();
        assert_eq!(load_report(&path).unwrap(), r);
        let table = fs::read_to_string(table_path(&path)).unwrap();
        for name in ["Accuracy", "Precision", "Recall", "F1 Score"] {
            assert!(table.contains(name));
        }
        assert!(table.contains("80.00%"));
        assert!(table.contains("66.67%"));
    }

    #[test]
    fn two_decimal_percentages() {
        let mut r = MetricsReport::from_counts(1, 0, 0, 0);
        r.f1 = 0.695_9;
        assert!(r.table("x").contains("69.59%"));
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(labels in proptest::collection::vec((0u8..2, 0u8..2), 0..=20), seed in any::<u64>()) {
            let gt: Vec<_> = labels.iter().enumerate().map(|(i, (t, _))| truth(i as u64, *t)).collect();
            let mut preds: Vec<_> = labels.iter().enumerate().map(|(i, (_, p))| pred(i as u64, *p)).collect();
            // shuffle predictions deterministically
            let n = preds.len();
            for i in 0..n {
                let j = (seed.wrapping_mul(i as u64 + 1) >> 7) as usize % n;
                preds.swap(i, j);
            }
            let r = compute_metrics(&preds, &gt).unwrap();
            let mut counts = [[0u64; 2]; 2];
            for (t, p) in &labels {
                counts[*t as usize][*p as usize] += 1;
            }
            prop_assert_eq!(r.tp, counts[1][1]);
            prop_assert_eq!(r.fp, counts[0][1]);
            prop_assert_eq!(r.fn_, counts[1][0]);
            prop_assert_eq!(r.tn, counts[0][0]);
            prop_assert_eq!(r.tp + r.fp + r.fn_ + r.tn, r.n_aligned);
            if r.precision + r.recall > 0.0 {
                let f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
                prop_assert!((r.f1 - f1).abs() <= 1e-12);
            }
        }
    }
}
