//! Accuracy and fairness metrics over group-annotated predictions.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TPR_DEFINITION: &str =
    "per-group TPR = within-group micro-averaged multiclass recall (= within-group accuracy)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    #[serde(rename = "true")]
    pub truth: usize,
    pub pred: usize,
    pub tone: usize,
}

impl PredictionRow {
    pub fn correct(&self) -> bool {
        self.truth == self.pred
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predictions {
    rows: Vec<PredictionRow>,
    n_groups: usize,
}

impl Predictions {
    pub fn new(rows: Vec<PredictionRow>, n_groups: usize) -> Result<Self> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.tone >= n_groups) {
            return Err(Error::Ingest(format!(
                "tone {} out of range [0,{}) at row {}",
                r.tone,
                n_groups,
                i + 1
            )));
        }
        Ok(Self { rows, n_groups })
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn counts_by_group(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_groups];
        for r in &self.rows {
            counts[r.tone] += 1;
        }
        counts
    }

    /// Reads an `id,true,pred,tone` CSV.
    pub fn read_csv(path: &Path, n_groups: usize) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Ingest(format!("predictions file {} not found", path.display())));
        }
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
        if headers.iter().collect::<Vec<_>>() != ["id", "true", "pred", "tone"] {
            return Err(Error::Ingest(format!(
                "{}: header must be id,true,pred,tone",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<PredictionRow>().enumerate() {
            rows.push(rec.map_err(|e| Error::Ingest(format!("malformed row {}: {e}", i + 1)))?);
        }
        Self::new(rows, n_groups)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Internal(e.to_string()))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Internal(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Fraction correct per tone group; `None` for groups without rows.
pub fn group_accuracy(p: &Predictions) -> Vec<Option<f64>> {
    let mut correct = vec![0usize; p.n_groups];
    let counts = p.counts_by_group();
    for r in &p.rows {
        correct[r.tone] += r.correct() as usize;
    }
    correct
        .iter()
        .zip(&counts)
        .map(|(c, n)| (*n > 0).then(|| *c as f64 / *n as f64))
        .collect()
}

/// Micro-averaged accuracy over all rows.
pub fn overall_accuracy(p: &Predictions) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::UndefinedInput("accuracy of an empty prediction set".into()));
    }
    let correct = p.rows.iter().filter(|r| r.correct()).count();
    Ok(correct as f64 / p.len() as f64)
}

/// Unweighted means over classes present in the truth column of per-class
/// recall and F1. A class with zero precision-plus-recall scores F1 = 0.
pub fn macro_recall_f1(p: &Predictions) -> Result<(f64, f64)> {
    if p.is_empty() {
        return Err(Error::UndefinedInput("recall of an empty prediction set".into()));
    }
    let present: BTreeSet<usize> = p.rows.iter().map(|r| r.truth).collect();
    let (mut recall_sum, mut f1_sum) = (0.0, 0.0);
    for &c in &present {
        let tp = p.rows.iter().filter(|r| r.truth == c && r.pred == c).count() as f64;
        let actual = p.rows.iter().filter(|r| r.truth == c).count() as f64;
        let predicted = p.rows.iter().filter(|r| r.pred == c).count() as f64;
        let recall = tp / actual;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        recall_sum += recall;
        f1_sum += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    let k = present.len() as f64;
    Ok((recall_sum / k, f1_sum / k))
}

fn side_tpr(p: &Predictions, groups: &[usize]) -> Option<f64> {
    let rows: Vec<&PredictionRow> = p.rows.iter().filter(|r| groups.contains(&r.tone)).collect();
    if rows.is_empty() {
        return None;
    }
    Some(rows.iter().filter(|r| r.correct()).count() as f64 / rows.len() as f64)
}

/// Equal opportunity difference `|TPR_a - TPR_b|`; `None` when either side has no rows.
pub fn eod(p: &Predictions, light: &[usize], dark: &[usize]) -> Option<f64> {
    Some((side_tpr(p, light)? - side_tpr(p, dark)?).abs())
}

/// Normalized accuracy range `(max - min) / mean` over present groups.
/// All-zero accuracies have no disparity and give 0.
pub fn nar(group_accs: &[f64]) -> Result<f64> {
    if group_accs.is_empty() {
        return Err(Error::UndefinedInput("NAR needs at least one group".into()));
    }
    let max = group_accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = group_accs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = group_accs.iter().sum::<f64>() / group_accs.len() as f64;
    if mean == 0.0 {
        return Ok(0.0);
    }
    Ok((max - min) / mean)
}

/// Default light/dark halves of `n` ordered tone groups.
pub fn default_light_dark(n: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n / 2).collect(), (n / 2..n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall_acc: f64,
    pub acc_by_group: Vec<Option<f64>>,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub eod: Option<f64>,
    pub nar: Option<f64>,
    pub counts_by_group: Vec<usize>,
    pub tpr_definition: String,
}

impl MetricsReport {
    pub fn compute(p: &Predictions, light: &[usize], dark: &[usize]) -> Result<Self> {
        let acc_by_group = group_accuracy(p);
        let present: Vec<f64> = acc_by_group.iter().flatten().copied().collect();
        let (macro_recall, macro_f1) = macro_recall_f1(p)?;
        Ok(Self {
            overall_acc: overall_accuracy(p)?,
            macro_recall,
            macro_f1,
            eod: eod(p, light, dark),
            nar: if present.is_empty() {
                None
            } else {
                Some(nar(&present)?)
            },
            acc_by_group,
            counts_by_group: p.counts_by_group(),
            tpr_definition: TPR_DEFINITION.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}
