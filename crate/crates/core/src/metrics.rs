//! Binary confusion counts and the clinical rates derived from them.
//!
//! Positive means abnormal (label 1). A rate whose denominator is zero is
//! `None` rather than 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataio::BinaryLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn add(&mut self, predicted: BinaryLabel, truth: BinaryLabel) {
        use BinaryLabel::*;
        match (predicted, truth) {
            (Abnormal, Abnormal) => self.true_pos += 1,
            (Normal, Normal) => self.true_neg += 1,
            (Abnormal, Normal) => self.false_pos += 1,
            (Normal, Abnormal) => self.false_neg += 1,
        }
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            true_pos: self.true_pos + other.true_pos,
            true_neg: self.true_neg + other.true_neg,
            false_pos: self.false_pos + other.false_pos,
            false_neg: self.false_neg + other.false_neg,
        }
    }
}

pub fn confusion(predictions: &[BinaryLabel], truths: &[BinaryLabel]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        cm.add(p, t);
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    /// Disease prevalence: share of truly abnormal records.
    pub prevalence: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub error: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let ConfusionMatrix {
        true_pos: tp,
        true_neg: tn,
        false_pos: fp,
        false_neg: fneg,
    } = *cm;
    let accuracy = ratio(tp + tn, total);
    let ppv = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fneg);
    let f1 = match (ppv, sensitivity) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * (p * r) / (p + r)),
        _ => None,
    };
    Ok(MetricsReport {
        accuracy,
        prevalence: ratio(tp + fneg, total),
        ppv,
        npv: ratio(tn, tn + fneg),
        sensitivity,
        specificity: ratio(tn, tn + fp),
        f1,
        error: accuracy.map(|a| 1.0 - a),
    })
}

/// Columns in display order: (header, key, accessor).
type Column = (&'static str, &'static str, fn(&MetricsReport) -> Option<f64>);

pub const COLUMNS: [Column; 8] = [
    ("ACC", "accuracy", |m| m.accuracy),
    ("Error", "error", |m| m.error),
    ("Precision", "ppv", |m| m.ppv),
    ("F1", "f1", |m| m.f1),
    ("Recall", "sensitivity", |m| m.sensitivity),
    ("Specificity", "specificity", |m| m.specificity),
    ("NPV", "npv", |m| m.npv),
    ("DP", "prevalence", |m| m.prevalence),
];

pub const UNDEFINED: &str = "n/a";

/// Aligned text table, one row per label, percentages to one decimal.
pub fn report_table(rows: &[(String, MetricsReport)]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, m)| {
            std::iter::once(label.clone())
                .chain(COLUMNS.iter().map(|(_, _, get)| match get(m) {
                    Some(v) => format!("{:.1}", v * 100.0),
                    None => UNDEFINED.to_string(),
                }))
                .collect()
        })
        .collect();
    let header: Vec<&str> = std::iter::once("Model").chain(COLUMNS.iter().map(|c| c.0)).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .chain(std::iter::once(header[c].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, fields: &[&str]| {
        for (c, f) in fields.iter().enumerate() {
            let pad = widths[c] - f.chars().count();
            if c == 0 {
                write!(out, "{f}{}", " ".repeat(pad)).unwrap();
            } else {
                write!(out, "  {}{f}", " ".repeat(pad)).unwrap();
            }
        }
        out.push('\n');
    };
    line(&mut out, &header);
    for r in &cells {
        let fields: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&mut out, &fields);
    }
    out
}

/// `label.key=value` lines with full-precision fractions; undefined
/// measures are written as `undefined`.
pub fn report_kv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    for (label, m) in rows {
        for (_, key, get) in COLUMNS {
            match get(m) {
                Some(v) => writeln!(out, "{label}.{key}={v}").unwrap(),
                None => writeln!(out, "{label}.{key}=undefined").unwrap(),
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalencePoint {
    pub prevalence: f64,
    pub ppv: f64,
    pub npv: f64,
}

/// Predictive values implied by a fixed sensitivity and specificity at each
/// prevalence.
pub fn prevalence_sweep(sensitivity: f64, specificity: f64, prevalences: &[f64]) -> Result<Vec<PrevalencePoint>> {
    for (name, v) in [("sensitivity", sensitivity), ("specificity", specificity)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::invalid(format!("{name} {v} outside (0, 1]")));
        }
    }
    prevalences
        .iter()
        .map(|&p| {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!("prevalence {p} outside (0, 1)")));
            }
            let tp = p * sensitivity;
            let fp = (1.0 - p) * (1.0 - specificity);
            let tn = (1.0 - p) * specificity;
            let fneg = p * (1.0 - sensitivity);
            Ok(PrevalencePoint {
                prevalence: p,
                ppv: tp / (tp + fp),
                npv: tn / (tn + fneg),
            })
        })
        .collect()
}
