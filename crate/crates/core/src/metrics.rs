//! Confusion counts and the twelve binary-segmentation quality measures.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::raster::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("mask value {0} is not binary")]
    NonBinaryInput(u8),
    #[error("no rows to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }
}

/// Pixelwise counts with `gt` as truth and `pred` as decision. Both slices
/// hold `0`/`1` values in the same layout.
pub fn confusion_values(pred: &[u8], gt: &[u8]) -> Result<ConfusionCounts, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::ShapeMismatch(pred.len(), 1, gt.len(), 1));
    }
    let mut cells = [0u64; 4];
    for (&p, &g) in pred.iter().zip(gt) {
        if p > 1 {
            return Err(MetricsError::NonBinaryInput(p));
        }
        if g > 1 {
            return Err(MetricsError::NonBinaryInput(g));
        }
        cells[usize::from(p) * 2 + usize::from(g)] += 1;
    }
    Ok(ConfusionCounts {
        tn: cells[0],
        fn_: cells[1],
        fp: cells[2],
        tp: cells[3],
    })
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts, MetricsError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(MetricsError::ShapeMismatch(
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height(),
        ));
    }
    confusion_values(pred.values(), gt.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Sensitivity,
    Specificity,
    Precision,
    Fdr,
    Npv,
    F1,
    Mcc,
    Informedness,
    Markedness,
    Fpr,
    Fnr,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::Accuracy,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Precision,
        Metric::Fdr,
        Metric::Npv,
        Metric::F1,
        Metric::Mcc,
        Metric::Informedness,
        Metric::Markedness,
        Metric::Fpr,
        Metric::Fnr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Precision => "precision",
            Metric::Fdr => "fdr",
            Metric::Npv => "npv",
            Metric::F1 => "f1",
            Metric::Mcc => "mcc",
            Metric::Informedness => "informedness",
            Metric::Markedness => "markedness",
            Metric::Fpr => "fpr",
            Metric::Fnr => "fnr",
        }
    }

    /// Measures on the signed `[-1, 1]` scale rather than a proportion.
    pub fn is_signed(self) -> bool {
        matches!(self, Metric::Mcc | Metric::Informedness | Metric::Markedness)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The twelve measures of one image; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub fdr: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub informedness: Option<f64>,
    pub markedness: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricRow {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Precision => self.precision,
            Metric::Fdr => self.fdr,
            Metric::Npv => self.npv,
            Metric::F1 => self.f1,
            Metric::Mcc => self.mcc,
            Metric::Informedness => self.informedness,
            Metric::Markedness => self.markedness,
            Metric::Fpr => self.fpr,
            Metric::Fnr => self.fnr,
        }
    }
}

/// Evaluates every measure from the counts.
///
/// The three error rates are computed as complements of the corresponding
/// success rates, and informedness and markedness as sums of them, so those
/// identities hold exactly in floating point.
pub fn metrics(c: &ConfusionCounts) -> MetricRow {
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    let precision = ratio(c.tp, c.tp + c.fp);
    let npv = ratio(c.tn, c.tn + c.fn_);
    let both = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a + b - 1.0);
    let mcc = {
        let marg = [c.tp + c.fp, c.tp + c.fn_, c.tn + c.fp, c.tn + c.fn_];
        if marg.contains(&0) {
            None
        } else {
            let num = c.tp as f64 * c.tn as f64 - c.fp as f64 * c.fn_ as f64;
            let den = marg.iter().map(|m| *m as f64).product::<f64>().sqrt();
            Some((num / den).clamp(-1.0, 1.0))
        }
    };
    MetricRow {
        accuracy: ratio(c.tp + c.tn, c.total()),
        sensitivity,
        specificity,
        precision,
        fdr: precision.map(|p| 1.0 - p),
        npv,
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        mcc,
        informedness: both(sensitivity, specificity),
        markedness: both(precision, npv),
        fpr: specificity.map(|s| 1.0 - s),
        fnr: sensitivity.map(|s| 1.0 - s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub metric: Metric,
    /// `None` when every row was undefined for this measure.
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub defined: usize,
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<Summary>,
}

impl MetricReport {
    pub fn summary_of(&self, m: Metric) -> &Summary {
        self.summary
            .iter()
            .find(|s| s.metric == m)
            .expect("every measure is summarized")
    }
}

/// Mean and population standard deviation per measure over defined values,
/// accumulated in row order.
pub fn aggregate(rows: &[MetricRow]) -> Result<MetricReport, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let summary = Metric::ALL
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.get(m)).collect();
            let n = vals.len();
            let (mean, std) = if n == 0 {
                (None, None)
            } else {
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                (Some(mean), Some(var.sqrt()))
            };
            Summary {
                metric: m,
                mean,
                std,
                defined: n,
                undefined: rows.len() - n,
            }
        })
        .collect();
    Ok(MetricReport {
        rows: rows.to_vec(),
        summary,
    })
}

/// Plain-text table: one line per measure with mean and deviation.
/// Proportions print as percentages with two decimals, signed measures
/// with four decimals.
pub fn format_table(report: &MetricReport) -> String {
    let mut out = format!("{:<14}{:>12}{:>12}{:>11}\n", "metric", "mean", "std", "undefined");
    for s in &report.summary {
        let fmt = |v: Option<f64>| match v {
            None => "n/a".to_string(),
            Some(v) if s.metric.is_signed() => format!("{v:.4}"),
            Some(v) => format!("{:.2}%", 100.0 * v),
        };
        out.push_str(&format!(
            "{:<14}{:>12}{:>12}{:>11}\n",
            s.metric.name(),
            fmt(s.mean),
            fmt(s.std),
            s.undefined
        ));
    }
    out
}
