//! Binary classification report: per-class precision/recall/F1, accuracy,
//! macro and support-weighted averages.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ForestModel;
use crate::data::TabularDataset;
use crate::error::{Error, Result};

/// Counts indexed as `counts[actual][predicted]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_labels(actual: &[u8], predicted: &[u8]) -> Self {
        let mut counts = [[0; 2]; 2];
        for (&a, &p) in actual.iter().zip(predicted) {
            counts[a as usize][p as usize] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

impl ClassMetrics {
    fn to_json(self) -> Value {
        json!({
            "precision": self.precision,
            "recall": self.recall,
            "f1-score": self.f1,
            "support": self.support,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: [ClassMetrics; 2],
    pub accuracy: f64,
    pub macro_avg: ClassMetrics,
    pub weighted_avg: ClassMetrics,
    pub total_support: usize,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl ClassificationReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let total = confusion.total();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let c = confusion.counts;
        let classes = [0, 1].map(|k| {
            let tp = c[k][k];
            let support = c[k][0] + c[k][1];
            let predicted = c[0][k] + c[1][k];
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                precision,
                recall,
                f1: f1(precision, recall),
                support,
            }
        });
        let avg = |weights: [f64; 2]| ClassMetrics {
            precision: weights[0] * classes[0].precision + weights[1] * classes[1].precision,
            recall: weights[0] * classes[0].recall + weights[1] * classes[1].recall,
            f1: weights[0] * classes[0].f1 + weights[1] * classes[1].f1,
            support: total,
        };
        let macro_avg = avg([0.5, 0.5]);
        let weighted_avg = avg([
            classes[0].support as f64 / total as f64,
            classes[1].support as f64 / total as f64,
        ]);
        Ok(Self {
            classes,
            accuracy: ratio(c[0][0] + c[1][1], total),
            macro_avg,
            weighted_avg,
            total_support: total,
            confusion,
        })
    }

    pub fn from_labels(actual: &[u8], predicted: &[u8]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: actual.len(),
                found: predicted.len(),
            });
        }
        Self::from_confusion(ConfusionMatrix::from_labels(actual, predicted))
    }

    /// JSON laid out like the familiar text report: one object per class plus
    /// `accuracy`, `macro avg` and `weighted avg`.
    pub fn to_json(&self) -> Value {
        json!({
            "0": self.classes[0].to_json(),
            "1": self.classes[1].to_json(),
            "accuracy": self.accuracy,
            "macro avg": self.macro_avg.to_json(),
            "weighted avg": self.weighted_avg.to_json(),
            "confusion_matrix": self.confusion.counts,
        })
    }
}

/// Right-aligned two-decimal table.
impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const W: usize = 12;
        writeln!(
            f,
            "{:>W$}  {:>9} {:>9} {:>9} {:>9}",
            "", "precision", "recall", "f1-score", "support"
        )?;
        writeln!(f)?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, m: &ClassMetrics| {
            writeln!(
                f,
                "{name:>W$}  {:>9.2} {:>9.2} {:>9.2} {:>9}",
                m.precision, m.recall, m.f1, m.support
            )
        };
        row(f, "0", &self.classes[0])?;
        row(f, "1", &self.classes[1])?;
        writeln!(f)?;
        writeln!(
            f,
            "{:>W$}  {:>9} {:>9} {:>9.2} {:>9}",
            "accuracy", "", "", self.accuracy, self.total_support
        )?;
        row(f, "macro avg", &self.macro_avg)?;
        row(f, "weighted avg", &self.weighted_avg)
    }
}

pub fn evaluate(model: &ForestModel, test: &TabularDataset) -> Result<ClassificationReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predicted = test
        .rows()
        .map(|row| model.predict_label(row))
        .collect::<Result<Vec<_>>>()?;
    ClassificationReport::from_labels(test.labels(), &predicted)
}
