//! Confusion counts, accuracy/precision/recall, k-fold cross-validation and
//! the per-owner experiment.

mod cv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cv::{
    cross_validate, cross_validate_probed, owner_experiment, CvConfig, EvaluationReport, FoldProbe,
    FoldResult, OwnerExperimentReport, Task,
};

/// Binary confusion counts; the positive class is the owner.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Same counts with the positive and negative classes exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    pub fn record(&mut self, actual_positive: bool, predicted_positive: bool) {
        match (actual_positive, predicted_positive) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

/// A metric value; `undefined` marks a zero denominator, in which case the
/// value is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub undefined: bool,
}

impl Metric {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric {
                value: 0.0,
                undefined: true,
            }
        } else {
            Metric {
                value: num as f64 / den as f64,
                undefined: false,
            }
        }
    }

    pub fn defined(value: f64) -> Self {
        Metric {
            value,
            undefined: false,
        }
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::Precondition("accuracy of zero predictions".into()));
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

pub fn precision(c: &ConfusionCounts) -> Metric {
    Metric::ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> Metric {
    Metric::ratio(c.tp, c.tp + c.fn_)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    pub precision: Metric,
    pub recall: Metric,
}

/// Actual-by-predicted count matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassConfusion {
    classes: Vec<String>,
    matrix: Vec<Vec<u64>>,
}

impl MulticlassConfusion {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        MulticlassConfusion {
            classes,
            matrix: vec![vec![0; k]; k],
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.matrix[actual][predicted] += 1;
    }

    pub fn count(&self, actual: usize, predicted: usize) -> u64 {
        self.matrix[actual][predicted]
    }

    pub fn merge(&mut self, other: &MulticlassConfusion) {
        for (row, orow) in self.matrix.iter_mut().zip(&other.matrix) {
            for (a, b) in row.iter_mut().zip(orow) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.matrix[class].iter().sum()
    }

    /// Class `class` against all others.
    pub fn one_vs_rest(&self, class: usize) -> ConfusionCounts {
        let tp = self.matrix[class][class];
        let fn_ = self.support(class) - tp;
        let fp = self.matrix.iter().map(|row| row[class]).sum::<u64>() - tp;
        ConfusionCounts {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Precondition("accuracy of zero predictions".into()));
        }
        let hits: u64 = (0..self.classes.len()).map(|c| self.matrix[c][c]).sum();
        Ok(hits as f64 / total as f64)
    }

    pub fn per_class(&self) -> Vec<ClassMetrics> {
        (0..self.classes.len())
            .map(|c| {
                let counts = self.one_vs_rest(c);
                ClassMetrics {
                    class: self.classes[c].clone(),
                    support: self.support(c),
                    precision: precision(&counts),
                    recall: recall(&counts),
                }
            })
            .collect()
    }

    /// Support-weighted mean precision and recall. A class whose own
    /// precision is undefined contributes 0.
    pub fn weighted(&self) -> (Metric, Metric) {
        let total = self.total();
        if total == 0 {
            return (Metric::ratio(0, 0), Metric::ratio(0, 0));
        }
        let per = self.per_class();
        let w = |f: fn(&ClassMetrics) -> f64| {
            per.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / total as f64
        };
        (
            Metric::defined(w(|m| m.precision.value)),
            Metric::defined(w(|m| m.recall.value)),
        )
    }

    /// Unweighted mean over the classes present in the actual labels.
    pub fn macro_average(&self) -> (Metric, Metric) {
        let per: Vec<ClassMetrics> = self.per_class().into_iter().filter(|m| m.support > 0).collect();
        if per.is_empty() {
            return (Metric::ratio(0, 0), Metric::ratio(0, 0));
        }
        let n = per.len() as f64;
        (
            Metric::defined(per.iter().map(|m| m.precision.value).sum::<f64>() / n),
            Metric::defined(per.iter().map(|m| m.recall.value).sum::<f64>() / n),
        )
    }
}
