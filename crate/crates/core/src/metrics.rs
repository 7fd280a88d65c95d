//! Confusion matrix and imbalance-aware metrics.
//!
//! Balanced accuracy is the mean of per-class recalls. Precision of a class
//! that is never predicted is taken as 0 and reported as a warning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(preds: &[usize], labels: &[usize], class_names: &[String]) -> Result<Self> {
        let c = class_names.len();
        if preds.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} predictions for {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let mut counts = vec![vec![0u64; c]; c];
        for (k, (&p, &y)) in preds.iter().zip(labels).enumerate() {
            if p >= c || y >= c {
                return Err(Error::Data(format!(
                    "sample {k}: label {y} / prediction {p} out of range for {c} classes"
                )));
            }
            counts[y][p] += 1;
        }
        Ok(ConfusionMatrix {
            counts,
            class_names: class_names.to_vec(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    /// Each row divided by its support (zero rows stay zero).
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter().map(|&v| if s == 0 { 0.0 } else { v as f64 / s as f64 }).collect()
            })
            .collect()
    }

    /// Recall per class; a class with no support gets 0.
    pub fn recall_per_class(&self) -> Vec<f64> {
        (0..self.num_classes())
            .map(|c| ratio(self.counts[c][c], self.support(c)))
            .collect()
    }

    /// Precision per class; a never-predicted class gets 0.
    pub fn precision_per_class(&self) -> Vec<f64> {
        (0..self.num_classes())
            .map(|c| ratio(self.counts[c][c], self.predicted(c)))
            .collect()
    }

    pub fn f_beta_per_class(&self, beta: f64) -> Vec<f64> {
        let b2 = beta * beta;
        self.recall_per_class()
            .into_iter()
            .zip(self.precision_per_class())
            .map(|(r, p)| {
                let den = b2 * r + p;
                if den == 0.0 {
                    0.0
                } else {
                    (1.0 + b2) * r * p / den
                }
            })
            .collect()
    }

    pub fn macro_f_beta(&self, beta: f64) -> f64 {
        mean(&self.f_beta_per_class(beta))
    }

    pub fn macro_recall(&self) -> f64 {
        mean(&self.recall_per_class())
    }

    /// Fraction of all samples classified correctly (micro-averaged recall).
    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.num_classes()).map(|c| self.counts[c][c]).sum();
        ratio(diag, self.total())
    }

    /// Mean per-class recall. Every class needs at least one test sample.
    pub fn balanced_accuracy(&self) -> Result<f64> {
        if let Some(c) = (0..self.num_classes()).find(|&c| self.support(c) == 0) {
            return Err(Error::Evaluation(format!(
                "class {:?} has no test samples; balanced accuracy is undefined",
                self.class_names[c]
            )));
        }
        Ok(self.macro_recall())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    /// Overall accuracy, reported alongside the macro figures.
    pub micro_recall: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let balanced_accuracy = confusion.balanced_accuracy()?;
        let recall = confusion.recall_per_class();
        let precision = confusion.precision_per_class();
        let f1 = confusion.f_beta_per_class(1.0);
        let mut warnings = Vec::new();
        let per_class = (0..confusion.num_classes())
            .map(|c| {
                let predicted = confusion.predicted(c);
                if predicted == 0 {
                    warnings.push(format!(
                        "class {:?} was never predicted; its precision is taken as 0",
                        confusion.class_names[c]
                    ));
                }
                ClassMetrics {
                    name: confusion.class_names[c].clone(),
                    recall: recall[c],
                    precision: precision[c],
                    f1: f1[c],
                    support: confusion.support(c),
                    predicted,
                }
            })
            .collect();
        Ok(EvalReport {
            balanced_accuracy,
            macro_f1: mean(&f1),
            macro_recall: mean(&recall),
            micro_recall: confusion.accuracy(),
            per_class,
            confusion,
            warnings,
        })
    }
}

pub fn report(preds: &[usize], labels: &[usize], class_names: &[String]) -> Result<EvalReport> {
    EvalReport::from_confusion(ConfusionMatrix::new(preds, labels, class_names)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let r = report(&y, &y, &names(3)).unwrap();
        assert_eq!((r.balanced_accuracy, r.macro_f1, r.macro_recall), (1.0, 1.0, 1.0));
        for (i, row) in r.confusion.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v > 0, i == j);
            }
        }
    }

    #[test]
    fn constant_predictor() {
        let y = [0, 1, 0, 1];
        let cm = ConfusionMatrix::new(&[0; 4], &y, &names(2)).unwrap();
        assert_eq!(cm.counts, vec![vec![2, 0], vec![2, 0]]);
        assert_eq!(cm.balanced_accuracy().unwrap(), 0.5);
        assert_eq!(cm.precision_per_class()[1], 0.0);
        assert_eq!(cm.recall_per_class()[1], 0.0);
        let r = EvalReport::from_confusion(cm).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn zero_support_names_class() {
        let cm = ConfusionMatrix::new(&[0, 0], &[0, 0], &names(2)).unwrap();
        let err = cm.balanced_accuracy().unwrap_err().to_string();
        assert!(err.contains("c1"), "{err}");
    }

    #[test]
    fn f_beta_two_class_formula() {
        // class 0: TP 6, FN 2, FP 1; class 1: TP 3, FN 1, FP 2
        let cm = ConfusionMatrix {
            counts: vec![vec![6, 2], vec![1, 3]],
            class_names: names(2),
        };
        let (r0, p0) = (6.0 / 8.0, 6.0 / 7.0);
        let (r1, p1) = (3.0 / 4.0, 3.0 / 5.0);
        let f2 = |r: f64, p: f64| 5.0 * r * p / (4.0 * r + p);
        let want = (f2(r0, p0) + f2(r1, p1)) / 2.0;
        assert!((cm.macro_f_beta(2.0) - want).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_and_range() {
        assert!(ConfusionMatrix::new(&[0], &[0, 1], &names(2)).is_err());
        assert!(ConfusionMatrix::new(&[2], &[0], &names(2)).is_err());
    }

    #[test]
    fn report_roundtrips_json() {
        let r = report(&[0, 1, 1, 0], &[0, 1, 0, 0], &names(2)).unwrap();
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
