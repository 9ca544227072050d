//! Confusion matrix and support-weighted precision / recall / F1.

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierBundle, ClassifierError};
use crate::data::{ClassLabel, Dataset};

/// Counts indexed by `(true label, predicted label)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<ClassLabel>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<ClassLabel>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(labels: Vec<ClassLabel>, counts: Vec<Vec<usize>>) -> Self {
        assert_eq!(labels.len(), counts.len());
        assert!(counts.iter().all(|r| r.len() == labels.len()));
        ConfusionMatrix { labels, counts }
    }

    fn index(&self, l: &ClassLabel) -> Option<usize> {
        self.labels.iter().position(|x| x == l)
    }

    pub fn record(
        &mut self,
        truth: &ClassLabel,
        predicted: &ClassLabel,
    ) -> Result<(), ClassifierError> {
        let t = self.index(truth).ok_or_else(|| {
            ClassifierError::Domain(format!("true label {truth} not covered by the model"))
        })?;
        let p = self.index(predicted).ok_or_else(|| {
            ClassifierError::Domain(format!("predicted label {predicted} unknown"))
        })?;
        self.counts[t][p] += 1;
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> usize {
        self.counts.iter().map(|r| r[class]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: ClassLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_series: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Derives all metrics from a confusion matrix. Undefined ratios (no
    /// predictions, no support) are reported as 0.
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let total = confusion.total();
        let per_class: Vec<ClassMetrics> = confusion
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let tp = confusion.counts[i][i];
                let precision = ratio(tp, confusion.predicted(i));
                let recall = ratio(tp, confusion.support(i));
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    label: l.clone(),
                    precision,
                    recall,
                    f1,
                    support: confusion.support(i),
                }
            })
            .collect();
        let weighted = |f: fn(&ClassMetrics) -> f64| {
            if total == 0 {
                return 0.0;
            }
            per_class
                .iter()
                .map(|m| f(m) * m.support as f64)
                .sum::<f64>()
                / total as f64
        };
        EvalReport {
            n_series: total,
            accuracy: ratio(confusion.trace(), total),
            weighted_precision: weighted(|m| m.precision),
            weighted_recall: weighted(|m| m.recall),
            weighted_f1: weighted(|m| m.f1),
            per_class,
            confusion,
        }
    }
}

/// Classifies every series of a labeled dataset and scores the result.
pub fn evaluate(bundle: &ClassifierBundle, data: &Dataset) -> Result<EvalReport, ClassifierError> {
    let labels: Vec<ClassLabel> = bundle.class_order().into_iter().cloned().collect();
    let mut cm = ConfusionMatrix::new(labels);
    let prepared = bundle.prepare()?;
    for s in data.iter() {
        let truth = s
            .label()
            .ok_or_else(|| ClassifierError::Domain(format!("series {} is unlabeled", s.id())))?;
        let pred = prepared.classify(s)?;
        cm.record(truth, &pred.label)?;
    }
    Ok(EvalReport::from_confusion(cm))
}
