//! Top-k accuracy and confusion counts.

use std::fmt;

use rayon::prelude::*;
use stgcn_core::Model;

use crate::dataset::Dataset;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sample_count: usize,
    pub top1: f64,
    pub top5: f64,
    pub per_class_total: Vec<usize>,
    pub per_class_correct: Vec<usize>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

/// Classes ordered by descending probability; ties go to the lower index.
pub fn ranked_classes(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

pub fn top_class(probs: &[f64]) -> usize {
    ranked_classes(probs)[0]
}

pub fn report_from_probabilities(probs: &[Vec<f64>], labels: &[usize], class_count: usize) -> EvalReport {
    assert_eq!(probs.len(), labels.len());
    let mut report = EvalReport {
        sample_count: labels.len(),
        top1: 0.0,
        top5: 0.0,
        per_class_total: vec![0; class_count],
        per_class_correct: vec![0; class_count],
        confusion: vec![vec![0; class_count]; class_count],
    };
    let (mut hit1, mut hit5) = (0usize, 0usize);
    for (p, &label) in probs.iter().zip(labels) {
        let ranked = ranked_classes(p);
        report.per_class_total[label] += 1;
        report.confusion[label][ranked[0]] += 1;
        if ranked[0] == label {
            hit1 += 1;
            report.per_class_correct[label] += 1;
        }
        if ranked.iter().take(5).any(|&c| c == label) {
            hit5 += 1;
        }
    }
    if !labels.is_empty() {
        report.top1 = hit1 as f64 / labels.len() as f64;
        report.top5 = hit5 as f64 / labels.len() as f64;
    }
    report
}

pub fn predict(model: &Model, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    if dataset.joints != model.topology.joint_count() || dataset.channels != model.config.in_channels {
        return Err(HarnessError::Dataset(format!(
            "dataset is [{}, {}, {}], model expects {} joints and {} channels",
            dataset.joints,
            dataset.frames,
            dataset.channels,
            model.topology.joint_count(),
            model.config.in_channels
        )));
    }
    dataset
        .samples
        .par_iter()
        .map(|s| model.forward(&s.features).map_err(HarnessError::from))
        .collect()
}

pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<EvalReport> {
    if dataset.class_count != model.config.class_count {
        return Err(HarnessError::Dataset(format!(
            "dataset has {} classes, model {}",
            dataset.class_count, model.config.class_count
        )));
    }
    let probs = predict(model, dataset)?;
    Ok(report_from_probabilities(&probs, &dataset.labels(), dataset.class_count))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples {}", self.sample_count)?;
        writeln!(f, "top1 {:.6}", self.top1)?;
        writeln!(f, "top5 {:.6}", self.top5)?;
        for (c, (total, correct)) in self.per_class_total.iter().zip(&self.per_class_correct).enumerate() {
            writeln!(f, "class {c} {correct}/{total}")?;
        }
        writeln!(f, "confusion (rows = true, cols = predicted)")?;
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(class: usize, classes: usize) -> Vec<f64> {
        (0..classes).map(|c| if c == class { 0.9 } else { 0.1 / (classes - 1) as f64 }).collect()
    }

    #[test]
    fn perfect_predictor() {
        let labels: Vec<usize> = (0..12).map(|i| i % 6).collect();
        let probs: Vec<_> = labels.iter().map(|&l| one_hot(l, 6)).collect();
        let r = report_from_probabilities(&probs, &labels, 6);
        assert_eq!((r.top1, r.top5), (1.0, 1.0));
        assert_eq!(r.per_class_correct, vec![2; 6]);
    }

    #[test]
    fn uniform_predictor_ties_to_lowest_classes() {
        let labels: Vec<usize> = (0..10).collect();
        let probs = vec![vec![0.1; 10]; 10];
        let r = report_from_probabilities(&probs, &labels, 10);
        assert_eq!(r.top1, 0.1);
        assert_eq!(r.top5, 0.5);
        assert!(r.confusion.iter().all(|row| row[0] == 1));
        assert_eq!(ranked_classes(&probs[0])[..5], [0, 1, 2, 3, 4]);
    }

    #[test]
    fn few_classes_make_top5_one() {
        let labels = vec![0, 1, 2];
        let probs = vec![vec![0.1, 0.2, 0.7]; 3];
        let r = report_from_probabilities(&probs, &labels, 3);
        assert_eq!(r.top5, 1.0);
        assert!(r.top5 >= r.top1);
    }

    #[test]
    fn hand_counted_fixed_predictor() {
        // 20 samples, 6 classes; the predictor ranks (label + shift) first
        // where shift cycles 0, 1, 2, 3, 4, 5, 6, ...
        let classes = 6;
        let labels: Vec<usize> = (0..20).map(|i| (i * 7) % classes).collect();
        let probs: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let shift = i % 7;
                // rank r gets probability decreasing in r, class = label + r - shift
                let mut p = vec![0.0; classes];
                for r in 0..classes {
                    let c = (labels[i] + classes + r - shift % classes) % classes;
                    p[c] = (classes - r) as f64;
                }
                let s: f64 = p.iter().sum();
                p.iter().map(|v| v / s).collect()
            })
            .collect();
        // True class sits at rank (shift % 6): rank 0 for shift in {0, 6},
        // rank >= 5 only for shift 5. Shifts over i = 0..20: 0..6 twice, then 0..5.
        // shift % 6 == 0: i in {0, 6, 7, 13, 14} -> 5 top-1 hits.
        // shift == 5: i in {5, 12, 19} -> 3 top-5 misses.
        let r = report_from_probabilities(&probs, &labels, classes);
        assert_eq!(r.top1, 5.0 / 20.0);
        assert_eq!(r.top5, 17.0 / 20.0);
        assert_eq!(r.per_class_total.iter().sum::<usize>(), 20);
    }
}
