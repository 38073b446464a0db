//! Per-domain evaluation: confusion matrices, accuracy, macro-F1 and the
//! device-wise report with its unweighted average column.

use crate::core::Dataset;
use crate::error::{Error, Result};
use crate::nn::{features_matrix, forward, Mode, ParamVector};
use crate::core::RngStream;
use std::fmt::Write as _;

/// C×C confusion counts for one domain: rows = true class, cols = predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<usize>,
    total: usize,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes], total: 0 }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
        self.total += 1;
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn at(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.classes + predicted]
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// trace / total.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    if cm.total == 0 {
        return 0.0;
    }
    let correct: usize = (0..cm.classes).map(|c| cm.at(c, c)).sum();
    correct as f64 / cm.total as f64
}

/// Unweighted mean over classes of 2PR/(P+R); classes with P+R = 0 score 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    if cm.classes == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for c in 0..cm.classes {
        let tp = cm.at(c, c) as f64;
        let pred: f64 = (0..cm.classes).map(|t| cm.at(t, c)).sum::<usize>() as f64;
        let truth: f64 = (0..cm.classes).map(|p| cm.at(c, p)).sum::<usize>() as f64;
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if truth > 0.0 { tp / truth } else { 0.0 };
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    sum / cm.classes as f64
}

/// Eval-mode forward, argmax prediction, confusion accumulation per domain.
pub fn evaluate(params: &ParamVector, test_set: &Dataset) -> Result<Vec<ConfusionMatrix>> {
    if test_set.is_empty() {
        return Err(Error::config("evaluate on empty test set"));
    }
    let classes = test_set.class_count();
    let mut cms = vec![ConfusionMatrix::new(classes); test_set.domain_count()];
    let refs: Vec<&crate::core::Sample> = test_set.samples().iter().collect();
    let inputs = features_matrix(&refs);
    let mut rng = RngStream::from_seed(0); // eval mode draws nothing
    let pass = forward(params, &inputs, Mode::Eval, &mut rng)?;
    for (r, s) in test_set.samples().iter().enumerate() {
        let row = pass.logits().row(r);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        cms[s.domain].record(s.label, best);
    }
    Ok(cms)
}

/// One metrics row: accuracy and macro-F1 per domain plus their unweighted
/// averages (domains without test samples are skipped in the average).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainReport {
    pub accuracy: Vec<f64>,
    pub macro_f1: Vec<f64>,
    pub avg_accuracy: f64,
    pub avg_macro_f1: f64,
}

pub fn per_domain_report(cms: &[ConfusionMatrix]) -> DomainReport {
    let mut accuracy_v = Vec::with_capacity(cms.len());
    let mut f1_v = Vec::with_capacity(cms.len());
    let mut acc_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut populated = 0usize;
    for cm in cms {
        let a = accuracy(cm);
        let f = macro_f1(cm);
        accuracy_v.push(a);
        f1_v.push(f);
        if !cm.is_empty() {
            acc_sum += a;
            f1_sum += f;
            populated += 1;
        }
    }
    let denom = populated.max(1) as f64;
    DomainReport {
        accuracy: accuracy_v,
        macro_f1: f1_v,
        avg_accuracy: acc_sum / denom,
        avg_macro_f1: f1_sum / denom,
    }
}

/// CSV header for runs over `domains` device domains.
pub fn csv_header(domains: usize) -> String {
    let mut out = String::from("round,strategy,seed");
    for j in 0..domains {
        write!(out, ",acc_d{j}").unwrap();
    }
    out.push_str(",acc_avg");
    for j in 0..domains {
        write!(out, ",f1_d{j}").unwrap();
    }
    out.push_str(",f1_avg\n");
    out
}

/// One CSV row matching [`csv_header`].
pub fn csv_row(round: usize, strategy: &str, seed: u64, report: &DomainReport) -> String {
    let mut out = format!("{round},{strategy},{seed}");
    for a in &report.accuracy {
        write!(out, ",{a}").unwrap();
    }
    write!(out, ",{}", report.avg_accuracy).unwrap();
    for f in &report.macro_f1 {
        write!(out, ",{f}").unwrap();
    }
    write!(out, ",{}", report.avg_macro_f1).unwrap();
    out.push('\n');
    out
}
