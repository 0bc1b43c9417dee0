//! Branch-level classification metrics and system-level accuracy.
//!
//! The positive class is de-energized (state 1). Precision and recall are
//! undefined when their denominator is zero; undefined values are left out
//! of averages and counted instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction and truth cover different nodes: {0}")]
    KeyMismatch(String),
    #[error("no scenarios to aggregate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
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

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn from_slices(pred: &[bool], truth: &[bool]) -> Self {
        assert_eq!(pred.len(), truth.len());
        let mut c = Self::default();
        for (&p, &t) in pred.iter().zip(truth) {
            c.add(p, t);
        }
        c
    }

    pub fn all_correct(&self) -> bool {
        self.fp == 0 && self.fn_ == 0
    }
}

/// Counts over the common key set of `pred` and `truth`.
pub fn confusion(
    pred: &BTreeMap<String, bool>,
    truth: &BTreeMap<String, bool>,
) -> Result<ConfusionCounts, MetricsError> {
    if let Some(k) = pred.keys().find(|k| !truth.contains_key(*k)) {
        return Err(MetricsError::KeyMismatch(format!(
            "`{k}` has no ground truth"
        )));
    }
    if let Some(k) = truth.keys().find(|k| !pred.contains_key(*k)) {
        return Err(MetricsError::KeyMismatch(format!(
            "`{k}` has no prediction"
        )));
    }
    let mut c = ConfusionCounts::default();
    for (k, &p) in pred {
        c.add(p, truth[k]);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub beta: f64,
}

/// Accuracy, precision, recall and the F-score with weight `beta`.
pub fn metrics(c: &ConfusionCounts, beta: f64) -> MetricReport {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => {
            let b2 = beta * beta;
            Some((b2 + 1.0) * p * r / (b2 * p + r))
        }
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    MetricReport {
        accuracy: ratio(c.tp + c.tn, c.total()).unwrap_or(1.0),
        precision,
        recall,
        f1,
        beta,
    }
}

/// Outcome of one scenario: branch counts plus whether every branch and
/// customer state was right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScenarioOutcome {
    pub branches: ConfusionCounts,
    pub customers: ConfusionCounts,
}

impl ScenarioOutcome {
    pub fn fully_correct(&self) -> bool {
        self.branches.all_correct() && self.customers.all_correct()
    }
}

/// Macro averages over scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateReport {
    pub scenarios: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub undefined_precision: usize,
    pub undefined_recall: usize,
    pub undefined_f1: usize,
    /// Fraction of scenarios with every branch and customer right.
    pub system_accuracy: f64,
    pub beta: f64,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut undefined) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                n += 1;
            }
            None => undefined += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), undefined)
}

pub fn aggregate(outcomes: &[ScenarioOutcome], beta: f64) -> Result<AggregateReport, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let reports: Vec<MetricReport> = outcomes
        .iter()
        .map(|o| metrics(&o.branches, beta))
        .collect();
    let (precision, undefined_precision) = mean_defined(reports.iter().map(|r| r.precision));
    let (recall, undefined_recall) = mean_defined(reports.iter().map(|r| r.recall));
    let (f1, undefined_f1) = mean_defined(reports.iter().map(|r| r.f1));
    let n = outcomes.len() as f64;
    Ok(AggregateReport {
        scenarios: outcomes.len(),
        accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
        precision,
        recall,
        f1,
        undefined_precision,
        undefined_recall,
        undefined_f1,
        system_accuracy: outcomes.iter().filter(|o| o.fully_correct()).count() as f64 / n,
        beta,
    })
}

/// One row of the metric table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub feeder: String,
    pub observability: f64,
    pub n_outages: usize,
    pub report: AggregateReport,
    /// Scenarios whose inference failed and are not in `report`.
    pub failed: usize,
}

pub const METRIC_CSV_HEADER: &str = "feeder,observability,n_outages,scenarios,failed,accuracy,precision,recall,f1,system_accuracy,undefined_precision,undefined_recall";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

/// CSV with a header row; rows sorted by feeder, observability, outages.
pub fn metric_csv(rows: &[MetricRow]) -> String {
    let mut sorted: Vec<&MetricRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.feeder
            .cmp(&b.feeder)
            .then(a.observability.total_cmp(&b.observability))
            .then(a.n_outages.cmp(&b.n_outages))
    });
    let mut out = format!("{METRIC_CSV_HEADER}\n");
    for r in sorted {
        let a = &r.report;
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{},{},{},{:.6},{},{}",
            r.feeder,
            r.observability,
            r.n_outages,
            a.scenarios,
            r.failed,
            a.accuracy,
            opt(a.precision),
            opt(a.recall),
            opt(a.f1),
            a.system_accuracy,
            a.undefined_precision,
            a.undefined_recall
        )
        .unwrap();
    }
    out
}
