//! Confusion metrics, BCa bootstrap intervals and evaluation reports.

mod bca;
mod metrics;

pub use bca::{
    acceleration, adjusted_levels, bca_from_replicates, bca_interval, bias_constant, jackknife, replicates_for,
    resample_indices, BcaConfig, Interval,
};
pub use metrics::{metrics, ConfusionCounts, DegenerateFlags, Item, Metric, PointMetrics};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("need at least 100 bootstrap replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("confidence level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub metric: Metric,
    pub point: f64,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: u64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_present: f64,
    pub f1_absent: f64,
    pub macro_f1: f64,
    pub flags: DegenerateFlags,
    pub intervals: Vec<MetricEstimate>,
}

/// Point metrics plus a BCa interval for every metric.
pub fn evaluate(items: &[Item], cfg: &BcaConfig) -> Result<EvalReport, EvalError> {
    let counts = ConfusionCounts::from_items(items);
    if counts.total() == 0 {
        return Err(EvalError::TooFewItems(0));
    }
    let m = metrics(&counts);
    let intervals = Metric::ALL
        .iter()
        .map(|&metric| {
            Ok(MetricEstimate { metric, point: metric.value(&counts), interval: bca_interval(items, metric, cfg)? })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport {
        n: m.n,
        counts,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1_present: m.f1_present,
        f1_absent: m.f1_absent,
        macro_f1: m.macro_f1,
        flags: m.flags,
        intervals,
    })
}

/// One row of the tabular export used for data-size plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: String,
    pub train_size: usize,
    pub metric: String,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

pub const CURVE_COLUMNS: [&str; 6] = ["model", "train_size", "metric", "point", "lo", "hi"];

impl EvalReport {
    pub fn rows(&self, model: &str, train_size: usize) -> Vec<CurveRow> {
        self.intervals
            .iter()
            .map(|e| CurveRow {
                model: model.to_string(),
                train_size,
                metric: e.metric.as_str().to_string(),
                point: e.point,
                lo: e.interval.lo,
                hi: e.interval.hi,
            })
            .collect()
    }

    pub fn estimate(&self, metric: Metric) -> Option<&MetricEstimate> {
        self.intervals.iter().find(|e| e.metric == metric)
    }
}

pub fn curve_csv(rows: &[CurveRow]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| EvalError::Io(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(CURVE_COLUMNS).map_err(|e| EvalError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn read_curve_csv(text: &str) -> Result<Vec<CurveRow>, EvalError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| EvalError::Io(e.to_string()))
}
