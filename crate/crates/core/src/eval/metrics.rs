use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Confusion counts with burst = present as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// One scored token: gold label and prediction, `true` = present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub label: bool,
    pub predicted: bool,
}

impl Item {
    pub fn cell(self) -> usize {
        match (self.label, self.predicted) {
            (true, true) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (false, false) => 3,
        }
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn from_items(items: &[Item]) -> Self {
        let mut c = [0u64; 4];
        for it in items {
            c[it.cell()] += 1;
        }
        Self::from_cells(c)
    }

    /// Cells in `[tp, fp, fn, tn]` order.
    pub fn from_cells(c: [u64; 4]) -> Self {
        Self { tp: c[0], fp: c[1], fn_: c[2], tn: c[3] }
    }

    pub fn cells(&self) -> [u64; 4] {
        [self.tp, self.fp, self.fn_, self.tn]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1Present,
    F1Absent,
    MacroF1,
}

impl Metric {
    pub const ALL: [Metric; 6] =
        [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1Present, Metric::F1Absent, Metric::MacroF1];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1Present => "f1_present",
            Metric::F1Absent => "f1_absent",
            Metric::MacroF1 => "macro_f1",
        }
    }

    /// Value on `c`, with zero-denominator ratios reported as 0.
    /// Panics on an empty table.
    pub fn value(self, c: &ConfusionCounts) -> f64 {
        let m = metrics(c);
        match self {
            Metric::Accuracy => m.accuracy,
            Metric::Precision => m.precision,
            Metric::Recall => m.recall,
            Metric::F1Present => m.f1_present,
            Metric::F1Absent => m.f1_absent,
            Metric::MacroF1 => m.macro_f1,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// Which ratios had a zero denominator (and were reported as 0).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1_present: bool,
    pub precision_absent: bool,
    pub recall_absent: bool,
    pub f1_absent: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.precision
            || self.recall
            || self.f1_present
            || self.precision_absent
            || self.recall_absent
            || self.f1_absent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub n: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_present: f64,
    pub f1_absent: f64,
    pub macro_f1: f64,
    pub flags: DegenerateFlags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn f1(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

/// Point estimates. Panics if the table is empty.
pub fn metrics(c: &ConfusionCounts) -> PointMetrics {
    let n = c.total();
    assert!(n > 0, "metrics of an empty confusion table");
    let (precision, fp_) = ratio(c.tp, c.tp + c.fp);
    let (recall, fr) = ratio(c.tp, c.tp + c.fn_);
    let (f1_present, ff) = f1(precision, recall);
    let (precision_absent, fpa) = ratio(c.tn, c.tn + c.fn_);
    let (recall_absent, fra) = ratio(c.tn, c.tn + c.fp);
    let (f1_absent, ffa) = f1(precision_absent, recall_absent);
    PointMetrics {
        n,
        accuracy: (c.tp + c.tn) as f64 / n as f64,
        precision,
        recall,
        f1_present,
        f1_absent,
        macro_f1: (f1_present + f1_absent) / 2.0,
        flags: DegenerateFlags {
            precision: fp_,
            recall: fr,
            f1_present: ff,
            precision_absent: fpa,
            recall_absent: fra,
            f1_absent: ffa,
        },
    }
}
