use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::inference::{all_contrasts, binned_rates, smooth_by_type_test, Contrast, DevianceTest, RateBin};
use super::model::{fit_spline_model, predict_curve, range_grid, AnalysisRow, Curve, SplineConfig, SplineFit};
use super::AnalysisError;
use crate::dataset::Manifest;
use crate::token::Voicing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowsSummary {
    pub annotation_types: Vec<String>,
    pub tokens: usize,
    /// Tokens lacking a binary label in at least one source.
    pub dropped: usize,
}

/// Joins manifests labelled by different sources into paired rows. Only
/// tokens with a present/absent label in every source are kept; durations
/// come from the first source.
pub fn rows_from_manifests(sources: &[(String, Manifest)]) -> Result<(Vec<AnalysisRow>, RowsSummary), AnalysisError> {
    let Some((_, first)) = sources.first() else {
        return Err(AnalysisError::Empty);
    };
    let labels: Vec<BTreeMap<&str, bool>> = sources
        .iter()
        .map(|(_, m)| {
            m.records
                .iter()
                .filter(|r| !r.excluded)
                .filter_map(|r| r.burst.as_binary().map(|b| (r.token_id.as_str(), b)))
                .collect()
        })
        .collect();
    let all_ids: BTreeSet<&str> = sources.iter().flat_map(|(_, m)| m.records.iter().map(|r| r.token_id.as_str())).collect();
    let mut rows = Vec::new();
    let mut kept = 0;
    for r in &first.records {
        let id = r.token_id.as_str();
        if labels.iter().any(|l| !l.contains_key(id)) {
            continue;
        }
        kept += 1;
        for ((name, _), l) in sources.iter().zip(&labels) {
            rows.push(AnalysisRow {
                token_id: r.token_id.clone(),
                annotation_type: name.clone(),
                voicing: r.voicing,
                log_duration: r.duration().ln(),
                burst: l[id],
            });
        }
    }
    let summary = RowsSummary {
        annotation_types: sources.iter().map(|(n, _)| n.clone()).collect(),
        tokens: kept,
        dropped: all_ids.len() - kept,
    };
    Ok((rows, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBins {
    pub annotation_type: String,
    pub voicing: Voicing,
    pub bins: Vec<RateBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: SplineConfig,
    pub level: f64,
    pub full: SplineFit<f64>,
    /// Deviances of the two fits compared by `test`.
    pub test_full_deviance: f64,
    pub test_reduced_deviance: f64,
    pub curves: Vec<Curve>,
    pub contrasts: Vec<Contrast>,
    pub test: DevianceTest,
    pub bins: Vec<GroupBins>,
}

/// Full analysis: fits, curves over each voicing's range, all contrasts,
/// the by-type smooth deviance test, and binned empirical rates.
pub fn analyze(
    rows: &[AnalysisRow],
    cfg: &SplineConfig,
    level: f64,
    grid_points: usize,
    n_bins: usize,
) -> Result<AnalysisReport, AnalysisError> {
    let full: SplineFit<f64> = fit_spline_model(rows, cfg)?;
    let (test, test_full, test_reduced) = smooth_by_type_test(rows, cfg)?;
    let contrasts = all_contrasts(&full)?;
    let mut curves = Vec::new();
    let mut bins = Vec::new();
    for &v in full.bases.keys() {
        let grid = range_grid(&full, v, grid_points);
        for t in full.annotation_types() {
            curves.push(predict_curve(&full, &t, v, &grid, level)?);
            let group: Vec<AnalysisRow> =
                rows.iter().filter(|r| r.voicing == v && r.annotation_type == t).cloned().collect();
            let b = n_bins.min(group.len());
            bins.push(GroupBins { annotation_type: t.clone(), voicing: v, bins: binned_rates(&group, b)? });
        }
    }
    Ok(AnalysisReport {
        config: cfg.clone(),
        level,
        test_full_deviance: test_full.deviance,
        test_reduced_deviance: test_reduced.deviance,
        full,
        curves,
        contrasts,
        test,
        bins,
    })
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String, AnalysisError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| AnalysisError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| AnalysisError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[derive(Serialize)]
struct CurveCsv<'a> {
    annotation_type: &'a str,
    voicing: Voicing,
    log_duration: f64,
    probability: f64,
    lo: f64,
    hi: f64,
    extrapolated: bool,
}

#[derive(Serialize)]
struct BinCsv<'a> {
    annotation_type: &'a str,
    voicing: Voicing,
    lo_log_duration: f64,
    hi_log_duration: f64,
    n: usize,
    k: usize,
    rate: f64,
    lo: f64,
    hi: f64,
}

#[derive(Serialize)]
struct TestCsv {
    test: &'static str,
    chi2: f64,
    df: i64,
    p: f64,
    edf_full: f64,
    edf_reduced: f64,
    deviance_full: f64,
    deviance_reduced: f64,
}

impl AnalysisReport {
    pub fn curves_csv(&self) -> Result<String, AnalysisError> {
        to_csv(self.curves.iter().flat_map(|c| {
            c.points.iter().map(move |p| CurveCsv {
                annotation_type: &c.annotation_type,
                voicing: c.voicing,
                log_duration: p.log_duration,
                probability: p.probability,
                lo: p.lo,
                hi: p.hi,
                extrapolated: p.extrapolated,
            })
        }))
    }

    pub fn contrasts_csv(&self) -> Result<String, AnalysisError> {
        to_csv(self.contrasts.iter())
    }

    pub fn tests_csv(&self) -> Result<String, AnalysisError> {
        to_csv([TestCsv {
            test: "by_type_smooths",
            chi2: self.test.chi2,
            df: self.test.df,
            p: self.test.p,
            edf_full: self.test.edf_full,
            edf_reduced: self.test.edf_reduced,
            deviance_full: self.test_full_deviance,
            deviance_reduced: self.test_reduced_deviance,
        }])
    }

    pub fn bins_csv(&self) -> Result<String, AnalysisError> {
        to_csv(self.bins.iter().flat_map(|g| {
            g.bins.iter().map(move |b| BinCsv {
                annotation_type: &g.annotation_type,
                voicing: g.voicing,
                lo_log_duration: b.lo_log_duration,
                hi_log_duration: b.hi_log_duration,
                n: b.n,
                k: b.k,
                rate: b.rate,
                lo: b.lo,
                hi: b.hi,
            })
        }))
    }

    /// Plot-ready bundle: curves, binned rates, contrasts and the test.
    pub fn plot_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "level": self.level,
            "curves": self.curves,
            "bins": self.bins,
            "contrasts": self.contrasts,
            "test": self.test,
        }))
        .expect("plot data serializes")
    }
}
