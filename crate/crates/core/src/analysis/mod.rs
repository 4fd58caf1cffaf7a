//! Fixed-effects analysis of burst probability over log duration:
//! penalized logistic B-splines per (annotation type × voicing), marginal
//! contrasts, and a nested-model deviance test.

mod bspline;
mod inference;
mod model;
mod pirls;
mod report;

pub use bspline::{difference_penalty, householder_null_space, Basis, ORDER};
pub use inference::{
    all_contrasts, binned_rates, deviance_test, marginal_contrast, smooth_by_type_test, wilson_interval, Contrast, DevianceTest, RateBin,
};
pub use model::{
    default_lambda_grid, fit_fixed_lambda, fit_reduced_model, fit_spline_model, fit_spline_model_at, predict_curve, range_grid,
    validate_rows, AnalysisRow, Block, Criterion, Curve, CurvePoint, ModelKind, SplineConfig, SplineFit,
};
pub use pirls::{gcv_score, ubre_score, PenalizedLogistic, PirlsFit, MAX_ITER, REL_TOL, RIDGE_FLOOR};
pub use report::{analyze, rows_from_manifests, AnalysisReport, GroupBins, RowsSummary};

use thiserror::Error;

use crate::token::Voicing;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no analysis rows")]
    Empty,
    #[error("outcome is constant across all rows; both burst values are required")]
    SingleOutcome,
    #[error("{0}")]
    InvalidRow(String),
    #[error("annotation types {a} and {b} cover different token sets")]
    Unpaired { a: String, b: String },
    #[error("group {annotation_type}/{voicing} needs at least 2 distinct durations")]
    GroupTooSmall { annotation_type: String, voicing: Voicing },
    #[error("durations are all identical")]
    TooFewDurations,
    #[error("spline basis needs K >= 4, got {0}")]
    BasisSize(usize),
    #[error("empty smoothing-parameter grid")]
    EmptyGrid,
    #[error("penalized information matrix is singular")]
    Singular,
    #[error("penalized IRLS did not converge; objective trace: {trace:?}")]
    NonConvergence { trace: Vec<f64> },
    #[error("in group {group}: {source}")]
    InGroup { group: String, source: Box<AnalysisError> },
    #[error("unknown group {annotation_type}/{voicing}")]
    UnknownGroup { annotation_type: String, voicing: Voicing },
    #[error("models are not nested")]
    NotNested,
    #[error("{n} rows cannot fill {bins} bins")]
    TooFewForBins { n: usize, bins: usize },
    #[error("{0}")]
    Io(String),
}

impl AnalysisError {
    fn in_group(self, group: &str) -> Self {
        AnalysisError::InGroup { group: group.to_string(), source: Box::new(self) }
    }
}
