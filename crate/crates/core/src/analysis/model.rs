use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bspline::Basis;
use super::pirls::{gcv_score, ubre_score, PenalizedLogistic, PirlsFit};
use super::AnalysisError;
use crate::linalg::Matrix;
use crate::numeric::{normal_quantile, sigmoid, Real};
use crate::token::Voicing;

/// One token as labelled by one annotation source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub token_id: String,
    pub annotation_type: String,
    pub voicing: Voicing,
    pub log_duration: f64,
    pub burst: bool,
}

/// Smoothing-parameter selection score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `n·D / (n − edf)²` with `D` the deviance.
    Gcv,
    /// GCV on the working model: Pearson statistic in place of `D`.
    WorkingGcv,
    /// Known-scale risk `D/n + 2·edf/n − 1`.
    Ubre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub k: usize,
    pub lambda_grid: Vec<f64>,
    pub criterion: Criterion,
}

/// `10^-2 .. 10^4` in half-decade steps.
pub fn default_lambda_grid() -> Vec<f64> {
    (-4..=8).map(|i| 10f64.powf(i as f64 / 2.0)).collect()
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self { k: 10, lambda_grid: default_lambda_grid(), criterion: Criterion::WorkingGcv }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// A separate intercept and smooth per (annotation type × voicing).
    Full,
    /// Per voicing: one intercept per annotation type and a shared smooth.
    Reduced,
}

/// An independently fitted set of parameters. `theta` holds one
/// intercept per entry of `types`, then the `k − 1` constrained smooth
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Block<T> {
    pub voicing: Voicing,
    pub types: Vec<String>,
    pub lambda: T,
    pub theta: Vec<T>,
    pub covariance: Matrix<T>,
    pub deviance: T,
    pub edf: T,
    /// Reference degrees of freedom for likelihood-ratio tests.
    pub ref_edf: T,
    pub gcv: T,
    pub n: usize,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

impl<T: Real> Block<T> {
    pub fn intercept(&self, annotation_type: &str) -> Option<T> {
        self.types.iter().position(|t| t == annotation_type).map(|i| self.theta[i])
    }

    /// Smooth coefficients in the constrained parametrization.
    pub fn smooth(&self) -> &[T] {
        &self.theta[self.types.len()..]
    }

    /// Unconstrained B-spline coefficients `Z β̃`.
    pub fn spline_coefficients(&self, basis: &Basis<T>) -> Vec<T> {
        basis.z.matvec(self.smooth())
    }

    /// `βᵀ S β` for the smooth part (no λ).
    pub fn roughness(&self, basis: &Basis<T>) -> T {
        basis.penalty().quad_form(self.smooth())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SplineFit<T> {
    pub kind: ModelKind,
    pub k: usize,
    pub bases: BTreeMap<Voicing, Basis<T>>,
    pub blocks: Vec<Block<T>>,
    /// Log durations of the distinct tokens of each voicing class.
    pub reference: BTreeMap<Voicing, Vec<T>>,
    pub deviance: T,
    pub edf: T,
    pub ref_edf: T,
    pub n: usize,
}

fn group_key(r: &AnalysisRow) -> (String, Voicing) {
    (r.annotation_type.clone(), r.voicing)
}

/// Checks the paired design and the per-group preconditions.
pub fn validate_rows(rows: &[AnalysisRow]) -> Result<(), AnalysisError> {
    if rows.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if !(rows.iter().any(|r| r.burst) && rows.iter().any(|r| !r.burst)) {
        return Err(AnalysisError::SingleOutcome);
    }
    if let Some(r) = rows.iter().find(|r| !r.log_duration.is_finite()) {
        return Err(AnalysisError::InvalidRow(format!("token {} has non-finite log duration", r.token_id)));
    }
    let mut tokens: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut groups: BTreeMap<(String, Voicing), BTreeSet<u64>> = BTreeMap::new();
    for r in rows {
        if !tokens.entry(r.annotation_type.as_str()).or_default().insert(r.token_id.as_str()) {
            return Err(AnalysisError::InvalidRow(format!(
                "token {} appears twice for {}",
                r.token_id, r.annotation_type
            )));
        }
        groups.entry(group_key(r)).or_default().insert(r.log_duration.to_bits());
    }
    let mut sets = tokens.iter();
    let (first_type, first) = sets.next().expect("non-empty");
    for (t, s) in sets {
        if s != first {
            return Err(AnalysisError::Unpaired { a: first_type.to_string(), b: t.to_string() });
        }
    }
    for ((t, v), d) in &groups {
        if d.len() < 2 {
            return Err(AnalysisError::GroupTooSmall { annotation_type: t.clone(), voicing: *v });
        }
    }
    Ok(())
}

struct BlockData<T> {
    voicing: Voicing,
    types: Vec<String>,
    x: Matrix<T>,
    y: Vec<T>,
}

fn design<T: Real>(basis: &Basis<T>, types: &[String], rows: &[&AnalysisRow]) -> (Matrix<T>, Vec<T>) {
    let p = types.len() + basis.k - 1;
    let mut data = Vec::with_capacity(rows.len() * p);
    for r in rows {
        data.extend(types.iter().map(|t| if *t == r.annotation_type { T::one() } else { T::zero() }));
        data.extend(basis.eval_constrained(T::lit(r.log_duration)));
    }
    let y = rows.iter().map(|r| if r.burst { T::one() } else { T::zero() }).collect();
    (Matrix::from_rows(rows.len(), p, data), y)
}

fn fit_block<T: Real>(
    data: &BlockData<T>,
    basis: &Basis<T>,
    grid: &[f64],
    criterion: Criterion,
    group: &str,
) -> Result<Block<T>, AnalysisError> {
    let n_int = data.types.len();
    let p = n_int + basis.k - 1;
    let smooth_pen = basis.penalty();
    let mut penalty = Matrix::zeros(p, p);
    for a in 0..basis.k - 1 {
        for b in 0..basis.k - 1 {
            penalty[(n_int + a, n_int + b)] = smooth_pen[(a, b)];
        }
    }
    let mut best: Option<(T, T, PirlsFit<T>)> = None;
    let mut warm: Option<Vec<T>> = None;
    for &lambda in grid {
        let problem = PenalizedLogistic { x: &data.x, y: &data.y, penalty: &penalty, lambda: T::lit(lambda) };
        let fit = problem.fit(warm.as_deref()).map_err(|e| e.in_group(group))?;
        let n = data.y.len();
        let score = match criterion {
            Criterion::Gcv => gcv_score(fit.deviance, fit.edf, n),
            Criterion::WorkingGcv => gcv_score(problem.pearson(&fit.theta), fit.edf, n),
            Criterion::Ubre => ubre_score(fit.deviance, fit.edf, n),
        };
        warm = Some(fit.theta.clone());
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, T::lit(lambda), fit));
        }
    }
    let (gcv, lambda, fit) = best.ok_or(AnalysisError::EmptyGrid)?;
    Ok(Block {
        voicing: data.voicing,
        types: data.types.clone(),
        lambda,
        theta: fit.theta,
        covariance: fit.covariance,
        deviance: fit.deviance,
        edf: fit.edf,
        ref_edf: fit.ref_edf,
        gcv,
        n: data.y.len(),
        iterations: fit.iterations,
        trace: fit.trace.iter().map(|v| v.as_f64()).collect(),
    })
}

/// Fits one penalized block at a fixed λ (no GCV search).
pub fn fit_fixed_lambda<T: Real>(
    rows: &[AnalysisRow],
    k: usize,
    lambda: f64,
) -> Result<(Basis<T>, Block<T>), AnalysisError> {
    validate_rows(rows)?;
    let x: Vec<T> = rows.iter().map(|r| T::lit(r.log_duration)).collect();
    let basis = Basis::new(&x, k)?;
    let types: Vec<String> =
        rows.iter().map(|r| r.annotation_type.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let refs: Vec<&AnalysisRow> = rows.iter().collect();
    let (xm, y) = design(&basis, &types, &refs);
    let block = fit_block(&BlockData { voicing: rows[0].voicing, types, x: xm, y }, &basis, &[lambda], Criterion::Gcv, "fixed")?;
    Ok((basis, block))
}

fn fit_model<T: Real>(
    rows: &[AnalysisRow],
    cfg: &SplineConfig,
    kind: ModelKind,
    fixed: Option<&BTreeMap<Voicing, f64>>,
) -> Result<SplineFit<T>, AnalysisError> {
    validate_rows(rows)?;
    if cfg.lambda_grid.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    let mut by_voicing: BTreeMap<Voicing, Vec<&AnalysisRow>> = BTreeMap::new();
    for r in rows {
        by_voicing.entry(r.voicing).or_default().push(r);
    }
    let mut bases = BTreeMap::new();
    let mut reference = BTreeMap::new();
    for (v, rs) in &by_voicing {
        let x: Vec<T> = rs.iter().map(|r| T::lit(r.log_duration)).collect();
        bases.insert(*v, Basis::new(&x, cfg.k)?);
        let mut seen = BTreeSet::new();
        let refs: Vec<T> =
            rs.iter().filter(|r| seen.insert(r.token_id.as_str())).map(|r| T::lit(r.log_duration)).collect();
        reference.insert(*v, refs);
    }
    let mut jobs: Vec<(Voicing, Vec<String>, Vec<&AnalysisRow>)> = Vec::new();
    for (v, rs) in &by_voicing {
        let types: Vec<String> =
            rs.iter().map(|r| r.annotation_type.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        match kind {
            ModelKind::Full => {
                for t in types {
                    let sub: Vec<&AnalysisRow> = rs.iter().copied().filter(|r| r.annotation_type == t).collect();
                    jobs.push((*v, vec![t], sub));
                }
            }
            ModelKind::Reduced => jobs.push((*v, types, rs.clone())),
        }
    }
    let blocks: Vec<Block<T>> = jobs
        .par_iter()
        .map(|(v, types, rs)| {
            let basis = &bases[v];
            let (x, y) = design(basis, types, rs);
            let name = format!("{}/{}", types.join("+"), v);
            let grid = match fixed {
                Some(l) => vec![*l.get(v).ok_or(AnalysisError::EmptyGrid)?],
                None => cfg.lambda_grid.clone(),
            };
            fit_block(&BlockData { voicing: *v, types: types.clone(), x, y }, basis, &grid, cfg.criterion, &name)
        })
        .collect::<Result<_, _>>()?;
    let deviance = blocks.iter().map(|b| b.deviance).sum();
    let edf = blocks.iter().map(|b| b.edf).sum();
    let ref_edf = blocks.iter().map(|b| b.ref_edf).sum();
    Ok(SplineFit { kind, k: cfg.k, bases, blocks, reference, deviance, edf, ref_edf, n: rows.len() })
}

/// Separate penalized smooths per (annotation type × voicing), λ by GCV.
pub fn fit_spline_model<T: Real>(rows: &[AnalysisRow], cfg: &SplineConfig) -> Result<SplineFit<T>, AnalysisError> {
    fit_model(rows, cfg, ModelKind::Full, None)
}

/// The full model with every block of a voicing class held at the given λ.
pub fn fit_spline_model_at<T: Real>(
    rows: &[AnalysisRow],
    cfg: &SplineConfig,
    lambdas: &BTreeMap<Voicing, f64>,
) -> Result<SplineFit<T>, AnalysisError> {
    fit_model(rows, cfg, ModelKind::Full, Some(lambdas))
}

/// The nested model without by-type smooths: per voicing, type-specific
/// intercepts and one shared smooth.
pub fn fit_reduced_model<T: Real>(rows: &[AnalysisRow], cfg: &SplineConfig) -> Result<SplineFit<T>, AnalysisError> {
    fit_model(rows, cfg, ModelKind::Reduced, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub log_duration: f64,
    pub probability: f64,
    pub lo: f64,
    pub hi: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub annotation_type: String,
    pub voicing: Voicing,
    pub level: f64,
    pub points: Vec<CurvePoint>,
}

impl<T: Real> SplineFit<T> {
    pub fn block_index(&self, annotation_type: &str, voicing: Voicing) -> Option<usize> {
        self.blocks.iter().position(|b| b.voicing == voicing && b.types.iter().any(|t| t == annotation_type))
    }

    pub fn annotation_types(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.types.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Design row in the owning block's parametrization.
    pub fn design_row(&self, block: usize, annotation_type: &str, log_duration: T) -> Vec<T> {
        let b = &self.blocks[block];
        let mut row: Vec<T> =
            b.types.iter().map(|t| if t == annotation_type { T::one() } else { T::zero() }).collect();
        row.extend(self.bases[&b.voicing].eval_constrained(log_duration));
        row
    }

    pub fn linear_predictor(&self, annotation_type: &str, voicing: Voicing, log_duration: T) -> Option<(T, T)> {
        let bi = self.block_index(annotation_type, voicing)?;
        let row = self.design_row(bi, annotation_type, log_duration);
        let b = &self.blocks[bi];
        let eta = row.iter().zip(&b.theta).map(|(&a, &c)| a * c).sum();
        let var = b.covariance.quad_form(&row).max(T::zero());
        Some((eta, var.sqrt()))
    }
}

/// Fitted probability with delta-method pointwise intervals: the interval
/// is formed on the linear predictor and mapped through the sigmoid.
pub fn predict_curve<T: Real>(
    fit: &SplineFit<T>,
    annotation_type: &str,
    voicing: Voicing,
    grid: &[f64],
    level: f64,
) -> Result<Curve, AnalysisError> {
    if fit.block_index(annotation_type, voicing).is_none() {
        return Err(AnalysisError::UnknownGroup { annotation_type: annotation_type.to_string(), voicing });
    }
    let z = normal_quantile(0.5 + level / 2.0);
    let basis = &fit.bases[&voicing];
    let points = grid
        .iter()
        .map(|&x| {
            let (eta, se) = fit.linear_predictor(annotation_type, voicing, T::lit(x)).expect("group exists");
            let (eta, se) = (eta.as_f64(), se.as_f64());
            CurvePoint {
                log_duration: x,
                probability: sigmoid(eta),
                lo: sigmoid(eta - z * se),
                hi: sigmoid(eta + z * se),
                extrapolated: !basis.contains(T::lit(x)),
            }
        })
        .collect();
    Ok(Curve { annotation_type: annotation_type.to_string(), voicing, level, points })
}

/// Evenly spaced grid over the fitted range of `voicing`.
pub fn range_grid<T: Real>(fit: &SplineFit<T>, voicing: Voicing, n: usize) -> Vec<f64> {
    let b = &fit.bases[&voicing];
    let (lo, hi) = (b.lo.as_f64(), b.hi.as_f64());
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64).collect()
}
