use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{fit_reduced_model, fit_spline_model_at, AnalysisRow, ModelKind, SplineConfig, SplineFit};
use super::AnalysisError;
use crate::numeric::{chi2_upper_tail, holm_adjust, normal_quantile, sigmoid, two_sided_p, Real};
use crate::token::Voicing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub type_a: String,
    pub type_b: String,
    pub voicing: Voicing,
    /// Mean fitted P(present) for `type_a` minus that for `type_b`.
    pub delta: f64,
    pub se: f64,
    pub z: f64,
    pub p_unadjusted: f64,
    pub p_adjusted: f64,
}

/// Mean probability over the reference durations and its gradient with
/// respect to the owning block's parameters.
fn mean_probability<T: Real>(fit: &SplineFit<T>, t: &str, v: Voicing) -> Option<(usize, T, Vec<T>)> {
    let bi = fit.block_index(t, v)?;
    let reference = &fit.reference[&v];
    let m = T::from_usize_lossy(reference.len());
    let p = fit.blocks[bi].theta.len();
    let mut mean = T::zero();
    let mut grad = vec![T::zero(); p];
    for &x in reference {
        let row = fit.design_row(bi, t, x);
        let eta: T = row.iter().zip(&fit.blocks[bi].theta).map(|(&a, &b)| a * b).sum();
        let mu = sigmoid(eta);
        mean = mean + mu;
        let w = mu * (T::one() - mu);
        for (g, r) in grad.iter_mut().zip(&row) {
            *g = *g + w * *r;
        }
    }
    Some((bi, mean / m, grad.into_iter().map(|g| g / m).collect()))
}

fn raw_contrast<T: Real>(fit: &SplineFit<T>, a: &str, b: &str, v: Voicing) -> Result<(f64, f64), AnalysisError> {
    let unknown = |t: &str| AnalysisError::UnknownGroup { annotation_type: t.to_string(), voicing: v };
    let (ba, ma, ga) = mean_probability(fit, a, v).ok_or_else(|| unknown(a))?;
    let (bb, mb, gb) = mean_probability(fit, b, v).ok_or_else(|| unknown(b))?;
    if a == b {
        return Ok((0.0, 0.0));
    }
    let var = if ba == bb {
        let g: Vec<T> = ga.iter().zip(&gb).map(|(&x, &y)| x - y).collect();
        fit.blocks[ba].covariance.quad_form(&g)
    } else {
        // independent blocks: the joint covariance is block-diagonal
        fit.blocks[ba].covariance.quad_form(&ga) + fit.blocks[bb].covariance.quad_form(&gb)
    };
    Ok(((ma - mb).as_f64(), var.max(T::zero()).sqrt().as_f64()))
}

/// Every pairwise type contrast within each voicing class, with Holm
/// adjustment across the whole family.
pub fn all_contrasts<T: Real>(fit: &SplineFit<T>) -> Result<Vec<Contrast>, AnalysisError> {
    let types = fit.annotation_types();
    let mut out = Vec::new();
    for &v in fit.bases.keys() {
        for i in 0..types.len() {
            for j in i + 1..types.len() {
                let (delta, se) = raw_contrast(fit, &types[i], &types[j], v)?;
                let z = if se > 0.0 { delta / se } else { 0.0 };
                out.push(Contrast {
                    type_a: types[i].clone(),
                    type_b: types[j].clone(),
                    voicing: v,
                    delta,
                    se,
                    z,
                    p_unadjusted: if se > 0.0 { two_sided_p(z) } else { 1.0 },
                    p_adjusted: 0.0,
                });
            }
        }
    }
    let adjusted = holm_adjust(&out.iter().map(|c| c.p_unadjusted).collect::<Vec<_>>());
    for (c, p) in out.iter_mut().zip(adjusted) {
        c.p_adjusted = p;
    }
    Ok(out)
}

/// Marginal difference `type_a − type_b` over the observed durations of
/// `voicing`, Holm-adjusted within the family of all pairwise contrasts.
pub fn marginal_contrast<T: Real>(
    fit: &SplineFit<T>,
    type_a: &str,
    type_b: &str,
    voicing: Voicing,
) -> Result<Contrast, AnalysisError> {
    if type_a == type_b {
        raw_contrast(fit, type_a, type_b, voicing)?;
        return Ok(Contrast {
            type_a: type_a.into(),
            type_b: type_b.into(),
            voicing,
            delta: 0.0,
            se: 0.0,
            z: 0.0,
            p_unadjusted: 1.0,
            p_adjusted: 1.0,
        });
    }
    let all = all_contrasts(fit)?;
    if let Some(c) = all.iter().find(|c| c.voicing == voicing && c.type_a == type_a && c.type_b == type_b) {
        return Ok(c.clone());
    }
    let c = all
        .into_iter()
        .find(|c| c.voicing == voicing && c.type_a == type_b && c.type_b == type_a)
        .ok_or(AnalysisError::UnknownGroup { annotation_type: type_a.to_string(), voicing })?;
    Ok(Contrast { type_a: type_a.into(), type_b: type_b.into(), delta: -c.delta, z: -c.z, ..c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevianceTest {
    pub chi2: f64,
    pub df: i64,
    pub p: f64,
    pub edf_full: f64,
    pub edf_reduced: f64,
}

fn nested<T: Real>(full: &SplineFit<T>, reduced: &SplineFit<T>) -> bool {
    if full.n != reduced.n || full.bases != reduced.bases {
        return false;
    }
    let groups = |f: &SplineFit<T>| {
        let mut g: Vec<(String, Voicing)> =
            f.blocks.iter().flat_map(|b| b.types.iter().map(move |t| (t.clone(), b.voicing))).collect();
        g.sort();
        g
    };
    if groups(full) != groups(reduced) {
        return false;
    }
    // each full block must sit inside one reduced block
    full.blocks.iter().all(|fb| {
        reduced.blocks.iter().any(|rb| rb.voicing == fb.voicing && fb.types.iter().all(|t| rb.types.contains(t)))
    }) && !(full.kind == ModelKind::Reduced && reduced.kind == ModelKind::Full)
}

/// Likelihood-ratio style comparison of nested penalized fits; `df` is the
/// rounded difference in reference effective degrees of freedom.
///
/// The chi-square reference is only calibrated when both fits share their
/// smoothing parameters; [`smooth_by_type_test`] arranges that.
pub fn deviance_test<T: Real>(full: &SplineFit<T>, reduced: &SplineFit<T>) -> Result<DevianceTest, AnalysisError> {
    if !nested(full, reduced) {
        return Err(AnalysisError::NotNested);
    }
    let chi2 = (reduced.deviance - full.deviance).as_f64();
    let edf_full = full.ref_edf.as_f64();
    let edf_reduced = reduced.ref_edf.as_f64();
    let df = (edf_full - edf_reduced).round() as i64;
    let p = if df <= 0 || chi2 <= 0.0 { 1.0 } else { chi2_upper_tail(chi2, df as f64) };
    Ok(DevianceTest { chi2, df, p, edf_full, edf_reduced })
}

/// Tests dropping the by-type smooths. The reduced model picks λ per
/// voicing class; the full model is refitted with its blocks at that λ so
/// the deviance difference reflects the by-type terms rather than
/// differences in selected smoothness.
pub fn smooth_by_type_test(
    rows: &[AnalysisRow],
    cfg: &SplineConfig,
) -> Result<(DevianceTest, SplineFit<f64>, SplineFit<f64>), AnalysisError> {
    let reduced: SplineFit<f64> = fit_reduced_model(rows, cfg)?;
    let lambdas: BTreeMap<Voicing, f64> = reduced.blocks.iter().map(|b| (b.voicing, b.lambda)).collect();
    let full: SplineFit<f64> = fit_spline_model_at(rows, cfg, &lambdas)?;
    let test = deviance_test(&full, &reduced)?;
    Ok((test, full, reduced))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, level: f64) -> (f64, f64) {
    let z = normal_quantile(0.5 + level / 2.0);
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBin {
    pub lo_log_duration: f64,
    pub hi_log_duration: f64,
    pub n: usize,
    pub k: usize,
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Empirical burst rates in `n_bins` equal-count duration bins (sizes
/// differ by at most one) with Wilson 95% intervals.
pub fn binned_rates(rows: &[AnalysisRow], n_bins: usize) -> Result<Vec<RateBin>, AnalysisError> {
    if n_bins == 0 || rows.len() < n_bins {
        return Err(AnalysisError::TooFewForBins { n: rows.len(), bins: n_bins });
    }
    let mut sorted: Vec<&AnalysisRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.log_duration.total_cmp(&b.log_duration));
    let n = sorted.len();
    Ok((0..n_bins)
        .map(|b| {
            let slice = &sorted[b * n / n_bins..(b + 1) * n / n_bins];
            let k = slice.iter().filter(|r| r.burst).count();
            let (lo, hi) = wilson_interval(k, slice.len(), 0.95);
            RateBin {
                lo_log_duration: slice[0].log_duration,
                hi_log_duration: slice[slice.len() - 1].log_duration,
                n: slice.len(),
                k,
                rate: k as f64 / slice.len() as f64,
                lo,
                hi,
            }
        })
        .collect())
}
