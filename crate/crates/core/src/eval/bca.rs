//! Bias-corrected and accelerated (BCa) bootstrap intervals over items.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConfusionCounts, EvalError, Item, Metric};
use crate::numeric::{normal_cdf, normal_quantile, quantile_type7};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaConfig {
    pub level: f64,
    pub b: usize,
    pub seed: u64,
}

impl Default for BcaConfig {
    fn default() -> Self {
        Self { level: 0.95, b: 2000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub b: usize,
    pub seed: u64,
    pub z0: f64,
    pub acceleration: f64,
    /// Every replicate equal: the interval collapses to the point.
    pub degenerate: bool,
    /// Zero jackknife spread: acceleration set to 0.
    pub acceleration_undefined: bool,
}

/// Resample indices for replicate `k`: `n` draws with replacement.
pub fn resample_indices(n: usize, seed: u64, k: usize) -> Vec<usize> {
    let mut r = rng::substream(seed, "bca", k as u64);
    (0..n).map(|_| r.gen_range(0..n)).collect()
}

/// Bias constant from the replicate distribution, ties counted half.
/// The proportion is clamped to `[0.5/B, 1 − 0.5/B]` so z0 stays finite.
pub fn bias_constant(theta_hat: f64, replicates: &[f64]) -> f64 {
    let b = replicates.len() as f64;
    let below = replicates.iter().filter(|&&t| t < theta_hat).count() as f64;
    let ties = replicates.iter().filter(|&&t| t == theta_hat).count() as f64;
    let prop = ((below + 0.5 * ties) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    normal_quantile(prop)
}

/// Jackknife acceleration; `None` when the leave-one-out values do not vary.
pub fn acceleration(jackknife: &[f64]) -> Option<f64> {
    let mean = jackknife.iter().sum::<f64>() / jackknife.len() as f64;
    let d: Vec<f64> = jackknife.iter().map(|t| mean - t).collect();
    let s2: f64 = d.iter().map(|x| x * x).sum();
    let s3: f64 = d.iter().map(|x| x * x * x).sum();
    if s2 <= 0.0 {
        return None;
    }
    Some(s3 / (6.0 * s2.powf(1.5)))
}

/// Adjusted lower and upper quantile levels.
pub fn adjusted_levels(z0: f64, a: f64, level: f64) -> (f64, f64) {
    let alpha = 1.0 - level;
    let adj = |z: f64| normal_cdf(z0 + (z0 + z) / (1.0 - a * (z0 + z)));
    (adj(normal_quantile(alpha / 2.0)), adj(normal_quantile(1.0 - alpha / 2.0)))
}

/// BCa interval from precomputed replicate and jackknife statistics.
/// Passing `force` overrides `(z0, a)`, which with `(0, 0)` gives the
/// percentile interval.
pub fn bca_from_replicates(
    theta_hat: f64,
    replicates: &[f64],
    jackknife: &[f64],
    level: f64,
    seed: u64,
    force: Option<(f64, f64)>,
) -> Interval {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let degenerate = sorted.first() == sorted.last();
    let (a_est, a_undefined) = match acceleration(jackknife) {
        Some(a) => (a, false),
        None => (0.0, true),
    };
    let (z0, a) = force.unwrap_or((bias_constant(theta_hat, &sorted), a_est));
    if degenerate {
        return Interval {
            lo: theta_hat,
            hi: theta_hat,
            level,
            b,
            seed,
            z0,
            acceleration: a,
            degenerate,
            acceleration_undefined: a_undefined,
        };
    }
    let (a1, a2) = adjusted_levels(z0, a, level);
    Interval {
        lo: quantile_type7(&sorted, a1),
        hi: quantile_type7(&sorted, a2),
        level,
        b,
        seed,
        z0,
        acceleration: a,
        degenerate,
        acceleration_undefined: a_undefined,
    }
}

/// Statistic on each leave-one-out table.
pub fn jackknife(items: &[Item], metric: Metric) -> Vec<f64> {
    let full = ConfusionCounts::from_items(items).cells();
    // one value per cell; items in the same cell share it
    let per_cell: Vec<Option<f64>> = (0..4)
        .map(|c| {
            (full[c] > 0).then(|| {
                let mut cells = full;
                cells[c] -= 1;
                metric.value(&ConfusionCounts::from_cells(cells))
            })
        })
        .collect();
    items.iter().map(|it| per_cell[it.cell()].expect("cell occupied")).collect()
}

/// Replicate statistics for explicit resample index sets.
pub fn replicates_for(items: &[Item], metric: Metric, indices: &[Vec<usize>]) -> Vec<f64> {
    indices
        .par_iter()
        .map(|idx| {
            let mut c = [0u64; 4];
            for &i in idx {
                c[items[i].cell()] += 1;
            }
            metric.value(&ConfusionCounts::from_cells(c))
        })
        .collect()
}

fn check(items: &[Item], cfg: &BcaConfig) -> Result<(), EvalError> {
    if items.len() < 2 {
        return Err(EvalError::TooFewItems(items.len()));
    }
    if cfg.b < 100 {
        return Err(EvalError::TooFewReplicates(cfg.b));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(EvalError::InvalidLevel(cfg.level));
    }
    Ok(())
}

/// BCa interval for `metric` with item-level resampling. Replicates run in
/// parallel; each draws from its own stream so the result does not depend
/// on scheduling.
pub fn bca_interval(items: &[Item], metric: Metric, cfg: &BcaConfig) -> Result<Interval, EvalError> {
    check(items, cfg)?;
    let n = items.len();
    let reps: Vec<f64> = (0..cfg.b)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(cfg.seed, "bca", k as u64);
            let mut c = [0u64; 4];
            for _ in 0..n {
                c[items[r.gen_range(0..n)].cell()] += 1;
            }
            metric.value(&ConfusionCounts::from_cells(c))
        })
        .collect();
    let theta = metric.value(&ConfusionCounts::from_items(items));
    Ok(bca_from_replicates(theta, &reps, &jackknife(items, metric), cfg.level, cfg.seed, None))
}
