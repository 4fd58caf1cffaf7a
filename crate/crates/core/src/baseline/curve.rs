//! Accuracy as a function of training-set size, in the curve CSV schema
//! shared with the neural ladder.

use thiserror::Error;

use super::{train_baseline, BaselineError, FeatureVector};
use crate::eval::{evaluate, BcaConfig, CurveRow, EvalError, EvalReport, Item};

#[derive(Debug, Error)]
pub enum CurveError {
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training size {size} needs {per_label} tokens of each label; have {present} present, {absent} absent")]
    TooFew { size: usize, per_label: usize, present: usize, absent: usize },
}

/// The first `size` tokens of `train` taken alternately from each label,
/// so smaller subsets nest inside larger ones.
pub fn balanced_prefix<T: Copy>(train: &[(FeatureVector<T>, bool)], size: usize) -> Result<Vec<(FeatureVector<T>, bool)>, CurveError> {
    let pos: Vec<_> = train.iter().filter(|(_, y)| *y).copied().collect();
    let neg: Vec<_> = train.iter().filter(|(_, y)| !*y).copied().collect();
    let per_label = size.div_ceil(2);
    if pos.len() < per_label || neg.len() < size / 2 {
        return Err(CurveError::TooFew { size, per_label, present: pos.len(), absent: neg.len() });
    }
    Ok((0..size).map(|i| if i % 2 == 0 { pos[i / 2] } else { neg[i / 2] }).collect())
}

/// Trains one model per size on nested balanced prefixes of `train` and
/// evaluates each on `test`.
pub fn data_size_curve(
    train: &[(FeatureVector<f64>, bool)],
    test: &[(FeatureVector<f64>, bool)],
    sizes: &[usize],
    l2: f64,
    bca: &BcaConfig,
) -> Result<Vec<(usize, EvalReport)>, CurveError> {
    sizes
        .iter()
        .map(|&size| {
            let model = train_baseline(&balanced_prefix(train, size)?, l2, bca.seed)?;
            let items: Vec<Item> =
                test.iter().map(|(f, y)| Item { label: *y, predicted: model.probability(f) > 0.5 }).collect();
            Ok((size, evaluate(&items, bca)?))
        })
        .collect()
}

pub fn curve_rows(model: &str, curve: &[(usize, EvalReport)]) -> Vec<CurveRow> {
    curve.iter().flat_map(|(size, r)| r.rows(model, *size)).collect()
}
