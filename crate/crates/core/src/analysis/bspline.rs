//! Cubic B-spline basis with quantile knots, a sum-to-zero constraint and
//! a second-order difference penalty.
//!
//! The differences are divided differences over the Greville abscissae, so
//! with uneven knots the penalty still vanishes exactly on straight lines in
//! `x`. For equal spacing they reduce to the usual `c[j] − 2c[j+1] + c[j+2]`.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::linalg::Matrix;
use crate::numeric::{quantile_type7, Real};

pub const ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Basis<T> {
    /// Number of basis functions.
    pub k: usize,
    /// Full knot vector, boundary knots repeated `ORDER` times.
    pub knots: Vec<T>,
    pub lo: T,
    pub hi: T,
    /// `k × (k − 1)` null-space basis of the centring constraint.
    pub z: Matrix<T>,
}

impl<T: Real> Basis<T> {
    /// Knots at quantiles of `x`; falls back to equal spacing when the
    /// quantiles are not strictly inside the range and increasing.
    /// The centring constraint makes the smooth sum to zero over `x`.
    pub fn new(x: &[T], k: usize) -> Result<Self, AnalysisError> {
        if k < ORDER {
            return Err(AnalysisError::BasisSize(k));
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite durations"));
        let lo = sorted[0];
        let hi = *sorted.last().expect("non-empty");
        if !(hi > lo) {
            return Err(AnalysisError::TooFewDurations);
        }
        let n_interior = k - ORDER;
        let mut interior: Vec<T> =
            (1..=n_interior).map(|j| quantile_type7(&sorted, j as f64 / (n_interior + 1) as f64)).collect();
        let ok = interior.iter().all(|&t| t > lo && t < hi) && interior.windows(2).all(|w| w[1] > w[0]);
        if !ok {
            interior = (1..=n_interior)
                .map(|j| lo + (hi - lo) * T::from_usize_lossy(j) / T::from_usize_lossy(n_interior + 1))
                .collect();
        }
        let mut knots = vec![lo; ORDER];
        knots.extend(interior);
        knots.extend(std::iter::repeat(hi).take(ORDER));
        let mut basis = Self { k, knots, lo, hi, z: Matrix::zeros(k, k - 1) };
        let mut col_sums = vec![T::zero(); k];
        for &xi in x {
            for (s, v) in col_sums.iter_mut().zip(basis.eval(xi)) {
                *s = *s + v;
            }
        }
        basis.z = householder_null_space(&col_sums);
        Ok(basis)
    }

    /// The `k` basis values at `x`, clamped into `[lo, hi]`.
    pub fn eval(&self, x: T) -> Vec<T> {
        let t = &self.knots;
        let k = self.k;
        let x = x.max(self.lo).min(self.hi);
        // span index i with t[i] <= x < t[i+1]
        let mut i = ORDER - 1;
        while i < k - 1 && x >= t[i + 1] {
            i += 1;
        }
        let mut n = [T::zero(); ORDER];
        let mut left = [T::zero(); ORDER];
        let mut right = [T::zero(); ORDER];
        n[0] = T::one();
        for d in 1..ORDER {
            left[d] = x - t[i + 1 - d];
            right[d] = t[i + d] - x;
            let mut saved = T::zero();
            for r in 0..d {
                let temp = n[r] / (right[r + 1] + left[d - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[d - r] * temp;
            }
            n[d] = saved;
        }
        let mut out = vec![T::zero(); k];
        out[i + 1 - ORDER..=i].copy_from_slice(&n);
        out
    }

    /// Constrained basis row `B(x) Z`, length `k − 1`.
    pub fn eval_constrained(&self, x: T) -> Vec<T> {
        let b = self.eval(x);
        (0..self.k - 1).map(|c| (0..self.k).map(|r| b[r] * self.z[(r, c)]).sum()).collect()
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Knot averages: coefficient `j` sits at `greville()[j]`, and
    /// coefficients linear in these give a straight line.
    pub fn greville(&self) -> Vec<T> {
        let m = T::from_usize_lossy(ORDER - 1);
        (0..self.k).map(|j| self.knots[j + 1..j + ORDER].iter().copied().sum::<T>() / m).collect()
    }

    /// `Zᵀ DᵀD Z` with `D` the second-difference operator on the
    /// unconstrained coefficients.
    pub fn penalty(&self) -> Matrix<T> {
        let s = difference_penalty(&self.greville());
        self.z.transpose().matmul(&s).matmul(&self.z)
    }
}

/// `DᵀD` for second divided differences of coefficients placed at the
/// strictly increasing `at`, scaled by the squared mean spacing.
pub fn difference_penalty<T: Real>(at: &[T]) -> Matrix<T> {
    let k = at.len();
    let mean_h = (at[k - 1] - at[0]) / T::from_usize_lossy(k - 1);
    let mut d = Matrix::zeros(k - 2, k);
    for r in 0..k - 2 {
        let h0 = at[r + 1] - at[r];
        let h1 = at[r + 2] - at[r + 1];
        let scale = T::lit(2.0) * mean_h * mean_h / (h0 + h1);
        d[(r, r)] = scale / h0;
        d[(r, r + 1)] = -scale * (T::one() / h0 + T::one() / h1);
        d[(r, r + 2)] = scale / h1;
    }
    d.transpose().matmul(&d)
}

/// Columns 2..k of the Householder reflection taking `c` to a multiple of
/// e₁; they span the orthogonal complement of `c`.
pub fn householder_null_space<T: Real>(c: &[T]) -> Matrix<T> {
    let k = c.len();
    let norm = c.iter().map(|&v| v * v).sum::<T>().sqrt();
    let mut v = c.to_vec();
    let sign = if c[0] >= T::zero() { T::one() } else { -T::one() };
    v[0] = v[0] + sign * norm;
    let vv: T = v.iter().map(|&a| a * a).sum();
    let mut z = Matrix::zeros(k, k - 1);
    for r in 0..k {
        for col in 1..k {
            let id = if r == col { T::one() } else { T::zero() };
            z[(r, col - 1)] = id - T::lit(2.0) * v[r] * v[col] / vv;
        }
    }
    z
}
