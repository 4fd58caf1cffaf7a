//! Penalized IRLS for logistic models with a quadratic smoothing penalty.
//!
//! Objective: `−ℓ(θ) + λ θᵀSθ + ε‖θ‖²`, where `S` is zero outside the
//! smooth coefficients and `ε` is a fixed floor that keeps the problem
//! strictly convex when the data separate.

use crate::linalg::{Cholesky, Matrix};
use crate::numeric::{log1p_exp, sigmoid, Real};

use super::AnalysisError;

pub const MAX_ITER: usize = 200;
pub const REL_TOL: f64 = 1e-9;
pub const RIDGE_FLOOR: f64 = 1e-6;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone)]
pub struct PenalizedLogistic<'a, T> {
    pub x: &'a Matrix<T>,
    pub y: &'a [T],
    pub penalty: &'a Matrix<T>,
    pub lambda: T,
}

#[derive(Debug, Clone)]
pub struct PirlsFit<T> {
    pub theta: Vec<T>,
    /// `−2ℓ` at the optimum.
    pub deviance: T,
    /// Penalized objective after each accepted step.
    pub trace: Vec<T>,
    pub iterations: usize,
    /// Inverse of the penalized information `XᵀWX + 2λS + 2εI`.
    pub covariance: Matrix<T>,
    /// `tr(F)` with `F = V XᵀWX`.
    pub edf: T,
    /// `tr(2F − F²)`, the edf that matches the mean of a penalized
    /// deviance difference; used as chi-square degrees of freedom.
    pub ref_edf: T,
}

impl<T: Real> PenalizedLogistic<'_, T> {
    fn eta(&self, theta: &[T]) -> Vec<T> {
        self.x.matvec(theta)
    }

    pub fn deviance(&self, theta: &[T]) -> T {
        let eta = self.eta(theta);
        T::lit(2.0) * eta.iter().zip(self.y).map(|(&e, &y)| log1p_exp(e) - y * e).sum::<T>()
    }

    /// Pearson statistic `Σ (y − μ)² / (μ(1 − μ))`, the weighted residual
    /// sum of squares of the working model.
    pub fn pearson(&self, theta: &[T]) -> T {
        self.eta(theta)
            .iter()
            .zip(self.y)
            .map(|(&e, &y)| {
                let m = sigmoid(e);
                let v = (m * (T::one() - m)).max(T::epsilon());
                (y - m).powi(2) / v
            })
            .sum()
    }

    fn penalty_value(&self, theta: &[T]) -> T {
        let ridge: T = theta.iter().map(|&t| t * t).sum();
        self.lambda * self.penalty.quad_form(theta) + T::lit(RIDGE_FLOOR) * ridge
    }

    pub fn objective(&self, theta: &[T]) -> T {
        self.deviance(theta) / T::lit(2.0) + self.penalty_value(theta)
    }

    pub fn gradient(&self, theta: &[T]) -> Vec<T> {
        let eta = self.eta(theta);
        let r: Vec<T> = eta.iter().zip(self.y).map(|(&e, &y)| sigmoid(e) - y).collect();
        let mut g = self.x.t_matvec(&r);
        let st = self.penalty.matvec(theta);
        let two = T::lit(2.0);
        for j in 0..g.len() {
            g[j] = g[j] + two * self.lambda * st[j] + two * T::lit(RIDGE_FLOOR) * theta[j];
        }
        g
    }

    fn information(&self, theta: &[T]) -> (Matrix<T>, Matrix<T>) {
        let w: Vec<T> = self.eta(theta).iter().map(|&e| {
            let m = sigmoid(e);
            m * (T::one() - m)
        }).collect();
        let xtwx = self.x.weighted_gram(&w);
        let p = theta.len();
        let two = T::lit(2.0);
        let reg = self.penalty.scale(two * self.lambda).add(&Matrix::identity(p).scale(two * T::lit(RIDGE_FLOOR)));
        let h = xtwx.add(&reg);
        (xtwx, h)
    }

    /// Newton iterations from `start` with step halving; the objective is
    /// non-increasing along the trace.
    pub fn fit(&self, start: Option<&[T]>) -> Result<PirlsFit<T>, AnalysisError> {
        let p = self.x.cols();
        let mut theta = start.map(|s| s.to_vec()).unwrap_or_else(|| vec![T::zero(); p]);
        let mut obj = self.objective(&theta);
        let mut trace = vec![obj];
        let tol = T::lit(REL_TOL);
        for it in 1..=MAX_ITER {
            let g = self.gradient(&theta);
            let (_, h) = self.information(&theta);
            let chol = Cholesky::new(&h).ok_or(AnalysisError::Singular)?;
            let step = chol.solve(&g);
            let mut t = T::one();
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<T> = theta.iter().zip(&step).map(|(&a, &d)| a - t * d).collect();
                let o = self.objective(&cand);
                if o <= obj {
                    accepted = Some((cand, o));
                    break;
                }
                t = t / T::lit(2.0);
            }
            let Some((cand, o)) = accepted else {
                // no decrease representable: already at the floating-point optimum
                return Ok(self.finish(theta, trace, it));
            };
            let change = (obj - o).abs() / (o.abs() + T::lit(0.1));
            theta = cand;
            obj = o;
            trace.push(obj);
            if change < tol {
                return Ok(self.finish(theta, trace, it));
            }
        }
        Err(AnalysisError::NonConvergence { trace: trace.iter().map(|v| v.as_f64()).collect() })
    }

    fn finish(&self, theta: Vec<T>, trace: Vec<T>, iterations: usize) -> PirlsFit<T> {
        let (xtwx, h) = self.information(&theta);
        let covariance = Cholesky::new(&h).expect("penalized information is positive definite").inverse();
        let f = covariance.matmul(&xtwx);
        let edf = f.trace();
        let ref_edf = T::lit(2.0) * edf - f.matmul(&f).trace();
        PirlsFit { deviance: self.deviance(&theta), theta, trace, iterations, covariance, edf, ref_edf }
    }
}

/// Un-biased risk estimator for a known unit scale.
pub fn ubre_score<T: Real>(deviance: T, edf: T, n: usize) -> T {
    let n = T::from_usize_lossy(n);
    deviance / n + T::lit(2.0) * edf / n - T::one()
}

/// Generalized cross-validation score on the deviance scale.
pub fn gcv_score<T: Real>(deviance: T, edf: T, n: usize) -> T {
    let n = T::from_usize_lossy(n);
    n * deviance / (n - edf).powi(2)
}
