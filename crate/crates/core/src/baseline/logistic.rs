//! L2-penalized logistic regression fitted by Newton's method (IRLS).
//!
//! Parameters are `θ = (bias, w₁..w_p)`; the objective is
//! `mean NLL + (l2 / 2)·‖w‖²` with the bias unpenalized.

use crate::linalg::{Cholesky, Matrix};
use crate::numeric::{log1p_exp, sigmoid, Real};

use super::BaselineError;

pub const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 40;
/// Weight magnitude past which an unpenalized fit is treated as diverging.
const SEPARATION_WEIGHT: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct LogisticProblem<T> {
    /// Design without the intercept column.
    pub x: Matrix<T>,
    pub y: Vec<T>,
    pub l2: T,
}

#[derive(Debug, Clone)]
pub struct LogisticFit<T> {
    pub theta: Vec<T>,
    pub iterations: usize,
    /// Objective after each accepted step, starting at θ = 0.
    pub loss_trace: Vec<T>,
}

impl<T: Real> LogisticProblem<T> {
    pub fn new(x: Matrix<T>, y: Vec<T>, l2: T) -> Self {
        assert_eq!(x.rows(), y.len());
        Self { x, y, l2 }
    }

    pub fn n_params(&self) -> usize {
        self.x.cols() + 1
    }

    fn eta(&self, theta: &[T], i: usize) -> T {
        theta[0] + self.x.row(i).iter().zip(&theta[1..]).map(|(&a, &b)| a * b).sum::<T>()
    }

    pub fn loss(&self, theta: &[T]) -> T {
        let n = T::from_usize_lossy(self.y.len());
        let nll: T = (0..self.y.len())
            .map(|i| {
                let e = self.eta(theta, i);
                log1p_exp(e) - self.y[i] * e
            })
            .sum();
        let pen: T = theta[1..].iter().map(|&w| w * w).sum();
        nll / n + self.l2 / T::lit(2.0) * pen
    }

    pub fn gradient(&self, theta: &[T]) -> Vec<T> {
        let n = T::from_usize_lossy(self.y.len());
        let mut g = vec![T::zero(); self.n_params()];
        for i in 0..self.y.len() {
            let r = sigmoid(self.eta(theta, i)) - self.y[i];
            g[0] = g[0] + r;
            for (gj, &xij) in g[1..].iter_mut().zip(self.x.row(i)) {
                *gj = *gj + r * xij;
            }
        }
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = *gj / n;
            if j > 0 {
                *gj = *gj + self.l2 * theta[j];
            }
        }
        g
    }

    pub fn hessian(&self, theta: &[T]) -> Matrix<T> {
        let n = T::from_usize_lossy(self.y.len());
        let p = self.n_params();
        let mut h = Matrix::zeros(p, p);
        let mut z = vec![T::one(); p];
        for i in 0..self.y.len() {
            let mu = sigmoid(self.eta(theta, i));
            let w = mu * (T::one() - mu) / n;
            z[1..].copy_from_slice(self.x.row(i));
            for a in 0..p {
                for b in 0..=a {
                    h[(a, b)] = h[(a, b)] + w * z[a] * z[b];
                }
            }
        }
        for a in 0..p {
            if a > 0 {
                h[(a, a)] = h[(a, a)] + self.l2;
            }
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        h
    }

    fn tolerance() -> T {
        T::lit(1e-8).max(T::epsilon() * T::lit(10.0))
    }

    fn classifies_all(&self, theta: &[T]) -> bool {
        (0..self.y.len()).all(|i| {
            let e = self.eta(theta, i);
            e != T::zero() && (e > T::zero()) == (self.y[i] > T::lit(0.5))
        })
    }

    fn separated(&self, theta: &[T]) -> bool {
        theta[1..].iter().any(|w| w.abs().as_f64() > SEPARATION_WEIGHT) && self.classifies_all(theta)
    }

    fn finish(&self, theta: Vec<T>, iterations: usize, trace: Vec<T>) -> Result<LogisticFit<T>, BaselineError> {
        // without a penalty, a strict perfect classifier is never a minimum:
        // scaling θ up lowers the loss further
        if self.l2 == T::zero() && self.classifies_all(&theta) {
            return Err(BaselineError::Separation);
        }
        Ok(LogisticFit { theta, iterations, loss_trace: trace })
    }

    /// Newton iterations with step halving; every accepted step leaves the
    /// objective non-increasing.
    pub fn fit(&self) -> Result<LogisticFit<T>, BaselineError> {
        let mut theta = vec![T::zero(); self.n_params()];
        let mut loss = self.loss(&theta);
        let mut trace = vec![loss];
        let tol = Self::tolerance();
        for it in 0..MAX_ITER {
            let g = self.gradient(&theta);
            let gmax = g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            if gmax < tol {
                return self.finish(theta, it, trace);
            }
            if self.l2 == T::zero() && self.separated(&theta) {
                return Err(BaselineError::Separation);
            }
            let h = self.hessian(&theta);
            let chol = Cholesky::new(&h).ok_or(if self.l2 == T::zero() {
                BaselineError::Separation
            } else {
                BaselineError::SingularHessian
            })?;
            let step = chol.solve(&g);
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<T> = theta.iter().zip(&step).map(|(&a, &d)| a - t * d).collect();
                let l = self.loss(&cand);
                if l <= loss {
                    theta = cand;
                    loss = l;
                    accepted = true;
                    break;
                }
                t = t / T::lit(2.0);
            }
            if !accepted {
                // at the floating-point floor of the objective
                if gmax < tol.sqrt() {
                    return self.finish(theta, it, trace);
                }
                return Err(BaselineError::NonConvergence { iterations: it, gradient: gmax.as_f64() });
            }
            trace.push(loss);
        }
        if self.l2 == T::zero() && self.separated(&theta) {
            return Err(BaselineError::Separation);
        }
        let gmax = self.gradient(&theta).iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if gmax < tol {
            self.finish(theta, MAX_ITER, trace)
        } else {
            Err(BaselineError::NonConvergence { iterations: MAX_ITER, gradient: gmax.as_f64() })
        }
    }
}
