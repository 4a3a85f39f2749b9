//! Composite objectives `F = f + g` with smooth `f` and a separable weighted
//! L1 term `g(u) = sum_j w_j |u_j|`.

mod model;
mod quadratic;

pub use model::{ModelConfig, ModelProblem, NormChoice};
pub use quadratic::QuadraticL1;

use crate::error::Result;
use crate::hilbert::{BilinearForm, DualFunctional, GramOperator, PrimalVector};
use crate::scalar::{abs_increment, Scalar};

/// Values of the smooth part, the nonsmooth part and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEvaluation<T> {
    pub f_value: T,
    pub g_value: T,
    pub f_total: T,
}

impl<T: Scalar> ObjectiveEvaluation<T> {
    pub fn new(f_value: T, g_value: T) -> Self {
        Self { f_value, g_value, f_total: f_value + g_value }
    }
}

/// Optional lower convexity bounds of the second-order model (`kappa1`) and
/// of `g` (`kappa2`). `None` means unknown.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConvexityEstimates<T> {
    pub kappa1: Option<T>,
    pub kappa2: Option<T>,
}

impl<T: Scalar> ConvexityEstimates<T> {
    pub fn sum(&self) -> Option<T> {
        Some(self.kappa1? + self.kappa2?)
    }
}

/// Interface consumed by the subproblem solver and the outer iteration.
///
/// The nonsmooth part is fixed to a weighted L1 norm so that coordinate
/// minimization inside the smoother has a closed form.
pub trait CompositeProblem<T: Scalar> {
    fn gram(&self) -> &GramOperator<T>;

    /// Per-coefficient weights `w_j >= 0` of `g`.
    fn l1_weights(&self) -> &[T];

    /// `true` marks coefficients constrained to zero.
    fn mask(&self) -> &[bool];

    fn eval_f(&self, u: &PrimalVector<T>) -> Result<T>;

    fn eval_grad_f(&self, u: &PrimalVector<T>) -> Result<DualFunctional<T>>;

    fn eval_hessian(&self, u: &PrimalVector<T>) -> Result<BilinearForm<T>>;

    fn dim(&self) -> usize {
        self.gram().dim()
    }

    fn convexity(&self) -> ConvexityEstimates<T> {
        ConvexityEstimates { kappa1: None, kappa2: Some(T::zero()) }
    }

    fn eval_g(&self, u: &PrimalVector<T>) -> T {
        weighted_l1(self.l1_weights(), u.as_slice())
    }

    fn eval_objective(&self, u: &PrimalVector<T>) -> Result<ObjectiveEvaluation<T>> {
        Ok(ObjectiveEvaluation::new(self.eval_f(u)?, self.eval_g(u)))
    }

    /// The element of the subdifferential of `g` at `u` closest to `-grad_f`.
    fn min_norm_subgradient(&self, u: &PrimalVector<T>, grad_f: &DualFunctional<T>) -> DualFunctional<T> {
        min_norm_subgradient(self.l1_weights(), u, grad_f)
    }
}

pub fn weighted_l1<T: Scalar>(weights: &[T], u: &[T]) -> T {
    assert_eq!(weights.len(), u.len());
    weights.iter().zip(u).map(|(&w, &v)| w * v.abs()).sum()
}

/// `g(x + d) - g(x)` summed per coefficient to avoid cancellation.
pub fn weighted_l1_increment<T: Scalar>(weights: &[T], x: &[T], d: &[T]) -> T {
    weights.iter().zip(x).zip(d).map(|((&w, &c), &t)| w * abs_increment(c, t)).sum()
}

/// Componentwise: `w_j sign(u_j)` where `u_j != 0`, otherwise the projection
/// of `-grad_j` onto `[-w_j, w_j]`.
pub fn min_norm_subgradient<T: Scalar>(
    weights: &[T],
    u: &PrimalVector<T>,
    grad_f: &DualFunctional<T>,
) -> DualFunctional<T> {
    let mu = weights
        .iter()
        .zip(u.as_slice())
        .zip(grad_f.as_slice())
        .map(|((&w, &x), &g)| {
            if x > T::zero() {
                w
            } else if x < T::zero() {
                -w
            } else {
                (-g).max(-w).min(w)
            }
        })
        .collect();
    DualFunctional::from_vec(mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subgradient_signs_at_nonzero_entries() {
        let w = [2.0, 3.0, 1.0];
        let u = PrimalVector::from_vec(vec![1.0, -4.0, 0.5]);
        let g = DualFunctional::from_vec(vec![10.0, 10.0, -10.0]);
        assert_eq!(min_norm_subgradient(&w, &u, &g).as_slice(), &[2.0, -3.0, 1.0]);
    }

    #[test]
    fn subgradient_clamps_at_zero_entries() {
        let w = [0.5, 0.5, 0.5];
        let u = PrimalVector::zeros(3);
        assert_eq!(min_norm_subgradient(&w, &u, &DualFunctional::zeros(3)).as_slice(), &[0.0; 3]);
        let g = DualFunctional::from_vec(vec![-1.0, 0.2, 0.0]);
        assert_eq!(min_norm_subgradient(&w, &u, &g).as_slice(), &[0.5, -0.2, 0.0]);
    }

    #[test]
    fn increment_matches_direct_difference() {
        let w: [f64; 4] = [1.0, 2.0, 0.5, 4.0];
        let x = [1.0, -1.0, 0.0, 0.3];
        let d = [-2.0, 0.5, 0.25, 0.1];
        let direct = weighted_l1(&w, &[-1.0, -0.5, 0.25, 0.4]) - weighted_l1(&w, &x);
        assert!((weighted_l1_increment(&w, &x, &d) - direct).abs() < 1e-15);
    }
}
