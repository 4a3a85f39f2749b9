//! Inexact solver for the regularized second-order subproblem
//!
//! ```text
//! min_δ  λ(δ) = f'(x)δ + ½ H(δ,δ) + ω/2 ‖δ‖² + g(x+δ) - g(x)
//! ```
//!
//! in the style of a truncated nonsmooth Newton multigrid method: every inner
//! iteration performs one exact nonsmooth Gauss-Seidel sweep over the scalar
//! coefficients, followed by a linear correction on the coefficients away
//! from the kinks of `g` and a monotone backtracking line search. The linear
//! correction uses Jacobi-preconditioned CG in place of a multigrid cycle.

use log::warn;

use crate::criteria::{BindingCriterion, CriteriaReport, InnerObservation, StoppingPolicy, Verdict};
use crate::error::{Error, Result};
use crate::hilbert::{BilinearForm, DualFunctional, GramOperator, PrimalVector};
use crate::problem::{weighted_l1_increment, CompositeProblem};
use crate::scalar::{abs_increment, soft_threshold, Scalar};
use crate::sparse::{pcg_restricted, CsrMatrix};

/// Lower clip for the contraction estimate.
pub const THETA_MIN: f64 = 0.05;
/// Upper clip for the contraction estimate.
pub const THETA_MAX: f64 = 0.95;
/// Number of trailing correction ratios averaged into the contraction estimate.
pub const THETA_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsolverOptions<T> {
    pub max_iterations: usize,
    /// Relative residual target of the linear correction.
    pub cg_rel_tol: T,
    pub cg_max_iterations: usize,
    /// Coefficients with `|x_j + Δs_j|` at or below this are treated as kink-active.
    pub truncation_tol: T,
    pub max_halvings: u32,
}

impl<T: Scalar> Default for SubsolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cg_rel_tol: T::lit(1e-2),
            cg_max_iterations: 200,
            truncation_tol: T::lit(1e-12),
            max_halvings: 20,
        }
    }
}

/// Data of one subproblem: base point, derivative, bilinear form and `ω`,
/// plus the L1 weights, mask and Gram operator of the surrounding problem.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a, T> {
    gram: &'a GramOperator<T>,
    weights: &'a [T],
    mask: &'a [bool],
    base: &'a PrimalVector<T>,
    grad: &'a DualFunctional<T>,
    omega: T,
    /// `H + ωR`
    system: CsrMatrix<T>,
    diag: Vec<T>,
}

impl<'a, T: Scalar> SubproblemSpec<'a, T> {
    pub fn new(
        gram: &'a GramOperator<T>,
        weights: &'a [T],
        mask: &'a [bool],
        base: &'a PrimalVector<T>,
        grad: &'a DualFunctional<T>,
        hess: &BilinearForm<T>,
        omega: T,
    ) -> Result<Self> {
        let n = gram.dim();
        for len in [weights.len(), mask.len(), base.len(), grad.len(), hess.size()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        if !(omega >= T::zero()) {
            return Err(Error::InvalidParameter(format!("omega must be nonnegative, got {omega}")));
        }
        let system =
            if omega == T::zero() { hess.matrix().clone() } else { hess.matrix().add_scaled(gram.matrix(), omega) };
        let diag = system.diagonal();
        Ok(Self { gram, weights, mask, base, grad, omega, system, diag })
    }

    pub fn from_problem<P: CompositeProblem<T>>(
        problem: &'a P,
        base: &'a PrimalVector<T>,
        grad: &'a DualFunctional<T>,
        hess: &BilinearForm<T>,
        omega: T,
    ) -> Result<Self> {
        Self::new(problem.gram(), problem.l1_weights(), problem.mask(), base, grad, hess, omega)
    }

    pub fn dim(&self) -> usize {
        self.gram.dim()
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn gram(&self) -> &GramOperator<T> {
        self.gram
    }

    pub fn base(&self) -> &PrimalVector<T> {
        self.base
    }

    pub fn grad(&self) -> &DualFunctional<T> {
        self.grad
    }

    pub fn weights(&self) -> &[T] {
        self.weights
    }

    pub fn mask(&self) -> &[bool] {
        self.mask
    }

    /// The matrix `H + ωR`.
    pub fn system(&self) -> &CsrMatrix<T> {
        &self.system
    }

    /// `λ(δ) = f'(x)δ + ½(H + ωR)(δ,δ) + g(x+δ) - g(x)`.
    pub fn eval_model(&self, delta: &PrimalVector<T>) -> Result<T> {
        if delta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: delta.len() });
        }
        let d = delta.as_slice();
        let value = self.grad.apply(delta)
            + T::lit(0.5) * self.system.quad_form(d)
            + weighted_l1_increment(self.weights, self.base.as_slice(), d);
        if !value.is_finite() {
            return Err(Error::NonFinite { element: 0 });
        }
        Ok(value)
    }

    /// Smooth-model residual `f'(x) + (H + ωR)δ`.
    fn residual(&self, delta: &[T]) -> Vec<T> {
        let mut r = self.system.mul_vec(delta);
        r.iter_mut().zip(self.grad.as_slice()).for_each(|(ri, &g)| *ri += g);
        r
    }
}

/// Iterate of the inner solver together with its convergence history.
#[derive(Debug, Clone)]
pub struct InnerState<T> {
    step: PrimalVector<T>,
    residual: Vec<T>,
    correction_norms: Vec<T>,
    theta: Option<T>,
    model_value: T,
    iterations: usize,
}

impl<T: Scalar> InnerState<T> {
    pub fn new(spec: &SubproblemSpec<'_, T>, initial: Option<PrimalVector<T>>) -> Result<Self> {
        let mut step = initial.unwrap_or_else(|| PrimalVector::zeros(spec.dim()));
        if step.len() != spec.dim() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), found: step.len() });
        }
        for (s, &m) in step.as_mut_slice().iter_mut().zip(spec.mask) {
            if m {
                *s = T::zero();
            }
        }
        let residual = spec.residual(step.as_slice());
        let model_value = spec.eval_model(&step)?;
        Ok(Self { step, residual, correction_norms: Vec::new(), theta: None, model_value, iterations: 0 })
    }

    pub fn step(&self) -> &PrimalVector<T> {
        &self.step
    }

    pub fn model_value(&self) -> T {
        self.model_value
    }

    pub fn theta(&self) -> Option<T> {
        self.theta
    }

    pub fn correction_norms(&self) -> &[T] {
        &self.correction_norms
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn last_correction_norm(&self) -> Option<T> {
        self.correction_norms.last().copied()
    }

    fn refresh(&mut self, spec: &SubproblemSpec<'_, T>) -> Result<()> {
        self.residual = spec.residual(self.step.as_slice());
        self.model_value = spec.eval_model(&self.step)?;
        Ok(())
    }
}

/// Target value `argmin_s ½a(s - c0)² + b(s - c0) + w|s|` of one coordinate.
#[inline]
fn prox_target<T: Scalar>(a: T, b: T, w: T, c0: T) -> Result<T> {
    if !(a > T::zero()) {
        return Err(Error::NonconvexCurvature { curvature: a.as_f64() });
    }
    Ok(soft_threshold(a * c0 - b, w) / a)
}

/// `argmin_t ½a t² + b t + w|c0 + t|`; requires `a > 0`.
pub fn scalar_prox<T: Scalar>(a: T, b: T, w: T, c0: T) -> Result<T> {
    Ok(prox_target(a, b, w, c0)? - c0)
}

/// One lexicographic nonsmooth Gauss-Seidel sweep with exact coordinate
/// minimization. Masked coefficients are skipped.
pub fn smoothing_sweep<T: Scalar>(spec: &SubproblemSpec<'_, T>, state: &mut InnerState<T>) -> Result<()> {
    let x = spec.base.as_slice();
    for j in 0..spec.dim() {
        if spec.mask[j] {
            continue;
        }
        let old = state.step[j];
        let target = prox_target(spec.diag[j], state.residual[j], spec.weights[j], x[j] + old)?;
        let new = target - x[j];
        let t = new - old;
        if t != T::zero() {
            state.step[j] = new;
            for (k, a) in spec.system.row(j) {
                state.residual[k] += t * a;
            }
        }
    }
    Ok(())
}

/// Linear correction on the coefficients away from kinks and the mask,
/// followed by backtracking on `λ` along the correction.
pub fn truncated_correction<T: Scalar>(
    spec: &SubproblemSpec<'_, T>,
    state: &mut InnerState<T>,
    opts: &SubsolverOptions<T>,
) -> Result<()> {
    let n = spec.dim();
    let x = spec.base.as_slice();
    let point: Vec<T> = (0..n).map(|j| x[j] + state.step[j]).collect();
    let free: Vec<bool> = (0..n).map(|j| !spec.mask[j] && point[j].abs() > opts.truncation_tol).collect();
    if !free.iter().any(|&f| f) {
        return Ok(());
    }
    let rhs: Vec<T> = (0..n)
        .map(|j| if free[j] { -(state.residual[j] + spec.weights[j] * point[j].signum()) } else { T::zero() })
        .collect();
    let cg = pcg_restricted(&spec.system, &free, &rhs, opts.cg_rel_tol, opts.cg_max_iterations)?;
    let dir = cg.solution;
    if dir.iter().all(|&v| v == T::zero()) {
        return Ok(());
    }
    let a_dir = spec.system.mul_vec(&dir);
    let slope = (0..n).fold(T::zero(), |s, j| s + state.residual[j] * dir[j]);
    let curvature = (0..n).fold(T::zero(), |s, j| s + dir[j] * a_dir[j]);
    let half = T::lit(0.5);
    let change = |t: T| -> T {
        let nonsmooth = (0..n)
            .filter(|&j| dir[j] != T::zero())
            .fold(T::zero(), |s, j| s + spec.weights[j] * abs_increment(point[j], t * dir[j]));
        t * slope + half * t * t * curvature + nonsmooth
    };
    let mut t = T::one();
    for _ in 0..=opts.max_halvings {
        if change(t) < T::zero() {
            state.step.as_mut_slice().iter_mut().zip(&dir).for_each(|(s, &d)| *s += t * d);
            state.residual.iter_mut().zip(&a_dir).for_each(|(r, &ad)| *r += t * ad);
            return Ok(());
        }
        t *= half;
    }
    Ok(())
}

/// Contraction estimate from the correction-norm history: geometric mean of
/// the trailing ratios `‖δ^j‖/‖δ^{j-1}‖`, clipped to `[THETA_MIN, THETA_MAX]`.
/// Undefined before three corrections are available.
pub fn estimate_theta<T: Scalar>(history: &[T]) -> Option<T> {
    if history.len() < 3 {
        return None;
    }
    let start = history.len().saturating_sub(THETA_WINDOW + 1);
    let window = &history[start..];
    let ratios: Vec<T> = window
        .windows(2)
        .map(|w| {
            if w[0] > T::zero() {
                w[1] / w[0]
            } else if w[1] > T::zero() {
                T::infinity()
            } else {
                T::zero()
            }
        })
        .collect();
    let k = T::from_usize(ratios.len()).unwrap();
    let mean = ratios.iter().fold(T::one(), |p, &r| p * r).powf(T::one() / k);
    let theta = if mean.is_nan() { T::lit(THETA_MAX) } else { mean };
    Some(theta.max(T::lit(THETA_MIN)).min(T::lit(THETA_MAX)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CriteriaSatisfied,
    ExactTolerance,
    IterationCap,
    NonconvexityDetected,
}

/// Outcome of an inner solve.
#[derive(Debug, Clone)]
pub struct StepResult<T> {
    pub step: PrimalVector<T>,
    pub model_value: T,
    pub step_norm: T,
    pub inner_iterations: usize,
    pub correction_norms: Vec<T>,
    pub theta: Option<T>,
    pub criteria_report: Option<CriteriaReport<T>>,
    pub binding: Option<BindingCriterion>,
    pub terminated_by: Termination,
}

pub fn solve_subproblem<T: Scalar>(
    spec: &SubproblemSpec<'_, T>,
    policy: &mut StoppingPolicy<T>,
    opts: &SubsolverOptions<T>,
) -> Result<StepResult<T>> {
    solve_subproblem_from(spec, policy, opts, None)
}

/// Like [`solve_subproblem`], starting from `initial` instead of zero.
pub fn solve_subproblem_from<T: Scalar>(
    spec: &SubproblemSpec<'_, T>,
    policy: &mut StoppingPolicy<T>,
    opts: &SubsolverOptions<T>,
    initial: Option<PrimalVector<T>>,
) -> Result<StepResult<T>> {
    let gram = spec.gram;
    let reference_norm = match policy.reference() {
        Some(r) => Some(gram.primal_norm(r)?),
        None => None,
    };
    let mut state = InnerState::new(spec, initial)?;
    let mut terminated_by = Termination::IterationCap;
    for i in 1..=opts.max_iterations {
        let before = state.step.clone();
        let outcome = smoothing_sweep(spec, &mut state).and_then(|_| truncated_correction(spec, &mut state, opts));
        match outcome {
            Ok(()) => {}
            Err(Error::NonconvexCurvature { .. }) => {
                state.step = before;
                terminated_by = Termination::NonconvexityDetected;
                break;
            }
            Err(e) => return Err(e),
        }
        state.refresh(spec)?;
        state.iterations = i;
        let correction_norm = gram.primal_norm(&state.step.minus(&before))?;
        let step_norm = gram.primal_norm(&state.step)?;
        state.correction_norms.push(correction_norm);
        state.theta = estimate_theta(&state.correction_norms);
        let e_rel = match (policy.reference(), reference_norm) {
            (Some(r), Some(rn)) if rn > T::zero() => Some(gram.primal_norm(&state.step.minus(r))? / rn),
            _ => None,
        };
        let obs = InnerObservation {
            iteration: i,
            correction_norm,
            step_norm,
            theta: state.theta,
            model_value: state.model_value,
            e_rel,
        };
        match policy.observe(&obs) {
            Verdict::Continue => {}
            Verdict::CriteriaSatisfied => {
                terminated_by = Termination::CriteriaSatisfied;
                break;
            }
            Verdict::ExactTolerance => {
                terminated_by = Termination::ExactTolerance;
                break;
            }
        }
    }
    if terminated_by == Termination::IterationCap {
        warn!("inner solver hit the iteration cap of {} (omega = {})", opts.max_iterations, spec.omega);
    }
    let step_norm = gram.primal_norm(&state.step)?;
    let binding = (terminated_by == Termination::CriteriaSatisfied).then(|| policy.binding_criterion()).flatten();
    Ok(StepResult {
        model_value: state.model_value,
        step_norm,
        inner_iterations: state.iterations,
        theta: state.theta,
        criteria_report: policy.reports().last().copied(),
        binding,
        terminated_by,
        correction_norms: state.correction_norms,
        step: state.step,
    })
}
