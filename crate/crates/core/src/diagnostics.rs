//! Reference computations for tests and diagnostic runs: tightly solved
//! steps, composite gradient mappings and spectral constants. None of this
//! is needed by the method itself.

use nalgebra::DMatrix;

use crate::criteria::StoppingPolicy;
use crate::error::{Error, Result};
use crate::hilbert::{BilinearForm, DualFunctional, GramOperator, PrimalVector};
use crate::problem::CompositeProblem;
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::subsolver::{solve_subproblem, SubproblemSpec, SubsolverOptions, Termination};

/// Inner iteration cap of reference solves.
pub const TIGHT_MAX_ITERATIONS: usize = 2000;

/// Largest problem handled by the dense eigensolver.
pub const MAX_DENSE_DOFS: usize = 200;

fn tight_options<T: Scalar>() -> SubsolverOptions<T> {
    SubsolverOptions { max_iterations: TIGHT_MAX_ITERATIONS, cg_rel_tol: T::lit(1e-10), ..SubsolverOptions::default() }
}

/// Minimizer of the subproblem, iterated until `‖δ‖ <= tol (1 + ‖Δs‖)`.
pub fn tight_solve<T: Scalar>(spec: &SubproblemSpec<'_, T>, tol: T) -> Result<PrimalVector<T>> {
    let mut policy = StoppingPolicy::tight(tol);
    let res = solve_subproblem(spec, &mut policy, &tight_options())?;
    match res.terminated_by {
        Termination::NonconvexityDetected => Err(Error::NonconvexCurvature { curvature: f64::NAN }),
        _ => Ok(res.step),
    }
}

/// `‖Δx - Δs‖_X / ‖Δx‖_X` with `Δx` the tightly solved step of `spec`.
pub fn true_relative_error<T: Scalar>(
    spec: &SubproblemSpec<'_, T>,
    inexact_step: &PrimalVector<T>,
    tight_tol: T,
) -> Result<T> {
    let exact = tight_solve(spec, tight_tol)?;
    let gram = spec.gram();
    let denom = gram.primal_norm(&exact)?;
    if denom == T::zero() {
        return Err(Error::UndefinedRatio);
    }
    Ok(gram.primal_norm(&exact.minus(inexact_step))? / denom)
}

fn zero_form<T: Scalar>(gram: &GramOperator<T>) -> BilinearForm<T> {
    BilinearForm::new(CsrMatrix::zeros(gram.matrix().pattern().clone()))
}

/// `P_ψ^H(ℓ) = argmin_z ψ(z) + ½H(z,z) - ℓ(z)` for `ψ` the weighted L1 term
/// of `problem`, solved to `tol`.
pub fn scaled_prox<T: Scalar, P: CompositeProblem<T>>(
    problem: &P,
    hess: &BilinearForm<T>,
    ell: &DualFunctional<T>,
    tol: T,
) -> Result<PrimalVector<T>> {
    let origin = PrimalVector::zeros(problem.dim());
    let minus_ell = ell.scaled(-T::one());
    let spec = SubproblemSpec::from_problem(problem, &origin, &minus_ell, hess, T::zero())?;
    tight_solve(&spec, tol)
}

/// Second-order model `F̂_{x,ω}(y) = f(x) + f'(x)(y-x) + ½(H + ωR)(y-x, y-x) + g(y)`.
#[derive(Debug, Clone, Copy)]
pub struct ModelAt<'a, T> {
    pub base: &'a PrimalVector<T>,
    pub grad: &'a DualFunctional<T>,
    pub hess: &'a BilinearForm<T>,
    pub omega: T,
}

#[derive(Debug, Clone, Copy)]
pub enum MappingTarget<'a, T> {
    Objective,
    Model(ModelAt<'a, T>),
}

#[derive(Debug, Clone, Copy)]
pub struct GradientMappingQuery<'a, T> {
    pub target: MappingTarget<'a, T>,
    pub tau: T,
    pub point: &'a PrimalVector<T>,
}

/// Derivative of the smooth part of the target at `y`.
fn smooth_derivative<T: Scalar, P: CompositeProblem<T>>(
    problem: &P,
    target: &MappingTarget<'_, T>,
    y: &PrimalVector<T>,
) -> Result<DualFunctional<T>> {
    match target {
        MappingTarget::Objective => problem.eval_grad_f(y),
        MappingTarget::Model(m) => {
            let d = y.minus(m.base);
            let mut out = m.grad.plus(&m.hess.apply(&d));
            if m.omega != T::zero() {
                out.axpy(m.omega, &problem.gram().apply(&d)?);
            }
            Ok(out)
        }
    }
}

/// Composite gradient mapping
/// `G_τ(y) = -τ argmin_δ [φ'(y)δ + τ/2‖δ‖² + ψ(y+δ) - ψ(y)]`,
/// where `φ` is the smooth part of the target and `ψ = g`. The reference
/// step is solved to `tol`.
pub fn composite_gradient_mapping_with_tol<T: Scalar, P: CompositeProblem<T>>(
    problem: &P,
    query: &GradientMappingQuery<'_, T>,
    tol: T,
) -> Result<PrimalVector<T>> {
    if !(query.tau > T::zero()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {}", query.tau)));
    }
    let derivative = smooth_derivative(problem, &query.target, query.point)?;
    let zero = zero_form(problem.gram());
    let spec = SubproblemSpec::from_problem(problem, query.point, &derivative, &zero, query.tau)?;
    Ok(tight_solve(&spec, tol)?.scaled(-query.tau))
}

pub fn composite_gradient_mapping<T: Scalar, P: CompositeProblem<T>>(
    problem: &P,
    query: &GradientMappingQuery<'_, T>,
) -> Result<PrimalVector<T>> {
    composite_gradient_mapping_with_tol(problem, query, T::lit(1e-14))
}

/// Same mapping in prox form, `τ[y - P_ψ^{τR}(τRy - φ'(y))]`.
pub fn composite_gradient_mapping_via_prox<T: Scalar, P: CompositeProblem<T>>(
    problem: &P,
    query: &GradientMappingQuery<'_, T>,
    tol: T,
) -> Result<PrimalVector<T>> {
    let gram = problem.gram();
    let derivative = smooth_derivative(problem, &query.target, query.point)?;
    let ell = gram.apply(query.point)?.scaled(query.tau).minus(&derivative);
    let mut scaled_gram = gram.matrix().clone();
    scaled_gram.scale(query.tau);
    let z = scaled_prox(problem, &BilinearForm::new(scaled_gram), &ell, tol)?;
    Ok(query.point.minus(&z).scaled(query.tau))
}

/// Largest absolute and smallest eigenvalue of `H v = λ R v` restricted to
/// the unmasked coefficients, i.e. `‖H‖` and `κ₁` measured in the `R` norm.
pub fn spectral_bounds<T: Scalar>(hess: &BilinearForm<T>, gram: &GramOperator<T>, mask: &[bool]) -> Result<(T, T)> {
    let free: Vec<usize> = (0..gram.dim()).filter(|&i| !mask[i]).collect();
    let m = free.len();
    if m > MAX_DENSE_DOFS {
        return Err(Error::InvalidParameter(format!("{m} free dofs exceed the dense limit {MAX_DENSE_DOFS}")));
    }
    if m == 0 {
        return Ok((T::zero(), T::zero()));
    }
    let sub = |a: &CsrMatrix<T>| DMatrix::from_fn(m, m, |i, j| a.get(free[i], free[j]).as_f64());
    let r = sub(gram.matrix());
    let h = sub(hess.matrix());
    let chol = nalgebra::Cholesky::new(r).ok_or(Error::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite { row: 0, pivot: 0.0 })?;
    let c = &linv * h * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    Ok((T::lit(max), T::lit(min)))
}

/// Two-sided Lipschitz check of the model gradient mapping,
/// `τ(1-𝓗)‖y-z‖ <= ‖G(y) - G(z)‖ <= τ(1+𝓗)‖y-z‖` with
/// `τ = ω + ½(‖H‖+κ₁)` and `𝓗 = (‖H‖-κ₁) / (2(τ+κ₂))`.
pub fn gradient_mapping_bounds_check<T: Scalar, P: CompositeProblem<T>>(
    problem: &P,
    x: &PrimalVector<T>,
    omega: T,
    y: &PrimalVector<T>,
    z: &PrimalVector<T>,
) -> Result<bool> {
    let gram = problem.gram();
    let grad = problem.eval_grad_f(x)?;
    let hess = problem.eval_hessian(x)?;
    let (norm_h, kappa1) = spectral_bounds(&hess, gram, problem.mask())?;
    let kappa2 = problem.convexity().kappa2.unwrap_or(T::zero());
    let tau = omega + T::lit(0.5) * (norm_h + kappa1);
    let h_const = (norm_h - kappa1) / (T::lit(2.0) * (tau + kappa2));
    let model = MappingTarget::Model(ModelAt { base: x, grad: &grad, hess: &hess, omega });
    let gy = composite_gradient_mapping(problem, &GradientMappingQuery { target: model, tau, point: y })?;
    let gz = composite_gradient_mapping(problem, &GradientMappingQuery { target: model, tau, point: z })?;
    let lhs = gram.primal_norm(&gy.minus(&gz))?;
    let dist = gram.primal_norm(&y.minus(z))?;
    let slack = T::lit(1e-6);
    let floor = T::lit(1e-10) * tau;
    let lower = tau * (T::one() - h_const) * dist * (T::one() - slack) - floor;
    let upper = tau * (T::one() + h_const) * dist * (T::one() + slack) + floor;
    Ok(lower <= lhs && lhs <= upper)
}
