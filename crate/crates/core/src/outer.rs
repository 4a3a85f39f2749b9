//! Globalized outer iteration: trial steps from the inexact subproblem
//! solver, acceptance by sufficient decrease, and the `ω`/`η` schedules.

use std::fmt;

use log::{debug, info};

use crate::criteria::{
    dual_norm_of_residual, sufficient_decrease, BindingCriterion, CriteriaReport, StoppingMode, StoppingPolicy,
    DEFAULT_OMEGA_TILDE_MAX,
};
use crate::diagnostics::tight_solve;
use crate::error::{Error, Result};
use crate::hilbert::PrimalVector;
use crate::problem::CompositeProblem;
use crate::scalar::Scalar;
use crate::subsolver::{solve_subproblem_from, SubproblemSpec, SubsolverOptions, Termination};

/// Inner stopping rule used for trial steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    /// Relative error and subgradient criteria with forcing term `η_k`.
    #[default]
    Inexact,
    /// Inner iteration converged to round-off.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterConfig<T> {
    pub gamma: T,
    pub omega0: T,
    pub eta0: T,
    /// Stop once `(1+ω)‖Δs‖ < epsilon`.
    pub epsilon: T,
    /// Stop once `(1+ω)|λ| < lambda_stop`.
    pub lambda_stop: T,
    pub omega_tilde_max: T,
    /// Accepted-step values of `ω` below this become zero.
    pub omega_zero_threshold: T,
    /// Value taken by `ω = 0` on rejection.
    pub omega_reset: T,
    pub eta_floor: T,
    pub max_outer: usize,
    pub max_rejections_per_step: usize,
    pub mode: SolveMode,
    /// Record true relative errors against tightly solved reference steps.
    pub diagnostics: bool,
    /// Tolerance of the reference solves in diagnostic runs.
    pub reference_tol: T,
    /// Start the solve after a rejection from the rejected step.
    pub warm_start: bool,
    pub subsolver: SubsolverOptions<T>,
}

impl<T: Scalar> Default for OuterConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(0.5),
            omega0: T::one(),
            eta0: T::lit(0.9),
            epsilon: T::lit(1e-9),
            lambda_stop: T::lit(1e-13),
            omega_tilde_max: T::lit(DEFAULT_OMEGA_TILDE_MAX),
            omega_zero_threshold: T::lit(1e-8),
            omega_reset: T::lit(1e-4),
            eta_floor: T::lit(1e-12),
            max_outer: 200,
            max_rejections_per_step: 60,
            mode: SolveMode::Inexact,
            diagnostics: false,
            reference_tol: T::lit(1e-12),
            warm_start: false,
            subsolver: SubsolverOptions::default(),
        }
    }
}

impl<T: Scalar> OuterConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.omega0 >= T::zero()) {
            return bad("omega0 must be nonnegative");
        }
        if !(self.eta0 > T::zero() && self.eta0 < T::one()) {
            return bad("eta0 must lie in (0, 1)");
        }
        if !(self.eta_floor > T::zero() && self.eta_floor <= self.eta0) {
            return bad("eta_floor must lie in (0, eta0]");
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("lambda_stop", self.lambda_stop),
            ("omega_tilde_max", self.omega_tilde_max),
            ("omega_zero_threshold", self.omega_zero_threshold),
            ("omega_reset", self.omega_reset),
            ("reference_tol", self.reference_tol),
        ] {
            if !(v > T::zero()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.max_outer == 0 || self.max_rejections_per_step == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }
}

/// One trial step, accepted or declined.
#[derive(Debug, Clone)]
pub struct IterationRecord<T> {
    /// Outer index: number of steps accepted before this trial.
    pub k: usize,
    pub omega: T,
    pub eta: T,
    /// `‖Δs_k‖_X`
    pub correction_norm: T,
    /// `F(x_k + Δs_k)`
    pub energy: T,
    /// `λ_{x,ω}(Δs_k)`
    pub model_value: T,
    pub inner_iterations: usize,
    pub accepted: bool,
    pub omega_tilde: Option<T>,
    pub e_est: Option<T>,
    pub e_rel: Option<T>,
    /// Consecutive accepted steps including this one (zero when declined).
    pub consecutive_successes: u32,
    pub binding: Option<BindingCriterion>,
    pub inner_termination: Termination,
    /// Criteria reports of every inner iteration.
    pub inner_trace: Vec<CriteriaReport<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    CorrectionNorm,
    ModelValue,
    MaxOuter,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CorrectionNorm => "correction-norm",
            Self::ModelValue => "model-value",
            Self::MaxOuter => "max-outer",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunReport<T> {
    pub records: Vec<IterationRecord<T>>,
    pub initial_energy: T,
    pub final_iterate: PrimalVector<T>,
    pub final_energy: T,
    pub termination: TerminationReason,
}

impl<T: Scalar> RunReport<T> {
    pub fn accepted(&self) -> impl Iterator<Item = &IterationRecord<T>> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted().count()
    }

    pub fn declined_steps(&self) -> usize {
        self.records.len() - self.accepted_steps()
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }
}

#[derive(Debug, Clone)]
pub enum RunError<T> {
    /// Sufficient decrease failed `max_rejections_per_step` times in a row.
    TooManyRejections {
        last: Box<IterationRecord<T>>,
        records: Vec<IterationRecord<T>>,
    },
    Evaluation(Error),
}

impl<T: Scalar> fmt::Display for RunError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooManyRejections { last, .. } => write!(
                f,
                "step {} rejected too many times (last omega = {:e}, model value = {:e})",
                last.k, last.omega, last.model_value
            ),
            Self::Evaluation(e) => write!(f, "{e}"),
        }
    }
}

impl<T: Scalar> std::error::Error for RunError<T> {}

impl<T> From<Error> for RunError<T> {
    fn from(e: Error) -> Self {
        Self::Evaluation(e)
    }
}

/// `ω (½)^{n²}`, flushed to zero below `threshold`.
pub fn update_omega_on_accept<T: Scalar>(omega: T, n: u32, threshold: T) -> T {
    let exponent = i32::try_from(n.saturating_mul(n)).unwrap_or(i32::MAX);
    let next = omega * T::lit(0.5).powi(exponent);
    if next < threshold {
        T::zero()
    } else {
        next
    }
}

pub fn update_omega_on_reject<T: Scalar>(omega: T, omega_reset: T) -> T {
    if omega > T::zero() {
        omega * T::lit(2.0)
    } else {
        omega_reset
    }
}

pub fn update_eta_on_accept<T: Scalar>(eta: T, floor: T) -> T {
    (T::lit(0.6) * eta).max(floor)
}

pub fn stopping_check<T: Scalar>(
    omega: T,
    correction_norm: T,
    model_value: T,
    epsilon: T,
    lambda_stop: T,
) -> Option<TerminationReason> {
    let scale = T::one() + omega;
    if scale * correction_norm < epsilon {
        Some(TerminationReason::CorrectionNorm)
    } else if scale * model_value.abs() < lambda_stop {
        Some(TerminationReason::ModelValue)
    } else {
        None
    }
}

/// Runs the method from `x₀ = 0`.
///
/// The stopping test is applied to every non-degenerate trial step. A step
/// that triggers it is taken if it also passes sufficient decrease, so runs
/// near round-off end instead of cycling through rejections.
pub fn run<T: Scalar, P: CompositeProblem<T>>(
    problem: &P,
    config: &OuterConfig<T>,
) -> std::result::Result<RunReport<T>, RunError<T>> {
    config.validate()?;
    let gram = problem.gram();
    let mut x = PrimalVector::zeros(problem.dim());
    let mut energy = problem.eval_objective(&x)?.f_total;
    let initial_energy = energy;
    let mut omega = config.omega0;
    let mut eta = config.eta0;
    let mut successes = 0u32;
    let mut records: Vec<IterationRecord<T>> = Vec::new();

    for k in 0..config.max_outer {
        let grad = problem.eval_grad_f(&x)?;
        let hess = problem.eval_hessian(&x)?;
        let mu = problem.min_norm_subgradient(&x, &grad);
        let dual_norm = dual_norm_of_residual(gram, &grad, &mu)?;
        let mut warm: Option<PrimalVector<T>> = None;
        let mut rejections = 0;
        loop {
            let spec = SubproblemSpec::from_problem(problem, &x, &grad, &hess, omega)?;
            let mode = match config.mode {
                SolveMode::Inexact => StoppingMode::Inexact { eta },
                SolveMode::Exact => StoppingMode::Exact,
            };
            let mut policy = StoppingPolicy::new(mode, config.omega_tilde_max, dual_norm * dual_norm);
            if config.diagnostics {
                match tight_solve(&spec, config.reference_tol) {
                    Ok(reference) => policy = policy.with_reference(reference),
                    Err(Error::NonconvexCurvature { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let initial = if config.warm_start { warm.take() } else { None };
            let result = solve_subproblem_from(&spec, &mut policy, &config.subsolver, initial)?;
            let admissible = result.terminated_by != Termination::NonconvexityDetected;
            let trial = x.plus(&result.step);
            let trial_energy = match problem.eval_objective(&trial) {
                Ok(e) => e.f_total,
                // overflow at the trial point counts as a failed decrease test
                Err(Error::NonFinite { .. } | Error::NonFiniteNode { .. }) => T::infinity(),
                Err(e) => return Err(e.into()),
            };
            let lambda = result.model_value;
            let accepted = admissible
                && trial_energy.is_finite()
                && lambda < T::zero()
                && sufficient_decrease(trial_energy, energy, lambda, config.gamma);
            let last = result.criteria_report;
            let mut record = IterationRecord {
                k,
                omega,
                eta,
                correction_norm: result.step_norm,
                energy: trial_energy,
                model_value: lambda,
                inner_iterations: result.inner_iterations,
                accepted,
                omega_tilde: last.and_then(|r| r.omega_tilde),
                e_est: last.and_then(|r| r.e_est),
                e_rel: last.and_then(|r| r.e_rel),
                consecutive_successes: 0,
                binding: result.binding,
                inner_termination: result.terminated_by,
                inner_trace: policy.into_reports(),
            };
            let stop = if admissible && trial_energy.is_finite() {
                stopping_check(omega, result.step_norm, lambda, config.epsilon, config.lambda_stop)
            } else {
                None
            };
            debug!(
                "k={k} omega={omega:e} eta={eta:e} |ds|={:e} lambda={lambda:e} F={trial_energy:e} inner={} accepted={accepted}",
                result.step_norm, result.inner_iterations
            );
            if accepted {
                successes += 1;
                record.consecutive_successes = successes;
                x = trial;
                energy = trial_energy;
                omega = update_omega_on_accept(omega, successes, config.omega_zero_threshold);
                eta = update_eta_on_accept(eta, config.eta_floor);
            }
            records.push(record);
            if let Some(reason) = stop {
                info!("terminated by {reason} after {} accepted steps, F = {energy:e}", k + usize::from(accepted));
                return Ok(RunReport {
                    records,
                    initial_energy,
                    final_iterate: x,
                    final_energy: energy,
                    termination: reason,
                });
            }
            if accepted {
                break;
            }
            successes = 0;
            rejections += 1;
            if rejections >= config.max_rejections_per_step {
                let last = Box::new(records.last().cloned().expect("a record was just pushed"));
                return Err(RunError::TooManyRejections { last, records });
            }
            omega = update_omega_on_reject(omega, config.omega_reset);
            warm = Some(result.step);
        }
    }
    Ok(RunReport {
        records,
        initial_energy,
        final_iterate: x,
        final_energy: energy,
        termination: TerminationReason::MaxOuter,
    })
}
