//! Inexactness criteria for the inner solve and the sufficient decrease test.
//!
//! Two cheap tests decide when an inner iterate `Δs^i` is good enough:
//!
//! * the relative error estimate, which bounds `‖Δx - Δs^i‖ / ‖Δx‖` from the
//!   last correction norm and an estimated contraction rate `θ` of the inner
//!   solver, and must stay below the forcing term `η`;
//! * the subgradient criterion, which compares the model decrease with the
//!   decrease of a closed-form step on the linear model `f'(x) + μ` and
//!   demands that the implied regularization `ω̃` stays below `ω̃_max`.

use crate::error::Result;
use crate::hilbert::{checked_sqrt, DualFunctional, GramOperator, PrimalVector};
use crate::scalar::Scalar;

/// Default upper bound for `ω̃`.
pub const DEFAULT_OMEGA_TILDE_MAX: f64 = 1e8;
/// Correction-norm threshold of the exact mode, relative to `1 + ‖Δs‖`.
pub const EXACT_CORRECTION_TOL: f64 = 1e-14;
/// Relative error estimate threshold of the exact mode.
pub const EXACT_ESTIMATE_TOL: f64 = 1e-12;

/// Upper bound `θ/(1-θ)‖δ‖ / (‖Δs‖ - θ/(1-θ)‖δ‖)` on the relative error of
/// the current inner iterate. `None` when `θ` is unknown or the denominator
/// is not positive.
pub fn relative_error_estimate<T: Scalar>(delta_norm: T, step_norm: T, theta: Option<T>) -> Option<T> {
    let theta = theta?;
    if !(theta > T::zero() && theta < T::one()) {
        return None;
    }
    let tail = theta / (T::one() - theta) * delta_norm;
    let denom = step_norm - tail;
    (denom > T::zero()).then(|| tail / denom)
}

/// `ω̃ = -‖f'(x)+μ‖²_* / (2λ)` and whether `ω̃ < ω̃_max`.
///
/// Without model decrease (`λ >= 0`) the criterion is not satisfied.
pub fn subgradient_criterion<T: Scalar>(dual_norm_sq: T, model_value: T, omega_tilde_max: T) -> (Option<T>, bool) {
    if !(model_value < T::zero()) {
        return (None, false);
    }
    let omega_tilde = -dual_norm_sq / (T::lit(2.0) * model_value);
    (Some(omega_tilde), omega_tilde < omega_tilde_max)
}

/// `‖f'(x) + μ‖_{X*}`, evaluated as `sqrt(-ℓ(Δx^μ(1)))` with the subgradient
/// step `Δx^μ(1) = -R⁻¹ℓ`, `ℓ = f'(x) + μ`.
pub fn dual_norm_of_residual<T: Scalar>(
    gram: &GramOperator<T>,
    grad_f: &DualFunctional<T>,
    mu: &DualFunctional<T>,
) -> Result<T> {
    let ell = grad_f.plus(mu);
    let step = subgradient_step(gram, &ell, T::one())?;
    checked_sqrt(-ell.apply(&step))
}

/// Minimizer `-(ω̃R)⁻¹ℓ` of the regularized linear model `ℓ(δ) + ω̃/2‖δ‖²`.
pub fn subgradient_step<T: Scalar>(
    gram: &GramOperator<T>,
    ell: &DualFunctional<T>,
    omega_tilde: T,
) -> Result<PrimalVector<T>> {
    Ok(gram.riesz_inverse(ell)?.scaled(-T::one() / omega_tilde))
}

/// `F_new - F_old <= γ λ`.
pub fn sufficient_decrease<T: Scalar>(f_new: T, f_old: T, model_value: T, gamma: T) -> bool {
    f_new - f_old <= gamma * model_value
}

/// How the inner solver decides it is done.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingMode<T> {
    /// Relative error estimate below `eta` and subgradient criterion satisfied.
    Inexact { eta: T },
    /// Converge until corrections vanish to round-off.
    Exact,
    /// Converge until `‖δ‖ <= tol (1 + ‖Δs‖)`.
    Tight { tol: T },
}

/// Per-inner-iteration snapshot of both criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriteriaReport<T> {
    pub iteration: usize,
    pub e_est: Option<T>,
    /// True relative error; only known when a reference step is attached.
    pub e_rel: Option<T>,
    /// Forcing term in effect (zero outside the inexact mode).
    pub eta: T,
    pub omega_tilde: Option<T>,
    pub omega_tilde_max: T,
    pub dual_norm_sq: T,
    pub model_value: T,
    pub relative_ok: bool,
    pub subgradient_ok: bool,
}

/// What the inner solver reports after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerObservation<T> {
    pub iteration: usize,
    pub correction_norm: T,
    pub step_norm: T,
    pub theta: Option<T>,
    pub model_value: T,
    pub e_rel: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Continue,
    CriteriaSatisfied,
    ExactTolerance,
}

/// Which test was still failing one iteration before both were satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingCriterion {
    RelativeError,
    Subgradient,
    Both,
}

/// Stopping rule handed to the subproblem solver. Keeps a report for every
/// inner iteration it is consulted on.
#[derive(Debug, Clone)]
pub struct StoppingPolicy<T> {
    mode: StoppingMode<T>,
    omega_tilde_max: T,
    dual_norm_sq: T,
    reference: Option<PrimalVector<T>>,
    reports: Vec<CriteriaReport<T>>,
}

impl<T: Scalar> StoppingPolicy<T> {
    /// `dual_norm_sq` is `‖f'(x)+μ‖²_*`, computed once per outer iteration.
    pub fn new(mode: StoppingMode<T>, omega_tilde_max: T, dual_norm_sq: T) -> Self {
        if let StoppingMode::Inexact { eta } = mode {
            assert!(eta >= T::zero() && eta < T::one(), "forcing term must lie in [0, 1)");
        }
        assert!(omega_tilde_max > T::zero(), "omega_tilde_max must be positive");
        Self { mode, omega_tilde_max, dual_norm_sq, reference: None, reports: Vec::new() }
    }

    pub fn tight(tol: T) -> Self {
        Self::new(StoppingMode::Tight { tol }, T::lit(DEFAULT_OMEGA_TILDE_MAX), T::zero())
    }

    /// Attaches an (exactly computed) reference step so true relative errors
    /// are recorded alongside the estimates.
    pub fn with_reference(mut self, reference: PrimalVector<T>) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn mode(&self) -> StoppingMode<T> {
        self.mode
    }

    pub fn reference(&self) -> Option<&PrimalVector<T>> {
        self.reference.as_ref()
    }

    pub fn reports(&self) -> &[CriteriaReport<T>] {
        &self.reports
    }

    pub fn into_reports(self) -> Vec<CriteriaReport<T>> {
        self.reports
    }

    pub fn observe(&mut self, obs: &InnerObservation<T>) -> Verdict {
        let e_est = relative_error_estimate(obs.correction_norm, obs.step_norm, obs.theta);
        let (omega_tilde, subgradient_ok) =
            subgradient_criterion(self.dual_norm_sq, obs.model_value, self.omega_tilde_max);
        let eta = match self.mode {
            StoppingMode::Inexact { eta } => eta,
            _ => T::zero(),
        };
        let relative_ok = matches!(self.mode, StoppingMode::Inexact { .. }) && e_est.is_some_and(|e| e <= eta);
        self.reports.push(CriteriaReport {
            iteration: obs.iteration,
            e_est,
            e_rel: obs.e_rel,
            eta,
            omega_tilde,
            omega_tilde_max: self.omega_tilde_max,
            dual_norm_sq: self.dual_norm_sq,
            model_value: obs.model_value,
            relative_ok,
            subgradient_ok,
        });
        let scale = T::one() + obs.step_norm;
        let converged = obs.correction_norm <= T::lit(EXACT_CORRECTION_TOL) * scale;
        match self.mode {
            StoppingMode::Inexact { .. } if relative_ok && subgradient_ok => Verdict::CriteriaSatisfied,
            StoppingMode::Inexact { .. } | StoppingMode::Exact if converged => Verdict::ExactTolerance,
            StoppingMode::Exact if e_est.is_some_and(|e| e <= T::lit(EXACT_ESTIMATE_TOL)) => Verdict::ExactTolerance,
            StoppingMode::Tight { tol } if obs.correction_norm <= tol * scale => Verdict::ExactTolerance,
            _ => Verdict::Continue,
        }
    }

    /// Binding criterion of a run that ended with both criteria satisfied.
    pub fn binding_criterion(&self) -> Option<BindingCriterion> {
        let last = self.reports.last()?;
        if !(last.relative_ok && last.subgradient_ok) {
            return None;
        }
        let prev = match self.reports.len() {
            0 | 1 => return Some(BindingCriterion::Both),
            n => &self.reports[n - 2],
        };
        Some(match (prev.relative_ok, prev.subgradient_ok) {
            (false, true) => BindingCriterion::RelativeError,
            (true, false) => BindingCriterion::Subgradient,
            _ => BindingCriterion::Both,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(iteration: usize, delta: f64, step: f64, theta: Option<f64>, lambda: f64) -> InnerObservation<f64> {
        InnerObservation { iteration, correction_norm: delta, step_norm: step, theta, model_value: lambda, e_rel: None }
    }

    #[test]
    fn estimate_by_direct_substitution() {
        let e = relative_error_estimate(0.1_f64, 1.0, Some(0.5)).unwrap();
        assert!((e - 0.1 / 0.9).abs() < 1e-15);
        assert_eq!(relative_error_estimate(1.0, 1.0, Some(0.9)), None);
        assert_eq!(relative_error_estimate(0.1, 1.0, None), None);
    }

    #[test]
    fn estimate_bounds_error_of_geometric_sequence() {
        // corrections δ^j = q^j along a fixed direction; Δx = Σ_{j≥1} q^j
        let q: f64 = 0.4;
        let exact = q / (1.0 - q);
        for i in 1..10 {
            let partial: f64 = (1..=i).map(|j| q.powi(j)).sum();
            let e_rel = (exact - partial).abs() / exact;
            let e_est = relative_error_estimate(q.powi(i), partial, Some(q)).unwrap();
            assert!(e_rel <= e_est * (1.0 + 1e-12), "i={i}: {e_rel} > {e_est}");
        }
    }

    #[test]
    fn subgradient_values() {
        assert_eq!(subgradient_criterion(4.0, -0.5, 1e8), (Some(4.0), true));
        assert_eq!(subgradient_criterion(4.0, 0.0, 1e8), (None, false));
        assert_eq!(subgradient_criterion(4.0e8, -2.0, 1e8), (Some(1e8), false));
    }

    #[test]
    fn subgradient_scale_invariance() {
        for t in [1e-3, 0.5, 7.0, 1e4] {
            let (a, _) = subgradient_criterion(3.0_f64, -0.2, 1e8);
            let (b, _) = subgradient_criterion(3.0 * t, -0.2 * t, 1e8);
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12 * a.unwrap());
        }
    }

    #[test]
    fn dual_norm_identity_gram() {
        let r = GramOperator::<f64>::identity(3);
        let g = DualFunctional::from_vec(vec![3.0, 0.0, 0.0]);
        let mu = DualFunctional::from_vec(vec![0.0, 4.0, 0.0]);
        assert!((dual_norm_of_residual(&r, &g, &mu).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(dual_norm_of_residual(&r, &DualFunctional::zeros(3), &DualFunctional::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn sufficient_decrease_cases() {
        assert!(sufficient_decrease(-1.0, 0.0, -1.5, 0.5));
        assert!(!sufficient_decrease(-0.5, 0.0, -1.5, 0.5));
    }

    #[test]
    fn inexact_policy_waits_for_both() {
        let mut p = StoppingPolicy::new(StoppingMode::Inexact { eta: 0.9 }, 1e8, 1.0);
        assert_eq!(p.observe(&obs(1, 1.0, 1.0, None, -0.1)), Verdict::Continue);
        assert_eq!(p.observe(&obs(2, 0.5, 1.4, None, -0.2)), Verdict::Continue);
        assert_eq!(p.observe(&obs(3, 0.25, 1.6, Some(0.5), -0.3)), Verdict::CriteriaSatisfied);
        assert_eq!(p.binding_criterion(), Some(BindingCriterion::RelativeError));
        assert_eq!(p.reports().len(), 3);
    }

    #[test]
    fn inexact_policy_respects_omega_tilde_max() {
        let mut p = StoppingPolicy::new(StoppingMode::Inexact { eta: 0.9 }, 1.0, 10.0);
        // ω̃ = 10 / (2 * 0.1) = 50 >= 1
        assert_eq!(p.observe(&obs(3, 0.01, 1.0, Some(0.5), -0.1)), Verdict::Continue);
        // ω̃ = 10 / 40 = 0.25 < 1
        assert_eq!(p.observe(&obs(4, 0.01, 1.0, Some(0.5), -20.0)), Verdict::CriteriaSatisfied);
        assert_eq!(p.binding_criterion(), Some(BindingCriterion::Subgradient));
    }

    #[test]
    fn exact_mode_ignores_eta() {
        let mut p = StoppingPolicy::new(StoppingMode::Exact, 1e8, 1.0);
        assert_eq!(p.observe(&obs(3, 1e-3, 1.0, Some(0.1), -1.0)), Verdict::Continue);
        assert!(!p.reports()[0].relative_ok);
        assert_eq!(p.observe(&obs(4, 1e-15, 1.0, Some(0.1), -1.0)), Verdict::ExactTolerance);
    }

    #[test]
    fn larger_eta_never_stops_later() {
        let trace: Vec<_> =
            (1..12).map(|i| obs(i, 0.3f64.powi(i as i32), 1.0, (i >= 3).then_some(0.3), -1.0)).collect();
        let stop_at = |eta: f64| {
            let mut p = StoppingPolicy::new(StoppingMode::Inexact { eta }, 1e8, 1.0);
            trace.iter().position(|o| p.observe(o) != Verdict::Continue)
        };
        let mut last = usize::MAX;
        for eta in [1e-6, 1e-4, 1e-2, 0.1, 0.5, 0.9] {
            let s = stop_at(eta).unwrap();
            assert!(s <= last);
            last = s;
        }
    }
}
