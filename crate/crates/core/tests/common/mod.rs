#![allow(dead_code)]

use proxnewton::diagnostics::{
    composite_gradient_mapping, scaled_prox, spectral_bounds, tight_solve, GradientMappingQuery, MappingTarget, ModelAt,
};
use proxnewton::subsolver::SubproblemSpec;
use proxnewton::{CompositeProblem, DualFunctional, PrimalVector, QuadraticL1};
use rand::Rng;

pub const SLACK: f64 = 1e-6;
pub const TIGHT: f64 = 1e-13;

/// Minimizer of `½a t² + b t + w|c0 + t|` by a coarse scan refined to a
/// spacing of 1e-6. The objective is convex, so the refinement window around
/// the best coarse node contains the minimizer.
pub fn grid_prox(a: f64, b: f64, w: f64, c0: f64) -> f64 {
    let obj = |t: f64| 0.5 * a * t * t + b * t + w * (c0 + t).abs();
    let radius = (b.abs() + w) / a + c0.abs() + 1.0;
    let scan = |lo: f64, step: f64, count: i64| -> f64 {
        let mut best = (f64::INFINITY, lo);
        for k in 0..=count {
            let t = lo + k as f64 * step;
            let v = obj(t);
            if v < best.0 {
                best = (v, t);
            }
        }
        best.1
    };
    let coarse_step = 1e-2;
    let coarse = scan(-radius, coarse_step, (2.0 * radius / coarse_step).ceil() as i64);
    scan(coarse - coarse_step, 1e-6, 20_000)
}

pub fn random_prox_args(rng: &mut impl Rng) -> (f64, f64, f64, f64) {
    (rng.gen_range(0.1..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(0.0..5.0), rng.gen_range(-3.0..3.0))
}

pub fn random_vector(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// `‖P(ℓ₁) - P(ℓ₂)‖_X <= ‖ℓ₁ - ℓ₂‖_{X*} / (κ₁ + κ₂)` with `H` the Hessian
/// of `p` and `κ₁` its smallest eigenvalue in the `R` metric.
pub fn prox_lipschitz_holds(p: &QuadraticL1<f64>, rng: &mut impl Rng) -> bool {
    let n = p.dim();
    let gram = p.gram();
    let (_, kappa1) = spectral_bounds(p.hessian(), gram, p.mask()).unwrap();
    let l1 = DualFunctional::from_vec(random_vector(n, 5.0, rng));
    let l2 = DualFunctional::from_vec(random_vector(n, 5.0, rng));
    let u1 = scaled_prox(p, p.hessian(), &l1, TIGHT).unwrap();
    let u2 = scaled_prox(p, p.hessian(), &l2, TIGHT).unwrap();
    let lhs = gram.primal_norm(&u1.minus(&u2)).unwrap();
    let rhs = gram.dual_norm(&l1.minus(&l2)).unwrap() / kappa1;
    lhs <= rhs * (1.0 + SLACK)
}

/// `[ℓ - H(u)](ξ - u) <= ψ(ξ) - ψ(u) + 1e-8` at `u = P(ℓ)` for `samples` points `ξ`.
pub fn second_prox_holds(p: &QuadraticL1<f64>, samples: usize, rng: &mut impl Rng) -> bool {
    let n = p.dim();
    let ell = DualFunctional::from_vec(random_vector(n, 5.0, rng));
    let u = scaled_prox(p, p.hessian(), &ell, TIGHT).unwrap();
    let residual = ell.minus(&p.hessian().apply(&u));
    (0..samples).all(|_| {
        let xi = PrimalVector::from_vec(random_vector(n, 3.0, rng));
        residual.apply(&xi.minus(&u)) <= p.eval_g(&xi) - p.eval_g(&u) + 1e-8
    })
}

/// Tightly solved step of the subproblem at `x` with regularization `omega`.
pub fn exact_step<P: CompositeProblem<f64>>(p: &P, x: &PrimalVector<f64>, omega: f64) -> PrimalVector<f64> {
    let grad = p.eval_grad_f(x).unwrap();
    let hess = p.eval_hessian(x).unwrap();
    let spec = SubproblemSpec::from_problem(p, x, &grad, &hess, omega).unwrap();
    tight_solve(&spec, TIGHT).unwrap()
}

/// Both step comparisons between regularizations `omega <= omega_t`.
pub fn omega_equivalence_holds(p: &QuadraticL1<f64>, x: &PrimalVector<f64>, omega: f64, omega_t: f64) -> bool {
    let gram = p.gram();
    let (_, kappa1) = spectral_bounds(p.hessian(), gram, p.mask()).unwrap();
    let small = exact_step(p, x, omega);
    let large = exact_step(p, x, omega_t);
    let (ns, nl) = (gram.primal_norm(&small).unwrap(), gram.primal_norm(&large).unwrap());
    let diff = gram.primal_norm(&small.minus(&large)).unwrap();
    let s = 1.0 + SLACK;
    nl <= ns * s
        && ns <= (omega_t + kappa1) / (omega + kappa1) * nl * s
        && diff <= (omega_t - omega) / (omega + kappa1) * nl * s
}

/// `(‖G_τ(x + Δx)‖, ‖Δx‖)` for the model at `x` and its tightly solved step.
pub fn model_mapping_at_step<P: CompositeProblem<f64>>(
    p: &P,
    x: &PrimalVector<f64>,
    omega: f64,
    tau: f64,
    tol: f64,
) -> (f64, f64) {
    let grad = p.eval_grad_f(x).unwrap();
    let hess = p.eval_hessian(x).unwrap();
    let spec = SubproblemSpec::from_problem(p, x, &grad, &hess, omega).unwrap();
    let step = tight_solve(&spec, tol).unwrap();
    let y = x.plus(&step);
    let target = MappingTarget::Model(ModelAt { base: x, grad: &grad, hess: &hess, omega });
    let g = composite_gradient_mapping(p, &GradientMappingQuery { target, tau, point: &y }).unwrap();
    (p.gram().primal_norm(&g).unwrap(), p.gram().primal_norm(&step).unwrap())
}

/// `ω + ½(‖H‖ + κ₁)` for the Hessian of `p` at `x`.
pub fn lemma_tau<P: CompositeProblem<f64>>(p: &P, x: &PrimalVector<f64>, omega: f64) -> f64 {
    let (norm_h, kappa1) = spectral_bounds(&p.eval_hessian(x).unwrap(), p.gram(), p.mask()).unwrap();
    omega + 0.5 * (norm_h + kappa1)
}

/// Sample median; panics on empty input.
pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
