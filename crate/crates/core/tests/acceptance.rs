//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use proxnewton::criteria::BindingCriterion;
use proxnewton::diagnostics::{
    composite_gradient_mapping, gradient_mapping_bounds_check, GradientMappingQuery, MappingTarget,
};
use proxnewton::outer::{run, OuterConfig, RunReport, SolveMode, TerminationReason};
use proxnewton::subsolver::scalar_prox;
use proxnewton::{CompositeProblem, DualFunctional, ModelConfig, ModelProblem, PrimalVector, QuadraticL1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(cond: bool, failures: &mut Vec<String>, what: impl Into<String>) {
    if !cond {
        failures.push(what.into());
    }
}

fn model_problem(alpha: f64) -> ModelProblem<f64> {
    let mut cfg = ModelConfig::with_levels(2, 2);
    cfg.alpha = alpha;
    assert_eq!(cfg.nodes_per_axis, 17);
    ModelProblem::assemble(cfg).unwrap()
}

fn run_mode(p: &ModelProblem<f64>, mode: SolveMode, diagnostics: bool) -> RunReport<f64> {
    run(p, &OuterConfig { mode, diagnostics, ..OuterConfig::default() }).expect("run completes")
}

fn criterion_1() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut max_err = 0.0_f64;
    for _ in 0..1000 {
        let (a, b, w, c0) = random_prox_args(&mut rng);
        let t = scalar_prox(a, b, w, c0).unwrap();
        max_err = max_err.max((t - grid_prox(a, b, w, c0)).abs());
    }
    check(max_err <= 1e-5, &mut failures, format!("prox error {max_err:.2e}"));

    let p = model_problem(40.0);
    let gram = p.gram();
    let mut max_rt = 0.0_f64;
    for _ in 0..20 {
        let l = DualFunctional::from_vec(random_vector(p.dim(), 10.0, &mut rng));
        let back = gram.apply(&gram.riesz_inverse(&l).unwrap()).unwrap();
        max_rt = max_rt.max(back.minus(&l).max_abs() / (1.0 + l.max_abs()));
        let v = PrimalVector::from_vec(random_vector(p.dim(), 10.0, &mut rng));
        let nv = gram.primal_norm(&v).unwrap();
        let nd = gram.dual_norm(&gram.apply(&v).unwrap()).unwrap();
        max_rt = max_rt.max((nd - nv).abs() / (1.0 + nv));
    }
    check(max_rt <= 1e-10, &mut failures, format!("Riesz round trip {max_rt:.2e}"));

    let free = |rng: &mut ChaCha8Rng, s: f64| {
        PrimalVector::from_vec(p.mask().iter().map(|&m| if m { 0.0 } else { rng.gen_range(-s..s) }).collect())
    };
    let (mut grad_err, mut hess_err) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let u = free(&mut rng, 0.4);
        let v = free(&mut rng, 1.0);
        let h = 1e-6;
        let fd = (p.eval_f(&u.plus(&v.scaled(h))).unwrap() - p.eval_f(&u.minus(&v.scaled(h))).unwrap()) / (2.0 * h);
        let an = p.eval_grad_f(&u).unwrap().apply(&v);
        grad_err = grad_err.max((fd - an).abs() / an.abs().max(1.0));
        let gd = p.eval_grad_f(&u.plus(&v.scaled(h))).unwrap().minus(&p.eval_grad_f(&u.minus(&v.scaled(h))).unwrap());
        let hv = p.eval_hessian(&u).unwrap().apply(&v);
        hess_err = hess_err.max(gd.scaled(0.5 / h).minus(&hv).euclidean_norm() / hv.euclidean_norm().max(1.0));
    }
    check(grad_err <= 1e-6, &mut failures, format!("gradient FD {grad_err:.2e}"));
    check(hess_err <= 1e-5, &mut failures, format!("Hessian FD {hess_err:.2e}"));
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("prox err {max_err:.1e}, Riesz {max_rt:.1e}, grad FD {grad_err:.1e}, Hess FD {hess_err:.1e}")
        } else {
            failures.join("; ")
        },
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lipschitz = 0;
    let mut second = 0;
    for seed in 0..100 {
        let n = rng.gen_range(4..=60);
        let p = QuadraticL1::random(n, rng.gen_range(0.05..2.0), 1000 + seed);
        lipschitz += usize::from(prox_lipschitz_holds(&p, &mut rng));
        second += usize::from(second_prox_holds(&p, 10, &mut rng));
    }
    let p = QuadraticL1::random(30, 0.2, 2000);
    let mut equiv = 0;
    for _ in 0..20 {
        let x = PrimalVector::from_vec(random_vector(30, 1.0, &mut rng));
        let omega = rng.gen_range(1e-3..5.0);
        let omega_t = omega * rng.gen_range(1.0..50.0);
        equiv += usize::from(omega_equivalence_holds(&p, &x, omega, omega_t));
    }
    Outcome {
        pass: lipschitz == 100 && second == 100 && equiv == 20,
        detail: format!("Lipschitz {lipschitz}/100, second prox {second}/100, omega-equivalence {equiv}/20"),
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut stationary = 0;
    let mut worst = 0.0_f64;
    for seed in 0..20 {
        let p = QuadraticL1::random(rng.gen_range(10..=60), 0.2, 3000 + seed);
        let x = PrimalVector::from_vec(random_vector(p.dim(), 1.0, &mut rng));
        let omega = rng.gen_range(0.0..2.0);
        let tau = lemma_tau(&p, &x, omega);
        let (g, step) = model_mapping_at_step(&p, &x, omega, tau, TIGHT);
        worst = worst.max(g / (1.0 + step));
        stationary += usize::from(g <= 1e-8 * (1.0 + step));
    }
    let p = QuadraticL1::random(150, 0.2, 3100);
    let x = PrimalVector::from_vec(random_vector(150, 1.0, &mut rng));
    let mut bounds = 0;
    for _ in 0..50 {
        let y = PrimalVector::from_vec(random_vector(150, 2.0, &mut rng));
        let z = PrimalVector::from_vec(random_vector(150, 2.0, &mut rng));
        let omega = rng.gen_range(0.0..3.0);
        bounds += usize::from(gradient_mapping_bounds_check(&p, &x, omega, &y, &z).unwrap());
    }
    Outcome {
        pass: stationary == 20 && bounds == 50,
        detail: format!("tight-step stationarity {stationary}/20 (worst {worst:.1e}), two-sided bounds {bounds}/50"),
    }
}

fn final_mapping_norm(p: &ModelProblem<f64>, x: &PrimalVector<f64>) -> f64 {
    let q = GradientMappingQuery { target: MappingTarget::Objective, tau: 1.0, point: x };
    p.gram().primal_norm(&composite_gradient_mapping(p, &q).unwrap()).unwrap()
}

fn criterion_4(report: &RunReport<f64>, p: &ModelProblem<f64>) -> Outcome {
    let mut failures = Vec::new();
    let stopped = matches!(report.termination, TerminationReason::CorrectionNorm | TerminationReason::ModelValue);
    check(stopped, &mut failures, format!("terminated by {}", report.termination));
    let accepted = report.accepted_steps();
    check(accepted <= 40, &mut failures, format!("{accepted} accepted steps"));
    let mut prev = report.initial_energy;
    let mut monotone = true;
    for r in report.accepted() {
        monotone &= r.energy < prev;
        prev = r.energy;
    }
    check(monotone, &mut failures, "energy not strictly decreasing");
    let g = final_mapping_norm(p, &report.final_iterate);
    check(g <= 1e-6, &mut failures, format!("final gradient mapping {g:.2e}"));
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "stop by {}, {accepted} accepted, F = {:.8}, final |G| = {g:.1e}",
                report.termination, report.final_energy
            )
        } else {
            failures.join("; ")
        },
    }
}

fn criterion_5() -> Outcome {
    let p = QuadraticL1::random(40, 0.1, 5);
    let report = run(&p, &OuterConfig::default()).expect("run completes");
    let norms: Vec<f64> = report.accepted().map(|r| r.correction_norm).collect();
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    if ratios.len() < 3 {
        return Outcome { pass: false, detail: format!("only {} accepted steps", norms.len()) };
    }
    let tail = &ratios[ratios.len() - 3..];
    let pass = tail[0] > tail[1] && tail[1] > tail[2] && tail[2] <= 0.1;
    Outcome { pass, detail: format!("last ratios {:.2e}, {:.2e}, {:.2e}", tail[0], tail[1], tail[2]) }
}

fn criterion_6(inexact_40: &RunReport<f64>, p40: &ModelProblem<f64>) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let p80 = model_problem(80.0);
    let inexact_80 = run_mode(&p80, SolveMode::Inexact, false);
    for (alpha, p, inexact) in [(40, p40, inexact_40), (80, &p80, &inexact_80)] {
        let exact = run_mode(p, SolveMode::Exact, false);
        let ratio = inexact.total_inner_iterations() as f64 / exact.total_inner_iterations() as f64;
        let diff = inexact.accepted_steps().abs_diff(exact.accepted_steps());
        pass &= ratio <= 0.6 && diff <= 3;
        parts.push(format!(
            "alpha {alpha}: inner {}/{} = {ratio:.2}, accepted {}/{}",
            inexact.total_inner_iterations(),
            exact.total_inner_iterations(),
            inexact.accepted_steps(),
            exact.accepted_steps()
        ));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn criterion_7(p: &ModelProblem<f64>) -> Outcome {
    let report = run_mode(p, SolveMode::Inexact, true);
    let ratios: Vec<f64> =
        report.records.iter().flat_map(|r| &r.inner_trace).filter_map(|c| Some(c.e_rel? / c.e_est?)).collect();
    if ratios.is_empty() {
        return Outcome { pass: false, detail: "no iterate with both errors defined".into() };
    }
    let med = median(ratios.clone());
    let within = ratios.iter().filter(|&&r| r <= 10.0).count() as f64 / ratios.len() as f64;
    Outcome {
        pass: (0.01..=10.0).contains(&med) && within >= 0.9,
        detail: format!(
            "{} samples, median E_rel/E_est {med:.2e}, E_rel <= 10 E_est at {:.0}%",
            ratios.len(),
            100.0 * within
        ),
    }
}

fn criterion_8(report: &RunReport<f64>) -> Outcome {
    let omega_tilde_max = OuterConfig::<f64>::default().omega_tilde_max;
    let largest =
        report.records.iter().flat_map(|r| &r.inner_trace).filter_map(|c| c.omega_tilde).fold(0.0_f64, f64::max);
    let accepted = report.accepted_steps();
    let relative = report.accepted().filter(|r| r.binding == Some(BindingCriterion::RelativeError)).count();
    let share = relative as f64 / accepted.max(1) as f64;
    Outcome {
        pass: largest < omega_tilde_max && share >= 0.9,
        detail: format!(
            "max omega_tilde {largest:.2e}, relative-error binding in {relative}/{accepted} accepted steps"
        ),
    }
}

fn report(index: usize, name: &str, budget: Duration, start: Instant, outcome: Outcome, all: &mut bool) {
    let elapsed = start.elapsed();
    let pass = outcome.pass && elapsed <= budget;
    *all &= pass;
    let timing = if elapsed <= budget { String::new() } else { format!(" [over budget {budget:?}]") };
    println!(
        "criterion {index} {:<28} {} ({}; {:.2}s){timing}",
        name,
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64()
    );
}

fn main() -> ExitCode {
    let mut all = true;
    let t = Instant::now();
    report(1, "oracle suite", Duration::from_secs(10), t, criterion_1(), &mut all);
    let t = Instant::now();
    report(2, "prox theory", Duration::from_secs(30), t, criterion_2(), &mut all);
    let t = Instant::now();
    report(3, "stationarity", Duration::from_secs(60), t, criterion_3(), &mut all);

    let t = Instant::now();
    let p40 = model_problem(40.0);
    let inexact_40 = run_mode(&p40, SolveMode::Inexact, false);
    report(4, "convergence run", Duration::from_secs(300), t, criterion_4(&inexact_40, &p40), &mut all);
    let t = Instant::now();
    report(5, "superlinear tail", Duration::from_secs(120), t, criterion_5(), &mut all);
    let t = Instant::now();
    report(6, "inexactness payoff", Duration::from_secs(600), t, criterion_6(&inexact_40, &p40), &mut all);
    let t = Instant::now();
    report(7, "estimator fidelity", Duration::from_secs(600), t, criterion_7(&p40), &mut all);
    let t = Instant::now();
    report(8, "criterion non-interference", Duration::from_secs(60), t, criterion_8(&inexact_40), &mut all);

    if all {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
