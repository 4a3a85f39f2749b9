use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use proxnewton::outer::{IterationRecord, RunError, SolveMode, TerminationReason};
use proxnewton::{run, ModelProblem, OuterConfig};
use rayon::prelude::*;

use crate::{CliError, ExperimentConfig, ModeArg};

/// Caps the number of runs executed concurrently.
pub const THREADS_ENV: &str = "PROXNEWTON_THREADS";

pub const RUN_HEADER: [&str; 10] =
    ["k", "omega", "eta", "corr_norm", "energy", "inner_iters", "accepted", "omega_tilde", "E_est", "E_rel"];

pub const SUMMARY_HEADER: [&str; 5] = ["alpha", "mode", "accepted", "declined", "total_inner_iters"];

/// One line of `summary.csv` plus how the run ended.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub alpha: f64,
    pub mode: SolveMode,
    pub accepted: usize,
    pub declined: usize,
    pub total_inner_iterations: usize,
    /// `None` when the run aborted.
    pub termination: Option<TerminationReason>,
}

impl RunSummary {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Some(TerminationReason::CorrectionNorm | TerminationReason::ModelValue))
    }
}

fn mode_name(mode: SolveMode) -> &'static str {
    match mode {
        SolveMode::Exact => "exact",
        SolveMode::Inexact => "inexact",
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| {
        let source = match e.into_kind() {
            csv::ErrorKind::Io(source) => source,
            other => std::io::Error::other(format!("{other:?}")),
        };
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub fn run_file_name(alpha: f64, mode: SolveMode) -> String {
    format!("run_{alpha}_{}.csv", mode_name(mode))
}

fn write_run(path: &Path, records: &[IterationRecord<f64>], diagnostics: bool) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(RUN_HEADER).map_err(csv_err(path))?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            num(r.omega),
            num(r.eta),
            num(r.correction_norm),
            num(r.energy),
            r.inner_iterations.to_string(),
            u8::from(r.accepted).to_string(),
            opt(r.omega_tilde),
            opt(r.e_est),
            if diagnostics { opt(r.e_rel) } else { String::new() },
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn single_run(cfg: &ExperimentConfig, alpha: f64, mode: SolveMode) -> Result<RunSummary, CliError> {
    let problem = ModelProblem::assemble(cfg.model_config(alpha)).map_err(|e| CliError::Usage(e.to_string()))?;
    let outer = OuterConfig { mode, ..cfg.outer_config() };
    let (records, termination) = match run(&problem, &outer) {
        Ok(report) => {
            info!(
                "alpha {alpha} {}: {} after {} accepted steps, F = {:e}",
                mode_name(mode),
                report.termination,
                report.accepted_steps(),
                report.final_energy
            );
            (report.records, Some(report.termination))
        }
        Err(RunError::TooManyRejections { records, last }) => {
            warn!("alpha {alpha} {}: gave up at step {} with omega = {:e}", mode_name(mode), last.k, last.omega);
            (records, None)
        }
        Err(RunError::Evaluation(e)) => {
            warn!("alpha {alpha} {}: {e}", mode_name(mode));
            (Vec::new(), None)
        }
    };
    let path = cfg.out.join(run_file_name(alpha, mode));
    write_run(&path, &records, cfg.diagnostics)?;
    let accepted = records.iter().filter(|r| r.accepted).count();
    Ok(RunSummary {
        alpha,
        mode,
        accepted,
        declined: records.len() - accepted,
        total_inner_iterations: records.iter().map(|r| r.inner_iterations).sum(),
        termination,
    })
}

fn thread_count() -> Result<usize, CliError> {
    match env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Writes `config.resolved`, one CSV per (alpha, mode) run and `summary.csv`
/// into the output directory. Runs execute in parallel; output does not
/// depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>, CliError> {
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let resolved_path = cfg.out.join("config.resolved");
    let resolved = toml::to_string(&cfg.resolved()).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(&resolved_path, resolved).map_err(io_err(&resolved_path))?;

    let modes: &[SolveMode] = match cfg.mode {
        ModeArg::Exact => &[SolveMode::Exact],
        ModeArg::Inexact => &[SolveMode::Inexact],
        ModeArg::Both => &[SolveMode::Inexact, SolveMode::Exact],
    };
    let jobs: Vec<(f64, SolveMode)> = cfg.alphas.iter().flat_map(|&a| modes.iter().map(move |&m| (a, m))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let summaries: Vec<RunSummary> =
        pool.install(|| jobs.par_iter().map(|&(alpha, mode)| single_run(cfg, alpha, mode)).collect::<Result<_, _>>())?;

    let summary_path: PathBuf = cfg.out.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path).map_err(csv_err(&summary_path))?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(&summary_path))?;
    for s in &summaries {
        w.write_record([
            s.alpha.to_string(),
            mode_name(s.mode).to_string(),
            s.accepted.to_string(),
            s.declined.to_string(),
            s.total_inner_iterations.to_string(),
        ])
        .map_err(csv_err(&summary_path))?;
    }
    w.flush().map_err(io_err(&summary_path))?;
    Ok(summaries)
}
