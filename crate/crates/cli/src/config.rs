use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use proxnewton::{ModelConfig, NormChoice, OuterConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormArg {
    H1,
    H1Semi,
}

impl From<NormArg> for NormChoice {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::H1 => NormChoice::H1,
            NormArg::H1Semi => NormChoice::H1Semi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Exact,
    Inexact,
    Both,
}

/// Command line. Every setting may also come from `--config`; flags win.
#[derive(Debug, Parser)]
#[command(name = "proxnewton", version, about = "Run inexact proximal Newton experiments on the model problem")]
pub struct Cli {
    /// TOML file with any of the settings below (snake_case keys)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Spatial dimension (1, 2 or 3)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Uniform refinements of the 5-node-per-axis base grid
    #[arg(long)]
    pub levels: Option<u32>,
    /// Comma separated list of penalty weights
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Weight of the L1 term
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    /// Load factor
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    /// Sufficient decrease parameter
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub eta0: Option<f64>,
    /// Correction norm stopping tolerance
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub omega_tilde_max: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Record true relative errors (one extra tight solve per step)
    #[arg(long)]
    pub diagnostics: bool,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recorded in config.resolved; the runs themselves are deterministic
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Settings as read from a `--config` file and as echoed to `config.resolved`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dim: Option<usize>,
    pub levels: Option<u32>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<f64>,
    pub c: Option<f64>,
    pub rho: Option<f64>,
    pub norm: Option<NormArg>,
    pub gamma: Option<f64>,
    pub omega0: Option<f64>,
    pub eta0: Option<f64>,
    pub eps: Option<f64>,
    pub omega_tilde_max: Option<f64>,
    pub mode: Option<ModeArg>,
    pub diagnostics: Option<bool>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub levels: u32,
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub c: f64,
    pub rho: f64,
    pub norm: NormArg,
    pub gamma: f64,
    pub omega0: f64,
    pub eta0: f64,
    pub eps: f64,
    pub omega_tilde_max: f64,
    pub mode: ModeArg,
    pub diagnostics: bool,
    pub out: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn model_config(&self, alpha: f64) -> ModelConfig<f64> {
        let mut cfg = ModelConfig::with_levels(self.dim, self.levels);
        cfg.alpha = alpha;
        cfg.beta = self.beta;
        cfg.c = self.c;
        cfg.rho = self.rho;
        cfg.norm = self.norm.into();
        cfg
    }

    pub fn outer_config(&self) -> OuterConfig<f64> {
        OuterConfig {
            gamma: self.gamma,
            omega0: self.omega0,
            eta0: self.eta0,
            epsilon: self.eps,
            omega_tilde_max: self.omega_tilde_max,
            diagnostics: self.diagnostics,
            ..OuterConfig::default()
        }
    }

    pub fn resolved(&self) -> FileConfig {
        FileConfig {
            dim: Some(self.dim),
            levels: Some(self.levels),
            alpha: Some(self.alphas.clone()),
            beta: Some(self.beta),
            c: Some(self.c),
            rho: Some(self.rho),
            norm: Some(self.norm),
            gamma: Some(self.gamma),
            omega0: Some(self.omega0),
            eta0: Some(self.eta0),
            eps: Some(self.eps),
            omega_tilde_max: Some(self.omega_tilde_max),
            mode: Some(self.mode),
            diagnostics: Some(self.diagnostics),
            out: Some(self.out.clone()),
            seed: Some(self.seed),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.alphas.is_empty() {
            return Err(CliError::Usage("the alpha list is empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(CliError::Usage(format!("alpha must be finite and nonnegative, got {a}")));
        }
        for (i, a) in self.alphas.iter().enumerate() {
            if self.alphas[..i].iter().any(|b| format!("{a}") == format!("{b}")) {
                return Err(CliError::Usage(format!("alpha {a} is listed twice")));
            }
        }
        if let Some((name, _)) =
            [("beta", self.beta), ("c", self.c), ("rho", self.rho)].into_iter().find(|(_, v)| !v.is_finite())
        {
            return Err(CliError::Usage(format!("{name} must be finite")));
        }
        if self.levels > 10 {
            return Err(CliError::Usage(format!("{} refinement levels is more than this tool supports", self.levels)));
        }
        self.outer_config().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        // catches bad dimension or c before any output is written
        let probe = ModelConfig { nodes_per_axis: 3, ..self.model_config(self.alphas[0]) };
        proxnewton::ModelProblem::assemble(probe).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }
}

/// Parses flags, merges them over the optional config file and the defaults,
/// and validates the result.
pub fn parse_config<I, S>(args: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?
        }
        None => FileConfig::default(),
    };
    let defaults = ModelConfig::<f64>::new(2, 5);
    let outer = OuterConfig::<f64>::default();
    let out = cli.out.or(file.out).ok_or_else(|| CliError::Usage("no output directory given (--out)".into()))?;
    let cfg = ExperimentConfig {
        dim: cli.dim.or(file.dim).unwrap_or(2),
        levels: cli.levels.or(file.levels).unwrap_or(2),
        alphas: cli.alpha.or(file.alpha).unwrap_or_else(|| vec![defaults.alpha]),
        beta: cli.beta.or(file.beta).unwrap_or(defaults.beta),
        c: cli.c.or(file.c).unwrap_or(defaults.c),
        rho: cli.rho.or(file.rho).unwrap_or(defaults.rho),
        norm: cli.norm.or(file.norm).unwrap_or(NormArg::H1),
        gamma: cli.gamma.or(file.gamma).unwrap_or(outer.gamma),
        omega0: cli.omega0.or(file.omega0).unwrap_or(outer.omega0),
        eta0: cli.eta0.or(file.eta0).unwrap_or(outer.eta0),
        eps: cli.eps.or(file.eps).unwrap_or(outer.epsilon),
        omega_tilde_max: cli.omega_tilde_max.or(file.omega_tilde_max).unwrap_or(outer.omega_tilde_max),
        mode: cli.mode.or(file.mode).unwrap_or(ModeArg::Both),
        diagnostics: cli.diagnostics || file.diagnostics.unwrap_or(false),
        out,
        seed: cli.seed.or(file.seed).unwrap_or(0),
    };
    cfg.validate()?;
    Ok(cfg)
}
