use std::process::ExitCode;

use proxnewton_cli::{parse_config, run_experiment, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cfg = match parse_config(std::env::args_os()) {
        Ok(cfg) => cfg,
        Err(CliError::Clap(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    match run_experiment(&cfg) {
        Ok(summaries) => {
            for s in &summaries {
                let status = s.termination.map_or_else(|| "aborted".to_string(), |t| t.to_string());
                println!(
                    "alpha {} {:?}: {} accepted, {} declined, {} inner iterations ({status})",
                    s.alpha, s.mode, s.accepted, s.declined, s.total_inner_iterations
                );
            }
            if summaries.iter().all(|s| s.converged()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
