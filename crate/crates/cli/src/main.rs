use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaussgreen_cli::{load_config, run_experiment, Command, RunError, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "gaussgreen", version, about = "Normal traces, Gauss-Green identities and Cauchy flux reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV tables and the JSON summary.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for module-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for random probe placement.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Interior, exterior or compact normal trace with its Gauss-Green residual.
    Trace,
    /// Interior and exterior identities plus boundary atom additivity.
    CheckGaussGreen,
    /// Regularized distance nondegeneracy probes, level sets and graph deformation.
    Regdist,
    /// Vector field reconstruction from a Cauchy flux.
    ReconstructFlux,
    /// Shell integral against the integral of level measures.
    CoareaCheck,
    /// Necessary and sufficient trace measure conditions.
    Diagnostics,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Trace => Command::Trace,
            Cmd::CheckGaussGreen => Command::CheckGaussGreen,
            Cmd::Regdist => Command::Regdist,
            Cmd::ReconstructFlux => Command::ReconstructFlux,
            Cmd::CoareaCheck => Command::CoareaCheck,
            Cmd::Diagnostics => Command::Diagnostics,
        }
    }
}

fn run(cli: &Cli) -> Result<i32, RunError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| RunError::Config(format!("--threads {k}: {e}")))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| RunError::Config("--config <path> is required".into()))?;
    let cfg = load_config(path)?;
    let opts = RunOptions::from_env(cli.out.clone(), cli.seed)?;
    let summary = run_experiment(&cfg, cli.command.into(), &opts)?;
    for c in &summary.checks {
        println!("{:<24} {:>14.6e} (tol {:.1e}) {}", c.name, c.value, c.tolerance, if c.passed { "pass" } else { "FAIL" });
    }
    Ok(summary.exit_status())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
