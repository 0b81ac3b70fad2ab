use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use comono::algo::AlgoParams;
use comono_cli::commands::{cmd_check, cmd_reproduce, cmd_run};
use comono_cli::config::{load_experiment, resolve_problem, Overrides};
use comono_cli::CliError;

#[derive(Parser)]
#[command(
    name = "comono",
    version,
    about = "Benchmark harness for comonotone inclusion solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured methods on a problem and write CSV logs
    Run {
        /// Experiment config file (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides COMONO_OUT and the config)
        #[arg(long)]
        out: Option<String>,
        /// Generator seed (overrides COMONO_SEED and the config)
        #[arg(long)]
        seed: Option<u64>,
        /// Iteration cap for the discrete methods
        #[arg(long)]
        max_iter: Option<u64>,
        /// Distance stopping tolerance
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Validate parameters against a problem and run the operator checks
    Check {
        /// Builtin name, generator selector, or problem file path
        #[arg(long)]
        problem: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Samples per property check
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Emit plot data for a built-in figure
    Reproduce {
        /// One of fig1, fig2, fig3, fig4
        #[arg(long)]
        figure: String,
        /// Output directory (overrides COMONO_OUT)
        #[arg(long)]
        out: Option<String>,
    },
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            max_iter,
            tol,
        } => {
            let overrides = Overrides {
                out,
                seed,
                max_iter,
                tol,
            };
            let experiment = load_experiment(&config, &overrides)?;
            cmd_run(&experiment)?;
            Ok(true)
        }
        Command::Check {
            problem,
            alpha,
            beta,
            gamma,
            eta,
            samples,
            seed,
        } => {
            let problem = resolve_problem(&problem, seed)?;
            let fallback = problem.recommended_params;
            let pick = |v: Option<f64>, f: fn(&AlgoParams) -> f64, name: &str| {
                v.or(fallback.as_ref().map(f)).ok_or_else(|| {
                    CliError::Config(format!(
                        "--{name} required: problem has no recommended parameters"
                    ))
                })
            };
            let params = AlgoParams::new(
                pick(alpha, |p| p.alpha, "alpha")?,
                pick(beta, |p| p.beta, "beta")?,
                pick(gamma, |p| p.gamma, "gamma")?,
                pick(eta, |p| p.eta, "eta")?,
            );
            cmd_check(&problem, &params, samples, seed)
        }
        Command::Reproduce { figure, out } => {
            let out_dir = out
                .or_else(|| std::env::var("COMONO_OUT").ok().filter(|s| !s.is_empty()))
                .unwrap_or_else(|| "out".to_string());
            cmd_reproduce(&figure, std::path::Path::new(&out_dir))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
