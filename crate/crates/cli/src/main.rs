//! Configuration-driven entry point: runs experiments, emits bound reports,
//! and executes the acceptance suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use policy_fusion_cli::{acceptance, bounds_cmd, run_cmd, EXIT_RUNTIME};

#[derive(Parser)]
#[command(
    name = "policy-fusion",
    about = "Two-policy switching experiments with certificate verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Cap rollout parallelism; results are independent of this value.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compute the closed-form bound report and check dominance.
    VerifyBounds {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run every acceptance config in a directory and print a pass/fail
    /// table.
    Acceptance {
        dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            seed,
            output_dir,
            workers,
        } => match run_cmd::cmd_run(&config, seed, output_dir, workers) {
            Ok(output) => {
                println!("wrote {}", output.summary_path.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::VerifyBounds { config, output_dir } => {
            match bounds_cmd::cmd_verify_bounds(&config, output_dir) {
                Ok(report) => {
                    println!(
                        "v_min = {:.6e}, d_pbar = {}, d_max = {}, delta = {}, tau_f = {}",
                        report.v_min, report.d_pbar, report.d_max, report.delta, report.tau_f
                    );
                    for entry in &report.corollary_bounds {
                        let tp = report
                            .tail_products
                            .iter()
                            .find(|p| p.t == entry.t)
                            .map(|p| p.value)
                            .unwrap_or(f64::NAN);
                        println!(
                            "t = {:>3}: tail product {:.12}, lower bound {:.12} ({})",
                            entry.t,
                            tp,
                            entry.value,
                            if entry.dominated { "ok" } else { "VIOLATED" }
                        );
                    }
                    println!("dominance: {}", report.dominance);
                    if report.dominance_pass() {
                        0
                    } else {
                        EXIT_RUNTIME
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Acceptance { dir, workers } => {
            match acceptance::cmd_acceptance(&dir, workers) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
