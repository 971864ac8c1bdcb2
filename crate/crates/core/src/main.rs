use clap::{Parser, Subcommand};
use ignis::config::RunConfig;
use ignis::driver::{self, EXIT_INTERNAL, EXIT_USAGE};
use ignis::presets;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ignis",
    about = "Simulator for a reacting, heat-conductive, self-gravitating compressible viscous fluid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write diagnostics and snapshots.
    Simulate {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in preset name (trivial | hotspot | vacuum-blob | collapse).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the compatibility of the configured initial data.
    CheckIc {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Convergence-order study of the transport, potential and implicit
    /// sub-solvers.
    Study {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Seed for the randomized study densities.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Vacuum continuation: rerun with decreasing density lifts and report
    /// trajectory distances.
    ContinueDelta {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn resolve_config(config: Option<PathBuf>, preset: Option<String>) -> Result<RunConfig, String> {
    match (config, preset) {
        (Some(path), None) => RunConfig::from_file(&path).map_err(|e| e.to_string()),
        (None, Some(name)) => presets::preset_config(&name).map_err(|e| e.to_string()),
        (None, None) => Err("give --config PATH or --preset NAME".into()),
        (Some(_), Some(_)) => Err("give --config or --preset, not both".into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { config, preset, out } => match resolve_config(config, preset) {
            Ok(cfg) => match driver::run_simulate(&cfg, &out) {
                Ok(outcome) => {
                    eprintln!(
                        "simulate: {} steps, exit {}, {} event(s), {} violation(s)",
                        outcome.steps_completed,
                        outcome.exit_code,
                        outcome.events.len(),
                        outcome.diagnostics.violations.len()
                    );
                    outcome.exit_code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_INTERNAL
                }
            },
            Err(msg) => {
                eprintln!("error: {msg}");
                EXIT_USAGE
            }
        },
        Command::CheckIc { config, preset, out } => match resolve_config(config, preset) {
            Ok(cfg) => match driver::run_check_ic(&cfg, &out) {
                Ok((code, rep)) => {
                    eprintln!(
                        "check-ic: verdict {:?}, |g1| = {:.3e}, |g2| = {:.3e}",
                        rep.verdict, rep.l2_g1, rep.l2_g2
                    );
                    code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_INTERNAL
                }
            },
            Err(msg) => {
                eprintln!("error: {msg}");
                EXIT_USAGE
            }
        },
        Command::Study { levels, seed, out } => match driver::run_convergence_study(levels, seed, &out) {
            Ok(table) => {
                print!("{table}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        Command::ContinueDelta { config, preset, out } => match resolve_config(config, preset) {
            Ok(cfg) => match driver::run_continue_delta(&cfg, &out) {
                Ok((code, table)) => {
                    print!("{table}");
                    code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_INTERNAL
                }
            },
            Err(msg) => {
                eprintln!("error: {msg}");
                EXIT_USAGE
            }
        },
    };
    ExitCode::from(code.clamp(0, 255) as u8)
}
