//! `emff`: run, check and sweep formation-flight scenarios.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical abort.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use emff_core::scenario::{load_scenario, ControlMode, Scenario};
use emff_core::sim::{self, parse_seed_range, RunOptions};
use emff_core::EmffError;

#[derive(Parser)]
#[command(name = "emff", version, about = "Electromagnetic formation flight simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Direct,
    Dipole,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the closed loop and write trajectory, summary and plot data.
    Run {
        /// Scenario file, or the name of a bundled scenario (paper_fig123).
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Check accessibility rank and bad brackets at sampled states.
    Check {
        scenario: String,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one trajectory per seed concurrently.
    Sweep {
        scenario: String,
        /// Seed range a..b (exclusive) or a..=b.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
}

fn resolve(name: &str) -> Result<Scenario, EmffError> {
    if name == "paper_fig123" && !std::path::Path::new(name).exists() {
        return Ok(Scenario::paper_fig123());
    }
    load_scenario(name)
}

fn exit_code(e: &EmffError) -> u8 {
    match e {
        EmffError::Parse(_) | EmffError::Validation(_) | EmffError::Dimension { .. } | EmffError::Io(_) => 2,
        _ => 3,
    }
}

fn to_mode(m: Option<Mode>) -> Option<ControlMode> {
    m.map(|m| match m {
        Mode::Direct => ControlMode::Direct,
        Mode::Dipole => ControlMode::Dipole,
    })
}

fn execute(cmd: Command) -> Result<(), EmffError> {
    match cmd {
        Command::Run { scenario, seed, out, dt, duration, mode } => {
            let sc = resolve(&scenario)?;
            let opts = RunOptions { seed, dt, duration, mode: to_mode(mode), out_dir: out };
            let (summary, files) = sim::run(&sc, &opts)?;
            print!("{}", summary.to_text());
            println!("trajectory = {}", files.trajectory.display());
            Ok(())
        }
        Command::Check { scenario, samples, seed, out } => {
            let sc = resolve(&scenario)?;
            let report = sim::report_controllability(&sc, samples, seed)?;
            match out {
                Some(p) => {
                    sim::write_report(&report, &p)?;
                    println!("status = {}", if report.passed() { "PASS" } else { "FAIL" });
                    println!("report = {}", p.display());
                }
                None => print!("{}", report.to_text()),
            }
            Ok(())
        }
        Command::Sweep { scenario, seeds, out, dt, duration, mode } => {
            let sc = resolve(&scenario)?;
            let seeds = parse_seed_range(&seeds)?;
            let opts = RunOptions { seed: None, dt, duration, mode: to_mode(mode), out_dir: out };
            let entries = sim::sweep(&sc, &seeds, &opts)?;
            let mut worst: Option<EmffError> = None;
            for e in entries {
                match e.outcome {
                    Ok(s) => println!("seed {}: error ratio {:.4e}", e.seed, s.error_ratio()),
                    Err(err) => {
                        println!("seed {}: aborted: {err}", e.seed);
                        worst.get_or_insert(err);
                    }
                }
            }
            worst.map_or(Ok(()), Err)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
