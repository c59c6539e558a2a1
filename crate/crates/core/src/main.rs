use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use compressed_mvdr::bounds::{validate_bounds, validate_lmw};
use compressed_mvdr::experiment::{nd_schedule, run, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "cmvdr", about = "Compressed MVDR beamforming experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Write SVG gain plots.
        #[arg(long)]
        plot: bool,
        /// Write enhanced test-segment WAVs.
        #[arg(long)]
        write_audio: bool,
    },
    /// Monte-Carlo check of the power and regret bounds.
    ValidateBounds {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo check of the multiplicative eigenvalue inequality.
    ValidateLmw {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 8)]
        max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the log-spaced compressed dimensions.
    NdSchedule {
        #[arg(long, default_value_t = 5)]
        min: usize,
        #[arg(long, default_value_t = 30)]
        max: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    Version,
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> compressed_mvdr::Result<ExitCode> {
    match command {
        Command::Run { config, out, seed, plot, write_audio } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run(&cfg, &RunOptions { out_dir: out, seed, plot, write_audio })?;
            for p in &report.points {
                println!(
                    "N_d={:>3} N_p={:>4} containment={:.4} vacuous={:.4} regret=[{:.3e}, {:.3e}] skipped={}",
                    p.n_d,
                    p.n_p,
                    p.summary.containment_rate(),
                    p.summary.vacuous_rate(),
                    p.summary.min_regret,
                    p.summary.max_regret,
                    p.skipped
                );
            }
            for (n_d, msg) in &report.failures {
                eprintln!("N_d={n_d} failed: {msg}");
            }
            println!("wrote {} files to {}", report.files.len(), report.out_dir.display());
            Ok(if report.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::ValidateBounds { trials, seed } => {
            let v = validate_bounds(trials, seed)?;
            for (name, c) in [
                ("mvdr_power", v.mvdr_power),
                ("inverse_eigs", v.inverse_eigs),
                ("cmvdr_power", v.cmvdr_power),
                ("regret", v.regret),
                ("nonnegative_regret", v.nonnegative_regret),
            ] {
                println!("{name:<20} checked={:<6} violations={:<4} vacuous={}", c.checked, c.violations, c.vacuous);
            }
            println!("trials={} violations={}", v.trials, v.total_violations());
            Ok(if v.total_violations() == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::ValidateLmw { trials, max_n, seed } => {
            let v = validate_lmw(trials, max_n, seed)?;
            println!("trials={} violations={} worst_excess={:.3e}", v.trials, v.violations, v.worst_excess);
            Ok(if v.violations == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::NdSchedule { min, max, count } => {
            let nd = nd_schedule(min, max, count)?;
            println!("{}", nd.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
            Ok(ExitCode::SUCCESS)
        }
        Command::Version => {
            println!("cmvdr {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::SUCCESS)
        }
    }
}
