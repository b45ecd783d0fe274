use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nosig_cli::{run, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "nosig", version, about = "Post-selected Stern-Gerlach no-signalling checks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "configs/default.json")]
    config: PathBuf,
    /// Overrides `root_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Debug: shift cos φ₋ of the |↙⟩ω branch by this amount.
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    inject_violation: f64,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Pipeline residuals and phase constraint over the ω × θ grid (report.json).
    Verify,
    /// Probability table over the ω × θ grid (sweep.csv).
    Sweep,
    /// Sampled two-beam estimates and the violation bound (estimates.jsonl).
    Estimate,
    /// Gaussian model against the grid solver (oracle.json).
    Oracle,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Verify => Command::Verify,
        Sub::Sweep => Command::Sweep,
        Sub::Estimate => Command::Estimate,
        Sub::Oracle => Command::Oracle,
    };
    let overrides = Overrides { seed: cli.seed, out: cli.out, inject_violation: cli.inject_violation };
    let result = RunConfig::load(&cli.config).and_then(|mut config| {
        config.apply(&overrides);
        run(command, &config, &overrides)
    });
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if !outcome.passed {
                eprintln!("{}: checks failed", command.name());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
