use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ovna::runner::{self, RATE_TOLERANCE};
use ovna::{config, tables, Error, ExperimentConfig};

/// Swept-wavelength OVNA simulator with automatic polarization control.
#[derive(Parser)]
#[command(name = "ovna", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and process one scenario; writes a run directory.
    Run {
        /// Config file, or `preset:<name>` for a built-in scenario.
        config: String,
    },
    /// Per-wavelength IL difference and IL-std ratio of two run directories.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Fail (exit 2) unless std(A)/std(B) reaches this value.
        #[arg(long)]
        min_std_ratio: Option<f64>,
    },
    /// Open-loop SOP rotation rate against 2πγT for T = 0.2, 0.64, 2 ps.
    ValidateEq1 {
        config: String,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Recompute the summary of a run directory from its CSVs.
    VerifyReport { run_dir: PathBuf },
    /// Print the documented config schema with an example.
    PrintSchema,
    /// List built-in scenario names.
    Presets,
}

const EXIT_INVALID: u8 = 1;
const EXIT_ACCEPTANCE: u8 = 2;

fn load(arg: &str) -> Result<ExperimentConfig, Error> {
    match arg.strip_prefix("preset:") {
        Some(name) => ExperimentConfig::preset(name),
        None => ExperimentConfig::from_toml(&tables::read(std::path::Path::new(arg))?),
    }
}

fn execute(cmd: Command) -> Result<bool, Error> {
    match cmd {
        Command::Run { config } => {
            let cfg = load(&config)?;
            if cfg.is_long_running() {
                eprintln!(
                    "note: more than {} samples per channel, this run is long",
                    config::LONG_RUN_SAMPLES
                );
            }
            let res = runner::run_scenario(&cfg)?;
            print!("{}", runner::render_summary(&res.report));
            println!("artifacts: {}", res.dir.display());
            Ok(res.report.passed())
        }
        Command::Compare {
            run_a,
            run_b,
            min_std_ratio,
        } => {
            let c = runner::compare_dirs(&run_a, &run_b)?;
            print!("{}", tables::comparison_csv(&c)?);
            eprintln!(
                "il std: A {:.3} dB, B {:.3} dB, ratio {:.3}",
                c.std_a, c.std_b, c.std_ratio
            );
            Ok(min_std_ratio.is_none_or(|m| c.std_ratio >= m))
        }
        Command::ValidateEq1 { config, seeds } => {
            let cfg = load(&config)?;
            let rows = runner::rotation_rate_table(&cfg, seeds)?;
            print!("{}", runner::render_rate_table(&rows));
            Ok(rows
                .iter()
                .all(|r| r.predicted == 0.0 || r.relative_error.abs() <= RATE_TOLERANCE))
        }
        Command::VerifyReport { run_dir } => {
            let r = runner::verify_report(&run_dir)?;
            println!("report verified: {}", run_dir.display());
            Ok(r.passed())
        }
        Command::PrintSchema => {
            print!("{}", config::schema()?);
            Ok(true)
        }
        Command::Presets => {
            for p in ovna_core::experiment::PRESETS {
                println!("{p}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("acceptance check failed");
            ExitCode::from(EXIT_ACCEPTANCE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
