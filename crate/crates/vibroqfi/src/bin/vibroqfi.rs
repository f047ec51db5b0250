//! Command-line front end for vibrational Fisher-information sweeps.
//!
//! ```text
//! vibroqfi sweep --config sweep.cfg [--jobs N] [--no-cache]
//! vibroqfi spectrum --config sweep.cfg --out spectrum.csv
//! vibroqfi selftest
//! ```
//!
//! Exit codes: 0 on success, 2 for configuration problems (parse errors,
//! invalid values, unsupported parameter combinations), 3 for numerical
//! failures and I/O errors during computation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vibroqfi::config::SweepConfig;
use vibroqfi::sweep::{run_selftest, run_spectrum, run_sweep, SweepOptions};
use vibroqfi::Error;

#[derive(Parser)]
#[command(
    name = "vibroqfi",
    about = "Fisher-information sweeps for single-photon scattering off a \
             vibrationally coupled emitter",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured parameter sweep, writing a CSV table
    /// (and optionally an SVG plot).
    Sweep {
        /// Sweep configuration file (flat key = value text).
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for sweep points.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Ignore the TDM/row disk cache entirely.
        #[arg(long)]
        no_cache: bool,
    },
    /// Export the spectrum decomposition (input/absorption/emission)
    /// of the configured system as CSV.
    Spectrum {
        /// Sweep configuration file; the unswept base system is used.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the fast TDM builder against direct quadrature at N=128.
    Selftest,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::UnsupportedRegime(_) | Error::Grid(_) => 2,
        Error::Numerical(_) | Error::Io(_) => 3,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sweep { config, jobs, no_cache } => {
            let cfg = SweepConfig::from_file(&config)?;
            let opts = SweepOptions { jobs, use_cache: !no_cache };
            let outcome = run_sweep(&cfg, &opts)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "wrote {} rows to {} ({} from cache)",
                outcome.rows.len(),
                outcome.csv_path.display(),
                outcome.cached_points
            );
            if let Some(svg) = &outcome.svg_path {
                eprintln!("wrote plot to {}", svg.display());
            }
            Ok(())
        }
        Command::Spectrum { config, out } => {
            let cfg = SweepConfig::from_file(&config)?;
            run_spectrum(&cfg, &out)?;
            eprintln!("wrote spectrum to {}", out.display());
            Ok(())
        }
        Command::Selftest => run_selftest(std::io::stdout()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
