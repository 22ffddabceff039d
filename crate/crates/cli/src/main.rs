//! `spintrack`: simulate weakly measured nuclear spins and analyse the traces.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod analysis;
mod commands;
mod config;
mod error;
mod io;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AnalyzeArgs, FilterArgs, Globals};
use config::{EngineKind, LorentzianName};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "spintrack", version, about = "Weak-measurement tracking of nuclear spins")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// JSON run configuration, or a trace written by this tool.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    engine: Option<EngineKind>,
    /// Output directory.
    #[arg(long, global = true, env = "SPINTRACK_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trace and write trace.csv.
    Simulate,
    /// Simulate and fit every point of the configured sweep.
    Sweep,
    /// Fit, transform and peak-pick a trace.
    Analyze {
        trace: PathBuf,
        /// Zero-padding factor of the spectrum.
        #[arg(long)]
        pad: Option<usize>,
        #[arg(long, default_value = "signal", value_parser = ["signal", "counts"])]
        column: String,
        /// Baseline band as LO:HI in Hz.
        #[arg(long, value_parser = parse_band)]
        noise_band: Option<[f64; 2]>,
        /// Report apparent peak frequencies only.
        #[arg(long)]
        no_unfold: bool,
        #[arg(long, value_enum)]
        lorentzian: Option<LorentzianName>,
    },
    /// Tabulate the decoupling filter function.
    Filter {
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        n_pulses: Option<usize>,
        #[arg(long)]
        t_s: Option<f64>,
        #[arg(long)]
        f_min_hz: Option<f64>,
        #[arg(long)]
        f_max_hz: Option<f64>,
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
}

fn parse_band(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    Ok([lo, hi])
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let g = Globals {
        config: cli.config,
        seed: cli.seed,
        engine: cli.engine,
        out: cli.out,
    };
    match cli.cmd {
        Command::Simulate => commands::cmd_simulate(&g),
        Command::Sweep => commands::cmd_sweep(&g),
        Command::Analyze {
            trace,
            pad,
            column,
            noise_band,
            no_unfold,
            lorentzian,
        } => commands::cmd_analyze(
            &g,
            &AnalyzeArgs {
                trace,
                column,
                pad,
                noise_band,
                no_unfold,
                lorentzian,
            },
        ),
        Command::Filter {
            tau,
            n_pulses,
            t_s,
            f_min_hz,
            f_max_hz,
            points,
        } => commands::cmd_filter(
            &g,
            &FilterArgs {
                tau,
                n_pulses,
                t_s,
                f_min: f_min_hz,
                f_max: f_max_hz,
                points,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
            }
            let err = CliError::config(e.kind().to_string());
            eprintln!("{}", err.to_json());
            eprintln!("{}", e.render());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
