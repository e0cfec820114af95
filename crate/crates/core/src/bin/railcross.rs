use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use railcross::commands::{cmd_compare, cmd_replay, cmd_run, CompareAxis, ReplayOptions, RunOptions, RunReport};
use railcross::ingest::ParseMode;
use railcross::sim::AnalysisConfig;
use railcross::Execution;

/// Grade-crossing warning simulator and field-log analyzer.
///
/// Log verbosity comes from RAILCROSS_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "railcross", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and simulate a scenario; write trace.kml, packets.csv, units.csv and stats.json.
    Run {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write trace.kmz.
        #[arg(long)]
        kmz: bool,
        /// Print a human-readable table instead of the JSON report.
        #[arg(long)]
        summary: bool,
    },
    /// Classify and analyze a recorded packet log.
    Replay {
        packets: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// GPS track for records without positions.
        #[arg(long)]
        nmea: Option<PathBuf>,
        /// Receiver identities and positions (units.csv from a run).
        #[arg(long)]
        units: Option<PathBuf>,
        /// Fail on any bad row or sentence instead of skipping it.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = railcross::sim::DEFAULT_BIN_WIDTH_M)]
        bin_width: f64,
        #[arg(long)]
        kmz: bool,
        #[arg(long)]
        summary: bool,
    },
    /// Run paired scenarios that differ only along one axis.
    Compare {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run the two legs one after the other.
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        kmz: bool,
        #[arg(long)]
        summary: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Antenna,
    Relay,
    Power,
}

fn print_run(report: &RunReport, summary: bool) -> Result<()> {
    if summary {
        match &report.stats {
            Some(s) => print!("{}", s.summary_table()),
            None => println!("no packets"),
        }
        for w in &report.warnings {
            println!("warning: {w}");
        }
    } else {
        println!("{}", serde_json::to_string_pretty(report)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RAILCROSS_LOG", "warn")).init();
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, out, seed, kmz, summary } => {
            let report = cmd_run(&config, &out, &RunOptions { seed, kmz })?;
            print_run(&report, summary)
        }
        Command::Replay { packets, out, nmea, units, strict, bin_width, kmz, summary } => {
            let options = ReplayOptions {
                mode: if strict { ParseMode::Strict } else { ParseMode::Lenient },
                kmz,
                analysis: AnalysisConfig { bin_width_m: bin_width, ..AnalysisConfig::default() },
            };
            let report = cmd_replay(nmea.as_deref(), &packets, units.as_deref(), &out, &options)?;
            print_run(&report, summary)
        }
        Command::Compare { config, axis, out, seed, sequential, kmz, summary } => {
            let axis = match axis {
                Axis::Antenna => CompareAxis::Antenna,
                Axis::Relay => CompareAxis::Relay,
                Axis::Power => CompareAxis::Power,
            };
            let mode = if sequential { Execution::Sequential } else { Execution::Parallel };
            let report = cmd_compare(&config, axis, &out, &RunOptions { seed, kmz }, mode)?;
            if summary {
                print!("{}", report.summary_table());
            } else {
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Ok(())
        }
    }
}
