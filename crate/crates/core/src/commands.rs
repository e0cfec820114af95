//! The pipeline behind each CLI subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::antenna::{AntennaKind, AntennaPattern, DEFAULT_ELEMENT_SPACING_WL};
use crate::channel::PowerClass;
use crate::exec::{try_map_with, Execution};
use crate::ingest::{
    self, parse_nmea_text, parse_packet_log, read_units, units_of, write_packet_log, write_units, ParseMode,
};
use crate::kmlout::{emit_kml, write_kmz, KmlError, KmlOptions};
use crate::sim::{
    compute_stats, run, AnalysisConfig, Role, Scenario, ScenarioConfig, SimLog, Stats, StatsError, ValidationErrors,
};

pub const TRACE_KML: &str = "trace.kml";
pub const TRACE_KMZ: &str = "trace.kmz";
pub const PACKETS_CSV: &str = "packets.csv";
pub const UNITS_CSV: &str = "units.csv";
pub const STATS_JSON: &str = "stats.json";
pub const COMPARISON_JSON: &str = "comparison.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: Box<toml::de::Error> },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: ValidationErrors },
    #[error("{path}: {source}")]
    PacketLog { path: PathBuf, source: ingest::PacketLogError },
    #[error("{path}: {} bad NMEA line(s):{}", .errors.len(), .errors.iter().map(|e| format!("\n  line {}: {}", e.line, e.error)).collect::<String>())]
    Nmea { path: PathBuf, errors: Vec<ingest::nmea::LineError> },
    #[error("{path}: {source}")]
    Units { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Replay(#[from] ingest::ReplayError),
    #[error(transparent)]
    Kml(#[from] KmlError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: Box<dyn std::error::Error + Send + Sync> },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_err<E: std::error::Error + Send + Sync + 'static>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Write { path: path.to_path_buf(), source: Box::new(e) }
}

/// Files written by a run or replay. Only files that exist are listed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OutputPaths {
    pub kml: Option<PathBuf>,
    pub kmz: Option<PathBuf>,
    pub packets_csv: PathBuf,
    pub units_csv: PathBuf,
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario_hash: String,
    pub stats: Option<Stats>,
    pub outputs: OutputPaths,
    pub wall_time_ms: u64,
    /// Non-fatal problems: suppressed outputs, skipped rows.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub kmz: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    pub mode: ParseMode,
    pub kmz: bool,
    pub analysis: AnalysisConfig,
}

/// Reads, parses and validates a scenario file, applying a seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut cfg = ScenarioConfig::from_toml(&text)
        .map_err(|e| CliError::Config { path: path.to_path_buf(), source: Box::new(e) })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn validate(path: &Path, cfg: ScenarioConfig) -> Result<Scenario, CliError> {
    Scenario::from_config(cfg).map_err(|source| CliError::Invalid { path: path.to_path_buf(), source })
}

/// Writes the packet log, units file, KML and stats for a log into `out_dir`.
fn write_outputs(
    log: &SimLog,
    out_dir: &Path,
    analysis: &AnalysisConfig,
    kmz: bool,
    warnings: &mut Vec<String>,
) -> Result<(OutputPaths, Option<Stats>), CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut paths = OutputPaths {
        packets_csv: out_dir.join(PACKETS_CSV),
        units_csv: out_dir.join(UNITS_CSV),
        ..Default::default()
    };

    let file = fs::File::create(&paths.packets_csv).map_err(io_err(&paths.packets_csv))?;
    write_packet_log(BufWriter::new(file), &log.packet_records()).map_err(write_err(&paths.packets_csv))?;
    let file = fs::File::create(&paths.units_csv).map_err(io_err(&paths.units_csv))?;
    write_units(BufWriter::new(file), &units_of(log)).map_err(write_err(&paths.units_csv))?;

    let fates = log.classified_fates()?;
    let options = KmlOptions { decimation: analysis.kml_decimation, ..KmlOptions::default() };
    match emit_kml(&fates, &log.unit_markers(Role::Rsu), &log.unit_markers(Role::Obu), &options) {
        Ok(kml) => {
            let path = out_dir.join(TRACE_KML);
            fs::write(&path, &kml).map_err(io_err(&path))?;
            paths.kml = Some(path);
            if kmz {
                let path = out_dir.join(TRACE_KMZ);
                write_kmz(&kml, &path)?;
                paths.kmz = Some(path);
            }
        }
        Err(KmlError::Empty) => warnings.push(format!("{TRACE_KML} not written: {}", KmlError::Empty)),
        Err(e) => return Err(e.into()),
    }

    let stats = match compute_stats(log, &analysis.stats_options()) {
        Ok(s) => s,
        Err(StatsError::NoPackets) => {
            warnings.push(format!("{STATS_JSON} not written: {}", StatsError::NoPackets));
            return Ok((paths, None));
        }
        Err(e) => return Err(e.into()),
    };
    let path = out_dir.join(STATS_JSON);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &stats).map_err(write_err(&path))?;
    paths.stats = Some(path);
    Ok((paths, Some(stats)))
}

fn report(hash: String, started: Instant, written: (OutputPaths, Option<Stats>), warnings: Vec<String>) -> RunReport {
    for w in &warnings {
        log::warn!("{w}");
    }
    RunReport {
        scenario_hash: hash,
        stats: written.1,
        outputs: written.0,
        wall_time_ms: started.elapsed().as_millis() as u64,
        warnings,
    }
}

/// Validates and simulates a scenario file, writing every output into `out_dir`.
pub fn cmd_run(config_path: &Path, out_dir: &Path, options: &RunOptions) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let scenario = validate(config_path, load_config(config_path, options.seed)?)?;
    let log = run(&scenario);
    log::info!("{}: {} packets simulated", config_path.display(), log.fates.len());
    let mut warnings = Vec::new();
    let written = write_outputs(&log, out_dir, &scenario.config().analysis, options.kmz, &mut warnings)?;
    Ok(report(scenario.hash(), started, written, warnings))
}

/// Replays a packet CSV (and optional GPS and units files) through the same
/// classification and statistics as a simulated run.
pub fn cmd_replay(
    nmea_path: Option<&Path>,
    packets_path: &Path,
    units_path: Option<&Path>,
    out_dir: &Path,
    options: &ReplayOptions,
) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let mut warnings = Vec::new();

    let file = fs::File::open(packets_path).map_err(io_err(packets_path))?;
    let parsed = parse_packet_log(file, options.mode)
        .map_err(|source| CliError::PacketLog { path: packets_path.to_path_buf(), source })?;
    for e in &parsed.errors {
        warnings.push(format!("{}: skipped {e}", packets_path.display()));
    }

    let fixes = match nmea_path {
        None => Vec::new(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            let (fixes, errors) = parse_nmea_text(&text);
            if options.mode == ParseMode::Strict && !errors.is_empty() {
                return Err(CliError::Nmea { path: p.to_path_buf(), errors });
            }
            for e in &errors {
                warnings.push(format!("{}: skipped line {}: {}", p.display(), e.line, e.error));
            }
            fixes
        }
    };

    let units = match units_path {
        None => Vec::new(),
        Some(p) => {
            let file = fs::File::open(p).map_err(io_err(p))?;
            read_units(file).map_err(|source| CliError::Units { path: p.to_path_buf(), source })?
        }
    };

    let log = ingest::replay(&fixes, &parsed.records, &units)?;
    let written = write_outputs(&log, out_dir, &options.analysis, options.kmz, &mut warnings)?;
    Ok(report(String::new(), started, written, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareAxis {
    Antenna,
    Relay,
    Power,
}

impl CompareAxis {
    /// The two legs; the first is the configuration expected to do better.
    pub fn legs(self, base: &ScenarioConfig) -> [(&'static str, ScenarioConfig); 2] {
        let mut a = base.clone();
        let mut b = base.clone();
        match self {
            CompareAxis::Antenna => {
                let ant = base.train.antenna;
                if !matches!(ant.kind, AntennaKind::UniformLinearArray { .. }) {
                    a.train.antenna = AntennaPattern {
                        kind: AntennaKind::UniformLinearArray { elements: 8, spacing: DEFAULT_ELEMENT_SPACING_WL },
                        ..ant
                    };
                }
                b.train.antenna = AntennaPattern { kind: AntennaKind::Omni, ..ant };
                [("directional", a), ("omni", b)]
            }
            CompareAxis::Relay => {
                a.rsus.iter_mut().for_each(|r| r.relay_enabled = true);
                b.rsus.iter_mut().for_each(|r| r.relay_enabled = false);
                [("relay_on", a), ("relay_off", b)]
            }
            CompareAxis::Power => {
                a.set_train_power_class(PowerClass::PublicSafety);
                b.set_train_power_class(PowerClass::Private);
                [("public_safety", a), ("private", b)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegReport {
    pub label: String,
    pub scenario_hash: String,
    pub outputs: OutputPaths,
    pub stats: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinDelta {
    pub lower_m: f64,
    pub upper_m: f64,
    pub pdr_a: Option<f64>,
    pub pdr_b: Option<f64>,
    pub delta: Option<f64>,
}

/// First leg minus second leg for one receiver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceiverDelta {
    pub pdr_a: f64,
    pub pdr_b: f64,
    pub pdr_delta: f64,
    pub coverage_a_m: Option<f64>,
    pub coverage_b_m: Option<f64>,
    /// Missing coverage counts as 0 m.
    pub coverage_delta_m: f64,
    pub coverage_ratio: Option<f64>,
    pub bins: Vec<BinDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub axis: CompareAxis,
    pub seed: u64,
    pub legs: [LegReport; 2],
    pub receivers: BTreeMap<String, ReceiverDelta>,
    pub wall_time_ms: u64,
}

fn receiver_delta(a: &crate::sim::ReceiverStats, b: &crate::sim::ReceiverStats, width: f64) -> ReceiverDelta {
    let index = |lower: f64| (lower / width).round() as i64;
    let a_bins: BTreeMap<i64, f64> = a.bins.iter().map(|x| (index(x.lower_m), x.pdr)).collect();
    let b_bins: BTreeMap<i64, f64> = b.bins.iter().map(|x| (index(x.lower_m), x.pdr)).collect();
    let keys: BTreeSet<i64> = a_bins.keys().chain(b_bins.keys()).copied().collect();
    let bins = keys
        .into_iter()
        .map(|k| {
            let (pa, pb) = (a_bins.get(&k).copied(), b_bins.get(&k).copied());
            BinDelta {
                lower_m: k as f64 * width,
                upper_m: (k + 1) as f64 * width,
                pdr_a: pa,
                pdr_b: pb,
                delta: pa.zip(pb).map(|(x, y)| x - y),
            }
        })
        .collect();
    ReceiverDelta {
        pdr_a: a.pdr,
        pdr_b: b.pdr,
        pdr_delta: a.pdr - b.pdr,
        coverage_a_m: a.coverage_range_m,
        coverage_b_m: b.coverage_range_m,
        coverage_delta_m: a.coverage_range_m.unwrap_or(0.0) - b.coverage_range_m.unwrap_or(0.0),
        coverage_ratio: a.coverage_range_m.zip(b.coverage_range_m).map(|(x, y)| x / y),
        bins,
    }
}

/// Runs the two legs of `axis` with the same seed, each into its own
/// subdirectory of `out_dir`, and writes `comparison.json`.
pub fn cmd_compare(
    config_path: &Path,
    axis: CompareAxis,
    out_dir: &Path,
    options: &RunOptions,
    mode: Execution,
) -> Result<ComparisonReport, CliError> {
    let started = Instant::now();
    let base = load_config(config_path, options.seed)?;
    let seed = base.seed;
    let legs = axis.legs(&base);
    let scenarios: Vec<(&str, Scenario)> = legs
        .into_iter()
        .map(|(label, cfg)| validate(config_path, cfg).map(|s| (label, s)))
        .collect::<Result<_, _>>()?;

    let reports = try_map_with(mode, &scenarios, |(label, scenario)| {
        let log = run(scenario);
        let mut warnings = Vec::new();
        let written =
            write_outputs(&log, &out_dir.join(label), &scenario.config().analysis, options.kmz, &mut warnings)?;
        for w in &warnings {
            log::warn!("{label}: {w}");
        }
        Ok::<_, CliError>(LegReport {
            label: label.to_string(),
            scenario_hash: scenario.hash(),
            outputs: written.0,
            stats: written.1,
        })
    })?;
    let [a, b]: [LegReport; 2] = reports.try_into().expect("two legs");

    let mut receivers = BTreeMap::new();
    if let (Some(sa), Some(sb)) = (&a.stats, &b.stats) {
        for (id, ra) in &sa.receivers {
            if let Some(rb) = sb.receivers.get(id) {
                receivers.insert(id.clone(), receiver_delta(ra, rb, sa.bin_width_m));
            }
        }
    }
    let report = ComparisonReport {
        axis,
        seed,
        legs: [a, b],
        receivers,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join(COMPARISON_JSON);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &report).map_err(write_err(&path))?;
    Ok(report)
}

impl ComparisonReport {
    pub fn summary_table(&self) -> String {
        let [a, b] = &self.legs;
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.0}"));
        let mut out = format!(
            "{:<16} {:>9} {:>9} {:>9} {:>11} {:>11} {:>9}\n",
            "receiver",
            format!("pdr:{}", short(&a.label)),
            format!("pdr:{}", short(&b.label)),
            "delta",
            format!("cov:{}", short(&a.label)),
            format!("cov:{}", short(&b.label)),
            "ratio"
        );
        for (id, d) in &self.receivers {
            out.push_str(&format!(
                "{:<16} {:>9.3} {:>9.3} {:>+9.3} {:>11} {:>11} {:>9}\n",
                id,
                d.pdr_a,
                d.pdr_b,
                d.pdr_delta,
                opt(d.coverage_a_m),
                opt(d.coverage_b_m),
                d.coverage_ratio.map_or_else(|| "-".to_string(), |r| format!("{r:.3}")),
            ));
        }
        out
    }
}

fn short(label: &str) -> &str {
    label.get(..5).unwrap_or(label)
}
