//! The packet-reception CSV log.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

pub const PACKET_LOG_HEADER: [&str; 6] = ["seq", "tx_time_ms", "tx_lat", "tx_lon", "rsu_received", "obu_received"];

/// One broadcast and whether any RSU and any OBU decoded it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub seq: u64,
    pub tx_time_ms: u64,
    /// Absent when positions come from GPS interpolation.
    pub tx_position: Option<GeoPoint>,
    pub rsu_received: bool,
    pub obu_received: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ParseMode {
    /// Keep good rows and collect row errors.
    #[default]
    Lenient,
    /// Fail on the first file with any row error.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn list(errors: &[RowError]) -> String {
    errors.iter().map(|e| format!("\n  {e}")).collect()
}

#[derive(Debug, Error)]
pub enum PacketLogError {
    #[error("missing column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("{} bad row(s):{}", .0.len(), list(.0))]
    Rows(Vec<RowError>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedPacketLog {
    pub records: Vec<PacketRecord>,
    /// Rows dropped in lenient mode.
    pub errors: Vec<RowError>,
}

fn parse_bool(text: &str) -> Option<bool> {
    match text {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

struct Columns([usize; 6]);

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self, PacketLogError> {
        let mut idx = [0; 6];
        let mut missing = Vec::new();
        for (slot, name) in idx.iter_mut().zip(PACKET_LOG_HEADER) {
            match headers.iter().position(|h| h.trim() == name) {
                Some(i) => *slot = i,
                None => missing.push(name.to_string()),
            }
        }
        if missing.is_empty() {
            Ok(Columns(idx))
        } else {
            Err(PacketLogError::MissingColumns(missing))
        }
    }

    fn row(&self, rec: &csv::StringRecord) -> Result<PacketRecord, String> {
        let get = |k: usize| {
            rec.get(self.0[k])
                .map(str::trim)
                .ok_or_else(|| format!("missing value for {}", PACKET_LOG_HEADER[k]))
        };
        let int = |k: usize| -> Result<u64, String> {
            let t = get(k)?;
            t.parse().map_err(|_| format!("{}: not a non-negative integer: {t:?}", PACKET_LOG_HEADER[k]))
        };
        let flag = |k: usize| -> Result<bool, String> {
            let t = get(k)?;
            parse_bool(t).ok_or_else(|| format!("{}: expected one of 0, 1, true, false, got {t:?}", PACKET_LOG_HEADER[k]))
        };
        let seq = int(0)?;
        let tx_time_ms = int(1)?;
        let tx_position = match (get(2)?, get(3)?) {
            ("", "") => None,
            ("", _) | (_, "") => return Err("tx_lat and tx_lon must both be set or both be empty".into()),
            (lat, lon) => {
                let lat: f64 = lat.parse().map_err(|_| format!("tx_lat: not a number: {lat:?}"))?;
                let lon: f64 = lon.parse().map_err(|_| format!("tx_lon: not a number: {lon:?}"))?;
                Some(GeoPoint::new(lat, lon).map_err(|e| e.to_string())?)
            }
        };
        Ok(PacketRecord { seq, tx_time_ms, tx_position, rsu_received: flag(4)?, obu_received: flag(5)? })
    }
}

/// Parses a packet log. Rows violating ordering or uniqueness are row errors.
pub fn parse_packet_log<R: Read>(reader: R, mode: ParseMode) -> Result<ParsedPacketLog, PacketLogError> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let columns = Columns::locate(csv.headers()?)?;
    let mut out = ParsedPacketLog::default();
    let mut seen = HashSet::new();
    let mut last_time = None;
    for rec in csv.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = columns.row(&rec).and_then(|r| {
            if !seen.insert((r.seq, r.tx_time_ms)) {
                return Err(format!("duplicate (seq, tx_time_ms) = ({}, {})", r.seq, r.tx_time_ms));
            }
            if last_time.is_some_and(|t| r.tx_time_ms < t) {
                return Err(format!("tx_time_ms {} decreases", r.tx_time_ms));
            }
            last_time = Some(r.tx_time_ms);
            Ok(r)
        });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(message) => out.errors.push(RowError { line, message }),
        }
    }
    if mode == ParseMode::Strict && !out.errors.is_empty() {
        return Err(PacketLogError::Rows(out.errors));
    }
    Ok(out)
}

/// Writes the canonical form: exact header, shortest round-trip floats, 1/0 flags.
pub fn write_packet_log<W: Write>(writer: W, records: &[PacketRecord]) -> Result<(), PacketLogError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(PACKET_LOG_HEADER)?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for r in records {
        let (lat, lon) = r.tx_position.map_or((String::new(), String::new()), |p| (p.lat().to_string(), p.lon().to_string()));
        csv.write_record([
            r.seq.to_string(),
            r.tx_time_ms.to_string(),
            lat,
            lon,
            flag(r.rsu_received).to_string(),
            flag(r.obu_received).to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
