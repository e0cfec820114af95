//! NMEA 0183 GGA and RMC sentences.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

pub const MS_PER_DAY: u32 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NmeaError {
    #[error("checksum error: sentence says {expected:02X}, computed {actual:02X}")]
    Checksum { expected: u8, actual: u8 },
    #[error("unsupported sentence {0:?}")]
    Unsupported(String),
    #[error("parse error in {field}: {detail}")]
    Parse { field: &'static str, detail: String },
}

impl NmeaError {
    /// Unsupported sentence types are skipped rather than reported as failures.
    pub fn is_skippable(&self) -> bool {
        matches!(self, NmeaError::Unsupported(_))
    }
}

fn parse_err(field: &'static str, detail: impl fmt::Display) -> NmeaError {
    NmeaError::Parse { field, detail: detail.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SentenceKind {
    Gga,
    Rmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    /// Milliseconds since midnight UTC.
    pub time_ms: u32,
    pub position: GeoPoint,
    /// GGA fix quality; for RMC, 1 when the status is `A` and 0 otherwise.
    pub quality: u8,
    pub kind: SentenceKind,
}

/// XOR of every byte in `body` (the text between `$` and `*`).
pub fn checksum(body: &[u8]) -> u8 {
    body.iter().fold(0, |acc, b| acc ^ b)
}

pub fn parse_nmea_sentence(line: &str) -> Result<GpsFix, NmeaError> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.is_empty() {
        return Err(parse_err("sentence", "empty line"));
    }
    if !line.is_ascii() {
        return Err(parse_err("sentence", "non-ASCII input"));
    }
    let rest = line.strip_prefix('$').ok_or_else(|| parse_err("sentence", "missing leading '$'"))?;
    let (body, sum) = rest.split_once('*').ok_or_else(|| parse_err("checksum", "missing '*'"))?;
    if sum.len() != 2 {
        return Err(parse_err("checksum", format!("expected two hex digits, got {sum:?}")));
    }
    let expected = u8::from_str_radix(sum, 16).map_err(|_| parse_err("checksum", format!("bad hex {sum:?}")))?;
    let actual = checksum(body.as_bytes());
    if expected != actual {
        return Err(NmeaError::Checksum { expected, actual });
    }

    let fields: Vec<&str> = body.split(',').collect();
    let address = fields[0];
    if address.len() != 5 || !address.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err(parse_err("address", format!("malformed address {address:?}")));
    }
    let field = |i: usize, name: &'static str| fields.get(i).copied().ok_or_else(|| parse_err(name, "missing field"));
    match &address[2..] {
        "GGA" => {
            let time_ms = parse_time(field(1, "time")?)?;
            let lat = parse_coord(field(2, "latitude")?, field(3, "latitude hemisphere")?, Axis::Lat)?;
            let lon = parse_coord(field(4, "longitude")?, field(5, "longitude hemisphere")?, Axis::Lon)?;
            let quality_text = field(6, "quality")?;
            let quality = quality_text
                .parse::<u8>()
                .map_err(|_| parse_err("quality", format!("not an integer: {quality_text:?}")))?;
            let alt_text = fields.get(9).copied().unwrap_or("");
            let alt = if alt_text.is_empty() {
                0.0
            } else {
                alt_text
                    .parse::<f64>()
                    .ok()
                    .filter(|a| a.is_finite())
                    .ok_or_else(|| parse_err("altitude", format!("not a number: {alt_text:?}")))?
            };
            let position = GeoPoint::with_alt(lat, lon, alt).map_err(|e| parse_err("position", e))?;
            Ok(GpsFix { time_ms, position, quality, kind: SentenceKind::Gga })
        }
        "RMC" => {
            let time_ms = parse_time(field(1, "time")?)?;
            let quality = match field(2, "status")? {
                "A" => 1,
                "V" => 0,
                other => return Err(parse_err("status", format!("expected A or V, got {other:?}"))),
            };
            let lat = parse_coord(field(3, "latitude")?, field(4, "latitude hemisphere")?, Axis::Lat)?;
            let lon = parse_coord(field(5, "longitude")?, field(6, "longitude hemisphere")?, Axis::Lon)?;
            let position = GeoPoint::new(lat, lon).map_err(|e| parse_err("position", e))?;
            Ok(GpsFix { time_ms, position, quality, kind: SentenceKind::Rmc })
        }
        other => Err(NmeaError::Unsupported(format!("{}{other}", &address[..2]))),
    }
}

/// `hhmmss` with optional fractional seconds.
fn parse_time(text: &str) -> Result<u32, NmeaError> {
    let bad = || parse_err("time", format!("expected hhmmss[.sss], got {text:?}"));
    if text.len() < 6 || !text.as_bytes()[..6].iter().all(u8::is_ascii_digit) {
        return Err(bad());
    }
    let hh: u32 = text[0..2].parse().map_err(|_| bad())?;
    let mm: u32 = text[2..4].parse().map_err(|_| bad())?;
    let ss: f64 = text[4..].parse().map_err(|_| bad())?;
    if hh > 23 || mm > 59 || !(0.0..60.0).contains(&ss) {
        return Err(bad());
    }
    let ms = ((hh * 3600 + mm * 60) as f64 * 1000.0 + (ss * 1000.0).round()) as u32;
    Ok(ms.min(MS_PER_DAY - 1))
}

#[derive(Clone, Copy)]
enum Axis {
    Lat,
    Lon,
}

/// `ddmm.mmmm` (latitude) or `dddmm.mmmm` (longitude) plus hemisphere.
fn parse_coord(text: &str, hemi: &str, axis: Axis) -> Result<f64, NmeaError> {
    let (name, hemi_name, pos, neg, max) = match axis {
        Axis::Lat => ("latitude", "latitude hemisphere", "N", "S", 90.0),
        Axis::Lon => ("longitude", "longitude hemisphere", "E", "W", 180.0),
    };
    let bad = |why: &str| parse_err(name, format!("{why}: {text:?}"));
    let int_len = text.find('.').unwrap_or(text.len());
    if int_len < 3 || !text.as_bytes()[..int_len].iter().all(u8::is_ascii_digit) {
        return Err(bad("expected degrees and minutes"));
    }
    let degrees: f64 = text[..int_len - 2].parse().map_err(|_| bad("bad degrees"))?;
    let minutes: f64 = text[int_len - 2..].parse().map_err(|_| bad("bad minutes"))?;
    if !(0.0..60.0).contains(&minutes) {
        return Err(bad("minutes out of range"));
    }
    let value = degrees + minutes / 60.0;
    if value > max {
        return Err(bad("out of range"));
    }
    if hemi == pos {
        Ok(value)
    } else if hemi == neg {
        Ok(-value)
    } else {
        Err(parse_err(hemi_name, format!("expected {pos} or {neg}, got {hemi:?}")))
    }
}

fn format_coord(value: f64, deg_width: usize) -> String {
    let abs = value.abs();
    let mut degrees = abs.trunc();
    let mut minutes = (abs - degrees) * 60.0;
    // keep rounding from producing "60.000000" minutes
    if (minutes * 1e6).round() >= 60e6 {
        degrees += 1.0;
        minutes = 0.0;
    }
    format!("{:0dw$}{:09.6}", degrees as u32, minutes, dw = deg_width)
}

fn format_time(ms: u32) -> String {
    let ms = ms % MS_PER_DAY;
    let (h, rem) = (ms / 3_600_000, ms % 3_600_000);
    let (m, rem) = (rem / 60_000, rem % 60_000);
    format!("{h:02}{m:02}{:02}.{:03}", rem / 1000, rem % 1000)
}

fn finish(body: String) -> String {
    let sum = checksum(body.as_bytes());
    format!("${body}*{sum:02X}")
}

fn hemispheres(p: &GeoPoint) -> (String, char, String, char) {
    (
        format_coord(p.lat(), 2),
        if p.lat() < 0.0 { 'S' } else { 'N' },
        format_coord(p.lon(), 3),
        if p.lon() < 0.0 { 'W' } else { 'E' },
    )
}

/// Serializes a fix as a `GPGGA` sentence.
pub fn to_gga(fix: &GpsFix) -> String {
    let (lat, ns, lon, ew) = hemispheres(&fix.position);
    finish(format!(
        "GPGGA,{},{lat},{ns},{lon},{ew},{},08,0.9,{:.1},M,0.0,M,,",
        format_time(fix.time_ms),
        fix.quality,
        fix.position.alt()
    ))
}

/// Serializes a fix as a `GPRMC` sentence; the date field is left empty.
pub fn to_rmc(fix: &GpsFix) -> String {
    let (lat, ns, lon, ew) = hemispheres(&fix.position);
    let status = if fix.quality > 0 { 'A' } else { 'V' };
    finish(format!("GPRMC,{},{status},{lat},{ns},{lon},{ew},0.0,0.0,,,,A", format_time(fix.time_ms)))
}

/// A parse failure on a numbered line of a multi-line input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub error: NmeaError,
}

/// Fixes from every parseable line, plus the failures that are not just
/// unsupported sentence types. Blank lines are ignored.
pub fn parse_nmea_text(text: &str) -> (Vec<GpsFix>, Vec<LineError>) {
    let mut fixes = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_nmea_sentence(line.trim()) {
            Ok(f) => fixes.push(f),
            Err(e) if e.is_skippable() => log::warn!("line {}: skipping {e}", i + 1),
            Err(error) => errors.push(LineError { line: i + 1, error }),
        }
    }
    (fixes, errors)
}
