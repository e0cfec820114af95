//! Rebuilds a log from field records so it can be classified and analyzed
//! exactly like a simulated one.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{from_enu, haversine_distance, to_enu, GeoError, GeoPoint};
use crate::sim::{PacketFate, Provenance, ReceiverInfo, Reception, Role, SimLog, TracePoint};

use super::nmea::GpsFix;
use super::packets::PacketRecord;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("no packet records to replay")]
    NoRecords,
    #[error("{0} record(s) have no position and no GPS fixes were given; supply an NMEA file")]
    NeedGps(usize),
    #[error("record(s) outside the GPS time span: seq {}", fmt_seqs(.0))]
    Uncovered(Vec<u64>),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("units file: {0}")]
    Units(#[from] csv::Error),
}

fn fmt_seqs(seqs: &[u64]) -> String {
    const SHOWN: usize = 20;
    let mut s = seqs.iter().take(SHOWN).map(u64::to_string).collect::<Vec<_>>().join(", ");
    if seqs.len() > SHOWN {
        s.push_str(&format!(" and {} more", seqs.len() - SHOWN));
    }
    s
}

/// A receiver's identity and where it was, as written beside a packet log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub role: Role,
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    /// Moving units have no single position to measure distances from.
    pub mobile: bool,
}

pub fn write_units<W: Write>(writer: W, units: &[UnitRecord]) -> Result<(), csv::Error> {
    let mut csv = csv::Writer::from_writer(writer);
    for u in units {
        csv.serialize(u)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_units<R: Read>(reader: R) -> Result<Vec<UnitRecord>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

/// Units for the receivers of a simulated log.
pub fn units_of(log: &SimLog) -> Vec<UnitRecord> {
    log.receivers
        .iter()
        .filter_map(|r| {
            let p = r.marker?;
            let mobile = log.traces.get(&r.id).is_some_and(|t| t.iter().any(|tp| tp.position != p));
            Some(UnitRecord { role: r.role, id: r.id.clone(), lat: p.lat(), lon: p.lon(), mobile })
        })
        .collect()
}

/// Position at `t_ms` by linear interpolation in the local ENU frame of the
/// earlier bracketing fix. `fixes` must be sorted by time.
pub fn interpolate(fixes: &[GpsFix], t_ms: u64) -> Result<Option<GeoPoint>, GeoError> {
    let i = fixes.partition_point(|f| u64::from(f.time_ms) <= t_ms);
    if i == 0 {
        return Ok(None);
    }
    let a = &fixes[i - 1];
    if u64::from(a.time_ms) == t_ms {
        return Ok(Some(a.position));
    }
    let Some(b) = fixes.get(i) else { return Ok(None) };
    let frac = (t_ms - u64::from(a.time_ms)) as f64 / f64::from(b.time_ms - a.time_ms);
    let zero = to_enu(&a.position, &a.position)?;
    let v = zero.lerp(&to_enu(&a.position, &b.position)?, frac);
    from_enu(&a.position, &v).map(Some)
}

/// Receivers of a replayed log: the real unit when a role has exactly one,
/// otherwise a role-named stand-in with no position.
fn replay_receivers(units: &[UnitRecord]) -> Result<Vec<(ReceiverInfo, Option<GeoPoint>)>, GeoError> {
    let mut out = Vec::new();
    for role in [Role::Rsu, Role::Obu] {
        let of_role: Vec<&UnitRecord> = units.iter().filter(|u| u.role == role).collect();
        if let [u] = of_role.as_slice() {
            let p = GeoPoint::new(u.lat, u.lon)?;
            out.push((ReceiverInfo { id: u.id.clone(), role, marker: Some(p) }, (!u.mobile).then_some(p)));
        } else {
            if of_role.len() > 1 {
                log::warn!("{} {} units; per-unit statistics collapse to the role", of_role.len(), role.as_str());
            }
            out.push((ReceiverInfo { id: role.as_str().to_string(), role, marker: None }, None));
        }
    }
    Ok(out)
}

/// Builds a replayed log. Records keep their own positions when present;
/// the rest are placed from `fixes`, whose times share the records' clock.
pub fn replay(fixes: &[GpsFix], records: &[PacketRecord], units: &[UnitRecord]) -> Result<SimLog, ReplayError> {
    if records.is_empty() {
        return Err(ReplayError::NoRecords);
    }
    let unpositioned = records.iter().filter(|r| r.tx_position.is_none()).count();
    if unpositioned > 0 && fixes.is_empty() {
        return Err(ReplayError::NeedGps(unpositioned));
    }
    let mut fixes = fixes.to_vec();
    fixes.sort_by_key(|f| f.time_ms);
    fixes.dedup_by_key(|f| f.time_ms);

    let mut positions = Vec::with_capacity(records.len());
    let mut uncovered = Vec::new();
    for r in records {
        match r.tx_position {
            Some(p) => positions.push(p),
            None => match interpolate(&fixes, r.tx_time_ms)? {
                Some(p) => positions.push(p),
                None => uncovered.push(r.seq),
            },
        }
    }
    if !uncovered.is_empty() {
        return Err(ReplayError::Uncovered(uncovered));
    }

    let receivers = replay_receivers(units)?;
    let fates = records
        .iter()
        .zip(&positions)
        .map(|(r, &tx_position)| {
            let receptions = receivers
                .iter()
                .map(|(info, fixed)| {
                    let received = match info.role {
                        Role::Rsu => r.rsu_received,
                        Role::Obu => r.obu_received,
                    };
                    let reception = Reception {
                        received,
                        prx_dbm: None,
                        via_relay: false,
                        distance_m: fixed.map(|p| haversine_distance(&tx_position, &p)),
                    };
                    (info.id.clone(), reception)
                })
                .collect();
            PacketFate { seq: r.seq, tx_time_ms: r.tx_time_ms, tx_position, receptions }
        })
        .collect();
    let trace = records
        .iter()
        .zip(&positions)
        .map(|(r, &position)| TracePoint { t_ms: r.tx_time_ms, position })
        .collect();

    Ok(SimLog {
        scenario_hash: String::new(),
        provenance: Provenance::Replayed,
        receivers: receivers.into_iter().map(|(info, _)| info).collect(),
        fates,
        traces: BTreeMap::from([("train".to_string(), trace)]),
        warnings: BTreeMap::new(),
    })
}
