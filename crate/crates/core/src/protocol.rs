//! Node roles: the train-mounted broadcaster, the crossing relay (RSU) and
//! the vehicle receivers (OBUs).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;

pub const DEFAULT_BROADCAST_PERIOD_MS: u64 = 100;
pub const DEFAULT_CLEAR_MARGIN_M: f64 = 100.0;
pub const DEFAULT_HOLD_TIME_MS: u64 = 3000;

/// The broadcast safety payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningMessage {
    pub train_id: String,
    pub seq: u64,
    pub position: GeoPoint,
    pub speed_mps: f64,
    pub heading_deg: f64,
    pub timestamp_ms: u64,
    pub relayed: bool,
    pub relay_id: Option<String>,
}

/// True while the train is approaching the crossing or has not yet moved
/// `clear_margin` past it. Travel is toward increasing arclength.
pub fn warning_active(train_arclength: f64, crossing_arclength: f64, clear_margin: f64) -> bool {
    train_arclength <= crossing_arclength + clear_margin
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub train_id: String,
    pub arclength: f64,
    pub speed_mps: f64,
    pub warning_active: bool,
    pub next_seq: u64,
}

impl TrainState {
    pub fn new(train_id: impl Into<String>, arclength: f64, speed_mps: f64) -> Self {
        TrainState {
            train_id: train_id.into(),
            arclength,
            speed_mps,
            warning_active: false,
            next_seq: 0,
        }
    }

    /// Emits a warning on broadcast epochs while the warning is active.
    pub fn next_broadcast(
        &mut self,
        now_ms: u64,
        period_ms: u64,
        position: GeoPoint,
        heading_deg: f64,
    ) -> Option<WarningMessage> {
        if !self.warning_active || period_ms == 0 || !now_ms.is_multiple_of(period_ms) {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        Some(WarningMessage {
            train_id: self.train_id.clone(),
            seq,
            position,
            speed_mps: self.speed_mps,
            heading_deg,
            timestamp_ms: now_ms,
            relayed: false,
            relay_id: None,
        })
    }
}

/// Crossing relay. Each `(train_id, seq)` is retransmitted at most once and
/// relayed copies are never relayed again.
#[derive(Debug, Clone, PartialEq)]
pub struct RsuState {
    pub id: String,
    pub position: GeoPoint,
    pub relay_enabled: bool,
    seen: BTreeSet<(String, u64)>,
}

impl RsuState {
    pub fn new(id: impl Into<String>, position: GeoPoint, relay_enabled: bool) -> Self {
        RsuState { id: id.into(), position, relay_enabled, seen: BTreeSet::new() }
    }

    pub fn has_seen(&self, train_id: &str, seq: u64) -> bool {
        self.seen.contains(&(train_id.to_string(), seq))
    }

    /// Handles a decoded message and returns the relay copy, if any.
    pub fn ingest(&mut self, msg: &WarningMessage) -> Option<WarningMessage> {
        if !self.relay_enabled || msg.relayed {
            return None;
        }
        if !self.seen.insert((msg.train_id.clone(), msg.seq)) {
            return None;
        }
        Some(WarningMessage { relayed: true, relay_id: Some(self.id.clone()), ..msg.clone() })
    }
}

/// Vehicle receiver warning state.
#[derive(Debug, Clone, PartialEq)]
pub struct ObuState {
    pub id: String,
    pub hold_time_ms: u64,
    last_msg_time_ms: Option<u64>,
}

impl ObuState {
    pub fn new(id: impl Into<String>, hold_time_ms: u64) -> Self {
        ObuState { id: id.into(), hold_time_ms, last_msg_time_ms: None }
    }

    pub fn last_msg_time_ms(&self) -> Option<u64> {
        self.last_msg_time_ms
    }

    /// Originals and relay copies are treated identically.
    pub fn ingest(&mut self, _msg: &WarningMessage, now_ms: u64) {
        self.last_msg_time_ms = Some(match self.last_msg_time_ms {
            Some(t) => t.max(now_ms),
            None => now_ms,
        });
    }

    pub fn warning_active(&self, now_ms: u64) -> bool {
        match self.last_msg_time_ms {
            Some(t) => now_ms >= t && now_ms - t <= self.hold_time_ms,
            None => false,
        }
    }
}
