use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geo::GeoPoint;
use crate::ingest::PacketRecord;
use crate::kmlout::{classify_multi, ClassifiedFate, KmlError, PacketClass, UnitMarker};

use super::scenario::hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Rsu,
    Obu,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Rsu => "rsu",
            Role::Obu => "obu",
        }
    }
}

/// Whether a log came from the simulator or was rebuilt from field records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Simulated,
    Replayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverInfo {
    pub id: String,
    pub role: Role,
    /// Where the unit's marker is drawn: its initial position.
    pub marker: Option<GeoPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reception {
    /// Decoded directly or through a relay.
    pub received: bool,
    /// Direct-link receive power; absent for replayed logs.
    pub prx_dbm: Option<f64>,
    /// Decoded only thanks to a relay copy.
    pub via_relay: bool,
    /// Transmitter-receiver distance at transmit time, when known.
    pub distance_m: Option<f64>,
}

impl Reception {
    pub fn received_direct(&self) -> bool {
        self.received && !self.via_relay
    }
}

/// What happened to one broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketFate {
    pub seq: u64,
    pub tx_time_ms: u64,
    pub tx_position: GeoPoint,
    pub receptions: BTreeMap<String, Reception>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t_ms: u64,
    pub position: GeoPoint,
}

/// A warning-state change of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningChange {
    pub t_ms: u64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub scenario_hash: String,
    pub provenance: Provenance,
    pub receivers: Vec<ReceiverInfo>,
    pub fates: Vec<PacketFate>,
    pub traces: BTreeMap<String, Vec<TracePoint>>,
    pub warnings: BTreeMap<String, Vec<WarningChange>>,
}

impl SimLog {
    pub fn ids_with_role(&self, role: Role) -> Vec<&str> {
        self.receivers.iter().filter(|r| r.role == role).map(|r| r.id.as_str()).collect()
    }

    pub fn role_of(&self, id: &str) -> Option<Role> {
        self.receivers.iter().find(|r| r.id == id).map(|r| r.role)
    }

    /// `(any RSU received, any OBU received)`.
    pub fn role_receptions(&self, fate: &PacketFate) -> (bool, bool) {
        let mut rsu = false;
        let mut obu = false;
        for (id, r) in &fate.receptions {
            match self.role_of(id) {
                Some(Role::Rsu) => rsu |= r.received,
                Some(Role::Obu) => obu |= r.received,
                None => {}
            }
        }
        (rsu, obu)
    }

    pub fn classify(&self, fate: &PacketFate) -> Result<PacketClass, KmlError> {
        let rsus = self.ids_with_role(Role::Rsu);
        let obus = self.ids_with_role(Role::Obu);
        classify_multi(fate.receptions.iter().map(|(id, r)| (id.as_str(), r.received)), &rsus, &obus)
    }

    pub fn classified_fates(&self) -> Result<Vec<ClassifiedFate>, KmlError> {
        self.fates
            .iter()
            .map(|f| {
                Ok(ClassifiedFate {
                    seq: f.seq,
                    tx_time_ms: f.tx_time_ms,
                    position: f.tx_position,
                    class: self.classify(f)?,
                })
            })
            .collect()
    }

    pub fn unit_markers(&self, role: Role) -> Vec<UnitMarker> {
        self.receivers
            .iter()
            .filter(|r| r.role == role)
            .filter_map(|r| r.marker.map(|position| UnitMarker { id: r.id.clone(), position }))
            .collect()
    }

    /// Rows for the canonical packet CSV.
    pub fn packet_records(&self) -> Vec<PacketRecord> {
        self.fates
            .iter()
            .map(|f| {
                let (rsu_received, obu_received) = self.role_receptions(f);
                PacketRecord {
                    seq: f.seq,
                    tx_time_ms: f.tx_time_ms,
                    tx_position: Some(f.tx_position),
                    rsu_received,
                    obu_received,
                }
            })
            .collect()
    }

    /// Hex SHA-256 over the canonical JSON form of the whole log.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("log serializes");
        hex(&Sha256::digest(json))
    }
}
