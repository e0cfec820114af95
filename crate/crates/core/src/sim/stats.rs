//! Packet delivery statistics over a log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kmlout::{KmlError, PacketClass};

use super::log::{Provenance, Role, SimLog};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no packets to analyze")]
    NoPackets,
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error(transparent)]
    Classify(#[from] KmlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub bin_width_m: f64,
    pub coverage_pdr: f64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            bin_width_m: super::scenario::DEFAULT_BIN_WIDTH_M,
            coverage_pdr: super::scenario::DEFAULT_COVERAGE_PDR,
        }
    }
}

/// Packets whose transmitter-receiver distance fell in `[lower_m, upper_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lower_m: f64,
    pub upper_m: f64,
    pub packets: usize,
    pub received: usize,
    pub pdr: f64,
    /// Direct-path counters; only known for simulated logs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_received: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_pdr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverStats {
    pub role: Role,
    pub packets: usize,
    pub received: usize,
    pub pdr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_received: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_pdr: Option<f64>,
    pub bins: Vec<DistanceBin>,
    /// Upper edge of the farthest bin with PDR at or above the threshold.
    pub coverage_range_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_coverage_range_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_prx_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleStats {
    pub packets: usize,
    pub received: usize,
    pub pdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub packets: usize,
    pub bin_width_m: f64,
    pub coverage_pdr: f64,
    pub class_counts: BTreeMap<PacketClass, usize>,
    /// Any-unit-of-the-role delivery, the basis of the packet colours.
    pub roles: BTreeMap<Role, RoleStats>,
    pub receivers: BTreeMap<String, ReceiverStats>,
}

#[derive(Default)]
struct Counter {
    packets: usize,
    received: usize,
    direct: usize,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn compute_stats(log: &SimLog, options: &StatsOptions) -> Result<Stats, StatsError> {
    if log.fates.is_empty() {
        return Err(StatsError::NoPackets);
    }
    let w = options.bin_width_m;
    if !(w > 0.0 && w.is_finite()) {
        return Err(StatsError::BinWidth(w));
    }
    let simulated = log.provenance == Provenance::Simulated;

    let mut class_counts: BTreeMap<PacketClass, usize> = PacketClass::ALL.iter().map(|c| (*c, 0)).collect();
    let mut roles: BTreeMap<Role, Counter> = BTreeMap::new();
    for role in [Role::Rsu, Role::Obu] {
        if !log.ids_with_role(role).is_empty() {
            roles.insert(role, Counter::default());
        }
    }
    for fate in &log.fates {
        *class_counts.entry(log.classify(fate)?).or_default() += 1;
        let (rsu, obu) = log.role_receptions(fate);
        for (role, got) in [(Role::Rsu, rsu), (Role::Obu, obu)] {
            if let Some(c) = roles.get_mut(&role) {
                c.packets += 1;
                c.received += usize::from(got);
            }
        }
    }

    let mut receivers = BTreeMap::new();
    for info in &log.receivers {
        let mut total = Counter::default();
        let mut bins: BTreeMap<u64, Counter> = BTreeMap::new();
        let mut prx_sum = 0.0;
        let mut prx_n = 0usize;
        for fate in &log.fates {
            let Some(r) = fate.receptions.get(&info.id) else { continue };
            total.packets += 1;
            total.received += usize::from(r.received);
            total.direct += usize::from(r.received_direct());
            if let Some(p) = r.prx_dbm {
                prx_sum += p;
                prx_n += 1;
            }
            if let Some(d) = r.distance_m {
                let b = bins.entry((d / w).floor() as u64).or_default();
                b.packets += 1;
                b.received += usize::from(r.received);
                b.direct += usize::from(r.received_direct());
            }
        }
        let bins: Vec<DistanceBin> = bins
            .into_iter()
            .map(|(i, c)| DistanceBin {
                lower_m: i as f64 * w,
                upper_m: (i + 1) as f64 * w,
                packets: c.packets,
                received: c.received,
                pdr: ratio(c.received, c.packets),
                direct_received: simulated.then_some(c.direct),
                direct_pdr: simulated.then(|| ratio(c.direct, c.packets)),
            })
            .collect();
        let coverage = |pick: &dyn Fn(&DistanceBin) -> Option<f64>| {
            bins.iter()
                .filter(|b| pick(b).is_some_and(|p| p >= options.coverage_pdr))
                .map(|b| b.upper_m)
                .last()
        };
        let coverage_range_m = coverage(&|b| Some(b.pdr));
        let direct_coverage_range_m = if simulated { coverage(&|b| b.direct_pdr) } else { None };
        receivers.insert(
            info.id.clone(),
            ReceiverStats {
                role: info.role,
                packets: total.packets,
                received: total.received,
                pdr: ratio(total.received, total.packets),
                direct_received: simulated.then_some(total.direct),
                direct_pdr: simulated.then(|| ratio(total.direct, total.packets)),
                bins,
                coverage_range_m,
                direct_coverage_range_m,
                mean_prx_dbm: (prx_n > 0).then(|| prx_sum / prx_n as f64),
            },
        );
    }

    Ok(Stats {
        packets: log.fates.len(),
        bin_width_m: w,
        coverage_pdr: options.coverage_pdr,
        class_counts,
        roles: roles
            .into_iter()
            .map(|(role, c)| (role, RoleStats { packets: c.packets, received: c.received, pdr: ratio(c.received, c.packets) }))
            .collect(),
        receivers,
    })
}

/// The delivery figures recoverable from the packet CSV alone: PDR fields
/// without receive power or relay-path detail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliverySummary {
    pub packets: usize,
    pub class_counts: BTreeMap<PacketClass, usize>,
    pub roles: BTreeMap<Role, RoleStats>,
    pub receivers: BTreeMap<String, ReceiverDelivery>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceiverDelivery {
    pub role: Role,
    pub packets: usize,
    pub received: usize,
    pub pdr: f64,
    pub bins: Vec<(f64, usize, usize, f64)>,
    pub coverage_range_m: Option<f64>,
}

impl Stats {
    pub fn delivery_summary(&self) -> DeliverySummary {
        DeliverySummary {
            packets: self.packets,
            class_counts: self.class_counts.clone(),
            roles: self.roles.clone(),
            receivers: self
                .receivers
                .iter()
                .map(|(id, r)| {
                    (
                        id.clone(),
                        ReceiverDelivery {
                            role: r.role,
                            packets: r.packets,
                            received: r.received,
                            pdr: r.pdr,
                            bins: r.bins.iter().map(|b| (b.lower_m, b.packets, b.received, b.pdr)).collect(),
                            coverage_range_m: r.coverage_range_m,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Plain-text table for terminals.
    pub fn summary_table(&self) -> String {
        let mut out = format!("packets: {}\n", self.packets);
        for (class, n) in &self.class_counts {
            out.push_str(&format!("  {:<7} {n}\n", class.name()));
        }
        out.push_str(&format!(
            "{:<16} {:>4} {:>8} {:>8} {:>8} {:>12} {:>12}\n",
            "receiver", "role", "packets", "pdr", "direct", "coverage_m", "direct_cov_m"
        ));
        let opt = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"));
        for (id, r) in &self.receivers {
            out.push_str(&format!(
                "{:<16} {:>4} {:>8} {:>8.3} {:>8} {:>12} {:>12}\n",
                id,
                r.role.as_str(),
                r.packets,
                r.pdr,
                opt(r.direct_pdr, 3),
                opt(r.coverage_range_m, 0),
                opt(r.direct_coverage_range_m, 0),
            ));
        }
        out
    }
}
