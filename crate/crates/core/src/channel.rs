//! Link budget and per-packet reception at 5.9 GHz.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::antenna::{gain_dbi, AntennaPattern};
use crate::geo::{bearing, haversine_distance, GeoPoint};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const DSRC_FREQUENCY_HZ: f64 = 5.9e9;
pub const PRIVATE_POWER_DBM: f64 = 11.0;
pub const PUBLIC_SAFETY_POWER_DBM: f64 = 23.0;
pub const DEFAULT_MCS: &str = "MCS2";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("frequency must be positive, got {0} Hz")]
    Frequency(f64),
    #[error("degenerate link geometry: transmitter and receiver coincide")]
    DegenerateGeometry,
    #[error("MCS not in sensitivity table: {0}")]
    UnknownMcs(String),
    #[error("tx power {power} dBm does not match {class:?} class ({nominal} dBm) and override is not set")]
    PowerClassMismatch { class: PowerClass, power: f64, nominal: f64 },
    #[error("path-loss exponent {0} outside [1.6, 6.0]")]
    Exponent(f64),
    #[error("reference distance must be positive, got {0} m")]
    ReferenceDistance(f64),
    #[error("shadowing sigma must be non-negative, got {0} dB")]
    Sigma(f64),
    #[error("logistic slope must be positive, got {0} /dB")]
    Slope(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerClass {
    Private,
    PublicSafety,
}

impl PowerClass {
    pub fn nominal_dbm(self) -> f64 {
        match self {
            PowerClass::Private => PRIVATE_POWER_DBM,
            PowerClass::PublicSafety => PUBLIC_SAFETY_POWER_DBM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub power_class: PowerClass,
    /// Explicit transmit power; defaults to the class's nominal level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_power_dbm: Option<f64>,
    /// Allows `tx_power_dbm` to differ from the class's nominal level.
    #[serde(default)]
    pub power_override: bool,
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    #[serde(default = "default_mcs")]
    pub mcs: String,
}

fn default_frequency() -> f64 {
    DSRC_FREQUENCY_HZ
}

fn default_mcs() -> String {
    DEFAULT_MCS.to_string()
}

impl RadioConfig {
    pub fn new(power_class: PowerClass) -> Self {
        RadioConfig {
            power_class,
            tx_power_dbm: None,
            power_override: false,
            frequency_hz: DSRC_FREQUENCY_HZ,
            mcs: DEFAULT_MCS.to_string(),
        }
    }

    pub fn tx_power(&self) -> f64 {
        self.tx_power_dbm.unwrap_or_else(|| self.power_class.nominal_dbm())
    }

    /// Checks the power-class rule and frequency. MCS membership is checked
    /// against a table with [`SensitivityTable::sensitivity`].
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(ChannelError::Frequency(self.frequency_hz));
        }
        let nominal = self.power_class.nominal_dbm();
        match self.tx_power_dbm {
            Some(p) if p != nominal && !self.power_override => Err(ChannelError::PowerClassMismatch {
                class: self.power_class,
                power: p,
                nominal,
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossKind {
    FreeSpace,
    LogDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub kind: PathLossKind,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_reference_distance")]
    pub reference_distance_m: f64,
    #[serde(default)]
    pub shadowing_sigma_db: f64,
}

fn default_exponent() -> f64 {
    2.0
}

fn default_reference_distance() -> f64 {
    1.0
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel::free_space()
    }
}

impl PathLossModel {
    pub fn free_space() -> Self {
        PathLossModel {
            kind: PathLossKind::FreeSpace,
            exponent: 2.0,
            reference_distance_m: 1.0,
            shadowing_sigma_db: 0.0,
        }
    }

    pub fn log_distance(exponent: f64, shadowing_sigma_db: f64) -> Self {
        PathLossModel {
            kind: PathLossKind::LogDistance,
            exponent,
            reference_distance_m: 1.0,
            shadowing_sigma_db,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(1.6..=6.0).contains(&self.exponent) {
            return Err(ChannelError::Exponent(self.exponent));
        }
        if !(self.reference_distance_m > 0.0 && self.reference_distance_m.is_finite()) {
            return Err(ChannelError::ReferenceDistance(self.reference_distance_m));
        }
        if !(self.shadowing_sigma_db >= 0.0 && self.shadowing_sigma_db.is_finite()) {
            return Err(ChannelError::Sigma(self.shadowing_sigma_db));
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.kind == PathLossKind::FreeSpace || self.shadowing_sigma_db == 0.0
    }
}

/// Free-space path loss `20 log10(4 pi d f / c)`.
pub fn free_space_path_loss_db(distance_m: f64, frequency_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * distance_m * frequency_hz / SPEED_OF_LIGHT).log10()
}

/// Path loss in dB. `shadow_z` is a standard-normal draw scaled by the
/// model's sigma; it is ignored for free space or when absent.
pub fn path_loss_db(
    model: &PathLossModel,
    distance_m: f64,
    frequency_hz: f64,
    shadow_z: Option<f64>,
) -> Result<f64, ChannelError> {
    if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
        return Err(ChannelError::Frequency(frequency_hz));
    }
    let d = distance_m.max(model.reference_distance_m);
    Ok(match model.kind {
        PathLossKind::FreeSpace => free_space_path_loss_db(d, frequency_hz),
        PathLossKind::LogDistance => {
            let d0 = model.reference_distance_m;
            free_space_path_loss_db(d0, frequency_hz)
                + 10.0 * model.exponent * (d / d0).log10()
                + model.shadowing_sigma_db * shadow_z.unwrap_or(0.0)
        }
    })
}

/// Minimum decodable receive power per MCS, dBm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensitivityTable(pub BTreeMap<String, f64>);

impl Default for SensitivityTable {
    /// Typical 10 MHz DSRC receiver figures: BPSK 1/2, QPSK 1/2, 16-QAM 1/2.
    fn default() -> Self {
        SensitivityTable(BTreeMap::from([
            ("MCS0".to_string(), -94.0),
            ("MCS2".to_string(), -88.0),
            ("MCS4".to_string(), -82.0),
        ]))
    }
}

impl SensitivityTable {
    pub fn sensitivity(&self, mcs: &str) -> Result<f64, ChannelError> {
        self.0.get(mcs).copied().ok_or_else(|| ChannelError::UnknownMcs(mcs.to_string()))
    }
}

/// Hard threshold: success iff `prx >= sensitivity`.
pub fn packet_success(prx_dbm: f64, table: &SensitivityTable, mcs: &str) -> Result<bool, ChannelError> {
    Ok(prx_dbm >= table.sensitivity(mcs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReceptionModel {
    #[default]
    Hard,
    /// `P(success) = 1 / (1 + exp(-slope (prx - sens)))`.
    Logistic {
        #[serde(default = "default_slope")]
        slope_per_db: f64,
    },
}

fn default_slope() -> f64 {
    1.0
}

impl ReceptionModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        match *self {
            ReceptionModel::Logistic { slope_per_db } if !(slope_per_db > 0.0 && slope_per_db.is_finite()) => {
                Err(ChannelError::Slope(slope_per_db))
            }
            _ => Ok(()),
        }
    }

    /// Decides reception. `uniform` in `[0, 1)` is only consulted by the
    /// logistic model.
    pub fn decide(&self, prx_dbm: f64, sensitivity_dbm: f64, uniform: f64) -> bool {
        match *self {
            ReceptionModel::Hard => prx_dbm >= sensitivity_dbm,
            ReceptionModel::Logistic { slope_per_db } => {
                let p = 1.0 / (1.0 + (-slope_per_db * (prx_dbm - sensitivity_dbm)).exp());
                uniform < p
            }
        }
    }
}

/// One side of a link: position plus a pattern already pointed at its
/// boresight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEnd {
    pub position: GeoPoint,
    pub pattern: AntennaPattern,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub distance_m: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub path_loss_db: f64,
    pub prx_dbm: f64,
}

pub fn evaluate_link(
    tx: &RadioConfig,
    tx_end: &LinkEnd,
    rx_end: &LinkEnd,
    model: &PathLossModel,
    shadow_z: Option<f64>,
) -> Result<LinkBudget, ChannelError> {
    let distance_m = haversine_distance(&tx_end.position, &rx_end.position);
    let toward_rx = bearing(&tx_end.position, &rx_end.position).map_err(|_| ChannelError::DegenerateGeometry)?;
    let toward_tx = bearing(&rx_end.position, &tx_end.position).map_err(|_| ChannelError::DegenerateGeometry)?;
    let tx_gain_dbi = gain_dbi(&tx_end.pattern, toward_rx);
    let rx_gain_dbi = gain_dbi(&rx_end.pattern, toward_tx);
    let pl = path_loss_db(model, distance_m, tx.frequency_hz, shadow_z)?;
    Ok(LinkBudget {
        distance_m,
        tx_gain_dbi,
        rx_gain_dbi,
        path_loss_db: pl,
        prx_dbm: tx.tx_power() + tx_gain_dbi + rx_gain_dbi - pl,
    })
}

/// `tx_power + G_tx(toward rx) + G_rx(toward tx) - PL(d)`.
pub fn received_power_dbm(
    tx: &RadioConfig,
    tx_end: &LinkEnd,
    rx_end: &LinkEnd,
    model: &PathLossModel,
    shadow_z: Option<f64>,
) -> Result<f64, ChannelError> {
    evaluate_link(tx, tx_end, rx_end, model, shadow_z).map(|b| b.prx_dbm)
}

/// Which transmission a per-link draw belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkStream {
    Direct,
    Relay,
}

/// Per-link random draws, seeded only by `(scenario seed, packet seq,
/// receiver id, stream)` so evaluation order never matters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDraws {
    pub shadow_z: f64,
    pub uniform: f64,
}

impl LinkDraws {
    pub fn for_link(scenario_seed: u64, seq: u64, receiver_id: &str, stream: LinkStream) -> Self {
        let mut h = Sha256::new();
        h.update(scenario_seed.to_le_bytes());
        h.update(seq.to_le_bytes());
        h.update([match stream {
            LinkStream::Direct => 0u8,
            LinkStream::Relay => 1u8,
        }]);
        h.update(receiver_id.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let shadow_z: f64 = rng.sample(StandardNormal);
        let uniform: f64 = rng.gen();
        LinkDraws { shadow_z, uniform }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antenna::AntennaPattern;
    use proptest::prelude::*;

    // 20 log10(4 pi d / lambda), computed through the wavelength.
    fn fspl_oracle(d: f64, f: f64) -> f64 {
        let lambda = SPEED_OF_LIGHT / f;
        20.0 * (4.0 * std::f64::consts::PI * d / lambda).log10()
    }

    fn end(lat: f64, lon: f64, pattern: AntennaPattern) -> LinkEnd {
        LinkEnd { position: GeoPoint::new(lat, lon).unwrap(), pattern }
    }

    fn fs() -> PathLossModel {
        PathLossModel::free_space()
    }

    #[test]
    fn fspl_examples() {
        let one = path_loss_db(&fs(), 1.0, DSRC_FREQUENCY_HZ, None).unwrap();
        assert!((one - fspl_oracle(1.0, 5.9e9)).abs() < 1e-9);
        assert!((one - 47.86).abs() < 0.01);
        assert!((SPEED_OF_LIGHT / 5.9e9 - 0.050812).abs() < 1e-6);
        let km = path_loss_db(&fs(), 1000.0, DSRC_FREQUENCY_HZ, None).unwrap();
        assert!((km - 107.87).abs() < 0.02);
        for base in [1.0, 7.3, 250.0, 4000.0] {
            let a = path_loss_db(&fs(), base, DSRC_FREQUENCY_HZ, None).unwrap();
            let b = path_loss_db(&fs(), 2.0 * base, DSRC_FREQUENCY_HZ, None).unwrap();
            assert!((b - a - 6.021).abs() < 0.001);
        }
    }

    #[test]
    fn path_loss_clamps_and_rejects_bad_frequency() {
        let at_ref = path_loss_db(&fs(), 1.0, DSRC_FREQUENCY_HZ, None).unwrap();
        assert_eq!(path_loss_db(&fs(), 0.2, DSRC_FREQUENCY_HZ, None).unwrap(), at_ref);
        assert_eq!(path_loss_db(&fs(), 0.0, DSRC_FREQUENCY_HZ, None).unwrap(), at_ref);
        assert_eq!(path_loss_db(&fs(), 10.0, 0.0, None), Err(ChannelError::Frequency(0.0)));
    }

    #[test]
    fn log_distance_matches_free_space_at_exponent_two() {
        let ld = PathLossModel::log_distance(2.0, 0.0);
        for d in [1.0, 10.0, 333.0] {
            let a = path_loss_db(&ld, d, DSRC_FREQUENCY_HZ, Some(1.3)).unwrap();
            let b = path_loss_db(&fs(), d, DSRC_FREQUENCY_HZ, None).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
        let shadowed = PathLossModel::log_distance(3.0, 4.0);
        let base = path_loss_db(&shadowed, 100.0, DSRC_FREQUENCY_HZ, None).unwrap();
        let drawn = path_loss_db(&shadowed, 100.0, DSRC_FREQUENCY_HZ, Some(-0.5)).unwrap();
        assert!((drawn - (base - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn model_validation() {
        assert!(PathLossModel::log_distance(1.5, 0.0).validate().is_err());
        assert!(PathLossModel::log_distance(6.5, 0.0).validate().is_err());
        assert!(PathLossModel::log_distance(3.0, -1.0).validate().is_err());
        let mut m = fs();
        m.reference_distance_m = 0.0;
        assert_eq!(m.validate(), Err(ChannelError::ReferenceDistance(0.0)));
        assert!(fs().validate().is_ok());
    }

    #[test]
    fn received_power_examples() {
        // 1 m separation due north at the equator
        let dist_deg = 1.0 / (EARTH_RADIUS_DEG_M);
        let omni = AntennaPattern::omni(12.0);
        let tx = end(0.0, 0.0, omni);
        let rx = end(dist_deg, 0.0, omni);
        let public = RadioConfig::new(PowerClass::PublicSafety);
        let private = RadioConfig::new(PowerClass::Private);
        let p23 = received_power_dbm(&public, &tx, &rx, &fs(), None).unwrap();
        assert!((p23 - (23.0 + 12.0 + 12.0 - 47.86)).abs() < 0.05);
        let p11 = received_power_dbm(&private, &tx, &rx, &fs(), None).unwrap();
        assert!((p23 - p11 - 12.0).abs() < 1e-12);

        let ula = AntennaPattern::ula(8, 0.5, 12.0).unwrap().oriented(0.0);
        let directional = received_power_dbm(&public, &end(0.0, 0.0, ula), &rx, &fs(), None).unwrap();
        assert!((directional - p23 - 20.0 * 8f64.log10()).abs() < 1e-9);
        assert!((directional - p23 - 18.06).abs() < 0.01);
    }

    const EARTH_RADIUS_DEG_M: f64 = crate::geo::EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

    #[test]
    fn coincident_positions_are_rejected() {
        let omni = AntennaPattern::omni(0.0);
        let a = end(1.0, 1.0, omni);
        assert_eq!(
            received_power_dbm(&RadioConfig::new(PowerClass::Private), &a, &a, &fs(), None),
            Err(ChannelError::DegenerateGeometry)
        );
    }

    #[test]
    fn power_class_rule() {
        let mut r = RadioConfig::new(PowerClass::Private);
        assert_eq!(r.tx_power(), 11.0);
        r.tx_power_dbm = Some(23.0);
        assert!(matches!(r.validate(), Err(ChannelError::PowerClassMismatch { .. })));
        r.power_override = true;
        assert!(r.validate().is_ok());
        assert_eq!(r.tx_power(), 23.0);
        let mut q = RadioConfig::new(PowerClass::PublicSafety);
        q.tx_power_dbm = Some(23.0);
        assert!(q.validate().is_ok());
    }

    #[test]
    fn packet_success_threshold() {
        let mut table = SensitivityTable::default();
        table.0.insert("custom".into(), -85.0);
        assert!(packet_success(-72.9, &table, "custom").unwrap());
        assert!(packet_success(-85.0, &table, "custom").unwrap());
        assert!(!packet_success(-85.01, &table, "custom").unwrap());
        assert_eq!(
            packet_success(-50.0, &table, "MCS7"),
            Err(ChannelError::UnknownMcs("MCS7".into()))
        );
        assert_eq!(table.sensitivity("MCS0").unwrap(), -94.0);
        assert_eq!(table.sensitivity("MCS2").unwrap(), -88.0);
        assert_eq!(table.sensitivity("MCS4").unwrap(), -82.0);
    }

    #[test]
    fn logistic_model() {
        let m = ReceptionModel::Logistic { slope_per_db: 1.0 };
        // at sensitivity the success probability is exactly one half
        assert!(m.decide(-88.0, -88.0, 0.49));
        assert!(!m.decide(-88.0, -88.0, 0.51));
        assert!(m.decide(-70.0, -88.0, 0.999));
        assert!(!m.decide(-110.0, -88.0, 0.001));
        assert!(ReceptionModel::Logistic { slope_per_db: 0.0 }.validate().is_err());
        assert!(ReceptionModel::Hard.decide(-88.0, -88.0, 0.99));
    }

    #[test]
    fn link_draws_are_keyed_not_ordered() {
        let a = LinkDraws::for_link(42, 7, "obu-1", LinkStream::Direct);
        let _ = LinkDraws::for_link(42, 8, "obu-1", LinkStream::Direct);
        assert_eq!(a, LinkDraws::for_link(42, 7, "obu-1", LinkStream::Direct));
        assert_ne!(a, LinkDraws::for_link(42, 7, "obu-1", LinkStream::Relay));
        assert_ne!(a, LinkDraws::for_link(43, 7, "obu-1", LinkStream::Direct));
        assert!((0.0..1.0).contains(&a.uniform));
    }

    proptest! {
        #[test]
        fn path_loss_monotone(d in 0.0..20_000.0f64, dd in 0.0..1000.0f64, n in 1.6..6.0f64) {
            for m in [fs(), PathLossModel::log_distance(n, 0.0)] {
                let a = path_loss_db(&m, d, DSRC_FREQUENCY_HZ, None).unwrap();
                let b = path_loss_db(&m, d + dd, DSRC_FREQUENCY_HZ, None).unwrap();
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn received_power_strictly_decreasing(d in 2.0..5000.0f64, extra in 1.0..1000.0f64, brg in 0.0..360.0f64) {
            let origin = GeoPoint::new(39.0, -104.8).unwrap();
            let ula = AntennaPattern::ula(8, 0.5, 12.0).unwrap().oriented(brg + 5.0);
            let tx = LinkEnd { position: origin, pattern: ula };
            let at = |dist: f64| {
                let v = crate::geo::EnuVector {
                    east: dist * brg.to_radians().sin(),
                    north: dist * brg.to_radians().cos(),
                    up: 0.0,
                };
                crate::geo::from_enu(&origin, &v).unwrap()
            };
            let radio = RadioConfig::new(PowerClass::PublicSafety);
            let near = LinkEnd { position: at(d), pattern: AntennaPattern::omni(3.0) };
            let far = LinkEnd { position: at(d + extra), pattern: AntennaPattern::omni(3.0) };
            let pn = received_power_dbm(&radio, &tx, &near, &fs(), None).unwrap();
            let pf = received_power_dbm(&radio, &tx, &far, &fs(), None).unwrap();
            prop_assert!(pf < pn);
        }

        #[test]
        fn reciprocity(lat in 38.9..39.1f64, lon in -105.0..-104.8f64, b1 in 0.0..360.0f64, b2 in 0.0..360.0f64) {
            let a = LinkEnd {
                position: GeoPoint::new(39.0, -104.9).unwrap(),
                pattern: AntennaPattern::ula(8, 0.5, 12.0).unwrap().oriented(b1),
            };
            let b = LinkEnd {
                position: GeoPoint::new(lat, lon).unwrap(),
                pattern: AntennaPattern::ula(4, 0.7, 5.0).unwrap().oriented(b2),
            };
            prop_assume!(a.position != b.position);
            let radio = RadioConfig::new(PowerClass::Private);
            let m = PathLossModel::log_distance(2.7, 0.0);
            let ab = evaluate_link(&radio, &a, &b, &m, None).unwrap();
            let ba = evaluate_link(&radio, &b, &a, &m, None).unwrap();
            prop_assert!((ab.path_loss_db - ba.path_loss_db).abs() < 1e-9);
            prop_assert!(((ab.tx_gain_dbi + ab.rx_gain_dbi) - (ba.tx_gain_dbi + ba.rx_gain_dbi)).abs() < 1e-9);
        }
    }
}
