//! Scenario configuration (the on-disk TOML schema) and its validated form.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::antenna::AntennaPattern;
use crate::channel::{PathLossModel, PowerClass, RadioConfig, ReceptionModel, SensitivityTable};
use crate::geo::{GeoPoint, Polyline};
use crate::protocol::{DEFAULT_BROADCAST_PERIOD_MS, DEFAULT_CLEAR_MARGIN_M, DEFAULT_HOLD_TIME_MS};

pub const DEFAULT_TIMESTEP_MS: u64 = 100;
pub const DEFAULT_BIN_WIDTH_M: f64 = 50.0;
pub const DEFAULT_COVERAGE_PDR: f64 = 0.9;

/// `[lat, lon]` in degrees.
pub type LatLon = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timestep")]
    pub timestep_ms: u64,
    pub duration_ms: u64,
    #[serde(default = "default_period")]
    pub broadcast_period_ms: u64,
    pub track: Vec<LatLon>,
    pub crossing_arclength_m: f64,
    #[serde(default = "default_clear_margin")]
    pub clear_margin_m: f64,
    #[serde(default)]
    pub roads: Vec<Vec<LatLon>>,
    pub train: TrainConfig,
    #[serde(default)]
    pub rsus: Vec<RsuConfig>,
    #[serde(default)]
    pub obus: Vec<ObuConfig>,
    #[serde(default)]
    pub path_loss: PathLossModel,
    #[serde(default)]
    pub sensitivity: SensitivityTable,
    #[serde(default)]
    pub reception: ReceptionModel,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_train_id")]
    pub id: String,
    #[serde(default)]
    pub initial_arclength_m: f64,
    pub speed_mps: f64,
    pub radio: RadioConfig,
    pub antenna: AntennaPattern,
    /// Antenna boresight relative to the direction of travel.
    #[serde(default)]
    pub mount_offset_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsuConfig {
    pub id: String,
    pub position: LatLon,
    /// Relay transmitter; defaults to the train's radio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio: Option<RadioConfig>,
    /// Defaults to the train's antenna. `boresight_deg` is absolute here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna: Option<AntennaPattern>,
    #[serde(default = "default_true")]
    pub relay_enabled: bool,
    #[serde(default)]
    pub relay_delay_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObuConfig {
    pub id: String,
    pub road: usize,
    #[serde(default)]
    pub initial_arclength_m: f64,
    #[serde(default)]
    pub speed_mps: f64,
    /// Only validated; receivers decode at the transmitter's MCS.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio: Option<RadioConfig>,
    #[serde(default = "default_obu_antenna")]
    pub antenna: AntennaPattern,
    #[serde(default)]
    pub mount_offset_deg: f64,
    #[serde(default = "default_hold_time")]
    pub hold_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_bin_width")]
    pub bin_width_m: f64,
    #[serde(default = "default_coverage_pdr")]
    pub coverage_pdr: f64,
    /// Render every n-th packet in KML output (1 = all).
    #[serde(default = "default_decimation")]
    pub kml_decimation: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bin_width_m: DEFAULT_BIN_WIDTH_M,
            coverage_pdr: DEFAULT_COVERAGE_PDR,
            kml_decimation: 1,
        }
    }
}

fn default_timestep() -> u64 {
    DEFAULT_TIMESTEP_MS
}
fn default_period() -> u64 {
    DEFAULT_BROADCAST_PERIOD_MS
}
fn default_clear_margin() -> f64 {
    DEFAULT_CLEAR_MARGIN_M
}
fn default_train_id() -> String {
    "train".to_string()
}
fn default_true() -> bool {
    true
}
fn default_hold_time() -> u64 {
    DEFAULT_HOLD_TIME_MS
}
fn default_obu_antenna() -> AntennaPattern {
    AntennaPattern::omni(12.0)
}
fn default_bin_width() -> f64 {
    DEFAULT_BIN_WIDTH_M
}
fn default_coverage_pdr() -> f64 {
    DEFAULT_COVERAGE_PDR
}
fn default_decimation() -> usize {
    1
}

/// A single validation failure, located by its config path.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

/// Every problem found in a scenario, not just the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<FieldError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation error(s)", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  {}: {}", e.path, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

impl ValidationErrors {
    pub fn mentions(&self, path: &str) -> bool {
        self.0.iter().any(|e| e.path == path)
    }
}

#[derive(Default)]
struct Collector(Vec<FieldError>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl fmt::Display) {
        self.0.push(FieldError { path: path.into(), message: message.to_string() });
    }

    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl fmt::Display) {
        if !ok {
            self.push(path, message);
        }
    }

    fn point(&mut self, path: String, p: LatLon) -> Option<GeoPoint> {
        match GeoPoint::new(p[0], p[1]) {
            Ok(g) => Some(g),
            Err(e) => {
                self.push(path, e);
                None
            }
        }
    }

    fn polyline(&mut self, path: &str, pts: &[LatLon]) -> Option<Polyline> {
        let mut out = Vec::with_capacity(pts.len());
        let mut ok = true;
        for (i, p) in pts.iter().enumerate() {
            match self.point(format!("{path}[{i}]"), *p) {
                Some(g) => out.push(g),
                None => ok = false,
            }
        }
        if !ok {
            return None;
        }
        match Polyline::new(out) {
            Ok(l) => Some(l),
            Err(e) => {
                self.push(path, e);
                None
            }
        }
    }

    fn radio(&mut self, path: &str, radio: &RadioConfig, table: &SensitivityTable, transmits: bool) {
        if let Err(e) = radio.validate() {
            let field = match e {
                crate::channel::ChannelError::Frequency(_) => "frequency_hz",
                _ => "tx_power_dbm",
            };
            self.push(format!("{path}.{field}"), e);
        }
        if transmits {
            if let Err(e) = table.sensitivity(&radio.mcs) {
                self.push(format!("{path}.mcs"), e);
            }
        }
    }

    fn antenna(&mut self, path: &str, a: &AntennaPattern) {
        if let Err(e) = a.validate() {
            self.push(path, e);
        }
    }

    fn speed(&mut self, path: String, v: f64) {
        self.check(v.is_finite() && v >= 0.0, path, format!("speed {v} must be finite and non-negative"));
    }

    fn arclength(&mut self, path: String, s: f64, line: Option<&Polyline>) {
        if let Some(l) = line {
            self.check(
                (0.0..=l.length()).contains(&s),
                path,
                format!("arclength {s} outside [0, {:.3}]", l.length()),
            );
        }
    }
}

/// A resolved relay unit.
#[derive(Debug, Clone, PartialEq)]
pub struct RsuUnit {
    pub id: String,
    pub position: GeoPoint,
    pub radio: RadioConfig,
    pub antenna: AntennaPattern,
    pub relay_enabled: bool,
    pub relay_delay_ms: u64,
}

/// A validated scenario, ready to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    config: ScenarioConfig,
    track: Polyline,
    roads: Vec<Polyline>,
    rsus: Vec<RsuUnit>,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, ValidationErrors> {
        let mut c = Collector::default();
        let cfg = &config;

        c.check(cfg.timestep_ms > 0, "timestep_ms", "timestep must be positive");
        c.check(cfg.broadcast_period_ms > 0, "broadcast_period_ms", "broadcast period must be positive");
        if cfg.timestep_ms > 0 && cfg.broadcast_period_ms > 0 {
            c.check(
                cfg.broadcast_period_ms.is_multiple_of(cfg.timestep_ms),
                "timestep_ms",
                format!(
                    "timestep {} ms does not divide broadcast period {} ms",
                    cfg.timestep_ms, cfg.broadcast_period_ms
                ),
            );
        }
        c.check(
            cfg.clear_margin_m.is_finite() && cfg.clear_margin_m >= 0.0,
            "clear_margin_m",
            "clear margin must be finite and non-negative",
        );

        let track = c.polyline("track", &cfg.track);
        c.arclength("crossing_arclength_m".into(), cfg.crossing_arclength_m, track.as_ref());
        let roads: Vec<Option<Polyline>> =
            cfg.roads.iter().enumerate().map(|(i, r)| c.polyline(&format!("roads[{i}]"), r)).collect();

        let table = &cfg.sensitivity;
        for (mcs, s) in &table.0 {
            c.check(s.is_finite(), format!("sensitivity.{mcs}"), "sensitivity must be finite");
        }
        if let Err(e) = cfg.path_loss.validate() {
            c.push("path_loss", e);
        }
        if let Err(e) = cfg.reception.validate() {
            c.push("reception", e);
        }
        let a = &cfg.analysis;
        c.check(a.bin_width_m.is_finite() && a.bin_width_m > 0.0, "analysis.bin_width_m", "bin width must be positive");
        c.check(
            a.coverage_pdr > 0.0 && a.coverage_pdr <= 1.0,
            "analysis.coverage_pdr",
            "coverage threshold must lie in (0, 1]",
        );
        c.check(a.kml_decimation >= 1, "analysis.kml_decimation", "decimation must be at least 1");

        let t = &cfg.train;
        c.check(!t.id.is_empty(), "train.id", "id must not be empty");
        c.arclength("train.initial_arclength_m".into(), t.initial_arclength_m, track.as_ref());
        c.speed("train.speed_mps".into(), t.speed_mps);
        c.radio("train.radio", &t.radio, table, true);
        c.antenna("train.antenna", &t.antenna);
        c.check(t.mount_offset_deg.is_finite(), "train.mount_offset_deg", "mount offset must be finite");

        let mut ids = BTreeSet::new();
        if cfg.rsus.is_empty() && cfg.obus.is_empty() {
            c.push("obus", "scenario has no receivers; configure at least one RSU or OBU");
        }
        let mut rsus = Vec::new();
        for (i, r) in cfg.rsus.iter().enumerate() {
            let p = format!("rsus[{i}]");
            check_id(&mut c, &mut ids, &format!("{p}.id"), &r.id, &t.id);
            let pos = c.point(format!("{p}.position"), r.position);
            let radio = r.radio.clone().unwrap_or_else(|| t.radio.clone());
            let antenna = r.antenna.unwrap_or(t.antenna);
            c.radio(&format!("{p}.radio"), &radio, table, r.relay_enabled);
            c.antenna(&format!("{p}.antenna"), &antenna);
            if cfg.timestep_ms > 0 {
                c.check(
                    r.relay_delay_ms % cfg.timestep_ms == 0,
                    format!("{p}.relay_delay_ms"),
                    "relay delay must be a multiple of the timestep",
                );
            }
            if let Some(position) = pos {
                rsus.push(RsuUnit {
                    id: r.id.clone(),
                    position,
                    radio,
                    antenna,
                    relay_enabled: r.relay_enabled,
                    relay_delay_ms: r.relay_delay_ms,
                });
            }
        }
        for (i, o) in cfg.obus.iter().enumerate() {
            let p = format!("obus[{i}]");
            check_id(&mut c, &mut ids, &format!("{p}.id"), &o.id, &t.id);
            match roads.get(o.road) {
                None => c.push(format!("{p}.road"), format!("road index {} out of range ({} roads)", o.road, roads.len())),
                Some(road) => c.arclength(format!("{p}.initial_arclength_m"), o.initial_arclength_m, road.as_ref()),
            }
            c.speed(format!("{p}.speed_mps"), o.speed_mps);
            if let Some(radio) = &o.radio {
                c.radio(&format!("{p}.radio"), radio, table, false);
            }
            c.antenna(&format!("{p}.antenna"), &o.antenna);
            c.check(o.mount_offset_deg.is_finite(), format!("{p}.mount_offset_deg"), "mount offset must be finite");
        }

        if !c.0.is_empty() {
            return Err(ValidationErrors(c.0));
        }
        Ok(Scenario {
            track: track.expect("validated"),
            roads: roads.into_iter().map(|r| r.expect("validated")).collect(),
            rsus,
            config,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn track(&self) -> &Polyline {
        &self.track
    }

    pub fn roads(&self) -> &[Polyline] {
        &self.roads
    }

    pub fn rsus(&self) -> &[RsuUnit] {
        &self.rsus
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        hex(&Sha256::digest(json))
    }

    pub fn step_count(&self) -> u64 {
        self.config.duration_ms / self.config.timestep_ms
    }
}

fn check_id(c: &mut Collector, ids: &mut BTreeSet<String>, path: &str, id: &str, train_id: &str) {
    if id.is_empty() {
        c.push(path, "id must not be empty");
    } else if id == train_id || !ids.insert(id.to_string()) {
        c.push(path, format!("duplicate unit id {id:?}"));
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Sets the train transmitter to a power class at its nominal level.
    pub fn set_train_power_class(&mut self, class: PowerClass) {
        self.train.radio.power_class = class;
        self.train.radio.tx_power_dbm = None;
        self.train.radio.power_override = false;
    }
}
