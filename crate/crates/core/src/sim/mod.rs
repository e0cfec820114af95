//! Scenario loading, the simulation engine, and delivery statistics.

mod engine;
mod log;
mod scenario;
mod stats;

pub use engine::{run, SimError, SimEvent, World};
pub use log::{PacketFate, Provenance, ReceiverInfo, Reception, Role, SimLog, TracePoint, WarningChange};
pub use scenario::{
    AnalysisConfig, FieldError, LatLon, ObuConfig, RsuConfig, RsuUnit, Scenario, ScenarioConfig, TrainConfig,
    ValidationErrors, DEFAULT_BIN_WIDTH_M, DEFAULT_COVERAGE_PDR, DEFAULT_TIMESTEP_MS,
};
pub use stats::{
    compute_stats, DeliverySummary, DistanceBin, ReceiverDelivery, ReceiverStats, RoleStats, Stats, StatsError,
    StatsOptions,
};

use crate::exec::{map_with, Execution};

/// The demo scenario: one locomotive, one RSU beside the crossing, one parked OBU.
pub const BUNDLED_SCENARIO: &str = include_str!("../../scenarios/crossing.toml");

/// Runs independent scenarios, returning logs in input order.
pub fn run_many(scenarios: &[Scenario], mode: Execution) -> Vec<SimLog> {
    map_with(mode, scenarios, run)
}

impl AnalysisConfig {
    pub fn stats_options(&self) -> StatsOptions {
        StatsOptions { bin_width_m: self.bin_width_m, coverage_pdr: self.coverage_pdr }
    }
}
