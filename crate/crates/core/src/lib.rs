//! Packet-level simulation and field-log replay for a DSRC grade-crossing
//! warning system: a locomotive broadcasts warnings, a roadside unit relays
//! them, and vehicles on the approach roads hold a warning state.
//!
//! The pipeline is geometry ([`geo`]) and antenna patterns ([`antenna`]) into
//! link budgets ([`channel`]), the broadcast/relay/hold rules ([`protocol`]),
//! the fixed-timestep engine and statistics ([`sim`]), field-log parsing and
//! replay ([`ingest`]), and KML rendering ([`kmlout`]). [`commands`] ties them
//! together for the `railcross` binary.

pub mod antenna;
pub mod channel;
pub mod commands;
pub mod exec;
pub mod geo;
pub mod ingest;
pub mod kmlout;
pub mod protocol;
pub mod sim;

pub use exec::Execution;
pub use sim::{compute_stats, run, Scenario, ScenarioConfig, SimLog, Stats};
