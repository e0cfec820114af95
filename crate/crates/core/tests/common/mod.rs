#![allow(dead_code)]

use std::path::PathBuf;

use railcross::geo::{from_enu, haversine_distance, EnuVector, GeoPoint};
use railcross::sim::{LatLon, ScenarioConfig, BUNDLED_SCENARIO};

pub fn bundled_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/crossing.toml")
}

pub fn bundled() -> ScenarioConfig {
    ScenarioConfig::from_toml(BUNDLED_SCENARIO).expect("bundled scenario parses")
}

/// The crossing point of the bundled scenario.
pub fn crossing() -> GeoPoint {
    GeoPoint::new(38.44, -104.3).unwrap()
}

pub fn distance_to_crossing(p: &GeoPoint) -> f64 {
    haversine_distance(p, &crossing())
}

/// `[lat, lon]` at an ENU offset from `origin`.
pub fn at(origin: &GeoPoint, east: f64, north: f64) -> LatLon {
    let p = from_enu(origin, &EnuVector { east, north, up: 0.0 }).unwrap();
    [p.lat(), p.lon()]
}

pub fn write_config(dir: &std::path::Path, name: &str, cfg: &ScenarioConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}
