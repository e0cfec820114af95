//! Spherical geodesy and path-following kinematics.
//!
//! All distances use a sphere with the WGS84 mean radius. Crossing scenarios
//! span a few kilometres, where the ellipsoidal correction is far below any
//! radio effect being modelled. Altitude is carried on [`GeoPoint`] but is
//! ignored by [`haversine_distance`] and [`bearing`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// WGS84 mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Maximum separation accepted by [`to_enu`].
pub const MAX_TANGENT_PLANE_RANGE_M: f64 = 100_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("undefined bearing: points coincide")]
    UndefinedBearing,
    #[error("out of tangent-plane range: {0:.1} m from origin")]
    OutOfTangentPlaneRange(f64),
    #[error("polyline needs at least two distinct vertices")]
    DegeneratePolyline,
    #[error("arclength out of bounds: {s} not in [0, {len}]")]
    ArclengthOutOfBounds { s: f64, len: f64 },
}

/// A WGS84 latitude/longitude in degrees, altitude in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
    alt: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
    #[serde(default)]
    alt: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;
    fn try_from(raw: RawPoint) -> Result<Self, GeoError> {
        GeoPoint::with_alt(raw.lat, raw.lon, raw.alt)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lon: p.lon, alt: p.alt }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        Self::with_alt(lat, lon, 0.0)
    }

    pub fn with_alt(lat: f64, lon: f64, alt: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(GeoPoint { lat, lon, alt: if alt.is_finite() { alt } else { 0.0 } })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn alt(&self) -> f64 {
        self.alt
    }
}

/// East-North-Up offset from a tangent-plane origin, metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnuVector {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuVector {
    pub fn norm(&self) -> f64 {
        (self.east * self.east + self.north * self.north + self.up * self.up).sqrt()
    }

    /// Componentwise `self + t * (other - self)`.
    pub fn lerp(&self, other: &EnuVector, t: f64) -> EnuVector {
        EnuVector {
            east: self.east + t * (other.east - self.east),
            north: self.north + t * (other.north - self.north),
            up: self.up + t * (other.up - self.up),
        }
    }
}

/// Great-circle distance in metres.
pub fn haversine_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    EARTH_RADIUS_M * central_angle(a, b)
}

fn central_angle(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Initial great-circle bearing from `a` to `b`, degrees clockwise from true
/// north in `[0, 360)`.
pub fn bearing(a: &GeoPoint, b: &GeoPoint) -> Result<f64, GeoError> {
    if a.lat == b.lat && a.lon == b.lon {
        return Err(GeoError::UndefinedBearing);
    }
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    Ok(normalize_degrees(y.atan2(x).to_degrees()))
}

/// Wraps any angle into `[0, 360)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Wraps an angular difference into `[-180, 180]`.
pub fn wrap_signed_degrees(deg: f64) -> f64 {
    let r = normalize_degrees(deg);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

fn to_ecef(p: &GeoPoint) -> [f64; 3] {
    let lat = p.lat.to_radians();
    let lon = p.lon.to_radians();
    let r = EARTH_RADIUS_M + p.alt;
    [r * lat.cos() * lon.cos(), r * lat.cos() * lon.sin(), r * lat.sin()]
}

/// Local tangent-plane coordinates of `p` relative to `origin`.
pub fn to_enu(origin: &GeoPoint, p: &GeoPoint) -> Result<EnuVector, GeoError> {
    let d = haversine_distance(origin, p);
    if d > MAX_TANGENT_PLANE_RANGE_M {
        return Err(GeoError::OutOfTangentPlaneRange(d));
    }
    let o = to_ecef(origin);
    let q = to_ecef(p);
    let (dx, dy, dz) = (q[0] - o[0], q[1] - o[1], q[2] - o[2]);
    let lat = origin.lat.to_radians();
    let lon = origin.lon.to_radians();
    let (slat, clat, slon, clon) = (lat.sin(), lat.cos(), lon.sin(), lon.cos());
    Ok(EnuVector {
        east: -slon * dx + clon * dy,
        north: -slat * clon * dx - slat * slon * dy + clat * dz,
        up: clat * clon * dx + clat * slon * dy + slat * dz,
    })
}

/// Inverse of [`to_enu`].
pub fn from_enu(origin: &GeoPoint, v: &EnuVector) -> Result<GeoPoint, GeoError> {
    let o = to_ecef(origin);
    let lat = origin.lat.to_radians();
    let lon = origin.lon.to_radians();
    let (slat, clat, slon, clon) = (lat.sin(), lat.cos(), lon.sin(), lon.cos());
    let dx = -slon * v.east - slat * clon * v.north + clat * clon * v.up;
    let dy = clon * v.east - slat * slon * v.north + clat * slon * v.up;
    let dz = clat * v.north + slat * v.up;
    let (x, y, z) = (o[0] + dx, o[1] + dy, o[2] + dz);
    let r = (x * x + y * y + z * z).sqrt();
    let out_lat = (z / r).clamp(-1.0, 1.0).asin().to_degrees();
    let out_lon = y.atan2(x).to_degrees();
    GeoPoint::with_alt(out_lat, out_lon, r - EARTH_RADIUS_M)
}

/// Point a fraction `f` of the way along the great circle from `a` to `b`.
fn intermediate_point(a: &GeoPoint, b: &GeoPoint, f: f64) -> GeoPoint {
    let delta = central_angle(a, b);
    if delta == 0.0 {
        return *a;
    }
    let sa = ((1.0 - f) * delta).sin() / delta.sin();
    let sb = (f * delta).sin() / delta.sin();
    let pa = to_ecef(&GeoPoint { alt: 0.0, ..*a });
    let pb = to_ecef(&GeoPoint { alt: 0.0, ..*b });
    let x = sa * pa[0] + sb * pb[0];
    let y = sa * pa[1] + sb * pb[1];
    let z = sa * pa[2] + sb * pb[2];
    let lat = z.atan2((x * x + y * y).sqrt()).to_degrees();
    let lon = y.atan2(x).to_degrees();
    GeoPoint { lat, lon, alt: a.alt + f * (b.alt - a.alt) }
}

/// An ordered path with precomputed cumulative arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<GeoPoint>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// Builds a path, dropping consecutive duplicate vertices.
    pub fn new(points: Vec<GeoPoint>) -> Result<Self, GeoError> {
        let mut vertices: Vec<GeoPoint> = Vec::with_capacity(points.len());
        let mut cumulative = Vec::with_capacity(points.len());
        for p in points {
            match vertices.last() {
                None => {
                    vertices.push(p);
                    cumulative.push(0.0);
                }
                Some(prev) => {
                    let d = haversine_distance(prev, &p);
                    if d > 0.0 {
                        let total = cumulative.last().copied().unwrap_or(0.0) + d;
                        vertices.push(p);
                        cumulative.push(total);
                    }
                }
            }
        }
        if vertices.len() < 2 {
            return Err(GeoError::DegeneratePolyline);
        }
        Ok(Polyline { vertices, cumulative })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn cumulative_length(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("polyline has at least two vertices")
    }

    /// Position and heading at arclength `s`.
    ///
    /// At an interior vertex the outgoing segment's heading is reported; at
    /// the final vertex the last segment's heading is reported.
    pub fn point_at_arclength(&self, s: f64) -> Result<(GeoPoint, f64), GeoError> {
        let len = self.length();
        if !(0.0..=len).contains(&s) {
            return Err(GeoError::ArclengthOutOfBounds { s, len });
        }
        let last_seg = self.vertices.len() - 2;
        // first segment whose end lies strictly beyond s, so a vertex maps to
        // its outgoing segment
        let seg = self.cumulative[1..].partition_point(|&c| c <= s).min(last_seg);
        let a = &self.vertices[seg];
        let b = &self.vertices[seg + 1];
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let f = ((s - self.cumulative[seg]) / seg_len).clamp(0.0, 1.0);
        let heading = bearing(a, b)?;
        let p = if f == 0.0 {
            *a
        } else if f == 1.0 {
            *b
        } else {
            intermediate_point(a, b, f)
        };
        Ok((p, heading))
    }
}
