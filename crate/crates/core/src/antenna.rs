//! Azimuth gain patterns: a single vertical omni element and an unsteered,
//! equal-amplitude uniform linear array of such elements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::geo::{normalize_degrees, wrap_signed_degrees};

/// Floor applied to the normalized array factor, dB.
pub const ARRAY_FACTOR_FLOOR_DB: f64 = -60.0;

pub const DEFAULT_ELEMENT_SPACING_WL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AntennaError {
    #[error("pattern has no array factor")]
    NoArrayFactor,
    #[error("array needs at least one element")]
    NoElements,
    #[error("element spacing {0} wavelengths outside (0, 1]")]
    Spacing(f64),
    #[error("feed loss {0} dB must be finite and non-negative")]
    FeedLoss(f64),
    #[error("element gain {0} dBi must be finite")]
    ElementGain(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AntennaKind {
    Omni,
    UniformLinearArray {
        elements: u32,
        /// Element spacing in wavelengths.
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
}

fn default_spacing() -> f64 {
    DEFAULT_ELEMENT_SPACING_WL
}

/// A parametric azimuth pattern with a boresight direction (degrees true).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    #[serde(flatten)]
    pub kind: AntennaKind,
    pub element_gain_dbi: f64,
    #[serde(default)]
    pub boresight_deg: f64,
    #[serde(default)]
    pub feed_loss_db: f64,
}

impl AntennaPattern {
    pub fn omni(element_gain_dbi: f64) -> Self {
        AntennaPattern {
            kind: AntennaKind::Omni,
            element_gain_dbi,
            boresight_deg: 0.0,
            feed_loss_db: 0.0,
        }
    }

    pub fn ula(elements: u32, spacing: f64, element_gain_dbi: f64) -> Result<Self, AntennaError> {
        let p = AntennaPattern {
            kind: AntennaKind::UniformLinearArray { elements, spacing },
            element_gain_dbi,
            boresight_deg: 0.0,
            feed_loss_db: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AntennaError> {
        if !self.element_gain_dbi.is_finite() {
            return Err(AntennaError::ElementGain(self.element_gain_dbi));
        }
        if !(self.feed_loss_db.is_finite() && self.feed_loss_db >= 0.0) {
            return Err(AntennaError::FeedLoss(self.feed_loss_db));
        }
        if let AntennaKind::UniformLinearArray { elements, spacing } = self.kind {
            if elements == 0 {
                return Err(AntennaError::NoElements);
            }
            if !(spacing > 0.0 && spacing <= 1.0) {
                return Err(AntennaError::Spacing(spacing));
            }
        }
        Ok(())
    }

    /// Same pattern pointed at `boresight_deg`.
    pub fn oriented(&self, boresight_deg: f64) -> Self {
        AntennaPattern { boresight_deg: normalize_degrees(boresight_deg), ..*self }
    }

    pub fn with_feed_loss(self, feed_loss_db: f64) -> Self {
        AntennaPattern { feed_loss_db, ..self }
    }

    /// Coherent-combining gain of the array over one element at boresight.
    pub fn array_gain_db(&self) -> f64 {
        match self.kind {
            AntennaKind::Omni => 0.0,
            AntennaKind::UniformLinearArray { elements, .. } => 20.0 * f64::from(elements).log10(),
        }
    }

    /// Peak gain, attained at boresight.
    pub fn peak_gain_dbi(&self) -> f64 {
        self.element_gain_dbi + self.array_gain_db() - self.feed_loss_db
    }
}

/// Normalized array factor in dB at `offset_deg` from broadside.
///
/// `|sin(N psi/2) / (N sin(psi/2))|` with `psi = 2 pi d sin(offset)`, floored
/// at [`ARRAY_FACTOR_FLOOR_DB`].
pub fn array_factor_db(pattern: &AntennaPattern, offset_deg: f64) -> Result<f64, AntennaError> {
    match pattern.kind {
        AntennaKind::Omni => Err(AntennaError::NoArrayFactor),
        AntennaKind::UniformLinearArray { elements, spacing } => {
            Ok(ula_factor_db(elements, spacing, offset_deg))
        }
    }
}

fn ula_factor_db(elements: u32, spacing: f64, offset_deg: f64) -> f64 {
    if elements <= 1 {
        return 0.0;
    }
    let n = f64::from(elements);
    let half_psi = std::f64::consts::PI * spacing * offset_deg.to_radians().sin();
    let den = n * half_psi.sin();
    if den.abs() < 1e-12 {
        // psi/2 at a multiple of pi: every element in phase
        return 0.0;
    }
    let amplitude = ((n * half_psi).sin() / den).abs();
    if amplitude <= 0.0 {
        return ARRAY_FACTOR_FLOOR_DB;
    }
    (20.0 * amplitude.log10()).max(ARRAY_FACTOR_FLOOR_DB)
}

/// Gain in dBi toward the absolute direction `toward_deg` (degrees true).
pub fn gain_dbi(pattern: &AntennaPattern, toward_deg: f64) -> f64 {
    match pattern.kind {
        AntennaKind::Omni => pattern.element_gain_dbi - pattern.feed_loss_db,
        AntennaKind::UniformLinearArray { elements, spacing } => {
            let offset = wrap_signed_degrees(toward_deg - pattern.boresight_deg);
            pattern.peak_gain_dbi() + ula_factor_db(elements, spacing, offset)
        }
    }
}

/// Samples the pattern at `n` evenly spaced azimuths starting at true north.
pub fn sample_pattern(pattern: &AntennaPattern, n: usize) -> Vec<(f64, f64)> {
    let azimuths: Vec<f64> = (0..n).map(|i| 360.0 * i as f64 / n as f64).collect();
    exec::map(&azimuths, |&az| (az, gain_dbi(pattern, az)))
}
