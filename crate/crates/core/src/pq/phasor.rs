use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PqError;

/// RMS magnitude and angle of a sinusoidal quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phasor {
    pub magnitude: f64,
    /// Degrees, normalized into [-180, 180).
    pub angle_deg: f64,
}

impl Phasor {
    /// Builds a phasor, folding a negative magnitude into a 180° rotation.
    pub fn new(magnitude: f64, angle_deg: f64) -> Self {
        if magnitude < 0.0 {
            Phasor {
                magnitude: -magnitude,
                angle_deg: normalize_deg(angle_deg + 180.0),
            }
        } else {
            Phasor {
                magnitude,
                angle_deg: normalize_deg(angle_deg),
            }
        }
    }

    pub fn from_complex(c: Complex64) -> Self {
        Phasor::new(c.norm(), c.arg().to_degrees())
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.angle_deg.to_radians())
    }
}

fn normalize_deg(deg: f64) -> f64 {
    let d = (deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if d >= 180.0 {
        d - 360.0
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceComponents {
    pub positive: Phasor,
    pub negative: Phasor,
    pub zero: Phasor,
    /// |negative| / |positive|.
    pub unbalance: f64,
}

/// Fortescue decomposition of a three-phase set referenced to phase A.
pub fn symmetrical_unbalance(va: Phasor, vb: Phasor, vc: Phasor) -> Result<SequenceComponents, PqError> {
    let a = Complex64::from_polar(1.0, 120f64.to_radians());
    let a2 = a * a;
    let (va, vb, vc) = (va.to_complex(), vb.to_complex(), vc.to_complex());
    let pos = (va + a * vb + a2 * vc) / 3.0;
    let neg = (va + a2 * vb + a * vc) / 3.0;
    let zero = (va + vb + vc) / 3.0;
    if pos.norm() < 1e-12 {
        return Err(PqError::Degenerate);
    }
    Ok(SequenceComponents {
        positive: Phasor::from_complex(pos),
        negative: Phasor::from_complex(neg),
        zero: Phasor::from_complex(zero),
        unbalance: neg.norm() / pos.norm(),
    })
}
