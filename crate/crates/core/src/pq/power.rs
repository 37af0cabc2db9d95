use super::PqError;

/// Total harmonic distortion of a voltage or current: RMS of the harmonic
/// magnitudes over the fundamental. Orders must be distinct and in `2..=50`.
pub fn thd(fundamental: f64, harmonics: &[(u8, f64)]) -> Result<f64, PqError> {
    if fundamental.is_nan() || fundamental <= 0.0 {
        return Err(PqError::ZeroFundamental);
    }
    let mut seen = 0u64;
    let mut sum_sq = 0.0;
    for &(order, magnitude) in harmonics {
        if !(2..=50).contains(&order) || seen & (1 << order) != 0 {
            return Err(PqError::BadHarmonicOrder);
        }
        seen |= 1 << order;
        sum_sq += magnitude * magnitude;
    }
    Ok(sum_sq.sqrt() / fundamental)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTriplet {
    pub p_w: f64,
    pub q_var: f64,
    /// Arithmetic apparent power, Σ V·I.
    pub s_va: f64,
}

/// Three-phase active, reactive and arithmetic apparent power from per-phase
/// `(rms, angle_deg)` voltages and currents.
pub fn power_triplet(v: &[(f64, f64); 3], i: &[(f64, f64); 3]) -> PowerTriplet {
    let mut out = PowerTriplet { p_w: 0.0, q_var: 0.0, s_va: 0.0 };
    for ((vm, va), (im, ia)) in v.iter().zip(i.iter()) {
        let s = vm * im;
        let phi = (va - ia).to_radians();
        out.p_w += s * phi.cos();
        out.q_var += s * phi.sin();
        out.s_va += s;
    }
    out
}
