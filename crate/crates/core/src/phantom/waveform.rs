//! Periodic physiological waveforms shared by the cine and flow phantoms.

use std::f64::consts::PI;

/// Fraction of the cardiac cycle spent in ejection (ED to ES).
pub const SYSTOLE: f64 = 0.35;
/// End-systolic dwell after ejection.
pub const ES_PLATEAU: f64 = 0.10;
/// Diastasis before the next end-diastole.
pub const ED_PLATEAU: f64 = 0.10;

pub fn fract(v: f64) -> f64 {
    v - v.floor()
}

/// Respiratory level in `[0, 1]`; 1 at end-expiration (phase 0), 0 at
/// end-inspiration (phase 0.5). `skew > 1` lengthens the expiratory dwell.
pub fn respiratory_level(phase: f64, skew: f64) -> f64 {
    let u = 0.5 * (1.0 - (2.0 * PI * fract(phase)).cos());
    1.0 - u.powf(skew)
}

/// Normalized ventricular volume in `[0, 1]` over one cycle; 1 at ED
/// (phase 0), 0 through the end-systolic plateau.
pub fn volume_fraction(phase: f64) -> f64 {
    let p = fract(phase);
    let fill_start = SYSTOLE + ES_PLATEAU;
    let fill_end = 1.0 - ED_PLATEAU;
    if p < SYSTOLE {
        0.5 * (1.0 + (PI * p / SYSTOLE).cos())
    } else if p < fill_start {
        0.0
    } else if p < fill_end {
        0.5 * (1.0 - (PI * (p - fill_start) / (fill_end - fill_start)).cos())
    } else {
        1.0
    }
}

/// Normalized forward-flow profile: a `sin^2` bump during ejection, zero in
/// diastole.
pub fn ejection_profile(phase: f64) -> f64 {
    let p = fract(phase);
    if p < SYSTOLE {
        (PI * p / SYSTOLE).sin().powi(2)
    } else {
        0.0
    }
}

/// Time-integral of [`ejection_profile`] over one cycle, in units of the
/// cycle length.
pub fn ejection_profile_mean() -> f64 {
    SYSTOLE / 2.0
}
