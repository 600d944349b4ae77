use std::f64::consts::PI;

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ImageSeries, C64};

/// Peak amplitude of the background phase polynomial, rad.
const BACKGROUND_AMPLITUDE: f64 = PI / 8.0;

/// Velocity `v` maps to phase `pi v / venc`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowEncodingSpec {
    pub venc_cm_s: f64,
}

impl FlowEncodingSpec {
    pub fn new(venc_cm_s: f64) -> Result<Self> {
        if !(venc_cm_s > 0.0 && venc_cm_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("VENC must be positive, got {venc_cm_s}")));
        }
        Ok(Self { venc_cm_s })
    }

    pub fn phase_of(&self, v: f64) -> f64 {
        PI * v / self.venc_cm_s
    }
}

/// Second-order background phase over normalized coordinates in `[-1, 1]`.
pub fn background_phase(ny: usize, nx: usize) -> Array2<f64> {
    let norm = |i: usize, n: usize| 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
    Array2::from_shape_fn((ny, nx), |(iy, ix)| {
        let (y, x) = (norm(iy, ny), norm(ix, nx));
        BACKGROUND_AMPLITUDE * (0.4 * x * x - 0.3 * y * y + 0.2 * x * y + 0.1 * x)
    })
}

/// Flow-compensated / flow-encoded image pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPair {
    pub compensated: ImageSeries<C64>,
    pub encoded: ImageSeries<C64>,
    /// Pixels (over all frames) with `|v| >= venc`.
    pub aliased: usize,
}

pub fn flow_encode(
    velocity: &ImageSeries<f64>,
    magnitude: &ImageSeries<f64>,
    spec: FlowEncodingSpec,
) -> Result<FlowPair> {
    flow_encode_with(velocity, magnitude, spec, &background_phase(velocity.ny(), velocity.nx()))
}

/// [`flow_encode`] with an explicit background phase map.
pub fn flow_encode_with(
    velocity: &ImageSeries<f64>,
    magnitude: &ImageSeries<f64>,
    spec: FlowEncodingSpec,
    background: &Array2<f64>,
) -> Result<FlowPair> {
    if !velocity.same_geometry(magnitude) {
        return Err(Error::DimensionMismatch("velocity and magnitude geometry differ".into()));
    }
    if background.dim() != (velocity.ny(), velocity.nx()) {
        return Err(Error::DimensionMismatch("background phase map has the wrong size".into()));
    }
    let mut comp = magnitude.data.mapv(|m| C64::new(m, 0.0));
    let mut enc = comp.clone();
    let mut aliased = 0;
    for f in 0..velocity.frames() {
        let v = velocity.data.index_axis(Axis(0), f);
        Zip::from(comp.index_axis_mut(Axis(0), f))
            .and(enc.index_axis_mut(Axis(0), f))
            .and(&v)
            .and(background)
            .for_each(|c, e, &v, &phi0| {
                if v.abs() >= spec.venc_cm_s {
                    aliased += 1;
                }
                let m = c.re;
                *c = C64::from_polar(m, phi0);
                *e = C64::from_polar(m, phi0 + spec.phase_of(v));
            });
    }
    if aliased > 0 {
        log::warn!(
            "{aliased} pixel samples reach |v| >= VENC ({} cm/s) and will alias",
            spec.venc_cm_s
        );
    }
    Ok(FlowPair {
        compensated: ImageSeries::new(comp, magnitude.pixel_mm, magnitude.frame_interval_ms),
        encoded: ImageSeries::new(enc, magnitude.pixel_mm, magnitude.frame_interval_ms),
        aliased,
    })
}

/// `arg(enc * conj(comp))` wrapped to `(-pi, pi]`.
pub fn phase_difference(comp: &ImageSeries<C64>, enc: &ImageSeries<C64>) -> Result<ImageSeries<f64>> {
    if !comp.same_geometry(enc) {
        return Err(Error::DimensionMismatch("compensated and encoded geometry differ".into()));
    }
    let mut out = ndarray::Array3::<f64>::zeros(comp.data.raw_dim());
    Zip::from(&mut out).and(&comp.data).and(&enc.data).for_each(|o, c, e| {
        let p = (e * c.conj()).arg();
        *o = if p <= -PI { PI } else { p };
    });
    Ok(ImageSeries::new(out, comp.pixel_mm, comp.frame_interval_ms))
}

pub fn phase_to_velocity(phase: &ImageSeries<f64>, spec: FlowEncodingSpec) -> ImageSeries<f64> {
    ImageSeries::new(
        phase.data.mapv(|p| spec.venc_cm_s * p / PI),
        phase.pixel_mm,
        phase.frame_interval_ms,
    )
}
