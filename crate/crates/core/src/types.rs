use ndarray::{s, Array2, Array3, ArrayView2, CowArray, Ix2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A stack of 2D frames, indexed `(frame, y, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSeries<T> {
    pub data: Array3<T>,
    /// In-plane pixel spacing (isotropic), mm.
    pub pixel_mm: f64,
    /// Time between consecutive frames, ms.
    pub frame_interval_ms: f64,
}

impl<T> ImageSeries<T> {
    pub fn new(data: Array3<T>, pixel_mm: f64, frame_interval_ms: f64) -> Self {
        Self {
            data,
            pixel_mm,
            frame_interval_ms,
        }
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn ny(&self) -> usize {
        self.data.dim().1
    }

    pub fn nx(&self) -> usize {
        self.data.dim().2
    }

    /// Frames per second.
    pub fn fps(&self) -> f64 {
        1000.0 / self.frame_interval_ms
    }

    pub fn pixel_area_mm2(&self) -> f64 {
        self.pixel_mm * self.pixel_mm
    }

    pub fn same_geometry<U>(&self, other: &ImageSeries<U>) -> bool {
        self.data.dim() == other.data.dim()
            && self.pixel_mm == other.pixel_mm
            && self.frame_interval_ms == other.frame_interval_ms
    }
}

impl ImageSeries<f64> {
    pub fn to_complex(&self) -> ImageSeries<C64> {
        ImageSeries::new(
            self.data.mapv(|v| C64::new(v, 0.0)),
            self.pixel_mm,
            self.frame_interval_ms,
        )
    }
}

impl ImageSeries<C64> {
    pub fn magnitude(&self) -> ImageSeries<f64> {
        ImageSeries::new(
            self.data.mapv(|v| v.norm()),
            self.pixel_mm,
            self.frame_interval_ms,
        )
    }
}

/// Normalized root-mean-square error `||a - b|| / ||b||` over the whole series.
pub fn nrmse(estimate: &Array3<C64>, truth: &Array3<C64>) -> f64 {
    let mut err = 0.0;
    let mut norm = 0.0;
    Zip::from(estimate).and(truth).for_each(|a, b| {
        err += (a - b).norm_sqr();
        norm += b.norm_sqr();
    });
    (err / norm).sqrt()
}

/// Receive-coil sensitivities, static or with per-frame rigid translation of
/// selected coils (bulk motion of the array).
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps {
    /// `(coil, y, x)`
    base: Array3<C64>,
    /// Per-frame, per-coil translation along y in pixels, `(frame, coil)`.
    shifts: Option<Array2<f64>>,
}

impl CoilMaps {
    pub fn new_static(base: Array3<C64>) -> Self {
        Self { base, shifts: None }
    }

    pub fn with_shifts(base: Array3<C64>, shifts: Array2<f64>) -> Result<Self> {
        if shifts.dim().1 != base.dim().0 {
            return Err(Error::DimensionMismatch(format!(
                "shift table has {} coils, maps have {}",
                shifts.dim().1,
                base.dim().0
            )));
        }
        Ok(Self {
            base,
            shifts: Some(shifts),
        })
    }

    pub fn ncoils(&self) -> usize {
        self.base.dim().0
    }

    pub fn ny(&self) -> usize {
        self.base.dim().1
    }

    pub fn nx(&self) -> usize {
        self.base.dim().2
    }

    pub fn base(&self) -> &Array3<C64> {
        &self.base
    }

    pub fn shifts(&self) -> Option<&Array2<f64>> {
        self.shifts.as_ref()
    }

    /// Number of frames for time-varying maps; `None` when static.
    pub fn frames(&self) -> Option<usize> {
        self.shifts.as_ref().map(|s| s.dim().0)
    }

    pub fn is_static(&self) -> bool {
        self.shifts.is_none()
    }

    /// Sensitivity of `coil` at `frame`. Static maps ignore the frame index.
    pub fn coil_map(&self, frame: usize, coil: usize) -> CowArray<'_, C64, Ix2> {
        let base = self.base.slice(s![coil, .., ..]);
        match &self.shifts {
            Some(shifts) => {
                let frame = frame.min(shifts.dim().0 - 1);
                let dy = shifts[[frame, coil]];
                if dy == 0.0 {
                    CowArray::from(base)
                } else {
                    CowArray::from(shift_rows(base, dy))
                }
            }
            None => CowArray::from(base),
        }
    }

    /// All coils at one frame, `(coil, y, x)`.
    pub fn frame(&self, frame: usize) -> Array3<C64> {
        let mut out = Array3::zeros(self.base.raw_dim());
        for c in 0..self.ncoils() {
            out.slice_mut(s![c, .., ..]).assign(&self.coil_map(frame, c));
        }
        out
    }

    /// Root-sum-of-squares over coils at one frame.
    pub fn rss(&self, frame: usize) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.ny(), self.nx()));
        for c in 0..self.ncoils() {
            let m = self.coil_map(frame, c);
            Zip::from(&mut out).and(&m).for_each(|o, v| *o += v.norm_sqr());
        }
        out.mapv_inplace(f64::sqrt);
        out
    }

    /// Scale each coil by a weight (used after coil reweighting).
    pub fn weighted(&self, weights: &[f64]) -> Self {
        let mut base = self.base.clone();
        for (c, &w) in weights.iter().enumerate() {
            base.slice_mut(s![c, .., ..]).mapv_inplace(|v| v * w);
        }
        Self {
            base,
            shifts: self.shifts.clone(),
        }
    }
}

/// Translate a 2D map along y by `dy` pixels with linear interpolation;
/// samples beyond the edge are clamped.
fn shift_rows(map: ArrayView2<'_, C64>, dy: f64) -> Array2<C64> {
    let (ny, nx) = map.dim();
    let mut out = Array2::zeros((ny, nx));
    let last = (ny - 1) as f64;
    for y in 0..ny {
        let src = (y as f64 - dy).clamp(0.0, last);
        let y0 = src.floor() as usize;
        let y1 = (y0 + 1).min(ny - 1);
        let frac = src - y0 as f64;
        for x in 0..nx {
            out[[y, x]] = map[[y0, x]] * (1.0 - frac) + map[[y1, x]] * frac;
        }
    }
    out
}
