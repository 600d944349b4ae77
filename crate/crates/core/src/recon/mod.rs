//! Sensitivity estimation, coil reweighting, sparsifying transforms and the
//! compressed-sensing solver.

mod pca;
mod reweight;
mod sensitivity;
mod solver;
mod transforms;
mod uwt;

use ndarray::{Array2, Axis};

pub use pca::{temporal_pca_basis, TemporalBasis};
pub use reweight::{coil_reweight, CoilWeights, MIN_FRAMES as REWEIGHT_MIN_FRAMES, Z_THRESHOLD};
pub use sensitivity::{calibration_range, estimate_sensitivities, time_average};
pub use solver::{score_reconstruct, zero_filled, ReconResult, SolverSettings};
pub use transforms::{ShrinkStats, Transform, TransformSet, TransformTag};
pub use uwt::{Band, Uwt3};

use crate::error::{Error, Result};
use crate::types::{ImageSeries, C64};

/// Default number of central phase-encode lines used for calibration.
pub const DEFAULT_CALIB_WIDTH: usize = 24;

/// Temporal-fluctuation energy outside `mask` (pixels whose anatomy truly
/// moves) divided by the signal energy inside it.
pub fn artifact_energy(image: &ImageSeries<C64>, mask: &Array2<bool>) -> Result<f64> {
    if mask.dim() != (image.ny(), image.nx()) {
        return Err(Error::DimensionMismatch("artifact mask does not match the image".into()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask("dynamic-anatomy mask has no pixels".into()));
    }
    let mean = image.data.mean_axis(Axis(0)).ok_or_else(|| Error::SeriesTooShort("no frames".into()))?;
    let (mut outside, mut inside) = (0.0, 0.0);
    for frame in image.data.axis_iter(Axis(0)) {
        ndarray::Zip::from(&frame).and(&mean).and(mask).for_each(|v, m, &dynamic| {
            if dynamic {
                inside += v.norm_sqr();
            } else {
                outside += (v - m).norm_sqr();
            }
        });
    }
    if inside == 0.0 {
        return Err(Error::Undefined("no signal inside the dynamic mask".into()));
    }
    Ok(outside / inside)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn static_background_scores_zero() {
        let data = Array3::from_shape_fn((6, 8, 8), |(f, y, _)| {
            C64::new(if y < 4 { f as f64 } else { 1.0 }, 0.0)
        });
        let img = ImageSeries::new(data, 1.0, 1.0);
        let mask = Array2::from_shape_fn((8, 8), |(y, _)| y < 4);
        assert_eq!(artifact_energy(&img, &mask).unwrap(), 0.0);
        let none = Array2::from_elem((8, 8), false);
        assert!(artifact_energy(&img, &none).is_err());
    }

    #[test]
    fn fluctuation_outside_mask_counts() {
        let data = Array3::from_shape_fn((4, 2, 2), |(f, y, x)| {
            C64::new(if (y, x) == (1, 1) { (f % 2) as f64 } else { 1.0 }, 0.0)
        });
        let img = ImageSeries::new(data, 1.0, 1.0);
        let mask = Array2::from_shape_fn((2, 2), |(y, x)| (y, x) == (0, 0));
        // four frames of 0.25 deviation energy over four frames of unit signal
        assert!((artifact_energy(&img, &mask).unwrap() - 0.25).abs() < 1e-12);
    }
}
