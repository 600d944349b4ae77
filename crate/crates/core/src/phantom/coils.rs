use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BulkMotion, Torso};
use crate::error::{Error, Result};
use crate::types::{CoilMaps, C64};

/// In-plane sampling grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ny: usize,
    pub nx: usize,
    pub pixel_mm: f64,
}

impl GridSpec {
    pub fn new(ny: usize, nx: usize, pixel_mm: f64) -> Self {
        Self { ny, nx, pixel_mm }
    }

    /// Pixel-centre coordinate along y, mm, origin at the image centre.
    pub fn y_mm(&self, iy: usize) -> f64 {
        (iy as f64 + 0.5 - self.ny as f64 / 2.0) * self.pixel_mm
    }

    pub fn x_mm(&self, ix: usize) -> f64 {
        (ix as f64 + 0.5 - self.nx as f64 / 2.0) * self.pixel_mm
    }
}

/// Smooth complex Gaussian-lobe coil sensitivities placed at equispaced
/// angles just outside the torso outline, normalized to unit
/// root-sum-of-squares.
pub fn coil_maps_synthetic(ncoils: usize, grid: GridSpec, seed: u64) -> Result<CoilMaps> {
    if ncoils < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least two coils, got {ncoils}"
        )));
    }
    let torso = Torso::for_grid(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fov = (grid.ny.max(grid.nx) as f64) * grid.pixel_mm;
    let width = 0.5 * torso.semi_y_mm.min(torso.semi_x_mm);
    let step = 2.0 * PI / ncoils as f64;

    let mut maps = Array3::<C64>::zeros((ncoils, grid.ny, grid.nx));
    for c in 0..ncoils {
        let angle = c as f64 * step + rng.random_range(-0.1..0.1) * step;
        let cy = 1.05 * torso.semi_y_mm * angle.sin();
        let cx = 1.05 * torso.semi_x_mm * angle.cos();
        let phase0 = rng.random_range(0.0..2.0 * PI);
        let gy = rng.random_range(-1.0..1.0) * PI / fov;
        let gx = rng.random_range(-1.0..1.0) * PI / fov;
        for iy in 0..grid.ny {
            let y = grid.y_mm(iy);
            for ix in 0..grid.nx {
                let x = grid.x_mm(ix);
                let d2 = (y - cy).powi(2) + (x - cx).powi(2);
                let mag = (-d2 / (2.0 * width * width)).exp();
                let phase = phase0 + gy * y + gx * x;
                maps[[c, iy, ix]] = C64::from_polar(mag, phase);
            }
        }
    }
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let rss = (0..ncoils)
                .map(|c| maps[[c, iy, ix]].norm_sqr())
                .sum::<f64>()
                .sqrt();
            for c in 0..ncoils {
                maps[[c, iy, ix]] /= rss;
            }
        }
    }
    Ok(CoilMaps::new_static(maps))
}

/// Time-varying sensitivities: coils named in the schedule translate along y
/// as `amplitude * sin(2 pi t / period)`; all other coils stay fixed.
pub fn apply_bulk_motion(
    maps: &CoilMaps,
    schedule: &[BulkMotion],
    frame_times_s: &[f64],
    pixel_mm: f64,
) -> Result<CoilMaps> {
    if !maps.is_static() {
        return Err(Error::InvalidConfig(
            "bulk motion must be applied to static maps".into(),
        ));
    }
    let frame_interval = if frame_times_s.len() > 1 {
        frame_times_s[1] - frame_times_s[0]
    } else {
        0.0
    };
    for m in schedule {
        if m.period_s <= 2.0 * frame_interval {
            return Err(Error::InvalidConfig(format!(
                "bulk-motion period {} s is not longer than two frame intervals ({} s)",
                m.period_s,
                2.0 * frame_interval
            )));
        }
        if let Some(&bad) = m.coils.iter().find(|&&c| c >= maps.ncoils()) {
            return Err(Error::InvalidConfig(format!(
                "bulk-motion coil index {bad} out of range for {} coils",
                maps.ncoils()
            )));
        }
    }
    let mut shifts = Array2::<f64>::zeros((frame_times_s.len(), maps.ncoils()));
    for (f, &t) in frame_times_s.iter().enumerate() {
        for m in schedule {
            let dy = m.amplitude_mm / pixel_mm * (2.0 * PI * t / m.period_s).sin();
            for &c in &m.coils {
                shifts[[f, c]] += dy;
            }
        }
    }
    if schedule.is_empty() {
        return Ok(maps.clone());
    }
    CoilMaps::with_shifts(maps.base().clone(), shifts)
}
