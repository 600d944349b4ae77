use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, Axis};

use crate::encode::KSpaceSeries;
use crate::error::{Error, Result};
use crate::fourier::ifft2c;
use crate::types::{CoilMaps, C64};

/// Pixels whose low-resolution RSS falls below this fraction of the maximum
/// get zero sensitivity.
const MASK_FRACTION: f64 = 0.05;
/// Minimum fraction of calibration lines present after time-averaging.
const MIN_COVERAGE: f64 = 0.9;

/// Time-averaged k-space: each acquired line is the mean over the frames
/// that sampled it. Returns `(coil, ky, kx)` data and per-line counts.
pub fn time_average(kspace: &KSpaceSeries) -> (Array3<C64>, Vec<usize>) {
    let mut sum = Array3::<C64>::zeros((kspace.ncoils, kspace.ny, kspace.nx));
    let mut count = vec![0usize; kspace.ny];
    for fr in &kspace.frames {
        for (l, &ky) in fr.lines.iter().enumerate() {
            count[ky] += 1;
            let mut dst = sum.slice_mut(s![.., ky, ..]);
            dst += &fr.data.slice(s![.., l, ..]);
        }
    }
    for (ky, &n) in count.iter().enumerate() {
        if n > 1 {
            sum.slice_mut(s![.., ky, ..]).mapv_inplace(|v| v / n as f64);
        }
    }
    (sum, count)
}

/// Calibration lines `ny/2 - w/2 .. ny/2 - w/2 + w`.
pub fn calibration_range(ny: usize, width: usize) -> std::ops::Range<usize> {
    let start = (ny / 2).saturating_sub(width / 2);
    start..(start + width).min(ny)
}

/// Low-resolution sensitivity maps from the Hann-apodized central
/// `calib_width x calib_width` block of the time-averaged k-space, each
/// coil image divided by the root-sum-of-squares over coils.
pub fn estimate_sensitivities(kspace: &KSpaceSeries, calib_width: usize) -> Result<CoilMaps> {
    let (ny, nx) = (kspace.ny, kspace.nx);
    if calib_width < 2 || calib_width > ny.min(nx) {
        return Err(Error::InvalidConfig(format!(
            "calibration width {calib_width} outside 2..={}",
            ny.min(nx)
        )));
    }
    let (avg, count) = time_average(kspace);
    let range = calibration_range(ny, calib_width);
    let covered = range.clone().filter(|&l| count[l] > 0).count();
    let coverage = covered as f64 / range.len() as f64;
    if coverage < MIN_COVERAGE {
        return Err(Error::InsufficientCalibration {
            coverage: 100.0 * coverage,
            width: calib_width,
        });
    }

    let window = |k: usize, n: usize| {
        let u = k as f64 - (n / 2) as f64;
        let half = calib_width as f64 / 2.0;
        if u.abs() >= half {
            0.0
        } else {
            0.5 * (1.0 + (PI * u / half).cos())
        }
    };
    let wy: Vec<f64> = (0..ny).map(|k| window(k, ny)).collect();
    let wx: Vec<f64> = (0..nx).map(|k| window(k, nx)).collect();

    let mut images = Array3::<C64>::zeros((kspace.ncoils, ny, nx));
    for c in 0..kspace.ncoils {
        let k = Array2::from_shape_fn((ny, nx), |(y, x)| avg[[c, y, x]] * (wy[y] * wx[x]));
        images.index_axis_mut(Axis(0), c).assign(&ifft2c(&k));
    }
    let rss = images.map_axis(Axis(0), |v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
    let peak = rss.iter().copied().fold(0.0, f64::max);
    let floor = MASK_FRACTION * peak;
    for c in 0..kspace.ncoils {
        let mut img = images.index_axis_mut(Axis(0), c);
        ndarray::Zip::from(&mut img).and(&rss).for_each(|z, &r| {
            *z = if r > floor && r > 0.0 { *z / r } else { C64::new(0.0, 0.0) };
        });
    }
    Ok(CoilMaps::new_static(images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::{forward, Acquisition};
    use crate::phantom::{coil_maps_synthetic, GridSpec, Torso};
    use crate::sampling::{gro_generate, GRO_ALPHA, GRO_S};
    use crate::types::ImageSeries;

    fn uniform_kspace(ny: usize, lines: usize, frames: usize) -> (KSpaceSeries, CoilMaps) {
        let maps = coil_maps_synthetic(8, GridSpec::new(ny, ny, 2.0), 1).unwrap();
        let img = ImageSeries::new(Array3::from_elem((frames, ny, ny), C64::new(1.0, 0.0)), 2.0, 40.0);
        let pat = gro_generate(ny, lines, frames, GRO_S, GRO_ALPHA).unwrap();
        let k = forward(&img, &maps, &pat, Acquisition::new(0.0, 0, 2.6)).unwrap();
        (k, maps)
    }

    #[test]
    fn recovers_smooth_maps_on_uniform_object() {
        let (k, truth) = uniform_kspace(96, 96, 1);
        let est = estimate_sensitivities(&k, 24).unwrap();
        let body = Torso::for_grid(&GridSpec::new(96, 96, 2.0)).mask(&GridSpec::new(96, 96, 2.0));
        for c in 0..8 {
            let a = est.coil_map(0, c);
            let b = truth.coil_map(0, c);
            let (mut dot, mut na, mut nb) = (C64::new(0.0, 0.0), 0.0, 0.0);
            ndarray::Zip::from(&a).and(&b).and(&body).for_each(|p, q, &inside| {
                if inside {
                    dot += p.conj() * q;
                    na += p.norm_sqr();
                    nb += q.norm_sqr();
                }
            });
            let corr = dot.norm() / (na * nb).sqrt();
            assert!(corr >= 0.99, "coil {c}: {corr}");
        }
        let rss = est.rss(0);
        assert!(rss.iter().all(|&r| r == 0.0 || (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn short_window_lacks_calibration() {
        let (k, _) = uniform_kspace(144, 16, 8);
        let mut short = k.clone();
        short.frames.truncate(4);
        match estimate_sensitivities(&short, 24) {
            Err(Error::InsufficientCalibration { coverage, .. }) => assert!(coverage < 90.0),
            other => panic!("expected calibration error, got {other:?}"),
        }
        assert!(estimate_sensitivities(&k, 24).is_ok());
    }

    #[test]
    fn averaging_counts_lines() {
        let (k, _) = uniform_kspace(64, 8, 10);
        let (_, count) = time_average(&k);
        assert_eq!(count.iter().sum::<usize>(), 80);
        assert_eq!(count[32], 10);
    }
}
