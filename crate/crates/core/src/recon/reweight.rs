use ndarray::s;
use serde::{Deserialize, Serialize};

use super::transforms::median;
use crate::encode::KSpaceSeries;
use crate::error::{Error, Result};
use crate::fourier::ifft1c;

/// Robust z above which a coil is down-weighted.
pub const Z_THRESHOLD: f64 = 3.0;
/// Minimum number of frames sampling the centre line.
pub const MIN_FRAMES: usize = 16;
/// Lower bound of the score spread, relative to the median score, so that
/// nearly identical coils never produce large z values.
const SPREAD_FLOOR: f64 = 0.1;
/// Absolute lower bound of the score spread: coils whose profiles vary by
/// less than this temporal CV are never outliers.
const MIN_SPREAD: f64 = 0.01;
const MAD_TO_SIGMA: f64 = 1.4826;
/// Positions whose median profile level is below this fraction of the
/// coil's peak are outside its support.
const SUPPORT_LEVEL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoilWeights {
    pub weights: Vec<f64>,
    /// Robust coefficient of temporal variation per coil.
    pub scores: Vec<f64>,
    /// Robust z of each score across coils.
    pub z: Vec<f64>,
    pub z_threshold: f64,
}

/// Score each coil by the robust temporal coefficient of variation of its
/// centre-line magnitude profile in hybrid space, taken as the median over
/// the coil's support, and down-weight outliers with
/// `w = exp(-(z - 3))` for `z > 3`.
pub fn coil_reweight(kspace: &KSpaceSeries) -> Result<(CoilWeights, KSpaceSeries)> {
    let centre = kspace.ny / 2;
    let rows: Vec<(usize, usize)> = kspace
        .frames
        .iter()
        .enumerate()
        .filter_map(|(f, fr)| fr.lines.iter().position(|&l| l == centre).map(|l| (f, l)))
        .collect();
    if rows.len() < MIN_FRAMES {
        return Err(Error::SeriesTooShort(format!(
            "coil reweighting needs the centre line in >= {MIN_FRAMES} frames, found {}",
            rows.len()
        )));
    }
    let mut scores = Vec::with_capacity(kspace.ncoils);
    let mut column = vec![0.0; rows.len()];
    for c in 0..kspace.ncoils {
        // centre line in hybrid (ky = 0, x) space: the coil-weighted
        // projection of the object along y
        let profiles: Vec<Vec<f64>> = rows
            .iter()
            .map(|&(f, l)| {
                let line = kspace.frames[f].data.slice(s![c, l, ..]).to_vec();
                ifft1c(&line).iter().map(|v| v.norm()).collect()
            })
            .collect();
        let mut cv = Vec::with_capacity(kspace.nx);
        let mut levels = Vec::with_capacity(kspace.nx);
        for x in 0..kspace.nx {
            for (v, p) in column.iter_mut().zip(&profiles) {
                *v = p[x];
            }
            let med = median(&mut column);
            let mut dev: Vec<f64> = column.iter().map(|v| (v - med).abs()).collect();
            levels.push(med);
            cv.push(if med > 0.0 { MAD_TO_SIGMA * median(&mut dev) / med } else { 0.0 });
        }
        // median over the coil's support, so that local anatomical dynamics
        // do not dominate a coil that sees them up close
        let peak = levels.iter().copied().fold(0.0, f64::max);
        let mut inside: Vec<f64> = cv
            .iter()
            .zip(&levels)
            .filter(|&(_, &l)| peak > 0.0 && l >= SUPPORT_LEVEL * peak)
            .map(|(&v, _)| v)
            .collect();
        scores.push(if inside.is_empty() { 0.0 } else { median(&mut inside) });
    }

    let mut tmp = scores.clone();
    let centre_score = median(&mut tmp);
    let mut dev: Vec<f64> = scores.iter().map(|s| (s - centre_score).abs()).collect();
    let scale = (MAD_TO_SIGMA * median(&mut dev)).max(SPREAD_FLOOR * centre_score).max(MIN_SPREAD);
    let z: Vec<f64> = scores.iter().map(|&s| (s - centre_score) / scale).collect();
    let weights: Vec<f64> = z
        .iter()
        .map(|&z| if z <= Z_THRESHOLD { 1.0 } else { (-(z - Z_THRESHOLD)).exp().max(0.0) })
        .collect();
    let reweighted = kspace.weighted(&weights)?;
    Ok((
        CoilWeights {
            weights,
            scores,
            z,
            z_threshold: Z_THRESHOLD,
        },
        reweighted,
    ))
}
