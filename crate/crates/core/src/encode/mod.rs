//! Multi-coil Cartesian encoding with noise, and phase-contrast processing.

mod flow;
mod operator;

use ndarray::{s, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SamplingPattern;
use crate::types::{CoilMaps, ImageSeries, C64};

pub use flow::{
    background_phase, flow_encode, flow_encode_with, phase_difference, phase_to_velocity, FlowEncodingSpec,
    FlowPair,
};
pub use operator::SenseOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    None,
    Compensated,
    Encoded,
}

/// Acquired samples of one frame, `(coil, line, kx)`, with the line indices
/// in readout order.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSamples {
    pub lines: Vec<usize>,
    pub data: Array3<C64>,
}

/// Undersampled multi-coil k-space. Only acquired lines are stored, so
/// unacquired samples are zero by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceSeries {
    pub ny: usize,
    pub nx: usize,
    pub ncoils: usize,
    pub frames: Vec<FrameSamples>,
    pub tr_ms: f64,
    pub readouts_per_frame: usize,
    pub pixel_mm: f64,
    pub sigma: f64,
    pub venc: Option<f64>,
    pub encoding: Encoding,
}

impl KSpaceSeries {
    pub fn nframes(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_interval_ms(&self) -> f64 {
        self.tr_ms * self.readouts_per_frame as f64
    }

    pub fn lines(&self) -> Vec<Vec<usize>> {
        self.frames.iter().map(|f| f.lines.clone()).collect()
    }

    pub fn data(&self) -> Vec<Array3<C64>> {
        self.frames.iter().map(|f| f.data.clone()).collect()
    }

    /// Dense `(coil, ky, kx)` k-space of one frame, zeros where unacquired.
    pub fn dense_frame(&self, frame: usize) -> Array3<C64> {
        let fr = &self.frames[frame];
        let mut out = Array3::zeros((self.ncoils, self.ny, self.nx));
        for (l, &ky) in fr.lines.iter().enumerate() {
            out.slice_mut(s![.., ky, ..]).assign(&fr.data.slice(s![.., l, ..]));
        }
        out
    }

    /// `(frames, ny)` acquisition mask.
    pub fn mask(&self) -> ndarray::Array2<u8> {
        let mut m = ndarray::Array2::zeros((self.nframes(), self.ny));
        for (f, fr) in self.frames.iter().enumerate() {
            for &l in &fr.lines {
                m[[f, l]] = 1;
            }
        }
        m
    }

    /// Copy with every coil scaled by its weight.
    pub fn weighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.ncoils {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} coils",
                weights.len(),
                self.ncoils
            )));
        }
        let mut out = self.clone();
        for fr in &mut out.frames {
            for (c, &w) in weights.iter().enumerate() {
                fr.data.index_axis_mut(Axis(0), c).mapv_inplace(|v| v * w);
            }
        }
        Ok(out)
    }

    /// Concatenate two series along time (e.g. compensated then encoded).
    pub fn concat(&self, other: &KSpaceSeries) -> Result<Self> {
        if (self.ny, self.nx, self.ncoils) != (other.ny, other.nx, other.ncoils) {
            return Err(Error::DimensionMismatch("cannot concatenate series of different shape".into()));
        }
        let mut out = self.clone();
        out.frames.extend(other.frames.iter().cloned());
        out.encoding = Encoding::None;
        Ok(out)
    }
}

/// Acquisition parameters for [`forward`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Acquisition {
    pub sigma: f64,
    pub seed: u64,
    pub tr_ms: f64,
    pub venc: Option<f64>,
    pub encoding: Encoding,
}

impl Acquisition {
    pub fn new(sigma: f64, seed: u64, tr_ms: f64) -> Self {
        Self {
            sigma,
            seed,
            tr_ms,
            venc: None,
            encoding: Encoding::None,
        }
    }
}

/// Sample the coil-weighted Fourier transform of every frame on the pattern
/// and add complex Gaussian noise (`E|n|^2 = sigma^2`) to acquired samples.
/// Each `(frame, coil)` uses its own seeded stream, so the output does not
/// depend on scheduling.
pub fn forward(
    image: &ImageSeries<C64>,
    maps: &CoilMaps,
    pattern: &SamplingPattern,
    acq: Acquisition,
) -> Result<KSpaceSeries> {
    let (nf, ny, nx) = image.data.dim();
    if (maps.ny(), maps.nx()) != (ny, nx) {
        return Err(Error::DimensionMismatch(format!(
            "image {ny}x{nx} but coil maps {}x{}",
            maps.ny(),
            maps.nx()
        )));
    }
    if pattern.ny != ny {
        return Err(Error::DimensionMismatch(format!(
            "pattern has {} phase encodes, image has {ny} rows",
            pattern.ny
        )));
    }
    if pattern.nframes() != nf {
        return Err(Error::DimensionMismatch(format!(
            "pattern has {} frames, image has {nf}",
            pattern.nframes()
        )));
    }
    if let Some(mf) = maps.frames() {
        if mf < nf {
            return Err(Error::DimensionMismatch(format!(
                "time-varying maps cover {mf} frames, image has {nf}"
            )));
        }
    }
    if !(acq.sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise sigma must be >= 0, got {}", acq.sigma)));
    }
    let op = SenseOperator::new(maps.clone());
    let ncoils = maps.ncoils();
    let frames: Vec<FrameSamples> = (0..nf)
        .into_par_iter()
        .map(|f| {
            let lines = pattern.frames[f].clone();
            let mut data = op.forward_frame(f, &lines, image.data.index_axis(Axis(0), f));
            if acq.sigma > 0.0 {
                let std = acq.sigma / std::f64::consts::SQRT_2;
                for c in 0..ncoils {
                    let mut rng = ChaCha8Rng::seed_from_u64(acq.seed);
                    rng.set_stream((f * ncoils + c) as u64);
                    for v in data.index_axis_mut(Axis(0), c).iter_mut() {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        *v += C64::new(std * re, std * im);
                    }
                }
            }
            FrameSamples { lines, data }
        })
        .collect();
    Ok(KSpaceSeries {
        ny,
        nx,
        ncoils,
        frames,
        tr_ms: acq.tr_ms,
        readouts_per_frame: pattern.readouts_per_frame,
        pixel_mm: image.pixel_mm,
        sigma: acq.sigma,
        venc: acq.venc,
        encoding: acq.encoding,
    })
}
