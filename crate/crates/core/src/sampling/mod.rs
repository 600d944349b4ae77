//! Cartesian phase-encode sampling: golden-ratio-offset (GRO) patterns for
//! bSSFP cine and retrospectively rebinnable CAVA orders for flow.

mod cava;
mod gro;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cava::{cava_generate, cava_generate_with, cava_rebin};
pub use gro::gro_generate;

/// Golden fraction `(sqrt 5 - 1) / 2`.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Defaults for GRO: density exponent and centre-to-edge density ratio.
pub const GRO_S: f64 = 2.2;
pub const GRO_ALPHA: f64 = 3.0;
/// Milder centre weighting for CAVA, which keeps every line within the
/// per-line acquisition-count band of a long order.
pub const CAVA_ALPHA: f64 = 1.3;

/// Variable-density warp of `v` in `[-1, 1]`. Sampling density is
/// proportional to `1 / w'(v)`, so the density ratio between centre and edge
/// equals `alpha` and density thins as `|v|^(s-1)` toward the edge.
pub fn warp(v: f64, s: f64, alpha: f64) -> f64 {
    let beta = warp_beta(s, alpha);
    (1.0 - beta) * v + beta * v.signum() * v.abs().powf(s)
}

fn warp_beta(s: f64, alpha: f64) -> f64 {
    (alpha - 1.0) / (alpha - 1.0 + s)
}

/// Largest slope of the warp (at the edge of k-space).
pub fn warp_max_slope(s: f64, alpha: f64) -> f64 {
    let beta = warp_beta(s, alpha);
    1.0 - beta + beta * s
}

pub(crate) fn check_density(s: f64, alpha: f64) -> Result<()> {
    if !(s >= 1.0 && s.is_finite()) {
        return Err(Error::InvalidConfig(format!("density exponent must be >= 1, got {s}")));
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("centre density factor must be >= 1, got {alpha}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Gro,
    Cava,
}

/// Phase-encode lines acquired in each frame, in readout order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPattern {
    pub kind: PatternKind,
    pub ny: usize,
    pub frames: Vec<Vec<usize>>,
    /// Readouts spent per frame (equals lines per frame unless duplicates
    /// were dropped during rebinning).
    pub readouts_per_frame: usize,
    pub nominal_r: f64,
    pub density_s: f64,
    pub density_alpha: f64,
    /// Intra-frame duplicate readouts dropped while rebinning.
    pub duplicates_dropped: usize,
}

impl SamplingPattern {
    pub fn nframes(&self) -> usize {
        self.frames.len()
    }

    pub fn centre_line(&self) -> usize {
        self.ny / 2
    }

    pub fn mean_lines_per_frame(&self) -> f64 {
        let total: usize = self.frames.iter().map(Vec::len).sum();
        total as f64 / self.frames.len().max(1) as f64
    }

    pub fn realized_r(&self) -> f64 {
        self.ny as f64 / self.mean_lines_per_frame()
    }

    /// Every index in range and no duplicates within a frame.
    pub fn validate(&self) -> Result<()> {
        for (f, lines) in self.frames.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &l in lines {
                if l >= self.ny {
                    return Err(Error::InvalidConfig(format!(
                        "frame {f}: line {l} outside [0, {})",
                        self.ny
                    )));
                }
                if !seen.insert(l) {
                    return Err(Error::InvalidConfig(format!("frame {f}: line {l} repeated")));
                }
            }
        }
        Ok(())
    }

    /// `(frames, ny)` 0/1 acquisition mask.
    pub fn mask(&self) -> Array2<u8> {
        let mut m = Array2::zeros((self.frames.len(), self.ny));
        for (f, lines) in self.frames.iter().enumerate() {
            for &l in lines {
                m[[f, l]] = 1;
            }
        }
        m
    }

    /// Rebuild a pattern from a 0/1 mask (lines in ascending order).
    pub fn from_mask(
        mask: &Array2<u8>,
        kind: PatternKind,
        readouts_per_frame: usize,
        density_s: f64,
        density_alpha: f64,
    ) -> Self {
        let (nf, ny) = mask.dim();
        let frames: Vec<Vec<usize>> = (0..nf)
            .map(|f| (0..ny).filter(|&l| mask[[f, l]] != 0).collect())
            .collect();
        Self {
            kind,
            ny,
            frames,
            readouts_per_frame,
            nominal_r: ny as f64 / readouts_per_frame.max(1) as f64,
            density_s,
            density_alpha,
            duplicates_dropped: 0,
        }
    }

    /// Frames x ny matrix of 0/1 as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.frames.len() * self.ny * 2);
        let m = self.mask();
        for row in m.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    /// How many frames acquire each line.
    pub fn line_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.ny];
        for lines in &self.frames {
            for &l in lines {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Mean acquisition count per line in bins of `bin` lines of increasing
    /// distance from the centre line.
    pub fn density_profile(&self, bin: usize) -> Vec<f64> {
        let counts = self.line_counts();
        density_profile(&counts, self.centre_line(), bin)
    }

    /// Fraction of the `width` central lines acquired at least once in
    /// frames `range`.
    pub fn central_coverage(&self, frames: std::ops::Range<usize>, width: usize) -> f64 {
        let (lo, hi) = central_range(self.ny, width);
        let mut hit = vec![false; self.ny];
        for lines in &self.frames[frames] {
            for &l in lines {
                hit[l] = true;
            }
        }
        let covered = (lo..hi).filter(|&l| hit[l]).count();
        covered as f64 / (hi - lo) as f64
    }
}

/// Half-open range of the `width` lines centred on `ny / 2`.
pub fn central_range(ny: usize, width: usize) -> (usize, usize) {
    let width = width.min(ny);
    let lo = (ny / 2).saturating_sub(width / 2);
    let hi = (lo + width).min(ny);
    (lo, hi)
}

pub(crate) fn density_profile(counts: &[usize], centre: usize, bin: usize) -> Vec<f64> {
    let ny = counts.len();
    let max_d = centre.max(ny - 1 - centre);
    let nbins = max_d / bin + 1;
    let mut sum = vec![0.0; nbins];
    let mut n = vec![0usize; nbins];
    for (l, &c) in counts.iter().enumerate() {
        let d = l.abs_diff(centre);
        sum[d / bin] += c as f64;
        n[d / bin] += 1;
    }
    sum.iter().zip(&n).map(|(s, &k)| s / k as f64).collect()
}

/// Flat readout order of a CAVA acquisition, one line per TR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutOrder {
    pub ny: usize,
    pub lines: Vec<usize>,
    pub density_s: f64,
    pub density_alpha: f64,
}

impl ReadoutOrder {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn line_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.ny];
        for &l in &self.lines {
            counts[l] += 1;
        }
        counts
    }

    /// Number of distinct lines in `lines[start..start + len]`.
    pub fn distinct_in_window(&self, start: usize, len: usize) -> usize {
        self.lines[start..start + len].iter().collect::<BTreeSet<_>>().len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternStats {
    pub realized_r: f64,
    pub temporal_resolution_ms: f64,
    /// Largest jump between consecutive readouts within a frame, lines.
    pub max_jump: usize,
    /// Fraction of frames acquiring the centre line.
    pub centre_hit_rate: f64,
}

/// Acquisition arithmetic of a pattern for a given repetition time.
pub fn pattern_stats(pattern: &SamplingPattern, tr_ms: f64) -> PatternStats {
    let c = pattern.centre_line();
    let max_jump = pattern
        .frames
        .iter()
        .flat_map(|lines| lines.windows(2).map(|w| w[0].abs_diff(w[1])))
        .max()
        .unwrap_or(0);
    let hits = pattern.frames.iter().filter(|l| l.contains(&c)).count();
    PatternStats {
        realized_r: pattern.realized_r(),
        temporal_resolution_ms: temporal_resolution_ms(tr_ms, pattern.readouts_per_frame),
        max_jump,
        centre_hit_rate: hits as f64 / pattern.frames.len().max(1) as f64,
    }
}

pub fn temporal_resolution_ms(tr_ms: f64, readouts_per_frame: usize) -> f64 {
    tr_ms * readouts_per_frame as f64
}
