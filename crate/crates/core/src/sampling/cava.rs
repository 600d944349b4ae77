use std::collections::BTreeSet;

use super::{check_density, warp, PatternKind, ReadoutOrder, SamplingPattern, CAVA_ALPHA, GOLDEN};
use crate::error::{Error, Result};
use crate::phantom::waveform::fract;

/// CAVA readout order: readout `n` samples the line at the warped golden
/// low-discrepancy point `frac(1/2 + n g)`, so every contiguous block is a
/// variable-density pattern in its own right.
pub fn cava_generate(ny: usize, total_readouts: usize, s: f64) -> Result<ReadoutOrder> {
    cava_generate_with(ny, total_readouts, s, CAVA_ALPHA)
}

pub fn cava_generate_with(ny: usize, total_readouts: usize, s: f64, alpha: f64) -> Result<ReadoutOrder> {
    if total_readouts < ny {
        return Err(Error::InvalidConfig(format!(
            "CAVA needs at least {ny} readouts, got {total_readouts}"
        )));
    }
    check_density(s, alpha)?;
    let half = ny as f64 / 2.0;
    let lines = (0..total_readouts)
        .map(|n| {
            let u = fract(0.5 + n as f64 * GOLDEN);
            let p = half + warp(2.0 * u - 1.0, s, alpha) * half;
            (p.floor() as usize).min(ny - 1)
        })
        .collect();
    Ok(ReadoutOrder {
        ny,
        lines,
        density_s: s,
        density_alpha: alpha,
    })
}

/// Chunk an order into frames of `lines_per_frame` consecutive readouts,
/// dropping repeated lines inside a chunk.
pub fn cava_rebin(order: &ReadoutOrder, lines_per_frame: usize) -> Result<SamplingPattern> {
    if lines_per_frame == 0 || lines_per_frame > order.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot rebin {} readouts into frames of {lines_per_frame}",
            order.len()
        )));
    }
    let mut dropped = 0;
    let frames: Vec<Vec<usize>> = order
        .lines
        .chunks_exact(lines_per_frame)
        .map(|chunk| {
            let mut seen = BTreeSet::new();
            let mut out = Vec::with_capacity(chunk.len());
            for &l in chunk {
                if seen.insert(l) {
                    out.push(l);
                } else {
                    dropped += 1;
                }
            }
            out
        })
        .collect();
    Ok(SamplingPattern {
        kind: PatternKind::Cava,
        ny: order.ny,
        frames,
        readouts_per_frame: lines_per_frame,
        nominal_r: order.ny as f64 / lines_per_frame as f64,
        density_s: order.density_s,
        density_alpha: order.density_alpha,
        duplicates_dropped: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{pattern_stats, GRO_S};
    use super::*;

    #[test]
    fn histogram_within_band() {
        let o = cava_generate(128, 128 * 20, GRO_S).unwrap();
        for (l, &c) in o.line_counts().iter().enumerate() {
            assert!((16..=24).contains(&c), "line {l}: {c}");
        }
    }

    #[test]
    fn window_distinctness() {
        let o = cava_generate(128, 128 * 20, GRO_S).unwrap();
        assert!(o.distinct_in_window(0, 128) as f64 >= 0.8 * 128.0);
        for len in [4, 8, 16, 64, 128] {
            let need = (0.8 * len as f64).ceil() as usize;
            for start in (0..o.len() - len).step_by(7) {
                assert!(o.distinct_in_window(start, len) >= need, "len {len} at {start}");
            }
        }
    }

    #[test]
    fn rebin_chunking_identity() {
        let o = cava_generate(96, 96 * 10, GRO_S).unwrap();
        let a = cava_rebin(&o, 10).unwrap();
        let b = cava_rebin(&o, 20).unwrap();
        assert_eq!(b.nframes(), o.len() / 20);
        for f in 0..b.nframes() {
            let joined: BTreeSet<usize> = a.frames[2 * f].iter().chain(&a.frames[2 * f + 1]).copied().collect();
            let wide: BTreeSet<usize> = b.frames[f].iter().copied().collect();
            assert_eq!(joined, wide);
            assert_eq!(wide.len(), b.frames[f].len());
        }
    }

    #[test]
    fn flow_protocol_temporal_resolution() {
        let o = cava_generate(128, 128 * 16, GRO_S).unwrap();
        let p = cava_rebin(&o, 10).unwrap();
        assert!((pattern_stats(&p, 3.58).temporal_resolution_ms - 35.8).abs() < 1e-9);
        let p = cava_rebin(&o, 12).unwrap();
        assert!((pattern_stats(&p, 3.58).temporal_resolution_ms - 42.96).abs() < 1e-9);
    }

    #[test]
    fn single_block_case() {
        let o = cava_generate(64, 64, GRO_S).unwrap();
        let p = cava_rebin(&o, 64).unwrap();
        assert_eq!(p.nframes(), 1);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_short_order() {
        assert!(cava_generate(64, 63, GRO_S).is_err());
    }
}
