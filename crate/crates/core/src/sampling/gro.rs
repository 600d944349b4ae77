use super::{check_density, warp, PatternKind, SamplingPattern, GOLDEN};
use crate::error::{Error, Result};
use crate::phantom::waveform::fract;

/// Golden-ratio-offset pattern. Each frame acquires the centre line `ny / 2`
/// plus `lines_per_frame - 1` lines on a warped uniform template whose offset
/// advances by the golden fraction of the template spacing from frame to
/// frame. Lines are ascending within a frame. Densities too steep for the
/// intra-frame jump bound `ceil(2 ny / lines_per_frame)` are rejected.
pub fn gro_generate(
    ny: usize,
    lines_per_frame: usize,
    frames: usize,
    s: f64,
    alpha: f64,
) -> Result<SamplingPattern> {
    if lines_per_frame < 4 {
        return Err(Error::InvalidConfig(format!(
            "GRO needs at least 4 lines per frame, got {lines_per_frame}"
        )));
    }
    if lines_per_frame > ny {
        return Err(Error::InvalidConfig(format!(
            "{lines_per_frame} lines per frame exceed {ny} phase encodes"
        )));
    }
    if frames == 0 {
        return Err(Error::InvalidConfig("GRO needs at least one frame".into()));
    }
    check_density(s, alpha)?;

    let n = lines_per_frame;
    let centre = ny / 2;
    let half = ny as f64 / 2.0;
    let out = (0..frames)
        .map(|f| {
            if n == ny {
                return (0..ny).collect();
            }
            // n - 1 rotating template points plus the centre line
            let offset = fract(f as f64 * GOLDEN);
            let m = n - 1;
            let mut pos: Vec<f64> = (0..m)
                .map(|j| {
                    let u = (j as f64 + offset) / m as f64;
                    centre as f64 + warp(2.0 * u - 1.0, s, alpha) * half
                })
                .collect();
            pos.push(centre as f64);
            pos.sort_by(f64::total_cmp);
            let mut lines = Vec::with_capacity(n);
            let mut prev: isize = -1;
            for (j, p) in pos.iter().enumerate() {
                let hi = (ny - n + j) as isize;
                let l = (p.round() as isize).clamp(prev + 1, hi);
                lines.push(l as usize);
                prev = l;
            }
            if !lines.contains(&centre) {
                let nearest = (0..n)
                    .min_by_key(|&j| lines[j].abs_diff(centre))
                    .expect("non-empty frame");
                lines[nearest] = centre;
            }
            lines
        })
        .collect::<Vec<Vec<usize>>>();

    let bound = (2 * ny).div_ceil(n);
    let jump = out
        .iter()
        .flat_map(|l| l.windows(2).map(|w| w[1] - w[0]))
        .max()
        .unwrap_or(0);
    if jump > bound {
        return Err(Error::InvalidConfig(format!(
            "density (s {s}, alpha {alpha}) too steep for {n} lines: jump {jump} exceeds {bound}"
        )));
    }

    Ok(SamplingPattern {
        kind: PatternKind::Gro,
        ny,
        frames: out,
        readouts_per_frame: n,
        nominal_r: ny as f64 / n as f64,
        density_s: s,
        density_alpha: alpha,
        duplicates_dropped: 0,
    })
}
