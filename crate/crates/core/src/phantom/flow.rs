use std::f64::consts::PI;

use ndarray::Array3;

use super::coils::GridSpec;
use super::waveform::ejection_profile;
use super::{FlowTruth, FlowWaveform, PhantomConfig, PhantomTruth, Torso, TruthBeat};
use crate::error::{Error, Result};
use crate::types::ImageSeries;

pub const VESSEL: f64 = 0.8;
pub const BACKGROUND: f64 = 0.3;
/// Minimum distance between the vessel wall and the grid edge, pixels.
pub const MIN_MARGIN_PX: f64 = 4.0;
const FINE_STEPS_PER_BEAT: usize = 20_000;

/// Through-plane velocity (cm/s) and magnitude series of one vessel slice.
#[derive(Clone, Debug)]
pub struct FlowPhantom {
    pub velocity: ImageSeries<f64>,
    pub magnitude: ImageSeries<f64>,
    pub truth: PhantomTruth,
}

/// Centre-line velocity at time `t`, cm/s.
pub fn centre_velocity(cfg: &PhantomConfig, t: f64) -> f64 {
    let shape = match cfg.flow_waveform {
        FlowWaveform::Pulsatile => ejection_profile(cfg.cardiac_phase_at(t)),
        FlowWaveform::Steady => 1.0,
    };
    let resp = 1.0 + cfg.flow_resp_modulation * (cfg.resp_level_at(t) - 1.0);
    cfg.peak_velocity_cm_s * shape * resp
}

/// Volume flow rate of a Poiseuille profile, mL/s: half the centre-line
/// velocity times the lumen area.
pub fn flow_rate_ml_s(cfg: &PhantomConfig, t: f64) -> f64 {
    let r_cm = cfg.vessel_radius_mm / 10.0;
    0.5 * centre_velocity(cfg, t) * PI * r_cm * r_cm
}

pub fn make_flow_phantom(cfg: &PhantomConfig) -> Result<FlowPhantom> {
    cfg.validate()?;
    if !(cfg.peak_velocity_cm_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "peak velocity must be positive, got {}",
            cfg.peak_velocity_cm_s
        )));
    }
    let grid = GridSpec::new(cfg.ny, cfg.nx, cfg.pixel_mm);
    let [vy, vx] = cfg.vessel_centre_mm;
    let r = cfg.vessel_radius_mm;
    let half_y = cfg.ny as f64 * cfg.pixel_mm / 2.0;
    let half_x = cfg.nx as f64 * cfg.pixel_mm / 2.0;
    let margin = MIN_MARGIN_PX * cfg.pixel_mm;
    let y_lo = vy - cfg.resp_inplane_mm - r;
    let y_hi = vy + r;
    if y_lo < -half_y + margin || y_hi > half_y - margin || vx - r < -half_x + margin || vx + r > half_x - margin {
        return Err(Error::InvalidConfig(format!(
            "vessel of radius {r} mm at ({vy}, {vx}) mm leaves less than {MIN_MARGIN_PX} pixels margin"
        )));
    }

    let torso = Torso::for_grid(&grid);
    let background = torso.mask(&grid).mapv(|b| if b { BACKGROUND } else { 0.0 });
    let times = cfg.frame_times_s();
    let nf = cfg.frames;
    let mut velocity = Array3::<f64>::zeros((nf, cfg.ny, cfg.nx));
    let mut magnitude = Array3::<f64>::zeros((nf, cfg.ny, cfg.nx));
    let mut masks = Array3::from_elem((nf, cfg.ny, cfg.nx), false);
    let mut peak = Vec::with_capacity(nf);
    let mut respiratory = Vec::with_capacity(nf);
    let mut cardiac = Vec::with_capacity(nf);
    let mut through = Vec::with_capacity(nf);
    let mut inplane = Vec::with_capacity(nf);
    for (f, &t) in times.iter().enumerate() {
        let level = cfg.resp_level_at(t);
        let phase = cfg.cardiac_phase_at(t);
        let v0 = centre_velocity(cfg, t);
        let profile = match cfg.flow_waveform {
            FlowWaveform::Pulsatile => ejection_profile(phase),
            FlowWaveform::Steady => 1.0,
        };
        let bright = VESSEL * (1.0 + cfg.inflow_enhancement * profile);
        let dy = -cfg.resp_inplane_mm * (1.0 - level);
        magnitude.index_axis_mut(ndarray::Axis(0), f).assign(&background);
        for iy in 0..cfg.ny {
            let y = grid.y_mm(iy) - (vy + dy);
            for ix in 0..cfg.nx {
                let x = grid.x_mm(ix) - vx;
                let rho2 = (y * y + x * x) / (r * r);
                if rho2 < 1.0 {
                    velocity[[f, iy, ix]] = v0 * (1.0 - rho2);
                    magnitude[[f, iy, ix]] = bright;
                    masks[[f, iy, ix]] = true;
                }
            }
        }
        peak.push(v0);
        respiratory.push(level);
        cardiac.push(phase);
        through.push(-cfg.resp_throughplane_mm * (1.0 - level));
        inplane.push(dy);
    }

    let period = 60.0 / cfg.heart_rate_bpm;
    let beats = cfg
        .beat_times()
        .into_iter()
        .map(|(start_s, end_s)| {
            let h = period / FINE_STEPS_PER_BEAT as f64;
            let mut nff = 0.0;
            let mut vmax: f64 = 0.0;
            for i in 0..FINE_STEPS_PER_BEAT {
                let t = start_s + (i as f64 + 0.5) * h;
                nff += flow_rate_ml_s(cfg, t) * h;
                vmax = vmax.max(centre_velocity(cfg, t));
            }
            TruthBeat {
                start_s,
                end_s,
                nff_ml: Some(nff),
                vmax_cm_s: Some(vmax),
            }
        })
        .collect();

    Ok(FlowPhantom {
        velocity: ImageSeries::new(velocity.clone(), cfg.pixel_mm, cfg.frame_interval_ms),
        magnitude: ImageSeries::new(magnitude, cfg.pixel_mm, cfg.frame_interval_ms),
        truth: PhantomTruth {
            frame_times_s: times,
            frame_interval_ms: cfg.frame_interval_ms,
            respiratory,
            cardiac_phase: cardiac,
            through_plane_mm: through,
            inplane_mm: inplane,
            heart_rate_bpm: cfg.heart_rate_bpm,
            resp_rate_bpm: cfg.resp_rate_bpm,
            beats,
            cine: None,
            flow: Some(FlowTruth {
                velocity,
                vessel_masks: masks,
                peak_velocity: peak,
                radius_mm: r,
            }),
        },
    })
}
