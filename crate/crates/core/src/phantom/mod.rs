//! Analytic dynamic phantoms with known ground truth.
//!
//! Geometry is expressed in millimetres with the image centre at the origin;
//! `y` is the phase-encode (row) axis and `x` the readout (column) axis. The
//! short-axis slice stack runs along `z`.

mod cine;
mod coils;
mod flow;
pub mod waveform;

use std::fmt;
use std::ops::Range;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cine::{make_cine_phantom, CinePhantom, HeartGeometry};
pub use coils::{apply_bulk_motion, coil_maps_synthetic, GridSpec};
pub use flow::{make_flow_phantom, FlowPhantom};

/// Smallest grid on which the cardiac shapes are resolvable.
pub const MIN_GRID: usize = 64;

/// Exercise stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "rest")]
    Rest,
    #[serde(rename = "20W")]
    W20,
    #[serde(rename = "40W")]
    W40,
    #[serde(rename = "60W")]
    W60,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Rest, Stage::W20, Stage::W40, Stage::W60];

    pub fn label(&self) -> &'static str {
        match self {
            Stage::Rest => "rest",
            Stage::W20 => "20W",
            Stage::W40 => "40W",
            Stage::W60 => "60W",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowWaveform {
    /// Systolic ejection bump, no diastolic forward flow.
    Pulsatile,
    /// Constant peak velocity.
    Steady,
}

/// Periodic rigid displacement of part of the receive array (pedalling).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkMotion {
    pub period_s: f64,
    pub amplitude_mm: f64,
    pub coils: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub ny: usize,
    pub nx: usize,
    pub pixel_mm: f64,
    pub slice_thickness_mm: f64,
    /// Slice centres along the long axis, mm, relative to the heart centre at
    /// end-expiration.
    pub slice_positions_mm: Vec<f64>,
    pub frames: usize,
    pub frame_interval_ms: f64,
    pub heart_rate_bpm: f64,
    /// Breaths per minute.
    pub resp_rate_bpm: f64,
    /// Peak-to-peak in-plane (y) respiratory excursion, mm.
    pub resp_inplane_mm: f64,
    /// Peak-to-peak through-plane respiratory excursion, mm.
    pub resp_throughplane_mm: f64,
    /// Expiratory dwell exponent; 1 gives a symmetric raised cosine.
    pub resp_skew: f64,
    /// Respiratory phase at t = 0, cycles.
    pub resp_phase: f64,
    /// Cardiac phase at t = 0, cycles.
    pub cardiac_phase: f64,
    pub stage: Stage,
    pub edv_ml: f64,
    pub esv_ml: f64,
    /// LV cavity long/short semi-axis ratio (> 1: prolate).
    pub lv_axis_ratio: f64,
    pub myocardium_mm: f64,
    pub vessel_radius_mm: f64,
    /// Vessel centre `(y, x)` at end-expiration, mm.
    pub vessel_centre_mm: [f64; 2],
    pub peak_velocity_cm_s: f64,
    pub flow_waveform: FlowWaveform,
    /// Relative drop of vessel velocity at end-inspiration.
    pub flow_resp_modulation: f64,
    /// Relative vessel magnitude increase at peak flow.
    pub inflow_enhancement: f64,
    pub ncoils: usize,
    pub bulk_motion: Vec<BulkMotion>,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            ny: 144,
            nx: 144,
            pixel_mm: 2.0,
            slice_thickness_mm: 6.0,
            slice_positions_mm: (0..11).map(|i| (i as f64 - 5.0) * 6.0).collect(),
            frames: 150,
            frame_interval_ms: 41.6,
            heart_rate_bpm: 70.0,
            resp_rate_bpm: 20.0,
            resp_inplane_mm: 6.0,
            resp_throughplane_mm: 8.0,
            resp_skew: 2.0,
            resp_phase: 0.0,
            cardiac_phase: 0.0,
            stage: Stage::Rest,
            edv_ml: 150.0,
            esv_ml: 60.0,
            lv_axis_ratio: 1.1,
            myocardium_mm: 8.0,
            vessel_radius_mm: 12.0,
            vessel_centre_mm: [-10.0, -20.0],
            peak_velocity_cm_s: 100.0,
            flow_waveform: FlowWaveform::Pulsatile,
            flow_resp_modulation: 0.1,
            inflow_enhancement: 0.25,
            ncoils: 8,
            bulk_motion: Vec::new(),
            seed: 1,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.ny < MIN_GRID || self.nx < MIN_GRID {
            return Err(Error::GridTooSmall {
                ny: self.ny,
                nx: self.nx,
                min: MIN_GRID,
            });
        }
        let positive = [
            ("pixel_mm", self.pixel_mm),
            ("slice_thickness_mm", self.slice_thickness_mm),
            ("frame_interval_ms", self.frame_interval_ms),
            ("heart_rate_bpm", self.heart_rate_bpm),
            ("resp_rate_bpm", self.resp_rate_bpm),
            ("esv_ml", self.esv_ml),
            ("edv_ml", self.edv_ml),
            ("lv_axis_ratio", self.lv_axis_ratio),
            ("myocardium_mm", self.myocardium_mm),
            ("vessel_radius_mm", self.vessel_radius_mm),
            ("resp_skew", self.resp_skew),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.resp_inplane_mm < 0.0 || self.resp_throughplane_mm < 0.0 {
            return bad("respiratory amplitudes must be non-negative".into());
        }
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.slice_positions_mm.is_empty() {
            return bad("at least one slice position is required".into());
        }
        if self.heart_rate_bpm <= self.resp_rate_bpm {
            return bad(format!(
                "heart rate ({} bpm) must exceed respiratory rate ({} /min)",
                self.heart_rate_bpm, self.resp_rate_bpm
            ));
        }
        let duration_s = self.frames as f64 * self.frame_interval_ms / 1000.0;
        let resp_period_s = 60.0 / self.resp_rate_bpm;
        if duration_s < 2.0 * resp_period_s {
            return bad(format!(
                "series of {duration_s:.2} s covers fewer than two respiratory periods ({resp_period_s:.2} s)"
            ));
        }
        if self.esv_ml >= self.edv_ml {
            return bad(format!(
                "ESV ({}) must be smaller than EDV ({})",
                self.esv_ml, self.edv_ml
            ));
        }
        if self.ncoils < 2 {
            return bad("at least two coils are required".into());
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.frames as f64 * self.frame_interval_ms / 1000.0
    }

    /// Acquisition-centre time of every frame, s.
    pub fn frame_times_s(&self) -> Vec<f64> {
        let dt = self.frame_interval_ms / 1000.0;
        (0..self.frames).map(|f| (f as f64 + 0.5) * dt).collect()
    }

    pub fn cardiac_phase_at(&self, t: f64) -> f64 {
        waveform::fract(t * self.heart_rate_bpm / 60.0 + self.cardiac_phase)
    }

    pub fn resp_level_at(&self, t: f64) -> f64 {
        waveform::respiratory_level(t * self.resp_rate_bpm / 60.0 + self.resp_phase, self.resp_skew)
    }

    /// Whole cardiac cycles contained in `[0, duration)`, as `(start, end)` times.
    pub fn beat_times(&self) -> Vec<(f64, f64)> {
        let period = 60.0 / self.heart_rate_bpm;
        let first = waveform::fract(1.0 - self.cardiac_phase) * period;
        let duration = self.duration_s();
        let mut out = Vec::new();
        let mut t = first;
        while t + period <= duration + 1e-12 {
            out.push((t, t + period));
            t += period;
        }
        out
    }
}

/// Torso outline: an axis-aligned ellipse scaled to the field of view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Torso {
    pub semi_y_mm: f64,
    pub semi_x_mm: f64,
}

impl Torso {
    pub fn for_grid(grid: &GridSpec) -> Self {
        Self {
            semi_y_mm: 0.36 * grid.ny as f64 * grid.pixel_mm,
            semi_x_mm: 0.44 * grid.nx as f64 * grid.pixel_mm,
        }
    }

    pub fn contains(&self, y_mm: f64, x_mm: f64) -> bool {
        (y_mm / self.semi_y_mm).powi(2) + (x_mm / self.semi_x_mm).powi(2) <= 1.0
    }

    pub fn mask(&self, grid: &GridSpec) -> Array2<bool> {
        Array2::from_shape_fn((grid.ny, grid.nx), |(y, x)| {
            self.contains(grid.y_mm(y), grid.x_mm(x))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthBeat {
    pub start_s: f64,
    pub end_s: f64,
    /// Net forward flow over the beat (flow phantoms), mL.
    pub nff_ml: Option<f64>,
    /// Peak centre-line velocity over the beat (flow phantoms), cm/s.
    pub vmax_cm_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CineTruth {
    pub slice_positions_mm: Vec<f64>,
    pub slice_thickness_mm: f64,
    /// Per slice, `(frame, y, x)`.
    pub lv_masks: Vec<Array3<bool>>,
    pub rv_masks: Vec<Array3<bool>>,
    /// Per slice: pixels whose intensity changes over time, dilated.
    pub dynamic_masks: Vec<Array2<bool>>,
    /// Analytic cavity volumes per frame, mL.
    pub lv_volumes_ml: Vec<f64>,
    pub rv_volumes_ml: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowTruth {
    /// Through-plane velocity, cm/s, `(frame, y, x)`.
    pub velocity: Array3<f64>,
    pub vessel_masks: Array3<bool>,
    /// Centre-line (peak) velocity per frame, cm/s.
    pub peak_velocity: Vec<f64>,
    pub radius_mm: f64,
}

/// Ground truth for one simulated acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomTruth {
    pub frame_times_s: Vec<f64>,
    pub frame_interval_ms: f64,
    /// Respiratory level, 1 at end-expiration.
    pub respiratory: Vec<f64>,
    pub cardiac_phase: Vec<f64>,
    pub through_plane_mm: Vec<f64>,
    pub inplane_mm: Vec<f64>,
    pub heart_rate_bpm: f64,
    pub resp_rate_bpm: f64,
    /// Whole cardiac cycles inside the series.
    pub beats: Vec<TruthBeat>,
    pub cine: Option<CineTruth>,
    pub flow: Option<FlowTruth>,
}

impl PhantomTruth {
    /// Frames at the end-expiratory plateau (respiratory level >= `level`).
    pub fn ee_frames(&self, level: f64) -> Vec<bool> {
        self.respiratory.iter().map(|&r| r >= level).collect()
    }

    /// Frames whose acquisition centre falls inside a truth beat.
    pub fn beat_frames(&self, beat: usize) -> Range<usize> {
        let b = &self.beats[beat];
        let dt = self.frame_interval_ms / 1000.0;
        let start = ((b.start_s / dt) - 0.5).ceil().max(0.0) as usize;
        let end = (((b.end_s / dt) - 0.5).ceil().max(0.0) as usize).min(self.frame_times_s.len());
        start..end
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        PhantomConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_small_grid_and_inverted_volumes() {
        let cfg = PhantomConfig {
            ny: 32,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::GridTooSmall { .. })));
        let cfg = PhantomConfig {
            esv_ml: 160.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PhantomConfig {
            frames: 50,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn beat_times_are_whole_cycles() {
        let cfg = PhantomConfig {
            cardiac_phase: 0.3,
            ..Default::default()
        };
        let beats = cfg.beat_times();
        let period = 60.0 / cfg.heart_rate_bpm;
        assert!(!beats.is_empty());
        for (s, e) in &beats {
            assert!((e - s - period).abs() < 1e-12);
            assert!(cfg.cardiac_phase_at(*s + 1e-9) < 1e-6);
        }
    }

    #[test]
    fn stage_labels_roundtrip() {
        for st in Stage::ALL {
            assert_eq!(Stage::parse(st.label()), Some(st));
        }
    }
}
