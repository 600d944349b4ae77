use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{s, Array2, Array3};

use super::coils::GridSpec;
use super::waveform::volume_fraction;
use super::{CineTruth, PhantomConfig, PhantomTruth, Torso, TruthBeat};
use crate::error::{Error, Result};
use crate::types::ImageSeries;

pub const BLOOD: f64 = 1.0;
pub const MYOCARDIUM: f64 = 0.4;
pub const BODY: f64 = 0.2;

/// LV centre in the imaging plane at end-expiration, `(y, x)` mm.
const LV_CENTRE_MM: (f64, f64) = (-6.0, 12.0);
/// RV centre offset along -x, in units of the end-diastolic epicardial radius.
const RV_OFFSET: f64 = 0.75;
const QUADRATURE_INTERVALS: usize = 1000;

/// Cine stack: one real-valued series per slice plus truth.
#[derive(Clone, Debug)]
pub struct CinePhantom {
    pub slices: Vec<ImageSeries<f64>>,
    pub truth: PhantomTruth,
}

/// Biventricular shape at one instant, mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeartGeometry {
    /// LV cavity short-axis semi-axis.
    pub lv_short: f64,
    /// LV cavity long (z) semi-axis.
    pub lv_long: f64,
    pub myocardium: f64,
    /// RV outer spheroid in-plane radius.
    pub rv_radius: f64,
    /// RV outer spheroid z semi-axis.
    pub rv_long: f64,
    /// Distance between LV and RV centres along -x.
    pub rv_offset: f64,
}

impl HeartGeometry {
    pub fn lv_volume_ml(&self) -> f64 {
        4.0 / 3.0 * PI * self.lv_long * self.lv_short * self.lv_short / 1000.0
    }

    fn lv_radius_at(&self, z: f64) -> f64 {
        spheroid_radius(self.lv_short, self.lv_long, z)
    }

    fn epi_radius_at(&self, z: f64) -> f64 {
        spheroid_radius(
            self.lv_short + self.myocardium,
            self.lv_long + self.myocardium,
            z,
        )
    }

    fn rv_radius_at(&self, z: f64) -> f64 {
        spheroid_radius(self.rv_radius, self.rv_long, z)
    }

    /// RV cavity cross-section: RV disc minus its overlap with the LV epicardium.
    fn rv_area_at(&self, z: f64) -> f64 {
        let outer = self.rv_radius_at(z);
        let inner = self.epi_radius_at(z);
        PI * outer * outer - lens_area(outer, inner, self.rv_offset)
    }

    /// RV cavity volume by Simpson quadrature of the closed-form cross-section.
    pub fn rv_volume_ml(&self) -> f64 {
        let n = QUADRATURE_INTERVALS;
        let h = 2.0 * self.rv_long / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let z = -self.rv_long + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.rv_area_at(z);
        }
        acc * h / 3.0 / 1000.0
    }
}

fn spheroid_radius(short: f64, long: f64, z: f64) -> f64 {
    let q = 1.0 - (z / long).powi(2);
    if q > 0.0 {
        short * q.sqrt()
    } else {
        0.0
    }
}

/// Intersection area of two discs with radii `r1`, `r2` and centre distance `d`.
fn lens_area(r1: f64, r2: f64, d: f64) -> f64 {
    if r1 <= 0.0 || r2 <= 0.0 || d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0);
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k.sqrt()
}

struct HeartModel {
    ratio: f64,
    myocardium: f64,
    rv_long: f64,
    rv_offset: f64,
}

impl HeartModel {
    fn new(cfg: &PhantomConfig) -> Self {
        let b_ed = lv_short_axis(cfg.edv_ml, cfg.lv_axis_ratio);
        Self {
            ratio: cfg.lv_axis_ratio,
            myocardium: cfg.myocardium_mm,
            rv_long: b_ed * cfg.lv_axis_ratio,
            rv_offset: RV_OFFSET * (b_ed + cfg.myocardium_mm),
        }
    }

    /// Shape whose LV and RV cavity volumes both equal `volume_ml`.
    fn geometry(&self, volume_ml: f64) -> HeartGeometry {
        let b = lv_short_axis(volume_ml, self.ratio);
        let mut g = HeartGeometry {
            lv_short: b,
            lv_long: b * self.ratio,
            myocardium: self.myocardium,
            rv_radius: 0.0,
            rv_long: self.rv_long,
            rv_offset: self.rv_offset,
        };
        let mut lo = 0.0;
        let mut hi = 2.0 * b + self.myocardium;
        g.rv_radius = hi;
        while g.rv_volume_ml() < volume_ml {
            hi *= 2.0;
            g.rv_radius = hi;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            g.rv_radius = mid;
            if g.rv_volume_ml() < volume_ml {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        g.rv_radius = 0.5 * (lo + hi);
        g
    }
}

/// Short-axis semi-axis of a spheroid of `volume_ml` with long/short `ratio`.
fn lv_short_axis(volume_ml: f64, ratio: f64) -> f64 {
    (3.0 * volume_ml * 1000.0 / (4.0 * PI * ratio)).cbrt()
}

pub fn make_cine_phantom(cfg: &PhantomConfig) -> Result<CinePhantom> {
    cfg.validate()?;
    let grid = GridSpec::new(cfg.ny, cfg.nx, cfg.pixel_mm);
    let torso = Torso::for_grid(&grid);
    let model = HeartModel::new(cfg);
    let times = cfg.frame_times_s();
    let nf = cfg.frames;

    // the end-diastolic heart must fit the field of view at every excursion
    let ed = model.geometry(cfg.edv_ml);
    let half_y = cfg.ny as f64 * cfg.pixel_mm / 2.0;
    let half_x = cfg.nx as f64 * cfg.pixel_mm / 2.0;
    let right = LV_CENTRE_MM.1 + ed.lv_short + ed.myocardium;
    let left = LV_CENTRE_MM.1 - ed.rv_offset - ed.rv_radius;
    let reach_y = LV_CENTRE_MM.0.abs() + cfg.resp_inplane_mm + ed.rv_radius.max(ed.lv_short + ed.myocardium);
    if right >= half_x || left <= -half_x || reach_y >= half_y {
        return Err(Error::InvalidConfig(format!(
            "heart does not fit a {:.0}x{:.0} mm field of view",
            2.0 * half_y,
            2.0 * half_x
        )));
    }

    let mut cache: BTreeMap<u64, HeartGeometry> = BTreeMap::new();
    let mut shapes = Vec::with_capacity(nf);
    let mut respiratory = Vec::with_capacity(nf);
    let mut cardiac = Vec::with_capacity(nf);
    let mut through = Vec::with_capacity(nf);
    let mut inplane = Vec::with_capacity(nf);
    let mut lv_volumes = Vec::with_capacity(nf);
    for &t in &times {
        let phase = cfg.cardiac_phase_at(t);
        let volume = cfg.esv_ml + (cfg.edv_ml - cfg.esv_ml) * volume_fraction(phase);
        let g = *cache
            .entry(volume.to_bits())
            .or_insert_with(|| model.geometry(volume));
        let level = cfg.resp_level_at(t);
        shapes.push(g);
        respiratory.push(level);
        cardiac.push(phase);
        through.push(-cfg.resp_throughplane_mm * (1.0 - level));
        inplane.push(-cfg.resp_inplane_mm * (1.0 - level));
        lv_volumes.push(volume);
    }
    let rv_volumes = lv_volumes.clone();

    let torso_image = torso.mask(&grid).mapv(|b| if b { BODY } else { 0.0 });
    let mut slices = Vec::with_capacity(cfg.slice_positions_mm.len());
    let mut lv_masks = Vec::with_capacity(slices.capacity());
    let mut rv_masks = Vec::with_capacity(slices.capacity());
    let mut dynamic_masks = Vec::with_capacity(slices.capacity());
    for &zs in &cfg.slice_positions_mm {
        let mut img = Array3::<f64>::zeros((nf, cfg.ny, cfg.nx));
        let mut lv = Array3::<bool>::from_elem((nf, cfg.ny, cfg.nx), false);
        let mut rv = Array3::<bool>::from_elem((nf, cfg.ny, cfg.nx), false);
        for f in 0..nf {
            img.slice_mut(s![f, .., ..]).assign(&torso_image);
            let g = &shapes[f];
            let z = zs - through[f];
            let r_lv = g.lv_radius_at(z);
            let r_epi = g.epi_radius_at(z);
            let r_rv = g.rv_radius_at(z);
            let cy = LV_CENTRE_MM.0 + inplane[f];
            let cx = LV_CENTRE_MM.1;
            let rx = cx - g.rv_offset;
            for iy in 0..cfg.ny {
                let y = grid.y_mm(iy) - cy;
                for ix in 0..cfg.nx {
                    let x = grid.x_mm(ix);
                    let d_lv = y * y + (x - cx).powi(2);
                    if d_lv < r_lv * r_lv {
                        img[[f, iy, ix]] = BLOOD;
                        lv[[f, iy, ix]] = true;
                    } else if d_lv < r_epi * r_epi {
                        img[[f, iy, ix]] = MYOCARDIUM;
                    } else if y * y + (x - rx).powi(2) < r_rv * r_rv {
                        img[[f, iy, ix]] = BLOOD;
                        rv[[f, iy, ix]] = true;
                    }
                }
            }
        }
        dynamic_masks.push(dynamic_mask(&img, 2));
        slices.push(ImageSeries::new(img, cfg.pixel_mm, cfg.frame_interval_ms));
        lv_masks.push(lv);
        rv_masks.push(rv);
    }

    let beats = cfg
        .beat_times()
        .into_iter()
        .map(|(start_s, end_s)| TruthBeat {
            start_s,
            end_s,
            nff_ml: None,
            vmax_cm_s: None,
        })
        .collect();

    Ok(CinePhantom {
        slices,
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
            cine: Some(CineTruth {
                slice_positions_mm: cfg.slice_positions_mm.clone(),
                slice_thickness_mm: cfg.slice_thickness_mm,
                lv_masks,
                rv_masks,
                dynamic_masks,
                lv_volumes_ml: lv_volumes,
                rv_volumes_ml: rv_volumes,
            }),
            flow: None,
        },
    })
}

/// Pixels whose value changes across frames, dilated by `radius` pixels.
pub(crate) fn dynamic_mask(series: &Array3<f64>, radius: usize) -> Array2<bool> {
    let (nf, ny, nx) = series.dim();
    let mut moving = Array2::from_elem((ny, nx), false);
    for iy in 0..ny {
        for ix in 0..nx {
            let first = series[[0, iy, ix]];
            moving[[iy, ix]] = (1..nf).any(|f| series[[f, iy, ix]] != first);
        }
    }
    dilate(&moving, radius)
}

pub(crate) fn dilate(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    let (ny, nx) = mask.dim();
    let mut out = Array2::from_elem((ny, nx), false);
    for ((iy, ix), &m) in mask.indexed_iter() {
        if m {
            let y0 = iy.saturating_sub(radius);
            let x0 = ix.saturating_sub(radius);
            let y1 = (iy + radius).min(ny - 1);
            let x1 = (ix + radius).min(nx - 1);
            out.slice_mut(s![y0..=y1, x0..=x1]).fill(true);
        }
    }
    out
}
