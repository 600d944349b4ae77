//! Self-gating: respiratory and cardiac surrogate signals from image series,
//! end-expiration detection and beat selection.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Axis};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ImageSeries, C64};

pub const RESP_BAND_HZ: (f64, f64) = (0.05, 0.7);
pub const CARDIAC_BAND_HZ: (f64, f64) = (0.7, 3.5);
/// Spatial block-averaging factor before PCA.
pub const DOWNSAMPLE: usize = 4;
pub const COMPONENTS: usize = 6;
/// Minimum in-band energy fraction of the respiratory component.
pub const MIN_RESP_FRACTION: f64 = 0.4;
/// Spectra are zero-padded by this factor before peak picking.
const PAD: usize = 8;
/// Width of the cosine roll-off at each band edge, Hz.
const TAPER_HZ: f64 = 0.1;
/// Respiratory harmonics kept in the output signal.
const RESP_HARMONICS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysioSignals {
    /// Unit variance, end-expiration toward the maximum.
    pub resp: Vec<f64>,
    /// Unit variance.
    pub cardiac: Vec<f64>,
    pub fps: f64,
    pub resp_hz: f64,
    pub cardiac_hz: f64,
    pub hr_bpm: f64,
    pub aphr_percent: f64,
    /// In-band energy fraction of the chosen respiratory component.
    pub resp_band_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RespLabel {
    #[serde(rename = "EE")]
    EndExpiration,
    #[serde(rename = "AP")]
    AllPhase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub frames: Range<usize>,
    pub label: RespLabel,
    /// Fraction of the beat's frames inside an end-expiration window.
    pub ee_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatSelection {
    pub beats: Vec<Beat>,
    pub chosen: usize,
}

impl BeatSelection {
    pub fn chosen_beat(&self) -> &Beat {
        &self.beats[self.chosen]
    }
}

/// Thresholds of [`detect_end_expiration`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EeSettings {
    /// Fraction of frames (highest respiratory values) that are candidates.
    pub top_fraction: f64,
    /// Maximum |slope| relative to the RMS slope.
    pub slope_fraction: f64,
    pub min_frames: usize,
    /// A beat is end-expiratory when this fraction of its frames is.
    pub beat_fraction: f64,
}

impl Default for EeSettings {
    fn default() -> Self {
        Self {
            top_fraction: 0.2,
            slope_fraction: 0.2,
            min_frames: 3,
            beat_fraction: 0.8,
        }
    }
}

pub fn aphr_percent(hr_bpm: f64, age_years: f64) -> f64 {
    100.0 * hr_bpm / (220.0 - age_years)
}

/// Respiratory and cardiac signals from the leading temporal principal
/// components of a `x4` block-averaged magnitude series.
pub fn extract_physio(images: &ImageSeries<f64>, age_years: f64) -> Result<PhysioSignals> {
    let t = images.frames();
    let fps = images.fps();
    let duration = t as f64 / fps;
    if t < 16 || duration * RESP_BAND_HZ.1 < 2.0 {
        return Err(Error::SeriesTooShort(format!(
            "{t} frames ({duration:.2} s) cannot resolve two respiratory periods"
        )));
    }
    if !(age_years < 220.0) {
        return Err(Error::InvalidConfig(format!("age {age_years} leaves no predicted maximal heart rate")));
    }
    let small = downsample(images, DOWNSAMPLE);
    let p = small.ncols();
    let mean = small.mean_axis(Axis(0)).expect("frames > 0");
    let mut centred = &small - &mean.insert_axis(Axis(0));
    // reconstruction artifacts are temporally incoherent; drop their
    // energy above the physiological band before the decomposition
    for mut col in centred.columns_mut() {
        let smooth = band_limit(&col.to_vec(), fps, (0.0, CARDIAC_BAND_HZ.1));
        col.iter_mut().zip(smooth).for_each(|(v, s)| *v = s);
    }
    let gram = centred.dot(&centred.t());
    let g = DMatrix::from_fn(t, t, |i, j| 0.5 * (gram[[i, j]] + gram[[j, i]]));
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let ncomp = COMPONENTS.min(t).min(p.max(1));
    let comps: Vec<Vec<f64>> = order[..ncomp]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();

    let spectra: Vec<Vec<f64>> = comps.iter().map(|c| power_spectrum(c)).collect();
    let nfft = spectra[0].len() * 2;
    let hz = |bin: usize| bin as f64 * fps / nfft as f64;
    let fraction = |spec: &[f64], band: (f64, f64)| {
        let total: f64 = spec.iter().skip(1).sum();
        if total <= 0.0 {
            return 0.0;
        }
        spec.iter()
            .enumerate()
            .skip(1)
            .filter(|&(b, _)| hz(b) >= band.0 && hz(b) < band.1)
            .map(|(_, v)| v)
            .sum::<f64>()
            / total
    };
    // eigenvectors are unit norm, so in-band energy scales with the eigenvalue
    let weight: Vec<f64> = order[..ncomp].iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let strongest = |band: (f64, f64), skip: Option<usize>| {
        spectra
            .iter()
            .enumerate()
            .filter(|&(i, _)| Some(i) != skip)
            .map(|(i, s)| (i, weight[i] * fraction(s, band)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    };
    let ri = strongest(RESP_BAND_HZ, None).expect("at least one component");
    let best = fraction(&spectra[ri], RESP_BAND_HZ);
    if best < MIN_RESP_FRACTION {
        return Err(Error::NoRespiratorySignal { best });
    }
    let ci = strongest(CARDIAC_BAND_HZ, Some(ri))
        .ok_or_else(|| Error::Undefined("no component left for the cardiac signal".into()))?;

    let resp_hz = peak_hz(&spectra[ri], RESP_BAND_HZ, fps, nfft);
    let cardiac_hz = peak_hz(&spectra[ci], CARDIAC_BAND_HZ, fps, nfft);
    let hr_bpm = 60.0 * cardiac_hz;
    // keep the respiratory harmonics that carry the expiratory dwell, short
    // of the cardiac peak
    let resp_edge = (RESP_HARMONICS * resp_hz).min(0.5 * (resp_hz + cardiac_hz)).max(RESP_BAND_HZ.1);
    Ok(PhysioSignals {
        resp: orient(standardize(&band_limit(&comps[ri], fps, (0.0, resp_edge)))),
        cardiac: orient(standardize(&band_limit(&comps[ci], fps, CARDIAC_BAND_HZ))),
        fps,
        resp_hz,
        cardiac_hz,
        hr_bpm,
        aphr_percent: aphr_percent(hr_bpm, age_years),
        resp_band_fraction: best,
    })
}

/// Block means over `f x f` pixels, `(frames, pixels)`. Edge blocks that do
/// not fill completely are dropped.
fn downsample(images: &ImageSeries<f64>, f: usize) -> Array2<f64> {
    let (t, ny, nx) = images.data.dim();
    let (by, bx) = ((ny / f).max(1), (nx / f).max(1));
    let (fy, fx) = (ny / by, nx / bx);
    let mut out = Array2::<f64>::zeros((t, by * bx));
    for (k, frame) in images.data.axis_iter(Axis(0)).enumerate() {
        for ((y, x), &v) in frame.indexed_iter() {
            let (iy, ix) = (y / fy, x / fx);
            if iy < by && ix < bx {
                out[[k, iy * bx + ix]] += v;
            }
        }
    }
    out.mapv_inplace(|v| v / (fy * fx) as f64);
    out
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// Flip the sign so the side where the signal dwells longer (negative
/// skewness) is positive.
fn orient(x: Vec<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let skew = x.iter().map(|v| v.powi(3)).sum::<f64>() / n;
    if skew > 0.0 {
        x.into_iter().map(|v| -v).collect()
    } else {
        x
    }
}

/// One-sided power spectrum of the Hann-windowed, mean-removed signal,
/// zero-padded to `PAD` times the next power of two.
fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let nfft = n.next_power_of_two() * PAD;
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<C64> = (0..nfft)
        .map(|i| {
            if i < n {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1).max(1) as f64).cos();
                C64::new(w * (x[i] - mean), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    buf[..nfft / 2].iter().map(|v| v.norm_sqr()).collect()
}

/// Zero-phase band-pass over a mirror-extended copy of `x`, with a cosine
/// roll-off of `TAPER_HZ` outside each edge. A lower edge of 0 keeps DC.
fn band_limit(x: &[f64], fps: f64, band: (f64, f64)) -> Vec<f64> {
    let n = x.len();
    let m = 2 * n;
    let mut buf: Vec<C64> = x.iter().chain(x.iter().rev()).map(|&v| C64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    let gain = |f: f64| {
        let edge = |d: f64| {
            if d <= 0.0 {
                1.0
            } else if d >= TAPER_HZ {
                0.0
            } else {
                0.5 * (1.0 + (PI * d / TAPER_HZ).cos())
            }
        };
        let low = if band.0 > 0.0 { edge(band.0 - f) } else { 1.0 };
        low * edge(f - band.1)
    };
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(m - k) as f64 * fps / m as f64;
        *v *= gain(f) / m as f64;
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..n].iter().map(|v| v.re).collect()
}

/// Strongest in-band peak with parabolic refinement, Hz.
fn peak_hz(spec: &[f64], band: (f64, f64), fps: f64, nfft: usize) -> f64 {
    let df = fps / nfft as f64;
    let lo = ((band.0 / df).ceil() as usize).max(1);
    let hi = ((band.1 / df).ceil() as usize).min(spec.len() - 1);
    if lo >= hi {
        return lo as f64 * df;
    }
    let k = (lo..hi).max_by(|&a, &b| spec[a].total_cmp(&spec[b])).expect("non-empty band");
    let mut offset = 0.0;
    if k > 0 && k + 1 < spec.len() {
        let (a, b, c) = (spec[k - 1], spec[k], spec[k + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            offset = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
        }
    }
    (k as f64 + offset) * df
}

/// Runs of frames that are among the highest `top_fraction` of the
/// respiratory signal (rank based, ties by frame order) and whose central
/// slope is at most `slope_fraction` of the RMS slope.
pub fn detect_end_expiration(resp: &[f64], settings: EeSettings) -> Vec<Range<usize>> {
    let n = resp.len();
    if n == 0 {
        return Vec::new();
    }
    let slope: Vec<f64> = (0..n)
        .map(|f| match (f, n) {
            (_, 1) => 0.0,
            (0, _) => resp[1] - resp[0],
            (f, n) if f == n - 1 => resp[f] - resp[f - 1],
            (f, _) => 0.5 * (resp[f + 1] - resp[f - 1]),
        })
        .collect();
    let rms = (slope.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    let k = ((settings.top_fraction * n as f64).ceil() as usize).min(n);
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&a, &b| resp[b].total_cmp(&resp[a]).then(a.cmp(&b)));
    let mut candidate = vec![false; n];
    for &f in &rank[..k] {
        candidate[f] = slope[f].abs() <= settings.slope_fraction * rms;
    }
    let mut windows = Vec::new();
    let mut start = None;
    for f in 0..=n {
        let on = f < n && candidate[f];
        match (on, start) {
            (true, None) => start = Some(f),
            (false, Some(s)) => {
                if f - s >= settings.min_frames {
                    windows.push(s..f);
                }
                start = None;
            }
            _ => {}
        }
    }
    windows
}

/// Local maxima of the cardiac signal at least 60% of a cardiac period apart.
pub fn cardiac_peaks(cardiac: &[f64], fps: f64, cardiac_hz: f64) -> Vec<usize> {
    let n = cardiac.len();
    let half = ((0.3 * fps / cardiac_hz).round() as usize).max(1);
    let mut peaks: Vec<usize> = Vec::new();
    for f in 0..n {
        let lo = f.saturating_sub(half);
        let hi = (f + half + 1).min(n);
        let v = cardiac[f];
        // strict on the left so plateaus yield one peak
        let is_max = (lo..f).all(|i| cardiac[i] < v) && (f + 1..hi).all(|i| cardiac[i] <= v);
        if is_max {
            peaks.push(f);
        }
    }
    peaks
}

/// Peak-to-peak beats on the cardiac signal, labeled by their overlap with
/// the end-expiration windows. The chosen beat is the first end-expiratory
/// beat, else the beat with the most end-expiratory frames (labeled AP).
pub fn select_beats(
    signals: &PhysioSignals,
    windows: &[Range<usize>],
    settings: EeSettings,
) -> Result<BeatSelection> {
    let n = signals.cardiac.len();
    let peaks = cardiac_peaks(&signals.cardiac, signals.fps, signals.cardiac_hz);
    if peaks.len() < 2 {
        return Err(Error::SeriesTooShort(format!(
            "{} cardiac peaks in {n} frames, need two for one full beat",
            peaks.len()
        )));
    }
    let mut in_ee = vec![false; n];
    for w in windows {
        for f in w.clone() {
            if f < n {
                in_ee[f] = true;
            }
        }
    }
    let beats: Vec<Beat> = peaks
        .windows(2)
        .map(|p| {
            let frames = p[0]..p[1];
            let ee = frames.clone().filter(|&f| in_ee[f]).count();
            let ee_fraction = ee as f64 / frames.len() as f64;
            let label = if ee_fraction >= settings.beat_fraction {
                RespLabel::EndExpiration
            } else {
                RespLabel::AllPhase
            };
            Beat {
                frames,
                label,
                ee_fraction,
            }
        })
        .collect();
    let chosen = beats
        .iter()
        .position(|b| b.label == RespLabel::EndExpiration)
        .unwrap_or_else(|| {
            let mut best = 0;
            for (i, b) in beats.iter().enumerate() {
                if b.ee_fraction > beats[best].ee_fraction {
                    best = i;
                }
            }
            best
        });
    Ok(BeatSelection { beats, chosen })
}

/// Per-frame record for drawing the respiratory trace with a moving marker
/// under the images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayRecord {
    pub frame: usize,
    pub resp: f64,
    /// Marker position along the trace, 0 at the first frame, 1 at the last.
    pub marker: f64,
}

pub fn export_signal_overlay<T>(images: &ImageSeries<T>, signals: &PhysioSignals) -> Result<Vec<OverlayRecord>> {
    let n = images.frames();
    if signals.resp.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} signal samples for {n} frames",
            signals.resp.len()
        )));
    }
    let span = (n.max(2) - 1) as f64;
    Ok((0..n)
        .map(|f| OverlayRecord {
            frame: f,
            resp: signals.resp[f],
            marker: f as f64 / span,
        })
        .collect())
}

/// `frame,resp,cardiac,ee_flag,beat_id` rows; `beat_id` is empty outside
/// complete beats.
pub fn signals_csv(signals: &PhysioSignals, windows: &[Range<usize>], beats: &BeatSelection) -> String {
    let mut out = String::from("frame,resp,cardiac,ee_flag,beat_id\n");
    for f in 0..signals.resp.len() {
        let ee = windows.iter().any(|w| w.contains(&f)) as u8;
        let beat = beats
            .beats
            .iter()
            .position(|b| b.frames.contains(&f))
            .map(|b| b.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{f},{:.6},{:.6},{ee},{beat}\n", signals.resp[f], signals.cardiac[f]));
    }
    out
}
