use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use super::pca::TemporalBasis;
use super::uwt::Uwt3;
use crate::error::{Error, Result};
use crate::types::C64;

/// Consistency constant between MAD and the standard deviation of a normal.
const MAD_NORMAL: f64 = 0.6745;
/// Band medians are taken over at most this many evenly strided samples.
const MEDIAN_SAMPLES: usize = 1 << 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformTag {
    Uwt3d,
    TemporalPca,
}

#[derive(Clone, Debug)]
pub enum Transform {
    Uwt(Uwt3),
    Pca(TemporalBasis),
}

impl Transform {
    pub fn tag(&self) -> TransformTag {
        match self {
            Transform::Uwt(_) => TransformTag::Uwt3d,
            Transform::Pca(_) => TransformTag::TemporalPca,
        }
    }

    fn nbands(&self) -> usize {
        match self {
            Transform::Uwt(w) => w.nbands(),
            Transform::Pca(b) => b.frames(),
        }
    }

    /// Approximation / temporal-mean bands are never thresholded.
    fn is_lowpass(&self, band: usize) -> bool {
        match self {
            Transform::Uwt(w) => w.band(band).is_approximation(),
            Transform::Pca(_) => band == 0,
        }
    }
}

#[derive(Clone, Debug)]
struct Member {
    transform: Transform,
    /// `sqrt(weight)` scales both analysis and synthesis.
    root_weight: f64,
    /// Per `(segment, band)`, flattened. Starts at infinity (no estimate).
    thresholds: Vec<f64>,
}

/// Weighted union of sparsifying transforms forming one Parseval frame:
/// member weights sum to 1, so `sum_j w_j W_j^H W_j = I`.
///
/// The time axis can hold several independent series ("segments", e.g.
/// compensated then encoded flow images); each transform acts on each
/// segment separately and keeps its own thresholds per segment and band.
#[derive(Clone, Debug)]
pub struct TransformSet {
    members: Vec<Member>,
    segments: usize,
    threshold_scale: f64,
}

/// Per-band statistics of the thresholded coefficients from one shrink.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShrinkStats {
    /// L1 norm per member and `(segment, band)`.
    pub l1: Vec<Vec<f64>>,
    /// Sum of squared coefficient magnitudes over all bands.
    pub energy: f64,
}

impl TransformSet {
    /// Equal-weight union of `transforms`.
    pub fn new(transforms: Vec<Transform>, segments: usize, threshold_scale: f64) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::InvalidConfig("transform set is empty".into()));
        }
        if segments == 0 {
            return Err(Error::InvalidConfig("transform set needs at least one segment".into()));
        }
        if !(threshold_scale >= 0.0 && threshold_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "threshold scale must be finite and >= 0, got {threshold_scale}"
            )));
        }
        let root_weight = (1.0 / transforms.len() as f64).sqrt();
        let members = transforms
            .into_iter()
            .map(|transform| Member {
                thresholds: vec![f64::INFINITY; segments * transform.nbands()],
                transform,
                root_weight,
            })
            .collect();
        Ok(Self {
            members,
            segments,
            threshold_scale,
        })
    }

    pub fn uwt(levels: usize, threshold_scale: f64) -> Result<Self> {
        Self::new(vec![Transform::Uwt(Uwt3::new(levels)?)], 1, threshold_scale)
    }

    pub fn tags(&self) -> Vec<TransformTag> {
        self.members.iter().map(|m| m.transform.tag()).collect()
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn threshold_scale(&self) -> f64 {
        self.threshold_scale
    }

    /// Current thresholds per member, `(segment, band)` flattened. Bands
    /// without an estimate yet, and low-pass bands, report 0.
    pub fn thresholds(&self) -> Vec<Vec<f64>> {
        self.members
            .iter()
            .map(|m| {
                let nb = m.transform.nbands();
                m.thresholds
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| if m.transform.is_lowpass(i % nb) || !t.is_finite() { 0.0 } else { t })
                    .collect()
            })
            .collect()
    }

    /// Forget threshold estimates.
    pub fn reset(&mut self) {
        for m in &mut self.members {
            m.thresholds.fill(f64::INFINITY);
        }
    }

    pub fn check(&self, dim: (usize, usize, usize)) -> Result<()> {
        let (t, y, x) = dim;
        if t % self.segments != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{t} frames do not split into {} segments",
                self.segments
            )));
        }
        let seg = (t / self.segments, y, x);
        for m in &self.members {
            match &m.transform {
                Transform::Uwt(w) => w.check(seg)?,
                Transform::Pca(b) => {
                    if b.frames() != seg.0 {
                        return Err(Error::DimensionMismatch(format!(
                            "temporal basis has {} frames, segment has {}",
                            b.frames(),
                            seg.0
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Analysis: coefficients per member, segment and band.
    pub fn forward(&self, x: &Array3<C64>) -> Result<Vec<Vec<Vec<Array3<C64>>>>> {
        self.check(x.dim())?;
        let seg_len = x.dim().0 / self.segments;
        let mut out = Vec::new();
        for m in &self.members {
            let mut per_seg = Vec::new();
            for sgi in 0..self.segments {
                let v = x.slice(s![sgi * seg_len..(sgi + 1) * seg_len, .., ..]).to_owned();
                let mut bands = vec![Array3::zeros((0, 0, 0)); m.transform.nbands()];
                apply_member(&m.transform, &v, |b, c| {
                    c.mapv_inplace(|z| z * m.root_weight);
                    bands[b] = c.clone();
                    c.fill(C64::new(0.0, 0.0));
                });
                per_seg.push(bands);
            }
            out.push(per_seg);
        }
        Ok(out)
    }

    /// Synthesis, the adjoint of [`TransformSet::forward`].
    pub fn adjoint(&self, coeffs: &[Vec<Vec<Array3<C64>>>], dim: (usize, usize, usize)) -> Result<Array3<C64>> {
        self.check(dim)?;
        if coeffs.len() != self.members.len() {
            return Err(Error::DimensionMismatch("coefficient sets do not match members".into()));
        }
        let seg_len = dim.0 / self.segments;
        let mut out = Array3::zeros(dim);
        for (m, per_seg) in self.members.iter().zip(coeffs) {
            for (sgi, bands) in per_seg.iter().enumerate() {
                let zero = Array3::zeros((seg_len, dim.1, dim.2));
                // analysis of zero yields zero bands, replaced by the inputs
                let r = apply_member(&m.transform, &zero, |b, c| {
                    c.assign(&bands[b]);
                    c.mapv_inplace(|z| z * m.root_weight);
                });
                let mut dst = out.slice_mut(s![sgi * seg_len..(sgi + 1) * seg_len, .., ..]);
                dst += &r;
            }
        }
        Ok(out)
    }

    /// `W^H soft(W v)` with per-band thresholds. When `update` is set the
    /// thresholds are first re-estimated from the current coefficients as
    /// `k * median|c| / 0.6745`, never exceeding the previous value.
    /// Caller must have validated the dimensions with [`TransformSet::check`].
    pub fn shrink(&mut self, v: &Array3<C64>, update: bool) -> (Array3<C64>, ShrinkStats) {
        let dim = v.dim();
        let seg_len = dim.0 / self.segments;
        let k = self.threshold_scale;
        let mut out = Array3::<C64>::zeros(dim);
        let mut stats = ShrinkStats::default();
        let mut mags: Vec<f64> = Vec::new();
        for m in &mut self.members {
            let nb = m.transform.nbands();
            let mut l1 = vec![0.0; self.segments * nb];
            for sgi in 0..self.segments {
                let seg = v.slice(s![sgi * seg_len..(sgi + 1) * seg_len, .., ..]);
                let owned;
                let seg_ref = if self.segments == 1 {
                    v
                } else {
                    owned = seg.to_owned();
                    &owned
                };
                let (transform, rw, thresholds) = (&m.transform, m.root_weight, &mut m.thresholds);
                let r = apply_member(transform, seg_ref, |b, c| {
                    let idx = sgi * nb + b;
                    if transform.is_lowpass(b) {
                        stats.energy += rw * rw * c.iter().map(|z| z.norm_sqr()).sum::<f64>();
                        if rw != 1.0 {
                            c.mapv_inplace(|z| z * (rw * rw));
                        }
                        return;
                    }
                    if update {
                        mags.clear();
                        let stride = c.len().div_ceil(MEDIAN_SAMPLES).max(1);
                        mags.extend(c.iter().step_by(stride).map(|z| z.norm()));
                        let est = k * rw * median(&mut mags) / MAD_NORMAL;
                        thresholds[idx] = thresholds[idx].min(est);
                    }
                    let tau = thresholds[idx];
                    let tau = if tau.is_finite() { tau } else { 0.0 };
                    let (mut band_l1, mut band_energy) = (0.0, 0.0);
                    c.iter_mut().for_each(|z| {
                        let n = rw * z.norm();
                        if n <= tau {
                            *z = C64::new(0.0, 0.0);
                        } else {
                            // coefficient rw z shrunk to (n - tau), then synthesized with rw
                            let m = n - tau;
                            band_l1 += m;
                            band_energy += m * m;
                            *z *= rw * rw * m / n;
                        }
                    });
                    l1[idx] = band_l1;
                    stats.energy += band_energy;
                });
                let mut dst = out.slice_mut(s![sgi * seg_len..(sgi + 1) * seg_len, .., ..]);
                dst += &r;
            }
            stats.l1.push(l1);
        }
        (out, stats)
    }

    /// `sum_b tau_b * l1_b` with the current thresholds.
    pub fn penalty(&self, stats: &ShrinkStats) -> f64 {
        self.members
            .iter()
            .zip(&stats.l1)
            .map(|(m, l1)| {
                m.thresholds
                    .iter()
                    .zip(l1)
                    .map(|(&t, &l)| if t.is_finite() { t * l } else { 0.0 })
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Streaming `W^H f(W v)` for one member on one segment.
fn apply_member<F>(transform: &Transform, v: &Array3<C64>, mut f: F) -> Array3<C64>
where
    F: FnMut(usize, &mut Array3<C64>),
{
    match transform {
        Transform::Uwt(w) => w.apply(v, f),
        Transform::Pca(tb) => {
            let (t, ny, nx) = v.dim();
            let p = ny * nx;
            let flat = v.view().into_shape_with_order((t, p)).expect("contiguous series");
            let re = flat.mapv(|z| z.re);
            let im = flat.mapv(|z| z.im);
            let cre = tb.basis.t().dot(&re);
            let cim = tb.basis.t().dot(&im);
            let mut coef = Array2::from_shape_fn((t, p), |(i, j)| C64::new(cre[[i, j]], cim[[i, j]]));
            for (b, mut row) in coef.axis_iter_mut(Axis(0)).enumerate() {
                let mut band = row.to_owned().into_shape_with_order((1, ny, nx)).expect("band shape");
                f(b, &mut band);
                row.assign(&band.into_shape_with_order(p).expect("band shape"));
            }
            let rre = tb.basis.dot(&coef.mapv(|z| z.re));
            let rim = tb.basis.dot(&coef.mapv(|z| z.im));
            Array3::from_shape_fn((t, ny, nx), |(i, y, x)| C64::new(rre[[i, y * nx + x]], rim[[i, y * nx + x]]))
        }
    }
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mid = xs.len() / 2;
    let (_, &mut hi, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    if xs.len() % 2 == 1 {
        hi
    } else {
        let lo = xs[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}
