use std::borrow::Cow;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use rayon::prelude::*;

use crate::fourier::Fft2;
use crate::types::{CoilMaps, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Multi-coil undersampled Cartesian Fourier operator `A = M F S`.
///
/// Images are `(y, x)`; per-frame k-space is `(coil, acquired line, kx)` in
/// the order the lines are listed.
#[derive(Clone, Debug)]
pub struct SenseOperator {
    fft: Fft2,
    maps: CoilMaps,
    /// Static maps stored column-major, `(coil, x * ny + y)`.
    static_t: Option<Vec<Vec<C64>>>,
}

impl SenseOperator {
    pub fn new(maps: CoilMaps) -> Self {
        let fft = Fft2::new(maps.ny(), maps.nx());
        let static_t = maps.is_static().then(|| {
            (0..maps.ncoils())
                .map(|c| transpose(maps.coil_map(0, c).view()))
                .collect()
        });
        Self { fft, maps, static_t }
    }

    pub fn maps(&self) -> &CoilMaps {
        &self.maps
    }

    pub fn ncoils(&self) -> usize {
        self.maps.ncoils()
    }

    pub fn ny(&self) -> usize {
        self.maps.ny()
    }

    pub fn nx(&self) -> usize {
        self.maps.nx()
    }

    fn map_t(&self, frame: usize, coil: usize) -> Cow<'_, [C64]> {
        match &self.static_t {
            Some(t) => Cow::Borrowed(&t[coil]),
            None => Cow::Owned(transpose(self.maps.coil_map(frame, coil).view())),
        }
    }

    /// Upper bound of `||A^H A||`: the largest per-pixel coil energy.
    pub fn lipschitz(&self) -> f64 {
        let frames = self.maps.frames().unwrap_or(1);
        (0..frames)
            .map(|f| self.maps.rss(f).iter().map(|r| r * r).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    pub fn forward_frame(&self, frame: usize, lines: &[usize], img: ArrayView2<'_, C64>) -> Array3<C64> {
        let (ny, nx) = (self.ny(), self.nx());
        let nl = lines.len();
        let img_t = transpose(img);
        let mut out = Array3::<C64>::zeros((self.ncoils(), nl, nx));
        let mut buf = vec![ZERO; ny * nx];
        let mut rows = vec![ZERO; nl * nx];
        let mut scratch = Vec::new();
        for c in 0..self.ncoils() {
            let map = self.map_t(frame, c);
            for ((b, s), x) in buf.iter_mut().zip(map.iter()).zip(&img_t) {
                *b = s * x;
            }
            self.fft.y_lanes(&mut buf, &mut scratch, false);
            for (l, &ky) in lines.iter().enumerate() {
                for ix in 0..nx {
                    rows[l * nx + ix] = buf[ix * ny + ky];
                }
            }
            if nl > 0 {
                self.fft.x_lanes(&mut rows, &mut scratch, false);
            }
            out.index_axis_mut(ndarray::Axis(0), c)
                .as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(&rows);
        }
        out
    }

    pub fn adjoint_frame(&self, frame: usize, lines: &[usize], data: ArrayView3<'_, C64>) -> Array2<C64> {
        let (ny, nx) = (self.ny(), self.nx());
        let nl = lines.len();
        let mut acc = vec![ZERO; ny * nx];
        let mut buf = vec![ZERO; ny * nx];
        let mut rows = vec![ZERO; nl * nx];
        let mut scratch = Vec::new();
        for c in 0..self.ncoils() {
            for (r, v) in rows.iter_mut().zip(data.index_axis(ndarray::Axis(0), c).iter()) {
                *r = *v;
            }
            if nl > 0 {
                self.fft.x_lanes(&mut rows, &mut scratch, true);
            }
            buf.fill(ZERO);
            for (l, &ky) in lines.iter().enumerate() {
                for ix in 0..nx {
                    buf[ix * ny + ky] += rows[l * nx + ix];
                }
            }
            self.fft.y_lanes(&mut buf, &mut scratch, true);
            let map = self.map_t(frame, c);
            for ((a, s), b) in acc.iter_mut().zip(map.iter()).zip(&buf) {
                *a += s.conj() * b;
            }
        }
        untranspose(&acc, ny, nx)
    }

    /// Forward model of every frame; frames run in parallel.
    pub fn forward_series(&self, img: &Array3<C64>, lines: &[Vec<usize>]) -> Vec<Array3<C64>> {
        (0..lines.len())
            .into_par_iter()
            .map(|f| self.forward_frame(f, &lines[f], img.index_axis(ndarray::Axis(0), f)))
            .collect()
    }

    pub fn adjoint_series(&self, data: &[Array3<C64>], lines: &[Vec<usize>]) -> Array3<C64> {
        let frames: Vec<Array2<C64>> = (0..lines.len())
            .into_par_iter()
            .map(|f| self.adjoint_frame(f, &lines[f], data[f].view()))
            .collect();
        stack(&frames, self.ny(), self.nx())
    }
}

pub(crate) fn stack(frames: &[Array2<C64>], ny: usize, nx: usize) -> Array3<C64> {
    let mut out = Array3::zeros((frames.len(), ny, nx));
    for (f, fr) in frames.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), f).assign(fr);
    }
    out
}

/// Column-major copy: element `(y, x)` lands at `x * ny + y`.
fn transpose(a: ArrayView2<'_, C64>) -> Vec<C64> {
    let (ny, nx) = a.dim();
    let mut out = vec![ZERO; ny * nx];
    for ((y, x), v) in a.indexed_iter() {
        out[x * ny + y] = *v;
    }
    out
}

fn untranspose(t: &[C64], ny: usize, nx: usize) -> Array2<C64> {
    Array2::from_shape_fn((ny, nx), |(y, x)| t[x * ny + y])
}
