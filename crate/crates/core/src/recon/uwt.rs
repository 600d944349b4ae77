//! Undecimated 3D Haar transform over `(t, y, x)` with periodic boundaries.
//!
//! One level filters each axis with `l[n] = (x[n] + x[n + d]) / 2` and
//! `h[n] = (x[n] - x[n + d]) / 2`, `d = 2^(level - 1)`. Since
//! `|l|^2 + |h|^2` sums to the input energy, the filter bank is a Parseval
//! frame and the adjoint is an exact left inverse. Each level yields seven
//! detail bands; the final low-pass band is the approximation.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::types::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Uwt3 {
    levels: usize,
}

/// Identifies a band: `level` starts at 1; `code` packs `(t, y, x)` high-pass
/// flags as bits `4, 2, 1` (0 means approximation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Band {
    pub level: usize,
    pub code: u8,
}

impl Band {
    pub fn is_approximation(&self) -> bool {
        self.code == 0
    }

    /// True when the band is high-pass along time.
    pub fn is_temporal(&self) -> bool {
        self.code & 4 != 0
    }
}

impl Uwt3 {
    pub fn new(levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidConfig("UWT needs at least one level".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn nbands(&self) -> usize {
        7 * self.levels + 1
    }

    /// Band order used by [`Uwt3::forward`] and by the streaming callback
    /// band index: level 1 details (codes 1..=7), level 2 details, ...,
    /// then the approximation.
    pub fn band(&self, index: usize) -> Band {
        if index == 7 * self.levels {
            Band {
                level: self.levels,
                code: 0,
            }
        } else {
            Band {
                level: index / 7 + 1,
                code: (index % 7 + 1) as u8,
            }
        }
    }

    pub fn check(&self, dim: (usize, usize, usize)) -> Result<()> {
        let need = 1usize << self.levels;
        let (t, y, x) = dim;
        if t < need || y < need || x < need {
            return Err(Error::DimensionMismatch(format!(
                "UWT with {} levels needs every dimension >= {need}, got {t}x{y}x{x}",
                self.levels
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array3<C64>) -> Result<Vec<Array3<C64>>> {
        self.check(x.dim())?;
        let mut bands: Vec<Option<Array3<C64>>> = vec![None; self.nbands()];
        self.apply(x, |i, c| {
            bands[i] = Some(c.clone());
        });
        Ok(bands.into_iter().map(|b| b.expect("every band visited")).collect())
    }

    pub fn adjoint(&self, bands: &[Array3<C64>]) -> Result<Array3<C64>> {
        if bands.len() != self.nbands() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} bands, got {}",
                self.nbands(),
                bands.len()
            )));
        }
        let dim = bands[0].dim();
        self.check(dim)?;
        let mut r = bands[self.nbands() - 1].clone();
        for level in (1..=self.levels).rev() {
            let d = 1 << (level - 1);
            let mut next = Array3::zeros(dim);
            for code in 0u8..8 {
                let src = if code == 0 {
                    &r
                } else {
                    &bands[(level - 1) * 7 + code as usize - 1]
                };
                let mut a = Array3::zeros(dim);
                let mut b = Array3::zeros(dim);
                filter(src, &mut a, 2, d, code & 1 != 0, Mode::Adjoint);
                filter(&a, &mut b, 1, d, code & 2 != 0, Mode::Adjoint);
                filter(&b, &mut next, 0, d, code & 4 != 0, Mode::AdjointAdd);
            }
            r = next;
        }
        Ok(r)
    }

    /// `W^H f(W v)`, computing one band at a time. `f` receives the band
    /// index (see [`Uwt3::band`]) and may modify the coefficients in place.
    /// Caller must have validated the dimensions with [`Uwt3::check`].
    pub fn apply<F>(&self, v: &Array3<C64>, mut f: F) -> Array3<C64>
    where
        F: FnMut(usize, &mut Array3<C64>),
    {
        let dim = v.dim();
        // approximations a_1 .. a_J
        let mut approx: Vec<Array3<C64>> = Vec::with_capacity(self.levels);
        for level in 1..=self.levels {
            let d = 1 << (level - 1);
            let src = if level == 1 { v } else { &approx[level - 2] };
            let mut a = Array3::zeros(dim);
            let mut b = Array3::zeros(dim);
            filter(src, &mut a, 0, d, false, Mode::Forward);
            filter(&a, &mut b, 1, d, false, Mode::Forward);
            filter(&b, &mut a, 2, d, false, Mode::Forward);
            approx.push(a);
        }
        let mut r = approx.pop().expect("at least one level");
        f(self.nbands() - 1, &mut r);

        let mut at = Array3::zeros(dim);
        let mut aty = Array3::zeros(dim);
        let mut band = Array3::zeros(dim);
        let mut acc_ty = Array3::zeros(dim);
        let mut acc_t = Array3::zeros(dim);
        for level in (1..=self.levels).rev() {
            let d = 1 << (level - 1);
            let a = if level == 1 { v } else { &approx[level - 2] };
            let mut next = Array3::<C64>::zeros(dim);
            for ht in [false, true] {
                filter(a, &mut at, 0, d, ht, Mode::Forward);
                acc_t.fill(ZERO);
                for hy in [false, true] {
                    filter(&at, &mut aty, 1, d, hy, Mode::Forward);
                    acc_ty.fill(ZERO);
                    for hx in [false, true] {
                        let code = (ht as u8) << 2 | (hy as u8) << 1 | hx as u8;
                        if code == 0 {
                            filter(&r, &mut acc_ty, 2, d, false, Mode::AdjointAdd);
                        } else {
                            filter(&aty, &mut band, 2, d, hx, Mode::Forward);
                            f((level - 1) * 7 + code as usize - 1, &mut band);
                            filter(&band, &mut acc_ty, 2, d, hx, Mode::AdjointAdd);
                        }
                    }
                    filter(&acc_ty, &mut acc_t, 1, d, hy, Mode::AdjointAdd);
                }
                filter(&acc_t, &mut next, 0, d, ht, Mode::AdjointAdd);
            }
            r = next;
        }
        r
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Forward,
    Adjoint,
    /// Adjoint added onto the destination.
    AdjointAdd,
}

/// One periodic Haar filter along `axis` with dilation `d`.
///
/// Forward: `(x[n] +- x[n + d]) / 2`. Adjoint: `(x[n] +- x[n - d]) / 2`.
fn filter(src: &Array3<C64>, dst: &mut Array3<C64>, axis: usize, d: usize, high: bool, mode: Mode) {
    let (t, y, x) = src.dim();
    let dims = [t, y, x];
    let n = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let s = src.as_slice().expect("standard layout");
    let o = dst.as_slice_mut().expect("standard layout");
    let sign = if high { -0.5 } else { 0.5 };
    let shift = d % n;
    let add = mode == Mode::AdjointAdd;
    for b in 0..outer {
        let base = b * n * inner;
        let row_in = &s[base..base + n * inner];
        let row_out = &mut o[base..base + n * inner];
        if inner == 1 {
            for k in 0..n {
                let k2 = if mode == Mode::Forward { (k + shift) % n } else { (k + n - shift) % n };
                let (p, q) = (row_in[k], row_in[k2]);
                // for the high-pass adjoint the delayed sample carries the sign
                let v = if mode != Mode::Forward && high { (p - q) * 0.5 } else { p * 0.5 + q * sign };
                if add {
                    row_out[k] += v;
                } else {
                    row_out[k] = v;
                }
            }
            continue;
        }
        for k in 0..n {
            let k2 = if mode == Mode::Forward { (k + shift) % n } else { (k + n - shift) % n };
            let a = &row_in[k * inner..(k + 1) * inner];
            let c = &row_in[k2 * inner..(k2 + 1) * inner];
            let out = &mut row_out[k * inner..(k + 1) * inner];
            match (add, mode != Mode::Forward && high) {
                (false, false) => out.iter_mut().zip(a).zip(c).for_each(|((w, p), q)| *w = p * 0.5 + q * sign),
                (false, true) => out.iter_mut().zip(a).zip(c).for_each(|((w, p), q)| *w = (p - q) * 0.5),
                (true, false) => out.iter_mut().zip(a).zip(c).for_each(|((w, p), q)| *w += p * 0.5 + q * sign),
                (true, true) => out.iter_mut().zip(a).zip(c).for_each(|((w, p), q)| *w += (p - q) * 0.5),
            }
        }
    }
}
