//! Centered, unitary 1D/2D DFTs. The DC sample sits at index `n / 2`
//! (`fftshift` convention) and every transform is scaled by `1/sqrt(n)`.

use std::sync::Arc;

use ndarray::{Array2, ArrayViewMut2};
use rustfft::{Fft, FftPlanner};

use crate::types::C64;

#[derive(Clone)]
struct Plan1 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Plan1 {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    fn scratch_len(&self) -> usize {
        self.fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len())
    }

    /// In-place centered transform of one lane.
    fn run(&self, buf: &mut [C64], scratch: &mut [C64], inverse: bool) {
        let h = self.n / 2;
        // ifftshift
        buf.rotate_left(h);
        if inverse {
            self.inv.process_with_scratch(buf, scratch);
        } else {
            self.fwd.process_with_scratch(buf, scratch);
        }
        // fftshift
        buf.rotate_right(h);
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
    }

    fn run_lanes(&self, buf: &mut [C64], scratch: &mut Vec<C64>, inverse: bool) {
        let h = self.n / 2;
        let need = self.scratch_len();
        if scratch.len() < need {
            scratch.resize(need, C64::new(0.0, 0.0));
        }
        for lane in buf.chunks_exact_mut(self.n) {
            lane.rotate_left(h);
        }
        if inverse {
            self.inv.process_with_scratch(buf, &mut scratch[..need]);
        } else {
            self.fwd.process_with_scratch(buf, &mut scratch[..need]);
        }
        for lane in buf.chunks_exact_mut(self.n) {
            lane.rotate_right(h);
            for v in lane.iter_mut() {
                *v *= self.scale;
            }
        }
    }
}

/// Planned centered 2D transform for a fixed `(ny, nx)` grid.
#[derive(Clone)]
pub struct Fft2 {
    y: Plan1,
    x: Plan1,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.y.n, self.x.n)
    }
}

impl Fft2 {
    pub fn new(ny: usize, nx: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            y: Plan1::new(&mut planner, ny),
            x: Plan1::new(&mut planner, nx),
        }
    }

    pub fn ny(&self) -> usize {
        self.y.n
    }

    pub fn nx(&self) -> usize {
        self.x.n
    }

    fn scratch(&self) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.y.scratch_len().max(self.x.scratch_len())]
    }

    /// Transform along x for the listed rows only (all rows when `None`).
    pub fn rows(&self, mut a: ArrayViewMut2<'_, C64>, rows: Option<&[usize]>, inverse: bool) {
        let mut scratch = self.scratch();
        let mut buf = vec![C64::new(0.0, 0.0); self.x.n];
        let mut apply = |r: usize, a: &mut ArrayViewMut2<'_, C64>| {
            let mut row = a.row_mut(r);
            match row.as_slice_mut() {
                Some(s) => self.x.run(s, &mut scratch, inverse),
                None => {
                    for (b, v) in buf.iter_mut().zip(row.iter()) {
                        *b = *v;
                    }
                    self.x.run(&mut buf, &mut scratch, inverse);
                    for (v, b) in row.iter_mut().zip(buf.iter()) {
                        *v = *b;
                    }
                }
            }
        };
        match rows {
            Some(list) => list.iter().for_each(|&r| apply(r, &mut a)),
            None => (0..self.y.n).for_each(|r| apply(r, &mut a)),
        }
    }

    /// Transform along y for every column.
    pub fn cols(&self, mut a: ArrayViewMut2<'_, C64>, inverse: bool) {
        let mut scratch = self.scratch();
        let mut buf = vec![C64::new(0.0, 0.0); self.y.n];
        for c in 0..self.x.n {
            let mut col = a.column_mut(c);
            for (b, v) in buf.iter_mut().zip(col.iter()) {
                *b = *v;
            }
            self.y.run(&mut buf, &mut scratch, inverse);
            for (v, b) in col.iter_mut().zip(buf.iter()) {
                *v = *b;
            }
        }
    }

    /// Transform contiguous lanes of length `ny` packed back to back.
    pub fn y_lanes(&self, buf: &mut [C64], scratch: &mut Vec<C64>, inverse: bool) {
        self.y.run_lanes(buf, scratch, inverse);
    }

    /// Transform contiguous lanes of length `nx` packed back to back.
    pub fn x_lanes(&self, buf: &mut [C64], scratch: &mut Vec<C64>, inverse: bool) {
        self.x.run_lanes(buf, scratch, inverse);
    }

    pub fn forward(&self, a: &mut Array2<C64>) {
        self.rows(a.view_mut(), None, false);
        self.cols(a.view_mut(), false);
    }

    pub fn inverse(&self, a: &mut Array2<C64>) {
        self.cols(a.view_mut(), true);
        self.rows(a.view_mut(), None, true);
    }
}

pub fn fft2c(a: &Array2<C64>) -> Array2<C64> {
    let (ny, nx) = a.dim();
    let mut out = a.clone();
    Fft2::new(ny, nx).forward(&mut out);
    out
}

pub fn ifft2c(a: &Array2<C64>) -> Array2<C64> {
    let (ny, nx) = a.dim();
    let mut out = a.clone();
    Fft2::new(ny, nx).inverse(&mut out);
    out
}

/// Centered unitary 1D DFT of a real or complex sequence.
pub fn fft1c(data: &[C64]) -> Vec<C64> {
    let mut planner = FftPlanner::new();
    let plan = Plan1::new(&mut planner, data.len());
    let mut buf = data.to_vec();
    let mut scratch = vec![C64::new(0.0, 0.0); plan.scratch_len()];
    plan.run(&mut buf, &mut scratch, false);
    buf
}

/// Inverse of [`fft1c`].
pub fn ifft1c(data: &[C64]) -> Vec<C64> {
    let mut planner = FftPlanner::new();
    let plan = Plan1::new(&mut planner, data.len());
    let mut buf = data.to_vec();
    let mut scratch = vec![C64::new(0.0, 0.0); plan.scratch_len()];
    plan.run(&mut buf, &mut scratch, true);
    buf
}
