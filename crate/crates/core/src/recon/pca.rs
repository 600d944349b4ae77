use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::types::C64;

/// Orthonormal real temporal basis, `(frames, frames)` with one basis vector
/// per column. Column 0 is the constant (temporal mean) direction; the
/// remaining columns are principal components of the mean-removed data in
/// order of decreasing variance.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalBasis {
    pub basis: Array2<f64>,
    /// Variance captured by columns `1..`, same order.
    pub variance: Vec<f64>,
}

impl TemporalBasis {
    pub fn frames(&self) -> usize {
        self.basis.nrows()
    }

    /// Fraction of the mean-removed variance captured by the leading `n`
    /// principal components.
    pub fn explained(&self, n: usize) -> f64 {
        let total: f64 = self.variance.iter().sum();
        if total <= 0.0 {
            return 1.0;
        }
        self.variance.iter().take(n).sum::<f64>() / total
    }
}

/// PCA over the frame-by-pixel matrix formed by stacking the pixels of all
/// `series` (e.g. flow-compensated and flow-encoded images) side by side.
pub fn temporal_pca_basis(series: &[&Array3<C64>]) -> Result<TemporalBasis> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidConfig("temporal PCA needs at least one series".into()))?;
    let t = first.dim().0;
    if t < 8 {
        return Err(Error::SeriesTooShort(format!("temporal PCA needs >= 8 frames, got {t}")));
    }
    if series.iter().any(|s| s.dim().0 != t) {
        return Err(Error::DimensionMismatch("stacked series differ in frame count".into()));
    }

    // Re(M M^H) of the mean-removed matrix
    let mut gram = Array2::<f64>::zeros((t, t));
    for s in series {
        let p = s.len() / t;
        let flat = s.view().into_shape_with_order((t, p)).expect("contiguous series");
        let mean = flat.mean_axis(Axis(0)).expect("frames > 0");
        let re = Array2::from_shape_fn((t, p), |(i, j)| flat[[i, j]].re - mean[j].re);
        let im = Array2::from_shape_fn((t, p), |(i, j)| flat[[i, j]].im - mean[j].im);
        gram += &re.dot(&re.t());
        gram += &im.dot(&im.t());
    }
    let g = DMatrix::from_fn(t, t, |i, j| 0.5 * (gram[[i, j]] + gram[[j, i]]));
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut cols: Vec<Vec<f64>> = vec![vec![1.0 / (t as f64).sqrt(); t]];
    let mut variance = Vec::with_capacity(t - 1);
    let candidates = order
        .iter()
        .map(|&k| (eig.eigenvectors.column(k).iter().copied().collect::<Vec<f64>>(), eig.eigenvalues[k].max(0.0)))
        .chain((0..t).map(|i| {
            let mut e = vec![0.0; t];
            e[i] = 1.0;
            (e, 0.0)
        }));
    for (v, lambda) in candidates {
        if cols.len() == t {
            break;
        }
        if let Some(u) = orthonormalize(&v, &cols) {
            cols.push(u);
            variance.push(lambda);
        }
    }
    let basis = Array2::from_shape_fn((t, t), |(i, k)| cols[k][i]);
    Ok(TemporalBasis { basis, variance })
}

/// Two passes of Gram-Schmidt against `cols`; `None` if `v` is (nearly) in
/// their span.
fn orthonormalize(v: &[f64], cols: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut u = v.to_vec();
    for _ in 0..2 {
        for c in cols {
            let d: f64 = u.iter().zip(c).map(|(a, b)| a * b).sum();
            u.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
        }
    }
    let n = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n < 1e-6 {
        return None;
    }
    u.iter_mut().for_each(|a| *a /= n);
    Some(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_error(b: &Array2<f64>) -> f64 {
        let g = b.t().dot(b);
        let n = g.nrows();
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                e = e.max((g[[i, j]] - want).abs());
            }
        }
        e
    }

    #[test]
    fn rank_one_dynamic_is_captured_by_first_component() {
        let (t, ny, nx) = (20, 6, 5);
        let x = Array3::from_shape_fn((t, ny, nx), |(f, y, x)| {
            let a = (f as f64 * 0.7).sin();
            C64::new(2.0 + (y + x) as f64 + a * (y as f64 - 2.0), 0.5 * a * x as f64)
        });
        let b = temporal_pca_basis(&[&x]).unwrap();
        assert!(b.explained(1) >= 0.999);
        assert!(identity_error(&b.basis) < 1e-10);
        // first principal component is proportional to the temporal mode
        let mode: Vec<f64> = (0..t).map(|f| (f as f64 * 0.7).sin()).collect();
        let mean = mode.iter().sum::<f64>() / t as f64;
        let centred: Vec<f64> = mode.iter().map(|m| m - mean).collect();
        let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = (0..t).map(|f| centred[f] / norm * b.basis[[f, 1]]).sum();
        assert!(dot.abs() > 0.9999);
    }

    #[test]
    fn basis_is_orthonormal_and_sorted() {
        let x = Array3::from_shape_fn((16, 4, 4), |(f, y, x)| {
            C64::new(((f * 7 + y * 3 + x) % 11) as f64, ((f * f + x) % 5) as f64)
        });
        let b = temporal_pca_basis(&[&x, &x.mapv(|v| v * C64::new(0.0, 1.0))]).unwrap();
        assert_eq!(b.basis.dim(), (16, 16));
        assert_eq!(b.variance.len(), 15);
        assert!(identity_error(&b.basis) < 1e-10);
        assert!(b.variance.windows(2).all(|w| w[0] >= w[1]));
        for f in 0..16 {
            assert!((b.basis[[f, 0]] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn static_series_degenerates_cleanly() {
        let x = Array3::from_elem((8, 3, 3), C64::new(1.0, 1.0));
        let b = temporal_pca_basis(&[&x]).unwrap();
        assert!(identity_error(&b.basis) < 1e-10);
        assert_eq!(b.explained(1), 1.0);
    }

    #[test]
    fn rejects_short_series() {
        let x = Array3::<C64>::zeros((7, 4, 4));
        assert!(temporal_pca_basis(&[&x]).is_err());
    }
}
