//! Small row-major rectangular helpers for least squares and null spaces.
//!
//! Kept crate-private: the public surface only ever exposes [`SymMat`].

use crate::symmat::{LinalgError, SymMat};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// `Aᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.get(i, j) * v[i];
            }
        }
        out
    }

    /// `Aᵀ A`.
    pub fn gram(&self) -> SymMat {
        SymMat::from_fn(self.cols, |a, b| {
            (0..self.rows).map(|i| self.get(i, a) * self.get(i, b)).sum()
        })
    }
}

/// Minimum-norm least-squares solution of `A x ≈ b` through the spectral
/// pseudo-inverse of `AᵀA`, followed by one refinement step.
pub(crate) fn min_norm_lstsq(a: &Mat, b: &[f64], rel_cutoff: f64) -> Result<Vec<f64>, LinalgError> {
    let spec = a.gram().eigh()?;
    let top = spec.max_eigenvalue().max(0.0);
    let cutoff = rel_cutoff * top.max(f64::MIN_POSITIVE);
    let apply_pinv = |rhs: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; a.cols];
        for (k, &lam) in spec.eigenvalues().iter().enumerate() {
            if lam <= cutoff {
                continue;
            }
            let v = spec.eigenvector(k);
            let coef: f64 = v.iter().zip(rhs).map(|(p, q)| p * q).sum::<f64>() / lam;
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += coef * vi;
            }
        }
        x
    };
    let mut x = apply_pinv(&a.tr_mul_vec(b));
    let ax = a.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let dx = apply_pinv(&a.tr_mul_vec(&r));
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    Ok(x)
}

/// Orthonormal basis (column-major, `cols × k`) of the null space of `A`, and
/// the numerical rank.
pub(crate) fn null_space(a: &Mat, rel_tol: f64) -> Result<(Vec<f64>, usize, usize), LinalgError> {
    let spec = a.gram().eigh()?;
    let top = spec.max_eigenvalue().max(0.0);
    let (basis, k) = spec.lower_eigenspace(rel_tol * top.max(f64::MIN_POSITIVE));
    Ok((basis, k, a.cols - k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_min_norm_on_underdetermined_system() {
        // x0 + x1 = 2 → min-norm solution (1, 1)
        let a = Mat {
            rows: 1,
            cols: 2,
            data: vec![1.0, 1.0],
        };
        let x = min_norm_lstsq(&a, &[2.0], 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn null_space_of_rank_one_row() {
        let a = Mat {
            rows: 1,
            cols: 3,
            data: vec![1.0, 0.0, 0.0],
        };
        let (basis, k, rank) = null_space(&a, 1e-12).unwrap();
        assert_eq!((k, rank), (2, 1));
        for c in 0..k {
            assert!(basis[c * 3].abs() < 1e-14);
        }
    }
}
