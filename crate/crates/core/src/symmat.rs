//! Dense real symmetric matrices in packed lower-triangular storage.
//!
//! Everything the constraint machinery touches is a [`SymMat`]: the values of
//! `A(x, y)` and `B(x)`, their derivatives, the multipliers `Z` and `W`, and the
//! stiffness/mass pair of the truss model. The module provides the handful of
//! factorizations the rest of the crate needs:
//!
//! * [`SymMat::eigh`]: cyclic Jacobi eigendecomposition, eigenvalues ascending.
//! * [`SymMat::chol`]: Cholesky factor `L` with `L Lᵀ = A`.
//! * [`gen_eig_min`]: smallest generalized eigenvalue of a pencil `(K, M)`.
//!
//! All values are immutable once built, so every routine here is a pure
//! function and can be called from any number of threads.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default absolute tolerance on the minimum eigenvalue for PSD tests.
pub const PSD_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix dimension must be at least 1")]
    Empty,
    #[error("packed storage of length {len} does not describe a square matrix")]
    BadPackedLength { len: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error(
        "Jacobi eigensolver did not converge after {sweeps} sweeps \
         (off-diagonal norm {off_norm:e}, Frobenius norm {frob_norm:e})"
    )]
    NoConvergence {
        sweeps: usize,
        off_norm: f64,
        frob_norm: f64,
    },
    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
}

/// A real symmetric `n × n` matrix stored as its lower triangle, row by row.
#[derive(Clone, PartialEq)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "SymMat dimension must be at least 1");
        Self {
            n,
            data: vec![0.0; packed_len(n)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, value: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, value);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds the matrix from a function of `(i, j)`; only `j <= i` is queried.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.data[packed_index(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Packed lower-triangular entries `a00, a10, a11, a20, ...`.
    pub fn from_packed(data: Vec<f64>) -> Result<Self, LinalgError> {
        let len = data.len();
        let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        if packed_len(n) != len {
            return Err(LinalgError::BadPackedLength { len });
        }
        let m = Self { n, data };
        m.check_finite()?;
        Ok(m)
    }

    /// Ragged lower-triangular rows: row `i` has `i + 1` entries.
    pub fn from_lower_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        if rows.is_empty() {
            return Err(LinalgError::Empty);
        }
        let mut data = Vec::with_capacity(packed_len(rows.len()));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(LinalgError::DimensionMismatch {
                    expected: i + 1,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        let m = Self {
            n: rows.len(),
            data,
        };
        m.check_finite()?;
        Ok(m)
    }

    /// Row-major dense input; rejects asymmetry beyond `1e-12` relative.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self, LinalgError> {
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        if dense.len() != n * n {
            return Err(LinalgError::DimensionMismatch {
                expected: n * n,
                found: dense.len(),
            });
        }
        let scale = dense.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                let gap = (dense[i * n + j] - dense[j * n + i]).abs();
                if gap > 1e-12 * scale {
                    return Err(LinalgError::NotSymmetric { i, j, gap });
                }
            }
        }
        let m = Self::from_fn(n, |i, j| 0.5 * (dense[i * n + j] + dense[j * n + i]));
        m.check_finite()?;
        Ok(m)
    }

    /// Rank-one matrix `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    /// Block-diagonal stack of the given matrices.
    pub fn block_diag(blocks: &[SymMat]) -> Self {
        let n: usize = blocks.iter().map(SymMat::dim).sum();
        let mut out = Self::zeros(n);
        let mut offset = 0;
        for b in blocks {
            for i in 0..b.n {
                for j in 0..=i {
                    out.set(offset + i, offset + j, b.get(i, j));
                }
            }
            offset += b.n;
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed_index(i, j)]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[packed_index(i, j)] = value;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, value: f64) {
        self.data[packed_index(i, j)] += value;
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn lower_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..=i).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.get(i, j);
            }
        }
        out
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_finite(&self) -> Result<(), LinalgError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(LinalgError::NonFinite)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner_unchecked(self).sqrt()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == 0.0))
    }

    fn same_dim(&self, other: &SymMat) -> Result<(), LinalgError> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch {
                expected: self.n,
                found: other.n,
            })
        }
    }

    /// `⟨A, B⟩ = tr(AB) = Σᵢⱼ AᵢⱼBᵢⱼ`.
    pub fn inner(&self, other: &SymMat) -> Result<f64, LinalgError> {
        self.same_dim(other)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &SymMat) -> f64 {
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..self.n {
            let row = i * (i + 1) / 2;
            for j in 0..i {
                off += self.data[row + j] * other.data[row + j];
            }
            diag += self.data[row + i] * other.data[row + i];
        }
        diag + 2.0 * off
    }

    pub fn scale(&self, c: f64) -> SymMat {
        SymMat {
            n: self.n,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: f64, other: &SymMat) -> Result<SymMat, LinalgError> {
        self.same_dim(other)?;
        let mut out = self.clone();
        out.axpy_in_place(c, other);
        Ok(out)
    }

    pub(crate) fn axpy_in_place(&mut self, c: f64, other: &SymMat) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn add(&self, other: &SymMat) -> Result<SymMat, LinalgError> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SymMat) -> Result<SymMat, LinalgError> {
        self.axpy(-1.0, other)
    }

    /// `A v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// `vᵀ A v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let av = self.mul_vec(v);
        av.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `Vᵀ A V` for a column-major `n × k` matrix `V`, `k >= 1`.
    pub fn congruence(&self, cols: &[f64], k: usize) -> SymMat {
        let n = self.n;
        assert_eq!(cols.len(), n * k);
        let dense = self.to_dense();
        // AV, column-major
        let mut av = vec![0.0; n * k];
        for c in 0..k {
            let col = &cols[c * n..(c + 1) * n];
            for i in 0..n {
                av[c * n + i] = (0..n).map(|j| dense[i * n + j] * col[j]).sum();
            }
        }
        SymMat::from_fn(k, |a, b| {
            let va = &cols[a * n..(a + 1) * n];
            let avb = &av[b * n..(b + 1) * n];
            va.iter().zip(avb).map(|(x, y)| x * y).sum()
        })
    }

    /// Eigendecomposition by cyclic Jacobi rotations.
    pub fn eigh(&self) -> Result<SpectralDecomp, LinalgError> {
        self.check_finite()?;
        jacobi_eigh(self)
    }

    /// `(λ_min, λ_min ≥ −tol)`.
    pub fn min_eig_psd(&self, tol: f64) -> Result<(f64, bool), LinalgError> {
        let lmin = self.eigh()?.min_eigenvalue();
        Ok((lmin, lmin >= -tol))
    }

    pub fn min_eigenvalue(&self) -> Result<f64, LinalgError> {
        Ok(self.eigh()?.min_eigenvalue())
    }

    /// Cholesky factor; fails at the first non-positive pivot.
    pub fn chol(&self) -> Result<LowerTri, LinalgError> {
        self.check_finite()?;
        let n = self.n;
        let mut l = vec![0.0; packed_len(n)];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                let ljk = l[packed_index(j, k)];
                d -= ljk * ljk;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot: j,
                    value: d,
                });
            }
            let djj = d.sqrt();
            l[packed_index(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[packed_index(i, k)] * l[packed_index(j, k)];
                }
                l[packed_index(i, j)] = s / djj;
            }
        }
        Ok(LowerTri { n, data: l })
    }

    /// Fast PSD test: `λ_min(A) > −tol` decided by a Cholesky attempt on `A + tol·I`.
    pub fn is_psd_shifted(&self, tol: f64) -> bool {
        let mut shifted = self.clone();
        for i in 0..self.n {
            shifted.add_at(i, i, tol);
        }
        shifted.chol().is_ok()
    }
}

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMat({}) ", self.n)?;
        f.debug_list().entries(self.lower_rows()).finish()
    }
}

impl Serialize for SymMat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.lower_rows().serialize(serializer)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SymMatRepr {
    Rows(Vec<Vec<f64>>),
    Packed(Vec<f64>),
}

impl<'de> Deserialize<'de> for SymMat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = SymMatRepr::deserialize(deserializer)?;
        match repr {
            SymMatRepr::Rows(rows) => SymMat::from_lower_rows(&rows),
            SymMatRepr::Packed(data) => SymMat::from_packed(data),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Lower-triangular Cholesky factor in packed storage.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTri {
    n: usize,
    data: Vec<f64>,
}

impl LowerTri {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)`; zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[packed_index(i, j)]
        }
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> SymMat {
        SymMat::from_fn(self.n, |i, j| {
            (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum()
        })
    }

    /// Solves `L z = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        for i in 0..self.n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.get(i, k) * z[k];
            }
            z[i] = s / self.get(i, i);
        }
        z
    }

    /// Solves `Lᵀ z = b` by back substitution.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        for i in (0..self.n).rev() {
            let mut s = z[i];
            for k in (i + 1)..self.n {
                s -= self.get(k, i) * z[k];
            }
            z[i] = s / self.get(i, i);
        }
        z
    }

    /// Solves `L Lᵀ z = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L⁻¹ K L⁻ᵀ`.
    pub fn whiten(&self, k: &SymMat) -> SymMat {
        let n = self.n;
        let dense = k.to_dense();
        // X = L⁻¹ K, column by column of K (K symmetric, so columns = rows).
        let mut x = vec![0.0; n * n]; // column-major
        for c in 0..n {
            let col: Vec<f64> = (0..n).map(|r| dense[r * n + c]).collect();
            let z = self.solve_lower(&col);
            x[c * n..(c + 1) * n].copy_from_slice(&z);
        }
        // Y = L⁻¹ Xᵀ; rows of X are the columns needed.
        SymMat::from_fn(n, |i, j| {
            let row_j: Vec<f64> = (0..n).map(|c| x[c * n + j]).collect();
            let z = self.solve_lower(&row_j);
            z[i]
        })
    }
}

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomp {
    n: usize,
    values: Vec<f64>,
    /// Column-major: column `k` holds the eigenvector of `values[k]`.
    vectors: Vec<f64>,
}

impl SpectralDecomp {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// Column-major `n × n` eigenvector matrix.
    pub fn eigenvector_matrix(&self) -> &[f64] {
        &self.vectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.values[self.n - 1]
    }

    /// Column-major basis of eigenvectors whose eigenvalue is `<= threshold`.
    pub fn lower_eigenspace(&self, threshold: f64) -> (Vec<f64>, usize) {
        let k = self.values.iter().take_while(|&&v| v <= threshold).count();
        (self.vectors[..k * self.n].to_vec(), k)
    }

    /// `Q diag(f(λ)) Qᵀ`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let mapped: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        SymMat::from_fn(self.n, |i, j| {
            (0..self.n)
                .map(|k| mapped[k] * self.vectors[k * self.n + i] * self.vectors[k * self.n + j])
                .sum()
        })
    }

    pub fn reconstruct(&self) -> SymMat {
        self.map_eigenvalues(|v| v)
    }
}

fn jacobi_eigh(a: &SymMat) -> Result<SpectralDecomp, LinalgError> {
    let n = a.n;
    let mut m = a.to_dense();
    let mut v = vec![0.0; n * n]; // row-major accumulation, columns are eigenvectors
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = a.frobenius_norm();
    let threshold = JACOBI_REL_THRESHOLD * frob;

    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..i {
                s += m[i * n + j] * m[i * n + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = n == 1 || off_norm(&m) <= threshold;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&m) <= threshold;
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            sweeps,
            off_norm: off_norm(&m),
            frob_norm: frob,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[col * n + k] = v[k * n + src];
        }
    }
    Ok(SpectralDecomp { n, values, vectors })
}

/// Smallest `λ` with `det(K − λM) = 0`, for `M ≻ 0`.
///
/// Computed as `λ_min(L⁻¹ K L⁻ᵀ)` where `M = L Lᵀ`.
pub fn gen_eig_min(k: &SymMat, m: &SymMat) -> Result<f64, LinalgError> {
    k.same_dim(m)?;
    let l = m.chol()?;
    l.whiten(k).min_eigenvalue()
}

/// Largest generalized eigenvalue, via `−λ_min(−K, M)`.
pub fn gen_eig_max(k: &SymMat, m: &SymMat) -> Result<f64, LinalgError> {
    Ok(-gen_eig_min(&k.scale(-1.0), m)?)
}

/// Smallest generalized eigenpair `(λ, v)` with `vᵀ M v = 1`.
pub fn gen_eig_min_pair(k: &SymMat, m: &SymMat) -> Result<(f64, Vec<f64>), LinalgError> {
    k.same_dim(m)?;
    let l = m.chol()?;
    let spec = l.whiten(k).eigh()?;
    let v = l.solve_upper(spec.eigenvector(0));
    Ok((spec.min_eigenvalue(), v))
}
