//! KKT residuals, multiplier recovery and certificates.
//!
//! The system checked at a candidate `(x, y)` with multipliers `(Z, W)`:
//!
//! ```text
//! ⟨∂A/∂xⱼ, Z⟩ + ⟨∂B/∂xⱼ, W⟩ = 0     j = 1..m      (stationarity in x)
//! 1 − ⟨∂A/∂y, Z⟩ = 0                                (stationarity in y)
//! ⟨A, Z⟩ = 0,  ⟨B, W⟩ = 0                           (complementarity)
//! A ⪰ 0,  B ⪰ 0,  Z ⪰ 0,  W ⪰ 0                     (feasibility)
//! ```
//!
//! Multipliers are recovered on the near-null eigenspaces of `A` and `B`:
//! `Z = V_A S V_Aᵀ`, `W = V_B T V_Bᵀ` with small PSD unknowns `S`, `T` fitted by
//! least squares to the two stationarity conditions. When the active
//! eigenspaces are larger than the conditions pin down, the minimum-Frobenius
//! solution is returned; certificates are therefore not unique objects.

use serde::Serialize;
use thiserror::Error;

use crate::dense::{min_norm_lstsq, Mat};
use crate::model::{ModelError, ProblemInstance};
use crate::symmat::{LinalgError, SymMat};

pub const DEFAULT_ACTIVE_TOL: f64 = 1e-6;
pub const DEFAULT_KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KktError {
    #[error("empty active set: A(x, y) is positive definite, so ⟨∂A/∂y, Z⟩ = 1 cannot hold")]
    EmptyActiveSet,
    #[error("no KKT multipliers at this point (stationarity residual {residual:e})")]
    NotStationary { residual: f64 },
    #[error("point is infeasible (margin {margin:e})")]
    Infeasible { margin: f64 },
    #[error("multiplier {which} must be {expected}x{expected}, got {found}x{found}")]
    MultiplierDimension {
        which: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl KktError {
    /// Short machine-friendly reason used in rejected certificates.
    pub fn reason(&self) -> String {
        match self {
            KktError::EmptyActiveSet => "empty active set".into(),
            KktError::NotStationary { residual } => {
                format!("not KKT: no multipliers satisfy stationarity (residual {residual:e})")
            }
            KktError::Infeasible { margin } => format!("infeasible point (margin {margin:e})"),
            other => other.to_string(),
        }
    }
}

/// Residuals of the KKT system, all nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `maxⱼ |⟨∂A/∂xⱼ, Z⟩ + ⟨∂B/∂xⱼ, W⟩|`.
    pub stat_x: f64,
    /// `|1 − ⟨∂A/∂y, Z⟩|`.
    pub stat_y: f64,
    pub comp_a: f64,
    pub comp_b: f64,
    pub feas_a: f64,
    pub feas_b: f64,
    pub psd_z: f64,
    pub psd_w: f64,
}

impl Residuals {
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("stat_x", self.stat_x),
            ("stat_y", self.stat_y),
            ("comp_A", self.comp_a),
            ("comp_B", self.comp_b),
            ("feas_A", self.feas_a),
            ("feas_B", self.feas_b),
            ("psd_Z", self.psd_z),
            ("psd_W", self.psd_w),
        ]
    }

    pub fn max(&self) -> f64 {
        self.entries().iter().fold(0.0, |acc, (_, v)| acc.max(*v))
    }

    /// First residual above `tol`, if any.
    pub fn first_violation(&self, tol: f64) -> Option<(&'static str, f64)> {
        self.entries().into_iter().find(|(_, v)| !(*v <= tol))
    }
}

pub fn kkt_residuals(
    p: &ProblemInstance,
    x: &[f64],
    y: f64,
    z: &SymMat,
    w: &SymMat,
) -> Result<Residuals, KktError> {
    for (which, mat, n) in [("Z", z, p.n_a()), ("W", w, p.n_b())] {
        if mat.dim() != n {
            return Err(KktError::MultiplierDimension {
                which,
                expected: n,
                found: mat.dim(),
            });
        }
    }
    let cons = p.eval_constraints(x, y)?;
    let grads = p.eval_gradients(x, y)?;
    let stat_x = grads
        .grad_a
        .iter()
        .zip(&grads.grad_b)
        .map(|(ga, gb)| (ga.inner_unchecked(z) + gb.inner_unchecked(w)).abs())
        .fold(0.0, f64::max);
    let stat_y = (1.0 - grads.da_dy.inner_unchecked(z)).abs();
    Ok(Residuals {
        stat_x,
        stat_y,
        comp_a: cons.a.inner_unchecked(z).abs(),
        comp_b: cons.b.inner_unchecked(w).abs(),
        feas_a: (-cons.a.min_eigenvalue()?).max(0.0),
        feas_b: (-cons.b.min_eigenvalue()?).max(0.0),
        psd_z: (-z.min_eigenvalue()?).max(0.0),
        psd_w: (-w.min_eigenvalue()?).max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    /// Eigenvalues of `A`, `B` at or below this count as active.
    pub active_tol: f64,
    /// Largest acceptable stationarity residual (∞-norm).
    pub residual_tol: f64,
    /// Projected-gradient iterations when the least-squares fit leaves the PSD cone.
    pub max_iter: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            active_tol: DEFAULT_ACTIVE_TOL,
            residual_tol: DEFAULT_KKT_TOL,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub z: SymMat,
    pub w: SymMat,
    /// Stationarity residual `max(stat_x, stat_y)` of the returned pair.
    pub residual: f64,
    pub active_a: usize,
    pub active_b: usize,
}

/// One active block: `k` basis vectors (column-major) of an `n`-dim space.
struct Support {
    n: usize,
    k: usize,
    basis: Vec<f64>,
}

impl Support {
    fn params(&self) -> usize {
        self.k * (self.k + 1) / 2
    }

    /// Coefficients `c` with `⟨G, V S Vᵀ⟩ = c · s` for the isometric packing of `S`.
    fn functional(&self, g: &SymMat) -> Vec<f64> {
        if self.k == 0 {
            return Vec::new();
        }
        let gt = g.congruence(&self.basis, self.k);
        let mut out = Vec::with_capacity(self.params());
        for a in 0..self.k {
            for b in 0..=a {
                out.push(if a == b {
                    gt.get(a, a)
                } else {
                    std::f64::consts::SQRT_2 * gt.get(a, b)
                });
            }
        }
        out
    }

    fn unpack_small(&self, s: &[f64]) -> Option<SymMat> {
        if self.k == 0 {
            return None;
        }
        let mut idx = 0;
        let mut m = SymMat::zeros(self.k);
        for a in 0..self.k {
            for b in 0..=a {
                let v = if a == b { s[idx] } else { s[idx] / std::f64::consts::SQRT_2 };
                m.set(a, b, v);
                idx += 1;
            }
        }
        Some(m)
    }

    fn pack_small(&self, m: &SymMat, out: &mut Vec<f64>) {
        for a in 0..self.k {
            for b in 0..=a {
                out.push(if a == b { m.get(a, a) } else { std::f64::consts::SQRT_2 * m.get(a, b) });
            }
        }
    }

    /// `V S Vᵀ` (zero matrix when the support is empty).
    fn lift(&self, s: &[f64]) -> SymMat {
        let Some(small) = self.unpack_small(s) else {
            return SymMat::zeros(self.n);
        };
        let n = self.n;
        let col = |c: usize| &self.basis[c * n..(c + 1) * n];
        SymMat::from_fn(n, |i, j| {
            let mut acc = 0.0;
            for a in 0..self.k {
                for b in 0..self.k {
                    acc += col(a)[i] * small.get(a, b) * col(b)[j];
                }
            }
            acc
        })
    }

    /// Projects the packed parameters onto the PSD cone by eigenvalue clipping.
    fn project(&self, s: &[f64], out: &mut Vec<f64>) -> Result<(), LinalgError> {
        if let Some(small) = self.unpack_small(s) {
            let clipped = small.eigh()?.map_eigenvalues(|v| v.max(0.0));
            self.pack_small(&clipped, out);
        }
        Ok(())
    }
}

fn support(mat: &SymMat, active_tol: f64) -> Result<Support, LinalgError> {
    let (basis, k) = mat.eigh()?.lower_eigenspace(active_tol);
    Ok(Support {
        n: mat.dim(),
        k,
        basis,
    })
}

/// Solves for `(Z, W)` at a given primal point.
pub fn recover_multipliers(
    p: &ProblemInstance,
    x: &[f64],
    y: f64,
    opts: &RecoveryOptions,
) -> Result<Multipliers, KktError> {
    let cons = p.eval_constraints_tol(x, y, opts.active_tol)?;
    if !cons.feasible {
        return Err(KktError::Infeasible { margin: cons.margin });
    }
    let grads = p.eval_gradients(x, y)?;
    let sa = support(&cons.a, opts.active_tol)?;
    if sa.k == 0 {
        return Err(KktError::EmptyActiveSet);
    }
    let sb = support(&cons.b, opts.active_tol)?;
    let (pa, pb) = (sa.params(), sb.params());
    let m = p.m();

    let mut l = Mat::zeros(m + 1, pa + pb);
    for j in 0..m {
        let row: Vec<f64> = sa
            .functional(&grads.grad_a[j])
            .into_iter()
            .chain(sb.functional(&grads.grad_b[j]))
            .collect();
        for (c, v) in row.into_iter().enumerate() {
            l.set(j, c, v);
        }
    }
    for (c, v) in sa.functional(&grads.da_dy).into_iter().enumerate() {
        l.set(m, c, v);
    }
    let mut rhs = vec![0.0; m + 1];
    rhs[m] = 1.0;

    let ls = min_norm_lstsq(&l, &rhs, 1e-13)?;
    let project = |v: &[f64]| -> Result<Vec<f64>, LinalgError> {
        let mut out = Vec::with_capacity(pa + pb);
        sa.project(&v[..pa], &mut out)?;
        sb.project(&v[pa..], &mut out)?;
        Ok(out)
    };
    let residual_of = |v: &[f64]| -> f64 {
        let r = l.mul_vec(v);
        r.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };

    let mut best = project(&ls)?;
    let mut best_res = residual_of(&best);
    let ls_res = residual_of(&ls);
    if best_res > ls_res.max(opts.residual_tol * 1e-3) {
        // The unconstrained fit leaves the cone: accelerated projected gradient.
        let lip = l.gram().eigh()?.max_eigenvalue().max(f64::MIN_POSITIVE);
        let step = 1.0 / lip;
        let mut xk = best.clone();
        let mut yk = xk.clone();
        let mut tk = 1.0_f64;
        for _ in 0..opts.max_iter {
            let r: Vec<f64> = l.mul_vec(&yk).iter().zip(&rhs).map(|(a, b)| a - b).collect();
            let g = l.tr_mul_vec(&r);
            let trial: Vec<f64> = yk.iter().zip(&g).map(|(v, gi)| v - step * gi).collect();
            let xn = project(&trial)?;
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
            yk = xn
                .iter()
                .zip(&xk)
                .map(|(a, b)| a + ((tk - 1.0) / tn) * (a - b))
                .collect();
            xk = xn;
            tk = tn;
            let res = residual_of(&xk);
            if res < best_res {
                best_res = res;
                best = xk.clone();
            }
            if best_res <= opts.residual_tol * 1e-3 {
                break;
            }
        }
    }

    if best_res > opts.residual_tol {
        return Err(KktError::NotStationary { residual: best_res });
    }
    Ok(Multipliers {
        z: sa.lift(&best[..pa]),
        w: sb.lift(&best[pa..]),
        residual: best_res,
        active_a: sa.k,
        active_b: sb.k,
    })
}

/// A primal point with multipliers and the verdict of the KKT check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktCertificate {
    pub x: Vec<f64>,
    pub y: f64,
    #[serde(rename = "Z")]
    pub z: Option<SymMat>,
    #[serde(rename = "W")]
    pub w: Option<SymMat>,
    pub residuals: Option<Residuals>,
    pub tol: f64,
    pub accepted: bool,
    pub reason: Option<String>,
}

impl KktCertificate {
    fn rejected(x: &[f64], y: f64, tol: f64, reason: String) -> Self {
        Self {
            x: x.to_vec(),
            y,
            z: None,
            w: None,
            residuals: None,
            tol,
            accepted: false,
            reason: Some(reason),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Recovers multipliers and checks every residual against `tol`.
///
/// Recovery failures produce a rejected certificate; only malformed input
/// (wrong dimensions, non-finite values, `tol <= 0`) is an error.
pub fn verify_kkt(p: &ProblemInstance, x: &[f64], y: f64, tol: f64) -> Result<KktCertificate, KktError> {
    verify_kkt_with(
        p,
        x,
        y,
        &RecoveryOptions {
            residual_tol: tol,
            ..RecoveryOptions::default()
        },
        tol,
    )
}

pub fn verify_kkt_with(
    p: &ProblemInstance,
    x: &[f64],
    y: f64,
    opts: &RecoveryOptions,
    tol: f64,
) -> Result<KktCertificate, KktError> {
    if !(tol > 0.0) {
        return Err(KktError::Model(ModelError::NonFiniteInput { what: "tol (must be > 0)" }));
    }
    p.check_point(x, Some(y))?;
    let mult = match recover_multipliers(p, x, y, opts) {
        Ok(m) => m,
        Err(e @ (KktError::EmptyActiveSet | KktError::NotStationary { .. } | KktError::Infeasible { .. })) => {
            return Ok(KktCertificate::rejected(x, y, tol, e.reason()));
        }
        Err(e) => return Err(e),
    };
    let residuals = kkt_residuals(p, x, y, &mult.z, &mult.w)?;
    let violation = residuals.first_violation(tol);
    Ok(KktCertificate {
        x: x.to_vec(),
        y,
        z: Some(mult.z),
        w: Some(mult.w),
        residuals: Some(residuals),
        tol,
        accepted: violation.is_none(),
        reason: violation.map(|(name, v)| format!("residual {name} = {v:e} exceeds tolerance {tol:e}")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_fractional, make_sqrt_scalar};

    #[test]
    fn analytic_certificate_of_fractional_problem() {
        let p = make_fractional();
        let one = SymMat::identity(1);
        let r = kkt_residuals(&p, &[0.0], 0.0, &one, &one).unwrap();
        assert!(r.max() <= 1e-12, "{r:?}");
    }

    #[test]
    fn zero_multipliers_violate_y_stationarity() {
        let p = make_fractional();
        let zero = SymMat::zeros(1);
        let r = kkt_residuals(&p, &[0.0], 0.0, &zero, &zero).unwrap();
        assert_eq!(r.stat_y, 1.0);
        assert_eq!(r.stat_x, 0.0);
        assert_eq!(r.comp_a + r.comp_b + r.feas_a + r.feas_b + r.psd_z + r.psd_w, 0.0);
    }

    #[test]
    fn scaling_multipliers_breaks_y_stationarity() {
        let p = make_fractional();
        let two = SymMat::scaled_identity(1, 2.0);
        let r = kkt_residuals(&p, &[0.0], 0.0, &two, &two).unwrap();
        assert_eq!(r.stat_y, 1.0);
        assert_eq!(r.stat_x, 0.0);
    }

    #[test]
    fn sqrt_problem_analytic_multipliers() {
        // A = diag(y² − x, y), B = [x − 1]; at (1, 1): Z = diag(1/2, 0), W = [1/2]
        let p = make_sqrt_scalar();
        let z = SymMat::from_diag(&[0.5, 0.0]);
        let w = SymMat::from_diag(&[0.5]);
        let r = kkt_residuals(&p, &[1.0], 1.0, &z, &w).unwrap();
        assert!(r.stat_y.abs() < 1e-15);
        assert!(r.max() < 1e-15, "{r:?}");
    }

    #[test]
    fn recover_fractional_multipliers() {
        let p = make_fractional();
        let m = recover_multipliers(&p, &[0.0], 0.0, &RecoveryOptions::default()).unwrap();
        assert!((m.z.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((m.w.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_point_that_is_not_optimal_is_rejected() {
        let p = make_fractional();
        let err = recover_multipliers(&p, &[1.0], 0.5, &RecoveryOptions::default()).unwrap_err();
        // brute-force least squares over Z ≥ 0 (B inactive):
        // min (1 − 2Z)² + (Z/2)² → Z = 8/17, residual ∞-norm = max(1/17, 4/17)
        let brute = (0..=100_000)
            .map(|i| {
                let z = i as f64 * 1e-5;
                (1.0 - 2.0 * z).abs().max((0.5 * z).abs())
            })
            .fold(f64::INFINITY, f64::min);
        assert!(brute > 0.1);
        assert!(matches!(err, KktError::NotStationary { residual } if residual > 0.1));
    }

    #[test]
    fn interior_point_has_empty_active_set() {
        let p = make_fractional();
        let err = recover_multipliers(&p, &[1.0], 0.9, &RecoveryOptions::default()).unwrap_err();
        assert_eq!(err, KktError::EmptyActiveSet);
        let cert = verify_kkt(&p, &[1.0], 0.9, 1e-8).unwrap();
        assert!(!cert.accepted);
        assert_eq!(cert.reason.as_deref(), Some("empty active set"));
    }

    #[test]
    fn verify_accepts_analytic_points() {
        let cert = verify_kkt(&make_fractional(), &[0.0], 0.0, 1e-8).unwrap();
        assert!(cert.accepted, "{cert:?}");
        let cert = verify_kkt(&make_sqrt_scalar(), &[1.0], 1.0, 1e-8).unwrap();
        assert!(cert.accepted, "{cert:?}");
        let z = cert.z.unwrap();
        assert!((z.get(0, 0) - 0.5).abs() < 1e-10);
        assert!((cert.w.unwrap().get(0, 0) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn verify_rejects_degenerate_input() {
        let p = make_fractional();
        assert!(verify_kkt(&p, &[f64::NAN], 0.0, 1e-6).is_err());
        assert!(verify_kkt(&p, &[0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn accepted_certificates_satisfy_every_condition() {
        let tol = 1e-6;
        for (p, x, y) in [(make_fractional(), vec![0.0], 0.0), (make_sqrt_scalar(), vec![1.0], 1.0)] {
            let c = verify_kkt(&p, &x, y, tol).unwrap();
            assert!(c.accepted);
            let (z, w) = (c.z.unwrap(), c.w.unwrap());
            assert!(z.min_eigenvalue().unwrap() >= -tol);
            assert!(w.min_eigenvalue().unwrap() >= -tol);
            let e = p.eval_constraints(&x, y).unwrap();
            assert!(e.a.inner(&z).unwrap().abs() <= tol);
            assert!(e.b.inner(&w).unwrap().abs() <= tol);
            assert!(e.margin >= -tol);
        }
    }

    #[test]
    fn certificate_json_fields() {
        let c = verify_kkt(&make_fractional(), &[0.0], 0.0, 1e-8).unwrap();
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        for key in ["x", "y", "Z", "W", "residuals", "accepted", "reason"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["Z"], serde_json::json!([[1.0]]));
    }
}
