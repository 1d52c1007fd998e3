use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::OracleError;
use crate::problems::{assemble_truss_matrices, TrussModel};
use crate::symmat::{LinalgError, SymMat};

const MAX_STEPS: usize = 400;

/// `λ_min(K(x), M(x))` for a truss design.
pub fn truss_direct(t: &TrussModel, x: &[f64]) -> Result<f64, OracleError> {
    let mats = assemble_truss_matrices(t)?;
    if x.len() != mats.lengths.len() {
        return Err(OracleError::InvalidInput(format!("{} areas for {} bars", x.len(), mats.lengths.len())));
    }
    if let Some((j, v)) = x.iter().enumerate().find(|(_, v)| !(**v >= t.x_min)) {
        return Err(OracleError::InvalidInput(format!("x[{j}] = {v} is below x_min = {}", t.x_min)));
    }
    Ok(mats.fundamental_eigenvalue(x)?)
}

/// `sup { λ : K − λM ⪰ 0 }` by bisection on the smallest eigenvalue, for
/// `M ≻ 0`. The bracket is grown geometrically from `[−1, 1]`.
pub fn sup_bisection(k: &SymMat, m: &SymMat, tol: f64) -> Result<f64, OracleError> {
    if k.dim() != m.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: k.dim(),
            found: m.dim(),
        }
        .into());
    }
    m.chol()?;
    let ok = |l: f64| -> Result<bool, LinalgError> { Ok(k.axpy(-l, m)?.min_eigenvalue()? >= 0.0) };
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut steps = 0;
    while !ok(lo)? {
        lo *= 2.0;
        steps += 1;
        if steps > MAX_STEPS {
            return Err(OracleError::InvalidInput("no lower bracket".into()));
        }
    }
    while ok(hi)? {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_STEPS {
            return Err(OracleError::InvalidInput("no upper bracket".into()));
        }
    }
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) && steps < MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    Ok(lo)
}

/// `vᵀKv / vᵀMv` for `count` Gaussian-ish random directions.
pub fn rayleigh_quotients(k: &SymMat, m: &SymMat, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..k.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            k.quad_form(&v) / m.quad_form(&v)
        })
        .collect()
}
