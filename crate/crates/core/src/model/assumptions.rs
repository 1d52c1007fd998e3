//! Sampled checks of the structural hypotheses on `(A, B)`.
//!
//! Nothing here is a proof. Concavity/convexity is tested at midpoints of
//! random pairs in the Loewner order, positive definiteness of `∂A/∂y` at
//! sampled feasible points (including points on the lower `y` boundary of the
//! feasible set), and the constraint qualification by a strict-feasibility
//! probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ModelError, ProblemInstance};
use crate::symmat::PSD_TOL;

const MIDPOINT_TOL: f64 = 1e-8;
const PD_THRESHOLD: f64 = 1e-9;
const BOUNDARY_BISECTION_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotAssessed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub problem: String,
    pub samples: usize,
    pub seed: u64,
    pub feasible_samples: usize,
    /// Midpoint concavity of `A(·, y)` and `B`, convexity of `A(x, ·)`.
    pub concavity: Verdict,
    /// Worst `λ_min(A(x̄, y) − ½A(x, y) − ½A(x′, y))`.
    pub a_concave_in_x_min_gap: f64,
    /// Worst `λ_min(½A(x, y) + ½A(x, y′) − A(x, ȳ))`.
    pub a_convex_in_y_min_gap: f64,
    /// Worst `λ_min(B(x̄) − ½B(x) − ½B(x′))`.
    pub b_concave_min_gap: f64,
    /// `∂A/∂y ≻ 0` at every sampled feasible point.
    pub monotonicity: Verdict,
    pub min_dady_eigenvalue: Option<f64>,
    pub min_dady_point: Option<(Vec<f64>, f64)>,
    /// Strict-feasibility probe standing in for a constraint qualification.
    pub slater_proxy: Verdict,
    pub best_margin: Option<f64>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.concavity == Verdict::Pass
            && self.monotonicity == Verdict::Pass
            && self.slater_proxy == Verdict::Pass
    }

    /// The checks the bisection solver relies on: concavity and monotonicity.
    pub fn solver_ready(&self) -> bool {
        self.concavity != Verdict::Fail && self.monotonicity != Verdict::Fail
    }
}

/// Smallest `y` in `[lo, hi]` with `A(x, y) ⪰ 0`, assuming monotonicity along the
/// bracket. `None` if `hi` itself is infeasible.
pub(crate) fn boundary_y(p: &ProblemInstance, x: &[f64], lo: f64, hi: f64) -> Result<Option<f64>, ModelError> {
    let psd = |y: f64| -> Result<bool, ModelError> { Ok(p.eval_a(x, y)?.min_eigenvalue()? >= -PSD_TOL) };
    if !psd(hi)? {
        return Ok(None);
    }
    if psd(lo)? {
        return Ok(Some(lo));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..BOUNDARY_BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        if psd(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(b))
}

pub fn check_assumptions(
    p: &ProblemInstance,
    sample_count: usize,
    seed: u64,
) -> Result<AssumptionReport, ModelError> {
    let sample_count = sample_count.max(1);
    let xbox = p.require_box()?.clone();
    let (y_lo, y_hi) = p.y_hint().unwrap_or((-1.0, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // feasible points: random interior draws plus lower-boundary points in y
    let mut feasible: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    let mut probes: Vec<Vec<f64>> = xbox.corners();
    for _ in 0..sample_count {
        let x = xbox.sample(&mut rng);
        let y = rng.gen_range(y_lo..=y_hi);
        let e = p.eval_constraints(&x, y)?;
        if e.feasible {
            feasible.push((x.clone(), y, e.margin));
        }
        probes.push(x);
    }
    for x in &probes {
        if p.eval_b(x)?.min_eigenvalue()? < -PSD_TOL {
            continue;
        }
        if let Some(y) = boundary_y(p, x, y_lo, y_hi)? {
            let e = p.eval_constraints(x, y)?;
            if e.feasible {
                feasible.push((x.clone(), y, e.margin));
            }
        }
    }

    // midpoint tests
    let feasible_ys: Vec<f64> = feasible.iter().map(|f| f.1).collect();
    let feasible_xs: Vec<Vec<f64>> = feasible.iter().map(|f| f.0.clone()).collect();
    let mut gap_x = f64::INFINITY;
    let mut gap_y = f64::INFINITY;
    let mut gap_b = f64::INFINITY;
    let mut scale = 1.0_f64;
    for _ in 0..sample_count {
        let x1 = xbox.sample(&mut rng);
        let x2 = xbox.sample(&mut rng);
        let mid: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 0.5 * (a + b)).collect();
        let y = if feasible_ys.is_empty() {
            rng.gen_range(y_lo..=y_hi)
        } else {
            feasible_ys[rng.gen_range(0..feasible_ys.len())]
        };
        let (a1, a2, am) = (p.eval_a(&x1, y)?, p.eval_a(&x2, y)?, p.eval_a(&mid, y)?);
        scale = scale.max(a1.max_abs()).max(a2.max_abs());
        let g = am.axpy(-0.5, &a1)?.axpy(-0.5, &a2)?;
        gap_x = gap_x.min(g.min_eigenvalue()?);

        let (b1, b2, bm) = (p.eval_b(&x1)?, p.eval_b(&x2)?, p.eval_b(&mid)?);
        scale = scale.max(b1.max_abs()).max(b2.max_abs());
        let g = bm.axpy(-0.5, &b1)?.axpy(-0.5, &b2)?;
        gap_b = gap_b.min(g.min_eigenvalue()?);

        let x = if feasible_xs.is_empty() {
            x1.clone()
        } else {
            feasible_xs[rng.gen_range(0..feasible_xs.len())].clone()
        };
        let (ya, yb) = (rng.gen_range(y_lo..=y_hi), rng.gen_range(y_lo..=y_hi));
        let (aa, ab, amid) = (p.eval_a(&x, ya)?, p.eval_a(&x, yb)?, p.eval_a(&x, 0.5 * (ya + yb))?);
        scale = scale.max(aa.max_abs()).max(ab.max_abs());
        let g = aa.scale(0.5).axpy(0.5, &ab)?.axpy(-1.0, &amid)?;
        gap_y = gap_y.min(g.min_eigenvalue()?);
    }
    let tol = MIDPOINT_TOL * scale;
    let concavity = if gap_x >= -tol && gap_y >= -tol && gap_b >= -tol {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    // ∂A/∂y ≻ 0 on the feasible samples
    let mut min_dady: Option<(f64, Vec<f64>, f64)> = None;
    for (x, y, _) in &feasible {
        let l = p.eval_gradients(x, *y)?.da_dy.min_eigenvalue()?;
        if min_dady.as_ref().map_or(true, |(best, _, _)| l < *best) {
            min_dady = Some((l, x.clone(), *y));
        }
    }
    let monotonicity = match &min_dady {
        None => Verdict::NotAssessed,
        Some((l, _, _)) if *l > PD_THRESHOLD => Verdict::Pass,
        Some(_) => Verdict::Fail,
    };

    // strict feasibility proxy
    let best_margin = feasible.iter().map(|f| f.2).fold(None, |acc: Option<f64>, m| {
        Some(acc.map_or(m, |a| a.max(m)))
    });
    let slater_proxy = match best_margin {
        None => Verdict::NotAssessed,
        Some(m) if m > PD_THRESHOLD => Verdict::Pass,
        Some(_) => Verdict::Fail,
    };

    Ok(AssumptionReport {
        problem: p.name.clone(),
        samples: sample_count,
        seed,
        feasible_samples: feasible.len(),
        concavity,
        a_concave_in_x_min_gap: gap_x,
        a_convex_in_y_min_gap: gap_y,
        b_concave_min_gap: gap_b,
        monotonicity,
        min_dady_eigenvalue: min_dady.as_ref().map(|d| d.0),
        min_dady_point: min_dady.map(|(_, x, y)| (x, y)),
        slater_proxy,
        best_margin,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{BilinearAffineForm, DiagonalPair, ScalarDiagAdapter, ScalarFn, ScalarFnXY, XBox};
    use crate::symmat::SymMat;

    #[test]
    fn convex_in_x_is_flagged() {
        // A = [y + x²] is convex, not concave, in x
        let rows = vec![ScalarFnXY::new(|x, y| y + x[0] * x[0], |x, _| vec![2.0 * x[0]], |_, _| 1.0)];
        let b = ScalarDiagAdapter::new(1, vec![ScalarFn::new(|_| 1.0, |_| vec![0.0])]);
        let p = ProblemInstance::new(
            "convex-x",
            Arc::new(DiagonalPair::new(1, rows, b).unwrap()),
            Some(XBox::uniform(1, -1.0, 1.0).unwrap()),
            Some((-1.0, 2.0)),
        )
        .unwrap();
        let r = check_assumptions(&p, 100, 1).unwrap();
        assert_eq!(r.concavity, Verdict::Fail);
        assert!(r.a_concave_in_x_min_gap < 0.0);
    }

    #[test]
    fn infeasible_instance_is_not_assessed() {
        // B = [−1] everywhere
        let form = BilinearAffineForm::new(
            SymMat::zeros(1),
            vec![SymMat::zeros(1)],
            SymMat::identity(1),
            vec![SymMat::zeros(1)],
            SymMat::from_diag(&[-1.0]),
            vec![SymMat::zeros(1)],
        )
        .unwrap();
        let p = ProblemInstance::new(
            "empty",
            Arc::new(form),
            Some(XBox::uniform(1, 0.0, 1.0).unwrap()),
            Some((-1.0, 1.0)),
        )
        .unwrap();
        let r = check_assumptions(&p, 20, 3).unwrap();
        assert_eq!(r.feasible_samples, 0);
        assert_eq!(r.monotonicity, Verdict::NotAssessed);
        assert_eq!(r.slater_proxy, Verdict::NotAssessed);
    }

    #[test]
    fn missing_box_is_an_error() {
        let form = BilinearAffineForm::new(
            SymMat::zeros(1),
            vec![SymMat::zeros(1)],
            SymMat::identity(1),
            vec![SymMat::zeros(1)],
            SymMat::identity(1),
            vec![SymMat::zeros(1)],
        )
        .unwrap();
        let p = ProblemInstance::new("nobox", Arc::new(form), None, None).unwrap();
        assert!(matches!(check_assumptions(&p, 5, 0), Err(ModelError::MissingBox { .. })));
    }
}
