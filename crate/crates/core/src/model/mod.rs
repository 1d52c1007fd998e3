//! Problem representation: minimize `y` subject to `A(x, y) ⪰ 0`, `B(x) ⪰ 0`.
//!
//! A problem is a [`MatFnPair`] (the two matrix-valued constraint maps with
//! their first derivatives) wrapped in a [`ProblemInstance`] that adds a
//! sampling box for `x` and an optional bracket for `y`.
//!
//! Implementations of [`MatFnPair`] must be pure: evaluating at the same point
//! twice returns the same matrices and never mutates shared state. Under that
//! contract instances can be shared freely across threads.

mod assumptions;
mod forms;
pub mod io;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::symmat::{LinalgError, SymMat, PSD_TOL};

pub use assumptions::{check_assumptions, AssumptionReport, Verdict};
pub use forms::{BilinearAffineForm, DiagonalPair, ScalarDiagAdapter, ScalarFn, ScalarFnXY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: expected length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("x[{coord}] = {value} lies outside the box [{lower}, {upper}]")]
    OutsideBox {
        coord: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("non-finite value produced by {function}")]
    NonFinite { function: &'static str },
    #[error("non-finite input {what}")]
    NonFiniteInput { what: &'static str },
    #[error("invalid box: lower bound exceeds upper bound at coordinate {coord}")]
    InvalidBox { coord: usize },
    #[error("invalid y bracket: need y_lo < y_hi, got ({lo}, {hi})")]
    InvalidHint { lo: f64, hi: f64 },
    #[error("instance '{name}' has no x box; sampling requires one")]
    MissingBox { name: String },
    #[error("invalid form: {0}")]
    InvalidForm(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The pair `(A(x, y), B(x))` with first-derivative maps.
pub trait MatFnPair: Send + Sync {
    /// Number of `x` variables.
    fn m(&self) -> usize;
    fn n_a(&self) -> usize;
    fn n_b(&self) -> usize;

    fn eval_a(&self, x: &[f64], y: f64) -> SymMat;
    /// Component `j` is `∂A/∂xⱼ`.
    fn grad_x_a(&self, x: &[f64], y: f64) -> Vec<SymMat>;
    fn da_dy(&self, x: &[f64], y: f64) -> SymMat;
    fn eval_b(&self, x: &[f64]) -> SymMat;
    fn grad_x_b(&self, x: &[f64]) -> Vec<SymMat>;

    /// Second `x`-derivatives `∂²A/∂xᵢ∂xⱼ` packed for `j <= i`, or `None` when
    /// identically zero. The default differentiates [`MatFnPair::grad_x_a`]
    /// numerically.
    fn hess_x_a(&self, x: &[f64], y: f64) -> Option<Vec<SymMat>> {
        Some(fd_hessian(self.m(), x, |p| self.grad_x_a(p, y)))
    }

    /// Second derivatives of `B`, same layout as [`MatFnPair::hess_x_a`].
    fn hess_x_b(&self, x: &[f64]) -> Option<Vec<SymMat>> {
        Some(fd_hessian(self.m(), x, |p| self.grad_x_b(p)))
    }
}

/// Packed index of the pair `(i, j)` in a second-derivative list.
#[inline]
pub fn hess_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

fn fd_hessian(m: usize, x: &[f64], grad: impl Fn(&[f64]) -> Vec<SymMat>) -> Vec<SymMat> {
    let mut cols: Vec<Vec<SymMat>> = Vec::with_capacity(m);
    let mut p = x.to_vec();
    for j in 0..m {
        let h = 1e-5 * x[j].abs().max(1.0);
        p[j] = x[j] + h;
        let plus = grad(&p);
        p[j] = x[j] - h;
        let minus = grad(&p);
        p[j] = x[j];
        cols.push(
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| a.sub(b).expect("gradient dims").scale(0.5 / h))
                .collect(),
        );
    }
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in 0..=i {
            // d/dxj of dF/dxi and d/dxi of dF/dxj, averaged
            out.push(cols[j][i].add(&cols[i][j]).expect("dims").scale(0.5));
        }
    }
    out
}

/// Axis-aligned box `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct XBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl XBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() {
            return Err(ModelError::DimensionMismatch {
                what: "box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (coord, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l <= u) {
                return Err(ModelError::InvalidBox { coord });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(m: usize, lower: f64, upper: f64) -> Result<Self, ModelError> {
        Self::new(vec![lower; m], vec![upper; m])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if l < u { rng.gen_range(l..=u) } else { l })
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// All `2^m` corners (capped at `m <= 12`).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let m = self.dim().min(12);
        (0..(1usize << m))
            .map(|mask| {
                (0..self.dim())
                    .map(|j| {
                        if j < m && mask & (1 << j) != 0 {
                            self.upper[j]
                        } else {
                            self.lower[j]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Values of both constraint blocks at one point.
#[derive(Debug, Clone)]
pub struct ConstraintEval {
    pub a: SymMat,
    pub b: SymMat,
    pub feasible: bool,
    /// `min(λ_min(A), λ_min(B))`.
    pub margin: f64,
}

/// Derivative bundles used by the stationarity conditions.
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub grad_a: Vec<SymMat>,
    pub da_dy: SymMat,
    pub grad_b: Vec<SymMat>,
}

/// A complete instance: constraint maps, optional `x` box and `y` bracket.
#[derive(Clone)]
pub struct ProblemInstance {
    pub name: String,
    func: Arc<dyn MatFnPair>,
    x_box: Option<XBox>,
    y_hint: Option<(f64, f64)>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("m", &self.func.m())
            .field("n_a", &self.func.n_a())
            .field("n_b", &self.func.n_b())
            .field("x_box", &self.x_box)
            .field("y_hint", &self.y_hint)
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        func: Arc<dyn MatFnPair>,
        x_box: Option<XBox>,
        y_hint: Option<(f64, f64)>,
    ) -> Result<Self, ModelError> {
        if let Some(b) = &x_box {
            if b.dim() != func.m() {
                return Err(ModelError::DimensionMismatch {
                    what: "x box",
                    expected: func.m(),
                    found: b.dim(),
                });
            }
        }
        if let Some((lo, hi)) = y_hint {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ModelError::InvalidHint { lo, hi });
            }
        }
        Ok(Self {
            name: name.into(),
            func,
            x_box,
            y_hint,
        })
    }

    pub fn func(&self) -> &dyn MatFnPair {
        self.func.as_ref()
    }

    pub fn m(&self) -> usize {
        self.func.m()
    }

    pub fn n_a(&self) -> usize {
        self.func.n_a()
    }

    pub fn n_b(&self) -> usize {
        self.func.n_b()
    }

    pub fn x_box(&self) -> Option<&XBox> {
        self.x_box.as_ref()
    }

    pub fn y_hint(&self) -> Option<(f64, f64)> {
        self.y_hint
    }

    pub fn with_box(mut self, x_box: XBox) -> Result<Self, ModelError> {
        if x_box.dim() != self.m() {
            return Err(ModelError::DimensionMismatch {
                what: "x box",
                expected: self.m(),
                found: x_box.dim(),
            });
        }
        self.x_box = Some(x_box);
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn require_box(&self) -> Result<&XBox, ModelError> {
        self.x_box.as_ref().ok_or_else(|| ModelError::MissingBox {
            name: self.name.clone(),
        })
    }

    pub(crate) fn check_point(&self, x: &[f64], y: Option<f64>) -> Result<(), ModelError> {
        if x.len() != self.m() {
            return Err(ModelError::DimensionMismatch {
                what: "x",
                expected: self.m(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput { what: "x" });
        }
        if matches!(y, Some(v) if !v.is_finite()) {
            return Err(ModelError::NonFiniteInput { what: "y" });
        }
        if let Some(b) = &self.x_box {
            // tiny slack for points produced by projection round-off
            for (coord, (&v, (&l, &u))) in x.iter().zip(b.lower.iter().zip(&b.upper)).enumerate() {
                let slack = 1e-12 * (1.0 + l.abs().max(u.abs()));
                if v < l - slack || v > u + slack {
                    return Err(ModelError::OutsideBox {
                        coord,
                        value: v,
                        lower: l,
                        upper: u,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn eval_a(&self, x: &[f64], y: f64) -> Result<SymMat, ModelError> {
        let a = self.func.eval_a(x, y);
        finite(a, "A(x, y)", self.n_a())
    }

    pub fn eval_b(&self, x: &[f64]) -> Result<SymMat, ModelError> {
        let b = self.func.eval_b(x);
        finite(b, "B(x)", self.n_b())
    }

    /// Evaluates both blocks with the default PSD tolerance.
    pub fn eval_constraints(&self, x: &[f64], y: f64) -> Result<ConstraintEval, ModelError> {
        self.eval_constraints_tol(x, y, PSD_TOL)
    }

    pub fn eval_constraints_tol(
        &self,
        x: &[f64],
        y: f64,
        tol: f64,
    ) -> Result<ConstraintEval, ModelError> {
        self.check_point(x, Some(y))?;
        let a = self.eval_a(x, y)?;
        let b = self.eval_b(x)?;
        let margin = a.min_eigenvalue()?.min(b.min_eigenvalue()?);
        Ok(ConstraintEval {
            a,
            b,
            feasible: margin >= -tol,
            margin,
        })
    }

    pub fn eval_gradients(&self, x: &[f64], y: f64) -> Result<GradientEval, ModelError> {
        self.check_point(x, Some(y))?;
        let grad_a = self.func.grad_x_a(x, y);
        let da_dy = finite(self.func.da_dy(x, y), "dA/dy", self.n_a())?;
        let grad_b = self.func.grad_x_b(x);
        for (list, what, n) in [(&grad_a, "grad_x A", self.n_a()), (&grad_b, "grad B", self.n_b())] {
            if list.len() != self.m() {
                return Err(ModelError::DimensionMismatch {
                    what,
                    expected: self.m(),
                    found: list.len(),
                });
            }
            for g in list.iter() {
                if g.dim() != n {
                    return Err(ModelError::DimensionMismatch {
                        what,
                        expected: n,
                        found: g.dim(),
                    });
                }
                if !g.is_finite() {
                    return Err(ModelError::NonFinite { function: what });
                }
            }
        }
        Ok(GradientEval {
            grad_a,
            da_dy,
            grad_b,
        })
    }

    /// Compares every derivative map against central differences at `points`.
    /// Returns the worst relative error, `max |analytic − fd| / max(1, ‖F‖_max)`.
    pub fn derivative_check(&self, points: &[(Vec<f64>, f64)], h: f64) -> Result<DerivativeCheck, ModelError> {
        let mut worst = DerivativeCheck::default();
        for (x, y) in points {
            let g = self.eval_gradients(x, *y)?;
            let mut p = x.clone();
            for j in 0..self.m() {
                p[j] = x[j] + h;
                let (ap, bp) = (self.eval_a(&p, *y)?, self.eval_b(&p)?);
                p[j] = x[j] - h;
                let (am, bm) = (self.eval_a(&p, *y)?, self.eval_b(&p)?);
                p[j] = x[j];
                let fd_a = ap.sub(&am)?.scale(0.5 / h);
                let fd_b = bp.sub(&bm)?.scale(0.5 / h);
                let scale_a = ap.max_abs().max(am.max_abs()).max(1.0);
                let scale_b = bp.max_abs().max(bm.max_abs()).max(1.0);
                worst.record(fd_a.sub(&g.grad_a[j])?.max_abs() / scale_a, format!("dA/dx{j}"));
                worst.record(fd_b.sub(&g.grad_b[j])?.max_abs() / scale_b, format!("dB/dx{j}"));
            }
            let (ap, am) = (self.eval_a(x, y + h)?, self.eval_a(x, y - h)?);
            let fd = ap.sub(&am)?.scale(0.5 / h);
            let scale = ap.max_abs().max(am.max_abs()).max(1.0);
            worst.record(fd.sub(&g.da_dy)?.max_abs() / scale, "dA/dy".into());
        }
        Ok(worst)
    }

    /// Seeded points for [`ProblemInstance::derivative_check`]: `x` from the box,
    /// `y` from the bracket (or `[-1, 1]`).
    pub fn sample_points(&self, count: usize, seed: u64) -> Result<Vec<(Vec<f64>, f64)>, ModelError> {
        use rand::SeedableRng;
        let b = self.require_box()?;
        let (lo, hi) = self.y_hint.unwrap_or((-1.0, 1.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count)
            .map(|_| (b.sample(&mut rng), rng.gen_range(lo..=hi)))
            .collect())
    }
}

/// Worst derivative-vs-finite-difference discrepancy.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct DerivativeCheck {
    pub max_rel_error: f64,
    pub worst_component: String,
}

impl DerivativeCheck {
    fn record(&mut self, err: f64, what: String) {
        if self.worst_component.is_empty() || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst_component = what;
        }
    }
}

fn finite(m: SymMat, function: &'static str, n: usize) -> Result<SymMat, ModelError> {
    if m.dim() != n {
        return Err(ModelError::DimensionMismatch {
            what: function,
            expected: n,
            found: m.dim(),
        });
    }
    if !m.is_finite() {
        return Err(ModelError::NonFinite { function });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fractional() -> ProblemInstance {
        // A = [y(x+1) − x], B = [x]
        let form = BilinearAffineForm::new(
            SymMat::zeros(1),
            vec![SymMat::from_diag(&[-1.0])],
            SymMat::identity(1),
            vec![SymMat::identity(1)],
            SymMat::zeros(1),
            vec![SymMat::identity(1)],
        )
        .unwrap();
        ProblemInstance::new(
            "fractional",
            Arc::new(form),
            Some(XBox::uniform(1, 0.0, 10.0).unwrap()),
            Some((-1.0, 2.0)),
        )
        .unwrap()
    }

    #[test]
    fn eval_constraints_examples() {
        let p = fractional();
        let e = p.eval_constraints(&[1.0], 0.5).unwrap();
        assert_eq!(e.a.get(0, 0), 0.0);
        assert_eq!(e.b.get(0, 0), 1.0);
        assert!(e.feasible);
        assert_eq!(e.margin, 0.0);
        let e = p.eval_constraints(&[1.0], 0.4).unwrap();
        assert!((e.a.get(0, 0) + 0.2).abs() < 1e-15);
        assert!(!e.feasible);
    }

    #[test]
    fn eval_gradients_example() {
        let g = fractional().eval_gradients(&[0.0], 0.0).unwrap();
        assert_eq!(g.grad_a[0].get(0, 0), -1.0);
        assert_eq!(g.da_dy.get(0, 0), 1.0);
        assert_eq!(g.grad_b[0].get(0, 0), 1.0);
    }

    #[test]
    fn point_validation() {
        let p = fractional();
        assert!(matches!(
            p.eval_constraints(&[1.0, 2.0], 0.0),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            p.eval_constraints(&[11.0], 0.0),
            Err(ModelError::OutsideBox { coord: 0, .. })
        ));
        assert!(matches!(
            p.eval_constraints(&[1.0], f64::NAN),
            Err(ModelError::NonFiniteInput { what: "y" })
        ));
    }

    #[test]
    fn non_finite_evaluation_names_function() {
        let rows = vec![ScalarFnXY::new(|x, _y| x[0].ln(), |x, _| vec![1.0 / x[0]], |_, _| 1.0)];
        let b = ScalarDiagAdapter::new(1, vec![ScalarFn::new(|_| 1.0, |_| vec![0.0])]);
        let pair = DiagonalPair::new(1, rows, b).unwrap();
        let p = ProblemInstance::new("log", Arc::new(pair), None, None).unwrap();
        assert!(matches!(
            p.eval_constraints(&[-1.0], 0.0),
            Err(ModelError::NonFinite { function: "A(x, y)" })
        ));
    }

    #[test]
    fn instance_rejects_bad_hint_and_box() {
        let p = fractional();
        assert!(ProblemInstance::new("x", p.func.clone(), None, Some((1.0, 1.0))).is_err());
        assert!(XBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn derivative_check_on_fractional() {
        let p = fractional();
        let pts = p.sample_points(10, 1).unwrap();
        let d = p.derivative_check(&pts, 1e-6).unwrap();
        assert!(d.max_rel_error < 1e-6, "{d:?}");
    }

    #[test]
    fn fd_hessian_of_quadratic_row() {
        // A = [y − x0² − 3 x0 x1]
        let rows = vec![ScalarFnXY::new(
            |x, y| y - x[0] * x[0] - 3.0 * x[0] * x[1],
            |x, _| vec![-2.0 * x[0] - 3.0 * x[1], -3.0 * x[0]],
            |_, _| 1.0,
        )];
        let b = ScalarDiagAdapter::new(2, vec![ScalarFn::new(|_| 1.0, |_| vec![0.0, 0.0])]);
        let pair = DiagonalPair::new(2, rows, b).unwrap();
        let h = pair.hess_x_a(&[0.3, -0.2], 0.0).unwrap();
        assert!((h[hess_index(0, 0)].get(0, 0) + 2.0).abs() < 1e-8);
        assert!((h[hess_index(1, 0)].get(0, 0) + 3.0).abs() < 1e-8);
        assert!(h[hess_index(1, 1)].get(0, 0).abs() < 1e-8);
    }
}
