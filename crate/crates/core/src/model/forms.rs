//! Concrete constraint maps: bilinear-affine matrix forms and diagonal stacks
//! of scalar functions.

use std::fmt;
use std::sync::Arc;

use super::{MatFnPair, ModelError};
use crate::symmat::SymMat;

/// `A(x, y) = A₀ + Σⱼ xⱼAⱼ + y·(C₀ + Σⱼ xⱼCⱼ)`, `B(x) = B₀ + Σⱼ xⱼBⱼ`.
///
/// Affine in `x` for fixed `y` and affine in `y` for fixed `x`, so it is
/// concave/convex in the required senses with `∂A/∂y = C₀ + Σⱼ xⱼCⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearAffineForm {
    pub a0: SymMat,
    pub a: Vec<SymMat>,
    pub c0: SymMat,
    pub c: Vec<SymMat>,
    pub b0: SymMat,
    pub b: Vec<SymMat>,
}

impl BilinearAffineForm {
    pub fn new(
        a0: SymMat,
        a: Vec<SymMat>,
        c0: SymMat,
        c: Vec<SymMat>,
        b0: SymMat,
        b: Vec<SymMat>,
    ) -> Result<Self, ModelError> {
        let m = a.len();
        let n_a = a0.dim();
        let n_b = b0.dim();
        if c.len() != m || b.len() != m {
            return Err(ModelError::InvalidForm(format!(
                "coefficient lists disagree on m: Aj has {m}, Cj has {}, Bj has {}",
                c.len(),
                b.len()
            )));
        }
        let bad_a = std::iter::once(&c0)
            .chain(&a)
            .chain(&c)
            .any(|mat| mat.dim() != n_a);
        if bad_a {
            return Err(ModelError::InvalidForm(format!(
                "every A/C coefficient must be {n_a}x{n_a}"
            )));
        }
        if b.iter().any(|mat| mat.dim() != n_b) {
            return Err(ModelError::InvalidForm(format!(
                "every B coefficient must be {n_b}x{n_b}"
            )));
        }
        let all_finite = [&a0, &c0, &b0]
            .into_iter()
            .chain(&a)
            .chain(&c)
            .chain(&b)
            .all(SymMat::is_finite);
        if !all_finite {
            return Err(ModelError::InvalidForm("non-finite coefficient".into()));
        }
        Ok(Self { a0, a, c0, c, b0, b })
    }

    fn affine(base: &SymMat, terms: &[SymMat], x: &[f64]) -> SymMat {
        let mut out = base.clone();
        for (t, &xj) in terms.iter().zip(x) {
            if xj != 0.0 {
                out.axpy_in_place(xj, t);
            }
        }
        out
    }
}

impl MatFnPair for BilinearAffineForm {
    fn m(&self) -> usize {
        self.a.len()
    }

    fn n_a(&self) -> usize {
        self.a0.dim()
    }

    fn n_b(&self) -> usize {
        self.b0.dim()
    }

    fn eval_a(&self, x: &[f64], y: f64) -> SymMat {
        let mut out = Self::affine(&self.a0, &self.a, x);
        out.axpy_in_place(y, &self.da_dy(x, y));
        out
    }

    fn grad_x_a(&self, _x: &[f64], y: f64) -> Vec<SymMat> {
        self.a
            .iter()
            .zip(&self.c)
            .map(|(aj, cj)| {
                let mut g = aj.clone();
                g.axpy_in_place(y, cj);
                g
            })
            .collect()
    }

    fn da_dy(&self, x: &[f64], _y: f64) -> SymMat {
        Self::affine(&self.c0, &self.c, x)
    }

    fn eval_b(&self, x: &[f64]) -> SymMat {
        Self::affine(&self.b0, &self.b, x)
    }

    fn grad_x_b(&self, _x: &[f64]) -> Vec<SymMat> {
        self.b.clone()
    }

    fn hess_x_a(&self, _x: &[f64], _y: f64) -> Option<Vec<SymMat>> {
        None
    }

    fn hess_x_b(&self, _x: &[f64]) -> Option<Vec<SymMat>> {
        None
    }
}

type Fx = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFx = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type Fxy = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type GradFxy = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;

/// Scalar function of `x` with its gradient.
#[derive(Clone)]
pub struct ScalarFn {
    f: Arc<Fx>,
    grad: Arc<GradFx>,
}

impl ScalarFn {
    pub fn new(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            grad: Arc::new(grad),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }

    /// `−f`, turning a convex `g(x) ≤ 0` into the concave row `−g(x) ≥ 0`.
    pub fn negated(&self) -> Self {
        let f = self.f.clone();
        let g = self.grad.clone();
        Self::new(
            move |x| -f(x),
            move |x| g(x).into_iter().map(|v| -v).collect(),
        )
    }

    /// `xⱼ − lo`.
    pub fn lower_bound(j: usize, lo: f64, m: usize) -> Self {
        Self::new(move |x| x[j] - lo, move |_| unit(m, j, 1.0))
    }

    /// `hi − xⱼ`.
    pub fn upper_bound(j: usize, hi: f64, m: usize) -> Self {
        Self::new(move |x| hi - x[j], move |_| unit(m, j, -1.0))
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn")
    }
}

fn unit(m: usize, j: usize, v: f64) -> Vec<f64> {
    let mut e = vec![0.0; m];
    e[j] = v;
    e
}

/// Scalar function of `(x, y)` with `∇ₓ` and `∂/∂y`.
#[derive(Clone)]
pub struct ScalarFnXY {
    f: Arc<Fxy>,
    grad_x: Arc<GradFxy>,
    d_dy: Arc<Fxy>,
}

impl ScalarFnXY {
    pub fn new(
        f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        grad_x: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
        d_dy: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            grad_x: Arc::new(grad_x),
            d_dy: Arc::new(d_dy),
        }
    }

    /// The epigraph row `y − f(x)`.
    pub fn epigraph(f: ScalarFn) -> Self {
        let g = f.clone();
        Self::new(move |x, y| y - f.value(x), move |x, _| neg(g.gradient(x)), |_, _| 1.0)
    }

    pub fn value(&self, x: &[f64], y: f64) -> f64 {
        (self.f)(x, y)
    }

    pub fn grad_x(&self, x: &[f64], y: f64) -> Vec<f64> {
        (self.grad_x)(x, y)
    }

    pub fn d_dy(&self, x: &[f64], y: f64) -> f64 {
        (self.d_dy)(x, y)
    }
}

impl fmt::Debug for ScalarFnXY {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFnXY")
    }
}

fn neg(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|a| -a).collect()
}

/// `diag(r₁(x), …, r_q(x))` built from scalar rows.
///
/// For a convex program with constraints `gᵢ(x) ≤ 0` the rows are `−gᵢ`; see
/// [`ScalarDiagAdapter::from_inequalities`].
#[derive(Debug, Clone)]
pub struct ScalarDiagAdapter {
    m: usize,
    rows: Vec<ScalarFn>,
}

impl ScalarDiagAdapter {
    pub fn new(m: usize, rows: Vec<ScalarFn>) -> Self {
        Self { m, rows }
    }

    /// `diag(−g₁(x), …, −g_q(x))`.
    pub fn from_inequalities(m: usize, gs: Vec<ScalarFn>) -> Self {
        Self::new(m, gs.iter().map(ScalarFn::negated).collect())
    }

    /// Appends `xⱼ − loⱼ` and `hiⱼ − xⱼ` for every coordinate.
    pub fn with_box_rows(mut self, lower: &[f64], upper: &[f64]) -> Self {
        for j in 0..self.m {
            self.rows.push(ScalarFn::lower_bound(j, lower[j], self.m));
            self.rows.push(ScalarFn::upper_bound(j, upper[j], self.m));
        }
        self
    }

    pub fn push(&mut self, row: ScalarFn) {
        self.rows.push(row);
    }

    pub fn q(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eval(&self, x: &[f64]) -> SymMat {
        let d: Vec<f64> = self.rows.iter().map(|r| r.value(x)).collect();
        SymMat::from_diag(&d)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<SymMat> {
        let grads: Vec<Vec<f64>> = self.rows.iter().map(|r| r.gradient(x)).collect();
        (0..self.m)
            .map(|j| {
                let d: Vec<f64> = grads.iter().map(|g| g.get(j).copied().unwrap_or(f64::NAN)).collect();
                SymMat::from_diag(&d)
            })
            .collect()
    }
}

/// Both blocks diagonal: `A = diag(a₁(x, y), …)`, `B` a [`ScalarDiagAdapter`].
#[derive(Debug, Clone)]
pub struct DiagonalPair {
    m: usize,
    a_rows: Vec<ScalarFnXY>,
    b: ScalarDiagAdapter,
}

impl DiagonalPair {
    pub fn new(m: usize, a_rows: Vec<ScalarFnXY>, b: ScalarDiagAdapter) -> Result<Self, ModelError> {
        if a_rows.is_empty() {
            return Err(ModelError::InvalidForm("A needs at least one row".into()));
        }
        if b.q() == 0 {
            return Err(ModelError::InvalidForm("B needs at least one row".into()));
        }
        if b.m() != m {
            return Err(ModelError::InvalidForm(format!(
                "B rows are functions of {} variables, expected {m}",
                b.m()
            )));
        }
        Ok(Self { m, a_rows, b })
    }

    /// Smooth convex program `min f(x) s.t. gᵢ(x) ≤ 0` as `A = [y − f(x)]`,
    /// `B = diag(−gᵢ(x))`.
    pub fn convex_program(m: usize, f: ScalarFn, gs: Vec<ScalarFn>) -> Result<Self, ModelError> {
        Self::new(
            m,
            vec![ScalarFnXY::epigraph(f)],
            ScalarDiagAdapter::from_inequalities(m, gs),
        )
    }

    pub fn b_rows(&self) -> &ScalarDiagAdapter {
        &self.b
    }
}

impl MatFnPair for DiagonalPair {
    fn m(&self) -> usize {
        self.m
    }

    fn n_a(&self) -> usize {
        self.a_rows.len()
    }

    fn n_b(&self) -> usize {
        self.b.q()
    }

    fn eval_a(&self, x: &[f64], y: f64) -> SymMat {
        let d: Vec<f64> = self.a_rows.iter().map(|r| r.value(x, y)).collect();
        SymMat::from_diag(&d)
    }

    fn grad_x_a(&self, x: &[f64], y: f64) -> Vec<SymMat> {
        let grads: Vec<Vec<f64>> = self.a_rows.iter().map(|r| r.grad_x(x, y)).collect();
        (0..self.m)
            .map(|j| {
                let d: Vec<f64> = grads.iter().map(|g| g.get(j).copied().unwrap_or(f64::NAN)).collect();
                SymMat::from_diag(&d)
            })
            .collect()
    }

    fn da_dy(&self, x: &[f64], y: f64) -> SymMat {
        let d: Vec<f64> = self.a_rows.iter().map(|r| r.d_dy(x, y)).collect();
        SymMat::from_diag(&d)
    }

    fn eval_b(&self, x: &[f64]) -> SymMat {
        self.b.eval(x)
    }

    fn grad_x_b(&self, x: &[f64]) -> Vec<SymMat> {
        self.b.grad(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(n: usize, vals: &[f64]) -> SymMat {
        let len = n * (n + 1) / 2;
        SymMat::from_packed(vals[..len].to_vec()).unwrap()
    }

    #[test]
    fn bilinear_constant_dady() {
        let form = BilinearAffineForm::new(
            SymMat::from_diag(&[1.0, 2.0]),
            vec![SymMat::identity(2)],
            SymMat::identity(2),
            vec![SymMat::zeros(2)],
            SymMat::identity(1),
            vec![SymMat::identity(1)],
        )
        .unwrap();
        for (x, y) in [(0.0, 0.0), (3.0, -2.0), (-1.5, 7.0)] {
            assert_eq!(form.da_dy(&[x], y), SymMat::identity(2));
        }
    }

    #[test]
    fn bilinear_rejects_inconsistent_dims() {
        let err = BilinearAffineForm::new(
            SymMat::identity(2),
            vec![SymMat::identity(3)],
            SymMat::identity(2),
            vec![SymMat::identity(2)],
            SymMat::identity(1),
            vec![SymMat::identity(1)],
        );
        assert!(err.is_err());
    }

    #[test]
    fn diag_adapter_off_diagonals_are_zero() {
        let rows = ScalarDiagAdapter::from_inequalities(
            2,
            vec![
                ScalarFn::new(|x| x[0] * x[0] + x[1] - 1.0, |x| vec![2.0 * x[0], 1.0]),
                ScalarFn::new(|x| -x[1], |_| vec![0.0, -1.0]),
            ],
        )
        .with_box_rows(&[-1.0, -1.0], &[1.0, 1.0]);
        let b = rows.eval(&[0.3, 0.4]);
        assert_eq!(b.dim(), 6);
        assert!(b.is_diagonal());
        assert!((b.get(0, 0) - (1.0 - 0.09 - 0.4)).abs() < 1e-15);
        for g in rows.grad(&[0.3, 0.4]) {
            assert!(g.is_diagonal());
        }
    }

    #[test]
    fn convex_program_adapter() {
        let p = DiagonalPair::convex_program(
            1,
            ScalarFn::new(|x| x[0] * x[0], |x| vec![2.0 * x[0]]),
            vec![ScalarFn::new(|x| 1.0 - x[0], |_| vec![-1.0])],
        )
        .unwrap();
        assert_eq!(p.eval_a(&[2.0], 5.0).get(0, 0), 1.0);
        assert_eq!(p.eval_b(&[2.0]).get(0, 0), 1.0);
        assert_eq!(p.da_dy(&[2.0], 5.0).get(0, 0), 1.0);
        assert_eq!(p.grad_x_a(&[2.0], 5.0)[0].get(0, 0), -4.0);
    }

    proptest! {
        #[test]
        fn bilinear_matches_term_by_term_sum(
            coef in proptest::collection::vec(-3.0..3.0f64, 60),
            x in proptest::collection::vec(-2.0..2.0f64, 2),
            y in -2.0..2.0f64,
        ) {
            let n = 3;
            let form = BilinearAffineForm::new(
                sym(n, &coef[0..]),
                vec![sym(n, &coef[6..]), sym(n, &coef[12..])],
                sym(n, &coef[18..]),
                vec![sym(n, &coef[24..]), sym(n, &coef[30..])],
                sym(2, &coef[36..]),
                vec![sym(2, &coef[39..]), sym(2, &coef[42..])],
            ).unwrap();
            let a = form.eval_a(&x, y);
            let explicit = SymMat::from_fn(n, |i, j| {
                let mut v = form.a0.get(i, j) + y * form.c0.get(i, j);
                for k in 0..2 {
                    v += x[k] * form.a[k].get(i, j) + y * x[k] * form.c[k].get(i, j);
                }
                v
            });
            let scale = explicit.max_abs().max(1.0);
            prop_assert!(a.sub(&explicit).unwrap().max_abs() <= 1e-12 * scale);

            // eval(2x) − 2 eval(x) + eval(0) = 0 for fixed y
            let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            let lin = form.eval_a(&x2, y)
                .axpy(-2.0, &a).unwrap()
                .add(&form.eval_a(&[0.0, 0.0], y)).unwrap();
            prop_assert!(lin.max_abs() <= 1e-12 * scale * 4.0);
        }
    }
}
