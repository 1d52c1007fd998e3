//! Small analytic instances.

use std::sync::Arc;

use crate::model::{
    BilinearAffineForm, DiagonalPair, ProblemInstance, ScalarDiagAdapter, ScalarFn, ScalarFnXY, XBox,
};
use crate::symmat::SymMat;

use super::ProblemError;

fn scalar(v: f64) -> SymMat {
    SymMat::from_diag(&[v])
}

/// `A = [y(x + 1) − x]`, `B = [x]` on `x ∈ [0, 10]`; optimum `(0, 0)`.
pub fn make_fractional() -> ProblemInstance {
    let form = BilinearAffineForm::new(
        scalar(0.0),
        vec![scalar(-1.0)],
        scalar(1.0),
        vec![scalar(1.0)],
        scalar(0.0),
        vec![scalar(1.0)],
    )
    .expect("fractional form is well formed");
    ProblemInstance::new(
        "fractional",
        Arc::new(form),
        Some(XBox::uniform(1, 0.0, 10.0).expect("box")),
        Some((-1.0, 2.0)),
    )
    .expect("fractional instance")
}

fn sqrt_rows() -> Vec<ScalarFnXY> {
    vec![
        ScalarFnXY::new(|x, y| y * y - x[0], |_, _| vec![-1.0], |_, y| 2.0 * y),
        ScalarFnXY::new(|_, y| y, |_, _| vec![0.0], |_, _| 1.0),
    ]
}

/// `A = diag(y² − x, y)`, `B = [x − 1]` on `x ∈ [1, 100]`; optimum `(1, 1)`.
pub fn make_sqrt_scalar() -> ProblemInstance {
    let b = ScalarDiagAdapter::new(1, vec![ScalarFn::lower_bound(0, 1.0, 1)]);
    ProblemInstance::new(
        "sqrt",
        Arc::new(DiagonalPair::new(1, sqrt_rows(), b).expect("sqrt pair")),
        Some(XBox::uniform(1, 1.0, 100.0).expect("box")),
        Some((0.5, 11.0)),
    )
    .expect("sqrt instance")
}

/// The same objective with `x ≥ 0` in place of `x ≥ 1`. At `(0, 0)` the
/// derivative `∂A/∂y = diag(0, 1)` is singular, so monotonicity fails there.
pub fn make_sqrt_variant() -> ProblemInstance {
    let b = ScalarDiagAdapter::new(1, vec![ScalarFn::lower_bound(0, 0.0, 1)]);
    ProblemInstance::new(
        "sqrt-nonneg",
        Arc::new(DiagonalPair::new(1, sqrt_rows(), b).expect("sqrt pair")),
        Some(XBox::uniform(1, 0.0, 100.0).expect("box")),
        Some((-1.0, 11.0)),
    )
    .expect("sqrt variant")
}

/// Minimize `√(xᵀQx)` subject to `g(x) ≤ 0` as
/// `A = diag(y² − xᵀQx, y)`, `B = [−g(x)]`.
///
/// Requires `Q ≻ 0` and that `x = 0` is excluded by `g` whenever the box holds
/// the origin; otherwise `∂A/∂y` degenerates at the optimum.
pub fn make_norm_quadratic(q: SymMat, g: ScalarFn, x_box: XBox) -> Result<ProblemInstance, ProblemError> {
    let m = q.dim();
    if x_box.dim() != m {
        return Err(ProblemError::Guard(format!("box has {} coordinates, Q is {m}x{m}", x_box.dim())));
    }
    q.chol()
        .map_err(|e| ProblemError::Guard(format!("Q must be positive definite: {e}")))?;
    let origin = vec![0.0; m];
    if x_box.contains(&origin) && g.value(&origin) <= 0.0 {
        return Err(ProblemError::Guard(
            "x = 0 satisfies g(x) <= 0; the constraint must exclude the origin".into(),
        ));
    }
    let reach = x_box
        .corners()
        .iter()
        .map(|c| q.quad_form(c))
        .fold(0.0_f64, f64::max)
        .sqrt();
    let (qa, qb) = (q.clone(), q);
    let rows = vec![
        ScalarFnXY::new(
            move |x, y| y * y - qa.quad_form(x),
            move |x, _| qb.mul_vec(x).into_iter().map(|v| -2.0 * v).collect(),
            |_, y| 2.0 * y,
        ),
        ScalarFnXY::new(|_, y| y, move |_, _| vec![0.0; m], |_, _| 1.0),
    ];
    let b = ScalarDiagAdapter::from_inequalities(m, vec![g]);
    Ok(ProblemInstance::new(
        "norm-quadratic",
        Arc::new(DiagonalPair::new(m, rows, b)?),
        Some(x_box),
        Some((-1.0, reach + 1.0)),
    )?)
}

/// `Q = diag(4, 1)`, `g(x) = 1 − x₁`, box `[−3, 3]²`; optimum `y* = 2` at `(1, 0)`.
pub fn norm_quadratic_catalog() -> Result<ProblemInstance, ProblemError> {
    make_norm_quadratic(
        SymMat::from_diag(&[4.0, 1.0]),
        ScalarFn::new(|x| 1.0 - x[0], |_| vec![-1.0, 0.0]),
        XBox::uniform(2, -3.0, 3.0)?,
    )
}

/// `A = [y − x₁² − x₂² + 2x₁]` with box rows in `B` on `[−2, 2]²`; the unique
/// optimum is `y* = −1` at `(1, 0)`.
pub fn make_strictly_concave_variant() -> ProblemInstance {
    let rows = vec![ScalarFnXY::new(
        |x, y| y - x[0] * x[0] - x[1] * x[1] + 2.0 * x[0],
        |x, _| vec![2.0 - 2.0 * x[0], -2.0 * x[1]],
        |_, _| 1.0,
    )];
    let b = ScalarDiagAdapter::new(2, Vec::new()).with_box_rows(&[-2.0, -2.0], &[2.0, 2.0]);
    ProblemInstance::new(
        "strict-concave",
        Arc::new(DiagonalPair::new(2, rows, b).expect("pair")),
        Some(XBox::uniform(2, -2.0, 2.0).expect("box")),
        Some((-3.0, 10.0)),
    )
    .expect("strict-concave instance")
}
