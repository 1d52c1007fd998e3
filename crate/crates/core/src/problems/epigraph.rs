//! Epigraph transforms for minimax objectives.
//!
//! Each component contributes one diagonal row of `A`:
//!
//! | tag      | objective term | row               | `∂/∂y` |
//! |----------|----------------|-------------------|--------|
//! | plain    | `f(x)`         | `y − f(x)`        | `1`    |
//! | log      | `log f(x)`     | `eʸ − f(x)`       | `eʸ`   |
//! | ratio    | `f(x) / g(x)`  | `y·g(x) − f(x)`   | `g(x)` |
//!
//! Minimizing `y` over all rows minimizes the largest term.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{DiagonalPair, ProblemInstance, ScalarDiagAdapter, ScalarFn, ScalarFnXY, XBox};

use super::ProblemError;

const GUARD_SAMPLES: usize = 256;
const GUARD_SEED: u64 = 0x6d69_6e69_6d61_78;

/// One term of a minimax objective. `f` is convex throughout; log requires
/// `f > 0`, ratio requires `f > 0` and a concave `g > 0` on the box.
#[derive(Debug, Clone)]
pub enum Component {
    Plain(ScalarFn),
    Log(ScalarFn),
    Ratio { f: ScalarFn, g: ScalarFn },
}

impl Component {
    fn tag(&self) -> &'static str {
        match self {
            Component::Plain(_) => "plain",
            Component::Log(_) => "log",
            Component::Ratio { .. } => "ratio",
        }
    }

    /// The objective term this component represents.
    pub fn term(&self, x: &[f64]) -> f64 {
        match self {
            Component::Plain(f) => f.value(x),
            Component::Log(f) => f.value(x).ln(),
            Component::Ratio { f, g } => f.value(x) / g.value(x),
        }
    }

    fn row(&self) -> ScalarFnXY {
        match self.clone() {
            Component::Plain(f) => ScalarFnXY::epigraph(f),
            Component::Log(f) => {
                let g = f.clone();
                ScalarFnXY::new(
                    move |x, y| y.exp() - f.value(x),
                    move |x, _| g.gradient(x).into_iter().map(|v| -v).collect(),
                    |_, y| y.exp(),
                )
            }
            Component::Ratio { f, g } => {
                let (f2, g2, g3) = (f.clone(), g.clone(), g.clone());
                ScalarFnXY::new(
                    move |x, y| y * g.value(x) - f.value(x),
                    move |x, y| {
                        g2.gradient(x)
                            .iter()
                            .zip(f2.gradient(x))
                            .map(|(dg, df)| y * dg - df)
                            .collect()
                    },
                    move |x, _| g3.value(x),
                )
            }
        }
    }

    fn check_positive(&self, index: usize, x: &[f64]) -> Result<(), ProblemError> {
        let fail = |what: &str, v: f64| {
            Err(ProblemError::Guard(format!(
                "component {index} ({}): {what} = {v} is not positive at x = {x:?}",
                self.tag()
            )))
        };
        match self {
            Component::Plain(_) => Ok(()),
            Component::Log(f) => match f.value(x) {
                v if v > 0.0 => Ok(()),
                v => fail("f(x)", v),
            },
            Component::Ratio { f, g } => {
                let (fv, gv) = (f.value(x), g.value(x));
                if !(fv > 0.0) {
                    fail("f(x)", fv)
                } else if !(gv > 0.0) {
                    fail("g(x)", gv)
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Minimizes `maxᵢ termᵢ(x)` over `x_box` subject to `gₖ(x) ≤ 0` for the
/// convex `extra` constraints. `B` holds the box rows and `−gₖ`.
///
/// Positivity of log and ratio components is checked on seeded samples of the
/// box (plus its corners); the check is a guard, not a proof.
pub fn make_minimax_epigraph(
    name: &str,
    components: Vec<Component>,
    x_box: XBox,
    extra: Vec<ScalarFn>,
) -> Result<ProblemInstance, ProblemError> {
    if components.is_empty() {
        return Err(ProblemError::Guard("at least one component is required".into()));
    }
    let m = x_box.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(GUARD_SEED);
    let mut samples = x_box.corners();
    samples.push(x_box.center());
    samples.extend((0..GUARD_SAMPLES).map(|_| x_box.sample(&mut rng)));
    for x in &samples {
        for (i, c) in components.iter().enumerate() {
            c.check_positive(i, x)?;
        }
    }

    // bracket: the best sampled max-term is feasible; the low end is a guess
    let mut best_max = f64::INFINITY;
    let mut low = f64::INFINITY;
    for x in samples.iter().filter(|x| extra.iter().all(|g| g.value(x) <= 0.0)) {
        let terms: Vec<f64> = components.iter().map(|c| c.term(x)).collect();
        best_max = best_max.min(terms.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        low = low.min(terms.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if !best_max.is_finite() {
        return Err(ProblemError::Guard("no sampled point satisfies the extra constraints".into()));
    }
    let hi = best_max + 0.1 * (1.0 + best_max.abs());
    let lo = (low - 1.0).min(hi - 1.0);

    let rows = components.iter().map(Component::row).collect();
    let b = ScalarDiagAdapter::from_inequalities(m, extra).with_box_rows(&x_box.lower, &x_box.upper);
    Ok(ProblemInstance::new(
        name,
        Arc::new(DiagonalPair::new(m, rows, b)?),
        Some(x_box),
        Some((lo, hi)),
    )?)
}

/// Plain `(x₁ − 1)² + x₂²`, log of `exp(x₁ + x₂ − 1)`, and ratio
/// `(x₁² + x₂² + 1) / (3 − x₁)` on `[−1, 2]²`.
pub fn minimax_catalog() -> Result<ProblemInstance, ProblemError> {
    let components = vec![
        Component::Plain(ScalarFn::new(
            |x| (x[0] - 1.0).powi(2) + x[1] * x[1],
            |x| vec![2.0 * (x[0] - 1.0), 2.0 * x[1]],
        )),
        Component::Log(ScalarFn::new(
            |x| (x[0] + x[1] - 1.0).exp(),
            |x| {
                let e = (x[0] + x[1] - 1.0).exp();
                vec![e, e]
            },
        )),
        Component::Ratio {
            f: ScalarFn::new(|x| x[0] * x[0] + x[1] * x[1] + 1.0, |x| vec![2.0 * x[0], 2.0 * x[1]]),
            g: ScalarFn::new(|x| 3.0 - x[0], |_| vec![-1.0, 0.0]),
        },
    ];
    make_minimax_epigraph("minimax", components, XBox::uniform(2, -1.0, 2.0)?, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_vanish_on_the_epigraph_boundary() {
        let p = minimax_catalog().unwrap();
        let x = [0.3, -0.4];
        let f1 = 0.49 + 0.16;
        let e = p.eval_constraints(&x, f1).unwrap();
        assert!(e.a.get(0, 0).abs() < 1e-15);
        let log_term = x[0] + x[1] - 1.0;
        assert!(p.eval_a(&x, log_term).unwrap().get(1, 1).abs() < 1e-15);
        let ratio = (0.09 + 0.16 + 1.0) / 2.7;
        assert!(p.eval_a(&x, ratio).unwrap().get(2, 2).abs() < 1e-15);
    }

    #[test]
    fn positivity_guard_names_the_component() {
        let err = make_minimax_epigraph(
            "bad",
            vec![
                Component::Plain(ScalarFn::new(|x| x[0], |_| vec![1.0])),
                Component::Ratio {
                    f: ScalarFn::new(|x| x[0] * x[0] + 1.0, |x| vec![2.0 * x[0]]),
                    g: ScalarFn::new(|x| x[0], |_| vec![1.0]),
                },
            ],
            XBox::uniform(1, -1.0, 1.0).unwrap(),
            Vec::new(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("component 1 (ratio)"), "{err}");
    }

    #[test]
    fn bracket_contains_a_feasible_top() {
        let p = minimax_catalog().unwrap();
        let (lo, hi) = p.y_hint().unwrap();
        assert!(lo < hi);
        let b = p.x_box().unwrap().clone();
        let feasible_somewhere = b.corners().iter().chain([b.center()].iter()).any(|x| {
            p.eval_constraints(x, hi).unwrap().feasible
        }) || (0..=30).flat_map(|i| (0..=30).map(move |j| (i, j))).any(|(i, j)| {
            let x = [-1.0 + 0.1 * i as f64, -1.0 + 0.1 * j as f64];
            p.eval_constraints(&x, hi).unwrap().feasible
        });
        assert!(feasible_somewhere);
    }
}
