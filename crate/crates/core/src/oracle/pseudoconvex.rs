use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{ScalarFn, XBox};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f_gap: f64,
    pub directional: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoconvexReport {
    pub pairs: usize,
    /// Pairs with `f(x) > f(y)`.
    pub tested: usize,
    pub violations: usize,
    /// Violation with the largest directional derivative.
    pub worst: Option<Violation>,
}

impl PseudoconvexReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Samples pairs `(x, y)` from `domain` and counts those with `f(x) > f(y)`
/// but `⟨∇f(x), y − x⟩ ≥ 0`.
pub fn pseudoconvex_check(f: &ScalarFn, domain: &XBox, pairs: usize, seed: u64) -> PseudoconvexReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PseudoconvexReport {
        pairs,
        tested: 0,
        violations: 0,
        worst: None,
    };
    for _ in 0..pairs {
        let x = domain.sample(&mut rng);
        let y = domain.sample(&mut rng);
        let gap = f.value(&x) - f.value(&y);
        if !(gap > 0.0) {
            continue;
        }
        report.tested += 1;
        let g = f.gradient(&x);
        let directional: f64 = g.iter().zip(y.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
        if directional >= 0.0 {
            report.violations += 1;
            if report.worst.as_ref().map_or(true, |w| directional > w.directional) {
                report.worst = Some(Violation {
                    x,
                    y,
                    f_gap: gap,
                    directional,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_square_passes() {
        let f = ScalarFn::new(|x| x[0] * x[0], |x| vec![2.0 * x[0]]);
        let r = pseudoconvex_check(&f, &XBox::uniform(1, -1.0, 1.0).unwrap(), 500, 2);
        assert!(r.passed());
        assert!(r.tested > 100);
    }

    #[test]
    fn stationary_maximum_is_a_violation() {
        let f = ScalarFn::new(|x| -x[0] * x[0], |x| vec![-2.0 * x[0]]);
        let b = XBox::new(vec![0.0], vec![0.0]).unwrap();
        // degenerate box pins x = y = 0: f(x) > f(y) never holds
        assert_eq!(pseudoconvex_check(&f, &b, 10, 0).tested, 0);
        let r = pseudoconvex_check(&f, &XBox::uniform(1, -1.0, 1.0).unwrap(), 200, 0);
        assert!(r.violations > 0);
    }
}
