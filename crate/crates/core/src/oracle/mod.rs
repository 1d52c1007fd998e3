//! Brute-force and closed-form references, independent of the solver.

mod eigen;
mod fixtures;
mod grasp;
mod pseudoconvex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ProblemInstance, XBox};
use crate::par::{map_reduce, Execution};
use crate::problems::ProblemError;
use crate::symmat::LinalgError;

pub use eigen::{rayleigh_quotients, sup_bisection, truss_direct};
pub use fixtures::{default_grid, fingerprint, Fixture, FixtureSet};
pub use grasp::{grasp_analytic_two_finger, grasp_brute_force, GraspOracle};
pub use pseudoconvex::{pseudoconvex_check, PseudoconvexReport, Violation};

/// Largest grid [`grid_search`] accepts.
pub const GRID_LIMIT: u64 = 10_000_000;

const Y_BISECTION_STEPS: usize = 64;
const SHIFT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grid of {points} points exceeds the limit of {GRID_LIMIT}")]
    GridTooLarge { points: u64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no feasible grid point")]
    Infeasible,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Regular grid `lowerⱼ + k·stepⱼ ≤ upperⱼ`, `k = 0, 1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: Vec<f64>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, step: Vec<f64>) -> Result<Self, OracleError> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != step.len() {
            return Err(OracleError::InvalidGrid("lower, upper and step need one entry per coordinate".into()));
        }
        for j in 0..lower.len() {
            if !(step[j] > 0.0 && step[j].is_finite()) {
                return Err(OracleError::InvalidGrid(format!("step[{j}] = {} is not positive", step[j])));
            }
            if !(lower[j] <= upper[j]) || !lower[j].is_finite() || !upper[j].is_finite() {
                return Err(OracleError::InvalidGrid(format!(
                    "coordinate {j}: need finite lower <= upper, got [{}, {}]",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(Self { lower, upper, step })
    }

    /// The same step on every axis of `b`.
    pub fn over_box(b: &XBox, step: f64) -> Result<Self, OracleError> {
        Self::new(b.lower.clone(), b.upper.clone(), vec![step; b.dim()])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn counts(&self) -> Vec<u64> {
        (0..self.dim())
            .map(|j| ((self.upper[j] - self.lower[j]) / self.step[j] + 1e-9).floor() as u64 + 1)
            .collect()
    }

    /// Total number of points, saturating.
    pub fn points(&self) -> u64 {
        self.counts().iter().fold(1u64, |acc, &c| acc.saturating_mul(c))
    }

    /// Point number `index`; coordinate 0 varies slowest, so index order is
    /// lexicographic order.
    pub fn point(&self, mut index: u64) -> Vec<f64> {
        let counts = self.counts();
        let mut x = vec![0.0; self.dim()];
        for j in (0..self.dim()).rev() {
            let k = index % counts[j];
            index /= counts[j];
            x[j] = (self.lower[j] + k as f64 * self.step[j]).min(self.upper[j]);
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub y: f64,
    pub x: Vec<f64>,
    pub points: u64,
    pub feasible_points: u64,
}

fn psd(s: &crate::symmat::SymMat) -> bool {
    s.is_psd_shifted(SHIFT * (1.0 + s.max_abs()))
}

/// Smallest `y` in the instance's `y` bracket with `A(x, y) ⪰ 0`, by bisection.
fn smallest_feasible_y(p: &ProblemInstance, x: &[f64], lo: f64, hi: f64) -> Result<Option<f64>, ModelError> {
    if !psd(&p.eval_a(x, hi)?) {
        return Ok(None);
    }
    if psd(&p.eval_a(x, lo)?) {
        return Ok(Some(lo));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..Y_BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        if psd(&p.eval_a(x, mid)?) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(b))
}

type Best = (Option<(f64, u64)>, u64, Option<ModelError>);

fn merge(a: Best, b: Best) -> Best {
    let best = match (a.0, b.0) {
        (Some(u), Some(v)) => Some(if (v.0, v.1) < (u.0, u.1) { v } else { u }),
        (u, v) => u.or(v),
    };
    (best, a.1 + b.1, a.2.or(b.2))
}

/// Exhaustive search: at every grid point with `B(x) ⪰ 0`, the smallest `y`
/// in the instance's `y` bracket with `A(x, y) ⪰ 0`; the minimum over points,
/// ties broken by grid order.
pub fn grid_search(p: &ProblemInstance, g: &GridSpec, exec: Execution) -> Result<GridResult, OracleError> {
    if g.dim() != p.m() {
        return Err(OracleError::InvalidGrid(format!("grid has {} coordinates, problem has {}", g.dim(), p.m())));
    }
    let points = g.points();
    if points > GRID_LIMIT {
        return Err(OracleError::GridTooLarge { points });
    }
    let (lo, hi) = p.y_hint().unwrap_or((-1.0, 1.0));
    let (best, feasible, err) = map_reduce(
        exec,
        points as usize,
        (None, 0, None),
        |i| {
            let x = g.point(i as u64);
            let step = || -> Result<Option<f64>, ModelError> {
                if !psd(&p.eval_b(&x)?) {
                    return Ok(None);
                }
                smallest_feasible_y(p, &x, lo, hi)
            };
            match step() {
                Ok(Some(y)) => (Some((y, i as u64)), 1, None),
                Ok(None) => (None, 0, None),
                Err(e) => (None, 0, Some(e)),
            }
        },
        merge,
    );
    if let Some(e) = err {
        return Err(e.into());
    }
    let (y, index) = best.ok_or(OracleError::Infeasible)?;
    Ok(GridResult {
        y,
        x: g.point(index),
        points,
        feasible_points: feasible,
    })
}
