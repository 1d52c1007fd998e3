//! Global solution by bisection on `y`.
//!
//! When `∂A/∂y ⪰ 0`, feasibility in `y` is monotone: if `(x, y)` is feasible so
//! is `(x, y′)` for every `y′ > y`. Each probe level is decided by the concave
//! inner problem in [`inner`], the final bracket end is polished and the
//! result is certified a posteriori with [`crate::kkt::verify_kkt`].

mod bisection;
pub mod inner;
mod multistart;

use thiserror::Error;

use crate::kkt::KktError;
use crate::model::ModelError;
use crate::symmat::LinalgError;

pub use bisection::{bisection_solve, solve, AssumptionGate, SolveOptions, SolveReport, Status, TraceEntry};
pub use inner::{feasibility_margin, InnerOpts, InnerResult};
pub use multistart::{multistart, MultistartOptions, MultistartReport, RunRecord};

/// Margins at or above `−FEAS_TOL` count as feasible.
pub const FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("assumption check failed ({0}); rerun with the override to solve anyway")]
    AssumptionsFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kkt(#[from] KktError),
}
