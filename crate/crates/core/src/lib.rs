//! Modelling, solving and certifying nonconvex semidefinite programs of the form
//!
//! ```text
//! minimize y   subject to   A(x, y) ⪰ 0,   B(x) ⪰ 0
//! ```
//!
//! where `A(·, y)` and `B` are concave, `A(x, ·)` is convex and `∂A/∂y ≻ 0`.
//! For this class every KKT point is a global minimizer, which the crate
//! exercises empirically: a bisection solver finds the optimum, the
//! [`kkt`] module certifies it, and [`oracle`] supplies independent
//! brute-force references.

mod dense;
pub mod kkt;
pub mod model;
pub mod oracle;
pub mod par;
pub mod problems;
pub mod solver;
pub mod symmat;

pub use model::{MatFnPair, ProblemInstance, XBox};
pub use par::Execution;
pub use symmat::{gen_eig_min, SymMat};
