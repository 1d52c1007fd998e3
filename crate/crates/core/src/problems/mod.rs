//! Catalog of example instances and builders for structured problem families.

mod basic;
mod epigraph;
mod grasp;
mod truss;

use thiserror::Error;

use crate::model::io::{read_bilinear, FileError};
use crate::model::{ModelError, ProblemInstance};
use crate::symmat::LinalgError;

pub use basic::{
    make_fractional, make_norm_quadratic, make_sqrt_scalar, make_sqrt_variant, make_strictly_concave_variant,
    norm_quadratic_catalog,
};
pub use epigraph::{make_minimax_epigraph, minimax_catalog, Component};
pub use grasp::{make_grasp_problem, read_grasp, Contact, GraspProblem, GraspSpec};
pub use truss::{assemble_truss_matrices, make_truss_problem, read_truss, TrussMatrices, TrussModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("unknown catalog id '{0}' (see `catalog`)")]
    UnknownId(String),
    #[error("invalid truss: {0}")]
    Truss(String),
    #[error("invalid grasp: {0}")]
    Grasp(String),
    #[error("{0}")]
    Guard(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Catalog identifiers with a one-line description.
pub const CATALOG: &[(&str, &str)] = &[
    ("fractional", "min x/(x+1) on [0, 10] as A = [y(x+1) - x], B = [x]"),
    ("sqrt", "min sqrt(x) s.t. x >= 1 as A = diag(y^2 - x, y), B = [x - 1]"),
    ("norm-quadratic", "min sqrt(x'Qx) s.t. x1 >= 1 with Q = diag(4, 1)"),
    ("minimax", "max of a plain, a log and a ratio component on [-1, 2]^2"),
    ("truss-2bar", "two-bar truss, maximize the fundamental eigenvalue"),
    ("truss-10bar", "ten-bar 2x1 grid truss, maximize the fundamental eigenvalue"),
    ("grasp-2finger", "two opposing fingers, minimize the squared friction ratio"),
    ("strict-concave", "A = [y - x1^2 - x2^2 + 2 x1] on [-2, 2]^2"),
];

pub fn catalog_ids() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|(id, _)| *id)
}

/// Builds the catalog instance named `id`.
pub fn catalog_instance(id: &str) -> Result<ProblemInstance, ProblemError> {
    match id {
        "fractional" => Ok(make_fractional()),
        "sqrt" => Ok(make_sqrt_scalar()),
        "norm-quadratic" => norm_quadratic_catalog(),
        "minimax" => minimax_catalog(),
        "truss-2bar" => make_truss_problem(&TrussModel::two_bar()),
        "truss-10bar" => make_truss_problem(&TrussModel::ten_bar()),
        "grasp-2finger" => Ok(make_grasp_problem(&GraspSpec::two_finger(1.0, 10.0))?.instance),
        "strict-concave" => Ok(make_strictly_concave_variant()),
        other => Err(ProblemError::UnknownId(other.to_string())),
    }
}

/// Reads a problem file, telling the formats apart by their keys: `A0` for
/// bilinear forms, `nodes` for trusses, `contacts` for grasps.
pub fn read_problem(text: &str) -> Result<ProblemInstance, FileError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let has = |key: &str| value.get(key).is_some();
    if has("A0") {
        read_bilinear(text)
    } else if has("nodes") {
        Ok(read_truss(text)?.1)
    } else if has("contacts") {
        Ok(read_grasp(text)?.instance)
    } else {
        Err(crate::model::io::field_err(
            "<root>",
            "cannot tell the file format: expected one of the keys `A0`, `nodes`, `contacts`",
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_catalog_id_builds() {
        for id in catalog_ids() {
            let p = catalog_instance(id).unwrap();
            assert!(p.x_box().is_some(), "{id} has no box");
            assert!(p.y_hint().is_some(), "{id} has no bracket");
        }
        assert!(matches!(catalog_instance("nope"), Err(ProblemError::UnknownId(_))));
    }

    #[test]
    fn catalog_derivatives_match_finite_differences() {
        for id in catalog_ids() {
            let p = catalog_instance(id).unwrap();
            let pts = p.sample_points(10, 7).unwrap();
            let c = p.derivative_check(&pts, 1e-6).unwrap();
            assert!(c.max_rel_error <= 1e-4, "{id}: {c:?}");
        }
    }

    #[test]
    fn file_format_detection() {
        let err = read_problem(r#"{"foo": 1}"#).unwrap_err();
        assert!(err.to_string().contains("A0"));
        let err = read_problem("{\n\"nodes\": [[0, 0]],\n").unwrap_err();
        assert!(matches!(err, FileError::Syntax { .. }));
    }
}
