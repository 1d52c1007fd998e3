//! JSON problem file for bilinear-affine instances.
//!
//! ```json
//! {
//!   "name": "fractional",
//!   "m": 1, "nA": 1, "nB": 1,
//!   "A0": [[0.0]], "Aj": [[[-1.0]]],
//!   "C0": [[1.0]], "Cj": [[[1.0]]],
//!   "B0": [[0.0]], "Bj": [[[1.0]]],
//!   "x_box": [[0.0, 10.0]],
//!   "y_hint": [-1.0, 2.0]
//! }
//! ```
//!
//! Matrices are lower-triangular row arrays (`[[a00], [a10, a11], ...]`) or
//! flat packed arrays of the same entries.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BilinearAffineForm, ModelError, ProblemInstance, XBox};
use crate::symmat::SymMat;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("malformed JSON at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<serde_json::Error> for FileError {
    fn from(e: serde_json::Error) -> Self {
        FileError::Syntax {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        }
    }
}

pub(crate) fn field_err(field: impl Into<String>, msg: impl Into<String>) -> FileError {
    FileError::Field {
        field: field.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilinearFile {
    #[serde(default)]
    pub name: Option<String>,
    pub m: usize,
    #[serde(rename = "nA")]
    pub n_a: usize,
    #[serde(rename = "nB")]
    pub n_b: usize,
    #[serde(rename = "A0")]
    pub a0: SymMat,
    #[serde(rename = "C0")]
    pub c0: SymMat,
    #[serde(rename = "Aj")]
    pub aj: Vec<SymMat>,
    #[serde(rename = "Cj")]
    pub cj: Vec<SymMat>,
    #[serde(rename = "B0")]
    pub b0: SymMat,
    #[serde(rename = "Bj")]
    pub bj: Vec<SymMat>,
    #[serde(default)]
    pub x_box: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub y_hint: Option<[f64; 2]>,
}

impl BilinearFile {
    pub fn parse(text: &str) -> Result<Self, FileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_instance(self) -> Result<ProblemInstance, FileError> {
        let check_dim = |field: &str, mats: &[&SymMat], n: usize| -> Result<(), FileError> {
            for (k, mat) in mats.iter().enumerate() {
                if mat.dim() != n {
                    return Err(field_err(
                        if mats.len() > 1 { format!("{field}[{k}]") } else { field.to_string() },
                        format!("expected {n}x{n}, got {0}x{0}", mat.dim()),
                    ));
                }
            }
            Ok(())
        };
        for (field, list) in [("Aj", &self.aj), ("Cj", &self.cj), ("Bj", &self.bj)] {
            if list.len() != self.m {
                return Err(field_err(field, format!("expected {} matrices, got {}", self.m, list.len())));
            }
        }
        check_dim("A0", &[&self.a0], self.n_a)?;
        check_dim("C0", &[&self.c0], self.n_a)?;
        check_dim("Aj", &self.aj.iter().collect::<Vec<_>>(), self.n_a)?;
        check_dim("Cj", &self.cj.iter().collect::<Vec<_>>(), self.n_a)?;
        check_dim("B0", &[&self.b0], self.n_b)?;
        check_dim("Bj", &self.bj.iter().collect::<Vec<_>>(), self.n_b)?;

        let x_box = match self.x_box {
            None => None,
            Some(pairs) => {
                if pairs.len() != self.m {
                    return Err(field_err("x_box", format!("expected {} intervals, got {}", self.m, pairs.len())));
                }
                let (lo, hi): (Vec<f64>, Vec<f64>) = pairs.iter().map(|p| (p[0], p[1])).unzip();
                Some(XBox::new(lo, hi).map_err(|e| field_err("x_box", e.to_string()))?)
            }
        };
        let y_hint = self.y_hint.map(|h| (h[0], h[1]));
        if let Some((lo, hi)) = y_hint {
            if !(lo < hi) {
                return Err(field_err("y_hint", format!("need y_lo < y_hi, got ({lo}, {hi})")));
            }
        }
        let form = BilinearAffineForm::new(self.a0, self.aj, self.c0, self.cj, self.b0, self.bj)?;
        Ok(ProblemInstance::new(
            self.name.unwrap_or_else(|| "bilinear".into()),
            Arc::new(form),
            x_box,
            y_hint,
        )?)
    }
}

/// Parses a bilinear problem file into an instance.
pub fn read_bilinear(text: &str) -> Result<ProblemInstance, FileError> {
    BilinearFile::parse(text)?.into_instance()
}
