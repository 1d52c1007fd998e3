use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{grid_search, GridSpec, OracleError};
use crate::model::ProblemInstance;
use crate::par::Execution;
use crate::problems::catalog_instance;

const FINGERPRINT_POINTS: usize = 8;

/// Hex SHA-256 of `A` and `B` evaluated at a fixed set of sample points, so a
/// fixture can tell when the instance it was computed for has changed.
pub fn fingerprint(p: &ProblemInstance) -> Result<String, OracleError> {
    let mut h = Sha256::new();
    h.update(p.name.as_bytes());
    for (x, y) in p.sample_points(FINGERPRINT_POINTS, 0)? {
        for v in p.eval_a(&x, y)?.packed().iter().chain(p.eval_b(&x)?.packed()) {
            // ten significant digits
            h.update(format!("{v:.9e};").as_bytes());
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub oracle_y: f64,
    pub oracle_x: Vec<f64>,
    pub grid_spec: GridSpec,
    pub checksum: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixtureSet(pub BTreeMap<String, Fixture>);

/// Grid used for the reference value of a catalog instance; `None` when the
/// instance is too large to grid.
pub fn default_grid(id: &str) -> Result<Option<GridSpec>, OracleError> {
    let step = match id {
        "fractional" | "truss-2bar" | "grasp-2finger" => 1e-3,
        "sqrt" | "norm-quadratic" | "minimax" | "strict-concave" => 1e-2,
        _ => return Ok(None),
    };
    let p = catalog_instance(id)?;
    let b = p.require_box()?;
    Ok(Some(GridSpec::over_box(b, step)?))
}

impl FixtureSet {
    /// Grid-search references for `ids`, skipping those without a default grid.
    pub fn compute(ids: &[&str], exec: Execution) -> Result<Self, OracleError> {
        let mut out = BTreeMap::new();
        for &id in ids {
            let Some(grid) = default_grid(id)? else { continue };
            let p = catalog_instance(id)?;
            let r = grid_search(&p, &grid, exec)?;
            out.insert(
                id.to_string(),
                Fixture {
                    oracle_y: r.y,
                    oracle_x: r.x,
                    grid_spec: grid,
                    checksum: fingerprint(&p)?,
                },
            );
        }
        Ok(Self(out))
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixtures serialize") + "\n"
    }

    /// The fixture for `id`, provided its checksum still matches `p`.
    pub fn checked(&self, id: &str, p: &ProblemInstance) -> Result<&Fixture, OracleError> {
        let f = self
            .0
            .get(id)
            .ok_or_else(|| OracleError::InvalidInput(format!("no fixture for '{id}'")))?;
        let now = fingerprint(p)?;
        if now != f.checksum {
            return Err(OracleError::InvalidInput(format!(
                "fixture for '{id}' is stale (checksum {} vs {now}); regenerate it",
                f.checksum
            )));
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_discriminating() {
        let a = catalog_instance("fractional").unwrap();
        assert_eq!(fingerprint(&a).unwrap(), fingerprint(&a).unwrap());
        assert_eq!(fingerprint(&a).unwrap().len(), 64);
        let b = catalog_instance("sqrt").unwrap();
        assert_ne!(fingerprint(&a).unwrap(), fingerprint(&b).unwrap());
    }

    #[test]
    fn round_trip_and_staleness() {
        let set = FixtureSet::compute(&["fractional"], Execution::Sequential).unwrap();
        let back = FixtureSet::parse(&set.to_json()).unwrap();
        assert_eq!(set, back);
        let p = catalog_instance("fractional").unwrap();
        assert!(back.checked("fractional", &p).is_ok());
        let other = catalog_instance("sqrt").unwrap();
        assert!(back.checked("fractional", &other).is_err());
        assert!(back.checked("sqrt", &other).is_err());
    }

    #[test]
    fn large_instances_have_no_grid() {
        assert!(default_grid("truss-10bar").unwrap().is_none());
    }
}
