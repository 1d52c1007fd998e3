use serde::Serialize;

use super::{GridSpec, OracleError, GRID_LIMIT};
use crate::problems::GraspProblem;

/// Smallest friction coefficient holding the symmetric two-finger grasp:
/// each finger carries `load / 2` tangentially against a normal force of at
/// most `f_max`.
pub fn grasp_analytic_two_finger(load: f64, f_max: f64) -> Result<f64, OracleError> {
    if !(load >= 0.0 && load.is_finite()) || !(f_max > 0.0 && f_max.is_finite()) {
        return Err(OracleError::InvalidInput(format!("need load >= 0 and f_max > 0, got {load}, {f_max}")));
    }
    Ok(0.5 * load / f_max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraspOracle {
    pub friction: f64,
    pub z: Vec<f64>,
    pub forces: Vec<f64>,
    pub points: u64,
}

/// Minimum of the largest tangential-to-normal ratio over a grid of the
/// equilibrium parametrization, restricted to admissible normal forces.
pub fn grasp_brute_force(g: &GraspProblem, step: f64) -> Result<GraspOracle, OracleError> {
    let b = g.instance.x_box().ok_or_else(|| OracleError::InvalidInput("grasp instance has no box".into()))?;
    let grid = GridSpec::over_box(b, step)?;
    let points = grid.points();
    if points > GRID_LIMIT {
        return Err(OracleError::GridTooLarge { points });
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..points {
        let z = grid.point(i);
        if !g.normals_admissible(&z) {
            continue;
        }
        if let Some(r) = g.max_friction_ratio(&z) {
            if best.as_ref().map_or(true, |(b, _)| r < *b) {
                best = Some((r, z));
            }
        }
    }
    let (friction, z) = best.ok_or(OracleError::Infeasible)?;
    Ok(GraspOracle {
        friction,
        forces: g.forces(&z),
        z,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_grasp_problem, GraspSpec};

    #[test]
    fn analytic_values() {
        assert_eq!(grasp_analytic_two_finger(1.0, 10.0).unwrap(), 0.05);
        assert_eq!(grasp_analytic_two_finger(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(grasp_analytic_two_finger(0.0, 1.0).unwrap(), 0.0);
        assert!(grasp_analytic_two_finger(1.0, 0.0).is_err());
    }

    #[test]
    fn brute_force_matches_statics() {
        for (load, f_max) in [(1.0, 10.0), (1.0, 1.0), (2.0, 5.0)] {
            let g = make_grasp_problem(&GraspSpec::two_finger(load, f_max)).unwrap();
            let r = grasp_brute_force(&g, 1e-4).unwrap();
            let exact = grasp_analytic_two_finger(load, f_max).unwrap();
            assert!((r.friction - exact).abs() <= 1e-4, "{load} {f_max}: {r:?}");
            assert!(g.equilibrium_residual(&r.z) <= 1e-9);
        }
    }
}
