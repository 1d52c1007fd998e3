//! Grasping-force optimization with contact forces eliminated onto the
//! equilibrium manifold.
//!
//! Contact `i` has position `pᵢ`, inward unit normal `bᵢ`, force `xᵢ ∈ ℝ³` and
//! tangential projector `Aᵢ = I − bᵢbᵢᵀ`. The forces must balance the external
//! load:
//!
//! ```text
//! Σ xᵢ + f_ext = 0,     Σ pᵢ × xᵢ + T_ext = 0.
//! ```
//!
//! Writing `x = x_p + N z` (minimum-norm particular solution plus an
//! orthonormal null-space basis) removes the equalities. Each contact then
//! contributes the block
//!
//! ```text
//! ⎡ y·bᵢᵀxᵢ·I₃   Aᵢxᵢ  ⎤
//! ⎣ xᵢᵀAᵢᵀ       bᵢᵀxᵢ ⎦ ⪰ 0,
//! ```
//!
//! which by a Schur complement means `‖Aᵢxᵢ‖² ≤ y·(bᵢᵀxᵢ)²`: the optimal `y` is
//! the square of the smallest achievable friction ratio. Normal forces are
//! kept in `[ε_n, f_max]` so the problem has an attained, strictly feasible
//! optimum.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dense::{min_norm_lstsq, null_space, Mat};
use crate::model::io::{field_err, FileError};
use crate::model::{BilinearAffineForm, ProblemInstance, XBox};
use crate::symmat::SymMat;

use super::ProblemError;

fn default_eps_n() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contact {
    pub p: [f64; 3],
    /// Unit normal pointing into the object.
    pub b: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub contacts: Vec<Contact>,
    pub f_ext: [f64; 3],
    #[serde(rename = "T_ext")]
    pub t_ext: [f64; 3],
    pub f_max: f64,
    #[serde(default = "default_eps_n")]
    pub eps_n: f64,
}

impl GraspSpec {
    /// Fingers at `(∓1, 0, 0)` pressing inward along `±e₁`, a downward load of
    /// size `load`, no external torque.
    pub fn two_finger(load: f64, f_max: f64) -> Self {
        Self {
            name: Some("grasp-2finger".into()),
            contacts: vec![
                Contact {
                    p: [-1.0, 0.0, 0.0],
                    b: [1.0, 0.0, 0.0],
                },
                Contact {
                    p: [1.0, 0.0, 0.0],
                    b: [-1.0, 0.0, 0.0],
                },
            ],
            f_ext: [0.0, 0.0, -load],
            t_ext: [0.0; 3],
            f_max,
            eps_n: default_eps_n(),
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |msg: String| Err(ProblemError::Grasp(msg));
        if self.contacts.len() < 2 {
            return bad("at least two contacts are required".into());
        }
        for (i, c) in self.contacts.iter().enumerate() {
            let norm = c.b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= 1e-12) {
                return bad(format!("contact {i}: normal has length {norm}, expected 1"));
            }
            if c.p.iter().any(|v| !v.is_finite()) {
                return bad(format!("contact {i}: non-finite position"));
            }
        }
        if !(self.f_max > 0.0) {
            return bad("f_max must be positive".into());
        }
        if !(self.eps_n > 0.0 && self.eps_n < self.f_max) {
            return bad(format!("eps_n must lie in (0, f_max), got {}", self.eps_n));
        }
        if self.f_ext.iter().chain(&self.t_ext).any(|v| !v.is_finite()) {
            return bad("non-finite external load".into());
        }
        Ok(())
    }

    fn equilibrium_matrix(&self) -> Mat {
        let n = self.contacts.len();
        let mut e = Mat::zeros(6, 3 * n);
        for (i, c) in self.contacts.iter().enumerate() {
            let p = c.p;
            let skew = [[0.0, -p[2], p[1]], [p[2], 0.0, -p[0]], [-p[1], p[0], 0.0]];
            for r in 0..3 {
                e.set(r, 3 * i + r, 1.0);
                for k in 0..3 {
                    e.set(3 + r, 3 * i + k, skew[r][k]);
                }
            }
        }
        e
    }
}

fn dot3(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// A grasp instance together with its force parameterization.
#[derive(Debug, Clone)]
pub struct GraspProblem {
    pub spec: GraspSpec,
    /// Minimum-norm forces balancing the load, stacked per contact.
    pub x_p: Vec<f64>,
    /// Orthonormal null-space basis of the equilibrium map, column-major `3n × k`.
    pub null_basis: Vec<f64>,
    pub k: usize,
    /// Numerical rank of the 6 × 3n equilibrium map.
    pub rank: usize,
    /// `rank < 6`: the contact geometry cannot resist every load direction.
    pub rank_deficient: bool,
    pub instance: ProblemInstance,
}

impl GraspProblem {
    /// Stacked contact forces `x_p + N z`.
    pub fn forces(&self, z: &[f64]) -> Vec<f64> {
        let n3 = self.x_p.len();
        let mut x = self.x_p.clone();
        for (c, &zc) in z.iter().enumerate() {
            for (xi, ni) in x.iter_mut().zip(&self.null_basis[c * n3..(c + 1) * n3]) {
                *xi += zc * ni;
            }
        }
        x
    }

    /// `‖Σxᵢ + f_ext‖ + ‖Σpᵢ×xᵢ + T_ext‖`.
    pub fn equilibrium_residual(&self, z: &[f64]) -> f64 {
        let x = self.forces(z);
        let mut r = self.spec.equilibrium_matrix().mul_vec(&x);
        for (ri, w) in r.iter_mut().zip(self.spec.f_ext.iter().chain(&self.spec.t_ext)) {
            *ri += w;
        }
        r[..3].iter().map(|v| v * v).sum::<f64>().sqrt() + r[3..].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `maxᵢ ‖Aᵢxᵢ‖ / bᵢᵀxᵢ`, or `None` when some normal force is not positive.
    pub fn max_friction_ratio(&self, z: &[f64]) -> Option<f64> {
        let x = self.forces(z);
        let mut worst: f64 = 0.0;
        for (i, c) in self.spec.contacts.iter().enumerate() {
            let xi = &x[3 * i..3 * i + 3];
            let normal = dot3(&c.b, xi);
            if !(normal > 0.0) {
                return None;
            }
            let tangential: f64 = (0..3)
                .map(|r| xi[r] - c.b[r] * normal)
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            worst = worst.max(tangential / normal);
        }
        Some(worst)
    }

    /// Normal forces of all contacts lie in `[ε_n, f_max]`.
    pub fn normals_admissible(&self, z: &[f64]) -> bool {
        let x = self.forces(z);
        self.spec.contacts.iter().enumerate().all(|(i, c)| {
            let v = dot3(&c.b, &x[3 * i..3 * i + 3]);
            v >= self.spec.eps_n && v <= self.spec.f_max
        })
    }

    /// Friction coefficient represented by an objective value `y`.
    pub fn friction_from_y(y: f64) -> f64 {
        y.max(0.0).sqrt()
    }
}

pub fn make_grasp_problem(g: &GraspSpec) -> Result<GraspProblem, ProblemError> {
    g.validate()?;
    let n = g.contacts.len();
    let e = g.equilibrium_matrix();
    let rhs: Vec<f64> = g.f_ext.iter().chain(&g.t_ext).map(|v| -v).collect();
    let x_p = min_norm_lstsq(&e, &rhs, 1e-12)?;
    let resid: f64 = e
        .mul_vec(&x_p)
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = 1.0 + rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if resid > 1e-10 * scale {
        return Err(ProblemError::Grasp(format!(
            "equilibrium equations are inconsistent for this load (residual {resid:e})"
        )));
    }
    let (null_basis, k, rank) = null_space(&e, 1e-12)?;
    if k == 0 {
        return Err(ProblemError::Grasp("contact forces are fully determined; nothing to optimize".into()));
    }
    let n3 = 3 * n;
    let col = |c: usize| &null_basis[c * n3..(c + 1) * n3];

    let mut a0 = Vec::with_capacity(n);
    let mut c0 = Vec::with_capacity(n);
    let mut b0 = Vec::with_capacity(2 * n);
    let mut aj: Vec<Vec<SymMat>> = vec![Vec::with_capacity(n); k];
    let mut cj: Vec<Vec<SymMat>> = vec![Vec::with_capacity(n); k];
    let mut bj: Vec<Vec<f64>> = vec![Vec::with_capacity(2 * n); k];
    // (A-part, C-part) of one contact block for the force vector v
    let block = |b: &[f64; 3], v: &[f64]| -> (SymMat, SymMat) {
        let normal = dot3(b, v);
        let mut a = SymMat::zeros(4);
        for r in 0..3 {
            a.set(3, r, v[r] - b[r] * normal);
        }
        a.set(3, 3, normal);
        let mut c = SymMat::zeros(4);
        for r in 0..3 {
            c.set(r, r, normal);
        }
        (a, c)
    };
    for (i, contact) in g.contacts.iter().enumerate() {
        let (a, c) = block(&contact.b, &x_p[3 * i..3 * i + 3]);
        a0.push(a);
        c0.push(c);
        let normal = dot3(&contact.b, &x_p[3 * i..3 * i + 3]);
        b0.extend([g.f_max - normal, normal - g.eps_n]);
        for j in 0..k {
            let v = &col(j)[3 * i..3 * i + 3];
            let (a, c) = block(&contact.b, v);
            aj[j].push(a);
            cj[j].push(c);
            let dn = dot3(&contact.b, v);
            bj[j].extend([-dn, dn]);
        }
    }
    let form = BilinearAffineForm::new(
        SymMat::block_diag(&a0),
        aj.iter().map(|blocks| SymMat::block_diag(blocks)).collect(),
        SymMat::block_diag(&c0),
        cj.iter().map(|blocks| SymMat::block_diag(blocks)).collect(),
        SymMat::from_diag(&b0),
        bj.iter().map(|d| SymMat::from_diag(d)).collect(),
    )?;
    let radius = x_p.iter().map(|v| v * v).sum::<f64>().sqrt() + 2.0 * (n as f64).sqrt() * g.f_max;
    let instance = ProblemInstance::new(
        g.name.as_deref().unwrap_or("grasp"),
        Arc::new(form),
        Some(XBox::uniform(k, -radius, radius)?),
        Some((-1.0, 1.0)),
    )?;
    Ok(GraspProblem {
        spec: g.clone(),
        x_p,
        null_basis,
        k,
        rank,
        rank_deficient: rank < 6,
        instance,
    })
}

/// Parses a grasp file and builds the problem.
pub fn read_grasp(text: &str) -> Result<GraspProblem, FileError> {
    let spec: GraspSpec = serde_json::from_str(text)?;
    make_grasp_problem(&spec).map_err(|e| {
        let msg = e.to_string();
        let field = if msg.contains("contact") || msg.contains("normal") {
            "contacts"
        } else if msg.contains("f_max") {
            "f_max"
        } else if msg.contains("eps_n") {
            "eps_n"
        } else {
            "f_ext"
        };
        field_err(field, msg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_finger_parameterization() {
        let g = make_grasp_problem(&GraspSpec::two_finger(1.0, 10.0)).unwrap();
        assert_eq!(g.rank, 5);
        assert!(g.rank_deficient);
        assert_eq!(g.k, 1);
        assert_eq!((g.instance.n_a(), g.instance.n_b()), (8, 4));
        // the only free direction squeezes both fingers equally
        let x = g.forces(&[1.0]);
        assert!((x[0] + x[3]).abs() < 1e-12);
        assert!((x[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn elimination_satisfies_equilibrium_for_any_z() {
        let g = make_grasp_problem(&GraspSpec::two_finger(1.0, 10.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let z: Vec<f64> = (0..g.k).map(|_| rng.gen_range(-100.0..100.0)).collect();
            assert!(g.equilibrium_residual(&z) <= 1e-10);
        }
    }

    #[test]
    fn lmi_matches_squared_ratio() {
        let g = make_grasp_problem(&GraspSpec::two_finger(1.0, 10.0)).unwrap();
        let p = &g.instance;
        let bx = p.x_box().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 20 {
            let z = bx.sample(&mut rng);
            let Some(r) = g.max_friction_ratio(&z) else { continue };
            let a_above = p.eval_a(&z, r * r * 1.001).unwrap().min_eigenvalue().unwrap();
            let a_below = p.eval_a(&z, r * r * 0.999).unwrap().min_eigenvalue().unwrap();
            assert!(a_above >= -1e-12 && a_below < 0.0, "z = {z:?}");
            checked += 1;
        }
    }

    #[test]
    fn normal_floor_keeps_contacts_pressed() {
        let g = make_grasp_problem(&GraspSpec::two_finger(1.0, 10.0)).unwrap();
        let bx = g.instance.x_box().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let z = bx.sample(&mut rng);
            if g.instance.eval_b(&z).unwrap().min_eigenvalue().unwrap() >= 0.0 {
                assert!(g.normals_admissible(&z));
                assert!(g.max_friction_ratio(&z).is_some());
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = GraspSpec::two_finger(1.0, 10.0);
        s.contacts[0].b = [2.0, 0.0, 0.0];
        assert!(make_grasp_problem(&s).is_err());
        let mut s = GraspSpec::two_finger(1.0, 10.0);
        s.contacts.pop();
        assert!(make_grasp_problem(&s).is_err());
        // a torque about the finger axis cannot be balanced
        let mut s = GraspSpec::two_finger(1.0, 10.0);
        s.t_ext = [1.0, 0.0, 0.0];
        assert!(matches!(make_grasp_problem(&s), Err(ProblemError::Grasp(m)) if m.contains("inconsistent")));
    }

    #[test]
    fn grasp_file() {
        let text = serde_json::to_string(&GraspSpec::two_finger(1.0, 10.0)).unwrap();
        assert!(text.contains("\"T_ext\""));
        let g = read_grasp(&text).unwrap();
        assert_eq!(g.k, 1);
        let err = read_grasp(&text.replace("\"f_max\":10.0", "\"f_max\":-1.0")).unwrap_err();
        assert!(matches!(err, FileError::Field { ref field, .. } if field == "f_max"), "{err}");
    }
}
