//! Planar truss assembly and the fundamental-eigenvalue design problem.
//!
//! With stiffness `K(x) = Σ xⱼKⱼ` and mass `M(x) = M₀ + Σ xⱼMⱼ`, maximizing the
//! smallest generalized eigenvalue `λ` of `(K(x), M(x))` under a volume budget
//! becomes, with `y = −λ`,
//!
//! ```text
//! minimize y   s.t.   K(x) + y·M(x) ⪰ 0,   xⱼ ≥ x_min,   lᵀx ≤ V₀.
//! ```
//!
//! Bars use the linear two-node element; masses are lumped, half of each
//! bar's mass to each end node.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::io::{field_err, FileError};
use crate::model::{BilinearAffineForm, ProblemInstance, XBox};
use crate::symmat::{gen_eig_min, LinalgError, SymMat};

use super::ProblemError;

/// Geometry, material and design limits of a planar truss. Degree of freedom
/// `2k` is the horizontal and `2k + 1` the vertical displacement of node `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrussModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<[f64; 2]>,
    pub bars: Vec<[usize; 2]>,
    #[serde(rename = "E")]
    pub young_modulus: f64,
    pub rho: f64,
    /// Nonstructural mass attached to each node.
    pub node_mass: Vec<f64>,
    pub fixed_dofs: Vec<usize>,
    pub x_min: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
}

impl TrussModel {
    /// Nodes `(0, 0)` and `(2, 0)` pinned, free node `(1, 1)` carrying mass 0.5;
    /// `E = ρ = 1`, `x_min = 0.05`, `V₀ = √2`.
    pub fn two_bar() -> Self {
        Self {
            name: Some("truss-2bar".into()),
            nodes: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]],
            bars: vec![[0, 2], [1, 2]],
            young_modulus: 1.0,
            rho: 1.0,
            node_mass: vec![0.0, 0.0, 0.5],
            fixed_dofs: vec![0, 1, 2, 3],
            x_min: 0.05,
            v0: std::f64::consts::SQRT_2,
        }
    }

    /// A 2 × 1 grid of unit cells (six nodes), left edge pinned, four chords,
    /// two posts and four diagonals; mass 0.1 on every free node,
    /// `E = ρ = 1`, `x_min = 0.01`, `V₀ = 1`.
    pub fn ten_bar() -> Self {
        Self {
            name: Some("truss-10bar".into()),
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]],
            bars: vec![
                [0, 1],
                [1, 2],
                [3, 4],
                [4, 5],
                [1, 4],
                [2, 5],
                [0, 4],
                [1, 3],
                [1, 5],
                [2, 4],
            ],
            young_modulus: 1.0,
            rho: 1.0,
            node_mass: vec![0.0, 0.1, 0.1, 0.0, 0.1, 0.1],
            fixed_dofs: vec![0, 1, 6, 7],
            x_min: 0.01,
            v0: 1.0,
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("truss")
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.bars
            .iter()
            .map(|&[a, b]| {
                let (p, q) = (self.nodes[a], self.nodes[b]);
                (q[0] - p[0]).hypot(q[1] - p[1])
            })
            .collect()
    }

    /// Unconstrained degrees of freedom in increasing order.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..2 * self.nodes.len())
            .filter(|d| !self.fixed_dofs.contains(d))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |msg: String| Err(ProblemError::Truss(msg));
        let n = self.nodes.len();
        if self.bars.is_empty() {
            return bad("at least one bar is required".into());
        }
        if self.nodes.iter().flatten().any(|v| !v.is_finite()) {
            return bad("node coordinates must be finite".into());
        }
        for (j, &[a, b]) in self.bars.iter().enumerate() {
            if a >= n || b >= n {
                return bad(format!("bar {j} references node {} but there are {n} nodes", a.max(b)));
            }
            if a == b {
                return bad(format!("bar {j} connects node {a} to itself"));
            }
        }
        if let Some(j) = self.lengths().iter().position(|&l| !(l > 0.0)) {
            return bad(format!("bar {j} has zero length"));
        }
        if !(self.young_modulus > 0.0) || !(self.rho > 0.0) {
            return bad("E and rho must be positive".into());
        }
        if self.node_mass.len() != n || self.node_mass.iter().any(|m| !(*m >= 0.0)) {
            return bad(format!("node_mass needs {n} nonnegative entries"));
        }
        if let Some(d) = self.fixed_dofs.iter().find(|&&d| d >= 2 * n) {
            return bad(format!("fixed dof {d} out of range (2 dofs per node, {n} nodes)"));
        }
        let free = self.free_dofs();
        if free.is_empty() {
            return bad("every degree of freedom is fixed".into());
        }
        for &d in &free {
            let node = d / 2;
            let in_bar = self.bars.iter().any(|b| b.contains(&node));
            if !in_bar && self.node_mass[node] == 0.0 {
                return bad(format!("free node {node} has neither a bar nor a mass"));
            }
        }
        if !(self.x_min > 0.0) {
            return bad("x_min must be positive".into());
        }
        let min_volume = self.x_min * self.lengths().iter().sum::<f64>();
        if !(self.v0 >= min_volume) {
            return bad(format!("V0 = {} is below x_min * sum(l) = {min_volume}", self.v0));
        }
        Ok(())
    }
}

/// Per-unit-area element matrices restricted to the free dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrussMatrices {
    pub k: Vec<SymMat>,
    pub m: Vec<SymMat>,
    pub m0: SymMat,
    pub lengths: Vec<f64>,
}

impl TrussMatrices {
    pub fn stiffness(&self, x: &[f64]) -> SymMat {
        combine(SymMat::zeros(self.m0.dim()), &self.k, x)
    }

    pub fn mass(&self, x: &[f64]) -> SymMat {
        combine(self.m0.clone(), &self.m, x)
    }

    /// `λ_min(K(x), M(x))`.
    pub fn fundamental_eigenvalue(&self, x: &[f64]) -> Result<f64, LinalgError> {
        gen_eig_min(&self.stiffness(x), &self.mass(x))
    }
}

fn combine(mut acc: SymMat, terms: &[SymMat], x: &[f64]) -> SymMat {
    for (t, &xj) in terms.iter().zip(x) {
        acc = acc.axpy(xj, t).expect("element matrices share one dimension");
    }
    acc
}

pub fn assemble_truss_matrices(t: &TrussModel) -> Result<TrussMatrices, ProblemError> {
    t.validate()?;
    let free = t.free_dofs();
    let n = free.len();
    let slot = |dof: usize| free.iter().position(|&d| d == dof);
    let lengths = t.lengths();
    let mut ks = Vec::with_capacity(t.bars.len());
    let mut ms = Vec::with_capacity(t.bars.len());
    for (&[a, b], &l) in t.bars.iter().zip(&lengths) {
        let (p, q) = (t.nodes[a], t.nodes[b]);
        let cos = [(q[0] - p[0]) / l, (q[1] - p[1]) / l];
        let mut d = vec![0.0; n];
        let mut lump = vec![0.0; n];
        for axis in 0..2 {
            if let Some(s) = slot(2 * a + axis) {
                d[s] = -cos[axis];
                lump[s] = 1.0;
            }
            if let Some(s) = slot(2 * b + axis) {
                d[s] = cos[axis];
                lump[s] = 1.0;
            }
        }
        ks.push(SymMat::outer(&d).scale(t.young_modulus / l));
        let half = t.rho * l / 2.0;
        ms.push(SymMat::from_diag(&lump.iter().map(|v| v * half).collect::<Vec<_>>()));
    }
    let m0 = SymMat::from_diag(&free.iter().map(|&d| t.node_mass[d / 2]).collect::<Vec<_>>());
    Ok(TrussMatrices {
        k: ks,
        m: ms,
        m0,
        lengths,
    })
}

/// `A(x, y) = K(x) + y·M(x)`, `B(x) = diag(x₁ − x_min, …, x_m − x_min, V₀ − lᵀx)`.
pub fn make_truss_problem(t: &TrussModel) -> Result<ProblemInstance, ProblemError> {
    let mats = assemble_truss_matrices(t)?;
    let nbar = t.bars.len();
    let n = mats.m0.dim();
    let l = &mats.lengths;

    let mut b0 = vec![-t.x_min; nbar];
    b0.push(t.v0);
    let bj = (0..nbar)
        .map(|j| {
            let mut d = vec![0.0; nbar + 1];
            d[j] = 1.0;
            d[nbar] = -l[j];
            SymMat::from_diag(&d)
        })
        .collect();
    let form = BilinearAffineForm::new(
        SymMat::zeros(n),
        mats.k.clone(),
        mats.m0.clone(),
        mats.m.clone(),
        SymMat::from_diag(&b0),
        bj,
    )?;

    let total: f64 = l.iter().sum();
    let upper: Vec<f64> = l
        .iter()
        .map(|&lj| (t.v0 - t.x_min * (total - lj)) / lj)
        .collect();
    let x_box = XBox::new(vec![t.x_min; nbar], upper)?;

    // Rayleigh quotient at a unit vector: λ_min ≤ Kᵢᵢ/Mᵢᵢ ≤ maxⱼ 2E/(ρ lⱼ²)
    let l_min = l.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = 2.0 * t.young_modulus / (t.rho * l_min * l_min);
    Ok(ProblemInstance::new(
        t.name(),
        Arc::new(form),
        Some(x_box),
        Some((-1.1 * bound, 0.0)),
    )?)
}

/// Parses a truss file and builds its problem instance.
pub fn read_truss(text: &str) -> Result<(TrussModel, ProblemInstance), FileError> {
    let model: TrussModel = serde_json::from_str(text)?;
    let instance = make_truss_problem(&model).map_err(|e| match e {
        ProblemError::Truss(msg) => field_err(truss_field(&msg), msg),
        other => field_err("<truss>", other.to_string()),
    })?;
    Ok((model, instance))
}

fn truss_field(msg: &str) -> &'static str {
    [
        ("bar", "bars"),
        ("node_mass", "node_mass"),
        ("fixed dof", "fixed_dofs"),
        ("degree of freedom", "fixed_dofs"),
        ("x_min", "x_min"),
        ("V0", "V0"),
        ("E and rho", "E"),
        ("node", "nodes"),
    ]
    .iter()
    .find(|(needle, _)| msg.contains(needle))
    .map_or("<truss>", |(_, f)| f)
}
