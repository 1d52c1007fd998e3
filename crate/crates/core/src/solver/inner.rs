//! Inner problem: for fixed `y`, maximize the feasibility margin
//! `t(x) = min(λ_min(A(x, y)), λ_min(B(x)))` over the box.
//!
//! `t` is concave but nonsmooth where eigenvalues cross, so it is replaced by
//! the soft minimum over the stacked eigenvalues of `diag(A, B)`,
//!
//! ```text
//! φ_μ(x) = −μ log Σₖ exp(−λₖ/μ),      t − μ log n ≤ φ_μ ≤ t,
//! ```
//!
//! and maximized by projected Newton steps for a decreasing sequence of `μ`.
//! Derivatives use the spectral chain rule: with softmin weights `wₖ` and
//! `F̃ⱼ = Qᵀ(∂F/∂xⱼ)Q`,
//!
//! ```text
//! ∂φ/∂xⱼ    = Σₖ wₖ F̃ⱼ[k,k]
//! ∂²φ/∂xᵢ∂xⱼ = −(1/μ) Cov_w(diag F̃ᵢ, diag F̃ⱼ)
//!             + Σ_{k≠l} Γₖₗ F̃ᵢ[k,l] F̃ⱼ[k,l] + Σₖ wₖ qₖᵀ(∂²F/∂xᵢ∂xⱼ)qₖ
//! ```
//!
//! with divided differences `Γₖₗ = (wₖ − wₗ)/(λₖ − λₗ)` taken within a block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{hess_index, ProblemInstance, XBox};
use crate::symmat::{SpectralDecomp, SymMat};

use super::SolveError;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerOpts {
    pub mu_start: f64,
    pub mu_final: f64,
    /// Ratio between consecutive smoothing levels.
    pub mu_factor: f64,
    /// Newton iterations allowed per smoothing level.
    pub max_iter: usize,
    /// Extra random starting points drawn from the box.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for InnerOpts {
    fn default() -> Self {
        Self {
            mu_start: 1e-1,
            mu_final: 1e-10,
            mu_factor: 10.0,
            max_iter: 100,
            restarts: 0,
            seed: 0,
        }
    }
}

impl InnerOpts {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: &str| Err(SolveError::InvalidOptions(msg.into()));
        if !(self.mu_final > 0.0 && self.mu_start > 0.0) {
            return bad("smoothing levels must be positive");
        }
        if !(self.mu_factor > 1.0) {
            return bad("mu_factor must exceed 1");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        Ok(())
    }

    fn schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut mu = self.mu_start;
        while mu > self.mu_final * (1.0 + 1e-9) {
            out.push(mu);
            mu /= self.mu_factor;
        }
        out.push(self.mu_final);
        out
    }
}

/// Result of one inner maximization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerResult {
    pub x: Vec<f64>,
    /// Exact margin at `x`.
    pub t: f64,
    /// Smoothed margin at `x` for the final `μ`.
    pub phi: f64,
    pub iterations: usize,
    /// `false` if the final smoothing level hit its iteration cap.
    pub exact: bool,
}

struct Point {
    x: Vec<f64>,
    spec_a: SpectralDecomp,
    spec_b: SpectralDecomp,
    t: f64,
    phi: f64,
}

fn soft_min(values: impl Iterator<Item = f64> + Clone, mu: f64) -> (f64, f64) {
    let t = values.clone().fold(f64::INFINITY, f64::min);
    let s: f64 = values.map(|l| (-(l - t) / mu).exp()).sum();
    (t - mu * s.ln(), t)
}

fn evaluate(p: &ProblemInstance, x: Vec<f64>, y: f64, mu: f64) -> Result<Point, SolveError> {
    let spec_a = p.eval_a(&x, y)?.eigh()?;
    let spec_b = p.eval_b(&x)?.eigh()?;
    let vals = spec_a.eigenvalues().iter().chain(spec_b.eigenvalues()).copied();
    let (phi, t) = soft_min(vals, mu);
    let n = (spec_a.dim() + spec_b.dim()) as f64;
    let slack = 1e-12 * (1.0 + t.abs());
    debug_assert!(
        phi <= t + slack && phi >= t - mu * n.ln() - slack,
        "surrogate sandwich violated: t = {t}, phi = {phi}, mu = {mu}"
    );
    Ok(Point {
        x,
        spec_a,
        spec_b,
        t,
        phi,
    })
}

impl Point {
    fn rescore(&mut self, mu: f64) {
        let vals = self.spec_a.eigenvalues().iter().chain(self.spec_b.eigenvalues()).copied();
        self.phi = soft_min(vals, mu).0;
    }
}

/// Gradient and Hessian of `φ_μ` at `pt`.
fn derivatives(p: &ProblemInstance, pt: &Point, y: f64, mu: f64) -> Result<(Vec<f64>, SymMat), SolveError> {
    let m = p.m();
    let grads = p.eval_gradients(&pt.x, y)?;
    let hess_a = p.func().hess_x_a(&pt.x, y);
    let hess_b = p.func().hess_x_b(&pt.x);

    let weights: Vec<f64> = {
        let raw: Vec<f64> = pt
            .spec_a
            .eigenvalues()
            .iter()
            .chain(pt.spec_b.eigenvalues())
            .map(|l| (-(l - pt.t) / mu).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };

    let mut diag: Vec<Vec<f64>> = vec![Vec::with_capacity(weights.len()); m];
    let mut h = SymMat::zeros(m);
    let mut offset = 0;
    for (spec, fs, hs) in [
        (&pt.spec_a, &grads.grad_a, &hess_a),
        (&pt.spec_b, &grads.grad_b, &hess_b),
    ] {
        let n = spec.dim();
        let w = &weights[offset..offset + n];
        let lam = spec.eigenvalues();
        let tilde: Vec<SymMat> = fs.iter().map(|f| f.congruence(spec.eigenvector_matrix(), n)).collect();
        for (j, tj) in tilde.iter().enumerate() {
            diag[j].extend((0..n).map(|k| tj.get(k, k)));
        }
        // off-diagonal divided differences, stable for nearly equal eigenvalues
        let mut gamma = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..k {
                let (lo, hi) = if lam[k] <= lam[l] { (k, l) } else { (l, k) };
                if w[lo] == 0.0 {
                    continue;
                }
                let r = (lam[hi] - lam[lo]) / mu;
                let ratio = if r > 1e-12 { -(-r).exp_m1() / r } else { 1.0 };
                let g = -(w[lo] / mu) * ratio;
                gamma[k * n + l] = g;
                gamma[l * n + k] = g;
            }
        }
        if gamma.iter().any(|&g| g != 0.0) {
            for i in 0..m {
                for j in 0..=i {
                    let mut acc = 0.0;
                    for k in 0..n {
                        for l in 0..k {
                            let g = gamma[k * n + l];
                            if g != 0.0 {
                                acc += 2.0 * g * tilde[i].get(k, l) * tilde[j].get(k, l);
                            }
                        }
                    }
                    h.add_at(i, j, acc);
                }
            }
        }
        if let Some(hs) = hs {
            for i in 0..m {
                for j in 0..=i {
                    let fij = &hs[hess_index(i, j)];
                    let acc: f64 = (0..n)
                        .filter(|&k| w[k] > 0.0)
                        .map(|k| w[k] * fij.quad_form(spec.eigenvector(k)))
                        .sum();
                    h.add_at(i, j, acc);
                }
            }
        }
        offset += n;
    }

    let grad: Vec<f64> = diag
        .iter()
        .map(|d| d.iter().zip(&weights).map(|(a, w)| a * w).sum())
        .collect();
    for i in 0..m {
        for j in 0..=i {
            let cov: f64 = weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(k, &w)| w * (diag[i][k] - grad[i]) * (diag[j][k] - grad[j]))
                .sum();
            h.add_at(i, j, -cov / mu);
        }
    }
    Ok((grad, h))
}

fn at_bound(x: f64, g: f64, lo: f64, hi: f64) -> bool {
    let eps = 1e-14 * (1.0 + lo.abs().max(hi.abs()));
    (x <= lo + eps && g <= 0.0) || (x >= hi - eps && g >= 0.0)
}

/// Regularized Newton direction on the free coordinates.
fn newton_direction(grad: &[f64], h: &SymMat, free: &[usize]) -> Option<Vec<f64>> {
    let k = free.len();
    let neg = SymMat::from_fn(k, |a, b| -h.get(free[a], free[b]));
    let scale = (0..k).map(|a| neg.get(a, a).abs()).fold(0.0, f64::max).max(1e-300);
    let rhs: Vec<f64> = free.iter().map(|&j| grad[j]).collect();
    let mut rho = 0.0;
    for attempt in 0..9 {
        let mut reg = neg.clone();
        for a in 0..k {
            reg.add_at(a, a, rho);
        }
        if let Ok(l) = reg.chol() {
            let d = l.solve(&rhs);
            if d.iter().all(|v| v.is_finite()) {
                let mut full = vec![0.0; grad.len()];
                for (a, &j) in free.iter().enumerate() {
                    full[j] = d[a];
                }
                return Some(full);
            }
        }
        rho = if attempt == 0 { 1e-12 * scale } else { rho * 100.0 };
    }
    None
}

/// Projected Armijo search along `dir`. Returns the accepted point.
fn line_search(
    p: &ProblemInstance,
    xbox: Option<&XBox>,
    current: &Point,
    grad: &[f64],
    dir: &[f64],
    y: f64,
    mu: f64,
) -> Result<Option<Point>, SolveError> {
    let mut alpha = 1.0;
    for _ in 0..MAX_HALVINGS {
        let mut trial: Vec<f64> = current.x.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
        if let Some(b) = xbox {
            b.project(&mut trial);
        }
        let step: Vec<f64> = trial.iter().zip(&current.x).map(|(a, b)| a - b).collect();
        if step.iter().all(|s| *s == 0.0) {
            return Ok(None);
        }
        let predicted: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let cand = evaluate(p, trial, y, mu)?;
        if predicted > 0.0 && cand.phi >= current.phi + ARMIJO * predicted {
            return Ok(Some(cand));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

fn maximize_from(p: &ProblemInstance, y: f64, x0: Vec<f64>, opts: &InnerOpts) -> Result<InnerResult, SolveError> {
    let xbox = p.x_box();
    let schedule = opts.schedule();
    let mut pt = evaluate(p, x0, y, schedule[0])?;
    let mut iterations = 0;
    let mut exact = true;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let n_total = (p.n_a() + p.n_b()) as f64;

    for (stage, &mu) in schedule.iter().enumerate() {
        pt.rescore(mu);
        let target = if stage + 1 == schedule.len() {
            1e-20 * (1.0 + pt.phi.abs())
        } else {
            1e-3 * mu * n_total.ln().max(1.0)
        };
        let mut converged = false;
        for _ in 0..opts.max_iter {
            iterations += 1;
            let (grad, h) = derivatives(p, &pt, y, mu)?;
            let free: Vec<usize> = (0..p.m())
                .filter(|&j| match xbox {
                    Some(b) => !at_bound(pt.x[j], grad[j], b.lower[j], b.upper[j]),
                    None => true,
                })
                .collect();
            if free.is_empty() {
                converged = true;
                break;
            }
            let newton = newton_direction(&grad, &h, &free);
            let decrement = newton
                .as_ref()
                .map(|d| grad.iter().zip(d).map(|(g, v)| g * v).sum::<f64>())
                .unwrap_or(f64::INFINITY);
            if decrement.is_finite() && decrement * 0.5 <= target {
                converged = true;
                break;
            }
            let mut next = None;
            if let Some(d) = &newton {
                next = line_search(p, xbox, &pt, &grad, d, y, mu)?;
            }
            if next.is_none() {
                let mut g = grad.clone();
                for j in 0..g.len() {
                    if !free.contains(&j) {
                        g[j] = 0.0;
                    }
                }
                next = line_search(p, xbox, &pt, &grad, &g, y, mu)?;
            }
            match next {
                Some(n) => pt = n,
                None => {
                    // no representable ascent left at this level
                    converged = true;
                    break;
                }
            }
            if best.as_ref().map_or(true, |(_, t)| pt.t > *t) {
                best = Some((pt.x.clone(), pt.t));
            }
        }
        if !converged && stage + 1 == schedule.len() {
            exact = false;
        }
    }

    let (mut x, mut t, mut phi) = (pt.x.clone(), pt.t, pt.phi);
    if let Some((bx, bt)) = best.filter(|(_, bt)| !exact && *bt > t) {
        let final_mu = *schedule.last().expect("schedule is never empty");
        let alt = evaluate(p, bx, y, final_mu)?;
        debug_assert_eq!(alt.t, bt);
        (x, t, phi) = (alt.x, alt.t, alt.phi);
    }
    Ok(InnerResult {
        x,
        t,
        phi,
        iterations,
        exact,
    })
}

/// Maximizes the smoothed margin at level `y` starting from `x0` (projected
/// onto the box), plus `opts.restarts` seeded random starts. Returns the
/// iterate with the largest exact margin.
pub fn feasibility_margin(
    p: &ProblemInstance,
    y: f64,
    x0: &[f64],
    opts: &InnerOpts,
) -> Result<InnerResult, SolveError> {
    opts.validate()?;
    let mut start = x0.to_vec();
    if let Some(b) = p.x_box() {
        b.project(&mut start);
    }
    p.check_point(&start, Some(y))?;
    let mut best = maximize_from(p, y, start, opts)?;
    if opts.restarts > 0 {
        let b = p.require_box()?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            let r = maximize_from(p, y, b.sample(&mut rng), opts)?;
            best.iterations += r.iterations;
            if r.t > best.t {
                best = InnerResult {
                    iterations: best.iterations,
                    ..r
                };
            }
        }
    }
    Ok(best)
}
