use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::kkt::KktCertificate;
use crate::model::ProblemInstance;
use crate::par::{map_indexed, Execution};

use super::bisection::{bisection_solve, gate, AssumptionGate, SolveOptions, Status};
use super::SolveError;

#[derive(Debug, Clone, PartialEq)]
pub struct MultistartOptions {
    pub starts: usize,
    pub seed: u64,
    pub solve: SolveOptions,
    pub gate: AssumptionGate,
    pub exec: Execution,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0,
            solve: SolveOptions::default(),
            gate: AssumptionGate::default(),
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub index: usize,
    pub x0: Vec<f64>,
    pub status: Option<Status>,
    pub y_star: Option<f64>,
    pub x_star: Option<Vec<f64>>,
    pub accepted: bool,
    pub certificate: Option<KktCertificate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultistartReport {
    pub problem: String,
    pub starts: usize,
    pub seed: u64,
    pub tol_y: f64,
    pub runs: Vec<RunRecord>,
    pub accepted: usize,
    /// `max |yᵢ − yⱼ|` over runs with accepted certificates.
    pub y_spread: Option<f64>,
    /// `max ‖xᵢ − xⱼ‖_∞` over the same runs.
    pub x_spread: Option<f64>,
    /// Indices of runs without an accepted certificate.
    pub uncertified: Vec<usize>,
    pub warnings: Vec<String>,
}

impl MultistartReport {
    pub fn all_accepted(&self) -> bool {
        self.uncertified.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Starting point of run `index`: an independent ChaCha stream per run, so
/// the draw does not depend on which runs execute first.
pub fn start_point(p: &ProblemInstance, seed: u64, index: usize) -> Result<Vec<f64>, SolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    Ok(p.require_box()?.sample(&mut rng))
}

/// Runs `starts` bisection solves from random starting points and compares
/// the certified optima. Individual failures are recorded, not fatal.
pub fn multistart(p: &ProblemInstance, opts: &MultistartOptions) -> Result<MultistartReport, SolveError> {
    if opts.starts < 2 {
        return Err(SolveError::InvalidOptions("multistart needs at least 2 starts".into()));
    }
    let warning = gate(p, &opts.gate)?;
    let starts: Vec<Vec<f64>> = (0..opts.starts)
        .map(|i| start_point(p, opts.seed, i))
        .collect::<Result<_, _>>()?;

    let runs = map_indexed(opts.exec, opts.starts, |i| {
        let mut solve = opts.solve.clone();
        solve.x0 = Some(starts[i].clone());
        solve.inner.seed = opts.seed.wrapping_add(i as u64);
        match bisection_solve(p, &solve) {
            Ok(r) => RunRecord {
                index: i,
                x0: starts[i].clone(),
                status: Some(r.status),
                y_star: Some(r.y_star),
                x_star: Some(r.x_star.clone()),
                accepted: r.accepted(),
                certificate: r.certificate,
                error: r.message,
            },
            Err(e) => RunRecord {
                index: i,
                x0: starts[i].clone(),
                status: None,
                y_star: None,
                x_star: None,
                accepted: false,
                certificate: None,
                error: Some(e.to_string()),
            },
        }
    });

    let good: Vec<&RunRecord> = runs.iter().filter(|r| r.accepted).collect();
    let spread = |f: &dyn Fn(&RunRecord, &RunRecord) -> f64| -> Option<f64> {
        if good.is_empty() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (a, ra) in good.iter().enumerate() {
            for rb in &good[a + 1..] {
                worst = worst.max(f(ra, rb));
            }
        }
        Some(worst)
    };
    let y_spread = spread(&|a, b| (a.y_star.unwrap_or(f64::NAN) - b.y_star.unwrap_or(f64::NAN)).abs());
    let x_spread = spread(&|a, b| {
        let (xa, xb) = (a.x_star.as_deref().unwrap_or(&[]), b.x_star.as_deref().unwrap_or(&[]));
        xa.iter().zip(xb).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    });
    Ok(MultistartReport {
        problem: p.name.clone(),
        starts: opts.starts,
        seed: opts.seed,
        tol_y: opts.solve.tol_y,
        uncertified: runs.iter().filter(|r| !r.accepted).map(|r| r.index).collect(),
        accepted: good.len(),
        runs,
        y_spread,
        x_spread,
        warnings: warning.into_iter().collect(),
    })
}
