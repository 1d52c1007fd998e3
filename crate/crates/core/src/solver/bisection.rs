use std::time::Instant;

use serde::Serialize;

use crate::kkt::{verify_kkt, KktCertificate, DEFAULT_KKT_TOL};
use crate::model::{check_assumptions, AssumptionReport, ProblemInstance, Verdict};

use super::inner::{feasibility_margin, InnerOpts, InnerResult};
use super::{SolveError, FEAS_TOL};

const MAX_DOUBLINGS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Converged and certified by an accepted KKT certificate.
    Optimal,
    /// `B(x) ⪰ 0` could not be satisfied anywhere on the box.
    Infeasible,
    /// No feasible level found, or feasibility persists without a lower end.
    BracketFailure,
    /// A level was declared infeasible by an inner solve that hit its cap.
    IterationCap,
    /// Converged, but multiplier recovery rejected the final point.
    Uncertified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub y: f64,
    pub margin: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol_y: f64,
    pub inner: InnerOpts,
    pub kkt_tol: f64,
    /// Starting point of the first inner solve; the box center by default.
    pub x0: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_y: 1e-9,
            inner: InnerOpts::default(),
            kkt_tol: DEFAULT_KKT_TOL,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub problem: String,
    pub status: Status,
    pub x_star: Vec<f64>,
    pub y_star: f64,
    /// Final `[y_lo, y_hi]`: `y_lo` infeasible, `y_hi` feasible.
    pub bracket: (f64, f64),
    pub certificate: Option<KktCertificate>,
    pub probes: usize,
    pub inner_iterations: usize,
    pub warnings: Vec<String>,
    pub message: Option<String>,
    pub trace: Vec<TraceEntry>,
    /// Seconds; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl SolveReport {
    pub fn to_json(&self, include_trace: bool) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if !include_trace {
            if let Some(obj) = v.as_object_mut() {
                obj.remove("trace");
            }
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    pub fn accepted(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.accepted)
    }
}

struct Prober<'a> {
    p: &'a ProblemInstance,
    opts: &'a InnerOpts,
    trace: Vec<TraceEntry>,
    iterations: usize,
}

impl Prober<'_> {
    fn probe(&mut self, y: f64, x0: &[f64]) -> Result<InnerResult, SolveError> {
        let r = feasibility_margin(self.p, y, x0, self.opts)?;
        self.iterations += r.iterations;
        self.trace.push(TraceEntry {
            y,
            margin: r.t,
            iterations: r.iterations,
            feasible: r.t >= -FEAS_TOL,
            exact: r.exact,
        });
        Ok(r)
    }
}

/// Bisection on `y` with warm-started inner solves, polish and certification.
///
/// The bracket comes from the instance's `y` hint (or `[−1, 1]`) and is widened
/// geometrically until its top is feasible and its bottom infeasible. Probing
/// stops once the bracket is narrower than `tol_y / 2`; the polish solve runs at
/// `y_hi + tol_y / 2` and its witness is certified.
pub fn bisection_solve(p: &ProblemInstance, opts: &SolveOptions) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    if !(opts.tol_y > 0.0) {
        return Err(SolveError::InvalidOptions("tol_y must be positive".into()));
    }
    if !(opts.kkt_tol > 0.0) {
        return Err(SolveError::InvalidOptions("kkt_tol must be positive".into()));
    }
    opts.inner.validate()?;
    let x0 = match &opts.x0 {
        Some(x) => x.clone(),
        None => p.require_box()?.center(),
    };
    let (mut lo, mut hi) = p.y_hint().unwrap_or((-1.0, 1.0));
    let width = hi - lo;
    let mut prober = Prober {
        p,
        opts: &opts.inner,
        trace: Vec::new(),
        iterations: 0,
    };
    let feasible = |r: &InnerResult| r.t >= -FEAS_TOL;
    let mut inexact_rejections = 0usize;

    let finish = |prober: Prober, status, x: Vec<f64>, y, bracket, cert, message: Option<String>| SolveReport {
        problem: p.name.clone(),
        status,
        x_star: x,
        y_star: y,
        bracket,
        certificate: cert,
        probes: prober.trace.len(),
        inner_iterations: prober.iterations,
        warnings: Vec::new(),
        message,
        trace: prober.trace,
        wall_time: start.elapsed().as_secs_f64(),
    };

    // top of the bracket must be feasible
    let mut top = prober.probe(hi, &x0)?;
    let mut doublings = 0;
    while !feasible(&top) {
        if doublings == MAX_DOUBLINGS {
            let b_margin = p.eval_b(&top.x)?.min_eigenvalue()?;
            let (status, msg) = if b_margin < -1e-8 {
                (Status::Infeasible, format!("B(x) is not PSD at the best point found (margin {b_margin:e})"))
            } else {
                (Status::BracketFailure, format!("no feasible y up to {hi:e}"))
            };
            return Ok(finish(prober, status, top.x, hi, (lo, hi), None, Some(msg)));
        }
        lo = hi;
        hi += width * 2f64.powi(doublings as i32);
        doublings += 1;
        let x = top.x.clone();
        top = prober.probe(hi, &x)?;
    }

    // bottom must be infeasible
    if doublings == 0 {
        let mut k = 0;
        loop {
            let x = top.x.clone();
            let bottom = prober.probe(lo, &x)?;
            if !feasible(&bottom) {
                if !bottom.exact {
                    inexact_rejections += 1;
                }
                break;
            }
            if k == MAX_DOUBLINGS {
                let msg = format!("feasible down to y = {lo:e}; the problem looks unbounded below");
                return Ok(finish(prober, Status::BracketFailure, bottom.x, lo, (lo, hi), None, Some(msg)));
            }
            hi = lo;
            top = bottom;
            lo -= width * 2f64.powi(k as i32);
            k += 1;
        }
    }

    while hi - lo > 0.5 * opts.tol_y {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let x = top.x.clone();
        let r = prober.probe(mid, &x)?;
        if feasible(&r) {
            hi = mid;
            top = r;
        } else {
            if !r.exact {
                inexact_rejections += 1;
            }
            lo = mid;
        }
    }

    let y_pol = hi + 0.5 * opts.tol_y;
    let x = top.x.clone();
    let pol = prober.probe(y_pol, &x)?;
    let (x_star, y_star) = if feasible(&pol) { (pol.x, y_pol) } else { (top.x, hi) };
    let cert = verify_kkt(p, &x_star, y_star, opts.kkt_tol)?;
    let (status, message) = if cert.accepted {
        (Status::Optimal, None)
    } else if inexact_rejections > 0 {
        (
            Status::IterationCap,
            Some(format!(
                "{inexact_rejections} level(s) were rejected by inner solves that hit the iteration cap; certificate: {}",
                cert.reason.clone().unwrap_or_default()
            )),
        )
    } else {
        (Status::Uncertified, cert.reason.clone())
    };
    Ok(finish(prober, status, x_star, y_star, (lo, hi), Some(cert), message))
}

/// Controls the assumption check run before solving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionGate {
    pub samples: usize,
    pub seed: u64,
    /// Solve even when concavity or monotonicity checks fail.
    pub override_failures: bool,
}

impl Default for AssumptionGate {
    fn default() -> Self {
        Self {
            samples: 200,
            seed: 0,
            override_failures: false,
        }
    }
}

pub(crate) fn failed_checks(r: &AssumptionReport) -> Vec<&'static str> {
    let mut out = Vec::new();
    if r.concavity == Verdict::Fail {
        out.push("concavity/convexity");
    }
    if r.monotonicity == Verdict::Fail {
        out.push("monotonicity (dA/dy positive definite)");
    }
    out
}

/// Runs the sampled assumption check; refuses to solve when it fails unless
/// overridden. Returns the warning to attach to reports, if any.
pub(crate) fn gate(p: &ProblemInstance, g: &AssumptionGate) -> Result<Option<String>, SolveError> {
    let report = check_assumptions(p, g.samples, g.seed)?;
    let failed = failed_checks(&report);
    if failed.is_empty() {
        return Ok(None);
    }
    let mut what = failed.join(", ");
    if let (Some(l), Some((x, y))) = (report.min_dady_eigenvalue, &report.min_dady_point) {
        if report.monotonicity == Verdict::Fail {
            what.push_str(&format!("; min eigenvalue of dA/dy {l:e} at x = {x:?}, y = {y:e}"));
        }
    }
    if g.override_failures {
        Ok(Some(format!("assumption check failed: {what}; solved under override")))
    } else {
        Err(SolveError::AssumptionsFailed(what))
    }
}

/// [`bisection_solve`] behind the assumption gate.
pub fn solve(p: &ProblemInstance, opts: &SolveOptions, g: &AssumptionGate) -> Result<SolveReport, SolveError> {
    let warning = gate(p, g)?;
    let mut report = bisection_solve(p, opts)?;
    report.warnings.extend(warning);
    Ok(report)
}
