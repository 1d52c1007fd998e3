use std::sync::Arc;

use globalsdp::model::BilinearAffineForm;
use globalsdp::oracle::FixtureSet;
use globalsdp::problems::catalog_instance;
use globalsdp::solver::{bisection_solve, multistart, solve, AssumptionGate, MultistartOptions, SolveOptions, Status};
use globalsdp::{ProblemInstance, SymMat, XBox};

const FIXTURES: &str = include_str!("fixtures/oracle.json");

fn override_gate() -> AssumptionGate {
    AssumptionGate {
        override_failures: true,
        ..AssumptionGate::default()
    }
}

fn scalar(v: f64) -> SymMat {
    SymMat::from_diag(&[v])
}

#[test]
fn analytic_optima() {
    for (id, y, x, tol) in [
        ("fractional", 0.0, vec![0.0], 1e-6),
        ("sqrt", 1.0, vec![1.0], 1e-6),
        ("norm-quadratic", 2.0, vec![1.0, 0.0], 1e-5),
        ("strict-concave", -1.0, vec![1.0, 0.0], 1e-6),
    ] {
        let r = solve(&catalog_instance(id).unwrap(), &SolveOptions::default(), &AssumptionGate::default()).unwrap();
        assert_eq!(r.status, Status::Optimal, "{id}: {:?}", r.message);
        assert!((r.y_star - y).abs() <= tol, "{id}: y* = {}", r.y_star);
        for (a, b) in r.x_star.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-4, "{id}: x* = {:?}", r.x_star);
        }
    }
}

#[test]
fn optimal_reports_are_certified_feasible_and_monotone() {
    for id in ["fractional", "sqrt", "norm-quadratic", "minimax", "truss-2bar", "strict-concave", "grasp-2finger"] {
        let p = catalog_instance(id).unwrap();
        let r = solve(&p, &SolveOptions::default(), &override_gate()).unwrap();
        assert_eq!(r.status, Status::Optimal, "{id}");
        let cert = r.certificate.as_ref().unwrap();
        assert!(cert.accepted, "{id}: {:?}", cert.reason);
        assert!(p.eval_constraints_tol(&r.x_star, r.y_star, 1e-6).unwrap().feasible, "{id}");
        assert!(r.bracket.0 <= r.bracket.1);
        let mut trace: Vec<(f64, f64)> = r.trace.iter().map(|e| (e.y, e.margin)).collect();
        trace.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in trace.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-9, "{id}: margins not monotone {w:?}");
        }
    }
}

#[test]
fn solver_agrees_with_grid_references() {
    let fixtures = FixtureSet::parse(FIXTURES).unwrap();
    for id in fixtures.0.keys() {
        let p = catalog_instance(id).unwrap();
        let f = fixtures.checked(id, &p).unwrap();
        let opts = SolveOptions::default();
        let r = solve(&p, &opts, &override_gate()).unwrap();
        // never better than the grid beyond discretization, never worse beyond tol_y
        let slack = 1e-3 * (1.0 + f.oracle_y.abs());
        assert!(r.y_star >= f.oracle_y - slack, "{id}: solver {} below grid {}", r.y_star, f.oracle_y);
        assert!(r.y_star <= f.oracle_y + 2.0 * opts.tol_y + 1e-9, "{id}: solver {} above grid {}", r.y_star, f.oracle_y);
    }
}

#[test]
fn truss_two_bar_multistart_with_seed() {
    let r = multistart(
        &catalog_instance("truss-2bar").unwrap(),
        &MultistartOptions {
            starts: 16,
            seed: 42,
            ..MultistartOptions::default()
        },
    )
    .unwrap();
    assert!(r.all_accepted(), "{:?}", r.uncertified);
    assert!(r.y_spread.unwrap() <= 1e-5);
    assert!((r.runs[0].y_star.unwrap() + 1.0 - 0.5f64.sqrt()).abs() <= 1e-6);
}

#[test]
fn empty_b_is_reported_infeasible() {
    let form = BilinearAffineForm::new(scalar(0.0), vec![scalar(-1.0)], scalar(1.0), vec![scalar(1.0)], scalar(-1.0), vec![scalar(0.0)])
        .unwrap();
    let p = ProblemInstance::new("empty", Arc::new(form), Some(XBox::uniform(1, 0.0, 1.0).unwrap()), Some((-1.0, 1.0)))
        .unwrap();
    let r = bisection_solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, Status::Infeasible);
    assert!(r.certificate.is_none());
}

#[test]
fn unbounded_below_is_a_bracket_failure() {
    // A = [y + 1e6] stays feasible far below any bracket the solver will reach
    let form = BilinearAffineForm::new(scalar(1e300), vec![scalar(0.0)], scalar(1.0), vec![scalar(0.0)], scalar(1.0), vec![scalar(0.0)])
        .unwrap();
    let p = ProblemInstance::new("unbounded", Arc::new(form), Some(XBox::uniform(1, 0.0, 1.0).unwrap()), Some((-1.0, 1.0)))
        .unwrap();
    let r = bisection_solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, Status::BracketFailure);
}

#[test]
fn assumption_gate_blocks_grasp_without_override() {
    let p = catalog_instance("grasp-2finger").unwrap();
    assert!(solve(&p, &SolveOptions::default(), &AssumptionGate::default()).is_err());
    let r = solve(&p, &SolveOptions::default(), &override_gate()).unwrap();
    assert_eq!(r.warnings.len(), 1);
}
