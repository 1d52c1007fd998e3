use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use globalsdp::kkt::{verify_kkt, DEFAULT_KKT_TOL};
use globalsdp::model::check_assumptions;
use globalsdp::oracle::{default_grid, grid_search, FixtureSet, GridSpec, OracleError};
use globalsdp::problems::{catalog_ids, catalog_instance, read_problem, CATALOG};
use globalsdp::solver::{
    multistart, solve, AssumptionGate, InnerOpts, MultistartOptions, SolveError, SolveOptions, Status,
};
use globalsdp::{Execution, ProblemInstance};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "globalsdp",
    version,
    about = "Solve, check and certify nonconvex SDPs of the form min y s.t. A(x,y) >= 0, B(x) >= 0",
    after_help = "Exit codes: 0 success, 1 problem-level failure, 2 usage or input error.\n\
                  GLOBALSDP_THREADS caps the worker threads used by multistart and oracle."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in problem instances
    Catalog(CatalogArgs),
    /// Solve one instance by bisection and certify the result
    Solve(SolveArgs),
    /// Sampled checks of concavity, monotonicity in y and strict feasibility
    CheckAssumptions(CheckArgs),
    /// Recover multipliers at a given point and test the KKT conditions
    VerifyKkt(VerifyArgs),
    /// Repeat the solve from random starting points and compare the optima
    Multistart(MultistartArgs),
    /// Brute-force grid reference, or regenerate the fixtures file
    Oracle(OracleArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Catalog identifier (see `catalog`)
    #[arg(long)]
    problem: Option<String>,
    /// Problem file (bilinear, truss or grasp JSON)
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct Output {
    /// Write the report here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a short human-readable table instead of JSON
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct InnerArgs {
    /// Final smoothing level of the inner solver
    #[arg(long, default_value_t = InnerOpts::default().mu_final)]
    inner_mu: f64,
    /// Newton iterations per smoothing level
    #[arg(long, default_value_t = InnerOpts::default().max_iter)]
    max_iter: usize,
}

impl InnerArgs {
    fn opts(&self) -> InnerOpts {
        InnerOpts {
            mu_final: self.inner_mu,
            max_iter: self.max_iter,
            ..InnerOpts::default()
        }
    }
}

#[derive(Args)]
struct CatalogArgs {
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    /// Bisection tolerance on y
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    inner: InnerArgs,
    /// Seed for the inner solver's random restarts
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the bisection trace in the report
    #[arg(long)]
    trace: bool,
    /// Solve even if the assumption check fails; the report carries a warning
    #[arg(long)]
    override_assumptions: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    source: Source,
    /// Number of random samples
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: Source,
    /// Point x, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y: f64,
    /// Acceptance tolerance on every residual
    #[arg(long, default_value_t = DEFAULT_KKT_TOL)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct MultistartArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bisection tolerance on y
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    inner: InnerArgs,
    /// Run even if the assumption check fails; the report carries a warning
    #[arg(long)]
    override_assumptions: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OracleArgs {
    /// Catalog identifier
    #[arg(long, required_unless_present = "write_fixtures", conflicts_with = "write_fixtures")]
    problem: Option<String>,
    /// Grid step on every coordinate; the instance's default grid if absent
    #[arg(long)]
    resolution: Option<f64>,
    /// Compute references for every griddable catalog instance into this file
    #[arg(long)]
    write_fixtures: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

enum Failure {
    Usage(String),
    Problem(String),
}

type CmdResult = Result<bool, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn problem(e: impl std::fmt::Display) -> Failure {
    Failure::Problem(e.to_string())
}

fn load(src: &Source) -> Result<ProblemInstance, Failure> {
    match (&src.problem, &src.input) {
        (Some(id), None) => catalog_instance(id).map_err(usage),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            read_problem(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
        _ => Err(usage("exactly one of --problem and --input is required")),
    }
}

fn emit(out: &Output, json: String, summary: impl FnOnce() -> String) -> Result<(), Failure> {
    let text = if out.summary { summary() } else { json };
    match &out.out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run_catalog(a: &CatalogArgs) -> CmdResult {
    #[derive(Serialize)]
    struct Entry<'a> {
        id: &'a str,
        description: &'a str,
    }
    let entries: Vec<Entry> = CATALOG.iter().map(|&(id, description)| Entry { id, description }).collect();
    emit(&a.output, pretty(&entries), || {
        let mut s = String::new();
        for e in &entries {
            let _ = writeln!(s, "{:<16} {}", e.id, e.description);
        }
        s.trim_end().to_string()
    })?;
    Ok(true)
}

fn run_solve(a: &SolveArgs) -> CmdResult {
    let p = load(&a.source)?;
    let opts = SolveOptions {
        tol_y: a.tol,
        inner: InnerOpts {
            seed: a.seed,
            ..a.inner.opts()
        },
        ..SolveOptions::default()
    };
    let gate = AssumptionGate {
        override_failures: a.override_assumptions,
        ..AssumptionGate::default()
    };
    let report = solve(&p, &opts, &gate).map_err(|e| match e {
        SolveError::InvalidOptions(_) => usage(e),
        _ => problem(e),
    })?;
    let ok = report.status == Status::Optimal;
    emit(&a.output, report.to_json(a.trace), || {
        let mut s = String::new();
        let _ = writeln!(s, "problem   {}", report.problem);
        let _ = writeln!(s, "status    {:?}", report.status);
        let _ = writeln!(s, "y*        {:.12}", report.y_star);
        let _ = writeln!(s, "x*        {}", fmt_vec(&report.x_star));
        let _ = writeln!(s, "probes    {}", report.probes);
        let _ = writeln!(s, "certified {}", report.accepted());
        for w in &report.warnings {
            let _ = writeln!(s, "warning   {w}");
        }
        if let Some(m) = &report.message {
            let _ = writeln!(s, "note      {m}");
        }
        s.trim_end().to_string()
    })?;
    Ok(ok)
}

fn run_check(a: &CheckArgs) -> CmdResult {
    let p = load(&a.source)?;
    let r = check_assumptions(&p, a.samples, a.seed).map_err(problem)?;
    let ok = r.solver_ready();
    emit(&a.output, pretty(&r), || {
        format!(
            "problem        {}\nconcavity      {:?}\nmonotonicity   {:?} (min eig dA/dy {})\nslater proxy   {:?}",
            r.problem,
            r.concavity,
            r.monotonicity,
            r.min_dady_eigenvalue.map_or("n/a".into(), |v| format!("{v:e}")),
            r.slater_proxy
        )
    })?;
    Ok(ok)
}

fn run_verify(a: &VerifyArgs) -> CmdResult {
    let p = load(&a.source)?;
    let cert = verify_kkt(&p, &a.x, a.y, a.tol).map_err(usage)?;
    emit(&a.output, cert.to_json(), || {
        format!(
            "accepted {}\nreason   {}",
            cert.accepted,
            cert.reason.clone().unwrap_or_else(|| "-".into())
        )
    })?;
    Ok(cert.accepted)
}

fn run_multistart(a: &MultistartArgs) -> CmdResult {
    let p = load(&a.source)?;
    let opts = MultistartOptions {
        starts: a.starts,
        seed: a.seed,
        solve: SolveOptions {
            tol_y: a.tol,
            inner: a.inner.opts(),
            ..SolveOptions::default()
        },
        gate: AssumptionGate {
            override_failures: a.override_assumptions,
            ..AssumptionGate::default()
        },
        exec: Execution::Parallel,
    };
    let r = multistart(&p, &opts).map_err(|e| match e {
        SolveError::InvalidOptions(_) => usage(e),
        _ => problem(e),
    })?;
    let ok = r.all_accepted();
    emit(&a.output, r.to_json(), || {
        let mut s = String::new();
        let _ = writeln!(s, "problem   {}", r.problem);
        let _ = writeln!(s, "accepted  {}/{}", r.accepted, r.starts);
        let _ = writeln!(s, "y spread  {}", r.y_spread.map_or("n/a".into(), |v| format!("{v:e}")));
        let _ = writeln!(s, "x spread  {}", r.x_spread.map_or("n/a".into(), |v| format!("{v:e}")));
        for run in &r.runs {
            let _ = writeln!(
                s,
                "  #{:<3} {:<12} y = {}",
                run.index,
                run.status.map_or("error".into(), |st| format!("{st:?}")),
                run.y_star.map_or("-".into(), |y| format!("{y:.12}"))
            );
        }
        s.trim_end().to_string()
    })?;
    Ok(ok)
}

fn run_oracle(a: &OracleArgs) -> CmdResult {
    if let Some(path) = &a.write_fixtures {
        let ids: Vec<&str> = catalog_ids().collect();
        let set = FixtureSet::compute(&ids, Execution::Parallel).map_err(problem)?;
        fs::write(path, set.to_json()).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        emit(&a.output, pretty(&set), || format!("wrote {} fixtures to {}", set.0.len(), path.display()))?;
        return Ok(true);
    }
    let id = a.problem.as_deref().expect("clap enforces --problem");
    let p = catalog_instance(id).map_err(usage)?;
    let grid = match a.resolution {
        Some(step) => GridSpec::over_box(p.require_box().map_err(usage)?, step).map_err(usage)?,
        None => default_grid(id)
            .map_err(problem)?
            .ok_or_else(|| usage(format!("'{id}' has no default grid; pass --resolution")))?,
    };
    let r = grid_search(&p, &grid, Execution::Parallel).map_err(|e| match e {
        OracleError::GridTooLarge { .. } | OracleError::InvalidGrid(_) => usage(e),
        _ => problem(e),
    })?;
    emit(&a.output, pretty(&r), || {
        format!("y  {:.12}\nx  {}\n{} of {} grid points feasible", r.y, fmt_vec(&r.x), r.feasible_points, r.points)
    })?;
    Ok(true)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("GLOBALSDP_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("GLOBALSDP_THREADS must be a positive integer, got '{value}'")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot size the thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Catalog(a) => run_catalog(a),
        Command::Solve(a) => run_solve(a),
        Command::CheckAssumptions(a) => run_check(a),
        Command::VerifyKkt(a) => run_verify(a),
        Command::Multistart(a) => run_multistart(a),
        Command::Oracle(a) => run_oracle(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Problem(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
