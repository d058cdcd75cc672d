use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use socp_core::checks::{self, SuiteReport, DEFAULT_SEED, SUITES};
use socp_core::config::ProblemConfig;
use socp_core::model::Model;
use socp_core::optimality::{Formulation, FORMULATIONS};
use socp_core::registry::{self, Problem, PROBLEMS};
use socp_core::{actions, bvp, Error};

const DEFAULT_GRID: usize = 200;
const DEFAULT_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "socp", version, about = "Indirect optimal control of second-order systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List problems, formulations or symmetry actions.
    List {
        #[arg(long)]
        formulations: bool,
        #[arg(long)]
        actions: bool,
    },
    /// Solve one boundary-value problem and write `trace.csv` and `report.json`.
    Solve(SolveArgs),
    /// Solve in several charts and report agreement after identification.
    Compare(CompareArgs),
    /// Run property suites.
    Check(CheckArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    problem: Option<String>,
    /// Problem configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "pmp")]
    formulation: String,
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated formulations; the first is the reference chart.
    #[arg(long, value_delimiter = ',')]
    formulation: Vec<String>,
    /// One grid, or a comma-separated list that must agree.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<usize>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// Exit status: 1 for configuration errors, 2 for numerical failures.
enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownKey(_) | Error::Dimension(_) | Error::Unsupported(_) => Failure::Config(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("cannot write {}: {e}", path.display()))
}

struct Setup {
    problem: Problem,
    grid: Option<usize>,
    tol: f64,
}

fn setup(c: &Common) -> Result<Setup, Failure> {
    let cfg = match &c.config {
        Some(path) => ProblemConfig::load(path)?,
        None => ProblemConfig::default(),
    };
    let name = c.problem.clone().or(cfg.problem.clone()).unwrap_or_else(|| "double_integrator".into());
    let cfg = ProblemConfig { problem: Some(name), ..cfg };
    let problem = cfg.build(None)?;
    let tol = c.tol.or(cfg.tol_shoot).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(Failure::Config(format!("--tol must be positive, got {tol}")));
    }
    Ok(Setup { problem, grid: cfg.n, tol })
}

fn parse_formulation(s: &str) -> Result<Formulation, Failure> {
    Ok(s.parse::<Formulation>()?)
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    Ok(dir)
}

fn list(formulations: bool, actions_flag: bool) -> Result<(), Failure> {
    if formulations {
        for f in FORMULATIONS {
            println!("{f}");
        }
    } else if actions_flag {
        for a in actions::ACTIONS {
            println!("{a}");
        }
    } else {
        for name in PROBLEMS {
            let p = registry::problem(name)?;
            let lag = if p.model.has_lagrangian() { "  lagrangian" } else { "" };
            println!("{name}  dim_q={} dim_u={}{lag}", p.n(), p.m());
        }
    }
    Ok(())
}

fn solve(a: &SolveArgs) -> Result<(), Failure> {
    let s = setup(&a.common)?;
    let f = parse_formulation(&a.formulation)?;
    let grid = a.grid.or(s.grid).unwrap_or(DEFAULT_GRID);
    let p = &s.problem;
    let mut report = bvp::solve_bvp(p, f, &bvp::default_guess(p, f)?, grid, s.tol)?;
    report.seed = a.common.seed;
    let dir = out_dir(&a.common.out)?;
    let csv = dir.join("trace.csv");
    if let Some(t) = &report.trajectory {
        let file = fs::File::create(&csv).map_err(|e| io_failure(&csv, e))?;
        t.write_csv(std::io::BufWriter::new(file)).map_err(|e| io_failure(&csv, e))?;
    }
    let json = dir.join("report.json");
    fs::write(&json, report.to_json() + "\n").map_err(|e| io_failure(&json, e))?;
    let cost = report.cost.map_or("n/a".to_string(), |c| format!("{c:.12}"));
    println!(
        "{} {} grid={grid} converged={} iterations={} residual={:.3e} cost={cost}",
        report.problem, f, report.converged, report.iterations, report.residual
    );
    if report.converged {
        Ok(())
    } else {
        Err(Failure::Numerical(report.message.unwrap_or_else(|| "shooting did not converge".into())))
    }
}

fn compare(a: &CompareArgs) -> Result<(), Failure> {
    let s = setup(&a.common)?;
    let p = &s.problem;
    let mut grids = a.grid.clone();
    grids.extend(s.grid);
    if grids.iter().any(|g| *g != grids[0]) {
        return Err(Failure::Config(format!("refusing to compare traces on mismatched grids {grids:?}")));
    }
    let grid = grids.first().copied().unwrap_or(DEFAULT_GRID);
    let fs: Vec<Formulation> = if a.formulation.is_empty() {
        FORMULATIONS.iter().copied().filter(|f| *f != Formulation::Forced || p.model.has_lagrangian()).collect()
    } else {
        a.formulation.iter().map(|x| parse_formulation(x)).collect::<Result<_, _>>()?
    };
    if fs.len() < 2 {
        return Err(Failure::Config("compare needs at least two formulations".into()));
    }
    let pool = pool(a.common.jobs)?;
    let solves = pool.install(|| {
        fs.par_iter().map(|&f| bvp::default_guess(p, f).and_then(|g| bvp::solve_bvp(p, f, &g, grid, s.tol))).collect::<Vec<_>>()
    });
    let table = checks::compare_solved(p, &fs, solves, grid, fs[0])?;
    let fmt = |x: Option<f64>| x.map_or("incomparable".to_string(), |v| format!("{v:.3e}"));
    println!("{} grid={grid} reference={}", table.problem, table.reference);
    println!("{:<8} {:>9} {:>5} {:>20} {:>14} {:>14} {:>14}", "chart", "converged", "iter", "cost", "max_dev", "cost_dev", "aug_spread");
    for r in &table.rows {
        println!(
            "{:<8} {:>9} {:>5} {:>20} {:>14} {:>14} {:>14}",
            r.formulation.name(),
            r.converged,
            r.iterations,
            r.cost.map_or("n/a".into(), |c| format!("{c:.12}")),
            fmt(r.max_deviation),
            fmt(r.cost_deviation),
            fmt(r.augmented_spread),
        );
    }
    if let Some(out) = &a.common.out {
        let dir = out_dir(&Some(out.clone()))?;
        let path = dir.join("compare.json");
        let text = serde_json::to_string_pretty(&table).expect("table serializes");
        fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
    }
    match table.max_deviation() {
        Some(_) => Ok(()),
        None => Err(Failure::Numerical("at least one formulation did not converge".into())),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::Config(format!("cannot start {jobs} workers: {e}")))
}

fn check(a: &CheckArgs) -> Result<(), Failure> {
    let suites: Vec<String> = if a.suite.is_empty() { SUITES.iter().map(|s| s.to_string()).collect() } else { a.suite.clone() };
    for s in &suites {
        if !SUITES.contains(&s.as_str()) {
            return Err(Failure::Config(format!("unknown suite `{s}`; expected one of {}", SUITES.join(", "))));
        }
    }
    let problem = a.problem.as_deref();
    let pool = pool(a.jobs)?;
    let reports: Vec<SuiteReport> = pool
        .install(|| suites.par_iter().map(|s| checks::run_suite(s, problem, a.seed)).collect::<Result<Vec<_>, _>>())?;
    let mut all = true;
    for r in &reports {
        for c in &r.checks {
            let note = c.note.as_deref().map(|n| format!("  ({n})")).unwrap_or_default();
            println!("{} {}: {}  {:.3e} <= {:.1e}{note}", if c.pass { "PASS" } else { "FAIL" }, r.suite, c.name, c.value, c.tol);
        }
        all &= r.passed();
    }
    if let Some(out) = &a.out {
        let dir = out_dir(&Some(out.clone()))?;
        let path = dir.join("check.json");
        let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
        fs::write(&path, text + "\n").map_err(|e| io_failure(&path, e))?;
    }
    let failed: usize = reports.iter().map(|r| r.checks.iter().filter(|c| !c.pass).count()).sum();
    println!("seed {}: {} suites, {failed} failed checks", a.seed, reports.len());
    if all {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("{failed} checks failed")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::List { formulations, actions } => list(*formulations, *actions),
        Command::Solve(a) => solve(a),
        Command::Compare(a) => compare(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
