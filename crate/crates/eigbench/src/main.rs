//! Benchmark harness: loads or generates a matrix (and optional pencil
//! mass matrix), runs one of the solvers, and writes a JSON report plus
//! an optional per-cycle CSV history. `--sweep` repeats a run along one
//! parameter axis and aggregates the matvec counts.
//!
//! Exit codes: 0 converged, 2 max-cycles, 3 breakdown, 1 usage or I/O.

use clap::Parser;
use krylov_eig::baselines::{lobpcg_solve, trlan_solve, unrestarted_lanczos_solve};
use krylov_eig::market::read_matrix_market_file;
use krylov_eig::operators::{PrecondKind, PreconditionerSpec};
use krylov_eig::pl1::{
    pl1_solve, reference_lowest_eigenpair, vector_with_angle, write_trace_csv, Pl1Options,
    QuasiOptTrace,
};
use krylov_eig::rng::XorShift64Star;
use krylov_eig::solver::{SolveStatus, SolverConfig, SolverReport};
use krylov_eig::sparse::{
    diag_clustered, diag_uniform, laplacian_1d, laplacian_2d, SparseSymMatrix,
};
use krylov_eig::trplk::trplk_solve;
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser, Debug, Clone)]
#[command(
    name = "eigbench",
    about = "Sparse symmetric eigensolver benchmarks",
    version
)]
struct Args {
    /// Matrix Market file with the (symmetric) system matrix A.
    #[arg(long)]
    matrix: Option<PathBuf>,

    /// Matrix Market file with the pencil matrix B (SPD).
    #[arg(long)]
    matrix_b: Option<PathBuf>,

    /// Generate a test matrix instead: kind:n[:param] with kind one of
    /// laplacian1d, laplacian2d, diag_clustered, diag_uniform
    /// (param = cluster decay for diag_clustered).
    #[arg(long)]
    generate: Option<String>,

    /// Solver: trplk | trlan | lobpcg | pl1 | lanczos.
    #[arg(long, default_value = "trplk")]
    solver: String,

    /// Number of wanted (smallest) eigenpairs.
    #[arg(long, default_value_t = 1)]
    nev: usize,

    /// Maximum basis size q.
    #[arg(long, default_value_t = 18)]
    max_basis: usize,

    /// Ritz vectors kept at restart.
    #[arg(long, default_value_t = 8)]
    restart_size: usize,

    /// Previous Ritz vectors re-inserted after restart (+K).
    #[arg(long, default_value_t = 1)]
    plus_k: usize,

    /// Inner Krylov steps per cycle for the pl1 solver.
    #[arg(long, default_value_t = 1)]
    inner_steps: usize,

    /// Relative tolerance: converged when ‖Ax - θBx‖ ≤ ‖A‖_F · tol.
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,

    /// Preconditioner: none | jacobi | ic0.
    #[arg(long, default_value = "none")]
    precond: String,

    /// Shift σ in A - σB for the preconditioner build.
    #[arg(long, default_value_t = 0.0)]
    precond_shift: f64,

    /// Seed for the starting vectors.
    #[arg(long, default_value_t = 12)]
    seed: u64,

    /// Maximum outer cycles (restarts / iterations).
    #[arg(long, default_value_t = 5000)]
    max_cycles: usize,

    /// JSON report path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Per-cycle history CSV path (the quasi-optimality trace CSV when
    /// --trace-quasiopt is set).
    #[arg(long)]
    history: Option<PathBuf>,

    /// Record the pl1 quasi-optimality trace.
    #[arg(long, default_value_t = false)]
    trace_quasiopt: bool,

    /// Initial angle to the reference eigenvector for pl1 starts.
    #[arg(long)]
    theta0: Option<f64>,

    /// Sweep one axis: axis=v1,v2,... with axis one of
    /// max_basis, plus_k, theta0.
    #[arg(long)]
    sweep: Option<String>,

    /// Repetitions of the timed run (numerical payload is from the
    /// first; wall seconds is the median).
    #[arg(long, default_value_t = 1)]
    reps: usize,
}

#[derive(Serialize, Clone)]
struct ConfigEcho {
    matrix: String,
    matrix_b: Option<String>,
    solver: String,
    nev: usize,
    max_basis: usize,
    restart_size: usize,
    plus_k: usize,
    inner_steps: usize,
    tol: f64,
    precond: String,
    precond_shift: f64,
    seed: u64,
    max_cycles: usize,
    theta0: Option<f64>,
    trace_quasiopt: bool,
    reps: usize,
}

#[derive(Serialize)]
struct EigenPairOut {
    value: f64,
    residual: f64,
}

#[derive(Serialize)]
struct RunReport {
    solver: String,
    config: ConfigEcho,
    status: String,
    eigenpairs: Vec<EigenPairOut>,
    matvecs: u64,
    precond_applies: u64,
    reseeds: u64,
    wall_seconds: f64,
    history_file: Option<String>,
}

fn fail(msg: impl std::fmt::Display) -> ! {
    eprintln!("eigbench: {msg}");
    std::process::exit(1);
}

fn parse_generate(spec: &str) -> Result<SparseSymMatrix, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(format!("bad --generate spec {spec:?}; expected kind:n[:param]"));
    }
    let n: usize = parts[1]
        .parse()
        .map_err(|_| format!("bad size in --generate spec {spec:?}"))?;
    let param: Option<f64> = match parts.get(2) {
        Some(s) => Some(
            s.parse()
                .map_err(|_| format!("bad param in --generate spec {spec:?}"))?,
        ),
        None => None,
    };
    let m = match parts[0] {
        "laplacian1d" => laplacian_1d(n),
        "laplacian2d" => laplacian_2d(n),
        "diag_clustered" => diag_clustered(n, 20.min(n / 2), param.unwrap_or(1.0)),
        "diag_uniform" => diag_uniform(n),
        other => return Err(format!("unknown generator kind {other:?}")),
    };
    m.map_err(|e| e.to_string())
}

fn load_problem(args: &Args) -> (SparseSymMatrix, Option<SparseSymMatrix>, String) {
    let a = match (&args.matrix, &args.generate) {
        (Some(path), None) => match read_matrix_market_file(path) {
            Ok(parsed) => {
                if parsed.duplicates_summed > 0 {
                    eprintln!(
                        "eigbench: note: {} duplicate coordinate entries were summed",
                        parsed.duplicates_summed
                    );
                }
                parsed.matrix
            }
            Err(e) => fail(format!("cannot read {}: {e}", path.display())),
        },
        (None, Some(spec)) => match parse_generate(spec) {
            Ok(m) => m,
            Err(e) => fail(e),
        },
        _ => fail("exactly one of --matrix or --generate is required"),
    };
    let b = args.matrix_b.as_ref().map(|path| match read_matrix_market_file(path) {
        Ok(parsed) => parsed.matrix,
        Err(e) => fail(format!("cannot read {}: {e}", path.display())),
    });
    let label = args
        .matrix
        .as_ref()
        .map(|p| p.display().to_string())
        .or_else(|| args.generate.clone())
        .unwrap_or_default();
    (a, b, label)
}

fn solver_config(args: &Args) -> SolverConfig {
    let kind: PrecondKind = args
        .precond
        .parse()
        .unwrap_or_else(|e| fail(format!("{e}")));
    SolverConfig {
        nev: args.nev,
        max_basis: args.max_basis,
        restart_size: args.restart_size,
        plus_k: args.plus_k,
        tol: args.tol,
        max_cycles: args.max_cycles,
        seed: args.seed,
        precond: PreconditionerSpec {
            kind,
            shift: args.precond_shift,
            ..Default::default()
        },
        ..Default::default()
    }
}

struct RunOutput {
    report: SolverReport,
    trace: Option<(QuasiOptTrace, f64)>,
}

fn execute(
    args: &Args,
    a: &SparseSymMatrix,
    b: Option<&SparseSymMatrix>,
) -> krylov_eig::Result<RunOutput> {
    let cfg = solver_config(args);
    match args.solver.as_str() {
        "trplk" => Ok(RunOutput {
            report: trplk_solve(a, b, &cfg, None)?,
            trace: None,
        }),
        "trlan" => {
            if b.is_some() {
                fail("trlan supports standard problems only (drop --matrix-b)");
            }
            Ok(RunOutput {
                report: trlan_solve(a, &cfg, None)?,
                trace: None,
            })
        }
        "lanczos" => {
            if b.is_some() {
                fail("lanczos supports standard problems only (drop --matrix-b)");
            }
            Ok(RunOutput {
                report: unrestarted_lanczos_solve(a, &cfg, None)?,
                trace: None,
            })
        }
        "lobpcg" => {
            let m = krylov_eig::operators::build_preconditioner(a, b, &cfg.precond)?;
            Ok(RunOutput {
                report: lobpcg_solve(a, b, m.as_ref(), &cfg, None, false)?,
                trace: None,
            })
        }
        "pl1" => {
            let m = krylov_eig::operators::build_preconditioner(a, b, &cfg.precond)?;
            let needs_reference = args.theta0.is_some() || args.trace_quasiopt;
            let reference = if needs_reference {
                Some(reference_lowest_eigenpair(a, b)?)
            } else {
                None
            };
            let x0 = match args.theta0 {
                Some(theta0) => {
                    let (_, v1) = reference.as_ref().expect("reference computed above");
                    vector_with_angle(v1, theta0, b, args.seed)
                }
                None => {
                    let mut rng = XorShift64Star::new(args.seed);
                    (0..a.n()).map(|_| rng.next_centered()).collect()
                }
            };
            let opts = Pl1Options {
                inner_steps: args.inner_steps,
                tol: a.frobenius_norm() * args.tol,
                max_cycles: args.max_cycles,
                trace: args.trace_quasiopt,
                ..Default::default()
            };
            let (report, trace) = pl1_solve(a, b, m.as_ref(), &x0, &opts)?;
            let trace = trace.map(|t| {
                let lambda1 = reference.as_ref().expect("reference computed above").0;
                (t, lambda1)
            });
            Ok(RunOutput { report, trace })
        }
        other => fail(format!(
            "unknown solver {other:?}; expected trplk, trlan, lobpcg, pl1, or lanczos"
        )),
    }
}

/// Recomputes every reported residual from scratch and confirms it
/// matches the report. A mismatch means the solver's bookkeeping broke.
fn verify_report(
    a: &SparseSymMatrix,
    b: Option<&SparseSymMatrix>,
    report: &SolverReport,
) -> Result<(), String> {
    for i in 0..report.eigenvalues.len() {
        let x = report.eigenvectors.col(i);
        let theta = report.eigenvalues[i];
        let mut r = a.mul(x);
        let bx: Vec<f64> = match b {
            Some(bm) => bm.mul(x),
            None => x.clone(),
        };
        for (rj, bxj) in r.iter_mut().zip(&bx) {
            *rj -= theta * bxj;
        }
        let fresh = krylov_eig::vec::norm2(&r);
        if (fresh - report.residual_norms[i]).abs() > 1e-12 {
            return Err(format!(
                "pair {i}: reported residual {} but recomputed {fresh}",
                report.residual_norms[i]
            ));
        }
    }
    Ok(())
}

fn write_history_csv(report: &SolverReport, path: &PathBuf) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "cycle,matvecs,precond_applies,target_index,rho,resid_norm")?;
    for rec in &report.history {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            rec.cycle, rec.matvecs, rec.precond_applies, rec.target_index, rec.rho, rec.resid_norm
        )?;
    }
    Ok(())
}

fn config_echo(args: &Args, label: &str) -> ConfigEcho {
    ConfigEcho {
        matrix: label.to_string(),
        matrix_b: args.matrix_b.as_ref().map(|p| p.display().to_string()),
        solver: args.solver.clone(),
        nev: args.nev,
        max_basis: args.max_basis,
        restart_size: args.restart_size,
        plus_k: args.plus_k,
        inner_steps: args.inner_steps,
        tol: args.tol,
        precond: args.precond.clone(),
        precond_shift: args.precond_shift,
        seed: args.seed,
        max_cycles: args.max_cycles,
        theta0: args.theta0,
        trace_quasiopt: args.trace_quasiopt,
        reps: args.reps,
    }
}

fn run_benchmark(args: &Args) -> i32 {
    let (a, b, label) = load_problem(args);
    let reps = args.reps.max(1);
    let mut outputs: Vec<(RunOutput, f64)> = Vec::new();
    for _ in 0..reps {
        let t0 = Instant::now();
        match execute(args, &a, b.as_ref()) {
            Ok(out) => outputs.push((out, t0.elapsed().as_secs_f64())),
            Err(e) => fail(format!("solver error: {e}")),
        }
    }
    let mut seconds: Vec<f64> = outputs.iter().map(|(_, s)| *s).collect();
    seconds.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let median = seconds[seconds.len() / 2];
    let (out, _) = &outputs[0];

    if let Err(msg) = verify_report(&a, b.as_ref(), &out.report) {
        fail(format!("post-hoc verification failed: {msg}"));
    }

    if let Some(path) = &args.history {
        let result = match &out.trace {
            Some((trace, lambda1)) => std::fs::File::create(path)
                .map_err(krylov_eig::Error::from)
                .and_then(|f| write_trace_csv(trace, *lambda1, f)),
            None => write_history_csv(&out.report, path).map_err(krylov_eig::Error::from),
        };
        if let Err(e) = result {
            fail(format!("cannot write history {}: {e}", path.display()));
        }
    }

    let report = RunReport {
        solver: args.solver.clone(),
        config: config_echo(args, &label),
        status: out.report.status.as_str().to_string(),
        eigenpairs: out
            .report
            .eigenvalues
            .iter()
            .zip(&out.report.residual_norms)
            .map(|(&value, &residual)| EigenPairOut { value, residual })
            .collect(),
        matvecs: out.report.matvecs,
        precond_applies: out.report.precond_applies,
        reseeds: out.report.reseeds,
        wall_seconds: median,
        history_file: args.history.as_ref().map(|p| p.display().to_string()),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json + "\n") {
                fail(format!("cannot write report {}: {e}", path.display()));
            }
        }
        None => println!("{json}"),
    }

    match out.report.status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxCycles => 2,
        SolveStatus::Breakdown => 3,
    }
}

fn run_sweep(args: &Args, spec: &str) -> i32 {
    let (axis, values_str) = match spec.split_once('=') {
        Some(pair) => pair,
        None => fail(format!("bad --sweep spec {spec:?}; expected axis=v1,v2,...")),
    };
    if !matches!(axis, "max_basis" | "plus_k" | "theta0") {
        fail(format!(
            "unknown sweep axis {axis:?}; expected max_basis, plus_k, or theta0"
        ));
    }
    if axis == "theta0" && args.solver != "pl1" {
        fail("the theta0 axis applies to the pl1 solver only");
    }
    let values: Vec<f64> = values_str
        .split(',')
        .map(|v| {
            v.parse()
                .unwrap_or_else(|_| fail(format!("bad sweep value {v:?}")))
        })
        .collect();
    if values.is_empty() {
        fail("empty sweep value list");
    }

    let (a, b, _) = load_problem(args);
    struct Row {
        value: f64,
        matvecs: u64,
        seconds: f64,
        status: String,
    }
    let mut rows: Vec<Option<Row>> = Vec::new();
    rows.resize_with(values.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            let mut run_args = args.clone();
            match axis {
                "max_basis" => run_args.max_basis = v as usize,
                "plus_k" => run_args.plus_k = v as usize,
                "theta0" => run_args.theta0 = Some(v),
                _ => unreachable!(),
            }
            let a_ref = &a;
            let b_ref = b.as_ref();
            handles.push((
                i,
                scope.spawn(move || {
                    let t0 = Instant::now();
                    let result = execute(&run_args, a_ref, b_ref);
                    let seconds = t0.elapsed().as_secs_f64();
                    match result {
                        Ok(out) => Row {
                            value: v,
                            matvecs: out.report.matvecs,
                            seconds,
                            status: out.report.status.as_str().to_string(),
                        },
                        Err(e) => Row {
                            value: v,
                            matvecs: 0,
                            seconds,
                            status: format!("error: {e}"),
                        },
                    }
                }),
            ));
        }
        for (i, h) in handles {
            rows[i] = Some(h.join().expect("sweep worker panicked"));
        }
    });

    let mut csv = format!("{axis},matvecs,seconds,status\n");
    for row in rows.into_iter().flatten() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.value, row.matvecs, row.seconds, row.status
        ));
    }
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, csv) {
                fail(format!("cannot write sweep output {}: {e}", path.display()));
            }
        }
        None => print!("{csv}"),
    }
    0
}

fn main() {
    let args = Args::parse();
    let code = match &args.sweep {
        Some(spec) => run_sweep(&args, &spec.clone()),
        None => run_benchmark(&args),
    };
    std::process::exit(code);
}
