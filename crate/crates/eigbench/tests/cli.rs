//! End-to-end checks of the benchmark binary: flag handling, report and
//! history formats, determinism, sweeps, and exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigbench"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 report")
}

#[test]
fn report_structure_and_analytic_eigenvalues() {
    let stdout = run_ok(&[
        "--generate",
        "laplacian1d:1000",
        "--solver",
        "trplk",
        "--nev",
        "5",
        "--max-basis",
        "18",
        "--restart-size",
        "8",
        "--plus-k",
        "1",
        "--tol",
        "1e-14",
        "--seed",
        "12",
    ]);
    let report: serde_json::Value = serde_json::from_str(&stdout).expect("valid JSON");
    assert_eq!(report["status"], "converged");
    assert_eq!(report["config"]["max_basis"], 18);
    let pairs = report["eigenpairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 5);
    for (i, pair) in pairs.iter().enumerate() {
        let lam = {
            let arg = (i + 1) as f64 * std::f64::consts::PI / 2002.0;
            4.0 * arg.sin().powi(2)
        };
        let got = pair["value"].as_f64().unwrap();
        assert!(
            ((got - lam) / lam).abs() < 1e-10,
            "pair {i}: {got} vs analytic {lam}"
        );
    }
}

#[test]
fn identical_invocations_are_byte_identical_modulo_timing() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a.json");
    let out2 = dir.path().join("b.json");
    for out in [&out1, &out2] {
        let s = bin()
            .args([
                "--generate",
                "laplacian1d:400",
                "--solver",
                "trplk",
                "--nev",
                "2",
                "--seed",
                "12",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(s.status.success());
    }
    let strip = |p: &Path| -> String {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_seconds"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&out1), strip(&out2), "reports differ beyond timing");
}

#[test]
fn history_csv_has_pinned_header_and_monotone_matvecs() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("hist.csv");
    run_ok(&[
        "--generate",
        "laplacian1d:300",
        "--solver",
        "trlan",
        "--nev",
        "1",
        "--history",
        hist.to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&hist).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "cycle,matvecs,precond_applies,target_index,rho,resid_norm"
    );
    let mut prev = 0u64;
    for line in lines {
        let mv: u64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(mv >= prev, "matvecs not monotone in {line}");
        prev = mv;
    }
}

#[test]
fn pl1_trace_csv_ratio_zero_through_k2() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    // Deliberately truncated run: exit 2 (max cycles) is fine here.
    let out = bin().args([
        "--generate",
        "laplacian1d:300",
        "--solver",
        "pl1",
        "--inner-steps",
        "1",
        "--trace-quasiopt",
        "--theta0",
        "1e-3",
        "--max-cycles",
        "40",
        "--tol",
        "1e-15",
        "--history",
        trace.to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ])
    .output()
    .unwrap();
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,rho_xk,rho_ystar,lambda1_ref,ratio,resid_norm"
    );
    for line in lines.take(3) {
        let cols: Vec<&str> = line.split(',').collect();
        let k: usize = cols[0].parse().unwrap();
        assert!(k <= 2);
        let ratio: f64 = cols[4].parse().unwrap();
        assert!(ratio.abs() <= 1e-10, "ratio({k}) = {ratio}");
    }
}

#[test]
fn sweep_writes_one_row_per_value_and_continues_on_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let s = bin()
        .args([
            "--generate",
            "laplacian1d:200",
            "--solver",
            "trlan",
            "--nev",
            "1",
            "--tol",
            "1e-12",
            "--sweep",
            // max_basis 4 with restart_size 4 is an invalid config: the
            // error is recorded and the sweep continues.
            "max_basis=4,8,16,32",
            "--restart-size",
            "4",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(s.status.success(), "sweep should exit 0");
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "max_basis,matvecs,seconds,status");
    assert_eq!(lines.len(), 5, "one row per sweep value: {text}");
    assert!(lines[1].contains("error"), "q=4 < restart_size+1 must error: {}", lines[1]);
    for line in &lines[2..] {
        assert!(line.contains("converged"), "unexpected row {line}");
    }
    // Larger basis needs no more matvecs (5% slack).
    let mv: Vec<f64> = lines[2..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(mv[1] <= mv[0] * 1.05 && mv[2] <= mv[1] * 1.05, "trend broken: {mv:?}");
}

#[test]
fn matrix_market_file_input_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.mtx");
    std::fs::write(
        &path,
        "%%MatrixMarket matrix coordinate real symmetric\n\
         % tiny tridiagonal\n\
         4 4 7\n\
         1 1 2.0\n2 1 -1.0\n2 2 2.0\n3 2 -1.0\n3 3 2.0\n4 3 -1.0\n4 4 2.0\n",
    )
    .unwrap();
    let stdout = run_ok(&[
        "--matrix",
        path.to_str().unwrap(),
        "--solver",
        "lanczos",
        "--nev",
        "1",
        "--tol",
        "1e-12",
    ]);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    // Smallest eigenvalue of tridiag(-1,2,-1) at n=4: 4 sin²(π/10).
    let lam = 4.0 * (std::f64::consts::PI / 10.0).sin().powi(2);
    let got = report["eigenpairs"][0]["value"].as_f64().unwrap();
    assert!(((got - lam) / lam).abs() < 1e-10);
}

#[test]
fn usage_errors_exit_one() {
    let s = bin().args(["--solver", "trplk"]).output().unwrap();
    assert_eq!(s.status.code(), Some(1), "missing matrix source");

    let s = bin()
        .args(["--generate", "laplacian1d:100", "--solver", "unknown"])
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(1), "unknown solver");

    let s = bin()
        .args(["--matrix", "/nonexistent/path.mtx"])
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(1), "missing file");
}

#[test]
fn max_cycles_exit_code_is_two() {
    let s = bin()
        .args([
            "--generate",
            "laplacian1d:400",
            "--solver",
            "trlan",
            "--max-cycles",
            "3",
            "--out",
            "/dev/null",
        ])
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(2));
}

#[test]
fn generalized_pencil_via_files() {
    let dir = tempfile::tempdir().unwrap();
    let a_path = dir.path().join("a.mtx");
    let b_path = dir.path().join("b.mtx");
    std::fs::write(
        &a_path,
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 3.0\n2 2 8.0\n3 3 15.0\n",
    )
    .unwrap();
    std::fs::write(
        &b_path,
        "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 1.0\n2 2 2.0\n3 3 3.0\n",
    )
    .unwrap();
    let stdout = run_ok(&[
        "--matrix",
        a_path.to_str().unwrap(),
        "--matrix-b",
        b_path.to_str().unwrap(),
        "--solver",
        "trplk",
        "--nev",
        "1",
        "--tol",
        "1e-12",
    ]);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let got = report["eigenpairs"][0]["value"].as_f64().unwrap();
    assert!((got - 3.0).abs() < 1e-10, "pencil eigenvalue {got}");
}
