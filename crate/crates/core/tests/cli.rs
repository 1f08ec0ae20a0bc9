use std::path::Path;
use std::process::{Command, Output};

use halfline_bvp::kernel::{denominator, make_shift, KernelError, KernelMode};
use halfline_bvp::model::MultipointProblem;
use halfline_bvp::theorems::example;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_halfline-bvp"))
}

fn example_config(mode: &str, extra: &str) -> String {
    format!(
        r#"# worked example
[problem]
alphas = 0.11, 0.89
xis = 0, 0.11
f = "{}"

[bounds]
kind = Linf
phi = "{}"

[bracket]
alpha = "{}"
beta = "{}"

[shift]
k = 0.86
M = 0.35
mode = {mode}
{extra}
"#,
        example::F,
        example::PHI,
        example::ALPHA,
        example::BETA
    )
}

fn write(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn machine_value(out: &str, key: &str) -> Option<f64> {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .and_then(|v| v.parse().ok())
}

#[test]
fn analyze_reports_constants_in_both_modes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "ex.conf", &example_config("as_printed", ""));
    let o = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("kernel mode: as_printed"));
    assert!((machine_value(&out, "C1_tail").unwrap() - 1.2305).abs() < 1e-3);
    assert!((machine_value(&out, "C2_tail").unwrap() - 1.3395).abs() < 1e-3);
    assert!(machine_value(&out, "C1").unwrap() >= machine_value(&out, "C1_tail").unwrap());

    let o = run(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "derived",
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().all(|l| l.contains('=')), "{out}");
    assert!(machine_value(&out, "B1").unwrap() > 0.0);
    assert!(machine_value(&out, "kernel_ode_residual").unwrap() < 1e-4);
    assert!(machine_value(&out, "C1").is_none());
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let no_shift = example_config("as_printed", "").replace("[shift]\nk = 0.86\nM = 0.35\nmode = as_printed\n", "");
    let cfg = write(&dir, "a.conf", &no_shift);
    let o = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[shift]"));

    let cfg = write(&dir, "b.conf", &example_config("as_printed", "[solver]\nspeed = 3\n"));
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--output", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));

    let o = run(&["analyze", "--config", dir.path().join("missing.conf").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write(
        &dir,
        "c.conf",
        &example_config("as_printed", "").replace("M = 0.35", "M = 0.1"),
    );
    let o = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bounds_less = example_config("as_printed", "")
        .replace("[bounds]\nkind = Linf\n", "")
        .replace(&format!("phi = \"{}\"\n", example::PHI), "");
    let cfg = write(&dir, "d.conf", &bounds_less);
    let o = run(&["check-existence", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[bounds]"));
}

#[test]
fn degenerate_shift_exits_with_code_three() {
    // root of D in the node x for weights (0.1, 0.9) at nodes (0, x)
    let d = |x: f64| {
        let p = MultipointProblem::from_source(vec![0.1, 0.9], vec![0.0, x], "0").unwrap();
        match denominator(&p, &make_shift(0.86, 0.35, KernelMode::AsPrinted).unwrap()) {
            Ok(v) => v,
            Err(KernelError::Degenerate { value, .. }) => value,
            Err(e) => panic!("{e}"),
        }
    };
    let (mut lo, mut hi) = (0.0, 4.0);
    assert!(d(lo) > 0.0 && d(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if d(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let dir = TempDir::new().unwrap();
    let text = format!("[problem]\nalphas = 0.1, 0.9\nxis = 0, {lo:e}\nf = \"0\"\n[shift]\nk = 0.86\nM = 0.35\n");
    let cfg = write(&dir, "deg.conf", &text);
    let o = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn check_existence_reports_hypotheses() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "ex.conf", &example_config("as_printed", ""));
    let o = run(&["check-existence", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for key in [
        "bracket_valid=true",
        "monotone_in_y=true",
        "nontrivial=true",
        "dominated=true",
        "phi_integrable=false",
    ] {
        assert!(out.contains(key), "missing {key} in\n{out}");
    }
    assert!(out.contains("R_tilde=1\n"));
    assert!((machine_value(&out, "I2_coeff").unwrap() - 0.00022).abs() < 2e-5);
    assert!(out.contains("K-factor"));
    assert!(out.contains("not integrable"));

    let dominating =
        example_config("as_printed", "").replace(&format!("phi = \"{}\"", example::PHI), "phi = \"r*10*exp(0)+0*t\"");
    let cfg = write(&dir, "dom.conf", &dominating);
    let o = run(&["check-existence", "--config", cfg.to_str().unwrap(), "-q"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("interval=none"));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<[f64; 4]>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut comments = Vec::new();
    let mut rows = Vec::new();
    let mut header = None;
    for line in text.lines() {
        if line.starts_with('#') {
            comments.push(line.to_string());
        } else if header.is_none() {
            header = Some(line.to_string());
        } else {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            rows.push([v[0], v[1], v[2], v[3]]);
        }
    }
    assert_eq!(header.as_deref(), Some("t,u,du,ode_residual"));
    assert!(!text.contains('\r'));
    (comments, rows)
}

#[test]
fn solve_zero_problem_writes_zero_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "zero.conf",
        "[problem]\nalphas = 0.5, 0.5\nxis = 0, 1\nf = \"0\"\n[shift]\nk = 0.86\nM = 0.35\nmode = derived\n[solver]\nnodes = 120\n",
    );
    let csv = dir.path().join("u.csv");
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (comments, rows) = read_csv(&csv);
    assert!(comments.is_empty());
    assert_eq!(rows.len(), 120);
    assert!(rows.iter().all(|r| r[1] == 0.0 && r[2] == 0.0 && r[3] == 0.0));
}

#[test]
fn solve_reports_residual_consistent_with_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "lin.conf",
        "[problem]\nalphas = 0.5, 0.5\nxis = 0, 1\nf = \"exp(-t)+0*x+0*y\"\n[shift]\nk = 1\nM = 0.5\nmode = derived\n[solver]\nnodes = 200\n",
    );
    let csv = dir.path().join("u.csv");
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        csv.to_str().unwrap(),
        "-q",
    ]);
    let out = stdout(&o);
    let (_, rows) = read_csv(&csv);
    let sup = rows.iter().fold(0.0f64, |m, r| m.max(r[3]));
    assert_eq!(sup, machine_value(&out, "ode_residual").unwrap());
    assert_eq!(rows[0][1], 0.0);
}

#[test]
fn solve_with_one_iteration_is_flagged() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "ex.conf",
        &example_config("derived", "[solver]\nmax_iter = 1\nnodes = 120\n"),
    );
    let csv = dir.path().join("u.csv");
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let (comments, rows) = read_csv(&csv);
    assert_eq!(comments.len(), 1);
    assert!(comments[0].contains("not converged"));
    assert_eq!(rows.len(), 120);
}

#[test]
fn solve_in_printed_mode_is_labelled_uncertified() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "ex.conf",
        &example_config("as_printed", "[solver]\nnodes = 120\neps = 0.01\n"),
    );
    let csv = dir.path().join("u.csv");
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        csv.to_str().unwrap(),
    ]);
    assert!(stdout(&o).contains("UNCERTIFIED"));
    assert!(stdout(&o).contains("certified=false"));
    assert!(csv.exists());
}

#[test]
fn reproduce_example_rows_and_exit_code() {
    let o = run(&["reproduce-example"]);
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with("row=")).collect();
    let names: Vec<&str> = rows
        .iter()
        .map(|l| l.split_whitespace().next().unwrap().trim_start_matches("row="))
        .collect();
    assert_eq!(
        names,
        [
            "C1",
            "C2",
            "K",
            "I2_coeff",
            "I1_coeff",
            "LHS_coeff",
            "R0",
            "R1",
            "alpha_norm",
            "beta_norm",
            "R_tilde"
        ]
    );
    let all_pass = rows.iter().all(|l| l.ends_with("pass=true"));
    assert_eq!(o.status.code() == Some(0), all_pass);
    assert!(out.contains("info.C1_tail="));
    for name in ["alpha_norm", "beta_norm", "R_tilde", "I2_coeff"] {
        let line = rows.iter().find(|l| l.starts_with(&format!("row={name} "))).unwrap();
        assert!(line.ends_with("pass=true"), "{line}");
    }

    let o = run(&["reproduce-example", "--perturb-k", "0.9"]);
    assert_ne!(o.status.code(), Some(0));
    let out = stdout(&o);
    let c2_tail: f64 = machine_value(&out, "info.C2_tail").unwrap();
    assert!((c2_tail - 1.3395).abs() > 1e-3);
}
