//! Command-line front end: config files, reports and CSV export.
//!
//! Config files are line oriented:
//!
//! ```text
//! [problem]
//! alphas = 0.11, 0.89
//! xis = 0, 0.11
//! f = "(2+sin(t))/1000*exp(-abs(x))*abs(1-x)/(x^2+1)*(y-1)"
//!
//! [shift]
//! k = 0.86
//! M = 0.35
//! mode = as_printed
//! ```
//!
//! Optional sections are `[bounds]` (kind, phi), `[bracket]` (alpha, beta),
//! `[solver]` (t_max, nodes, tol, max_iter, damping, eps) and `[search]`
//! (r_min, r_max, rel_tol). Lines starting with `#` or `;` are comments.
//! Unknown sections and keys are errors.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::fixpoint::{
    default_t_max, graded_grid, picard_solve, FixpointError, GridFunction, SolveOptions, DEFAULT_MAX_ITER,
    DEFAULT_NODES, DEFAULT_TOL,
};
use crate::kernel::{kernel_constants, make_shift, GreenKernel, KernelConstants, KernelError, KernelMode};
use crate::model::{BoundFamily, BoundKind, BracketPair, MultipointProblem, DEFAULT_R_SAMPLES};
use crate::quad::{Envelope, QuadError};
use crate::theorems::{
    bracket_norms, check_ball_invariance_derived, check_domination, check_monotone_in_y, default_penalty,
    default_t_check, example, existence_lhs, find_r_interval, norm_sup_of, quadratic_coefficients, verify_bracket,
    LhsInputs, RInterval, RSearch, TheoremError,
};

#[derive(Debug, Parser)]
#[command(
    name = "halfline-bvp",
    version,
    about = "Shift-perturbation analysis of resonant multi-point BVPs on the half-line"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Kernel mode; overrides `mode` in the [shift] section.
    #[arg(long, global = true)]
    pub mode: Option<KernelMode>,
    /// Print only the machine-readable key=value lines.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel constants for the configured shift.
    Analyze {
        #[arg(long)]
        config: PathBuf,
    },
    /// Hypotheses of the existence theorems and the admissible radii.
    CheckExistence {
        #[arg(long)]
        config: PathBuf,
    },
    /// Picard iteration; writes t,u,du,ode_residual to the output CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Recompute the constants of the built-in worked example and compare
    /// them with the published values.
    ReproduceExample {
        #[arg(long, hide = true)]
        perturb_k: Option<f64>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 success, 1 other failure, 2 config, 3 degenerate shift, 4 no convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::Failed(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::Degenerate { .. } => CliError::Degenerate(e.to_string()),
            KernelError::NonPositive { .. } | KernelError::NonOscillatory { .. } | KernelError::InvalidProblem(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<QuadError> for CliError {
    fn from(e: QuadError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<TheoremError> for CliError {
    fn from(e: TheoremError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<FixpointError> for CliError {
    fn from(e: FixpointError) -> Self {
        CliError::Failed(e.to_string())
    }
}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("problem", &["alphas", "xis", "f"]),
    ("bounds", &["kind", "phi"]),
    ("bracket", &["alpha", "beta"]),
    ("shift", &["k", "M", "mode"]),
    ("solver", &["t_max", "nodes", "tol", "max_iter", "damping", "eps"]),
    ("search", &["r_min", "r_max", "rel_tol"]),
];

/// Raw `[section] key = value` content, checked against the known keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDocument {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(CliError::Config(format!("line {lineno}: unknown section [{name}]")));
                }
                if sections.contains_key(name) {
                    return Err(CliError::Config(format!("line {lineno}: duplicate section [{name}]")));
                }
                sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {lineno}: expected `key = value`, got `{line}`"
                )));
            };
            let Some(section) = current.as_deref() else {
                return Err(CliError::Config(format!("line {lineno}: key outside of any section")));
            };
            let key = key.trim();
            let allowed = SECTIONS
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(CliError::Config(format!(
                    "line {lineno}: unknown key `{key}` in [{section}] (expected one of {})",
                    allowed.join(", ")
                )));
            }
            let value = unquote(value.trim())
                .ok_or_else(|| CliError::Config(format!("line {lineno}: unterminated quote in `{key}`")))?;
            let entries = sections.get_mut(section).expect("section inserted at header");
            if entries.insert(key.to_string(), value).is_some() {
                return Err(CliError::Config(format!(
                    "line {lineno}: duplicate key `{key}` in [{section}]"
                )));
            }
        }
        Ok(ConfigDocument { sections })
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }
}

fn unquote(v: &str) -> Option<String> {
    match v.strip_prefix('"') {
        Some(inner) => inner.strip_suffix('"').map(str::to_string),
        None => Some(v.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftConfig {
    pub k: f64,
    pub m: f64,
    pub mode: KernelMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub t_max: Option<f64>,
    pub nodes: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub eps: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t_max: None,
            nodes: DEFAULT_NODES,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            damping: 1.0,
            eps: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub problem: MultipointProblem,
    pub bounds: Option<BoundFamily>,
    pub bracket: Option<BracketPair>,
    pub shift: ShiftConfig,
    pub solver: SolverConfig,
    pub search: RSearch,
}

fn required<'a>(doc: &'a ConfigDocument, section: &str, key: &str) -> Result<&'a str, CliError> {
    doc.get(section, key)
        .ok_or_else(|| CliError::Config(format!("missing key `{key}` in [{section}]")))
}

fn number<T: std::str::FromStr>(section: &str, key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("[{section}] {key}: cannot parse `{v}` as a number")))
}

fn optional<T: std::str::FromStr>(doc: &ConfigDocument, section: &str, key: &str) -> Result<Option<T>, CliError> {
    doc.get(section, key).map(|v| number(section, key, v)).transpose()
}

fn list(section: &str, key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|x| number(section, key, x)).collect()
}

impl Config {
    pub fn from_document(doc: &ConfigDocument) -> Result<Self, CliError> {
        for name in ["problem", "shift"] {
            if doc.section(name).is_none() {
                return Err(CliError::Config(format!("missing section [{name}]")));
            }
        }
        let alphas = list("problem", "alphas", required(doc, "problem", "alphas")?)?;
        let xis = list("problem", "xis", required(doc, "problem", "xis")?)?;
        let problem = MultipointProblem::from_source(alphas, xis, required(doc, "problem", "f")?)
            .map_err(|e| CliError::Config(format!("[problem] {e}")))?;
        let validation = problem.validate();
        if !validation.passed() {
            let failed: Vec<String> = validation
                .failures()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect();
            return Err(CliError::Config(format!("[problem] {}", failed.join("; "))));
        }

        let bounds = match doc.section("bounds") {
            None => None,
            Some(_) => {
                let kind = match required(doc, "bounds", "kind")? {
                    "L1" => BoundKind::L1,
                    "Linf" => BoundKind::Linf,
                    other => {
                        return Err(CliError::Config(format!(
                            "[bounds] kind must be L1 or Linf, got `{other}`"
                        )))
                    }
                };
                Some(
                    BoundFamily::from_source(kind, required(doc, "bounds", "phi")?)
                        .map_err(|e| CliError::Config(format!("[bounds] {e}")))?,
                )
            }
        };
        let bracket = match doc.section("bracket") {
            None => None,
            Some(_) => Some(
                BracketPair::from_source(required(doc, "bracket", "alpha")?, required(doc, "bracket", "beta")?)
                    .map_err(|e| CliError::Config(format!("[bracket] {e}")))?,
            ),
        };
        let shift = ShiftConfig {
            k: number("shift", "k", required(doc, "shift", "k")?)?,
            m: number("shift", "M", required(doc, "shift", "M")?)?,
            mode: match doc.get("shift", "mode") {
                None => KernelMode::AsPrinted,
                Some(v) => v.parse().map_err(|e| CliError::Config(format!("[shift] {e}")))?,
            },
        };
        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            t_max: optional(doc, "solver", "t_max")?,
            nodes: optional(doc, "solver", "nodes")?.unwrap_or(defaults.nodes),
            tol: optional(doc, "solver", "tol")?.unwrap_or(defaults.tol),
            max_iter: optional(doc, "solver", "max_iter")?.unwrap_or(defaults.max_iter),
            damping: optional(doc, "solver", "damping")?.unwrap_or(defaults.damping),
            eps: optional(doc, "solver", "eps")?,
        };
        let d = RSearch::default();
        let search = RSearch {
            r_min: optional(doc, "search", "r_min")?.unwrap_or(d.r_min),
            r_max: optional(doc, "search", "r_max")?.unwrap_or(d.r_max),
            rel_tol: optional(doc, "search", "rel_tol")?.unwrap_or(d.rel_tol),
        };
        if !(search.r_min > 0.0 && search.r_max > search.r_min && search.rel_tol > 0.0) {
            return Err(CliError::Config(format!(
                "[search] needs 0 < r_min < r_max and rel_tol > 0 (got {}, {}, {})",
                search.r_min, search.r_max, search.rel_tol
            )));
        }
        Ok(Config {
            problem,
            bounds,
            bracket,
            shift,
            solver,
            search,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_document(&ConfigDocument::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        format!("{:.*}", (5 - e).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

/// Human-readable text plus `key=value` lines at full precision.
#[derive(Debug, Default)]
pub struct Report {
    text: String,
    machine: Vec<String>,
}

impl Report {
    fn line(&mut self, s: impl Display) {
        self.text.push_str(&s.to_string());
        self.text.push('\n');
    }

    fn kv(&mut self, key: &str, value: impl Display) {
        self.machine.push(format!("{key}={value}"));
    }

    fn raw(&mut self, s: String) {
        self.machine.push(s);
    }

    fn emit(&self, out: &mut dyn Write, quiet: bool) -> std::io::Result<()> {
        if !quiet {
            out.write_all(self.text.as_bytes())?;
            if !self.machine.is_empty() {
                writeln!(out)?;
            }
        }
        for m in &self.machine {
            writeln!(out, "{m}")?;
        }
        Ok(())
    }
}

fn verdict(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut report = Report::default();
    let result = match &cli.command {
        Command::Analyze { config } => {
            let cfg = with_mode(Config::load(config)?, cli.mode);
            analyze(&cfg, &mut report)
        }
        Command::CheckExistence { config } => {
            let cfg = with_mode(Config::load(config)?, cli.mode);
            check_existence(&cfg, &mut report)
        }
        Command::Solve { config, output } => {
            let cfg = with_mode(Config::load(config)?, cli.mode);
            solve(&cfg, output, &mut report)
        }
        Command::ReproduceExample { perturb_k } => reproduce_example(perturb_k.unwrap_or(example::K), &mut report),
    };
    report.emit(out, cli.quiet)?;
    result
}

fn with_mode(mut cfg: Config, mode: Option<KernelMode>) -> Config {
    if let Some(m) = mode {
        cfg.shift.mode = m;
    }
    cfg
}

fn build_kernel(p: &MultipointProblem, s: &ShiftConfig, mode: KernelMode) -> Result<GreenKernel, CliError> {
    Ok(GreenKernel::new(p, make_shift(s.k, s.m, mode)?)?)
}

fn describe_shift(gk: &GreenKernel, report: &mut Report) {
    let sp = gk.shift();
    report.line(format!("kernel mode: {}", gk.mode()));
    report.line(format!(
        "k = {}, M = {}, gamma = {}, D = {}",
        sig6(sp.damping),
        sig6(sp.stiffness),
        sig6(sp.gamma),
        sig6(gk.denominator())
    ));
    report.kv("mode", gk.mode());
    report.kv("k", sp.damping);
    report.kv("M", sp.stiffness);
    report.kv("gamma", sp.gamma);
    report.kv("D", gk.denominator());
}

fn describe_constants(kc: &KernelConstants, report: &mut Report) {
    for (name, c) in [("C1", kc.c1), ("C2", kc.c2)] {
        if let Some(c) = c {
            report.line(format!(
                "{name} = {}  (s < xi_last: {}, s >= xi_last: {}, argmax (t, s) = ({}, {}))",
                sig6(c.overall()),
                sig6(c.interior),
                sig6(c.tail),
                sig6(c.argmax.0),
                sig6(c.argmax.1)
            ));
            report.kv(name, c.overall());
            report.kv(&format!("{name}_interior"), c.interior);
            report.kv(&format!("{name}_tail"), c.tail);
        }
    }
    if kc.c2.is_some() {
        report.line(format!("C2 derivative formula: {}", kc.c2_formula));
    }
    report.line(format!("B1 = {}  (sup_t int |G(t,s)| ds)", sig6(kc.b1)));
    report.line(format!("B2 = {}  (sup_t int |dG/dt(t,s)| ds)", sig6(kc.b2)));
    report.kv("B1", kc.b1);
    report.kv("B2", kc.b2);
    let m = &kc.meta;
    report.line(format!(
        "search: t step {}, {} s points per segment, refinement tol {:e}, B horizon {}, {} B evaluations",
        sig6(m.t_step),
        m.s_points_per_segment,
        m.refine_tol,
        sig6(m.b_horizon),
        m.b_evaluations
    ));
}

fn analyze(cfg: &Config, report: &mut Report) -> Result<(), CliError> {
    let gk = build_kernel(&cfg.problem, &cfg.shift, cfg.shift.mode)?;
    describe_shift(&gk, report);
    let kc = kernel_constants(&gk)?;
    describe_constants(&kc, report);
    if gk.mode() == KernelMode::Derived {
        let grid: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
        let d = gk.defining_property(|s| (-s).exp(), &grid)?;
        report.line(format!(
            "kernel check with load e^(-s): ode residual {:e}, v(0) = {:e}, |v'(inf) - sum alpha_i v'(xi_i)| = {:e}",
            d.ode_residual, d.v0, d.bc_inf_residual
        ));
        report.kv("kernel_ode_residual", d.ode_residual);
        report.kv("kernel_v0", d.v0);
        report.kv("kernel_bc_inf_residual", d.bc_inf_residual);
    }
    Ok(())
}

/// `R~ = max(||alpha||, ||beta||)` with the decay hints from [`bracket_norms`].
fn rtilde_of(br: &BracketPair, report: &mut Report) -> Result<f64, CliError> {
    let (a, b) = bracket_norms(br)?;
    let rt = a.sup.max(b.sup);
    report.line(format!(
        "||alpha||_inf = {} (at t = {}), ||beta||_inf = {} (at t = {}), R~ = {}",
        sig6(a.sup),
        sig6(a.argmax),
        sig6(b.sup),
        sig6(b.argmax),
        sig6(rt)
    ));
    report.kv("alpha_norm", a.sup);
    report.kv("beta_norm", b.sup);
    report.kv("R_tilde", rt);
    Ok(rt)
}

fn check_existence(cfg: &Config, report: &mut Report) -> Result<(), CliError> {
    let p = &cfg.problem;
    let bf = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| CliError::Config("missing section [bounds]".into()))?;
    let gk = build_kernel(p, &cfg.shift, cfg.shift.mode)?;
    describe_shift(&gk, report);

    let validation = p.validate();
    for c in &validation.checks {
        report.line(format!("[{}] {}: {}", verdict(c.passed), c.name, c.detail));
    }
    report.kv("problem_valid", validation.passed());

    let t_check = default_t_check(p);
    let fam = bf.check(&DEFAULT_R_SAMPLES, t_check)?;
    report.line(format!(
        "[{}] phi_r >= 0 and {} at r = {:?}",
        verdict(fam.passed()),
        bf.kind,
        DEFAULT_R_SAMPLES
    ));
    report.kv("bounds_valid", fam.passed());
    if !fam.all_integrable() {
        report.line("note: phi_r is not integrable on [0, inf), so a hypothesis requiring phi_r in L1 fails and L1-based existence results do not apply");
    }
    report.kv("phi_integrable", fam.all_integrable());
    let dom = check_domination(p, bf, &DEFAULT_R_SAMPLES, t_check)?;
    match dom.violation {
        None => report.line(format!("[pass] |f(t,x,y)| <= phi_r(t) on {} samples", dom.samples)),
        Some(v) => report.line(format!(
            "[FAIL] |f| > phi_r at t = {}, x = {}, y = {}, r = {}: {} > {}",
            sig6(v.t),
            sig6(v.x),
            sig6(v.y),
            sig6(v.r),
            sig6(v.f.abs()),
            sig6(v.phi)
        )),
    }
    report.kv("dominated", dom.passed);

    let grid: Vec<f64> = (0..=1000).map(|i| 0.05 * i as f64).collect();
    let witness = p
        .check_nontriviality(&grid)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    match witness {
        Some(w) => {
            report.line(format!(
                "[pass] nontrivial: f(t0, 0, 0) = {} at t0 = {}",
                sig6(w.value),
                sig6(w.t0)
            ));
            report.kv("witness_t0", w.t0);
        }
        None => report.line("[FAIL] f(t, 0, 0) vanishes on the sampled grid; u = 0 may be the only solution"),
    }
    report.kv("nontrivial", witness.is_some());

    let rtilde = match &cfg.bracket {
        None => {
            report.line("form: nontrivial bounded solution (no lower/upper pair)");
            None
        }
        Some(br) => {
            report.line("form: solution between lower and upper solutions");
            let rt = rtilde_of(br, report)?;
            let b = verify_bracket(p, br, 2000, t_check)?;
            for c in &b.conditions {
                report.line(format!(
                    "[{}] {}: margin {:e}",
                    verdict(c.passed),
                    c.name,
                    c.margin + 0.0
                ));
            }
            report.kv("bracket_valid", b.passed());
            let ts: Vec<f64> = (0..=100).map(|i| t_check * i as f64 / 100.0).collect();
            let ys: Vec<f64> = (-20..=20).map(|i| 0.25 * i as f64).collect();
            let (lo, hi) = (-rt, rt);
            let xs: Vec<f64> = (0..=20).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect();
            let mono = check_monotone_in_y(p, &ts, &xs, &ys)?;
            match mono.counterexample {
                None => report.line(format!("[pass] f nondecreasing in y ({} pairs)", mono.pairs_checked)),
                Some(c) => report.line(format!(
                    "[FAIL] f decreases in y at t = {}, x = {}: f(y={}) = {} > f(y={}) = {}",
                    sig6(c.t),
                    sig6(c.x),
                    sig6(c.y1),
                    sig6(c.f1),
                    sig6(c.y2),
                    sig6(c.f2)
                )),
            }
            report.kv("monotone_in_y", mono.passed);
            Some(rt)
        }
    };

    match gk.mode() {
        KernelMode::AsPrinted => {
            let kc = kernel_constants(&gk)?;
            describe_constants(&kc, report);
            let inputs = LhsInputs::from_kernel(&gk, &kc)?;
            radius_inequality(&inputs, bf, rtilde, cfg.search, report)?;
        }
        KernelMode::Derived => {
            report.line(
                "radius inequality uses envelope constants of the as_printed kernel; checking T(B_R) in B_R directly",
            );
            for r in [0.1, 1.0, 10.0] {
                let b = check_ball_invariance_derived(&gk, bf, r)?;
                report.line(format!(
                    "[{}] R = {}: sup |Tu| <= {}, sup |(Tu)'| <= {}",
                    verdict(b.holds),
                    sig6(r),
                    sig6(b.value_sup),
                    sig6(b.slope_sup)
                ));
                report.raw(format!(
                    "ball R={r} value_sup={} slope_sup={} holds={}",
                    b.value_sup, b.slope_sup, b.holds
                ));
            }
        }
    }
    Ok(())
}

fn radius_inequality(
    inputs: &LhsInputs,
    bf: &BoundFamily,
    rtilde: Option<f64>,
    search: RSearch,
    report: &mut Report,
) -> Result<Option<RInterval>, CliError> {
    report.line(format!("K-factor = {}", sig6(inputs.k_factor())));
    report.kv("K", inputs.k_factor());
    if let Some(q) = quadratic_coefficients(inputs, bf)? {
        report.line(format!(
            "I1 = {} (r+1)^2, I2 = {} (r+1)^2, Cmax max(I1, I2) = {} (r+1)^2",
            sig6(q.i1),
            sig6(q.i2),
            sig6(q.lhs)
        ));
        report.kv("I1_coeff", q.i1);
        report.kv("I2_coeff", q.i2);
        report.kv("LHS_coeff", q.lhs);
    }
    let interval = find_r_interval(inputs, bf, rtilde, search)?;
    match interval {
        None => {
            report.line(format!("no admissible R in [{:e}, {:e}]", search.r_min, search.r_max));
            report.kv("interval", "none");
        }
        Some(iv) => {
            let open = |b: bool| if b { " (scan boundary)" } else { "" };
            report.line(format!(
                "admissible R in ({}{}, {}{})",
                sig6(iv.r0),
                open(iv.open_low),
                sig6(iv.r1),
                open(iv.open_high)
            ));
            report.kv("R0", iv.r0);
            report.kv("R1", iv.r1);
            let mid = existence_lhs(inputs, bf, iv.midpoint(), rtilde)?;
            report.line(format!(
                "at R = {}: LHS = {} (load {}, linear {})",
                sig6(mid.r),
                sig6(mid.lhs),
                sig6(mid.load_term),
                sig6(mid.linear_term)
            ));
            if let Some(rt) = rtilde {
                let eps = default_penalty(inputs.k, &mid, rt);
                report.line(format!("penalty eps = {}", sig6(eps)));
                report.kv("eps", eps);
            }
        }
    }
    report.line(format!(
        "search: R in [{:e}, {:e}], bisection rel tol {:e}",
        search.r_min, search.r_max, search.rel_tol
    ));
    Ok(interval)
}

/// Penalty for `T*`: configured, else from the admissible interval of the
/// printed-kernel inequality, else `0.01 k`.
fn choose_penalty(cfg: &Config, rtilde: f64, report: &mut Report) -> Result<f64, CliError> {
    if let Some(eps) = cfg.solver.eps {
        report.line(format!("penalty eps = {} (config)", sig6(eps)));
        return Ok(eps);
    }
    if let Some(bf) = &cfg.bounds {
        let printed = build_kernel(&cfg.problem, &cfg.shift, KernelMode::AsPrinted)?;
        let kc = kernel_constants(&printed)?;
        let inputs = LhsInputs::from_kernel(&printed, &kc)?;
        if let Some(iv) = find_r_interval(&inputs, bf, Some(rtilde), cfg.search)? {
            let mid = existence_lhs(&inputs, bf, iv.midpoint(), Some(rtilde))?;
            let eps = default_penalty(inputs.k, &mid, rtilde);
            report.line(format!("penalty eps = {} (from R = {})", sig6(eps), sig6(mid.r)));
            return Ok(eps);
        }
    }
    let eps = 0.01 * cfg.shift.k;
    report.line(format!(
        "penalty eps = {} (fallback 0.01 k; no admissible R)",
        sig6(eps)
    ));
    Ok(eps)
}

fn solve(cfg: &Config, output: &Path, report: &mut Report) -> Result<(), CliError> {
    let p = &cfg.problem;
    let gk = build_kernel(p, &cfg.shift, cfg.shift.mode)?;
    describe_shift(&gk, report);
    if gk.mode() == KernelMode::AsPrinted {
        report.line("WARNING: UNCERTIFIED - the as_printed kernel does not invert the shifted problem");
        report.kv("certified", false);
    }
    let s = &cfg.solver;
    let t_max = s.t_max.unwrap_or_else(|| default_t_max(cfg.shift.k, p.last_node()));
    let nodes = Arc::new(graded_grid(t_max, s.nodes, p.xis())?);
    let u0 = GridFunction::zero(Arc::clone(&nodes), cfg.shift.k / 2.0)?;
    let opts = SolveOptions {
        damping: s.damping,
        tol: s.tol,
        max_iter: s.max_iter,
    };
    report.line(format!(
        "grid: {} nodes on [0, {}]; tol {:e}, max_iter {}, damping {}",
        nodes.len(),
        sig6(t_max),
        s.tol,
        s.max_iter,
        s.damping
    ));
    let penalty = match &cfg.bracket {
        Some(br) => {
            let rt = rtilde_of(br, report)?;
            Some((br, choose_penalty(cfg, rt, report)?))
        }
        None => None,
    };
    let outcome = picard_solve(&gk, p, &u0, opts, penalty)?;
    let r = &outcome.report;
    report.line(format!(
        "{} after {} iterations; last increment {:e}, final damping {}",
        if outcome.converged {
            "converged"
        } else {
            "NOT converged"
        },
        outcome.iterations,
        outcome.increment,
        outcome.final_damping
    ));
    report.line(format!(
        "ode residual {:e} at t = {} (scheme error {:e}); u(0) = {:e}; |u'(inf) - sum alpha_i u'(xi_i)| = {:e}",
        r.ode_residual,
        sig6(r.ode_residual_at),
        r.scheme_error,
        r.bc0_residual,
        r.bc_inf_residual
    ));
    report.line(format!(
        "sup |u| = {}, sup |u'| = {}, u'(T_max) = {:e}, slope coherence {:e}",
        sig6(r.sup_u),
        sig6(r.sup_du),
        r.du_at_tmax,
        r.slope_coherence
    ));
    report.kv("converged", outcome.converged);
    report.kv("iterations", outcome.iterations);
    report.kv("increment", outcome.increment);
    report.kv("ode_residual", r.ode_residual);
    report.kv("scheme_error", r.scheme_error);
    report.kv("bc0_residual", r.bc0_residual);
    report.kv("bc_inf_residual", r.bc_inf_residual);

    if let Some((br, _)) = penalty {
        let sol = &outcome.solution;
        let mut violations = 0;
        let mut worst = f64::INFINITY;
        for (&t, &u) in sol.nodes().iter().zip(sol.values()) {
            let lo = br.lower(t).map_err(|e| CliError::Failed(e.to_string()))?;
            let hi = br.upper(t).map_err(|e| CliError::Failed(e.to_string()))?;
            let margin = (u - lo).min(hi - u);
            worst = worst.min(margin);
            if margin < 0.0 {
                violations += 1;
            }
        }
        report.line(format!(
            "[{}] alpha <= u <= beta at grid nodes: {} violations, min margin {:e}",
            verdict(violations == 0),
            violations,
            worst
        ));
        report.kv("bracket_violations", violations);
    }

    write_csv(output, &outcome.solution, &r.node_residuals, outcome.converged)?;
    report.line(format!("wrote {}", output.display()));
    if outcome.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "no convergence in {} iterations (increment {:e}); best iterate written to {}",
            outcome.iterations,
            outcome.increment,
            output.display()
        )))
    }
}

/// `t,u,du,ode_residual`; a leading `#` line flags an unconverged iterate.
pub fn write_csv(path: &Path, u: &GridFunction, residuals: &[f64], converged: bool) -> Result<(), CliError> {
    let mut s = String::new();
    if !converged {
        s.push_str("# not converged: best iterate\n");
    }
    s.push_str("t,u,du,ode_residual\n");
    for (((t, v), d), r) in u.nodes().iter().zip(u.values()).zip(u.slopes()).zip(residuals) {
        s.push_str(&format!("{t},{v},{d},{r}\n"));
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRow {
    pub name: &'static str,
    pub published: f64,
    pub computed: f64,
    pub tol: f64,
}

impl ExampleRow {
    pub fn diff(&self) -> f64 {
        (self.computed - self.published).abs()
    }

    pub fn passed(&self) -> bool {
        self.diff() <= self.tol
    }
}

/// Recomputed constants of the worked example against the published ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleComparison {
    pub rows: Vec<ExampleRow>,
    /// `(name, value)` pairs reported for context only.
    pub info: Vec<(&'static str, f64)>,
}

pub fn example_comparison(k: f64) -> Result<ExampleComparison, CliError> {
    let p = MultipointProblem::from_source(example::ALPHAS.to_vec(), example::XIS.to_vec(), example::F)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let bf = BoundFamily::from_source(BoundKind::Linf, example::PHI).map_err(|e| CliError::Failed(e.to_string()))?;
    let br = BracketPair::from_source(example::ALPHA, example::BETA).map_err(|e| CliError::Failed(e.to_string()))?;
    let gk = GreenKernel::new(&p, make_shift(k, example::M, KernelMode::AsPrinted)?)?;
    let kc = kernel_constants(&gk)?;
    let inputs = LhsInputs::from_kernel(&gk, &kc)?;

    // |alpha| <= 0.0075 away from a transient below 0.015 e^{-t/2}
    let alpha_norm = norm_sup_of(br.lower_expr(), 0.0075, Envelope::new(0.015, 0.5))?.sup;
    let beta_norm = norm_sup_of(br.upper_expr(), 1.0, Envelope::new(1.0, 0.5))?.sup;
    let rtilde = alpha_norm.max(beta_norm);
    let q = quadratic_coefficients(&inputs, &bf)?;
    let (i1, i2, lhs) = q.map_or((f64::NAN, f64::NAN, f64::NAN), |q| (q.i1, q.i2, q.lhs));
    let iv = find_r_interval(&inputs, &bf, Some(rtilde), RSearch::default())?;
    let (r0, r1) = iv.map_or((f64::NAN, f64::NAN), |iv| (iv.r0, iv.r1));

    let row = |name, published, computed, tol| ExampleRow {
        name,
        published,
        computed,
        tol,
    };
    let rows = vec![
        row("C1", 1.2305, inputs.c1, 1e-3),
        row("C2", 1.3395, inputs.c2, 1e-3),
        row("K", 0.9423, inputs.k_factor(), 1e-3),
        row("I2_coeff", 0.00022, i2, 2e-5),
        row("I1_coeff", 0.00174, i1, 2e-5),
        row("LHS_coeff", 0.00233, lhs, 2e-5),
        row("R0", 0.1615, r0, 1e-3),
        row("R1", 22.7199, r1, 1e-2),
        row("alpha_norm", 0.0087, alpha_norm, 5e-4),
        row("beta_norm", 1.0, beta_norm, 0.0),
        row("R_tilde", 1.0, rtilde, 0.0),
    ];

    // the same inequality with the suprema restricted to s >= xi_last
    let c1 = kc.c1.expect("as_printed constants");
    let c2 = kc.c2.expect("as_printed constants");
    let tail = inputs.with_constants(c1.tail, c2.tail);
    let mut info = vec![
        ("C1_interior", c1.interior),
        ("C1_tail", c1.tail),
        ("C2_interior", c2.interior),
        ("C2_tail", c2.tail),
        ("K_tail", tail.k_factor()),
    ];
    if let Some(q) = quadratic_coefficients(&tail, &bf)? {
        info.push(("LHS_coeff_tail", q.lhs));
    }
    if let Some(iv) = find_r_interval(&tail, &bf, Some(rtilde), RSearch::default())? {
        info.push(("R0_tail", iv.r0));
        info.push(("R1_tail", iv.r1));
    }
    Ok(ExampleComparison { rows, info })
}

impl Display for ExampleComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>12} {:>12} {:>12} {:>10}  result",
            "quantity", "published", "computed", "|diff|", "tol"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>12} {:>12} {:>12} {:>10}  {}",
                r.name,
                sig6(r.published),
                sig6(r.computed),
                sig6(r.diff()),
                sig6(r.tol),
                verdict(r.passed())
            )?;
        }
        Ok(())
    }
}

fn reproduce_example(k: f64, report: &mut Report) -> Result<(), CliError> {
    let cmp = example_comparison(k)?;
    report.line(format!(
        "worked example, kernel mode as_printed, k = {}, M = {}",
        sig6(k),
        sig6(example::M)
    ));
    report.line(&cmp);
    report
        .line("context (not compared): suprema split at s = xi_last and the inequality with the s >= xi_last suprema");
    for (name, v) in &cmp.info {
        report.line(format!("  {name} = {}", sig6(*v)));
    }
    for r in &cmp.rows {
        report.raw(format!(
            "row={} published={} computed={} diff={} tol={} pass={}",
            r.name,
            r.published,
            r.computed,
            r.diff(),
            r.tol,
            r.passed()
        ));
    }
    for (name, v) in &cmp.info {
        report.kv(&format!("info.{name}"), v);
    }
    let failed: Vec<&str> = cmp.rows.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} rows differ from the published values: {}",
            failed.len(),
            failed.join(", ")
        )))
    }
}
