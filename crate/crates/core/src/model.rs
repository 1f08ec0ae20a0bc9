//! Problem data: the multi-point BVP, Carathéodory bound families and
//! lower/upper solution brackets.

use std::fmt;

use thiserror::Error;

use crate::expr::{EvalError, Expression, ParseError};
use crate::quad::{integrate_interval, QuadError, Tolerance};

/// Variables of the nonlinearity `f(t, x, y)`, `x = u`, `y = u'`.
pub const F_VARS: [&str; 3] = ["t", "x", "y"];
/// Variables of a bound family `phi_r(t)`.
pub const BOUND_VARS: [&str; 2] = ["t", "r"];
/// Variables of bracket and other scalar functions of time.
pub const TIME_VARS: [&str; 1] = ["t"];

/// Absolute tolerance on `|sum alpha_i - 1|`.
pub const RESONANCE_TOL: f64 = 1e-12;
/// `|f(t0, 0, 0)|` above this counts as a nontriviality witness.
pub const NONTRIVIAL_TOL: f64 = 1e-12;
/// Radii at which bound families are sampled when the caller gives none.
pub const DEFAULT_R_SAMPLES: [f64; 4] = [0.5, 1.0, 2.0, 10.0];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{alphas} weights but {xis} nodes; both lists need m-1 entries")]
    LengthMismatch { alphas: usize, xis: usize },
    #[error("at least one weight/node pair is required (m >= 2)")]
    Empty,
    #[error("{0} contains a non-finite number")]
    NonFinite(&'static str),
    #[error("cannot parse {what}: {source}")]
    Parse {
        what: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("{what} must be an expression in ({expected})")]
    WrongVariables { what: &'static str, expected: String },
}

fn require_vars(e: &Expression, vars: &[&str], what: &'static str) -> Result<(), ModelError> {
    if e.vars().iter().map(String::as_str).eq(vars.iter().copied()) {
        Ok(())
    } else {
        Err(ModelError::WrongVariables {
            what,
            expected: vars.join(", "),
        })
    }
}

/// `u'' = f(t, u, u')`, `u(0) = 0`, `u'(inf) = sum alpha_i u'(xi_i)`.
#[derive(Debug, Clone)]
pub struct MultipointProblem {
    alphas: Vec<f64>,
    xis: Vec<f64>,
    f: Expression,
}

impl MultipointProblem {
    /// Structural checks only (matching lengths, finite data). The resonance
    /// invariants are reported by [`MultipointProblem::validate`].
    pub fn new(alphas: Vec<f64>, xis: Vec<f64>, f: Expression) -> Result<Self, ModelError> {
        if alphas.len() != xis.len() {
            return Err(ModelError::LengthMismatch {
                alphas: alphas.len(),
                xis: xis.len(),
            });
        }
        if alphas.is_empty() {
            return Err(ModelError::Empty);
        }
        if !alphas.iter().all(|a| a.is_finite()) {
            return Err(ModelError::NonFinite("alphas"));
        }
        if !xis.iter().all(|x| x.is_finite()) {
            return Err(ModelError::NonFinite("xis"));
        }
        require_vars(&f, &F_VARS, "f")?;
        Ok(MultipointProblem { alphas, xis, f })
    }

    pub fn from_source(alphas: Vec<f64>, xis: Vec<f64>, f: &str) -> Result<Self, ModelError> {
        let f = Expression::parse(f, &F_VARS).map_err(|source| ModelError::Parse { what: "f", source })?;
        Self::new(alphas, xis, f)
    }

    /// Number of boundary points plus one, as in `m`-point problem.
    pub fn m(&self) -> usize {
        self.alphas.len() + 1
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn xis(&self) -> &[f64] {
        &self.xis
    }

    /// `xi_{m-1}`, the last interior node.
    pub fn last_node(&self) -> f64 {
        *self.xis.last().expect("non-empty by construction")
    }

    pub fn nonlinearity(&self) -> &Expression {
        &self.f
    }

    pub fn f(&self, t: f64, x: f64, y: f64) -> Result<f64, EvalError> {
        self.f.eval(&[t, x, y])
    }

    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        checks.push(Check::new(
            "first node is zero",
            self.xis[0] == 0.0,
            format!("xi_1 = {}", self.xis[0]),
        ));
        let increasing = self.xis.windows(2).all(|w| w[0] < w[1]);
        checks.push(Check::new(
            "nodes strictly increasing",
            increasing,
            format!("xi = {:?}", self.xis),
        ));
        let positive = self.alphas.iter().all(|a| *a > 0.0);
        checks.push(Check::new(
            "weights positive",
            positive,
            format!("alpha = {:?}", self.alphas),
        ));
        let sum: f64 = self.alphas.iter().sum();
        checks.push(Check::new(
            "resonance: sum of weights is 1",
            (sum - 1.0).abs() <= RESONANCE_TOL,
            format!("sum = {sum:.17}, tolerance {RESONANCE_TOL:e}"),
        ));
        ValidationReport { checks }
    }

    /// First grid point with `|f(t0, 0, 0)| > 1e-12`, if any.
    pub fn check_nontriviality(&self, grid: &[f64]) -> Result<Option<Witness>, EvalError> {
        for &t in grid {
            let value = self.f(t, 0.0, 0.0)?;
            if value.abs() > NONTRIVIAL_TOL {
                return Ok(Some(Witness { t0: t, value }));
            }
        }
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub t0: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check { name, passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "  [{mark}] {} ({})", c.name, c.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// `phi_r` integrable on `[0, inf)`.
    L1,
    /// `phi_r` essentially bounded.
    Linf,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::L1 => "L1",
            BoundKind::Linf => "Linf",
        })
    }
}

/// The family `phi_r(t)` dominating `|f(t, x, y)|` on `|x|, |y| < r`.
#[derive(Debug, Clone)]
pub struct BoundFamily {
    pub kind: BoundKind,
    phi: Expression,
}

impl BoundFamily {
    pub fn new(kind: BoundKind, phi: Expression) -> Result<Self, ModelError> {
        require_vars(&phi, &BOUND_VARS, "phi")?;
        Ok(BoundFamily { kind, phi })
    }

    pub fn from_source(kind: BoundKind, phi: &str) -> Result<Self, ModelError> {
        let phi = Expression::parse(phi, &BOUND_VARS).map_err(|source| ModelError::Parse { what: "phi", source })?;
        Self::new(kind, phi)
    }

    pub fn expression(&self) -> &Expression {
        &self.phi
    }

    pub fn phi(&self, t: f64, r: f64) -> Result<f64, EvalError> {
        self.phi.eval(&[t, r])
    }

    /// Sampled check of nonnegativity plus integrability (L1) or
    /// boundedness (Linf) for each radius in `r_samples`.
    pub fn check(&self, r_samples: &[f64], t_check: f64) -> Result<BoundFamilyReport, QuadError> {
        let n = 2000;
        let mut min_value = f64::INFINITY;
        let mut per_radius = Vec::with_capacity(r_samples.len());
        for &r in r_samples {
            let mut sup_near: f64 = 0.0;
            let mut sup_far: f64 = 0.0;
            for j in 0..=n {
                let t = t_check * j as f64 / n as f64;
                let v = self.phi(t, r).map_err(|source| QuadError::Eval { at: t, source })?;
                min_value = min_value.min(v);
                sup_near = sup_near.max(v.abs());
                let t_far = t_check * (1.0 + 7.0 * j as f64 / n as f64);
                let w = self
                    .phi(t_far, r)
                    .map_err(|source| QuadError::Eval { at: t_far, source })?;
                min_value = min_value.min(w);
                sup_far = sup_far.max(w.abs());
            }
            let bounded = sup_far <= 2.0 * sup_near + 1e-12;
            // Cauchy test on int_0^T phi_r for doubling T.
            let mut integrals = Vec::new();
            let mut previous = 0.0;
            let mut upper = 0.0;
            for j in 0..8 {
                let next = t_check * 2f64.powi(j);
                let piece = integrate_interval(|t| self.phi(t, r), upper, next, &[], Tolerance::new(1e-8, 1e-12))?;
                previous += piece.value;
                upper = next;
                integrals.push(previous);
            }
            let last = integrals[integrals.len() - 1];
            let before = integrals[integrals.len() - 2];
            let integrable = (last - before).abs() <= 1e-6 * last.abs().max(1.0);
            per_radius.push(RadiusCheck {
                r,
                sup: sup_near.max(sup_far),
                bounded,
                integral: last,
                integrable,
            });
        }
        Ok(BoundFamilyReport {
            kind: self.kind,
            t_check,
            min_value,
            per_radius,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusCheck {
    pub r: f64,
    /// Sampled sup of `|phi_r|` on `[0, 8 t_check]`.
    pub sup: f64,
    pub bounded: bool,
    /// `int_0^{128 t_check} phi_r`.
    pub integral: f64,
    pub integrable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundFamilyReport {
    pub kind: BoundKind,
    pub t_check: f64,
    pub min_value: f64,
    pub per_radius: Vec<RadiusCheck>,
}

impl BoundFamilyReport {
    pub fn nonnegative(&self) -> bool {
        self.min_value >= 0.0
    }

    /// Whether the declared kind holds at every sampled radius.
    pub fn kind_holds(&self) -> bool {
        self.per_radius.iter().all(|c| match self.kind {
            BoundKind::L1 => c.integrable,
            BoundKind::Linf => c.bounded,
        })
    }

    pub fn all_integrable(&self) -> bool {
        self.per_radius.iter().all(|c| c.integrable)
    }

    pub fn passed(&self) -> bool {
        self.nonnegative() && self.kind_holds()
    }
}

/// Lower solution `alpha` and upper solution `beta`, functions of `t`.
#[derive(Debug, Clone)]
pub struct BracketPair {
    alpha_low: Expression,
    beta_up: Expression,
}

impl BracketPair {
    pub fn new(alpha_low: Expression, beta_up: Expression) -> Result<Self, ModelError> {
        require_vars(&alpha_low, &TIME_VARS, "alpha")?;
        require_vars(&beta_up, &TIME_VARS, "beta")?;
        Ok(BracketPair { alpha_low, beta_up })
    }

    pub fn from_source(alpha: &str, beta: &str) -> Result<Self, ModelError> {
        let parse =
            |src: &str, what| Expression::parse(src, &TIME_VARS).map_err(|source| ModelError::Parse { what, source });
        Self::new(parse(alpha, "alpha")?, parse(beta, "beta")?)
    }

    pub fn lower_expr(&self) -> &Expression {
        &self.alpha_low
    }

    pub fn upper_expr(&self) -> &Expression {
        &self.beta_up
    }

    pub fn lower(&self, t: f64) -> Result<f64, EvalError> {
        self.alpha_low.eval(&[t])
    }

    pub fn upper(&self, t: f64) -> Result<f64, EvalError> {
        self.beta_up.eval(&[t])
    }
}
