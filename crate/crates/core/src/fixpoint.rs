//! Grid functions, the integral operators `T` and `T*`, damped Picard
//! iteration and residual certificates.
//!
//! A [`GridFunction`] stores `(u_j, u'_j)` on a graded grid over
//! `[0, T_max]` and is evaluated between nodes by cubic Hermite
//! interpolation. Beyond `T_max` both rows decay like `e^{-k(t - T_max)/2}`.
//!
//! The operators integrate over grid cells with an 8-point Gauss-Legendre
//! rule. Every kink of `s -> G(t_j, s)` sits on a cell boundary (the nodes
//! include all `xi_i`), and the kernel rows are tabulated once per grid so
//! an iteration costs one pass over the nonlinearity plus a matrix-vector
//! product. [`apply_t_adaptive`] evaluates the same integrals with adaptive
//! quadrature and is used as a cross-check.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::EvalError;
use crate::kernel::GreenKernel;
use crate::model::{BracketPair, MultipointProblem};
use crate::quad::{integrate_halfline, Integrand, QuadError, Tolerance};

pub const DEFAULT_NODES: usize = 400;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const MIN_DAMPING: f64 = 1.0 / 64.0;
/// Consecutive increment growths that trigger halving of the damping.
pub const GROWTH_WINDOW: usize = 5;
/// Ratio of the last to the first grid step.
const GRADING: f64 = 50.0;

const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixpointError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid function is not finite at t = {at}")]
    NonFinite { at: f64 },
    #[error("evaluation failed at s = {at}: {source}")]
    Eval { at: f64, source: EvalError },
    #[error("quadrature failed at node t = {at}: {source}")]
    Quad { at: f64, source: QuadError },
    #[error("penalty eps must be positive, got {0}")]
    InvalidPenalty(f64),
    #[error("damping must lie in (0, 1], got {0}")]
    InvalidDamping(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("bracket is inverted at t = {t}: alpha = {lower} > beta = {upper}")]
    BracketOrder { t: f64, lower: f64, upper: f64 },
}

/// `max(20/k, 2 xi_{m-1})`, where the kernel envelope has fallen to `e^{-10}`.
pub fn default_t_max(k: f64, last_node: f64) -> f64 {
    (20.0 / k).max(2.0 * last_node)
}

/// `n` nodes on `[0, t_max]` with geometrically growing steps (last step
/// about 50 times the first). Each positive `xi` replaces its nearest
/// interior node so that it lies on the grid.
pub fn graded_grid(t_max: f64, n: usize, xis: &[f64]) -> Result<Vec<f64>, FixpointError> {
    if n < 5 {
        return Err(FixpointError::InvalidGrid(format!("need at least 5 nodes, got {n}")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(FixpointError::InvalidGrid(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    let q = GRADING.powf(1.0 / (n - 2) as f64);
    let denom = q.powi(n as i32 - 1) - 1.0;
    let mut nodes: Vec<f64> = (0..n).map(|j| t_max * (q.powi(j as i32) - 1.0) / denom).collect();
    nodes[n - 1] = t_max;
    for &x in xis.iter().filter(|&&x| x > 0.0 && x < t_max) {
        let j = nodes.partition_point(|&t| t < x);
        if nodes[j] == x {
            continue;
        }
        let nearest = if j > 0 && (x - nodes[j - 1]) < (nodes[j] - x) {
            j - 1
        } else {
            j
        };
        if nearest == 0 || nearest == n - 1 || xis.contains(&nodes[nearest]) {
            nodes.insert(j, x);
        } else {
            nodes[nearest] = x;
        }
    }
    Ok(nodes)
}

/// A function on `[0, inf)` carried as value and slope samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    nodes: Arc<Vec<f64>>,
    u: Vec<f64>,
    du: Vec<f64>,
    decay: f64,
}

impl GridFunction {
    pub fn new(nodes: Arc<Vec<f64>>, u: Vec<f64>, du: Vec<f64>, decay: f64) -> Result<Self, FixpointError> {
        check_nodes(&nodes)?;
        if u.len() != nodes.len() || du.len() != nodes.len() {
            return Err(FixpointError::InvalidGrid(format!(
                "{} nodes but {} values and {} slopes",
                nodes.len(),
                u.len(),
                du.len()
            )));
        }
        if !(decay > 0.0) {
            return Err(FixpointError::InvalidGrid(format!(
                "tail decay must be positive, got {decay}"
            )));
        }
        if let Some(j) = (0..u.len()).find(|&j| !u[j].is_finite() || !du[j].is_finite()) {
            return Err(FixpointError::NonFinite { at: nodes[j] });
        }
        Ok(GridFunction { nodes, u, du, decay })
    }

    pub fn zero(nodes: Arc<Vec<f64>>, decay: f64) -> Result<Self, FixpointError> {
        let n = nodes.len();
        GridFunction::new(nodes, vec![0.0; n], vec![0.0; n], decay)
    }

    /// Sample `f` and its derivative `df` on the nodes.
    pub fn from_fn(
        nodes: Arc<Vec<f64>>,
        decay: f64,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
    ) -> Result<Self, FixpointError> {
        let u = nodes.iter().map(|&t| f(t)).collect();
        let du = nodes.iter().map(|&t| df(t)).collect();
        GridFunction::new(nodes, u, du, decay)
    }

    pub fn nodes(&self) -> &Arc<Vec<f64>> {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn slopes(&self) -> &[f64] {
        &self.du
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn t_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// `(u(t), u'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.nodes.len();
        let t_max = self.t_max();
        if t >= t_max {
            let e = (-self.decay * (t - t_max)).exp();
            return (self.u[n - 1] * e, self.du[n - 1] * e);
        }
        let t = t.max(0.0);
        let i = self.nodes.partition_point(|&x| x <= t).clamp(1, n - 1) - 1;
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let h = b - a;
        let x = (t - a) / h;
        let (y0, y1) = (self.u[i], self.u[i + 1]);
        let (m0, m1) = (self.du[i] * h, self.du[i + 1] * h);
        let x2 = x * x;
        let x3 = x2 * x;
        let value =
            (2.0 * x3 - 3.0 * x2 + 1.0) * y0 + (x3 - 2.0 * x2 + x) * m0 + (-2.0 * x3 + 3.0 * x2) * y1 + (x3 - x2) * m1;
        let slope = ((6.0 * x2 - 6.0 * x) * y0
            + (3.0 * x2 - 4.0 * x + 1.0) * m0
            + (-6.0 * x2 + 6.0 * x) * y1
            + (3.0 * x2 - 2.0 * x) * m1)
            / h;
        (value, slope)
    }

    /// `max(sup_j |u_j|, sup_j |u'_j|)`.
    pub fn norm(&self) -> f64 {
        self.u.iter().chain(&self.du).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Norm of `self - other` on the shared nodes.
    pub fn distance(&self, other: &GridFunction) -> f64 {
        let du = self.u.iter().zip(&other.u).map(|(a, b)| (a - b).abs());
        let dd = self.du.iter().zip(&other.du).map(|(a, b)| (a - b).abs());
        du.chain(dd).fold(0.0, f64::max)
    }

    /// `(1 - lambda) self + lambda other`.
    pub fn blend(&self, other: &GridFunction, lambda: f64) -> GridFunction {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - lambda) * x + lambda * y).collect();
        GridFunction {
            nodes: Arc::clone(&self.nodes),
            u: mix(&self.u, &other.u),
            du: mix(&self.du, &other.du),
            decay: self.decay,
        }
    }
}

fn check_nodes(nodes: &[f64]) -> Result<(), FixpointError> {
    if nodes.len() < 2 {
        return Err(FixpointError::InvalidGrid("fewer than two nodes".into()));
    }
    if nodes[0] != 0.0 {
        return Err(FixpointError::InvalidGrid(format!(
            "first node must be 0, got {}",
            nodes[0]
        )));
    }
    if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(FixpointError::InvalidGrid(format!(
            "nodes not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `delta(t, x)`: `x` clamped to `[alpha(t), beta(t)]`.
pub fn truncate_delta(t: f64, x: f64, br: &BracketPair) -> Result<f64, FixpointError> {
    let lower = br.lower(t).map_err(|source| FixpointError::Eval { at: t, source })?;
    let upper = br.upper(t).map_err(|source| FixpointError::Eval { at: t, source })?;
    clamp_checked(t, x, lower, upper)
}

fn clamp_checked(t: f64, x: f64, lower: f64, upper: f64) -> Result<f64, FixpointError> {
    if lower > upper {
        return Err(FixpointError::BracketOrder { t, lower, upper });
    }
    Ok(x.clamp(lower, upper))
}

struct KernelRow {
    /// Number of quadrature points inside the support of `G(t_j, .)`.
    len: usize,
    value: Vec<f64>,
    slope: Vec<f64>,
}

/// `T` and `T*` tabulated on a fixed grid.
pub struct Operator<'a> {
    gk: &'a GreenKernel,
    p: &'a MultipointProblem,
    nodes: Arc<Vec<f64>>,
    points: Vec<f64>,
    rows: Vec<KernelRow>,
}

impl<'a> Operator<'a> {
    pub fn new(gk: &'a GreenKernel, p: &'a MultipointProblem, nodes: Arc<Vec<f64>>) -> Result<Self, FixpointError> {
        check_nodes(&nodes)?;
        let t_max = nodes[nodes.len() - 1];
        for &x in gk.xis() {
            if x <= t_max && nodes.binary_search_by(|t| t.total_cmp(&x)).is_err() {
                return Err(FixpointError::InvalidGrid(format!("node xi = {x} is not a grid point")));
            }
        }
        let mut points = Vec::with_capacity(8 * nodes.len());
        let mut weights = Vec::with_capacity(8 * nodes.len());
        for w in nodes.windows(2) {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (x, wt) in GL_X.iter().zip(&GL_W) {
                points.push(mid - half * x);
                weights.push(half * wt);
                points.push(mid + half * x);
                weights.push(half * wt);
            }
        }
        let rows = nodes
            .par_iter()
            .map(|&t| {
                let end = gk.support_end(t);
                let cells = nodes.partition_point(|&x| x < end).min(nodes.len() - 1);
                let len = 8 * cells;
                let value = (0..len).map(|q| weights[q] * gk.green(t, points[q])).collect();
                let slope = (0..len).map(|q| weights[q] * gk.dt(t, points[q])).collect();
                KernelRow { len, value, slope }
            })
            .collect();
        Ok(Operator {
            gk,
            p,
            nodes,
            points,
            rows,
        })
    }

    pub fn nodes(&self) -> &Arc<Vec<f64>> {
        &self.nodes
    }

    fn check_input(&self, u: &GridFunction) -> Result<(), FixpointError> {
        if !Arc::ptr_eq(&self.nodes, u.nodes()) && self.nodes.as_slice() != u.nodes().as_slice() {
            return Err(FixpointError::InvalidGrid(
                "grid function lives on a different grid".into(),
            ));
        }
        Ok(())
    }

    fn integrate(&self, load: &[f64], decay: f64) -> Result<GridFunction, FixpointError> {
        let (u, du): (Vec<f64>, Vec<f64>) = self
            .rows
            .par_iter()
            .map(|row| {
                let mut v = 0.0;
                let mut dv = 0.0;
                for q in 0..row.len {
                    v += row.value[q] * load[q];
                    dv += row.slope[q] * load[q];
                }
                (v, dv)
            })
            .unzip();
        GridFunction::new(Arc::clone(&self.nodes), u, du, decay)
    }

    /// `(Tu)(t_j)` and `(Tu)'(t_j)` with load `f(s, u, u') + k u' + M u`.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction, FixpointError> {
        self.check_input(u)?;
        let sp = self.gk.shift();
        let (k, m) = (sp.damping, sp.stiffness);
        let load = self
            .points
            .par_iter()
            .map(|&s| {
                let (x, y) = u.eval(s);
                let f = self
                    .p
                    .f(s, x, y)
                    .map_err(|source| FixpointError::Eval { at: s, source })?;
                Ok(f + k * y + m * x)
            })
            .collect::<Result<Vec<f64>, FixpointError>>()?;
        self.integrate(&load, u.decay())
    }

    /// `T*u` with load `f(s, delta, u') + k u' + M u + eps (u - delta)`.
    pub fn apply_star(&self, u: &GridFunction, br: &BracketPair, eps: f64) -> Result<GridFunction, FixpointError> {
        if !(eps > 0.0) {
            return Err(FixpointError::InvalidPenalty(eps));
        }
        self.check_input(u)?;
        let sp = self.gk.shift();
        let (k, m) = (sp.damping, sp.stiffness);
        let load = self
            .points
            .par_iter()
            .map(|&s| {
                let (x, y) = u.eval(s);
                let d = truncate_delta(s, x, br)?;
                let f = self
                    .p
                    .f(s, d, y)
                    .map_err(|source| FixpointError::Eval { at: s, source })?;
                Ok(f + k * y + m * x + eps * (x - d))
            })
            .collect::<Result<Vec<f64>, FixpointError>>()?;
        self.integrate(&load, u.decay())
    }
}

/// One application of `T` on the grid of `u`.
pub fn apply_t(gk: &GreenKernel, p: &MultipointProblem, u: &GridFunction) -> Result<GridFunction, FixpointError> {
    Operator::new(gk, p, Arc::clone(u.nodes()))?.apply(u)
}

/// One application of `T*` on the grid of `u`.
pub fn apply_tstar(
    gk: &GreenKernel,
    p: &MultipointProblem,
    u: &GridFunction,
    br: &BracketPair,
    eps: f64,
) -> Result<GridFunction, FixpointError> {
    Operator::new(gk, p, Arc::clone(u.nodes()))?.apply_star(u, br, eps)
}

/// `T` by adaptive quadrature, one node at a time.
pub fn apply_t_adaptive(
    gk: &GreenKernel,
    p: &MultipointProblem,
    u: &GridFunction,
    tol: Tolerance,
) -> Result<GridFunction, FixpointError> {
    let sp = gk.shift();
    let (k, m) = (sp.damping, sp.stiffness);
    let load = |s: f64| -> Result<f64, EvalError> {
        let (x, y) = u.eval(s);
        Ok(p.f(s, x, y)? + k * y + m * x)
    };
    let (vals, slopes): (Vec<f64>, Vec<f64>) = u
        .nodes()
        .par_iter()
        .map(|&t| {
            let bp = gk.breakpoints(t);
            let end = gk.support_end(t);
            let wrap = |source| FixpointError::Quad { at: t, source };
            let v = integrate_halfline(
                &Integrand::new(|s| Ok(gk.green(t, s) * load(s)?))
                    .breakpoints(bp.clone())
                    .cutoff(end),
                tol,
            )
            .map_err(wrap)?;
            let dv = integrate_halfline(
                &Integrand::new(|s| Ok(gk.dt(t, s) * load(s)?))
                    .breakpoints(bp)
                    .cutoff(end),
                tol,
            )
            .map_err(wrap)?;
            Ok((v.value, dv.value))
        })
        .collect::<Result<Vec<_>, FixpointError>>()?
        .into_iter()
        .unzip();
    GridFunction::new(Arc::clone(u.nodes()), vals, slopes, u.decay())
}

/// Three-point derivative of `y` on a nonuniform grid at interior node `j`,
/// using neighbours `j - stride` and `j + stride`.
fn fd_derivative(t: &[f64], y: &[f64], j: usize, stride: usize) -> f64 {
    let (a, b, c) = (j - stride, j, j + stride);
    let h1 = t[b] - t[a];
    let h2 = t[c] - t[b];
    -h2 / (h1 * (h1 + h2)) * y[a] + (h2 - h1) / (h1 * h2) * y[b] + h1 / (h2 * (h1 + h2)) * y[c]
}

/// Central finite difference of `u'` at every node (0 at the two ends).
pub fn fd_second_derivative(u: &GridFunction) -> Vec<f64> {
    let n = u.nodes.len();
    (0..n)
        .map(|j| {
            if j == 0 || j == n - 1 {
                0.0
            } else {
                fd_derivative(&u.nodes, &u.du, j, 1)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `sup_j |u''_fd(t_j) - f(t_j, u_j, u'_j)|` over interior nodes.
    pub ode_residual: f64,
    pub ode_residual_at: f64,
    /// Estimate of the finite-difference error in `u''_fd`, from the
    /// difference between stride-1 and stride-2 stencils.
    pub scheme_error: f64,
    pub bc0_residual: f64,
    /// `|u'(inf) - sum alpha_i u'(xi_i)|` with `u'(inf) = 0` from the tail.
    pub bc_inf_residual: f64,
    /// `u'` at `T_max`, for judging the tail truncation.
    pub du_at_tmax: f64,
    /// `sup_j |u'_j - (finite-difference slope of u)_j|`.
    pub slope_coherence: f64,
    pub sup_u: f64,
    pub sup_du: f64,
    pub nodes: usize,
    pub t_max: f64,
    /// Per-node residuals, 0 at the two ends.
    pub node_residuals: Vec<f64>,
}

/// Residual certificate of `u` for `u'' = f(t, u, u')` and the boundary
/// conditions.
pub fn verify(p: &MultipointProblem, u: &GridFunction) -> Result<ResidualReport, FixpointError> {
    let t = u.nodes.as_slice();
    let n = t.len();
    if n < 5 {
        return Err(FixpointError::InvalidGrid(format!(
            "verify needs at least 5 nodes, got {n}"
        )));
    }
    let d2 = fd_second_derivative(u);
    let mut node_residuals = vec![0.0; n];
    let mut scheme_error = 0.0f64;
    let mut slope_coherence = 0.0f64;
    for j in 1..n - 1 {
        let f = p
            .f(t[j], u.u[j], u.du[j])
            .map_err(|source| FixpointError::Eval { at: t[j], source })?;
        node_residuals[j] = (d2[j] - f).abs();
        if j >= 2 && j + 2 < n {
            // second order: err(2h) ~ 4 err(h)
            let coarse = fd_derivative(t, &u.du, j, 2);
            scheme_error = scheme_error.max((coarse - d2[j]).abs() / 3.0);
        }
        slope_coherence = slope_coherence.max((fd_derivative(t, &u.u, j, 1) - u.du[j]).abs());
    }
    let (argmax, ode_residual) =
        node_residuals
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (j, &r)| if r > acc.1 { (j, r) } else { acc });
    let weighted: f64 = p.alphas().iter().zip(p.xis()).map(|(&a, &x)| a * u.eval(x).1).sum();
    Ok(ResidualReport {
        ode_residual,
        ode_residual_at: t[argmax],
        scheme_error,
        bc0_residual: u.u[0].abs(),
        bc_inf_residual: weighted.abs(),
        du_at_tmax: u.du[n - 1],
        slope_coherence,
        sup_u: u.u.iter().fold(0.0, |m, v| m.max(v.abs())),
        sup_du: u.du.iter().fold(0.0, |m, v| m.max(v.abs())),
        nodes: n,
        t_max: t[n - 1],
        node_residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            damping: 1.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub converged: bool,
    /// On failure, the iterate with the smallest increment.
    pub solution: GridFunction,
    pub iterations: usize,
    /// Norm of the last accepted increment (`inf` if no step was taken).
    pub increment: f64,
    pub increments: Vec<f64>,
    pub final_damping: f64,
    pub report: ResidualReport,
}

/// Damped Picard iteration `u <- (1 - lambda) u + lambda Tu`, or with `T*`
/// when a bracket and penalty are given. The damping halves (down to 1/64)
/// after five consecutive increases of the increment.
pub fn picard_solve(
    gk: &GreenKernel,
    p: &MultipointProblem,
    u0: &GridFunction,
    opts: SolveOptions,
    bracket: Option<(&BracketPair, f64)>,
) -> Result<SolveOutcome, FixpointError> {
    if !(opts.tol > 0.0) {
        return Err(FixpointError::InvalidTolerance(opts.tol));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(FixpointError::InvalidDamping(opts.damping));
    }
    if let Some((_, eps)) = bracket {
        if !(eps > 0.0) {
            return Err(FixpointError::InvalidPenalty(eps));
        }
    }
    let op = Operator::new(gk, p, Arc::clone(u0.nodes()))?;
    let mut lambda = opts.damping;
    let mut current = u0.clone();
    let mut best = (f64::INFINITY, u0.clone());
    let mut increments = Vec::new();
    let mut growth = 0;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let image = match bracket {
            Some((br, eps)) => op.apply_star(&current, br, eps)?,
            None => op.apply(&current)?,
        };
        let next = current.blend(&image, lambda);
        let inc = next.distance(&current);
        if increments.last().is_some_and(|&prev| inc > prev) {
            growth += 1;
        } else {
            growth = 0;
        }
        increments.push(inc);
        current = next;
        if inc < best.0 {
            best = (inc, current.clone());
        }
        if inc < opts.tol {
            converged = true;
            break;
        }
        if growth >= GROWTH_WINDOW && lambda > MIN_DAMPING {
            lambda = (lambda / 2.0).max(MIN_DAMPING);
            growth = 0;
        }
    }
    let solution = if converged { current } else { best.1 };
    let report = verify(p, &solution)?;
    Ok(SolveOutcome {
        converged,
        solution,
        iterations: increments.len(),
        increment: increments.last().copied().unwrap_or(f64::INFINITY),
        increments,
        final_damping: lambda,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::tests::{example_kernel, example_problem, EXAMPLE_F};
    use crate::kernel::{make_shift, KernelMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, t_max: f64) -> Arc<Vec<f64>> {
        Arc::new(graded_grid(t_max, n, &[0.0, 0.11]).unwrap())
    }

    fn example_bracket() -> BracketPair {
        BracketPair::from_source(crate::theorems::example::ALPHA, "1").unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = graded_grid(23.0, 400, &[0.0, 0.11]).unwrap();
        assert_eq!(g.len(), 400);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[399], 23.0);
        assert!(g.contains(&0.11));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let first = g[1] - g[0];
        let last = g[399] - g[398];
        assert!(last / first > 10.0);
        assert!(graded_grid(1.0, 3, &[]).is_err());
        assert_eq!(default_t_max(0.86, 0.11), 20.0 / 0.86);
        assert_eq!(default_t_max(1.0, 15.0), 30.0);
    }

    #[test]
    fn norms() {
        let nodes = grid(400, 20.0);
        let u = GridFunction::from_fn(nodes.clone(), 0.43, |t| (-t).exp(), |t| -(-t).exp()).unwrap();
        assert_eq!(u.norm(), 1.0);
        assert_eq!(GridFunction::zero(nodes, 0.43).unwrap().norm(), 0.0);
        let fine = Arc::new((0..=200_000).map(|i| i as f64 * 1e-4).collect::<Vec<_>>());
        let u = GridFunction::from_fn(fine, 0.43, |t| t.sin() / 2.0, |t| t.cos() / 2.0).unwrap();
        assert!((u.norm() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn invalid_grid_functions() {
        let nodes = Arc::new(vec![0.0, 1.0, 1.0]);
        assert!(GridFunction::zero(nodes, 1.0).is_err());
        let nodes = Arc::new(vec![0.0, 1.0, 2.0]);
        assert!(matches!(
            GridFunction::new(nodes, vec![0.0, f64::NAN, 0.0], vec![0.0; 3], 1.0),
            Err(FixpointError::NonFinite { at }) if at == 1.0
        ));
    }

    #[test]
    fn hermite_interpolation_and_tail() {
        let nodes = grid(200, 10.0);
        let u = GridFunction::from_fn(
            nodes,
            0.43,
            |t| t.sin() * (-t / 3.0).exp(),
            |t| (t.cos() - t.sin() / 3.0) * (-t / 3.0).exp(),
        )
        .unwrap();
        for t in [0.013, 0.5, 2.7, 9.9] {
            let (v, d) = u.eval(t);
            assert!((v - t.sin() * (-t / 3.0).exp()).abs() < 1e-6);
            assert!((d - (t.cos() - t.sin() / 3.0) * (-t / 3.0).exp()).abs() < 1e-4);
        }
        let (v_end, d_end) = u.eval(10.0);
        let (v, d) = u.eval(12.0);
        assert!((v - v_end * (-0.86f64).exp()).abs() < 1e-15);
        assert!((d - d_end * (-0.86f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn truncation() {
        let br = example_bracket();
        assert_eq!(truncate_delta(0.0, 5.0, &br).unwrap(), 1.0);
        assert_eq!(truncate_delta(0.0, 0.0, &br).unwrap(), 0.0);
        assert_eq!(truncate_delta(0.0, -1.0, &br).unwrap(), -0.0075);
        let swapped = BracketPair::from_source("1", crate::theorems::example::ALPHA).unwrap();
        assert!(matches!(
            truncate_delta(0.0, 0.0, &swapped),
            Err(FixpointError::BracketOrder { .. })
        ));
    }

    #[test]
    fn zero_problem_is_fixed() {
        let p = MultipointProblem::from_source(vec![0.11, 0.89], vec![0.0, 0.11], "0").unwrap();
        for mode in [KernelMode::AsPrinted, KernelMode::Derived] {
            let gk = GreenKernel::new(&p, make_shift(0.86, 0.35, mode).unwrap()).unwrap();
            let u0 = GridFunction::zero(grid(100, 23.0), 0.43).unwrap();
            let tu = apply_t(&gk, &p, &u0).unwrap();
            assert_eq!(tu.norm(), 0.0);
            let out = picard_solve(&gk, &p, &u0, SolveOptions::default(), None).unwrap();
            assert!(out.converged);
            assert_eq!(out.iterations, 1);
            assert_eq!(out.report.ode_residual, 0.0);
        }
    }

    #[test]
    fn zero_iterations_is_a_reported_failure() {
        let p = example_problem();
        let gk = example_kernel(KernelMode::Derived);
        let u0 = GridFunction::zero(grid(50, 23.0), 0.43).unwrap();
        let opts = SolveOptions {
            max_iter: 0,
            ..SolveOptions::default()
        };
        let out = picard_solve(&gk, &p, &u0, opts, None).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 0);
        assert!(picard_solve(&gk, &p, &u0, SolveOptions { tol: 0.0, ..opts }, None).is_err());
        assert!(picard_solve(&gk, &p, &u0, SolveOptions { damping: 1.5, ..opts }, None).is_err());
    }

    #[test]
    fn derived_operator_solves_linear_problem() {
        let p = MultipointProblem::from_source(vec![0.11, 0.89], vec![0.0, 0.11], "exp(-t)").unwrap();
        let gk = GreenKernel::new(&p, make_shift(0.86, 0.35, KernelMode::Derived).unwrap()).unwrap();
        let u0 = GridFunction::zero(grid(400, 20.0 / 0.86), 0.43).unwrap();
        let tu = apply_t(&gk, &p, &u0).unwrap();
        let d2 = fd_second_derivative(&tu);
        let t = tu.nodes();
        let mut worst = 0.0f64;
        for j in 1..t.len() - 1 {
            let r = d2[j] + 0.86 * tu.slopes()[j] + 0.35 * tu.values()[j] - (-t[j]).exp();
            worst = worst.max(r.abs());
        }
        assert!(worst < 1e-4, "residual {worst}");
        assert_eq!(tu.values()[0], 0.0);
    }

    #[test]
    fn tabulated_operator_matches_adaptive_quadrature() {
        let p = example_problem();
        for mode in [KernelMode::AsPrinted, KernelMode::Derived] {
            let gk = example_kernel(mode);
            let u = GridFunction::from_fn(
                grid(60, 23.0),
                0.43,
                |t| 0.3 + 0.1 * (t / 2.0).sin(),
                |t| 0.05 * (t / 2.0).cos(),
            )
            .unwrap();
            let a = apply_t(&gk, &p, &u).unwrap();
            let b = apply_t_adaptive(&gk, &p, &u, Tolerance::new(1e-11, 1e-13)).unwrap();
            assert!(a.distance(&b) < 1e-8 * a.norm().max(1.0), "{mode}: {}", a.distance(&b));
        }
    }

    #[test]
    fn tstar_agrees_inside_bracket_and_clamps_outside() {
        let p = example_problem();
        let gk = example_kernel(KernelMode::Derived);
        let br = example_bracket();
        let nodes = grid(80, 23.0);
        let inside = GridFunction::from_fn(
            nodes.clone(),
            0.43,
            |t| 0.5 * t / (1.0 + t),
            |t| 0.5 / (1.0 + t).powi(2),
        )
        .unwrap();
        let a = apply_t(&gk, &p, &inside).unwrap();
        let b = apply_tstar(&gk, &p, &inside, &br, 0.01).unwrap();
        assert!(a.distance(&b) < 1e-15);

        // u = 2 everywhere: delta = 1, so f vanishes and the load is k*0 + 2M + eps
        let two = GridFunction::from_fn(nodes.clone(), 0.43, |_| 2.0, |_| 0.0).unwrap();
        let star = apply_tstar(&gk, &p, &two, &br, 0.01).unwrap();
        let constant = MultipointProblem::from_source(vec![0.11, 0.89], vec![0.0, 0.11], "0.71").unwrap();
        let gk_c = GreenKernel::new(&constant, *gk.shift()).unwrap();
        let zero = GridFunction::zero(nodes, 0.43).unwrap();
        let direct = apply_t(&gk_c, &constant, &zero).unwrap();
        assert!(star.distance(&direct) < 1e-12);

        assert!(matches!(
            apply_tstar(&gk, &p, &two, &br, 0.0),
            Err(FixpointError::InvalidPenalty(_))
        ));
    }

    #[test]
    fn image_vanishes_at_origin() {
        let p = example_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [KernelMode::AsPrinted, KernelMode::Derived] {
            let gk = example_kernel(mode);
            let op = Operator::new(&gk, &p, grid(80, 23.0)).unwrap();
            for _ in 0..5 {
                let (a, w, ph) = (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(0.0..6.0),
                );
                let u = GridFunction::from_fn(
                    op.nodes().clone(),
                    0.43,
                    |t: f64| a * (w * t + ph).sin(),
                    |t: f64| a * w * (w * t + ph).cos(),
                )
                .unwrap();
                assert_eq!(op.apply(&u).unwrap().values()[0], 0.0);
            }
        }
    }

    #[test]
    fn verify_examples() {
        let p = example_problem();
        let nodes = grid(400, 20.0 / 0.86);
        let zero = GridFunction::zero(nodes.clone(), 0.43).unwrap();
        let rep = verify(&p, &zero).unwrap();
        assert!((rep.ode_residual - 0.003).abs() < 1e-6, "{}", rep.ode_residual);
        assert!((rep.ode_residual_at - std::f64::consts::FRAC_PI_2).abs() < 0.1);

        let manufactured = MultipointProblem::from_source(vec![0.11, 0.89], vec![0.0, 0.11], "exp(-t)").unwrap();
        let u = GridFunction::from_fn(nodes.clone(), 0.43, |t| (-t).exp(), |t| -(-t).exp()).unwrap();
        let rep = verify(&manufactured, &u).unwrap();
        assert!(rep.ode_residual < 10.0 * rep.scheme_error, "{rep:?}");
        assert!(rep.ode_residual < 1e-3);
        assert_eq!(rep.bc0_residual, 1.0);

        let shifted = GridFunction::from_fn(nodes, 0.43, |t| 0.5 + 0.0 * t, |_| 0.0).unwrap();
        assert_eq!(verify(&p, &shifted).unwrap().bc0_residual, 0.5);
        assert!(EXAMPLE_F.contains("y-1"));
    }
}
