//! Green's kernel of the shifted problem
//!
//! ```text
//! v'' + k v' + M v = w,   v(0) = 0,   v'(inf) = sum_i alpha_i v'(xi_i)
//! ```
//!
//! in two modes:
//!
//! * [`KernelMode::AsPrinted`] evaluates the published piecewise formulas
//!   verbatim, with `gamma = sqrt(4M - k^2)` and prefactor
//!   `e^{-k(t+s)/2} / gamma`. These are the formulas the envelope constants
//!   `C1`, `C2` refer to. They do not solve the ODE above.
//! * [`KernelMode::Derived`] rebuilds the kernel by variation of parameters
//!   with the true oscillation frequency `omega = sqrt(4M - k^2) / 2`:
//!   `G(t,s) = K(t-s)[t>s] + c1(s) y1(t)`.
//!
//! Both kernels vanish for `s >= max(t, xi_{m-1})`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::MultipointProblem;
use crate::quad::{
    self, golden_max, integrate_halfline, integrate_interval, Envelope, Integrand, QuadError, Tolerance,
};

/// Relative size of the denominator below which a shift is degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Grid points per period (in t) and per interior segment (in s) for the
/// envelope-constant search.
pub const SEARCH_POINTS: usize = 400;
/// Argument tolerance of the golden-section refinement.
pub const REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("k and M must be positive (k = {k}, M = {m})")]
    NonPositive { k: f64, m: f64 },
    #[error("shift is not oscillatory: k^2 - 4M = {discriminant} >= 0")]
    NonOscillatory { discriminant: f64 },
    #[error("degenerate shift: denominator {value:e} is below {tol:e} x {scale:e}; pick different (k, M)")]
    Degenerate { value: f64, scale: f64, tol: f64 },
    #[error("problem fails validation: {0}")]
    InvalidProblem(String),
    #[error("segment index {l} outside 2..={max}")]
    SegmentIndex { l: usize, max: usize },
    #[error("s = {s} is outside segment {l} = [{lo}, {hi})")]
    OutsideSegment { l: usize, s: f64, lo: f64, hi: f64 },
    #[error("the printed derivative formula only exists for the as_printed kernel")]
    FormulaUnavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelMode {
    AsPrinted,
    Derived,
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelMode::AsPrinted => "as_printed",
            KernelMode::Derived => "derived",
        })
    }
}

impl FromStr for KernelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as_printed" => Ok(KernelMode::AsPrinted),
            "derived" => Ok(KernelMode::Derived),
            other => Err(format!("unknown kernel mode `{other}` (as_printed|derived)")),
        }
    }
}

/// Which formula for `dG/dt` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeFormula {
    /// The published formula (cosine terms without the factor gamma).
    Printed,
    /// The exact t-derivative of [`GreenKernel::green`].
    Analytic,
}

impl fmt::Display for DerivativeFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DerivativeFormula::Printed => "printed",
            DerivativeFormula::Analytic => "analytic",
        })
    }
}

/// The perturbation pair `(k, M)` and the derived frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftParams {
    /// `k`, coefficient of `u'`.
    pub damping: f64,
    /// `M`, coefficient of `u`.
    pub stiffness: f64,
    pub gamma: f64,
    pub mode: KernelMode,
}

pub fn make_shift(k: f64, m: f64, mode: KernelMode) -> Result<ShiftParams, KernelError> {
    if !(k > 0.0 && m > 0.0) {
        return Err(KernelError::NonPositive { k, m });
    }
    let discriminant = k * k - 4.0 * m;
    if discriminant >= 0.0 {
        return Err(KernelError::NonOscillatory { discriminant });
    }
    let root = (4.0 * m - k * k).sqrt();
    let gamma = match mode {
        KernelMode::AsPrinted => root,
        KernelMode::Derived => root / 2.0,
    };
    Ok(ShiftParams {
        damping: k,
        stiffness: m,
        gamma,
        mode,
    })
}

/// `D = sum_i alpha_i e^{-k xi_i/2} (-(k/2) sin(gamma xi_i) + gamma cos(gamma xi_i))`.
///
/// With the derived frequency this is `sum_i alpha_i y1'(xi_i)`.
pub fn denominator(p: &MultipointProblem, sp: &ShiftParams) -> Result<f64, KernelError> {
    let (k, g) = (sp.damping, sp.gamma);
    let mut value = 0.0;
    let mut scale = 0.0;
    for (&a, &x) in p.alphas().iter().zip(p.xis()) {
        let term = a * (-k * x / 2.0).exp() * (-(k / 2.0) * (g * x).sin() + g * (g * x).cos());
        value += term;
        scale += term.abs();
    }
    if value.abs() <= DEGENERACY_TOL * scale {
        return Err(KernelError::Degenerate {
            value,
            scale,
            tol: DEGENERACY_TOL,
        });
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtValue {
    pub value: f64,
    /// Set when evaluated at `t == s`; the value is then the limit from `t > s`.
    pub at_kink: bool,
}

#[derive(Debug, Clone)]
pub struct GreenKernel {
    alphas: Vec<f64>,
    xis: Vec<f64>,
    shift: ShiftParams,
    denom: f64,
}

/// Build the variation-of-parameters kernel for `(k, M)`.
pub fn rebuild_kernel(p: &MultipointProblem, k: f64, m: f64) -> Result<GreenKernel, KernelError> {
    GreenKernel::new(p, make_shift(k, m, KernelMode::Derived)?)
}

impl GreenKernel {
    pub fn new(p: &MultipointProblem, shift: ShiftParams) -> Result<Self, KernelError> {
        let report = p.validate();
        if !report.passed() {
            let names: Vec<_> = report.failures().map(|c| c.name).collect();
            return Err(KernelError::InvalidProblem(names.join("; ")));
        }
        let denom = denominator(p, &shift)?;
        Ok(GreenKernel {
            alphas: p.alphas().to_vec(),
            xis: p.xis().to_vec(),
            shift,
            denom,
        })
    }

    pub fn mode(&self) -> KernelMode {
        self.shift.mode
    }

    pub fn shift(&self) -> &ShiftParams {
        &self.shift
    }

    pub fn denominator(&self) -> f64 {
        self.denom
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn xis(&self) -> &[f64] {
        &self.xis
    }

    pub fn last_node(&self) -> f64 {
        self.xis[self.xis.len() - 1]
    }

    fn m(&self) -> usize {
        self.alphas.len() + 1
    }

    /// The formula used for derivative rows by default: printed for the
    /// as_printed kernel, analytic for the derived one.
    pub fn default_formula(&self) -> DerivativeFormula {
        match self.mode() {
            KernelMode::AsPrinted => DerivativeFormula::Printed,
            KernelMode::Derived => DerivativeFormula::Analytic,
        }
    }

    /// Segment index `l` (1-based, `2 <= l <= m-1`) with
    /// `xi_{l-1} <= s < xi_l`, or `None` on the tail `s >= xi_{m-1}`.
    pub fn segment_of(&self, s: f64) -> Option<usize> {
        self.xis.iter().position(|&x| x > s).map(|j| j + 1).filter(|&l| l >= 2)
    }

    /// `h_l(s)`, checked against its segment.
    pub fn h(&self, l: usize, s: f64) -> Result<f64, KernelError> {
        let max = self.m() - 1;
        if l < 2 || l > max {
            return Err(KernelError::SegmentIndex { l, max });
        }
        let (lo, hi) = (self.xis[l - 2], self.xis[l - 1]);
        if !(s >= lo && s < hi) {
            return Err(KernelError::OutsideSegment { l, s, lo, hi });
        }
        Ok(self.h_unchecked(l, s))
    }

    fn h_unchecked(&self, l: usize, s: f64) -> f64 {
        let (k, g) = (self.shift.damping, self.shift.gamma);
        let num: f64 = (l - 1..self.m() - 1)
            .map(|i| {
                let (a, x) = (self.alphas[i], self.xis[i]);
                a * (-k * x / 2.0).exp() * (-(k / 2.0) * (g * (s - x)).sin() + g * (g * (s - x)).cos())
            })
            .sum();
        num / self.denom
    }

    /// `K(tau) = e^{-k tau/2} sin(omega tau) / omega`.
    fn impulse(&self, tau: f64) -> f64 {
        let (k, w) = (self.shift.damping, self.shift.gamma);
        (-k * tau / 2.0).exp() * (w * tau).sin() / w
    }

    fn impulse_dt(&self, tau: f64) -> f64 {
        let (k, w) = (self.shift.damping, self.shift.gamma);
        (-k * tau / 2.0).exp() * ((w * tau).cos() - k / (2.0 * w) * (w * tau).sin())
    }

    /// Coefficient of `y1(t) = e^{-kt/2} sin(omega t)` in the derived kernel.
    pub fn homogeneous_coefficient(&self, s: f64) -> f64 {
        let num: f64 = self
            .alphas
            .iter()
            .zip(&self.xis)
            .filter(|(_, &x)| x > s)
            .map(|(&a, &x)| a * self.impulse_dt(x - s))
            .sum();
        -num / self.denom
    }

    /// `G(t, s)`.
    pub fn green(&self, t: f64, s: f64) -> f64 {
        match self.mode() {
            KernelMode::AsPrinted => {
                let k = self.shift.damping;
                (-k * (t + s) / 2.0).exp() * self.printed_body(t, s)
            }
            KernelMode::Derived => {
                let k = self.shift.damping;
                let w = self.shift.gamma;
                let particular = if t > s { self.impulse(t - s) } else { 0.0 };
                let c = self.homogeneous_coefficient(s);
                if c == 0.0 {
                    particular
                } else {
                    particular + c * (-k * t / 2.0).exp() * (w * t).sin()
                }
            }
        }
    }

    /// `G(t,s) e^{k(t+s)/2}` for the as_printed kernel, i.e. the braced
    /// expression divided by gamma.
    fn printed_body(&self, t: f64, s: f64) -> f64 {
        let g = self.shift.gamma;
        let mut body = 0.0;
        if let Some(l) = self.segment_of(s) {
            body -= (g * t).sin() * self.h_unchecked(l, s);
        }
        if s < t {
            body += (g * (s - t)).sin();
        }
        body / g
    }

    /// `dG/dt(t,s) e^{k(t+s)/2}` for the as_printed kernel.
    fn printed_dt_body(&self, t: f64, s: f64, formula: DerivativeFormula) -> f64 {
        let (k, g) = (self.shift.damping, self.shift.gamma);
        let mut body = 0.0;
        if let Some(l) = self.segment_of(s) {
            body += ((k / 2.0) * (g * t).sin() - g * (g * t).cos()) * self.h_unchecked(l, s);
        }
        if s <= t {
            let cos_factor = match formula {
                DerivativeFormula::Printed => 1.0,
                DerivativeFormula::Analytic => g,
            };
            body += -(k / 2.0) * (g * (s - t)).sin() - cos_factor * (g * (s - t)).cos();
        }
        body / g
    }

    /// `dG/dt(t, s)`. At `t == s` the limit from `t > s` is returned and
    /// flagged.
    pub fn green_dt(&self, t: f64, s: f64, formula: DerivativeFormula) -> Result<DtValue, KernelError> {
        if self.mode() == KernelMode::Derived && formula == DerivativeFormula::Printed {
            return Err(KernelError::FormulaUnavailable);
        }
        Ok(DtValue {
            value: self.dt_with(t, s, formula),
            at_kink: t == s,
        })
    }

    /// `dG/dt` with the default formula.
    pub fn dt(&self, t: f64, s: f64) -> f64 {
        self.dt_with(t, s, self.default_formula())
    }

    fn dt_with(&self, t: f64, s: f64, formula: DerivativeFormula) -> f64 {
        let k = self.shift.damping;
        match self.mode() {
            KernelMode::AsPrinted => (-k * (t + s) / 2.0).exp() * self.printed_dt_body(t, s, formula),
            KernelMode::Derived => {
                let w = self.shift.gamma;
                let particular = if t >= s { self.impulse_dt(t - s) } else { 0.0 };
                let c = self.homogeneous_coefficient(s);
                let y1_dt = (-k * t / 2.0).exp() * (w * (w * t).cos() - (k / 2.0) * (w * t).sin());
                particular + c * y1_dt
            }
        }
    }

    /// Points in `(0, max(t, xi_{m-1}))` where `s -> G(t, s)` or its
    /// derivative row can fail to be smooth.
    pub fn breakpoints(&self, t: f64) -> Vec<f64> {
        let mut bp: Vec<f64> = self.xis.iter().copied().filter(|&x| x > 0.0).collect();
        if t > 0.0 {
            bp.push(t);
        }
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        bp
    }

    /// Upper end of the s-support of `G(t, .)`.
    pub fn support_end(&self, t: f64) -> f64 {
        t.max(self.last_node())
    }

    /// `v(t) = int G(t,s) w(s) ds` and `v'(t)` by adaptive quadrature.
    pub fn load_response<W>(&self, w: W, t: f64, tol: Tolerance) -> Result<(f64, f64), QuadError>
    where
        W: Fn(f64) -> f64,
    {
        let end = self.support_end(t);
        let bp = self.breakpoints(t);
        let v = integrate_interval(|s| Ok(self.green(t, s) * w(s)), 0.0, end, &bp, tol)?;
        let dv = integrate_interval(
            |s| Ok(self.dt_with(t, s, DerivativeFormula::Analytic) * w(s)),
            0.0,
            end,
            &bp,
            tol,
        )?;
        Ok((v.value, dv.value))
    }

    /// Check that `v = int G(., s) w(s) ds` solves the shifted problem:
    /// ODE residual on `grid` (second derivative by central differences of
    /// `v'`), `v(0)`, and `v'(inf) - sum alpha_i v'(xi_i)` with `v'(inf)`
    /// taken at a far point where the kernel envelope is below 1e-14.
    pub fn defining_property<W>(&self, w: W, grid: &[f64]) -> Result<DefiningPropertyReport, QuadError>
    where
        W: Fn(f64) -> f64 + Sync,
    {
        let (k, m) = (self.shift.damping, self.shift.stiffness);
        let tol = Tolerance::new(1e-12, 1e-14);
        let h = 1e-3;
        let residuals = grid
            .par_iter()
            .map(|&t| {
                let (v, dv) = self.load_response(&w, t, tol)?;
                let (_, dv_plus) = self.load_response(&w, t + h, tol)?;
                let (_, dv_minus) = self.load_response(&w, t - h, tol)?;
                let d2v = (dv_plus - dv_minus) / (2.0 * h);
                Ok((d2v + k * dv + m * v - w(t)).abs())
            })
            .collect::<Result<Vec<f64>, QuadError>>()?;
        let ode_residual = residuals.iter().copied().fold(0.0, f64::max);
        let (v0, _) = self.load_response(&w, 0.0, tol)?;
        let far = 2.0 * 14.0 * std::f64::consts::LN_10 / k + 2.0 * self.last_node();
        let (_, dv_far) = self.load_response(&w, far, tol)?;
        let mut weighted = 0.0;
        for (&a, &x) in self.alphas.iter().zip(&self.xis) {
            weighted += a * self.load_response(&w, x, tol)?.1;
        }
        Ok(DefiningPropertyReport {
            ode_residual,
            v0,
            dv_far,
            far,
            weighted_slopes: weighted,
            bc_inf_residual: (dv_far - weighted).abs(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefiningPropertyReport {
    pub ode_residual: f64,
    pub v0: f64,
    /// `v'` at `far`, standing in for `v'(inf)`.
    pub dv_far: f64,
    pub far: f64,
    pub weighted_slopes: f64,
    pub bc_inf_residual: f64,
}

/// Suprema of the rescaled as_printed kernel, split by branch of `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSups {
    /// Over `s` in the interior segments `[0, xi_{m-1})`.
    pub interior: f64,
    /// Over the tail `s >= xi_{m-1}`.
    pub tail: f64,
    pub argmax: (f64, f64),
}

impl BranchSups {
    pub fn overall(&self) -> f64 {
        self.interior.max(self.tail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchMeta {
    /// Step of the t-grid for the envelope search.
    pub t_step: f64,
    pub s_points_per_segment: usize,
    pub refine_tol: f64,
    /// Right end of the t-range scanned for `B1`, `B2`.
    pub b_horizon: f64,
    pub b_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConstants {
    pub mode: KernelMode,
    /// `sup |G| e^{k(t+s)/2}`; as_printed only.
    pub c1: Option<BranchSups>,
    /// `sup |dG/dt| e^{k(t+s)/2}`; as_printed only.
    pub c2: Option<BranchSups>,
    pub c2_formula: DerivativeFormula,
    /// `sup_t int |G(t,s)| ds`.
    pub b1: f64,
    /// `sup_t int |dG/dt(t,s)| ds`.
    pub b2: f64,
    pub meta: SearchMeta,
}

impl KernelConstants {
    pub fn c1_value(&self) -> Option<f64> {
        self.c1.map(|b| b.overall())
    }

    pub fn c2_value(&self) -> Option<f64> {
        self.c2.map(|b| b.overall())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Row {
    Value,
    Slope(DerivativeFormula),
}

impl GreenKernel {
    fn rescaled(&self, row: Row, t: f64, s: f64) -> f64 {
        match row {
            Row::Value => self.printed_body(t, s).abs(),
            Row::Slope(f) => self.printed_dt_body(t, s, f).abs(),
        }
    }

    /// Grid search plus golden refinement of the rescaled as_printed kernel.
    fn envelope_sup(&self, row: Row) -> Result<BranchSups, QuadError> {
        let g = self.shift.gamma;
        let period = 2.0 * PI / g;
        let t_step = period / SEARCH_POINTS as f64;

        // Tail: depends on t - s only and is periodic in t - s.
        let s_tail = self.last_node();
        let tail_fn = |tau: f64| self.rescaled(row, s_tail + tau, s_tail);
        let (tail, tail_tau) = scan_and_refine(tail_fn, 0.0, period, SEARCH_POINTS);

        let mut cells: Vec<(usize, f64, f64, f64)> = Vec::new();
        for l in 2..self.m() {
            let (lo, hi) = (self.xis[l - 2], self.xis[l - 1]);
            for j in 0..SEARCH_POINTS {
                let s = lo + (hi - lo) * j as f64 / SEARCH_POINTS as f64;
                cells.push((l, s, lo, hi));
            }
        }
        let scanned: Vec<(f64, f64)> = cells
            .par_iter()
            .map(|&(_, s, _, _)| {
                let n = ((s + period) / t_step).ceil() as usize;
                let mut best = (f64::NEG_INFINITY, 0.0);
                for i in 0..=n {
                    let t = (i as f64 * t_step).min(s + period);
                    let v = self.rescaled(row, t, s);
                    if v > best.0 {
                        best = (v, t);
                    }
                }
                best
            })
            .collect();
        let mut interior = 0.0;
        let mut argmax = (s_tail + tail_tau, s_tail);
        if let Some((idx, _)) = scanned
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, &(v, _))| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((i, v)),
            })
        {
            let (_, s0, lo, hi) = cells[idx];
            let t0 = scanned[idx].1;
            let ds = (hi - lo) / SEARCH_POINTS as f64;
            let hi_open = hi - 4.0 * f64::EPSILON * hi.abs().max(1.0);
            let (mut t, mut s) = (t0, s0);
            let mut best = scanned[idx].0;
            let (mut t_rad, mut s_rad) = (t_step, ds);
            for _ in 0..40 {
                let before = best;
                // refine t on the branch containing (t, s)
                let (a, b) = if t <= s {
                    ((t - t_rad).max(0.0), (t + t_rad).min(s))
                } else {
                    ((t - t_rad).max(s), t + t_rad)
                };
                if b > a {
                    let (x, v, _) = golden_max::<_, ()>(&mut |x| Ok(self.rescaled(row, x, s)), a, b, REFINE_TOL)
                        .expect("infallible");
                    if v > best {
                        best = v;
                        t = x;
                    }
                }
                let (a, b) = if t <= s {
                    ((s - s_rad).max(lo).max(t), (s + s_rad).min(hi_open))
                } else {
                    ((s - s_rad).max(lo), (s + s_rad).min(hi_open).min(t))
                };
                if b > a {
                    let (x, v, _) = golden_max::<_, ()>(&mut |x| Ok(self.rescaled(row, t, x)), a, b, REFINE_TOL)
                        .expect("infallible");
                    if v > best {
                        best = v;
                        s = x;
                    }
                }
                t_rad *= 0.5;
                s_rad *= 0.5;
                if best - before <= 1e-16 && t_rad < REFINE_TOL {
                    break;
                }
            }
            interior = best;
            if interior > tail {
                argmax = (t, s);
            }
        }
        Ok(BranchSups { interior, tail, argmax })
    }

    fn abs_integral(&self, t: f64, row: Row) -> Result<f64, QuadError> {
        let end = self.support_end(t);
        let bp = self.breakpoints(t);
        let tol = Tolerance::new(1e-9, 1e-12);
        let est = match row {
            Row::Value => integrate_interval(|s| Ok(self.green(t, s).abs()), 0.0, end, &bp, tol)?,
            Row::Slope(f) => integrate_interval(|s| Ok(self.dt_with(t, s, f).abs()), 0.0, end, &bp, tol)?,
        };
        Ok(est.value)
    }

    /// `sup_t int_0^inf |row(t, s)| ds`.
    fn l1_sup(&self, row: Row, envelope_const: Option<f64>) -> Result<(f64, f64, usize), QuadError> {
        let k = self.shift.damping;
        match (self.mode(), envelope_const) {
            (KernelMode::AsPrinted, Some(c)) => {
                // int |G(t,s)| ds <= C e^{-kt/2} (2/k)
                let r = quad::sup_on_ray(
                    |t| self.abs_integral(t, row),
                    0.0,
                    Envelope::new(2.0 * c / k + 1e-300, k / 2.0),
                )?;
                Ok((r.sup, r.horizon, r.evaluations))
            }
            _ => {
                // Derived kernel: int_0^t |K(t-s)| ds increases towards
                // int_0^inf |K|, so scan a long window and compare with
                // that limit.
                let horizon = 2.0 * 30.0 / k + 2.0 * self.last_node();
                let n = 600;
                let mut best = 0.0f64;
                for i in 0..=n {
                    let t = horizon * i as f64 / n as f64;
                    best = best.max(self.abs_integral(t, row)?);
                }
                let w = self.shift.gamma;
                let zeros: Vec<f64> = (1..)
                    .map(|j| j as f64 * PI / w)
                    .take_while(|&z| z < horizon * 4.0)
                    .collect();
                let limit = match row {
                    Row::Value => integrate_halfline(
                        &Integrand::new(|tau| Ok(self.impulse(tau).abs()))
                            .breakpoints(zeros)
                            .envelope(1.0 / w, k / 2.0),
                        Tolerance::new(1e-10, 1e-12),
                    )?,
                    Row::Slope(_) => {
                        let phase = (2.0 * w / k).atan();
                        let slope_zeros: Vec<f64> = zeros.iter().map(|z| z - PI / w + phase / w).collect();
                        integrate_halfline(
                            &Integrand::new(|tau| Ok(self.impulse_dt(tau).abs()))
                                .breakpoints(slope_zeros)
                                .envelope(1.0 + k / (2.0 * w), k / 2.0),
                            Tolerance::new(1e-10, 1e-12),
                        )?
                    }
                };
                Ok((best.max(limit.value), horizon, n + 1))
            }
        }
    }
}

/// Remark-1 style constants: envelope suprema (as_printed) and the
/// `L1` row bounds `B1`, `B2` (both modes).
pub fn kernel_constants(gk: &GreenKernel) -> Result<KernelConstants, QuadError> {
    let formula = gk.default_formula();
    let (c1, c2) = match gk.mode() {
        KernelMode::AsPrinted => (
            Some(gk.envelope_sup(Row::Value)?),
            Some(gk.envelope_sup(Row::Slope(formula))?),
        ),
        KernelMode::Derived => (None, None),
    };
    let (b1, horizon, n1) = gk.l1_sup(Row::Value, c1.map(|c| c.overall()))?;
    let (b2, _, n2) = gk.l1_sup(Row::Slope(formula), c2.map(|c| c.overall()))?;
    Ok(KernelConstants {
        mode: gk.mode(),
        c1,
        c2,
        c2_formula: formula,
        b1,
        b2,
        meta: SearchMeta {
            t_step: 2.0 * PI / gk.shift.gamma / SEARCH_POINTS as f64,
            s_points_per_segment: SEARCH_POINTS,
            refine_tol: REFINE_TOL,
            b_horizon: horizon,
            b_evaluations: n1 + n2,
        },
    })
}

/// Grid scan of `f` on `[a, b]` with `n` cells, then golden refinement
/// around the best grid point. Returns `(sup, argmax)`.
fn scan_and_refine<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> (f64, f64) {
    let step = (b - a) / n as f64;
    let mut best = (f64::NEG_INFINITY, a);
    for i in 0..=n {
        let x = a + step * i as f64;
        let v = f(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    let lo = (best.1 - step).max(a);
    let hi = (best.1 + step).min(b);
    let (x, v, _) = golden_max::<_, ()>(&mut |x| Ok(f(x)), lo, hi, REFINE_TOL).expect("infallible");
    if v > best.0 {
        (v, x)
    } else {
        best
    }
}
