//! Hypotheses of the existence theorems: the radius inequality and its
//! admissible interval, lower/upper solution checks, monotonicity in `y`,
//! and the derived-kernel ball-invariance check.
//!
//! The radius inequality is
//!
//! ```text
//! Cmax max{I1, I2} + Cmax max{1/2, 2(1 - e^{-k xi/2})} (1 + M/k) R < R
//! I1 = sup_{t > xi} e^{-kt/2} int_0^t e^{-ks/2} phi_rho(s) ds
//! I2 = int_0^xi e^{-ks/2} phi_rho(s) ds
//! ```
//!
//! with `Cmax = max{C1, C2}`, `xi = xi_{m-1}` and `rho = R`, or
//! `rho = max{R, R~}` when a lower/upper pair is supplied.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{EvalError, Expression};
use crate::kernel::{GreenKernel, KernelConstants, KernelMode};
use crate::model::{BoundFamily, BracketPair, MultipointProblem};
use crate::quad::{
    golden_max, integrate_interval, sup_on_ray, sup_on_ray_with_floor, Envelope, QuadError, SupResult, Tolerance,
};

/// Data of the worked example: a three-point problem with a bounded but
/// non-integrable dominating family.
pub mod example {
    pub const F: &str = "(2+sin(t))/1000*exp(-abs(x))*abs(1-x)/(x^2+1)*(y-1)";
    pub const ALPHAS: [f64; 2] = [0.11, 0.89];
    pub const XIS: [f64; 2] = [0.0, 0.11];
    pub const PHI: &str = "(2+sin(t))*(r+1)^2/1000";
    pub const ALPHA: &str = "3/400*(-(t+1)*exp(-t)+(t^2-t)/(t^2+1))";
    pub const BETA: &str = "1";
    pub const K: f64 = 0.86;
    pub const M: f64 = 0.35;
}

pub const DEFAULT_R_MIN: f64 = 1e-6;
pub const DEFAULT_R_MAX: f64 = 1e6;
pub const DEFAULT_R_REL_TOL: f64 = 1e-6;
/// Scan points per decade of `R`.
const SCAN_PER_DECADE: usize = 20;
/// Radii at which `I(rho) / (rho + 1)^2` is tested for constancy.
const COEFFICIENT_RADII: [f64; 4] = [1.0, 2.0, 5.0, 10.0];
/// Slack allowed in sampled differential inequalities.
pub const INEQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoremError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("evaluation failed at t = {at}: {source}")]
    Eval { at: f64, source: EvalError },
    #[error("envelope constants C1, C2 exist only for the as_printed kernel")]
    NeedsPrintedConstants,
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("invalid search range [{r_min}, {r_max}]")]
    InvalidRange { r_min: f64, r_max: f64 },
    #[error("{0}")]
    InvalidGrid(String),
}

fn eval_at(at: f64) -> impl FnOnce(EvalError) -> TheoremError {
    move |source| TheoremError::Eval { at, source }
}

/// The scalars entering the radius inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhsInputs {
    pub k: f64,
    pub m: f64,
    pub xi_last: f64,
    pub c1: f64,
    pub c2: f64,
}

impl LhsInputs {
    /// Take `C1`, `C2` from the overall suprema of the printed kernel.
    pub fn from_kernel(gk: &GreenKernel, kc: &KernelConstants) -> Result<Self, TheoremError> {
        if gk.mode() != KernelMode::AsPrinted {
            return Err(TheoremError::NeedsPrintedConstants);
        }
        let (c1, c2) = match (kc.c1_value(), kc.c2_value()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(TheoremError::NeedsPrintedConstants),
        };
        let sp = gk.shift();
        Ok(LhsInputs {
            k: sp.damping,
            m: sp.stiffness,
            xi_last: gk.last_node(),
            c1,
            c2,
        })
    }

    /// Same shift with other envelope constants.
    pub fn with_constants(self, c1: f64, c2: f64) -> Self {
        LhsInputs { c1, c2, ..self }
    }

    pub fn cmax(&self) -> f64 {
        self.c1.max(self.c2)
    }

    /// `max{1/2, 2(1 - e^{-k xi/2})}`.
    pub fn inner_factor(&self) -> f64 {
        0.5f64.max(2.0 * (1.0 - (-self.k * self.xi_last / 2.0).exp()))
    }

    /// `Cmax max{1/2, 2(1 - e^{-k xi/2})} (1 + M/k)`, the coefficient of `R`.
    pub fn k_factor(&self) -> f64 {
        self.cmax() * self.inner_factor() * (1.0 + self.m / self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhsBreakdown {
    pub r: f64,
    /// Radius at which `phi` is evaluated.
    pub rho: f64,
    pub i1: f64,
    pub i1_argmax: f64,
    pub i2: f64,
    /// `Cmax max{I1, I2}`.
    pub load_term: f64,
    /// `K-factor R`.
    pub linear_term: f64,
    pub lhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedIntegrals {
    pub i1: f64,
    pub i1_argmax: f64,
    pub i2: f64,
}

fn sampled_sup(bf: &BoundFamily, rho: f64, horizon: f64) -> Result<f64, TheoremError> {
    let n = 2000;
    let mut sup = 0.0f64;
    for j in 0..=n {
        let t = horizon * j as f64 / n as f64;
        sup = sup.max(bf.phi(t, rho).map_err(eval_at(t))?.abs());
    }
    Ok(sup)
}

/// `I1` and `I2` at radius `rho`.
pub fn weighted_integrals(inputs: &LhsInputs, bf: &BoundFamily, rho: f64) -> Result<WeightedIntegrals, TheoremError> {
    let (k, xi) = (inputs.k, inputs.xi_last);
    let tol = Tolerance::new(1e-11, 1e-15);
    let integrand = |s: f64| Ok((-k * s / 2.0).exp() * bf.phi(s, rho)?);
    let i2 = integrate_interval(integrand, 0.0, xi, &[], tol)?.value;

    // |phi| <= Phi gives e^{-kt/2} int_0^t ... <= (2 Phi / k) e^{-kt/2}
    let phi_bound = 2.0 * sampled_sup(bf, rho, 60.0 / k + 2.0 * xi + 10.0)?;
    let mut cache = (0.0f64, 0.0f64);
    let ray = sup_on_ray(
        |t| {
            let (t0, acc) = if t >= cache.0 { cache } else { (0.0, 0.0) };
            let piece = integrate_interval(integrand, t0, t, &[], tol)?;
            cache = (t, acc + piece.value);
            Ok((-k * t / 2.0).exp() * cache.1)
        },
        xi,
        Envelope::new(2.0 * phi_bound / k, k / 2.0),
    )?;
    Ok(WeightedIntegrals {
        i1: ray.sup,
        i1_argmax: ray.argmax,
        i2,
    })
}

/// Left side of the radius inequality at `r`.
pub fn existence_lhs(
    inputs: &LhsInputs,
    bf: &BoundFamily,
    r: f64,
    rtilde: Option<f64>,
) -> Result<LhsBreakdown, TheoremError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(TheoremError::InvalidRadius(r));
    }
    let rho = rtilde.map_or(r, |rt| r.max(rt));
    let w = weighted_integrals(inputs, bf, rho)?;
    let load_term = inputs.cmax() * w.i1.max(w.i2);
    let linear_term = inputs.k_factor() * r;
    Ok(LhsBreakdown {
        r,
        rho,
        i1: w.i1,
        i1_argmax: w.i1_argmax,
        i2: w.i2,
        load_term,
        linear_term,
        lhs: load_term + linear_term,
    })
}

/// `I(rho) / (rho + 1)^2` for `I1` and `I2` when that ratio is the same at
/// radii 1, 2, 5, 10 (to 1e-9 relative), i.e. when `phi_rho` scales like
/// `(rho + 1)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients {
    pub i1: f64,
    pub i2: f64,
    /// `Cmax max{I1-coefficient, I2-coefficient}`.
    pub lhs: f64,
}

pub fn quadratic_coefficients(
    inputs: &LhsInputs,
    bf: &BoundFamily,
) -> Result<Option<QuadraticCoefficients>, TheoremError> {
    let ratios = COEFFICIENT_RADII
        .iter()
        .map(|&rho| {
            let w = weighted_integrals(inputs, bf, rho)?;
            let s = (rho + 1.0) * (rho + 1.0);
            Ok((w.i1 / s, w.i2 / s))
        })
        .collect::<Result<Vec<_>, TheoremError>>()?;
    let (a1, a2) = ratios[0];
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
    if ratios.iter().all(|&(b1, b2)| same(a1, b1) && same(a2, b2)) {
        Ok(Some(QuadraticCoefficients {
            i1: a1,
            i2: a2,
            lhs: inputs.cmax() * a1.max(a2),
        }))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RSearch {
    pub r_min: f64,
    pub r_max: f64,
    pub rel_tol: f64,
}

impl Default for RSearch {
    fn default() -> Self {
        RSearch {
            r_min: DEFAULT_R_MIN,
            r_max: DEFAULT_R_MAX,
            rel_tol: DEFAULT_R_REL_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RInterval {
    pub r0: f64,
    pub r1: f64,
    /// The inequality already holds at the bottom of the scan.
    pub open_low: bool,
    /// The inequality still holds at the top of the scan.
    pub open_high: bool,
}

impl RInterval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.r0 + self.r1)
    }
}

/// First maximal run of `LHS(R) < R` on a log-spaced scan, with both ends
/// refined by bisection.
pub fn find_r_interval(
    inputs: &LhsInputs,
    bf: &BoundFamily,
    rtilde: Option<f64>,
    search: RSearch,
) -> Result<Option<RInterval>, TheoremError> {
    let RSearch { r_min, r_max, rel_tol } = search;
    if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
        return Err(TheoremError::InvalidRange { r_min, r_max });
    }
    let g = |r: f64| existence_lhs(inputs, bf, r, rtilde).map(|b| b.lhs - r);
    let decades = (r_max / r_min).log10();
    let n = ((decades * SCAN_PER_DECADE as f64).ceil() as usize).max(2);
    let radii: Vec<f64> = (0..=n)
        .map(|i| {
            if i == n {
                r_max
            } else {
                r_min * 10f64.powf(decades * i as f64 / n as f64)
            }
        })
        .collect();
    let values = radii.par_iter().map(|&r| g(r)).collect::<Result<Vec<f64>, _>>()?;
    let Some(first) = values.iter().position(|&v| v < 0.0) else {
        return Ok(None);
    };
    let last = values[first..]
        .iter()
        .position(|&v| v >= 0.0)
        .map_or(n, |p| first + p - 1);
    let bisect = |mut inside: f64, mut outside: f64| -> Result<f64, TheoremError> {
        while (inside - outside).abs() > rel_tol * inside.abs().min(outside.abs()) {
            let mid = (inside * outside).sqrt();
            if g(mid)? < 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(0.5 * (inside + outside))
    };
    let open_low = first == 0;
    let open_high = last == n;
    let r0 = if open_low {
        r_min
    } else {
        bisect(radii[first], radii[first - 1])?
    };
    let r1 = if open_high {
        r_max
    } else {
        bisect(radii[last], radii[last + 1])?
    };
    Ok(Some(RInterval {
        r0,
        r1,
        open_low,
        open_high,
    }))
}

/// Penalty for `T*`: `eps = k (R - LHS(R)) / (2 (R + R~))` at the chosen `R`.
pub fn default_penalty(k: f64, lhs: &LhsBreakdown, rtilde: f64) -> f64 {
    k * (lhs.r - lhs.lhs) / (2.0 * (lhs.r + rtilde))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallInvariance {
    /// `sup_t int |G(t,s)| (phi_R(s) + (k+M) R) ds`.
    pub value_sup: f64,
    /// Same with `|dG/dt|`.
    pub slope_sup: f64,
    pub horizon: f64,
    pub holds: bool,
}

/// Whether `T` maps the ball of radius `R` into itself, measured directly
/// with the derived kernel (no envelope constants). The sup over `t` is
/// sampled on `[0, 60/k + 2 xi]` and refined by golden-section search.
pub fn check_ball_invariance_derived(
    gk: &GreenKernel,
    bf: &BoundFamily,
    r: f64,
) -> Result<BallInvariance, TheoremError> {
    if gk.mode() != KernelMode::Derived {
        return Err(TheoremError::InvalidGrid(
            "ball invariance is checked with the derived kernel".into(),
        ));
    }
    if !(r > 0.0) {
        return Err(TheoremError::InvalidRadius(r));
    }
    let sp = gk.shift();
    let shift_load = (sp.damping + sp.stiffness) * r;
    let tol = Tolerance::new(1e-9, 1e-13);
    let row = |t: f64, slope: bool| -> Result<f64, TheoremError> {
        let end = gk.support_end(t);
        let bp = gk.breakpoints(t);
        let est = integrate_interval(
            |s| {
                let g = if slope { gk.dt(t, s) } else { gk.green(t, s) };
                Ok(g.abs() * (bf.phi(s, r)? + shift_load))
            },
            0.0,
            end,
            &bp,
            tol,
        )?;
        Ok(est.value)
    };
    let horizon = 60.0 / sp.damping + 2.0 * gk.last_node();
    let n = 400;
    let grid: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    let sup_of = |slope: bool| -> Result<f64, TheoremError> {
        let vals = grid.par_iter().map(|&t| row(t, slope)).collect::<Result<Vec<_>, _>>()?;
        let (i, best) = vals.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(n)];
        let (_, v, _) = golden_max(&mut |t| row(t, slope), lo, hi, 1e-8)?;
        Ok(best.max(v))
    };
    let value_sup = sup_of(false)?;
    let slope_sup = sup_of(true)?;
    Ok(BallInvariance {
        value_sup,
        slope_sup,
        horizon,
        holds: value_sup < r && slope_sup < r,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: &'static str,
    /// Smallest sampled value of the quantity required to be `>= 0`.
    pub margin: f64,
    pub passed: bool,
    /// Where the margin was attained, if meaningful.
    pub at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketReport {
    pub conditions: Vec<Condition>,
    pub t_check: f64,
    pub nodes: usize,
    /// Slopes at infinity estimated from `T_check` and `2 T_check`.
    pub alpha_slope_inf: f64,
    pub beta_slope_inf: f64,
    pub alpha_weighted_slopes: f64,
    pub beta_weighted_slopes: f64,
}

impl BracketReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

const D1_STEP: f64 = 1e-5;
const D2_STEP: f64 = 1e-3;

fn d1(e: &Expression, t: f64) -> Result<f64, TheoremError> {
    let h = D1_STEP;
    let plus = e.eval(&[t + h]).map_err(eval_at(t + h))?;
    if t >= h {
        let minus = e.eval(&[t - h]).map_err(eval_at(t - h))?;
        Ok((plus - minus) / (2.0 * h))
    } else {
        let here = e.eval(&[t]).map_err(eval_at(t))?;
        let plus2 = e.eval(&[t + 2.0 * h]).map_err(eval_at(t + 2.0 * h))?;
        Ok((-3.0 * here + 4.0 * plus - plus2) / (2.0 * h))
    }
}

fn d2(e: &Expression, t: f64) -> Result<f64, TheoremError> {
    let h = D2_STEP;
    let here = e.eval(&[t]).map_err(eval_at(t))?;
    let plus = e.eval(&[t + h]).map_err(eval_at(t + h))?;
    let minus = e.eval(&[t - h]).map_err(eval_at(t - h))?;
    Ok((plus - 2.0 * here + minus) / (h * h))
}

/// `T_check = max(2 xi_{m-1} + 10, given)`.
pub fn default_t_check(p: &MultipointProblem) -> f64 {
    2.0 * p.last_node() + 10.0
}

/// Lower/upper solution conditions sampled on `nodes` equispaced interior
/// points of `(0, T_check]`:
///
/// * `alpha'' - f(t, alpha, alpha') >= 0`, `alpha(0) <= 0`,
///   `alpha'(inf) >= sum alpha_i alpha'(xi_i)`;
/// * the reversed inequalities for `beta`;
/// * `alpha <= beta` on the grid.
///
/// Derivatives are central differences of the expressions. The slope at
/// infinity is extrapolated as `2 d(2T) - d(T)` from `d(T) = alpha'(T)`.
pub fn verify_bracket(
    p: &MultipointProblem,
    br: &BracketPair,
    nodes: usize,
    t_check: f64,
) -> Result<BracketReport, TheoremError> {
    if nodes < 3 || t_check < default_t_check(p) {
        return Err(TheoremError::InvalidGrid(format!(
            "need >= 3 nodes and T_check >= {} (got {nodes}, {t_check})",
            default_t_check(p)
        )));
    }
    let (lo, hi) = (br.lower_expr(), br.upper_expr());
    let grid: Vec<f64> = (1..=nodes).map(|j| t_check * j as f64 / nodes as f64).collect();
    let rows = grid
        .par_iter()
        .map(|&t| {
            let a = lo.eval(&[t]).map_err(eval_at(t))?;
            let b = hi.eval(&[t]).map_err(eval_at(t))?;
            let fa = p.f(t, a, d1(lo, t)?).map_err(eval_at(t))?;
            let fb = p.f(t, b, d1(hi, t)?).map_err(eval_at(t))?;
            Ok((d2(lo, t)? - fa, fb - d2(hi, t)?, b - a))
        })
        .collect::<Result<Vec<(f64, f64, f64)>, TheoremError>>()?;
    let min_of = |pick: fn(&(f64, f64, f64)) -> f64| {
        rows.iter()
            .zip(&grid)
            .map(|(r, &t)| (pick(r), t))
            .fold((f64::INFINITY, 0.0), |acc, x| if x.0 < acc.0 { x } else { acc })
    };
    let (lower_ode, lower_at) = min_of(|r| r.0);
    let (upper_ode, upper_at) = min_of(|r| r.1);
    let (order, order_at) = min_of(|r| r.2);

    let slope_inf = |e: &Expression| -> Result<f64, TheoremError> { Ok(2.0 * d1(e, 2.0 * t_check)? - d1(e, t_check)?) };
    let weighted = |e: &Expression| -> Result<f64, TheoremError> {
        p.alphas().iter().zip(p.xis()).map(|(&a, &x)| Ok(a * d1(e, x)?)).sum()
    };
    let alpha_slope_inf = slope_inf(lo)?;
    let beta_slope_inf = slope_inf(hi)?;
    let alpha_weighted_slopes = weighted(lo)?;
    let beta_weighted_slopes = weighted(hi)?;
    let alpha0 = lo.eval(&[0.0]).map_err(eval_at(0.0))?;
    let beta0 = hi.eval(&[0.0]).map_err(eval_at(0.0))?;
    // slopes at infinity carry finite-difference noise of order 1e-10
    let slope_tol = 1e-8;
    let cond = |name, margin: f64, tol: f64, at| Condition {
        name,
        margin,
        passed: margin >= -tol,
        at,
    };
    let conditions = vec![
        cond(
            "lower: alpha'' >= f(t, alpha, alpha')",
            lower_ode,
            INEQUALITY_TOL,
            Some(lower_at),
        ),
        cond("lower: alpha(0) <= 0", -alpha0, 0.0, Some(0.0)),
        cond(
            "lower: alpha'(inf) >= sum alpha_i alpha'(xi_i)",
            alpha_slope_inf - alpha_weighted_slopes,
            slope_tol,
            None,
        ),
        cond(
            "upper: beta'' <= f(t, beta, beta')",
            upper_ode,
            INEQUALITY_TOL,
            Some(upper_at),
        ),
        cond("upper: beta(0) >= 0", beta0, 0.0, Some(0.0)),
        cond(
            "upper: beta'(inf) <= sum alpha_i beta'(xi_i)",
            beta_weighted_slopes - beta_slope_inf,
            slope_tol,
            None,
        ),
        Condition {
            name: "ordering: alpha <= beta",
            margin: order.min(beta0 - alpha0),
            passed: order >= 0.0 && beta0 >= alpha0,
            at: Some(if beta0 - alpha0 < order { 0.0 } else { order_at }),
        },
    ];
    Ok(BracketReport {
        conditions,
        t_check,
        nodes,
        alpha_slope_inf,
        beta_slope_inf,
        alpha_weighted_slopes,
        beta_weighted_slopes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationViolation {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub f: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub passed: bool,
    pub samples: usize,
    pub violation: Option<DominationViolation>,
}

/// Sampled check of `|f(t, x, y)| <= phi_r(t)` for `|x|, |y| < r`, on 200
/// points of `[0, t_max]` and a 21 x 21 grid of `(x, y)` in `[-0.999r, 0.999r]^2`.
pub fn check_domination(
    p: &MultipointProblem,
    bf: &BoundFamily,
    radii: &[f64],
    t_max: f64,
) -> Result<DominationReport, TheoremError> {
    let mut samples = 0;
    for &r in radii {
        let side: Vec<f64> = (0..21).map(|i| 0.999 * r * (i as f64 / 10.0 - 1.0)).collect();
        for i in 0..=200 {
            let t = t_max * i as f64 / 200.0;
            let phi = bf.phi(t, r).map_err(eval_at(t))?;
            for &x in &side {
                for &y in &side {
                    samples += 1;
                    let f = p.f(t, x, y).map_err(eval_at(t))?;
                    if f.abs() > phi * (1.0 + 1e-12) + 1e-15 {
                        return Ok(DominationReport {
                            passed: false,
                            samples,
                            violation: Some(DominationViolation { t, x, y, r, f, phi }),
                        });
                    }
                }
            }
        }
    }
    Ok(DominationReport {
        passed: true,
        samples,
        violation: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneCounterexample {
    pub t: f64,
    pub x: f64,
    pub y1: f64,
    pub y2: f64,
    pub f1: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub passed: bool,
    pub pairs_checked: usize,
    pub counterexample: Option<MonotoneCounterexample>,
}

/// Sampled check that `y -> f(t, x, y)` is nondecreasing: for every
/// `(t, x)` and adjacent `y1 < y2` (after sorting `ys`),
/// `f(t, x, y2) >= f(t, x, y1) - 1e-10`.
pub fn check_monotone_in_y(
    p: &MultipointProblem,
    ts: &[f64],
    xs: &[f64],
    ys: &[f64],
) -> Result<MonotoneReport, TheoremError> {
    if ts.is_empty() || xs.is_empty() || ys.len() < 2 {
        return Err(TheoremError::InvalidGrid("monotonicity grid is empty".into()));
    }
    let mut ys = ys.to_vec();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut pairs_checked = 0;
    for &t in ts {
        for &x in xs {
            let mut prev = p.f(t, x, ys[0]).map_err(eval_at(t))?;
            for w in ys.windows(2) {
                let next = p.f(t, x, w[1]).map_err(eval_at(t))?;
                pairs_checked += 1;
                if next < prev - 1e-10 {
                    return Ok(MonotoneReport {
                        passed: false,
                        pairs_checked,
                        counterexample: Some(MonotoneCounterexample {
                            t,
                            x,
                            y1: w[0],
                            y2: w[1],
                            f1: prev,
                            f2: next,
                        }),
                    });
                }
                prev = next;
            }
        }
    }
    Ok(MonotoneReport {
        passed: true,
        pairs_checked,
        counterexample: None,
    })
}

/// `sup_{t >= 0} |e(t)|` given `|e(t)| <= floor + A e^{-ct}`.
pub fn norm_sup_of(e: &Expression, floor: f64, decay: Envelope) -> Result<SupResult, TheoremError> {
    Ok(sup_on_ray_with_floor(
        |t| {
            e.eval(&[t])
                .map(f64::abs)
                .map_err(|source| QuadError::Eval { at: t, source })
        },
        0.0,
        floor,
        decay,
    )?)
}

/// Decay hint for an expression without one: `floor` is the sampled sup of
/// `|e|` on `[50, 100]` (times 1 + 1e-6) and the transient is bounded by
/// the sampled sup on `[0, 50]` decaying at rate 1/2.
pub fn guess_decay(e: &Expression) -> Result<(f64, Envelope), TheoremError> {
    let sample = |a: f64, b: f64| -> Result<f64, TheoremError> {
        let n = 5000;
        let mut sup = 0.0f64;
        for j in 0..=n {
            let t = a + (b - a) * j as f64 / n as f64;
            sup = sup.max(e.eval(&[t]).map_err(eval_at(t))?.abs());
        }
        Ok(sup)
    };
    let floor = sample(50.0, 100.0)? * (1.0 + 1e-6);
    let transient = sample(0.0, 50.0)?;
    Ok((floor, Envelope::new(2.0 * transient.max(1e-300), 0.5)))
}

/// `R~ = max(||alpha||_inf, ||beta||_inf)` with decay hints from
/// [`guess_decay`]. Returns `(||alpha||, ||beta||)`.
pub fn bracket_norms(br: &BracketPair) -> Result<(SupResult, SupResult), TheoremError> {
    let one = |e: &Expression| -> Result<SupResult, TheoremError> {
        let (floor, env) = guess_decay(e)?;
        norm_sup_of(e, floor, env)
    };
    Ok((one(br.lower_expr())?, one(br.upper_expr())?))
}
