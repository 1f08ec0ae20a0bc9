//! Quadrature on `[0, inf)` and supremum search on rays.
//!
//! Interior pieces use a global adaptive scheme over the 21-point
//! Gauss-Kronrod rule. Segments are seeded from the caller's breakpoints and
//! only ever bisected, so no segment straddles a breakpoint. The infinite tail
//! is cut where a caller-supplied exponential envelope makes it negligible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::expr::EvalError;

pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const MAX_SUBDIVISIONS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand has no decay envelope and no explicit cutoff")]
    NoDecayInfo,
    #[error("tolerances must be positive (rel {rel}, abs {abs})")]
    InvalidTolerance { rel: f64, abs: f64 },
    #[error("envelope must have positive amplitude and rate (A {amplitude}, c {rate})")]
    InvalidEnvelope { amplitude: f64, rate: f64 },
    #[error("no convergence after {subdivisions} subdivisions (value {value}, error {error})")]
    NotConverged {
        value: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand evaluation failed at s = {at}: {source}")]
    Eval {
        at: f64,
        #[source]
        source: EvalError,
    },
    #[error("integrand is not finite at s = {at}")]
    NonFinite { at: f64 },
}

/// `|g(s)| <= amplitude * exp(-rate * s)` beyond the last breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub amplitude: f64,
    pub rate: f64,
}

impl Envelope {
    pub fn new(amplitude: f64, rate: f64) -> Self {
        Envelope { amplitude, rate }
    }

    fn validate(&self) -> Result<(), QuadError> {
        if self.amplitude >= 0.0 && self.rate > 0.0 && self.amplitude.is_finite() {
            Ok(())
        } else {
            Err(QuadError::InvalidEnvelope {
                amplitude: self.amplitude,
                rate: self.rate,
            })
        }
    }

    /// Bound on the integral of the envelope over `[t, inf)`.
    pub fn tail_bound(&self, t: f64) -> f64 {
        self.amplitude / self.rate * (-self.rate * t).exp()
    }

    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (-self.rate * t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: DEFAULT_REL_TOL,
            abs: DEFAULT_ABS_TOL,
        }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerance { rel, abs }
    }

    fn validate(&self) -> Result<(), QuadError> {
        if self.rel > 0.0 && self.abs > 0.0 {
            Ok(())
        } else {
            Err(QuadError::InvalidTolerance {
                rel: self.rel,
                abs: self.abs,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
    /// Where the half-line was truncated, if it was.
    pub cutoff: Option<f64>,
}

/// A half-line integrand with its smoothness and decay information.
pub struct Integrand<F> {
    eval: F,
    breakpoints: Vec<f64>,
    envelope: Option<Envelope>,
    cutoff: Option<f64>,
}

impl<F> Integrand<F>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    pub fn new(eval: F) -> Self {
        Integrand {
            eval,
            breakpoints: Vec::new(),
            envelope: None,
            cutoff: None,
        }
    }

    /// Points where the integrand may fail to be smooth. Sorted and
    /// deduplicated; points outside `(0, inf)` are dropped.
    pub fn breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        let mut bp: Vec<f64> = points.into_iter().filter(|p| *p > 0.0).collect();
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        self.breakpoints = bp;
        self
    }

    pub fn envelope(mut self, amplitude: f64, rate: f64) -> Self {
        self.envelope = Some(Envelope::new(amplitude, rate));
        self
    }

    /// Integrate over `[0, cutoff]` only. The caller asserts the integrand
    /// vanishes (or is irrelevant) beyond it.
    pub fn cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }
}

/// Integrate `g` over `[0, inf)`.
///
/// With an envelope `(A, c)` the integration range is cut at the first
/// `T >= last breakpoint` with `(A/c) e^{-cT} <= abs/2`; that tail bound is
/// added to the error estimate. An explicit cutoff takes precedence.
pub fn integrate_halfline<F>(g: &Integrand<F>, tol: Tolerance) -> Result<Estimate, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    tol.validate()?;
    let last_bp = g.breakpoints.last().copied().unwrap_or(0.0);
    let (upper, tail) = match (g.cutoff, g.envelope) {
        (Some(c), _) => (c, 0.0),
        (None, Some(env)) => {
            env.validate()?;
            let needed = if env.amplitude == 0.0 {
                0.0
            } else {
                (2.0 * env.amplitude / (env.rate * tol.abs)).ln() / env.rate
            };
            let upper = needed.max(last_bp);
            (upper, env.tail_bound(upper))
        }
        (None, None) => return Err(QuadError::NoDecayInfo),
    };
    if upper <= 0.0 {
        return Ok(Estimate {
            value: 0.0,
            error: tail,
            subdivisions: 0,
            cutoff: Some(upper),
        });
    }
    let interior_tol = Tolerance::new(tol.rel, tol.abs * 0.5);
    let mut est = integrate_interval(&g.eval, 0.0, upper, &g.breakpoints, interior_tol)?;
    est.error += tail;
    est.cutoff = Some(upper);
    Ok(est)
}

/// Integrate over the finite interval `[a, b]` with the given breakpoints.
pub fn integrate_interval<F>(f: F, a: f64, b: f64, breakpoints: &[f64], tol: Tolerance) -> Result<Estimate, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    tol.validate()?;
    if b == a {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
            cutoff: None,
        });
    }
    if b < a {
        let mut est = integrate_interval(f, b, a, breakpoints, tol)?;
        est.value = -est.value;
        return Ok(est);
    }
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|p| *p > a && *p < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(b);
    adaptive(&f, &edges, tol)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn adaptive<F>(f: &F, edges: &[f64], tol: Tolerance) -> Result<Estimate, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let mut heap = BinaryHeap::with_capacity(edges.len() * 4);
    let (mut value, mut error, mut abs_value) = (0.0, 0.0, 0.0);
    for w in edges.windows(2) {
        let seg = gauss_kronrod(f, w[0], w[1])?;
        value += seg.value;
        error += seg.error;
        abs_value += seg.abs_value;
        heap.push(seg);
    }
    let mut subdivisions = heap.len();
    loop {
        let target = tol.abs.max(tol.rel * value.abs());
        let roundoff = 50.0 * f64::EPSILON * abs_value;
        if error <= target || error <= roundoff {
            break;
        }
        if subdivisions >= MAX_SUBDIVISIONS {
            return Err(QuadError::NotConverged {
                value,
                error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // segment can no longer be split in floating point
            heap.push(worst);
            return Err(QuadError::NotConverged {
                value,
                error,
                subdivisions,
            });
        }
        let left = gauss_kronrod(f, worst.a, mid)?;
        let right = gauss_kronrod(f, mid, worst.b)?;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        abs_value += left.abs_value + right.abs_value - worst.abs_value;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        if subdivisions % 256 == 0 {
            value = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
            abs_value = heap.iter().map(|s| s.abs_value).sum();
        }
    }
    value = heap.iter().map(|s| s.value).sum();
    error = heap.iter().map(|s| s.error).sum();
    Ok(Estimate {
        value,
        error,
        subdivisions,
        cutoff: None,
    })
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_197_942,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

fn eval_at<F>(f: &F, s: f64) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let v = f(s).map_err(|source| QuadError::Eval { at: s, source })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QuadError::NonFinite { at: s })
    }
}

fn gauss_kronrod<F>(f: &F, a: f64, b: f64) -> Result<Segment, QuadError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = eval_at(f, center)?;
    let mut res_k = f_center * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = f_center.abs() * WGK[10];
    let mut fv = [(0.0, 0.0); 10];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = eval_at(f, center - dx)?;
        let f2 = eval_at(f, center + dx)?;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
        *slot = (f1, f2);
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        res_asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (1.0f64).min((200.0 * err / res_asc).powf(1.5));
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Segment {
        a,
        b,
        value,
        error: err,
        abs_value: res_abs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupResult {
    pub sup: f64,
    pub argmax: f64,
    /// Right end of the searched window.
    pub horizon: f64,
    pub evaluations: usize,
}

const RAY_GRID_PER_SCALE: usize = 50;
const RAY_MARGIN: f64 = 1e-12;

/// Supremum of `F` over `[t_min, inf)` given `|F(t)| <= A e^{-ct}` for large `t`.
///
/// A uniform grid is scanned over a window that grows until the envelope at
/// its right end is below the running best by `1e-12`; the best cell is then
/// refined by golden-section search.
pub fn sup_on_ray<F>(f: F, t_min: f64, decay: Envelope) -> Result<SupResult, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    sup_on_ray_with_floor(f, t_min, 0.0, decay)
}

/// As [`sup_on_ray`], for functions with `|F(t)| <= floor + A e^{-ct}`.
pub fn sup_on_ray_with_floor<F>(mut f: F, t_min: f64, floor: f64, decay: Envelope) -> Result<SupResult, QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    decay.validate()?;
    let step = 1.0 / (decay.rate * RAY_GRID_PER_SCALE as f64);
    let mut grid: Vec<(f64, f64)> = Vec::new();
    let mut hi = t_min + 8.0 / decay.rate;
    let mut evaluations = 0;
    let max_points = 200_000;
    loop {
        let start = grid.len();
        let mut t = if start == 0 { t_min } else { grid[start - 1].0 + step };
        while t <= hi + 0.5 * step && grid.len() < max_points {
            grid.push((t, f(t)?));
            evaluations += 1;
            t = t_min + step * grid.len() as f64;
        }
        let best = grid.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let excess = best - RAY_MARGIN - floor;
        let needed = if decay.amplitude == 0.0 {
            t_min
        } else if excess > 0.0 {
            (decay.amplitude / excess).ln() / decay.rate
        } else {
            (decay.amplitude / RAY_MARGIN).ln() / decay.rate
        };
        if needed <= hi || grid.len() >= max_points {
            break;
        }
        hi = needed.max(hi + 8.0 / decay.rate);
    }
    let mut best_idx = 0;
    for (i, p) in grid.iter().enumerate() {
        if p.1 > grid[best_idx].1 {
            best_idx = i;
        }
    }
    let lo = grid[best_idx.saturating_sub(1)].0;
    let up = grid[(best_idx + 1).min(grid.len() - 1)].0;
    let (mut sup, mut argmax) = (grid[best_idx].1, grid[best_idx].0);
    if up > lo {
        let (x, v, n) = golden_max(&mut f, lo, up, 1e-10)?;
        evaluations += n;
        if v > sup {
            sup = v;
            argmax = x;
        }
    }
    Ok(SupResult {
        sup,
        argmax,
        horizon: grid.last().map(|p| p.0).unwrap_or(t_min),
        evaluations,
    })
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximisation on `[a, b]`, returning `(argmax, max, evals)`.
/// The endpoints are included as candidates.
pub fn golden_max<F, E>(f: &mut F, a: f64, b: f64, xtol: f64) -> Result<(f64, f64, usize), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let (mut a, mut b) = (a, b);
    let fa = f(a)?;
    let fb = f(b)?;
    let mut evals = 2;
    let mut best = if fa >= fb { (a, fa) } else { (b, fb) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    evals += 2;
    while (b - a).abs() > xtol * (1.0 + c.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        evals += 1;
        if evals > 400 {
            break;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok((best.0, best.1, evals))
}
