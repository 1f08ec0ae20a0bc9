//! Acceptance criteria for the worked example, one line per criterion.
//! Exits nonzero when any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use halfline_bvp::fixpoint::{default_t_max, graded_grid, picard_solve, verify, GridFunction, Operator, SolveOptions};
use halfline_bvp::kernel::{kernel_constants, make_shift, DerivativeFormula, GreenKernel, KernelMode};
use halfline_bvp::model::{BoundFamily, BoundKind, BracketPair, MultipointProblem};
use halfline_bvp::quad::{integrate_halfline, integrate_interval, Envelope, Integrand, Tolerance};
use halfline_bvp::theorems::{
    default_penalty, default_t_check, example, existence_lhs, find_r_interval, norm_sup_of, quadratic_coefficients,
    verify_bracket, LhsInputs, RSearch,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

struct Fixture {
    problem: MultipointProblem,
    phi: BoundFamily,
    bracket: BracketPair,
    printed: GreenKernel,
    derived: GreenKernel,
}

impl Fixture {
    fn new() -> Self {
        let problem =
            MultipointProblem::from_source(example::ALPHAS.to_vec(), example::XIS.to_vec(), example::F).unwrap();
        let kernel = |mode| GreenKernel::new(&problem, make_shift(example::K, example::M, mode).unwrap()).unwrap();
        Fixture {
            phi: BoundFamily::from_source(BoundKind::Linf, example::PHI).unwrap(),
            bracket: BracketPair::from_source(example::ALPHA, example::BETA).unwrap(),
            printed: kernel(KernelMode::AsPrinted),
            derived: kernel(KernelMode::Derived),
            problem,
        }
    }

    fn inputs(&self) -> Result<LhsInputs, String> {
        let kc = kernel_constants(&self.printed).map_err(|e| e.to_string())?;
        LhsInputs::from_kernel(&self.printed, &kc).map_err(|e| e.to_string())
    }

    fn rtilde(&self) -> Result<f64, String> {
        let a = norm_sup_of(self.bracket.lower_expr(), 0.0075, Envelope::new(0.015, 0.5)).map_err(|e| e.to_string())?;
        let b = norm_sup_of(self.bracket.upper_expr(), 1.0, Envelope::new(1.0, 0.5)).map_err(|e| e.to_string())?;
        Ok(a.sup.max(b.sup))
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64, ok: &mut bool, detail: &mut Vec<String>) {
    let pass = (got - want).abs() <= tol;
    *ok &= pass;
    detail.push(format!(
        "{name} = {got:.6} (want {want} +/- {tol:e}){}",
        if pass { "" } else { " X" }
    ));
}

fn c1_kernel_constants(fx: &Fixture) -> Outcome {
    let inp = fx.inputs()?;
    let (mut ok, mut d) = (true, Vec::new());
    within("C1", inp.c1, 1.2305, 1e-3, &mut ok, &mut d);
    within("C2", inp.c2, 1.3395, 1e-3, &mut ok, &mut d);
    Ok((ok, d.join(", ")))
}

fn c2_inequality_coefficients(fx: &Fixture) -> Outcome {
    let inp = fx.inputs()?;
    let q = quadratic_coefficients(&inp, &fx.phi)
        .map_err(|e| e.to_string())?
        .ok_or("I(r)/(r+1)^2 is not constant")?;
    let (mut ok, mut d) = (true, Vec::new());
    within("K", inp.k_factor(), 0.9423, 1e-3, &mut ok, &mut d);
    within("I2", q.i2, 0.00022, 2e-5, &mut ok, &mut d);
    within("I1", q.i1, 0.00174, 2e-5, &mut ok, &mut d);
    within("LHS", q.lhs, 0.00233, 2e-5, &mut ok, &mut d);
    Ok((ok, d.join(", ")))
}

fn c3_interval(fx: &Fixture) -> Outcome {
    let inp = fx.inputs()?;
    let rt = fx.rtilde()?;
    match find_r_interval(&inp, &fx.phi, Some(rt), RSearch::default()).map_err(|e| e.to_string())? {
        None => Ok((
            false,
            format!("no admissible R in [1e-6, 1e6] (K = {:.6})", inp.k_factor()),
        )),
        Some(iv) => {
            let (mut ok, mut d) = (true, Vec::new());
            within("R0", iv.r0, 0.1615, 1e-3, &mut ok, &mut d);
            within("R1", iv.r1, 22.7199, 1e-2, &mut ok, &mut d);
            Ok((ok, d.join(", ")))
        }
    }
}

fn c4_bracket_norms(fx: &Fixture) -> Outcome {
    let a = norm_sup_of(fx.bracket.lower_expr(), 0.0075, Envelope::new(0.015, 0.5)).map_err(|e| e.to_string())?;
    let b = norm_sup_of(fx.bracket.upper_expr(), 1.0, Envelope::new(1.0, 0.5)).map_err(|e| e.to_string())?;
    let rt = a.sup.max(b.sup);
    let (mut ok, mut d) = (true, Vec::new());
    within("|alpha|", a.sup, 0.0087, 5e-4, &mut ok, &mut d);
    ok &= b.sup == 1.0 && rt == 1.0;
    d.push(format!("|beta| = {}, R~ = {rt}", b.sup));
    Ok((ok, d.join(", ")))
}

fn c5_bracket_verification(fx: &Fixture) -> Outcome {
    let rep =
        verify_bracket(&fx.problem, &fx.bracket, 2000, default_t_check(&fx.problem)).map_err(|e| e.to_string())?;
    let beta_zero = rep
        .conditions
        .iter()
        .filter(|c| c.name.starts_with("upper: beta''") || c.name.starts_with("upper: beta'(inf)"))
        .all(|c| c.margin == 0.0);
    let failed: Vec<&str> = rep.conditions.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok((
        rep.passed() && beta_zero,
        format!(
            "{} conditions on {} nodes, failed: {:?}, beta margins exactly zero: {beta_zero}",
            rep.conditions.len(),
            rep.nodes,
            failed
        ),
    ))
}

fn bump(s: f64) -> f64 {
    0.5 * ((10.0 * (s - 1.0)).tanh() - (10.0 * (s - 3.0)).tanh())
}

fn c6_derived_certificate(fx: &Fixture) -> Outcome {
    let grid: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
    let loads: [(&str, fn(f64) -> f64); 3] = [
        ("exp", |s| (-s).exp()),
        ("exp*sin", |s| (-s).exp() * s.sin()),
        ("bump", bump),
    ];
    let mut ok = true;
    let mut d = Vec::new();
    for (name, w) in loads {
        let r = fx.derived.defining_property(w, &grid).map_err(|e| e.to_string())?;
        let pass = r.ode_residual < 1e-4 && r.v0.abs() < 1e-12 && r.bc_inf_residual < 1e-6;
        ok &= pass;
        d.push(format!(
            "{name}: res {:.1e}, v(0) {:.1e}, bc {:.1e}",
            r.ode_residual, r.v0, r.bc_inf_residual
        ));
    }
    Ok((ok, d.join("; ")))
}

fn c7_derivative_oracle(fx: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for gk in [&fx.printed, &fx.derived] {
        let mut checked = 0;
        while checked < 100 {
            let t: f64 = rng.gen_range(0.0..15.0);
            let s: f64 = rng.gen_range(0.0..15.0);
            let h = 1e-5;
            if (t - s).abs() < 1e-2 || t < 1e-2 || gk.xis().iter().any(|x| (t - x).abs() < 1e-2) {
                continue;
            }
            let fd = (gk.green(t + h, s) - gk.green(t - h, s)) / (2.0 * h);
            let an = gk
                .green_dt(t, s, DerivativeFormula::Analytic)
                .map_err(|e| e.to_string())?
                .value;
            let scale = an.abs().max(1e-3 * (-example::K * (t + s) / 2.0).exp());
            worst = worst.max((fd - an).abs() / scale);
            checked += 1;
        }
    }
    // printed - analytic = (gamma - 1) e^{-k(t+s)/2} cos(gamma (s - t)) / gamma on s in [xi, t)
    let g = fx.printed.shift().gamma;
    let mut gamma_gap = 0.0f64;
    for _ in 0..100 {
        let s: f64 = rng.gen_range(0.11..10.0);
        let t: f64 = s + rng.gen_range(0.01..10.0);
        let p = fx
            .printed
            .green_dt(t, s, DerivativeFormula::Printed)
            .map_err(|e| e.to_string())?
            .value;
        let a = fx
            .printed
            .green_dt(t, s, DerivativeFormula::Analytic)
            .map_err(|e| e.to_string())?
            .value;
        let expected = (g - 1.0) * (-example::K * (t + s) / 2.0).exp() / g * (g * (s - t)).cos();
        gamma_gap = gamma_gap.max((p - a - expected).abs());
    }
    Ok((
        worst < 1e-6 && gamma_gap < 1e-14,
        format!("max rel FD error {worst:.1e}; max |printed - analytic - (gamma-1) cos term| {gamma_gap:.1e}"),
    ))
}

fn c8_solver(fx: &Fixture) -> Outcome {
    let p = &fx.problem;
    let k = example::K;
    let nodes = Arc::new(graded_grid(default_t_max(k, p.last_node()), 400, p.xis()).map_err(|e| e.to_string())?);
    let u0 = GridFunction::zero(Arc::clone(&nodes), k / 2.0).map_err(|e| e.to_string())?;
    let rt = fx.rtilde()?;
    let inp = fx.inputs()?;
    let eps = match find_r_interval(&inp, &fx.phi, Some(rt), RSearch::default()).map_err(|e| e.to_string())? {
        Some(iv) => {
            let mid = existence_lhs(&inp, &fx.phi, iv.midpoint(), Some(rt)).map_err(|e| e.to_string())?;
            default_penalty(k, &mid, rt)
        }
        None => 0.01 * k,
    };
    let opts = SolveOptions {
        damping: 1.0,
        tol: 1e-8,
        max_iter: 200,
    };
    let out = picard_solve(&fx.derived, p, &u0, opts, Some((&fx.bracket, eps))).map_err(|e| e.to_string())?;
    let r = verify(p, &out.solution).map_err(|e| e.to_string())?;
    let mut inside = true;
    for (&t, &u) in nodes.iter().zip(out.solution.values()) {
        let lo = fx.bracket.lower(t).map_err(|e| e.to_string())?;
        let hi = fx.bracket.upper(t).map_err(|e| e.to_string())?;
        inside &= lo <= u && u <= hi;
    }
    let certified = r.ode_residual < 10.0 * r.scheme_error && r.bc0_residual < 1e-12;
    Ok((
        out.converged && out.iterations <= 200 && certified && inside,
        format!(
            "converged {} after {} iterations (increment {:.1e}, eps {eps:.4}); residual {:.1e} vs 10 x scheme {:.1e}; u(0) {:.1e}; inside bracket {inside}",
            out.converged,
            out.iterations,
            out.increment,
            r.ode_residual,
            10.0 * r.scheme_error,
            r.bc0_residual
        ),
    ))
}

fn c9_quadrature(_: &Fixture) -> Outcome {
    let tol = Tolerance::new(1e-12, 1e-14);
    let mut worst = 0.0f64;
    for k in [0.5, 0.86, 2.0] {
        let est = integrate_halfline(
            &Integrand::new(|s| Ok((-k * s / 2.0).exp())).envelope(1.0, k / 2.0),
            tol,
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max((est.value - 2.0 / k).abs());
    }
    let f = |s: f64| Ok((-s).exp() * (3.0 * s).sin().abs());
    let plain = integrate_interval(f, 0.0, 10.0, &[], tol)
        .map_err(|e| e.to_string())?
        .value;
    let split = integrate_interval(f, 0.0, 10.0, &[0.3, 1.7, 2.2, 5.0, 9.99], tol)
        .map_err(|e| e.to_string())?
        .value;
    let gap = (plain - split).abs();
    Ok((
        worst < 1e-10 && gap < 1e-10,
        format!("max |int - 2/k| {worst:.1e}; splitting difference {gap:.1e}"),
    ))
}

fn c10_operator_bound(fx: &Fixture) -> Outcome {
    let (k, m) = (example::K, example::M);
    let p = &fx.problem;
    let inp = fx.inputs()?;
    let nodes = Arc::new(graded_grid(default_t_max(k, p.last_node()), 300, p.xis()).map_err(|e| e.to_string())?);
    let op = Operator::new(&fx.printed, p, Arc::clone(&nodes)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_ratio = 0.0f64;
    for r in [0.5, 1.0, 5.0] {
        let weighted = integrate_halfline(
            &Integrand::new(|s| Ok((-k * s / 2.0).exp() * fx.phi.phi(s, r)?))
                .envelope(3.0 * (r + 1.0) * (r + 1.0) / 1000.0, k / 2.0),
            Tolerance::new(1e-12, 1e-15),
        )
        .map_err(|e| e.to_string())?
        .value;
        let bound = inp.cmax() * (weighted + (2.0 + 2.0 * m / k) * r);
        for _ in 0..100 {
            let a: [f64; 3] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let b: [f64; 3] = [
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.0..3.0),
            ];
            let c: f64 = rng.gen_range(0.0..0.5);
            let u = |t: f64| (0..3).map(|i| a[i] * (b[i] * t + i as f64).sin()).sum::<f64>() * (-c * t).exp();
            let du = |t: f64| {
                (0..3)
                    .map(|i| a[i] * (b[i] * (b[i] * t + i as f64).cos() - c * (b[i] * t + i as f64).sin()))
                    .sum::<f64>()
                    * (-c * t).exp()
            };
            let raw = GridFunction::from_fn(Arc::clone(&nodes), k / 2.0, u, du).map_err(|e| e.to_string())?;
            let scale = r * rng.gen_range(0.0..0.999) / raw.norm();
            let w = GridFunction::from_fn(Arc::clone(&nodes), k / 2.0, |t| scale * u(t), |t| scale * du(t))
                .map_err(|e| e.to_string())?;
            let tu = op.apply(&w).map_err(|e| e.to_string())?;
            worst_ratio = worst_ratio.max(tu.norm() / bound);
        }
    }
    Ok((
        worst_ratio <= 1.0,
        format!("max |Tu| / bound over 300 samples = {worst_ratio:.4}"),
    ))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let fx = Fixture::new();
    let criteria: [(&str, fn(&Fixture) -> Outcome); 10] = [
        ("kernel constants C1, C2 (as_printed)", c1_kernel_constants),
        ("K-factor and I1/I2/LHS coefficients", c2_inequality_coefficients),
        ("admissible interval (R0, R1)", c3_interval),
        ("bracket norms", c4_bracket_norms),
        ("bracket verification", c5_bracket_verification),
        ("derived-kernel certificate", c6_derived_certificate),
        ("analytic-derivative oracle", c7_derivative_oracle),
        ("solver property suite", c8_solver),
        ("quadrature oracles", c9_quadrature),
        ("operator bound", c10_operator_bound),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check(&fx) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        criteria.len() - failures,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
