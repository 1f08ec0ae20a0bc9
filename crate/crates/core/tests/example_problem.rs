use halfline_bvp::model::MultipointProblem;
use halfline_bvp::theorems::example;

fn problem() -> MultipointProblem {
    MultipointProblem::from_source(example::ALPHAS.to_vec(), example::XIS.to_vec(), example::F).unwrap()
}

/// `u(t) = t` solves the worked example exactly: `f(t, t, 1) = 0` and
/// `u'(inf) = 1 = sum alpha_i`.
#[test]
fn identity_is_an_unbounded_solution() {
    let p = problem();
    for i in 0..=1000 {
        let t = 0.05 * i as f64;
        assert_eq!(p.f(t, t, 1.0).unwrap(), 0.0);
    }
    assert!((p.alphas().iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

/// Along any trajectory `w = u' - 1` obeys `w' = c(t) g(u) w` with
/// `c g >= 0`, so `f(t, x, y) / (y - 1)` is never negative.
#[test]
fn slope_defect_cannot_shrink() {
    let p = problem();
    for i in 0..200 {
        let t = 0.1 * i as f64;
        for j in -20..=20 {
            let x = 0.25 * j as f64;
            for y in [-3.0, -0.5, 0.0, 0.3, 0.99, 1.01, 2.0] {
                let ratio = p.f(t, x, y).unwrap() / (y - 1.0);
                assert!(ratio >= 0.0, "t={t} x={x} y={y}");
            }
        }
    }
}
