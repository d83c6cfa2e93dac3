use schauder_lab::funcs::ScalarFn;
use schauder_lab::model::catalog;
use schauder_lab::solver::{parametrix_solve, GridSpec, SolverConfig};
use serde_json::json;

#[test]
fn kolmogorov_solution_is_exact_in_one_sweep() {
    let p = catalog::build("kolmogorov", &json!({"n": 2}), 0.5, 1.0)
        .unwrap()
        .with_terminal(ScalarFn::Linear { coeffs: vec![0.0, 1.0], offset: 0.0 });
    let grid = GridSpec::cube(2, 2.0, 17, 8);
    let t0 = std::time::Instant::now();
    let sol = parametrix_solve(&p, &grid, &SolverConfig::default()).unwrap();
    eprintln!("elapsed {:?} history {:?}", t0.elapsed(), sol.history);
    assert_eq!(sol.iterations, 1);
    let f = &sol.field;
    let mut err = 0.0f64;
    for ti in 0..f.times.len() {
        for k in f.interior_nodes(1) {
            let x = f.node(k);
            let exact = x[1] + x[0] * (1.0 - f.times[ti]);
            err = err.max((f.slice(ti)[k] - exact).abs());
        }
    }
    assert!(err < 1e-4, "err {err}");
}

use schauder_lab::anisotropy::ChainDims;
use schauder_lab::error::Error;
use schauder_lab::proxy::{FrozenProxy, ProxyConfig};
use schauder_lab::solver::{
    frozen_semigroup_apply, green_apply, perturbation_residual, regime_split_expand, time_chained_solve, Axis,
    SampledField,
};
use schauder_lab::stats::{linear_fit, relative_spread};

fn kinetic(horizon: f64) -> schauder_lab::model::ChainProblem {
    catalog::build("kinetic", &json!({}), 0.5, horizon).unwrap()
}

fn l0(horizon: f64) -> schauder_lab::model::ChainProblem {
    catalog::build("kolmogorov", &json!({}), 0.5, horizon).unwrap()
}

fn proxy(p: &schauder_lab::model::ChainProblem, xi: &[f64]) -> FrozenProxy {
    FrozenProxy::new(p, 0.0, xi, p.dims.horizon, ProxyConfig::default()).unwrap()
}

#[test]
fn semigroup_examples() {
    let p = kinetic(1.0);
    let x = [0.4, -0.7];
    let pr = proxy(&p, &x);
    let s = 0.6;
    assert!((frozen_semigroup_apply(&pr, |_| 1.0, 0.0, s, &x).unwrap() - 1.0).abs() < 1e-8);
    let m = pr.mean(0.0, s, &x).unwrap();
    let k = pr.covariance(0.0, s).unwrap();
    let lin = frozen_semigroup_apply(&pr, |y| 2.0 * y[0] - 3.0 * y[1], 0.0, s, &x).unwrap();
    assert!((lin - (2.0 * m[0] - 3.0 * m[1])).abs() < 1e-8);
    let sq = frozen_semigroup_apply(&pr, |y| y[0] * y[0], 0.0, s, &x).unwrap();
    assert!((sq - (m[0] * m[0] + k[(0, 0)])).abs() < 1e-8);
    assert!(matches!(frozen_semigroup_apply(&pr, |_| 1.0, 0.5, 0.5, &x), Err(Error::Ordering(_))));
}

#[test]
fn green_examples() {
    let p = kinetic(1.0);
    let x = [0.4, -0.7];
    let pr = proxy(&p, &x);
    assert!((green_apply(&pr, &|_, _| 1.0, 0.0, 0.0, 0.7, &x, 16).unwrap() - 0.7).abs() < 1e-8);
    assert!((green_apply(&pr, &|_, _| 1.0, 0.0, 0.2, 0.7, &x, 16).unwrap() - 0.5).abs() < 1e-8);
    assert_eq!(green_apply(&pr, &|_, _| 0.0, 0.0, 0.0, 0.7, &x, 16).unwrap(), 0.0);
    let q = l0(1.0);
    let x = [1.0, 0.0];
    let pr = proxy(&q, &x);
    for (t, delta) in [(0.0, 0.5), (0.2, 0.3), (0.5, 0.5)] {
        let v = green_apply(&pr, &|_, y| y[0], t, t, t + delta, &x, 8).unwrap();
        assert!((v - delta * x[0]).abs() < 1e-8, "{v}");
    }
    assert!(matches!(green_apply(&pr, &|_, _| 1.0, 0.3, 0.2, 0.7, &x, 8), Err(Error::Ordering(_))));
    assert!(matches!(green_apply(&pr, &|_, _| 1.0, 0.0, 0.2, 0.7, &x, 0), Err(Error::Config { .. })));
}

fn smooth_field(dims: ChainDims) -> SampledField {
    let axes = vec![Axis::new(-3.0, 3.0, 61).unwrap(); 2];
    SampledField::from_fn(dims, vec![0.0, 0.5, 1.0], axes, |t, x| (x[0] - 0.3 * x[1]).sin() + t * x[0] * x[1] + 0.1 * x[1] * x[1])
        .unwrap()
}

#[test]
fn perturbation_vanishes_for_model_operator() {
    let p = l0(1.0);
    let field = smooth_field(p.dims);
    let pr = proxy(&p, &[0.5, -0.2]);
    for y in [[0.1, 0.2], [1.3, -2.0], [-2.2, 0.7]] {
        let r = perturbation_residual(&p, &pr, &field, 0.4, &y).unwrap();
        assert_eq!(r.total(), 0.0);
        assert_eq!(r.delta1, 0.0);
    }
}

#[test]
fn perturbation_at_the_transported_point_is_zero() {
    let p = kinetic(1.0);
    let field = smooth_field(p.dims);
    let pr = proxy(&p, &[0.5, -0.2]);
    let theta = pr.theta(0.4);
    let r = perturbation_residual(&p, &pr, &field, 0.4, theta.as_slice()).unwrap();
    assert_eq!(r.delta1, 0.0);
    assert_eq!(r.total(), 0.0);
}

#[test]
fn perturbation_matches_direct_assembly_on_kinetic() {
    // Default kinetic parameters, written out by hand.
    let (kappa, beta, eps, eta, alpha) = (0.5, 0.3, 0.3, 0.2, 0.3);
    let f1 = |x: &[f64]| -kappa * x[0].sin() + beta * x[1].cos();
    let f2 = |x: &[f64]| x[0] + eps * x[0].sin() + eta * x[1].cos();
    let a = |x: &[f64]| 1.0 + alpha * (x[0] + x[1]).sin().powi(2);
    let p = kinetic(1.0);
    let field = smooth_field(p.dims);
    let pr = proxy(&p, &[0.5, -0.2]);
    for (s, y) in [(0.4, [0.9, -1.1]), (0.8, [-1.7, 0.3]), (0.1, [2.0, 2.0])] {
        let th = pr.theta(s);
        let th = [th[0], th[1]];
        let du1 = field.derivative(s, &y, &[0]).unwrap();
        let d2u1 = field.derivative(s, &y, &[0, 0]).unwrap();
        let du2 = field.derivative(s, &y, &[1]).unwrap();
        let delta1 = (f1(&y) - f1(&th)) * du1 + 0.5 * (a(&y) - a(&th)) * d2u1;
        let jac = 1.0 + eps * th[0].cos();
        let delta2 = (f2(&y) - f2(&th) - jac * (y[0] - th[0])) * du2;
        let r = perturbation_residual(&p, &pr, &field, s, &y).unwrap();
        assert!((r.delta1 - delta1).abs() < 1e-10, "{} vs {delta1}", r.delta1);
        assert!((r.delta_i[0] - delta2).abs() < 1e-10, "{} vs {delta2}", r.delta_i[0]);
    }
    assert!(matches!(perturbation_residual(&p, &pr, &field, 0.4, &[2.97, 0.0]), Err(Error::Extrapolation(_))));
}

/// `(D^coords P~ psi)(x)` on the kernel from `(0, x)` to `s`.
fn semigroup_derivative(p: &schauder_lab::model::ChainProblem, x: &[f64], s: f64, coords: &[usize], level: usize, gamma: f64) -> f64 {
    let pr = FrozenProxy::new(p, 0.0, x, s, ProxyConfig::default()).unwrap();
    let kern = pr.kernel(0.0, s, x).unwrap();
    let c = kern.mean[level];
    let odd = coords.len() % 2 == 1;
    let psi = move |y: &[f64]| {
        let z = y[level] - c;
        let v = z.abs().powf(gamma / (2 * level + 1) as f64);
        if odd {
            v * z.signum()
        } else {
            v
        }
    };
    kern.integrate_derivative(40, coords, psi).unwrap()
}

#[test]
fn semigroup_derivative_smoothing_slopes() {
    let gamma = 0.5;
    let p = kinetic(1.0);
    let x = [0.3, -0.4];
    let gaps: Vec<f64> = (3..8).map(|k| 2f64.powi(-k)).collect();
    for (coords, level, weight) in [(vec![0], 0, 0.5), (vec![0, 0], 0, 1.0), (vec![1], 1, 1.5)] {
        let vals: Vec<f64> = gaps.iter().map(|&s| semigroup_derivative(&p, &x, s, &coords, level, gamma).abs().ln()).collect();
        let lx: Vec<f64> = gaps.iter().map(|s| s.ln()).collect();
        let slope = linear_fit(&lx, &vals).0;
        let want = -weight + gamma / 2.0;
        assert!((slope - want).abs() < 0.2, "{coords:?}: slope {slope} want {want}");
    }
}

#[test]
fn green_kernel_second_derivative_bound_is_stable() {
    let gamma = 0.5;
    let ids = ["kolmogorov", "ou_perturbed", "kinetic"];
    let f = move |y: &[f64]| y[0].sin().abs().powf(gamma);
    let gl = schauder_lab::quadrature::gauss_legendre(24);
    let mut per_problem = Vec::new();
    for id in ids {
        let p = catalog::build(id, &json!({}), gamma, 1.0).unwrap();
        let x = [0.0, 0.3];
        let mut ratios = Vec::new();
        for span in [0.25, 0.125, 0.0625, 0.03125] {
            let pr = FrozenProxy::new(&p, 0.0, &x, span, ProxyConfig::default()).unwrap();
            let mut acc = 0.0;
            for (&z, &w) in gl.nodes.iter().zip(&gl.weights) {
                let r = 0.5 * (z + 1.0);
                let s = span * r * r;
                let kern = pr.kernel(0.0, s, &x).unwrap();
                acc += w * span * r * kern.integrate_derivative(40, &[0, 0], f).unwrap();
            }
            ratios.push(acc.abs() / span.powf(gamma / 2.0));
        }
        assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0), "{id}: {ratios:?}");
        assert!(relative_spread(&ratios) < 0.3, "{id}: {ratios:?}");
        per_problem.push(ratios.iter().cloned().fold(0.0, f64::max));
    }
    assert!(relative_spread(&per_problem) < 0.5, "{per_problem:?}");
}

#[test]
fn terminal_slice_equals_terminal_data() {
    let p = kinetic(0.25).with_terminal(ScalarFn::Sin { index: 1, freq: 0.7, amp: 1.5 });
    let sol = parametrix_solve(&p, &GridSpec::cube(2, 3.0, 9, 3), &SolverConfig::default()).unwrap();
    let f = &sol.field;
    let last = f.times.len() - 1;
    assert_eq!(f.times[last], 0.25);
    for k in 0..f.space_len() {
        assert_eq!(f.slice(last)[k], p.terminal(&f.node(k)));
    }
}

#[test]
fn picard_contracts_at_small_horizon() {
    for id in catalog::CATALOG_IDS {
        let p = catalog::build(id, &json!({}), 0.5, 0.25).unwrap().with_terminal(ScalarFn::Cos { index: 0, freq: 1.0, amp: 1.0 });
        let cfg = SolverConfig { tol: 1e-8, ..SolverConfig::default() };
        let sol = parametrix_solve(&p, &GridSpec::cube(2, 3.0, 9, 3), &cfg).unwrap();
        assert!(sol.converged, "{id}: {:?}", sol.history);
        for w in sol.history.windows(2) {
            if w[0] > 1e-13 {
                assert!(w[1] < w[0], "{id}: {:?}", sol.history);
            }
        }
    }
}

#[test]
fn chaining_one_segment_matches_direct_solve() {
    let p = kinetic(0.25).with_terminal(ScalarFn::Cos { index: 1, freq: 1.0, amp: 1.0 });
    let grid = GridSpec::cube(2, 3.0, 9, 4);
    let cfg = SolverConfig::default();
    let one = time_chained_solve(&p, 1, &grid, &cfg).unwrap();
    let direct = parametrix_solve(&p, &grid, &cfg).unwrap();
    assert_eq!(one.field, direct.field);
    assert!(matches!(time_chained_solve(&p, 0, &grid, &cfg), Err(Error::Config { .. })));
}

#[test]
fn chaining_is_exact_on_model_operator() {
    let p = l0(1.0).with_terminal(ScalarFn::Linear { coeffs: vec![0.5, 1.0], offset: 0.2 });
    let cfg = SolverConfig::default();
    let single = time_chained_solve(&p, 1, &GridSpec::cube(2, 2.0, 9, 8), &cfg).unwrap();
    let four = time_chained_solve(&p, 4, &GridSpec::cube(2, 2.0, 9, 2), &cfg).unwrap();
    assert_eq!(single.field.times.len(), four.field.times.len());
    let mut diff = 0.0f64;
    for (a, b) in single.field.values.iter().zip(&four.field.values) {
        diff = diff.max((a - b).abs());
    }
    assert!(diff < 1e-6, "{diff}");
    assert_eq!(four.iterations(), vec![1; 4]);
}

#[test]
fn chaining_does_not_increase_iterations_on_kinetic() {
    let p = kinetic(1.0).with_terminal(ScalarFn::Sin { index: 0, freq: 1.0, amp: 1.0 });
    let cfg = SolverConfig::default();
    let mut worst = Vec::new();
    for segments in [1, 2, 4] {
        let sol = time_chained_solve(&p, segments, &GridSpec::cube(2, 3.0, 9, 8 / segments), &cfg).unwrap();
        worst.push(*sol.iterations().iter().max().unwrap());
    }
    assert!(worst.windows(2).all(|w| w[1] <= w[0]), "{worst:?}");
}

#[test]
fn field_round_trips() {
    let dims = ChainDims::new(2, 1, 0.5, 1.0).unwrap();
    let axes = vec![Axis::new(-1.0, 1.0, 5).unwrap(), Axis::new(-2.0, 2.0, 4).unwrap()];
    let f = SampledField::from_fn(dims, vec![0.0, 0.3, 1.0], axes, |t, x| t + x[0] * 0.1 + x[1].exp() / 3.0).unwrap();
    let mut buf = Vec::new();
    f.write_binary(&mut buf).unwrap();
    let g = SampledField::read_binary(buf.as_slice()).unwrap();
    assert_eq!(f, g);
    assert!(SampledField::read_binary(&buf[..buf.len() - 3]).is_err());
    assert!(SampledField::read_binary(&b"NOTAFILE........"[..]).is_err());

    let mut csv = Vec::new();
    f.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,u"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3 * 20);
    for row in rows {
        assert_eq!(row[3], f.eval(row[0], &row[1..3]));
    }
}

#[test]
fn interpolation_is_exact_for_multilinear_data() {
    let dims = ChainDims::new(2, 1, 0.5, 1.0).unwrap();
    let axes = vec![Axis::new(-1.0, 1.0, 5).unwrap(), Axis::new(-2.0, 2.0, 9).unwrap()];
    let u = |t: f64, x: &[f64]| 1.0 + 2.0 * t - x[0] + 0.5 * x[1] + 0.25 * x[0] * x[1] + t * x[0];
    let f = SampledField::from_fn(dims, vec![0.0, 0.5, 1.0], axes, u).unwrap();
    for (t, x) in [(0.1, [0.33, -1.7]), (0.77, [-0.4, 1.2]), (1.0, [0.0, 0.05])] {
        assert!((f.eval(t, &x) - u(t, &x)).abs() < 1e-12);
        assert!((f.derivative(t, &x, &[0]).unwrap() - (-1.0 + 0.25 * x[1] + t)).abs() < 1e-12);
    }
    assert_eq!(f.extrapolations(), 0);
    f.eval(0.5, &[3.0, 0.0]);
    assert_eq!(f.extrapolations(), 1);
    assert!(matches!(f.derivative(0.5, &[0.0, 0.0], &[0, 1, 1]), Err(Error::Unsupported(_))));
}

#[test]
fn regime_split_examples() {
    let p = kinetic(1.0);
    let field = smooth_field(p.dims);
    let cfg = SolverConfig::default();
    let same = regime_split_expand(&p, &field, 0.2, &[0.3, 0.1], &[0.3, 0.1], 0.5, &cfg).unwrap();
    assert_eq!(same.t0, 0.2);
    assert_eq!((same.off_diagonal, same.discontinuity), (0.0, 0.0));
    // d(x, x') = 0.2 through the first block.
    let r = regime_split_expand(&p, &field, 0.0, &[0.3, 0.1], &[0.5, 0.1], 0.25, &cfg).unwrap();
    assert!((r.t0 - 0.01).abs() < 1e-15);
    assert!((r.distance - 0.2).abs() < 1e-15);
    assert!(r.discontinuity.is_finite() && r.off_diagonal.is_finite() && r.diagonal.is_finite());
    assert!(matches!(regime_split_expand(&p, &field, 0.0, &[0.3, 0.1], &[0.5, 0.1], 0.0, &cfg), Err(Error::Config { .. })));
}

#[test]
fn invalid_grids_are_rejected() {
    let p = kinetic(0.5);
    let cfg = SolverConfig::default();
    assert!(matches!(parametrix_solve(&p, &GridSpec::cube(3, 1.0, 5, 2), &cfg), Err(Error::Config { .. })));
    assert!(matches!(parametrix_solve(&p, &GridSpec::cube(2, 1.0, 1, 2), &cfg), Err(Error::Config { .. })));
    assert!(matches!(parametrix_solve(&p, &GridSpec::cube(2, 1.0, 5, 0), &cfg), Err(Error::Config { .. })));
    let bad = SolverConfig { tol: 0.0, ..cfg };
    assert!(matches!(parametrix_solve(&p, &GridSpec::cube(2, 1.0, 5, 2), &bad), Err(Error::Config { .. })));
    let late = GridSpec { t_start: 0.5, ..GridSpec::cube(2, 1.0, 5, 2) };
    assert!(matches!(parametrix_solve(&p, &late, &cfg), Err(Error::Ordering(_))));
}
