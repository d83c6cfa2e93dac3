use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use schauder_lab::anisotropy::ChainDims;
use schauder_lab::error::Error;
use schauder_lab::fk::{fk_estimate, gaussian_chain_moments, gaussian_chain_oracle, simulate_chain, McConfig};
use schauder_lab::funcs::ScalarFn;
use schauder_lab::model::{catalog, mollify, ChainProblem, Coefficients, Mollifier};
use schauder_lab::proxy::solve_flow;
use serde_json::json;

struct Flat {
    var: f64,
}

impl Coefficients for Flat {
    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = self.var;
    }
}

fn flat(var: f64) -> ChainProblem {
    ChainProblem::new(ChainDims::new(2, 1, 0.5, 1.0).unwrap(), Arc::new(Flat { var }))
}

fn mc(paths: usize, steps: usize, seed: u64) -> McConfig {
    McConfig { paths, steps, seed, antithetic: false }
}

fn linear(n: usize, damping: f64) -> ChainProblem {
    catalog::build("linear", &json!({ "n": n, "damping": damping }), 0.5, 1.0).unwrap()
}

#[test]
fn frozen_chain_does_not_move() {
    let ends = simulate_chain(&flat(0.0), 0.0, &[0.3, -0.8], 1.0, &mc(16, 10, 1)).unwrap();
    assert!(ends.iter().all(|e| e == &[0.3, -0.8]));
}

#[test]
fn noiseless_chain_follows_the_flow() {
    let p = catalog::build("kolmogorov", &json!({"sigma": 0.0}), 0.5, 1.0).unwrap();
    let x = [1.0, 0.5];
    let flow = solve_flow(&p, 0.0, &x, 1.0, 256).unwrap();
    let mut errs = Vec::new();
    for steps in [10, 20, 40] {
        let ends = simulate_chain(&p, 0.0, &x, 1.0, &mc(2, steps, 0)).unwrap();
        let err = (DVector::from_column_slice(&ends[0]) - flow.end()).amax();
        errs.push(err);
        assert!(err <= 1.0 / steps as f64, "steps={steps}: {err}");
    }
    // Euler on x2' = x1 with constant x1 is exact, so this model has no step error at all.
    assert!(errs.iter().all(|&e| e < 1e-12), "{errs:?}");
    let damped = linear(2, 1.0);
    let flow = solve_flow(&damped, 0.0, &x, 1.0, 256).unwrap();
    let err = |steps: usize| {
        let p = catalog::build("linear", &json!({"damping": 1.0, "sigma": 0.0}), 0.5, 1.0).unwrap();
        let ends = simulate_chain(&p, 0.0, &x, 1.0, &mc(2, steps, 0)).unwrap();
        (DVector::from_column_slice(&ends[0]) - flow.end()).amax()
    };
    let (e1, e2) = (err(20), err(40));
    assert!(e1 < 0.05 && (e1 / e2 - 2.0).abs() < 0.2, "{e1} {e2}");
}

#[test]
fn brownian_first_block_variance() {
    let (t, s) = (0.2, 0.9);
    let paths = 20_000;
    let ends = simulate_chain(&flat(1.0), t, &[0.0, 0.0], s, &mc(paths, 8, 3)).unwrap();
    let v: Vec<f64> = ends.iter().map(|e| e[0]).collect();
    let mean = v.iter().sum::<f64>() / paths as f64;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
    // Standard error of a Gaussian sample variance: sigma^2 sqrt(2/(N-1)).
    let se = (s - t) * (2.0 / (paths - 1) as f64).sqrt();
    assert!((var - (s - t)).abs() < 3.0 * se, "{var} vs {}", s - t);
    assert!(ends.iter().all(|e| e[1] == 0.0));
}

#[test]
fn constant_data_is_exact() {
    let p = catalog::build("kinetic", &json!({}), 0.5, 1.0).unwrap().with_terminal(ScalarFn::Constant { value: 2.5 });
    let e = fk_estimate(&p, 0.0, &[0.1, 0.2], &mc(64, 20, 0)).unwrap();
    assert_eq!((e.estimate, e.halfwidth), (2.5, 0.0));
    let p = catalog::build("kinetic", &json!({}), 0.5, 1.0).unwrap().with_source(ScalarFn::Constant { value: 1.5 });
    let e = fk_estimate(&p, 0.25, &[0.1, 0.2], &mc(64, 20, 0)).unwrap();
    assert!((e.estimate - 1.5 * 0.75).abs() < 1e-12);
    assert_eq!(e.halfwidth, 0.0);
    let at_end = fk_estimate(&p.with_terminal(ScalarFn::Square { index: 0 }), 1.0, &[3.0, 0.0], &mc(4, 1, 0)).unwrap();
    assert_eq!(at_end.estimate, 9.0);
}

#[test]
fn kolmogorov_linear_terminal() {
    let p = catalog::build("kolmogorov", &json!({}), 0.5, 1.0).unwrap().with_terminal(ScalarFn::Linear { coeffs: vec![0.0, 1.0], offset: 0.0 });
    let (t, x) = (0.3, [0.8, -0.4]);
    let exact = x[1] + x[0] * (1.0 - t);
    assert!((gaussian_chain_oracle(&p, t, &x, p.terminal_spec.as_ref().unwrap()).unwrap() - exact).abs() < 1e-12);
    let e = fk_estimate(&p, t, &x, &mc(20_000, 50, 7)).unwrap();
    assert!((e.estimate - exact).abs() <= e.halfwidth, "{e:?} vs {exact}");
}

#[test]
fn oracle_examples() {
    let bm = catalog::build("kolmogorov", &json!({"n": 1}), 0.5, 1.0).unwrap();
    let v = gaussian_chain_oracle(&bm, 0.4, &[1.5], &ScalarFn::Square { index: 0 }).unwrap();
    assert!((v - (2.25 + 0.6)).abs() < 1e-12);
    let l0 = catalog::build("kolmogorov", &json!({}), 0.5, 1.0).unwrap();
    assert_eq!(gaussian_chain_oracle(&l0, 0.0, &[0.3, 0.2], &ScalarFn::Constant { value: 1.0 }).unwrap(), 1.0);
    let sin = ScalarFn::Sin { index: 0, freq: 1.0, amp: 1.0 };
    assert!(matches!(gaussian_chain_oracle(&l0, 0.0, &[0.0, 0.0], &sin), Err(Error::Unsupported(_))));
    let rough = catalog::build("rough", &json!({}), 0.5, 1.0).unwrap();
    assert!(matches!(gaussian_chain_moments(&rough, 0.0, &[0.0, 0.0], 1.0), Err(Error::Unsupported(_))));
}

/// Van Loan block exponential for `int_0^delta e^{uA} Q e^{uA*} du`.
fn van_loan(a: &DMatrix<f64>, q: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-a));
    big.view_mut((0, n), (n, n)).copy_from(q);
    big.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = (big * delta).exp();
    e.view((n, n), (n, n)).transpose() * e.view((0, n), (n, n))
}

#[test]
fn damped_chain_moments_match_van_loan() {
    let p = catalog::build("linear", &json!({"n": 3, "damping": 0.6, "sigma": 1.3}), 0.5, 1.0).unwrap();
    let x = [0.5, -0.2, 0.7];
    let (m, k) = gaussian_chain_moments(&p, 0.1, &x, 0.85).unwrap();
    let a = DMatrix::from_fn(3, 3, |i, j| if i == j + 1 { 1.0 } else if i == j { -0.6 } else { 0.0 });
    let mut q = DMatrix::zeros(3, 3);
    q[(0, 0)] = 1.69;
    assert!((m - (&a * 0.75).exp() * DVector::from_column_slice(&x)).amax() < 1e-12);
    assert!((k - van_loan(&a, &q, 0.75)).amax() < 1e-10);
}

#[test]
fn quadratic_terminal_matches_oracle() {
    let p = linear(2, 0.5).with_terminal(ScalarFn::Sum {
        terms: vec![ScalarFn::Square { index: 1 }, ScalarFn::Linear { coeffs: vec![1.0, 0.0], offset: 0.5 }],
    });
    let x = [0.3, -0.6];
    let exact = gaussian_chain_oracle(&p, 0.0, &x, p.terminal_spec.as_ref().unwrap()).unwrap();
    let e = fk_estimate(&p, 0.0, &x, &McConfig { paths: 40_000, steps: 200, seed: 2, antithetic: true }).unwrap();
    assert!((e.estimate - exact).abs() <= e.halfwidth + 2e-3, "{e:?} vs {exact}");
}

#[test]
fn weak_order_one() {
    // Antithetic pairs cancel the noise exactly for a linear functional of a
    // linear chain, so only the Euler bias is left.
    let p = linear(2, 1.0).with_terminal(ScalarFn::Linear { coeffs: vec![0.5, 1.0], offset: 0.0 });
    let x = [1.0, 0.0];
    let exact = gaussian_chain_oracle(&p, 0.0, &x, p.terminal_spec.as_ref().unwrap()).unwrap();
    let est = |steps| fk_estimate(&p, 0.0, &x, &McConfig { paths: 2000, steps, seed: 11, antithetic: true }).unwrap();
    let (a, b, c) = (est(16), est(32), est(64));
    let d1 = b.estimate - a.estimate;
    let d2 = c.estimate - b.estimate;
    let noise = a.halfwidth + 2.0 * b.halfwidth + c.halfwidth;
    assert!(noise < 1e-12);
    assert!((d2 / d1 - 0.5).abs() < 0.05, "d1={d1} d2={d2}");
    assert!((c.estimate - exact).abs() < (a.estimate - exact).abs());
}

#[test]
fn determinism_across_thread_counts() {
    let p = catalog::build("ou_perturbed", &json!({}), 0.5, 1.0).unwrap().with_terminal(ScalarFn::Sin { index: 1, freq: 1.0, amp: 1.0 });
    let cfg = McConfig { paths: 2000, steps: 30, seed: 99, antithetic: true };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| fk_estimate(&p, 0.0, &[0.2, 0.4], &cfg).unwrap())
    };
    let one = run(1);
    let many = run(8);
    assert_eq!(one.estimate.to_bits(), many.estimate.to_bits());
    assert_eq!(one.halfwidth.to_bits(), many.halfwidth.to_bits());
    let other_seed = fk_estimate(&p, 0.0, &[0.2, 0.4], &McConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(one.estimate, other_seed.estimate);
}

#[test]
fn mollification_levels_look_cauchy() {
    let p = catalog::build("rough", &json!({}), 0.5, 1.0).unwrap().with_terminal(ScalarFn::Sin { index: 1, freq: 1.0, amp: 1.0 });
    let cfg = mc(4000, 64, 5);
    let est: Vec<f64> = [4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&m| {
            let pm = mollify(&p, &Mollifier::new(m, 2).unwrap(), 8, false).unwrap();
            fk_estimate(&pm, 0.0, &[0.05, 0.1], &cfg).unwrap().estimate
        })
        .collect();
    let gaps: Vec<f64> = est.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{est:?} gaps {gaps:?}");
}

#[test]
fn invalid_configs() {
    let p = flat(1.0);
    assert!(matches!(simulate_chain(&p, 0.0, &[0.0, 0.0], 1.0, &mc(1, 4, 0)), Err(Error::Config { .. })));
    assert!(matches!(simulate_chain(&p, 0.0, &[0.0, 0.0], 1.0, &mc(4, 0, 0)), Err(Error::Config { .. })));
    assert!(matches!(simulate_chain(&p, 0.5, &[0.0, 0.0], 0.5, &mc(4, 4, 0)), Err(Error::Ordering(_))));
    let odd = McConfig { paths: 5, steps: 4, seed: 0, antithetic: true };
    assert!(matches!(fk_estimate(&p, 0.0, &[0.0, 0.0], &odd), Err(Error::Config { .. })));
    assert!(matches!(fk_estimate(&p, 1.5, &[0.0, 0.0], &mc(4, 4, 0)), Err(Error::Ordering(_))));
}
