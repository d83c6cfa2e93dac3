use proptest::prelude::*;
use schauder_lab::besov::{
    beta_exponent, duality_ratio, heat_convolve, holder_norm_scalar, psi_besov_profile, split_tail, thermic_norm_neg,
    Sampled1d, ThermicConfig,
};
use schauder_lab::error::Error;
use schauder_lab::model::catalog;
use serde_json::json;

fn gauss(var: f64) -> impl Fn(f64) -> f64 {
    move |x| (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn gaussian_sample(var: f64, half: f64, points: usize) -> Sampled1d {
    Sampled1d::from_fn(-half, half, points, gauss(var)).unwrap()
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn heat_semigroup_on_gaussians() {
    let s = gaussian_sample(0.5, 10.0, 8001);
    for v in [0.01, 0.1, 0.7] {
        let out = heat_convolve(&s, v, true).unwrap();
        let want = gauss(0.5 + v);
        let err = (0..out.len()).map(|k| (out.values[k] - want(out.x(k))).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "v={v}: {err:e}");
    }
}

#[test]
fn vanishing_variance_returns_input() {
    let s = gaussian_sample(1.0, 8.0, 801);
    let out = heat_convolve(&s, 1e-12, false).unwrap();
    assert_eq!(out, s);
}

#[test]
fn convolution_preserves_mass() {
    let s = gaussian_sample(0.3, 12.0, 4001);
    for v in [1e-3, 0.05, 0.5] {
        let out = heat_convolve(&s, v, true).unwrap();
        assert!((out.l1() - 1.0).abs() < 1e-8, "v={v}: {}", out.l1());
    }
}

#[test]
fn strict_mode_rejects_truncated_samples() {
    let s = Sampled1d::from_fn(-1.0, 1.0, 101, |x| 1.0 + x * x).unwrap();
    assert!(matches!(heat_convolve(&s, 0.1, true), Err(Error::Numerical(_))));
    assert!(heat_convolve(&s, 0.1, false).is_ok());
    assert!(matches!(heat_convolve(&s, 0.0, false), Err(Error::Domain(_))));
}

#[test]
fn density_tail_is_two_over_alpha() {
    for (var, alpha) in [(1.0, 5.0 / 6.0), (0.04, 0.5), (2.0, 1.3)] {
        let sd = f64::sqrt(var);
        let s = gaussian_sample(var, 12.0 * sd, 2001);
        let n = thermic_norm_neg(&s, &ThermicConfig::with_alpha(alpha)).unwrap();
        assert!((n.tail - 2.0 / alpha).abs() < 1e-4, "var={var} alpha={alpha}: {}", n.tail);
        assert!((n.lowpass - 1.0).abs() < 1e-6);
    }
}

#[test]
fn zero_function_has_zero_norm() {
    let s = Sampled1d::new(-1.0, 0.01, vec![0.0; 201]).unwrap();
    let n = thermic_norm_neg(&s, &ThermicConfig::default()).unwrap();
    assert_eq!(n.total, 0.0);
}

#[test]
fn gaussian_derivative_matches_quadrature_oracle() {
    let alpha = 5.0 / 6.0;
    let s = Sampled1d::from_fn(-12.0, 12.0, 4001, |x| -x * gauss(1.0)(x)).unwrap();
    // the default 64 nodes leave an O(du^2) error near 2e-4 on this profile
    let n = thermic_norm_neg(&s, &ThermicConfig { v_nodes: 256, ..ThermicConfig::with_alpha(alpha) }).unwrap();
    // v = u^{2/alpha} removes the endpoint singularity
    let inner = |v: f64| 2.0 / (2.0 * std::f64::consts::PI * (1.0 + v)).sqrt();
    let want = simpson(|u| (2.0 / alpha) * inner(u.powf(2.0 / alpha)), 0.0, 1.0, 2000);
    assert!(((n.tail - want) / want).abs() < 1e-4, "{} vs {want}", n.tail);
}

#[test]
fn divergent_tail_is_infinite() {
    let s = Sampled1d::from_fn(-8.0, 8.0, 801, |x| 1e13 * gauss(1.0)(x)).unwrap();
    let n = thermic_norm_neg(&s, &ThermicConfig::default()).unwrap();
    assert!(n.tail.is_infinite() && n.total.is_infinite());
}

#[test]
fn holder_norm_examples() {
    let c = Sampled1d::new(0.0, 0.1, vec![-2.5; 11]).unwrap();
    assert!((holder_norm_scalar(&c, 0.7).unwrap() - 2.5).abs() < 1e-12);
    let lin = Sampled1d::from_fn(-1.0, 1.0, 201, |x| x).unwrap();
    assert!((holder_norm_scalar(&lin, 1.5).unwrap() - 2.0).abs() < 1e-9);
    let root = Sampled1d::from_fn(-1.0, 1.0, 401, |x| x.abs().sqrt()).unwrap();
    let semi = holder_norm_scalar(&root, 0.5).unwrap() - 1.0;
    assert!((semi - 1.0).abs() < 1e-9, "{semi}");
}

#[test]
fn holder_norm_rejects_bad_orders() {
    let s = Sampled1d::new(0.0, 0.1, vec![1.0; 11]).unwrap();
    assert!(matches!(holder_norm_scalar(&s, 1.0), Err(Error::Unsupported(_))));
    assert!(matches!(holder_norm_scalar(&s, 3.2), Err(Error::Config { .. })));
    assert!(matches!(holder_norm_scalar(&s, 0.0), Err(Error::Config { .. })));
}

#[test]
fn duality_constant_is_stable() {
    let cfg = ThermicConfig::with_alpha(5.0 / 6.0);
    let f = |c: f64, w: f64| Sampled1d::from_fn(-10.0, 10.0, 1601, move |x| (x - c) * (-(x - c).powi(2) / w).exp()).unwrap();
    let g = |k: f64| Sampled1d::from_fn(-10.0, 10.0, 1601, move |x| (k * x).sin()).unwrap();
    let ratios: Vec<f64> = [(0.0, 1.0, 1.0), (0.5, 0.3, 2.0), (-1.0, 2.0, 0.5), (0.2, 0.1, 4.0)]
        .iter()
        .map(|&(c, w, k)| duality_ratio(&f(c, w), &g(k), &cfg).unwrap())
        .collect();
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(ratios.iter().all(|r| r.is_finite() && *r >= 0.0));
    assert!(max < 1.0, "{ratios:?}");
}

#[test]
fn beta_split_reproduces_tail() {
    let gamma = 0.5;
    assert!((beta_exponent(2, gamma).unwrap() - 3.0 / 0.5).abs() < 1e-12);
    assert!(beta_exponent(1, gamma).is_err());
    let alpha = (2.0 + gamma) / 3.0;
    let s = Sampled1d::from_fn(-3.0, 3.0, 1201, |x| -x * gauss(0.05)(x)).unwrap();
    let n = thermic_norm_neg(&s, &ThermicConfig::with_alpha(alpha)).unwrap();
    for i in [2usize, 3] {
        let beta = beta_exponent(i, gamma).unwrap();
        for gap in [0.5, 0.1, 0.01] {
            let (below, above) = split_tail(&n, alpha, f64::powf(gap, beta)).unwrap();
            assert!(((below + above) - n.tail).abs() <= 1e-8 * n.tail, "i={i} gap={gap}");
        }
    }
}

#[test]
fn linear_drift_cancels_exactly() {
    let p = catalog::build("kolmogorov", &json!({}), 0.5, 1.0).unwrap();
    let gaps = [0.1, 0.05, 0.01];
    let r = psi_besov_profile(&p, None, 2, &[2, 0], 0.0, &[0.3, -0.2], &gaps, &Default::default()).unwrap();
    assert_eq!(r.details["exact_cancellation"], json!(true));
    assert!(r.details["slope"].is_null());
}

#[test]
fn psi_profile_validates_inputs() {
    let p = catalog::build("kolmogorov", &json!({}), 0.5, 1.0).unwrap();
    let cfg = Default::default();
    assert!(psi_besov_profile(&p, None, 1, &[0, 0], 0.0, &[0.0, 0.0], &[0.1], &cfg).is_err());
    assert!(psi_besov_profile(&p, None, 2, &[0, 0], 0.0, &[0.0, 0.0], &[2.0], &cfg).is_err());
    let p2 = catalog::build("kolmogorov", &json!({"d": 2}), 0.5, 1.0).unwrap();
    assert!(matches!(
        psi_besov_profile(&p2, None, 2, &[0, 0], 0.0, &[0.0; 4], &[0.1], &cfg),
        Err(Error::Unsupported(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn thermic_norm_is_homogeneous(c in -50.0f64..50.0, var in 0.05f64..2.0, shift in -1.0f64..1.0) {
        let sd = var.sqrt();
        let f = |amp: f64| Sampled1d::from_fn(-10.0 * sd - 2.0, 10.0 * sd + 2.0, 601, move |x| amp * (x - shift) * gauss(var)(x - shift)).unwrap();
        let cfg = ThermicConfig::default();
        let base = thermic_norm_neg(&f(1.0), &cfg).unwrap().total;
        let scaled = thermic_norm_neg(&f(c), &cfg).unwrap().total;
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * (c.abs() * base).max(1e-300));
    }

    #[test]
    fn density_tail_for_any_width(var in 0.01f64..4.0) {
        let sd = var.sqrt();
        let s = gaussian_sample(var, 12.0 * sd, 1201);
        let n = thermic_norm_neg(&s, &ThermicConfig::default()).unwrap();
        prop_assert!((n.tail - 2.4).abs() < 1e-4);
    }
}
