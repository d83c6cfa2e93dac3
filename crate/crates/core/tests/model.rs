use std::sync::Arc;

use proptest::prelude::*;
use schauder_lab::anisotropy::{holder_norm_on_samples, ChainDims, HolderSamples};
use schauder_lab::error::Error;
use schauder_lab::model::checks::{check_all, check_drift_regularity};
use schauder_lab::model::mollify::bump_mass;
use schauder_lab::model::{catalog, check_hormander, check_hormander_at, check_uniform_ellipticity, mollify, ChainProblem, Coefficients, Mollifier};
use schauder_lab::quadrature::{gauss_legendre_on, BoxDomain, Halton};
use serde_json::json;

type DriftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type DiffFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Time-homogeneous coefficients from closures.
struct Custom {
    drift: Box<DriftFn>,
    diff: Box<DiffFn>,
}

impl Coefficients for Custom {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        (self.diff)(x, out)
    }
}

fn custom(
    n: usize,
    d: usize,
    drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    diff: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
) -> ChainProblem {
    let dims = ChainDims::new(n, d, 0.5, 1.0).unwrap();
    ChainProblem::new(dims, Arc::new(Custom { drift: Box::new(drift), diff: Box::new(diff) }))
}

fn unit_diffusion(_: &[f64], out: &mut [f64]) {
    out[0] = 1.0;
}

fn kolmogorov_drift(x: &[f64], out: &mut [f64]) {
    out[0] = 0.0;
    out[1] = x[0];
}

fn catalog_problems() -> Vec<ChainProblem> {
    vec![
        catalog::build("kolmogorov", &json!({}), 0.5, 1.0).unwrap(),
        catalog::build("kolmogorov_n3", &json!({"sigma": 0.7}), 0.5, 1.0).unwrap(),
        catalog::build("linear", &json!({"d": 2}), 0.5, 1.0).unwrap(),
        catalog::build("ou_perturbed", &json!({}), 0.5, 1.0).unwrap(),
        catalog::build("ou_perturbed", &json!({"n": 3, "d": 2}), 0.4, 1.0).unwrap(),
        catalog::build("kinetic", &json!({}), 0.5, 1.0).unwrap(),
        catalog::build("kinetic", &json!({"d": 2}), 0.5, 1.0).unwrap(),
        catalog::build("rough", &json!({}), 0.5, 1.0).unwrap(),
        catalog::build("rough", &json!({"n": 3}), 0.3, 1.0).unwrap(),
    ]
}

#[test]
fn identity_diffusion_has_unit_kappa() {
    let p = catalog::build("kolmogorov", &json!({}), 0.5, 1.0).unwrap();
    let r = check_uniform_ellipticity(&p, &BoxDomain::cube(2, 2.0), 64, 0, 1e3).unwrap();
    assert_eq!(r.kappa_hat, 1.0);
    assert!(r.pass && !r.bounded_violation);
}

#[test]
fn diagonal_diffusion_kappa_reads_off_eigenvalues() {
    let p = custom(
        2,
        2,
        |x, out| {
            out[..2].fill(0.0);
            out[2] = x[0];
            out[3] = x[1];
        },
        |_, out| out.copy_from_slice(&[2.0, 0.0, 0.0, 0.5]),
    );
    let r = check_uniform_ellipticity(&p, &BoxDomain::cube(4, 1.0), 32, 0, 1e3).unwrap();
    assert!((r.kappa_hat - 2.0).abs() < 1e-12, "{}", r.kappa_hat);
    assert!(r.pass);
}

#[test]
fn unbounded_diffusion_is_flagged() {
    let p = custom(2, 1, kolmogorov_drift, |x, out| out[0] = 1.0 + x[0] * x[0]);
    let small = check_uniform_ellipticity(&p, &BoxDomain::cube(2, 1.0), 64, 0, 10.0).unwrap();
    let large = check_uniform_ellipticity(&p, &BoxDomain::cube(2, 10.0), 64, 0, 10.0).unwrap();
    // Oracle: max of 1 + x^2 over the sampled first coordinates.
    let oracle = |half: f64| {
        Halton::new(3, 0).points(64).iter().map(|u| 1.0 + (half * (2.0 * u[1] - 1.0)).powi(2)).fold(0.0, f64::max)
    };
    assert!((large.kappa_hat - oracle(10.0)).abs() < 1e-9 * oracle(10.0));
    assert!(large.kappa_hat > small.kappa_hat);
    assert!(!small.bounded_violation);
    assert!(large.bounded_violation && !large.pass);
}

#[test]
fn asymmetric_diffusion_is_a_model_error() {
    let p = custom(
        2,
        2,
        |_, out| out.fill(0.0),
        |_, out| out.copy_from_slice(&[1.0, 0.5, 0.0, 1.0]),
    );
    assert!(matches!(check_uniform_ellipticity(&p, &BoxDomain::cube(4, 1.0), 4, 0, 1e3), Err(Error::Model(_))));
}

#[test]
fn hormander_examples() {
    let kolm = catalog::build("kolmogorov_n3", &json!({}), 0.5, 1.0).unwrap();
    let r = check_hormander(&kolm, &BoxDomain::cube(3, 1.0), 32, 0, 1e-6).unwrap();
    assert_eq!(r.min_singular_values, vec![1.0, 1.0]);
    assert!(r.pass);

    let flat = custom(2, 1, |_, out| out.fill(0.0), unit_diffusion);
    let r = check_hormander(&flat, &BoxDomain::cube(2, 1.0), 16, 0, 1e-6).unwrap();
    assert_eq!(r.min_singular_values, vec![0.0]);
    assert!(!r.pass);

    let sine = custom(
        2,
        1,
        |x, out| {
            out[0] = 0.0;
            out[1] = x[0].sin() + x[1];
        },
        unit_diffusion,
    );
    let half_pi = std::f64::consts::FRAC_PI_2;
    let r = check_hormander_at(&sine, &[(0.0, vec![half_pi, 0.0])], 1e-6);
    assert!(r.min_singular_values[0] < 1e-9, "{:?}", r.min_singular_values);
    assert!(!r.pass);
    let r = check_hormander_at(&sine, &[(0.0, vec![0.0, 0.0])], 1e-6);
    assert!((r.min_singular_values[0] - 1.0).abs() < 1e-8);
}

#[test]
fn hormander_is_vacuous_for_one_level() {
    let p = custom(1, 1, |_, out| out[0] = 0.0, unit_diffusion);
    let r = check_hormander(&p, &BoxDomain::cube(1, 1.0), 8, 0, 1e-6).unwrap();
    assert!(r.min_singular_values.is_empty() && r.pass);
}

#[test]
fn linear_drift_has_zero_fractional_moduli() {
    let p = catalog::build("linear", &json!({}), 0.5, 1.0).unwrap();
    let r = check_drift_regularity(&p, &BoxDomain::cube(2, 1.0), 32, 0).unwrap();
    for m in &r.moduli {
        assert!(m.finite);
        if m.exponent >= 1.0 {
            // The top derivative of a linear map is constant.
            assert!(m.seminorm < 1e-6, "level {} var {}: {}", m.level, m.variable, m.seminorm);
        }
    }
}

/// Brute-force `sup ||a|^g - |b|^g| / |a - b|^g` over a dense pair grid on `[-1, 1]`.
fn dense_power_seminorm(g: f64, points: usize) -> f64 {
    let xs: Vec<f64> = (0..points).map(|k| -1.0 + 2.0 * k as f64 / (points - 1) as f64).collect();
    let mut best = 0.0f64;
    for &a in &xs {
        for &b in &xs {
            if a != b {
                best = best.max((a.abs().powf(g) - b.abs().powf(g)).abs() / (a - b).abs().powf(g));
            }
        }
    }
    best
}

#[test]
fn power_drift_modulus_is_one() {
    let oracle = dense_power_seminorm(0.5, 201);
    assert!((oracle - 1.0).abs() < 1e-12);
    let p = custom(
        2,
        1,
        |x, out| {
            out[0] = x[0].abs().sqrt();
            out[1] = x[0];
        },
        unit_diffusion,
    );
    let r = check_drift_regularity(&p, &BoxDomain::cube(2, 1.0), 128, 0).unwrap();
    let m = r.moduli.iter().find(|m| m.level == 1 && m.variable == 1).unwrap();
    assert_eq!(m.exponent, 0.5);
    assert!(m.seminorm <= oracle + 1e-12 && m.seminorm > 0.9, "{}", m.seminorm);
}

#[test]
fn constant_drift_has_zero_moduli() {
    let p = custom(
        2,
        1,
        |_, out| {
            out[0] = 1.5;
            out[1] = 0.0;
        },
        unit_diffusion,
    );
    let r = check_drift_regularity(&p, &BoxDomain::cube(2, 1.0), 32, 0).unwrap();
    for m in r.moduli.iter().filter(|m| m.level == 1) {
        assert_eq!(m.seminorm, 0.0);
    }
}

#[test]
fn catalog_passes_assumption_checks() {
    for p in catalog_problems() {
        let nd = p.nd();
        let r = check_all(&p, &BoxDomain::cube(nd, 2.0), 32, 0, 1e3, 1e-6).unwrap();
        assert!(r.ellipticity.pass && r.hormander.pass, "{:?}", p.catalog_id);
    }
}

#[test]
fn sigma_reconstructs_diffusion() {
    for p in catalog_problems() {
        let nd = p.nd();
        let dom = BoxDomain::cube(nd, 3.0);
        let seq = Halton::new(nd + 1, 5);
        let mut u = vec![0.0; nd + 1];
        let mut x = vec![0.0; nd];
        let mut worst = 0.0f64;
        for k in 0..1000 {
            seq.point(k, &mut u);
            dom.map_unit(&u[1..], &mut x);
            let t = u[0] * p.dims.horizon;
            let s = p.sigma(t, &x);
            worst = worst.max((&s * s.transpose() - p.diffusion(t, &x)).amax());
        }
        assert!(worst < 1e-10, "{:?}: {worst:e}", p.catalog_id);
    }
}

#[test]
fn catalog_respects_chain_structure() {
    for p in catalog_problems() {
        let dims = p.dims;
        let nd = p.nd();
        let seq = Halton::new(nd, 11);
        for k in 0..50 {
            let x: Vec<f64> = seq.points(k + 1)[k].iter().map(|u| 4.0 * u - 2.0).collect();
            let base = p.drift(0.3, &x);
            for i in 2..dims.n {
                // Perturb blocks 1..i-1 (zero-based 0..i-2) and compare block i (zero-based).
                let mut y = x.clone();
                for j in 0..i - 1 {
                    for c in dims.block(j) {
                        y[c] += 0.37;
                    }
                }
                let moved = p.drift(0.3, &y);
                for c in dims.block(i) {
                    assert!((moved[c] - base[c]).abs() < 1e-12, "{:?} level {}", p.catalog_id, i + 1);
                }
            }
            let a = p.diffusion(0.3, &x);
            assert!((&a - a.transpose()).amax() == 0.0);
        }
    }
}

#[test]
fn catalog_rejects_bad_params() {
    assert!(matches!(catalog::build("nope", &json!({}), 0.5, 1.0), Err(Error::Config { .. })));
    assert!(matches!(catalog::build("kinetic", &json!({"n": 3}), 0.5, 1.0), Err(Error::Config { .. })));
    assert!(matches!(catalog::build("kolmogorov", &json!({"damping": 1}), 0.5, 1.0), Err(Error::Config { .. })));
    assert!(matches!(catalog::build("kolmogorov_n3", &json!({"n": 2}), 0.5, 1.0), Err(Error::Config { .. })));
    assert!(matches!(
        catalog::build("kolmogorov", &json!({"terminal": {"kind": "square", "index": 5}}), 0.5, 1.0),
        Err(Error::Config { .. })
    ));
}

#[test]
fn mollifier_has_unit_mass_in_unit_ball() {
    // Independent 1-D mass with a finer Legendre rule.
    let fine = gauss_legendre_on(2000, -1.0, 1.0).integrate(|z| if z.abs() < 1.0 { (-1.0 / (1.0 - z * z)).exp() } else { 0.0 });
    assert!((bump_mass() - fine).abs() < 1e-12);
    for dim in [1, 2, 3] {
        let m = Mollifier::new(1.0, dim).unwrap();
        // Product kernel: mass is the 1-D mass to the power dim, checked on a Legendre grid.
        let r = 1.0 / (dim as f64).sqrt();
        let rule = gauss_legendre_on(60, -r, r);
        let mass: f64 = match dim {
            1 => rule.integrate(|a| m.kernel(&[a])),
            2 => rule.integrate(|a| rule.integrate(|b| m.kernel(&[a, b]))),
            _ => rule.integrate(|a| rule.integrate(|b| rule.integrate(|c| m.kernel(&[a, b, c])))),
        };
        assert!((mass - 1.0).abs() < 1e-8, "dim {dim}: {mass}");
        let outside = vec![1.01 / (dim as f64).sqrt(); dim];
        assert_eq!(m.kernel(&outside), 0.0);
        let (_, w) = m.nodes(8).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v >= 0.0));
    }
    assert!(Mollifier::new(0.0, 2).is_err());
    assert!(Mollifier::new(4.0, 2).unwrap().nodes(4).is_err());
}

#[test]
fn mollification_keeps_constant_and_linear_coefficients() {
    let p = custom(
        2,
        1,
        |x, out| {
            out[0] = 0.3 - 0.5 * x[0];
            out[1] = x[0] + 2.0 * x[1];
        },
        |_, out| out[0] = 1.7,
    );
    let pm = mollify(&p, &Mollifier::new(4.0, 2).unwrap(), 8, false).unwrap();
    for x in [[0.0, 0.0], [1.2, -0.4], [-2.0, 3.0]] {
        let a = p.drift(0.0, &x);
        let b = pm.drift(0.0, &x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12, "{a:?} vs {b:?}");
        }
        assert!((pm.diffusion(0.0, &x)[(0, 0)] - 1.7).abs() < 1e-12);
    }
}

/// Triangle wave: distance of `v` to the lattice `h Z`.
fn triangle(v: f64, h: f64) -> f64 {
    let r = v.rem_euclid(h);
    r.min(h - r)
}

#[test]
fn sawtooth_diffusion_converges_under_mollification() {
    let p = custom(2, 1, kolmogorov_drift, |x, out| out[0] = 1.0 + 0.3 * triangle(x[0], 0.5));
    let xs: Vec<f64> = (0..401).map(|k| -2.0 + 0.01 * k as f64).collect();
    let err = |m: f64| {
        let pm = mollify(&p, &Mollifier::new(m, 2).unwrap(), 16, false).unwrap();
        xs.iter()
            .map(|&a| (pm.diffusion(0.0, &[a, 0.0])[(0, 0)] - p.diffusion(0.0, &[a, 0.0])[(0, 0)]).abs())
            .fold(0.0, f64::max)
    };
    let (e4, e16) = (err(4.0), err(16.0));
    assert!(e16 < e4 && e16 > 0.0, "m=4: {e4}, m=16: {e16}");
}

#[test]
fn mollification_data_flag() {
    use schauder_lab::funcs::ScalarFn;
    let p = catalog::build("kolmogorov", &json!({}), 0.5, 1.0)
        .unwrap()
        .with_terminal(ScalarFn::Kink { index: 0, center: 0.0, power: 0.5, amp: 1.0 });
    let moll = Mollifier::new(8.0, 2).unwrap();
    let kept = mollify(&p, &moll, 8, false).unwrap();
    assert_eq!(kept.terminal(&[0.0, 0.0]), 0.0);
    let smoothed = mollify(&p, &moll, 8, true).unwrap();
    assert!(smoothed.terminal(&[0.0, 0.0]) > 0.0);
    assert!(smoothed.terminal_spec.is_none());
}

#[test]
fn mollified_rough_problem_keeps_transmission() {
    let p = catalog::build("rough", &json!({}), 0.5, 1.0).unwrap();
    let dom = BoxDomain::cube(2, 2.0);
    let base = check_hormander(&p, &dom, 32, 0, 1e-6).unwrap();
    assert!(base.pass);
    for m in [4.0, 8.0, 16.0] {
        let pm = mollify(&p, &Mollifier::new(m, 2).unwrap(), 8, false).unwrap();
        assert!(check_hormander(&pm, &dom, 32, 0, 1e-6).unwrap().pass, "m = {m}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // The kink sits on an anchor, so the sampled seminorm of the rough drift
    // equals its exact value 1 and bounds that of every mollification.
    #[test]
    fn mollification_does_not_increase_seminorm(m in 2.0f64..32.0, seed in 0u64..100, pick in 0usize..32) {
        let dom = BoxDomain::cube(2, 1.0);
        let dims = ChainDims::new(2, 1, 0.5, 1.0).unwrap();
        let plan = HolderSamples::from_box(&dims, &dom, 32, seed).unwrap();
        let c = plan.anchors[pick][0];
        let p = custom(
            2,
            1,
            move |x, out| {
                out[0] = (x[0] - c).abs().sqrt();
                out[1] = x[0];
            },
            unit_diffusion,
        );
        let pm = mollify(&p, &Mollifier::new(m, 2).unwrap(), 8, false).unwrap();
        let f = |x: &[f64]| p.drift(0.0, x)[0];
        let fm = |x: &[f64]| pm.drift(0.0, x)[0];
        let a = holder_norm_on_samples(&f, &dims, 0, &plan, &dom);
        let b = holder_norm_on_samples(&fm, &dims, 0, &plan, &dom);
        prop_assert!((a.directions[0].seminorm - 1.0).abs() < 1e-12);
        for (da, db) in a.directions.iter().zip(&b.directions) {
            prop_assert!(db.seminorm <= da.seminorm + 1e-6, "{} > {}", db.seminorm, da.seminorm);
        }
    }
}
