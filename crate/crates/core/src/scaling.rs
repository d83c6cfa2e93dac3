//! The `lambda`-rescaling of a chain problem and its exact correspondences.
//!
//! With `S = lambda^{-1/2} T_lambda`:
//! `F_l(t,x) = lambda^{1/2} T_lambda^{-1} F(t, S x)`, `a_l = a(t, S x) / lambda`,
//! `f_l = f(t, S x)`, `g_l = g(S x)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::anisotropy::{quasi_distance, ScaleMatrix};
use crate::error::{Error, Result};
use crate::model::{AffineForm, ChainProblem, Coefficients};
use crate::proxy::{FrozenProxy, ProxyConfig};
use crate::quadrature::{BoxDomain, Halton};
use crate::report::DiagnosticReport;
use crate::stats::{linear_fit, relative_spread};
use crate::MAX_ND;

/// A problem together with its rescaled version.
#[derive(Debug, Clone)]
pub struct ScaledProblem {
    pub base: ChainProblem,
    pub lambda: f64,
    pub scaled: ChainProblem,
}

impl ScaledProblem {
    /// `S x = lambda^{-1/2} T_lambda x`.
    pub fn to_original(&self, x: &[f64]) -> Vec<f64> {
        stretch(self.lambda, self.base.dims.d, x)
    }

    /// `S^{-1} y`.
    pub fn to_scaled(&self, y: &[f64]) -> Vec<f64> {
        let f = factors(self.lambda, self.base.dims.d, y.len());
        y.iter().zip(&f).map(|(v, s)| v / s).collect()
    }
}

fn factors(lambda: f64, d: usize, nd: usize) -> Vec<f64> {
    let root = lambda.sqrt();
    (0..nd).map(|k| lambda.powi((k / d + 1) as i32) / root).collect()
}

fn stretch(lambda: f64, d: usize, x: &[f64]) -> Vec<f64> {
    x.iter().zip(factors(lambda, d, x.len())).map(|(v, s)| v * s).collect()
}

struct ScaledCoeffs {
    base: Arc<dyn Coefficients>,
    lambda: f64,
    nd: usize,
    d: usize,
    /// Per-coordinate factor of `S`.
    stretch: Vec<f64>,
    affine: Option<AffineForm>,
}

impl ScaledCoeffs {
    fn map(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.nd {
            out[k] = self.stretch[k] * x[k];
        }
    }
}

impl Coefficients for ScaledCoeffs {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let mut y = [0.0; MAX_ND];
        self.map(x, &mut y);
        self.base.drift(t, &y[..self.nd], out);
        for k in 0..self.nd {
            out[k] /= self.stretch[k];
        }
    }

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let mut y = [0.0; MAX_ND];
        self.map(x, &mut y);
        self.base.diffusion(t, &y[..self.nd], out);
        for v in out[..self.d * self.d].iter_mut() {
            *v /= self.lambda;
        }
    }

    fn sigma(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        let mut y = [0.0; MAX_ND];
        self.map(x, &mut y);
        if !self.base.sigma(t, &y[..self.nd], out) {
            return false;
        }
        let r = self.lambda.sqrt();
        for v in out[..self.d * self.d].iter_mut() {
            *v /= r;
        }
        true
    }

    fn affine_form(&self) -> Option<AffineForm> {
        self.affine.clone()
    }
}

/// Rescaling for any `lambda > 0`, without the horizon restriction.
pub fn rescale_any(problem: &ChainProblem, lambda: f64) -> Result<ScaledProblem> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let nd = problem.nd();
    let d = problem.dims.d;
    let st = factors(lambda, d, nd);
    let affine = problem.affine.as_ref().map(|af| {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&st));
        let s_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(nd, st.iter().map(|v| 1.0 / v)));
        AffineForm { a_mat: &s_inv * &af.a_mat * &s, offset: &s_inv * &af.offset, diffusion: &af.diffusion / lambda }
    });
    let coeffs = ScaledCoeffs { base: problem.coeffs.clone(), lambda, nd, d, stretch: st.clone(), affine };
    let mut scaled = ChainProblem::new(problem.dims, Arc::new(coeffs));
    let (g, f) = (problem.terminal.clone(), problem.source.clone());
    let (sg, sf) = (st.clone(), st);
    scaled = scaled
        .with_terminal_fn(Arc::new(move |x: &[f64]| {
            let y: Vec<f64> = x.iter().zip(&sg).map(|(v, s)| v * s).collect();
            g(&y)
        }))
        .with_source_fn(Arc::new(move |t: f64, x: &[f64]| {
            let y: Vec<f64> = x.iter().zip(&sf).map(|(v, s)| v * s).collect();
            f(t, &y)
        }));
    if problem.source_spec.as_ref().is_some_and(|s| s.is_zero()) {
        scaled.source_spec = problem.source_spec.clone();
    }
    scaled.catalog_id = problem.catalog_id.as_ref().map(|id| format!("{id}@lambda={lambda}"));
    Ok(ScaledProblem { base: problem.clone(), lambda, scaled })
}

/// Rescaling with `lambda` in `(0, 1]` and `T / lambda <= 1`.
pub fn rescale_problem(problem: &ChainProblem, lambda: f64) -> Result<ScaledProblem> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if lambda > 1.0 {
        return Err(Error::config("lambda", "must lie in (0, 1]"));
    }
    if problem.dims.horizon / lambda > 1.0 + 1e-12 {
        return Err(Error::config("lambda", format!("T / lambda = {} exceeds 1", problem.dims.horizon / lambda)));
    }
    rescale_any(problem, lambda)
}

/// Sample points `(xi = x, y)` for the density checks: `y` is drawn around the
/// proxy mean in whitened units.
fn sample_pairs(nd: usize, domain: &BoxDomain, samples: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let seq = Halton::new(2 * nd, seed);
    let mut u = vec![0.0; 2 * nd];
    (0..samples)
        .map(|k| {
            seq.point(k, &mut u);
            let mut x = vec![0.0; nd];
            domain.map_unit(&u[..nd], &mut x);
            let w: Vec<f64> = u[nd..].iter().map(|v| 3.0 * (2.0 * v - 1.0)).collect();
            (x, w)
        })
        .collect()
}

/// Max relative residual of
/// `p_l^{xi}(t,s,x,y) = lambda^{n^2 d/2} p^{S xi}(t,s,S x,S y)` with `xi = x`.
pub fn density_scaling_check(problem: &ChainProblem, lambda: f64, t: f64, s: f64, domain: &BoxDomain, samples: usize, seed: u64) -> Result<f64> {
    density_derivative_residual(problem, lambda, t, s, domain, samples, seed, &[])
}

/// Same correspondence for `D_x^coords`, where the chain rule contributes
/// one factor of `S` per derivative.
#[allow(clippy::too_many_arguments)]
pub fn density_derivative_residual(
    problem: &ChainProblem,
    lambda: f64,
    t: f64,
    s: f64,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
    coords: &[usize],
) -> Result<f64> {
    let sp = rescale_problem(problem, lambda)?;
    let dims = problem.dims;
    if domain.dim() != dims.nd() {
        return Err(Error::Shape { expected: dims.nd(), got: domain.dim() });
    }
    let power = (dims.n * dims.n * dims.d) as f64 / 2.0;
    let chain: f64 = coords.iter().map(|&c| factors(lambda, dims.d, dims.nd())[c]).product();
    let cfg = ProxyConfig::default();
    let mut worst = 0.0f64;
    for (x, w) in sample_pairs(dims.nd(), domain, samples, seed) {
        let kern = FrozenProxy::new(&sp.scaled, t, &x, s, cfg)?.kernel(t, s, &x)?;
        let l = kern.chol_l();
        let y: Vec<f64> = (0..dims.nd()).map(|i| kern.mean[i] + (0..=i).map(|j| l[(i, j)] * w[j]).sum::<f64>()).collect();
        let lhs = kern.derivative(&y, coords)?;
        let xs = sp.to_original(&x);
        let ys = sp.to_original(&y);
        let rhs = lambda.powf(power) * chain * FrozenProxy::new(problem, t, &xs, s, cfg)?.density(t, s, &xs, &ys, coords)?;
        let scale = lhs.abs().max(rhs.abs());
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

/// Slope of `log(D p_l / (lambda^{n^2 d/2} D p(S x, S y)))` against `log lambda`.
pub fn density_derivative_slope(problem: &ChainProblem, lambdas: &[f64], t: f64, s: f64, x: &[f64], w: &[f64], coords: &[usize]) -> Result<f64> {
    let dims = problem.dims;
    let cfg = ProxyConfig::default();
    let power = (dims.n * dims.n * dims.d) as f64 / 2.0;
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &lambda in lambdas {
        let sp = rescale_problem(problem, lambda)?;
        let kern = FrozenProxy::new(&sp.scaled, t, x, s, cfg)?.kernel(t, s, x)?;
        let l = kern.chol_l();
        let y: Vec<f64> = (0..dims.nd()).map(|i| kern.mean[i] + (0..=i).map(|j| l[(i, j)] * w[j]).sum::<f64>()).collect();
        let lhs = kern.derivative(&y, coords)?;
        let xs = sp.to_original(x);
        let rhs = FrozenProxy::new(problem, t, &xs, s, cfg)?.density(t, s, &xs, &sp.to_original(&y), coords)?;
        lx.push(lambda.ln());
        ly.push((lhs / (lambda.powf(power) * rhs)).abs().ln());
    }
    Ok(linear_fit(&lx, &ly).0)
}

/// Ratios `|[K^{x,l}]_11 - [K^{x',l}]_11| / (c0 lambda^{gamma/2} d^{2+gamma}(x,x'))`.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceSensitivity {
    pub lambda: f64,
    pub c0: f64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub skipped: usize,
}

/// Covariance sensitivity of the scaled proxy at `v = t + c0 lambda d^2(x,x')`.
///
/// `x` is drawn in `domain` and `x'` around it with `v <= T`.
#[allow(clippy::too_many_arguments)]
pub fn scaled_covariance_sensitivity(
    problem: &ChainProblem,
    lambda: f64,
    c0: f64,
    t: f64,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
) -> Result<CovarianceSensitivity> {
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::config("c0", "must lie in (0, 1]"));
    }
    let sp = rescale_problem(problem, lambda)?;
    let dims = problem.dims;
    let nd = dims.nd();
    if domain.dim() != nd {
        return Err(Error::Shape { expected: nd, got: domain.dim() });
    }
    if !(t >= 0.0 && t < dims.horizon) {
        return Err(Error::Ordering(format!("start time {t} outside [0, {})", dims.horizon)));
    }
    // Largest d(x, x') with t + c0 lambda d^2 <= T.
    let d_max = ((dims.horizon - t) / (c0 * lambda)).sqrt();
    let seq = Halton::new(nd + 2 * dims.n, seed);
    let mut u = vec![0.0; nd + 2 * dims.n];
    let cfg = ProxyConfig::default();
    let mut ratios = Vec::new();
    let mut skipped = 0;
    for k in 0..samples {
        seq.point(k, &mut u);
        let mut x = vec![0.0; nd];
        domain.map_unit(&u[..nd], &mut x);
        // Block i moves by r_i^{2i-1} along its first axis, so d(x, x') = sum r_i.
        let mut xp = x.clone();
        for i in 0..dims.n {
            let r = d_max * (0.05 + 0.95 * u[nd + i]) / dims.n as f64;
            let sign = if u[nd + dims.n + i] < 0.5 { -1.0 } else { 1.0 };
            xp[i * dims.d] += sign * r.powi(2 * i as i32 + 1);
        }
        let dist = quasi_distance(&x, &xp, dims.d)?;
        let v = t + c0 * lambda * dist * dist;
        if dist == 0.0 || v > dims.horizon {
            skipped += 1;
            continue;
        }
        let k1 = FrozenProxy::new(&sp.scaled, t, &x, v, cfg)?.covariance(t, v)?;
        let k2 = FrozenProxy::new(&sp.scaled, t, &xp, v, cfg)?.covariance(t, v)?;
        let d = dims.d;
        let diff = (k1.view((0, 0), (d, d)) - k2.view((0, 0), (d, d))).amax();
        ratios.push(diff / (c0 * lambda.powf(dims.gamma / 2.0) * dist.powf(2.0 + dims.gamma)));
    }
    let max_ratio = ratios.iter().fold(0.0f64, |m, v| m.max(*v));
    let mean_ratio = if ratios.is_empty() { 0.0 } else { ratios.iter().sum::<f64>() / ratios.len() as f64 };
    Ok(CovarianceSensitivity { lambda, c0, ratios, max_ratio, mean_ratio, skipped })
}

/// Stability report of the covariance ratio across several `lambda`.
pub fn covariance_sensitivity_report(
    problem: &ChainProblem,
    lambdas: &[f64],
    c0: f64,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
) -> Result<DiagnosticReport> {
    let mut maxes = Vec::new();
    for &l in lambdas {
        maxes.push(scaled_covariance_sensitivity(problem, l, c0, 0.0, domain, samples, seed)?.max_ratio);
    }
    let spread = relative_spread(&maxes);
    Ok(DiagnosticReport::new("scaled_covariance_sensitivity", "scaling", "scaled covariance sensitivity")
        .series(lambdas.to_vec(), maxes)
        .detail("relative_spread", spread)
        .detail("c0", c0))
}

/// `T_u` with the chain shape of `problem`, for callers composing scalings by hand.
pub fn scale_matrix(problem: &ChainProblem, u: f64) -> Result<ScaleMatrix> {
    ScaleMatrix::new(u, problem.dims.n, problem.dims.d)
}
