//! Euler–Maruyama simulation of the chain and the Feynman–Kac Monte Carlo oracle.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcs::ScalarFn;
use crate::model::ChainProblem;
use crate::quadrature::gauss_legendre_on;
use crate::rng::PathStream;
use crate::stats::sym_sqrt;
use crate::MAX_ND;

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::config("mc.paths", "need at least 2 paths"));
        }
        if self.steps == 0 {
            return Err(Error::config("mc.steps", "must be positive"));
        }
        if self.antithetic && self.paths % 2 == 1 {
            return Err(Error::config("mc.paths", "antithetic sampling needs an even path count"));
        }
        Ok(())
    }
}

/// Per-path Euler stepper with stack buffers.
struct Stepper<'a> {
    problem: &'a ChainProblem,
    nd: usize,
    d: usize,
}

impl Stepper<'_> {
    fn sigma_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        if self.problem.coeffs.sigma(t, x, &mut out[..d * d]) {
            return;
        }
        self.problem.coeffs.diffusion(t, x, &mut out[..d * d]);
        if d == 1 {
            out[0] = out[0].max(0.0).sqrt();
        } else {
            let s = sym_sqrt(&DMatrix::from_row_slice(d, d, &out[..d * d]));
            for r in 0..d {
                for c in 0..d {
                    out[r * d + c] = s[(r, c)];
                }
            }
        }
    }

    /// Runs one path; `visit(t_k, x_k)` sees every left endpoint.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        t: f64,
        x: &[f64],
        s: f64,
        steps: usize,
        rng: &mut PathStream,
        sign: f64,
        path: usize,
        mut visit: impl FnMut(f64, &[f64]),
    ) -> Result<[f64; MAX_ND]> {
        let (nd, d) = (self.nd, self.d);
        let h = (s - t) / steps as f64;
        let sq = h.sqrt();
        let mut cur = [0.0; MAX_ND];
        cur[..nd].copy_from_slice(x);
        let mut f = [0.0; MAX_ND];
        let mut sig = [0.0; MAX_ND * MAX_ND];
        let mut z = [0.0; MAX_ND];
        for k in 0..steps {
            let tk = t + h * k as f64;
            visit(tk, &cur[..nd]);
            self.problem.drift_into(tk, &cur[..nd], &mut f[..nd]);
            self.sigma_into(tk, &cur[..nd], &mut sig);
            rng.fill_normal(&mut z[..d]);
            for k2 in 0..nd {
                cur[k2] += f[k2] * h;
            }
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += sig[r * d + c] * z[c];
                }
                cur[r] += sign * sq * acc;
            }
            if cur[..nd].iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("non-finite state on path {path} at step {k}")));
            }
        }
        Ok(cur)
    }
}

fn stream_for(cfg: &McConfig, path: usize) -> (PathStream, f64) {
    if cfg.antithetic {
        (PathStream::new(cfg.seed, (path / 2) as u64), if path % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        (PathStream::new(cfg.seed, path as u64), 1.0)
    }
}

/// Endpoints `X_s` of `cfg.paths` Euler paths started at `(t, x)`.
///
/// Noise enters the first block only. Path `k` draws from its own stream
/// keyed by `(seed, k)`, so results do not depend on the thread count.
pub fn simulate_chain(problem: &ChainProblem, t: f64, x: &[f64], s: f64, cfg: &McConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    problem.dims.check_len(x)?;
    if !(t < s) {
        return Err(Error::Ordering(format!("simulation needs t < s, got t={t}, s={s}")));
    }
    let st = Stepper { problem, nd: problem.nd(), d: problem.dims.d };
    (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let (mut rng, sign) = stream_for(cfg, p);
            let end = st.run(t, x, s, cfg.steps, &mut rng, sign, p, |_, _| {})?;
            Ok(end[..st.nd].to_vec())
        })
        .collect()
}

/// Monte Carlo estimate with its 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FkEstimate {
    pub estimate: f64,
    pub halfwidth: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

/// `E[g(X_T) + sum_k f(t_k, X_{t_k}) h]` from `(t, x)`.
///
/// With antithetic sampling the half-width uses the pair means.
pub fn fk_estimate(problem: &ChainProblem, t: f64, x: &[f64], cfg: &McConfig) -> Result<FkEstimate> {
    cfg.validate()?;
    problem.dims.check_len(x)?;
    let horizon = problem.dims.horizon;
    if !(t <= horizon) || t < 0.0 {
        return Err(Error::Ordering(format!("start time {t} outside [0, {horizon}]")));
    }
    let done = |estimate: f64| FkEstimate { estimate, halfwidth: 0.0, paths: cfg.paths, steps: cfg.steps, seed: cfg.seed };
    if t == horizon {
        return Ok(done(problem.terminal(x)));
    }
    let has_source = !problem.source_spec.as_ref().is_some_and(|f| f.is_zero());
    let h = (horizon - t) / cfg.steps as f64;
    let st = Stepper { problem, nd: problem.nd(), d: problem.dims.d };
    let values: Vec<f64> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let (mut rng, sign) = stream_for(cfg, p);
            let mut running = 0.0;
            let end = st.run(t, x, horizon, cfg.steps, &mut rng, sign, p, |tk, xk| {
                if has_source {
                    running += problem.source(tk, xk) * h;
                }
            })?;
            Ok(problem.terminal(&end[..st.nd]) + running)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<f64> = if cfg.antithetic { values.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect() } else { values };
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    Ok(FkEstimate { estimate: mean, halfwidth: 1.96 * var.sqrt() / m.sqrt(), paths: cfg.paths, steps: cfg.steps, seed: cfg.seed })
}

/// Exact mean and covariance of a linear Gaussian chain at time `s` from `(t, x)`.
pub fn gaussian_chain_moments(problem: &ChainProblem, t: f64, x: &[f64], s: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let af = problem
        .affine
        .as_ref()
        .ok_or_else(|| Error::Unsupported("closed-form moments need an affine drift with constant diffusion".into()))?;
    problem.dims.check_len(x)?;
    if !(t <= s) {
        return Err(Error::Ordering(format!("moments need t <= s, got t={t}, s={s}")));
    }
    let nd = problem.nd();
    let d = problem.dims.d;
    let delta = s - t;
    let e = |u: f64| (&af.a_mat * u).exp();
    let mut mean = e(delta) * DVector::from_column_slice(x);
    let mut cov = DMatrix::zeros(nd, nd);
    if delta > 0.0 {
        let mut bab = DMatrix::zeros(nd, nd);
        bab.view_mut((0, 0), (d, d)).copy_from(&af.diffusion);
        let rule = gauss_legendre_on(64, 0.0, delta);
        for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
            let eu = e(u);
            mean += &eu * &af.offset * w;
            cov += &eu * &bab * eu.transpose() * w;
        }
    }
    Ok((mean, (&cov + cov.transpose()) * 0.5))
}

/// `E[g(X_T)]` for a linear Gaussian chain and `g` a polynomial of degree at most 2.
pub fn gaussian_chain_oracle(problem: &ChainProblem, t: f64, x: &[f64], g: &ScalarFn) -> Result<f64> {
    if g.polynomial_degree().is_none() {
        return Err(Error::Unsupported("oracle supports polynomials of degree at most 2".into()));
    }
    if g.max_index().is_some_and(|k| k >= problem.nd()) {
        return Err(Error::Shape { expected: problem.nd(), got: g.max_index().unwrap() + 1 });
    }
    let (m, k) = gaussian_chain_moments(problem, t, x, problem.dims.horizon)?;
    fn expect(g: &ScalarFn, m: &DVector<f64>, k: &DMatrix<f64>) -> f64 {
        match g {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant { value } => *value,
            ScalarFn::Linear { coeffs, offset } => offset + coeffs.iter().zip(m.iter()).map(|(c, v)| c * v).sum::<f64>(),
            ScalarFn::Square { index } => m[*index] * m[*index] + k[(*index, *index)],
            ScalarFn::Sum { terms } => terms.iter().map(|t| expect(t, m, k)).sum(),
            _ => unreachable!("checked polynomial"),
        }
    }
    Ok(expect(g, &m, &k))
}
