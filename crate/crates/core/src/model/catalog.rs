//! Built-in parametrized chain problems.
//!
//! | id            | drift                                             | diffusion |
//! |---------------|---------------------------------------------------|-----------|
//! | `kolmogorov`  | `A_0 x` (identity subdiagonal)                    | `s^2 I`   |
//! | `linear`      | `A_0 x - damping * x`                             | `s^2 I`   |
//! | `ou_perturbed`| `A_0 x - damping * x + (beta sin(x_1 + x_n), 0..)`| `(1 + eps sin^2 x_1) I` |
//! | `kinetic`     | smooth nonlinear, `n = 2`                         | smooth, bounded below |
//! | `rough`       | Hölder-rough at the threshold exponents           | Hölder-rough |
//!
//! Functions act componentwise inside blocks, so every entry works for any `d`.
//! `kolmogorov_n2`, `kolmogorov_n3`, ... fix `n` through the id.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::Value;

use super::{AffineForm, ChainProblem, Coefficients};
use crate::anisotropy::ChainDims;
use crate::error::{Error, Result};
use crate::funcs::ScalarFn;

/// Known catalog ids (prefix match for `kolmogorov_n*`).
pub const CATALOG_IDS: [&str; 5] = ["kolmogorov", "linear", "ou_perturbed", "kinetic", "rough"];

#[derive(Debug, Clone, Deserialize)]
struct CommonParams {
    n: Option<usize>,
    d: Option<usize>,
    #[serde(default)]
    terminal: Option<ScalarFn>,
    #[serde(default)]
    source: Option<ScalarFn>,
    #[serde(flatten)]
    rest: serde_json::Map<String, Value>,
}

fn get(rest: &serde_json::Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    match rest.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::config(format!("params.{key}"), "expected a finite number")),
    }
}

fn check_keys(rest: &serde_json::Map<String, Value>, allowed: &[&str]) -> Result<()> {
    for k in rest.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::config(format!("params.{k}"), "unknown parameter"));
        }
    }
    Ok(())
}

/// Builds a catalog problem from its id and JSON parameters.
pub fn build(id: &str, params: &Value, gamma: f64, horizon: f64) -> Result<ChainProblem> {
    let params = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    let common: CommonParams = serde_json::from_value(params).map_err(|e| Error::config("params", e.to_string()))?;
    let (base, n_from_id) = match id.strip_prefix("kolmogorov_n") {
        Some(rest) => {
            let n: usize = rest.parse().map_err(|_| Error::config("problem", format!("unknown catalog entry `{id}`")))?;
            ("kolmogorov", Some(n))
        }
        None => (id, None),
    };
    let default_n = 2;
    let n = match (n_from_id, common.n) {
        (Some(a), Some(b)) if a != b => return Err(Error::config("params.n", format!("conflicts with id `{id}`"))),
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => default_n,
    };
    let d = common.d.unwrap_or(1);
    let dims = ChainDims::new(n, d, gamma, horizon)?;
    let rest = &common.rest;
    let coeffs: Arc<dyn Coefficients> = match base {
        "kolmogorov" => {
            check_keys(rest, &["sigma"])?;
            Arc::new(LinearChain { dims, damping: 0.0, sigma: get(rest, "sigma", 1.0)? })
        }
        "linear" => {
            check_keys(rest, &["sigma", "damping"])?;
            Arc::new(LinearChain { dims, damping: get(rest, "damping", 0.5)?, sigma: get(rest, "sigma", 1.0)? })
        }
        "ou_perturbed" => {
            check_keys(rest, &["damping", "beta", "eps"])?;
            let eps = get(rest, "eps", 0.3)?;
            if eps <= -1.0 {
                return Err(Error::config("params.eps", "must exceed -1 for ellipticity"));
            }
            Arc::new(OuPerturbed {
                dims,
                damping: get(rest, "damping", 0.2)?,
                beta: get(rest, "beta", 0.5)?,
                eps,
            })
        }
        "kinetic" => {
            if n != 2 {
                return Err(Error::config("params.n", "kinetic problem requires n = 2"));
            }
            check_keys(rest, &["kappa", "beta", "eps", "eta", "alpha"])?;
            let eps = get(rest, "eps", 0.3)?;
            let alpha = get(rest, "alpha", 0.3)?;
            if eps.abs() >= 1.0 {
                return Err(Error::config("params.eps", "|eps| < 1 keeps the transmission nondegenerate"));
            }
            if alpha <= -1.0 {
                return Err(Error::config("params.alpha", "must exceed -1 for ellipticity"));
            }
            Arc::new(Kinetic {
                dims,
                kappa: get(rest, "kappa", 0.5)?,
                beta: get(rest, "beta", 0.3)?,
                eps,
                eta: get(rest, "eta", 0.2)?,
                alpha,
            })
        }
        "rough" => {
            if !(2..=3).contains(&n) {
                return Err(Error::config("params.n", "rough problem supports n in {2, 3}"));
            }
            check_keys(rest, &["beta", "eps", "eta", "alpha", "alpha2"])?;
            let eps = get(rest, "eps", 0.2)?;
            if eps.abs() * (1.0 + gamma) >= 1.0 {
                return Err(Error::config("params.eps", "|eps|(1+gamma) < 1 keeps the transmission nondegenerate"));
            }
            Arc::new(Rough {
                dims,
                beta: get(rest, "beta", 0.4)?,
                eps,
                eta: get(rest, "eta", 0.2)?,
                alpha: get(rest, "alpha", 0.3)?.abs(),
                alpha2: get(rest, "alpha2", 0.2)?.abs(),
            })
        }
        _ => return Err(Error::config("problem", format!("unknown catalog entry `{id}`"))),
    };
    let mut problem = ChainProblem::new(dims, coeffs).with_id(id);
    for (key, spec) in [("params.terminal", &common.terminal), ("params.source", &common.source)] {
        if let Some(s) = spec {
            if s.max_index().is_some_and(|k| k >= dims.nd()) {
                return Err(Error::config(key, "coordinate index out of range"));
            }
        }
    }
    if let Some(g) = common.terminal {
        problem = problem.with_terminal(g);
    }
    if let Some(f) = common.source {
        problem = problem.with_source(f);
    }
    Ok(problem)
}

/// `F(x) = A_0 x - damping x`, `a = sigma^2 I`.
#[derive(Debug, Clone)]
pub struct LinearChain {
    pub dims: ChainDims,
    pub damping: f64,
    pub sigma: f64,
}

impl Coefficients for LinearChain {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dims.d;
        for k in 0..x.len() {
            let sub = if k >= d { x[k - d] } else { 0.0 };
            out[k] = sub - self.damping * x[k];
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        fill_scaled_identity(self.dims.d, self.sigma * self.sigma, out);
    }

    fn sigma(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        fill_scaled_identity(self.dims.d, self.sigma.abs(), out);
        true
    }

    fn affine_form(&self) -> Option<AffineForm> {
        let nd = self.dims.nd();
        let d = self.dims.d;
        let mut a = DMatrix::from_diagonal_element(nd, nd, -self.damping);
        for k in d..nd {
            a[(k, k - d)] = 1.0;
        }
        Some(AffineForm {
            a_mat: a,
            offset: DVector::zeros(nd),
            diffusion: DMatrix::from_diagonal_element(d, d, self.sigma * self.sigma),
        })
    }
}

fn fill_scaled_identity(d: usize, v: f64, out: &mut [f64]) {
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = if r == c { v } else { 0.0 };
        }
    }
}

/// Linear chain plus a smooth nonlinearity on the nondegenerate block.
#[derive(Debug, Clone)]
pub struct OuPerturbed {
    pub dims: ChainDims,
    pub damping: f64,
    pub beta: f64,
    pub eps: f64,
}

impl Coefficients for OuPerturbed {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dims.d;
        let last = (self.dims.n - 1) * d;
        for k in 0..x.len() {
            let sub = if k >= d { x[k - d] } else { 0.0 };
            out[k] = sub - self.damping * x[k];
        }
        for c in 0..d {
            out[c] += self.beta * (x[c] + x[last + c]).sin();
        }
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dims.d;
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = if r == c { 1.0 + self.eps * x[r].sin().powi(2) } else { 0.0 };
            }
        }
    }

    fn sigma(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        self.diffusion(t, x, out);
        let d = self.dims.d;
        for r in 0..d {
            out[r * d + r] = out[r * d + r].sqrt();
        }
        true
    }
}

/// Kinetic (`n = 2`) model with smooth nonlinear drift and diffusion.
///
/// `F_1 = -kappa sin x_1 + beta cos x_2`, `F_2 = x_1 + eps sin x_1 + eta cos x_2`,
/// `a = 1 + alpha sin^2(x_1 + x_2)` componentwise.
#[derive(Debug, Clone)]
pub struct Kinetic {
    pub dims: ChainDims,
    pub kappa: f64,
    pub beta: f64,
    pub eps: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl Coefficients for Kinetic {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dims.d;
        for c in 0..d {
            let (x1, x2) = (x[c], x[d + c]);
            out[c] = -self.kappa * x1.sin() + self.beta * x2.cos();
            out[d + c] = x1 + self.eps * x1.sin() + self.eta * x2.cos();
        }
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dims.d;
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = if r == c { 1.0 + self.alpha * (x[r] + x[d + r]).sin().powi(2) } else { 0.0 };
            }
        }
    }

    fn sigma(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        self.diffusion(t, x, out);
        let d = self.dims.d;
        for r in 0..d {
            out[r * d + r] = out[r * d + r].sqrt();
        }
        true
    }
}

/// Hölder-rough model sitting at the threshold regularity of each level.
///
/// With `s(v) = |sin v|`:
/// `F_1 = -beta sgn(x_1) s(x_1)^gamma`,
/// `F_2 = x_1 + eps s(x_1)^{1+gamma} + eta s(x_2)^{(1+gamma)/3}`,
/// `F_3 = x_2 + eps s(x_2)^{1+gamma/3} + eta s(x_3)^{(3+gamma)/5}`,
/// `a = 1 + alpha s(x_1)^gamma + alpha2 s(x_2)^{gamma/3}`.
#[derive(Debug, Clone)]
pub struct Rough {
    pub dims: ChainDims,
    pub beta: f64,
    pub eps: f64,
    pub eta: f64,
    pub alpha: f64,
    pub alpha2: f64,
}

fn spow(v: f64, p: f64) -> f64 {
    v.sin().abs().powf(p)
}

impl Coefficients for Rough {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dims.d;
        let g = self.dims.gamma;
        for c in 0..d {
            let x1 = x[c];
            let x2 = x[d + c];
            out[c] = -self.beta * x1.signum() * spow(x1, g);
            out[d + c] = x1 + self.eps * spow(x1, 1.0 + g) + self.eta * spow(x2, (1.0 + g) / 3.0);
            if self.dims.n == 3 {
                let x3 = x[2 * d + c];
                out[2 * d + c] = x2 + self.eps * spow(x2, 1.0 + g / 3.0) + self.eta * spow(x3, (3.0 + g) / 5.0);
            }
        }
    }

    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dims.d;
        let g = self.dims.gamma;
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = if r == c {
                    1.0 + self.alpha * spow(x[r], g) + self.alpha2 * spow(x[d + r], g / 3.0)
                } else {
                    0.0
                };
            }
        }
    }

    fn sigma(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        self.diffusion(t, x, out);
        let d = self.dims.d;
        for r in 0..d {
            out[r * d + r] = out[r * d + r].sqrt();
        }
        true
    }
}
