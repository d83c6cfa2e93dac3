//! Diagonal / off-diagonal split around the changeover time `t0`.

use serde::Serialize;

use super::{gaussian_point, Linearization, SampledField, SolverConfig};
use crate::anisotropy::quasi_distance;
use crate::error::{Error, Result};
use crate::model::ChainProblem;
use crate::proxy::{cholesky_jitter, FrozenProxy};
use crate::quadrature::{gauss_hermite, gauss_legendre, TensorRule, TENSOR_BUDGET};
use crate::report::DiagnosticReport;

/// `int_{t1}^{t2} ds int p~^{(t, xi)}(t,s,x,y) (L_s - L~_s^{(t, xi)}) u(s,y) dy`.
///
/// Nodes cluster at `t1` through `s = t1 + (t2 - t1) r^2`.
#[allow(clippy::too_many_arguments)]
pub fn remainder_integral(
    problem: &ChainProblem,
    u_field: &SampledField,
    t: f64,
    xi: &[f64],
    x: &[f64],
    t1: f64,
    t2: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    if !(t <= t1 && t1 <= t2) {
        return Err(Error::Ordering(format!("remainder window needs t <= t1 <= t2, got ({t}, {t1}, {t2})")));
    }
    if t1 == t2 {
        return Ok(0.0);
    }
    let proxy = FrozenProxy::new(problem, t, xi, t2, cfg.proxy)?;
    let rule = TensorRule::new(&gauss_hermite(cfg.remainder_gh_nodes), problem.nd(), TENSOR_BUDGET)?;
    let gl = gauss_legendre(cfg.time_nodes);
    let span = t2 - t1;
    let mut y = vec![0.0; problem.nd()];
    let mut total = 0.0;
    for (&z, &w) in gl.nodes.iter().zip(&gl.weights) {
        let r = 0.5 * (z + 1.0);
        let s = t1 + span * r * r;
        let chol = cholesky_jitter(&proxy.covariance(t, s)?)?.l();
        let mean = proxy.mean(t, s, x)?;
        let lin = Linearization::at(problem, s, proxy.theta(s).as_slice());
        let mut acc = 0.0;
        for k in 0..rule.len() {
            gaussian_point(mean.as_slice(), &chol, rule.node(k), &mut y);
            acc += rule.weights[k] * lin.terms(problem, u_field, s, &y)?.total();
        }
        total += w * span * r * acc;
    }
    Ok(total)
}

/// Pieces of the regime-split expansion of `u(t,x) - u(t,x')`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSplit {
    pub t0: f64,
    pub distance: f64,
    /// `|R^{x}(x) - R^{x'}(x')|` on `[t, t0]`.
    pub off_diagonal: f64,
    /// `|R^{x}(x) - R^{x}(x')|` on `[t0, T]`.
    pub diagonal: f64,
    /// `P~^{x'}_{t0,t} u(t0,.)(x') - P~^{x}_{t0,t} u(t0,.)(x')`.
    pub discontinuity: f64,
    /// Same with `D^2_{x_1}` applied to the start point.
    pub discontinuity_d2: f64,
    /// Each magnitude divided by `d^gamma(x, x')`, zero when `x = x'`.
    pub off_diagonal_ratio: f64,
    pub diagonal_ratio: f64,
    pub discontinuity_ratio: f64,
    pub discontinuity_d2_ratio: f64,
}

impl RegimeSplit {
    pub fn to_report(&self) -> DiagnosticReport {
        DiagnosticReport::new("regime_split", "solver", "regime split at t0")
            .scalar(self.discontinuity_d2_ratio)
            .detail("split", self)
    }
}

/// Discontinuity term for freezings `x'` and `x` started at `x'`.
pub(crate) fn discontinuity_terms(
    problem: &ChainProblem,
    u_field: &SampledField,
    t: f64,
    t0: f64,
    x: &[f64],
    x_prime: &[f64],
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    if t0 <= t {
        return Ok((0.0, 0.0));
    }
    let q = cfg.gh_nodes.max(20);
    let own = FrozenProxy::new(problem, t, x_prime, t0, cfg.proxy)?.kernel(t, t0, x_prime)?;
    let other = FrozenProxy::new(problem, t, x, t0, cfg.proxy)?.kernel(t, t0, x_prime)?;
    let u = |y: &[f64]| u_field.eval(t0, y);
    let v0 = own.integrate_derivative(q, &[], u)? - other.integrate_derivative(q, &[], u)?;
    let d2 = own.integrate_derivative(q, &[0, 0], u)? - other.integrate_derivative(q, &[0, 0], u)?;
    Ok((v0, d2))
}

/// Splits the remainder difference between `x` and `x'` at
/// `t0 = (t + c0 d(x,x')^2) ^ T`.
pub fn regime_split_expand(
    problem: &ChainProblem,
    u_field: &SampledField,
    t: f64,
    x: &[f64],
    x_prime: &[f64],
    c0: f64,
    cfg: &SolverConfig,
) -> Result<RegimeSplit> {
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::config("c0", "must lie in (0, 1]"));
    }
    problem.dims.check_len(x)?;
    problem.dims.check_len(x_prime)?;
    let horizon = problem.dims.horizon;
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::Ordering(format!("t={t} must lie in [0, T)")));
    }
    let dist = quasi_distance(x, x_prime, problem.dims.d)?;
    let t0 = (t + c0 * dist * dist).min(horizon);
    if dist == 0.0 {
        return Ok(RegimeSplit {
            t0,
            distance: 0.0,
            off_diagonal: 0.0,
            diagonal: 0.0,
            discontinuity: 0.0,
            discontinuity_d2: 0.0,
            off_diagonal_ratio: 0.0,
            diagonal_ratio: 0.0,
            discontinuity_ratio: 0.0,
            discontinuity_d2_ratio: 0.0,
        });
    }
    let off = remainder_integral(problem, u_field, t, x, x, t, t0, cfg)?
        - remainder_integral(problem, u_field, t, x_prime, x_prime, t, t0, cfg)?;
    let diag = if t0 < horizon {
        remainder_integral(problem, u_field, t, x, x, t0, horizon, cfg)?
            - remainder_integral(problem, u_field, t, x, x_prime, t0, horizon, cfg)?
    } else {
        0.0
    };
    let (disc, disc2) = discontinuity_terms(problem, u_field, t, t0, x, x_prime, cfg)?;
    let scale = dist.powf(problem.dims.gamma);
    Ok(RegimeSplit {
        t0,
        distance: dist,
        off_diagonal: off.abs(),
        diagonal: diag.abs(),
        discontinuity: disc.abs(),
        discontinuity_d2: disc2.abs(),
        off_diagonal_ratio: off.abs() / scale,
        diagonal_ratio: diag.abs() / scale,
        discontinuity_ratio: disc.abs() / scale,
        discontinuity_d2_ratio: disc2.abs() / scale,
    })
}
