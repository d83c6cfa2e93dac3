//! Frozen semigroup, Green kernel and the first-order parametrix solver.
//!
//! The solver iterates
//! `u <- P~g + G~f + int_t^T int p~ (L_s - L~_s) u`, freezing the proxy at
//! every grid node `(tau, xi) = (t, x)`. Space integrals use whitened
//! Gauss–Hermite against the proxy density, time integrals use
//! Gauss–Legendre after `s = t + (T - t) r^2`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChainProblem;
use crate::proxy::{cholesky_jitter, FrozenProxy, ProxyConfig};
use crate::quadrature::{gauss_hermite, gauss_legendre, gauss_legendre_on, TensorRule, TENSOR_BUDGET};
use crate::MAX_ND;

mod field;
mod regime;

pub use field::{Axis, SampledField};
pub use regime::{regime_split_expand, remainder_integral, RegimeSplit};

/// Gauss–Hermite nodes per dimension used when none are given.
pub fn default_gh_nodes(nd: usize) -> usize {
    match nd {
        0..=2 => 20,
        3 => 16,
        4 => 10,
        _ => 7,
    }
}

/// `int p~(t,s,x,y) psi(y) dy` for the proxy frozen at its own `(tau, xi)`.
pub fn frozen_semigroup_apply(proxy: &FrozenProxy, psi: impl FnMut(&[f64]) -> f64, t: f64, s: f64, x: &[f64]) -> Result<f64> {
    frozen_semigroup_apply_with(proxy, psi, t, s, x, default_gh_nodes(x.len()))
}

/// Same with `q` Gauss–Hermite nodes per dimension.
pub fn frozen_semigroup_apply_with(
    proxy: &FrozenProxy,
    psi: impl FnMut(&[f64]) -> f64,
    t: f64,
    s: f64,
    x: &[f64],
    q: usize,
) -> Result<f64> {
    if !(t < s) {
        return Err(Error::Ordering(format!("semigroup needs t < s, got t={t}, s={s}")));
    }
    proxy.kernel(t, s, x)?.expect(q, psi)
}

/// `int_{t1}^{t2} ds int p~(t,s,x,y) f(s,y) dy` with `time_nodes` Gauss–Legendre nodes.
pub fn green_apply(
    proxy: &FrozenProxy,
    f: &dyn Fn(f64, &[f64]) -> f64,
    t: f64,
    t1: f64,
    t2: f64,
    x: &[f64],
    time_nodes: usize,
) -> Result<f64> {
    if !(t <= t1 && t1 < t2) {
        return Err(Error::Ordering(format!("green kernel needs t <= t1 < t2, got ({t}, {t1}, {t2})")));
    }
    if time_nodes == 0 {
        return Err(Error::config("solver.time_nodes", "must be positive"));
    }
    let q = default_gh_nodes(x.len());
    let rule = TensorRule::new(&gauss_hermite(q), x.len(), TENSOR_BUDGET)?;
    let gl = gauss_legendre_on(time_nodes, t1, t2);
    let mut acc = 0.0;
    for (&s, &w) in gl.nodes.iter().zip(&gl.weights) {
        let v = if s - t <= 1e-14 * (1.0 + t.abs()) {
            f(s, x)
        } else {
            proxy.kernel(t, s, x)?.expect_with(&rule, |y| f(s, y))
        };
        acc += w * v;
    }
    Ok(acc)
}

/// Pointwise value of `(L_s - L~_s) u(s, y)`, split by level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationTerms {
    /// `<F_1(y) - F_1(theta), D_1 u> + Tr((a(y) - a(theta)) D^2_1 u) / 2`.
    pub delta1: f64,
    /// Levels `2..n`: `<F_i(y) - F_i(theta) - D_{i-1}F_i(theta)(y - theta)_{i-1}, D_i u>`.
    pub delta_i: Vec<f64>,
}

impl PerturbationTerms {
    pub fn total(&self) -> f64 {
        self.delta1 + self.delta_i.iter().sum::<f64>()
    }
}

/// Linearization data of the drift and frozen diffusion at `theta_s`.
#[derive(Debug, Clone)]
struct Linearization {
    theta: Vec<f64>,
    f_theta: Vec<f64>,
    /// Subdiagonal blocks `D_{i-1}F_i(theta)`, row-major, levels `2..n`.
    jac: Vec<DMatrix<f64>>,
    a_theta: DMatrix<f64>,
}

impl Linearization {
    fn at(problem: &ChainProblem, s: f64, theta: &[f64]) -> Self {
        Self {
            theta: theta.to_vec(),
            f_theta: problem.drift(s, theta),
            jac: (1..problem.dims.n).map(|i| problem.transmission_jacobian(s, theta, i)).collect(),
            a_theta: problem.diffusion(s, theta),
        }
    }

    fn terms(&self, problem: &ChainProblem, field: &SampledField, s: f64, y: &[f64]) -> Result<PerturbationTerms> {
        let d = problem.dims.d;
        let n = problem.dims.n;
        let nd = problem.nd();
        let mut fy = [0.0; MAX_ND];
        problem.drift_into(s, y, &mut fy[..nd]);
        let ay = problem.diffusion(s, y);
        let mut delta1 = 0.0;
        for a in 0..d {
            let df = fy[a] - self.f_theta[a];
            if df != 0.0 {
                delta1 += df * field.derivative(s, y, &[a])?;
            }
        }
        for a in 0..d {
            for b in 0..d {
                let da = ay[(a, b)] - self.a_theta[(a, b)];
                if da != 0.0 {
                    delta1 += 0.5 * da * field.derivative(s, y, &[a, b])?;
                }
            }
        }
        let mut delta_i = Vec::with_capacity(n.saturating_sub(1));
        for i in 1..n {
            let jac = &self.jac[i - 1];
            let mut acc = 0.0;
            for r in 0..d {
                let k = i * d + r;
                let mut rem = fy[k] - self.f_theta[k];
                for c in 0..d {
                    let j = (i - 1) * d + c;
                    rem -= jac[(r, c)] * (y[j] - self.theta[j]);
                }
                if rem != 0.0 {
                    acc += rem * field.derivative(s, y, &[k])?;
                }
            }
            delta_i.push(acc);
        }
        Ok(PerturbationTerms { delta1, delta_i })
    }
}

/// `(L_s - L~_s^{(tau, xi)}) u(s, y)` with `u` read from `u_field`.
///
/// `y` must sit at least one grid step inside the box so the finite
/// differences stay on grid data.
pub fn perturbation_residual(problem: &ChainProblem, proxy: &FrozenProxy, u_field: &SampledField, s: f64, y: &[f64]) -> Result<PerturbationTerms> {
    problem.dims.check_len(y)?;
    if !u_field.in_interior(y, 1.0) {
        return Err(Error::Extrapolation(format!("point {y:?} is within one step of the grid boundary")));
    }
    let theta = proxy.theta(s);
    Linearization::at(problem, s, theta.as_slice()).terms(problem, u_field, s, y)
}

/// Spatial box and resolution of a solver grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Points per coordinate.
    pub points: Vec<usize>,
    /// Time intervals on `[t_start, T]` (per segment when chaining).
    pub time_steps: usize,
    #[serde(default)]
    pub t_start: f64,
}

impl GridSpec {
    /// Cube `[-half, half]^nd` with `points` per axis.
    pub fn cube(nd: usize, half: f64, points: usize, time_steps: usize) -> Self {
        Self { lo: vec![-half; nd], hi: vec![half; nd], points: vec![points; nd], time_steps, t_start: 0.0 }
    }

    pub fn axes(&self, nd: usize) -> Result<Vec<Axis>> {
        if self.lo.len() != nd || self.hi.len() != nd || self.points.len() != nd {
            return Err(Error::config("grid", format!("lo, hi and points need {nd} entries")));
        }
        (0..nd).map(|k| Axis::new(self.lo[k], self.hi[k], self.points[k])).collect()
    }

    fn validate(&self, nd: usize) -> Result<()> {
        self.axes(nd)?;
        if self.time_steps == 0 {
            return Err(Error::config("grid.time_steps", "must be positive"));
        }
        Ok(())
    }
}

/// Picard and quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Gauss–Legendre nodes in `r` for the time integrals.
    pub time_nodes: usize,
    /// Gauss–Hermite nodes per dimension for `P~g` and `G~f`.
    pub gh_nodes: usize,
    /// Gauss–Hermite nodes per dimension for the remainder.
    pub remainder_gh_nodes: usize,
    pub proxy: ProxyConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 30,
            time_nodes: 16,
            gh_nodes: 12,
            remainder_gh_nodes: 6,
            proxy: ProxyConfig { steps: 64, cov_nodes: 16 },
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config("solver.tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("solver.max_iter", "must be positive"));
        }
        if self.time_nodes == 0 || self.gh_nodes == 0 || self.remainder_gh_nodes == 0 {
            return Err(Error::config("solver", "node counts must be positive"));
        }
        Ok(())
    }
}

/// Solved field with its convergence record.
#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub field: SampledField,
    /// Sup-change per Picard sweep.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Interpolation queries answered outside the box.
    pub extrapolations: usize,
}

/// One quadrature stage of the time integral for a grid node.
struct Stage {
    s: f64,
    weight: f64,
    mean: Vec<f64>,
    chol: DMatrix<f64>,
    lin: Linearization,
}

struct NodePlan {
    base: f64,
    stages: Vec<Stage>,
}

type Terminal<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

#[allow(clippy::too_many_arguments)]
fn plan_node(
    problem: &ChainProblem,
    terminal: Terminal<'_>,
    t: f64,
    t_end: f64,
    x: &[f64],
    cfg: &SolverConfig,
    main_rule: &TensorRule,
    has_source: bool,
) -> Result<NodePlan> {
    let proxy = FrozenProxy::new(problem, t, x, t_end, cfg.proxy)?;
    let nd = problem.nd();
    let semigroup = proxy.kernel(t, t_end, x)?.expect_with(main_rule, terminal);
    let gl = gauss_legendre(cfg.time_nodes);
    let span = t_end - t;
    let mut stages = Vec::with_capacity(cfg.time_nodes);
    let mut green = 0.0;
    for (&z, &w) in gl.nodes.iter().zip(&gl.weights) {
        let r = 0.5 * (z + 1.0);
        let s = t + span * r * r;
        let weight = 0.5 * w * 2.0 * span * r;
        let cov = proxy.covariance(t, s)?;
        let chol = cholesky_jitter(&cov)?.l();
        let mean = proxy.mean(t, s, x)?;
        if has_source {
            let mut y = vec![0.0; nd];
            let mut acc = 0.0;
            for k in 0..main_rule.len() {
                gaussian_point(mean.as_slice(), &chol, main_rule.node(k), &mut y);
                acc += main_rule.weights[k] * problem.source(s, &y);
            }
            green += weight * acc;
        }
        let theta = proxy.theta(s);
        stages.push(Stage { s, weight, mean: mean.as_slice().to_vec(), chol, lin: Linearization::at(problem, s, theta.as_slice()) });
    }
    Ok(NodePlan { base: semigroup + green, stages })
}

fn gaussian_point(mean: &[f64], chol: &DMatrix<f64>, z: &[f64], out: &mut [f64]) {
    for i in 0..mean.len() {
        let mut v = mean[i];
        for j in 0..=i {
            v += chol[(i, j)] * z[j];
        }
        out[i] = v;
    }
}

fn remainder(plan: &NodePlan, problem: &ChainProblem, field: &SampledField, rule: &TensorRule) -> Result<f64> {
    let mut y = vec![0.0; problem.nd()];
    let mut total = 0.0;
    for st in &plan.stages {
        let mut acc = 0.0;
        for k in 0..rule.len() {
            gaussian_point(&st.mean, &st.chol, rule.node(k), &mut y);
            acc += rule.weights[k] * st.lin.terms(problem, field, st.s, &y)?.total();
        }
        total += st.weight * acc;
    }
    Ok(total)
}

fn solve_window(
    problem: &ChainProblem,
    terminal: Terminal<'_>,
    t_start: f64,
    t_end: f64,
    grid: &GridSpec,
    cfg: &SolverConfig,
    segment: Option<usize>,
) -> Result<PicardSolution> {
    let nd = problem.nd();
    grid.validate(nd)?;
    cfg.validate()?;
    if !(t_start < t_end) {
        return Err(Error::Ordering(format!("solver window [{t_start}, {t_end}] is empty")));
    }
    let axes = grid.axes(nd)?;
    let nt = grid.time_steps + 1;
    let times: Vec<f64> = (0..nt)
        .map(|k| if k + 1 == nt { t_end } else { t_start + (t_end - t_start) * k as f64 / grid.time_steps as f64 })
        .collect();
    let mut field = SampledField::zeros(problem.dims, times.clone(), axes)?;
    let sl = field.space_len();
    let main_rule = TensorRule::new(&gauss_hermite(cfg.gh_nodes), nd, TENSOR_BUDGET)?;
    let rem_rule = TensorRule::new(&gauss_hermite(cfg.remainder_gh_nodes), nd, TENSOR_BUDGET)?;
    let has_source = !problem.source_spec.as_ref().is_some_and(|f| f.is_zero());

    let last = nt - 1;
    for k in 0..sl {
        let x = field.node(k);
        field.values[last * sl + k] = terminal(&x);
    }
    let nodes: Vec<(usize, usize)> = (0..last).flat_map(|ti| (0..sl).map(move |k| (ti, k))).collect();
    let plans: Vec<NodePlan> = nodes
        .par_iter()
        .map(|&(ti, k)| plan_node(problem, terminal, times[ti], t_end, &field.node(k), cfg, &main_rule, has_source))
        .collect::<Result<_>>()?;
    for (&(ti, k), p) in nodes.iter().zip(&plans) {
        field.values[ti * sl + k] = p.base;
    }

    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        field.reset_extrapolations();
        let next: Vec<f64> = nodes
            .par_iter()
            .zip(plans.par_iter())
            .map(|(_, p)| Ok(p.base + remainder(p, problem, &field, &rem_rule)?))
            .collect::<Result<_>>()?;
        let mut change = 0.0f64;
        for (&(ti, k), v) in nodes.iter().zip(next) {
            if !v.is_finite() {
                history.push(f64::INFINITY);
                return Err(Error::NonConvergence { segment, history });
            }
            let slot = &mut field.values[ti * sl + k];
            change = change.max((v - *slot).abs());
            *slot = v;
        }
        history.push(change);
        if change < cfg.tol {
            converged = true;
            break;
        }
        let h = &history;
        if h.len() >= 4 && (1..4).all(|j| h[h.len() - j] > h[h.len() - j - 1]) {
            return Err(Error::NonConvergence { segment, history });
        }
    }
    let extrapolations = field.extrapolations();
    Ok(PicardSolution { iterations: history.len(), field, history, converged, extrapolations })
}

/// Solves the Cauchy problem on `[grid.t_start, T]` by Picard iteration.
pub fn parametrix_solve(problem: &ChainProblem, grid: &GridSpec, cfg: &SolverConfig) -> Result<PicardSolution> {
    let g = problem.terminal.clone();
    solve_window(problem, &move |x: &[f64]| g(x), grid.t_start, problem.dims.horizon, grid, cfg, None)
}

/// Chained solution over `segments` equal time segments.
#[derive(Debug, Clone)]
pub struct ChainedSolution {
    pub field: SampledField,
    /// Per segment, from the last segment in time to the first.
    pub segments: Vec<PicardSolution>,
}

impl ChainedSolution {
    pub fn iterations(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.iterations).collect()
    }
}

/// Solves backward over `segments` windows, each fed by the previous one.
///
/// `grid.time_steps` applies per segment. Segment `k` (one-based) covers
/// `[T - k h, T - (k-1) h]` with `h = (T - t_start) / segments`.
pub fn time_chained_solve(problem: &ChainProblem, segments: usize, grid: &GridSpec, cfg: &SolverConfig) -> Result<ChainedSolution> {
    if segments == 0 {
        return Err(Error::config("chaining.segments", "must be positive"));
    }
    let horizon = problem.dims.horizon;
    let t0 = grid.t_start;
    let edge = |k: usize| if k == segments { t0 } else { horizon - (horizon - t0) * k as f64 / segments as f64 };
    let mut solved: Vec<PicardSolution> = Vec::with_capacity(segments);
    for k in 1..=segments {
        let (a, b) = (edge(k), edge(k - 1));
        let sol = match solved.last() {
            None => {
                let g = problem.terminal.clone();
                solve_window(problem, &move |x: &[f64]| g(x), a, b, grid, cfg, Some(k))?
            }
            Some(prev) => {
                let pf = &prev.field;
                solve_window(problem, &|x: &[f64]| pf.interp_slice(0, x), a, b, grid, cfg, Some(k))?
            }
        };
        solved.push(sol);
    }
    // assemble forward in time; shared edges come from the earlier segment
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, seg) in solved.iter().rev().enumerate() {
        let f = &seg.field;
        let skip = usize::from(idx > 0);
        for ti in skip..f.times.len() {
            times.push(f.times[ti]);
            values.extend_from_slice(f.slice(ti));
        }
    }
    let mut field = SampledField::zeros(problem.dims, times, solved[0].field.axes.clone())?;
    field.values = values;
    Ok(ChainedSolution { field, segments: solved })
}
