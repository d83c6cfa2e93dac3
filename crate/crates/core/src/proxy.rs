//! Frozen Gaussian proxy: flow, resolvent, covariance, mean and density.
//!
//! For a freezing pair `(tau, xi)` the proxy linearizes the drift along the
//! deterministic flow `theta_{v,tau}(xi)` and freezes the diffusion there.
//! Its transition law is Gaussian with mean `m_{s,t}(x)` and covariance
//! `K_{s,t}`; the mean is affine in `x` with slope `R(s,t)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::anisotropy::{quasi_distance_unchecked, ScaleMatrix};
use crate::error::{Error, Result};
use crate::model::ChainProblem;
use crate::quadrature::{gauss_hermite, gauss_legendre_on, Halton, TensorRule, TENSOR_BUDGET};
use crate::stats::sym_eigenvalues;

/// Integration settings for a proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ProxyConfig {
    /// RK4 steps over the freezing window.
    pub steps: usize,
    /// Gauss–Legendre nodes for the covariance integral.
    pub cov_nodes: usize,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self { steps: 256, cov_nodes: 32 }
    }
}

/// Fixed-step RK4 path with cubic Hermite dense output.
#[derive(Debug, Clone)]
pub struct FlowPath {
    pub t0: f64,
    pub t1: f64,
    h: f64,
    states: Vec<DVector<f64>>,
    slopes: Vec<DVector<f64>>,
}

fn hermite(h: f64, s: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * d1
}

impl FlowPath {
    fn locate(&self, v: f64) -> (usize, f64) {
        if self.states.len() == 1 || self.h == 0.0 {
            return (0, 0.0);
        }
        let r = ((v - self.t0) / self.h).clamp(0.0, (self.states.len() - 1) as f64);
        let k = (r.floor() as usize).min(self.states.len() - 2);
        (k, r - k as f64)
    }

    /// Value at `v` in `[t0, t1]`.
    pub fn eval(&self, v: f64) -> DVector<f64> {
        let (k, s) = self.locate(v);
        if self.states.len() == 1 {
            return self.states[0].clone();
        }
        let (a, b) = (&self.states[k], &self.states[k + 1]);
        let (da, db) = (&self.slopes[k], &self.slopes[k + 1]);
        DVector::from_fn(a.len(), |i, _| hermite(self.h, s, a[i], b[i], da[i], db[i]))
    }

    pub fn end(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

fn check_window(problem: &ChainProblem, tau: f64, t_end: f64) -> Result<()> {
    if !(tau <= t_end) || !tau.is_finite() || !t_end.is_finite() {
        return Err(Error::Ordering(format!("flow window [{tau}, {t_end}] is empty or reversed")));
    }
    if t_end > problem.dims.horizon * (1.0 + 1e-12) {
        return Err(Error::Ordering(format!("flow end {t_end} exceeds the horizon {}", problem.dims.horizon)));
    }
    Ok(())
}

/// `theta_{v,tau}(xi)` on `[tau, t_end]` by RK4 with `steps` steps.
pub fn solve_flow(problem: &ChainProblem, tau: f64, xi: &[f64], t_end: f64, steps: usize) -> Result<FlowPath> {
    problem.dims.check_len(xi)?;
    check_window(problem, tau, t_end)?;
    if steps < 16 {
        return Err(Error::config("proxy.steps", "need at least 16 RK4 steps"));
    }
    let nd = problem.nd();
    let f = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let mut out = DVector::zeros(nd);
        problem.drift_into(t, x.as_slice(), out.as_mut_slice());
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("drift is not finite at t={t}")));
        }
        Ok(out)
    };
    let h = (t_end - tau) / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    let mut slopes = Vec::with_capacity(steps + 1);
    let mut x = DVector::from_column_slice(xi);
    let mut t = tau;
    let mut k1 = f(t, &x)?;
    states.push(x.clone());
    slopes.push(k1.clone());
    for _ in 0..steps {
        let k2 = f(t + 0.5 * h, &(&x + &k1 * (0.5 * h)))?;
        let k3 = f(t + 0.5 * h, &(&x + &k2 * (0.5 * h)))?;
        let k4 = f(t + h, &(&x + &k3 * h))?;
        x += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        t += h;
        k1 = f(t, &x)?;
        states.push(x.clone());
        slopes.push(k1.clone());
    }
    Ok(FlowPath { t0: tau, t1: t_end, h, states, slopes })
}

/// The frozen proxy for one freezing pair.
#[derive(Clone)]
pub struct FrozenProxy {
    problem: ChainProblem,
    pub tau: f64,
    pub xi: Vec<f64>,
    pub t_end: f64,
    flow: FlowPath,
    /// `Phi(v) = R(v, tau)` at the RK nodes, row-major `nd x nd`, with slopes.
    phi: Vec<DMatrix<f64>>,
    phi_slope: Vec<DMatrix<f64>>,
    cfg: ProxyConfig,
}

impl std::fmt::Debug for FrozenProxy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrozenProxy").field("tau", &self.tau).field("xi", &self.xi).field("t_end", &self.t_end).finish()
    }
}

impl FrozenProxy {
    /// Builds the flow and resolvent on `[tau, t_end]`.
    pub fn new(problem: &ChainProblem, tau: f64, xi: &[f64], t_end: f64, cfg: ProxyConfig) -> Result<Self> {
        problem.dims.check_len(xi)?;
        check_window(problem, tau, t_end)?;
        if cfg.steps < 16 {
            return Err(Error::config("proxy.steps", "need at least 16 RK4 steps"));
        }
        if cfg.cov_nodes == 0 {
            return Err(Error::config("proxy.cov_nodes", "must be positive"));
        }
        let nd = problem.nd();
        let steps = cfg.steps;
        let h = (t_end - tau) / steps as f64;
        // joint RK4 for (theta, Phi)
        let rhs = |t: f64, x: &DVector<f64>, p: &DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
            let mut fx = DVector::zeros(nd);
            problem.drift_into(t, x.as_slice(), fx.as_mut_slice());
            if fx.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("drift is not finite at t={t}")));
            }
            let df = problem.subdiagonal_jacobian(t, x.as_slice());
            Ok((fx, df * p))
        };
        let mut x = DVector::from_column_slice(xi);
        let mut p = DMatrix::identity(nd, nd);
        let mut t = tau;
        let (mut kx1, mut kp1) = rhs(t, &x, &p)?;
        let mut states = vec![x.clone()];
        let mut slopes = vec![kx1.clone()];
        let mut phi = vec![p.clone()];
        let mut phi_slope = vec![kp1.clone()];
        for _ in 0..steps {
            let (kx2, kp2) = rhs(t + 0.5 * h, &(&x + &kx1 * (0.5 * h)), &(&p + &kp1 * (0.5 * h)))?;
            let (kx3, kp3) = rhs(t + 0.5 * h, &(&x + &kx2 * (0.5 * h)), &(&p + &kp2 * (0.5 * h)))?;
            let (kx4, kp4) = rhs(t + h, &(&x + &kx3 * h), &(&p + &kp3 * h))?;
            x += (&kx1 + &kx2 * 2.0 + &kx3 * 2.0 + &kx4) * (h / 6.0);
            p += (&kp1 + &kp2 * 2.0 + &kp3 * 2.0 + &kp4) * (h / 6.0);
            t += h;
            let next = rhs(t, &x, &p)?;
            kx1 = next.0;
            kp1 = next.1;
            states.push(x.clone());
            slopes.push(kx1.clone());
            phi.push(p.clone());
            phi_slope.push(kp1.clone());
        }
        Ok(Self {
            problem: problem.clone(),
            tau,
            xi: xi.to_vec(),
            t_end,
            flow: FlowPath { t0: tau, t1: t_end, h, states, slopes },
            phi,
            phi_slope,
            cfg,
        })
    }

    pub fn problem(&self) -> &ChainProblem {
        &self.problem
    }

    pub fn config(&self) -> ProxyConfig {
        self.cfg
    }

    pub fn flow(&self) -> &FlowPath {
        &self.flow
    }

    fn check_times(&self, t: f64, s: f64) -> Result<()> {
        let eps = 1e-12 * (1.0 + self.t_end.abs());
        if t < self.tau - eps || s > self.t_end + eps || t > s + eps {
            return Err(Error::Ordering(format!(
                "times ({t}, {s}) must satisfy tau={} <= t <= s <= {}",
                self.tau, self.t_end
            )));
        }
        Ok(())
    }

    /// `theta_{v,tau}(xi)`.
    pub fn theta(&self, v: f64) -> DVector<f64> {
        self.flow.eval(v)
    }

    fn phi_at(&self, v: f64) -> DMatrix<f64> {
        let (k, s) = self.flow.locate(v);
        if self.phi.len() == 1 {
            return self.phi[0].clone();
        }
        let h = self.flow.h;
        let (a, b) = (&self.phi[k], &self.phi[k + 1]);
        let (da, db) = (&self.phi_slope[k], &self.phi_slope[k + 1]);
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| hermite(h, s, a[(i, j)], b[(i, j)], da[(i, j)], db[(i, j)]))
    }

    fn phi_inv_at(&self, v: f64) -> DMatrix<f64> {
        let p = self.phi_at(v);
        // unit lower block-triangular: always invertible
        p.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(p.nrows(), p.ncols()))
    }

    /// `R(s,t)`, the resolvent of the subdiagonal Jacobian along the flow.
    pub fn resolvent(&self, t: f64, s: f64) -> Result<DMatrix<f64>> {
        self.check_times(t, s)?;
        if t == s {
            return Ok(DMatrix::identity(self.problem.nd(), self.problem.nd()));
        }
        Ok(self.phi_at(s) * self.phi_inv_at(t))
    }

    /// `m_{s,t}(x) = theta_s + R(s,t)(x - theta_t)`.
    pub fn mean(&self, t: f64, s: f64, x: &[f64]) -> Result<DVector<f64>> {
        self.problem.dims.check_len(x)?;
        let r = self.resolvent(t, s)?;
        let th_t = self.theta(t);
        let th_s = self.theta(s);
        Ok(th_s + r * (DVector::from_column_slice(x) - th_t))
    }

    /// `K_{s,t} = int_t^s R(s,u) B a(u, theta_u) B* R(s,u)* du`.
    pub fn covariance(&self, t: f64, s: f64) -> Result<DMatrix<f64>> {
        self.check_times(t, s)?;
        if !(s > t) {
            return Err(Error::Ordering(format!("covariance needs s > t, got t={t}, s={s}")));
        }
        self.covariance_with(t, s, self.cfg.cov_nodes)
    }

    /// Covariance with an explicit node count.
    pub fn covariance_with(&self, t: f64, s: f64, nodes: usize) -> Result<DMatrix<f64>> {
        let nd = self.problem.nd();
        let d = self.problem.dims.d;
        let rule = gauss_legendre_on(nodes, t, s);
        let phi_s = self.phi_at(s);
        let mut inner = DMatrix::zeros(nd, nd);
        for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
            let th = self.theta(u);
            let a = self.problem.diffusion(u, th.as_slice());
            let pinv = self.phi_inv_at(u);
            // Phi(u)^{-1} B: first d columns
            let pb = pinv.columns(0, d).into_owned();
            inner += (&pb * &a * pb.transpose()) * w;
        }
        let k = &phi_s * inner * phi_s.transpose();
        Ok((&k + k.transpose()) * 0.5)
    }

    /// Gaussian transition kernel from `(t, x)` to time `s`.
    pub fn kernel(&self, t: f64, s: f64, x: &[f64]) -> Result<GaussianKernel> {
        let k = self.covariance(t, s)?;
        let mean = self.mean(t, s, x)?;
        let r = self.resolvent(t, s)?;
        GaussianKernel::new(mean, k, r)
    }

    /// `p(t,s,x,y)` or its `x`-derivative along `coords` (at most three).
    pub fn density(&self, t: f64, s: f64, x: &[f64], y: &[f64], coords: &[usize]) -> Result<f64> {
        self.problem.dims.check_len(y)?;
        self.kernel(t, s, x)?.derivative(y, coords)
    }

    /// Eigenvalue range of `(s-t) T_{s-t}^{-1} K T_{s-t}^{-1}`.
    pub fn gsp(&self, t: f64, s: f64) -> Result<(f64, f64)> {
        let k = self.covariance(t, s)?;
        let (lo, hi) = gsp_eigen(&k, s - t, self.problem.dims.n, self.problem.dims.d)?;
        Ok((lo, hi))
    }
}

/// Eigenvalue range of the rescaled covariance.
pub fn gsp_eigen(k: &DMatrix<f64>, delta: f64, n: usize, d: usize) -> Result<(f64, f64)> {
    let ti = ScaleMatrix::new(delta, n, d)?.to_matrix(true);
    let m = &ti * k * &ti * delta;
    let ev = sym_eigenvalues(&m);
    if ev[0] < -1e-10 * ev.last().unwrap().abs() {
        return Err(Error::Numerical(format!("covariance is not positive semidefinite (eigenvalue {:.3e})", ev[0])));
    }
    Ok((ev[0], *ev.last().unwrap()))
}

/// Gaussian kernel `y -> N(mean, cov)(y)` seen as a function of the start `x`
/// through the affine mean with slope `r`.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub r: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    cov_inv: DMatrix<f64>,
    /// `R^T K^{-1}`.
    rtk: DMatrix<f64>,
    /// `R^T K^{-1} R`.
    g: DMatrix<f64>,
    log_norm: f64,
}

/// Cholesky factor with the documented jitter fallback.
pub fn cholesky_jitter(k: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok(c);
    }
    let jitter = 1e-12 * k.trace().abs();
    let n = k.nrows();
    Cholesky::new(k + DMatrix::identity(n, n) * jitter)
        .ok_or_else(|| Error::Numerical("covariance is singular beyond jitter".into()))
}

impl GaussianKernel {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let nd = mean.len();
        let chol = cholesky_jitter(&cov)?;
        let chol_l = chol.l();
        let cov_inv = chol.inverse();
        let rtk = r.transpose() * &cov_inv;
        let g = &rtk * &r;
        let log_det: f64 = chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let log_norm = -0.5 * nd as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        Ok(Self { mean, cov, r, chol_l, cov_inv, rtk, g, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let z = &self.mean - DVector::from_column_slice(y);
        let q = z.dot(&(&self.cov_inv * &z));
        (self.log_norm - 0.5 * q).exp()
    }

    /// Value at the mean.
    pub fn peak(&self) -> f64 {
        self.log_norm.exp()
    }

    /// `D_x^coords p / p` as a polynomial in `v = R^T K^{-1}(m - y)`.
    pub fn hermite_factor(v: &DVector<f64>, g: &DMatrix<f64>, coords: &[usize]) -> Result<f64> {
        Ok(match *coords {
            [] => 1.0,
            [a] => -v[a],
            [a, b] => v[a] * v[b] - g[(a, b)],
            [a, b, c] => -v[a] * v[b] * v[c] + g[(a, b)] * v[c] + g[(a, c)] * v[b] + g[(b, c)] * v[a],
            _ => return Err(Error::Unsupported(format!("density derivative of order {}", coords.len()))),
        })
    }

    pub fn g_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// `R^T K^{-1} (m - y)`.
    pub fn v_vector(&self, y: &[f64]) -> DVector<f64> {
        &self.rtk * (&self.mean - DVector::from_column_slice(y))
    }

    /// `D_x^coords p(y)`.
    pub fn derivative(&self, y: &[f64], coords: &[usize]) -> Result<f64> {
        if coords.iter().any(|&c| c >= self.dim()) {
            return Err(Error::Shape { expected: self.dim(), got: coords.iter().max().copied().unwrap_or(0) + 1 });
        }
        let v = self.v_vector(y);
        Ok(Self::hermite_factor(&v, &self.g, coords)? * self.value(y))
    }

    /// `E[psi(Y)]` by whitened tensor Gauss–Hermite with `q` nodes per dimension.
    pub fn expect(&self, q: usize, psi: impl FnMut(&[f64]) -> f64) -> Result<f64> {
        let rule = TensorRule::new(&gauss_hermite(q), self.dim(), TENSOR_BUDGET)?;
        Ok(self.expect_with(&rule, psi))
    }

    /// `E[psi(Y)]` with a prebuilt standard-normal tensor rule.
    pub fn expect_with(&self, rule: &TensorRule, mut psi: impl FnMut(&[f64]) -> f64) -> f64 {
        let nd = self.dim();
        let mut y = vec![0.0; nd];
        let mut acc = 0.0;
        for k in 0..rule.len() {
            let w = rule.node(k);
            for i in 0..nd {
                let mut v = self.mean[i];
                for j in 0..=i {
                    v += self.chol_l[(i, j)] * w[j];
                }
                y[i] = v;
            }
            acc += rule.weights[k] * psi(&y);
        }
        acc
    }

    /// `int D_x^coords p(y) psi(y) dy`, exact for polynomial `psi` of moderate degree.
    pub fn integrate_derivative(&self, q: usize, coords: &[usize], mut psi: impl FnMut(&[f64]) -> f64) -> Result<f64> {
        let g = self.g.clone();
        let mut err = None;
        let val = self.expect(q, |y| {
            let v = self.v_vector(y);
            match Self::hermite_factor(&v, &g, coords) {
                Ok(h) => h * psi(y),
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(val),
        }
    }

    /// `sup_y |D^coords p(y)| * weight(y)`, searched in whitened coordinates.
    pub fn sup_derivative_weighted(&self, coords: &[usize], weight: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        let nd = self.dim();
        let mut y = vec![0.0; nd];
        let mut objective = |w: &[f64]| -> f64 {
            for i in 0..nd {
                let mut v = self.mean[i];
                for j in 0..=i {
                    v += self.chol_l[(i, j)] * w[j];
                }
                y[i] = v;
            }
            let v = self.v_vector(&y);
            let hf = Self::hermite_factor(&v, &self.g, coords).unwrap_or(0.0);
            let r2: f64 = w.iter().map(|a| a * a).sum();
            (hf * (self.log_norm - 0.5 * r2).exp()).abs() * weight(&y)
        };
        let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut w = vec![0.0; nd];
        if nd <= 3 {
            let m = 33usize;
            let total = m.pow(nd as u32);
            for k in 0..total {
                let mut r = k;
                for slot in w.iter_mut() {
                    *slot = -4.0 + 8.0 * (r % m) as f64 / (m - 1) as f64;
                    r /= m;
                }
                starts.push((objective(&w), w.clone()));
            }
        } else {
            let seq = Halton::new(nd, 7);
            for k in 0..8192 {
                seq.point(k, &mut w);
                for slot in w.iter_mut() {
                    *slot = -4.0 + 8.0 * *slot;
                }
                starts.push((objective(&w), w.clone()));
            }
        }
        starts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = 0.0f64;
        for (f0, w0) in starts.into_iter().take(4) {
            let mut cur = w0;
            let mut fc = f0;
            let mut step = 0.25;
            while step > 1e-7 {
                let mut improved = false;
                for i in 0..nd {
                    for sgn in [1.0, -1.0] {
                        let old = cur[i];
                        cur[i] = old + sgn * step;
                        let f = objective(&cur);
                        if f > fc {
                            fc = f;
                            improved = true;
                        } else {
                            cur[i] = old;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best = best.max(fc);
        }
        Ok(best)
    }

    /// `sup_y |D^coords p(y)|`.
    pub fn sup_derivative(&self, coords: &[usize]) -> Result<f64> {
        self.sup_derivative_weighted(coords, &|_| 1.0)
    }
}

/// Coordinates of a block multi-index `(theta_1, ..., theta_n)`, using the first
/// component of each block.
pub fn block_multi_index(theta: &[usize], d: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, &k) in theta.iter().enumerate() {
        out.extend(std::iter::repeat_n(i * d, k));
    }
    out
}

/// Predicted time exponent `-(sum theta_i (i - 1/2) + n^2 d / 2)`.
pub fn derivative_time_exponent(theta: &[usize], n: usize, d: usize) -> f64 {
    let s: f64 = theta.iter().enumerate().map(|(i, &k)| k as f64 * (i as f64 + 0.5)).sum();
    -(s + (n * n * d) as f64 / 2.0)
}

/// Max residuals of the five cancellation identities.
#[derive(Debug, Clone, Serialize)]
pub struct MomentResiduals {
    /// `int p (y-m)_1^{(x)2} - K_11`.
    pub covariance_block: f64,
    /// `int D^2_{x_1} p (y-m)_1`.
    pub centered_second: f64,
    /// `int D_{x_k} D^2_{x_1} p (y-m)_1`.
    pub centered_third: f64,
    /// `int D^2_{x_1} p Tr(M (y-m)_1^{(x)2}) - 2M`.
    pub trace_second: f64,
    /// `int D_{x_k} D^2_{x_1} p Tr(M (y-m)_1^{(x)2})`.
    pub trace_third: f64,
}

impl MomentResiduals {
    pub fn max(&self) -> f64 {
        [self.covariance_block, self.centered_second, self.centered_third, self.trace_second, self.trace_third]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Evaluates the cancellation identities by Gauss–Hermite with `q` nodes.
///
/// `m` stays frozen at `m_{s,t}(x)` inside the integrands. `sym_m` must be a
/// symmetric `d x d` matrix; for non-symmetric `M` the trace identity yields `M + M^T`.
pub fn moment_identity_check(proxy: &FrozenProxy, t: f64, s: f64, x: &[f64], q: usize, sym_m: &DMatrix<f64>) -> Result<MomentResiduals> {
    let d = proxy.problem.dims.d;
    let nd = proxy.problem.nd();
    if sym_m.nrows() != d || sym_m.ncols() != d {
        return Err(Error::Shape { expected: d * d, got: sym_m.len() });
    }
    let kern = proxy.kernel(t, s, x)?;
    let m = kern.mean.clone();
    let mut res = MomentResiduals { covariance_block: 0.0, centered_second: 0.0, centered_third: 0.0, trace_second: 0.0, trace_third: 0.0 };
    let trace_form = |y: &[f64]| -> f64 {
        let mut acc = 0.0;
        for a in 0..d {
            for b in 0..d {
                acc += sym_m[(a, b)] * (y[a] - m[a]) * (y[b] - m[b]);
            }
        }
        acc
    };
    for a in 0..d {
        for b in 0..d {
            let v = kern.integrate_derivative(q, &[], |y| (y[a] - m[a]) * (y[b] - m[b]))?;
            res.covariance_block = res.covariance_block.max((v - kern.cov[(a, b)]).abs());
            for c in 0..d {
                let v = kern.integrate_derivative(q, &[a, b], |y| y[c] - m[c])?;
                res.centered_second = res.centered_second.max(v.abs());
                for k in 0..nd {
                    let v = kern.integrate_derivative(q, &[k, a, b], |y| y[c] - m[c])?;
                    res.centered_third = res.centered_third.max(v.abs());
                }
            }
            let v = kern.integrate_derivative(q, &[a, b], trace_form)?;
            res.trace_second = res.trace_second.max((v - 2.0 * sym_m[(a, b)]).abs());
            for k in 0..nd {
                let v = kern.integrate_derivative(q, &[k, a, b], trace_form)?;
                res.trace_third = res.trace_third.max(v.abs());
            }
        }
    }
    Ok(res)
}

/// `sup_y d(m, y)^beta |D^coords p|` for a kernel over a gap `delta`.
///
/// The quasi-distance is taken between the unscaled mean and `y`; each block
/// of `y - m` has size `delta^{i-1/2}`, so the weight is of order `delta^{beta/2}`.
pub fn sup_offdiagonal_weighted(kern: &GaussianKernel, delta: f64, n: usize, d: usize, beta: f64, coords: &[usize]) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("gap must be positive, got {delta}")));
    }
    if kern.dim() != n * d {
        return Err(Error::Shape { expected: n * d, got: kern.dim() });
    }
    let m: Vec<f64> = kern.mean.iter().copied().collect();
    let weight = move |y: &[f64]| -> f64 { quasi_distance_unchecked(&m, y, d).powf(beta) };
    kern.sup_derivative_weighted(coords, &weight)
}
