//! Thermic Besov norms of sampled 1-D functions and the decay diagnostic of
//! the degenerate perturbation terms.
//!
//! Samples are read as piecewise-linear functions, zero outside the grid.
//! Convolution with the heat kernel `h_v` (variance `v`) is then exact:
//! every segment contributes closed-form normal CDF and density terms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChainProblem;
use crate::proxy::{block_multi_index, FrozenProxy, ProxyConfig};
use crate::quadrature::gauss_legendre_on;
use crate::report::DiagnosticReport;
use crate::solver::SampledField;
use crate::stats::linear_fit;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
/// Segments farther than this many standard deviations are dropped.
const WINDOW: f64 = 9.0;
/// Values above this are reported as a divergent tail.
pub const DIVERGENCE_CAP: f64 = 1e12;

fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Uniformly sampled function `values[k] = f(lo + k h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampled1d {
    pub lo: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

impl Sampled1d {
    pub fn new(lo: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || !lo.is_finite() {
            return Err(Error::config("spatial_grid", "step must be positive"));
        }
        if values.len() < 2 {
            return Err(Error::config("spatial_grid", "need at least 2 samples"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("sample has non-finite values".into()));
        }
        Ok(Self { lo, h, values })
    }

    /// Samples `f` on `points` nodes spanning `[lo, hi]`.
    pub fn from_fn(lo: f64, hi: f64, points: usize, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        if points < 2 || !(hi > lo) {
            return Err(Error::config("spatial_grid", "need hi > lo and at least 2 points"));
        }
        let h = (hi - lo) / (points - 1) as f64;
        Self::new(lo, h, (0..points).map(|k| f(lo + h * k as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, k: usize) -> f64 {
        self.lo + self.h * k as f64
    }

    pub fn hi(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Both end values are below `1e-6` times the peak.
    pub fn decays_at_boundary(&self) -> bool {
        let peak = self.max_abs();
        let ends = self.values[0].abs().max(self.values[self.len() - 1].abs());
        ends <= 1e-6 * peak
    }

    /// `L^1` norm of the piecewise-linear interpolant, exact including sign changes.
    pub fn l1(&self) -> f64 {
        piecewise_linear_l1(&self.values, self.h)
    }

    /// `int f`, trapezoid rule (exact for the interpolant).
    pub fn integral(&self) -> f64 {
        let v = &self.values;
        self.h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
    }
}

fn piecewise_linear_l1(values: &[f64], h: f64) -> f64 {
    let mut acc = 0.0;
    for w in values.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a * b >= 0.0 {
            acc += 0.5 * (a.abs() + b.abs());
        } else {
            acc += 0.5 * (a * a + b * b) / (a.abs() + b.abs());
        }
    }
    acc * h
}

/// What is convolved with `h_v`: the interpolant itself or its distributional derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Value,
    Derivative,
}

/// `(h_v * q)(z)` or `(h_v * q')(z)` for the interpolant `q`.
fn convolve_at(sample: &Sampled1d, v: f64, z: f64, mode: Mode) -> f64 {
    let sd = v.sqrt();
    let n = sample.len();
    let (lo, h) = (sample.lo, sample.h);
    let k0 = (((z - WINDOW * sd - lo) / h).floor().max(0.0) as usize).min(n - 1);
    let k1 = (((z + WINDOW * sd - lo) / h).ceil().max(0.0) as usize).min(n - 1);
    let q = &sample.values;
    let mut acc = 0.0;
    let mut prev_cdf = norm_cdf((sample.x(k0) - z) / sd);
    let mut prev_pdf = norm_pdf((sample.x(k0) - z) / sd);
    for j in k0..k1 {
        let b = (sample.x(j + 1) - z) / sd;
        let cdf = norm_cdf(b);
        let pdf = norm_pdf(b);
        let slope = (q[j + 1] - q[j]) / h;
        let mass = cdf - prev_cdf;
        acc += match mode {
            // int (q_j + s (y - y_j)) h_v(z - y) dy over the segment
            Mode::Value => (q[j] + slope * (z - sample.x(j))) * mass + slope * sd * (prev_pdf - pdf),
            Mode::Derivative => slope * mass,
        };
        prev_cdf = cdf;
        prev_pdf = pdf;
    }
    if mode == Mode::Derivative {
        // jumps of q 1_[lo, hi] at the ends
        acc += q[0] * norm_pdf((z - lo) / sd) / sd - q[n - 1] * norm_pdf((z - sample.hi()) / sd) / sd;
    }
    acc
}

/// `h_v * f` on the input grid.
///
/// With `strict`, a sample that does not decay at the grid ends is rejected.
pub fn heat_convolve(sample: &Sampled1d, v: f64, strict: bool) -> Result<Sampled1d> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("heat kernel variance must be positive, got {v}")));
    }
    if strict && !sample.decays_at_boundary() {
        return Err(Error::Numerical("sample does not decay at the grid boundary; convolution is truncated".into()));
    }
    if v.sqrt() < sample.h / 20.0 {
        return Ok(sample.clone());
    }
    let values = (0..sample.len()).map(|k| convolve_at(sample, v, sample.x(k), Mode::Value)).collect();
    Sampled1d::new(sample.lo, sample.h, values)
}

/// Moments `int q(y) (y - c)^m dy`, `m = 0, 1, 2`, of blocks of `per` segments.
///
/// Two-point Gauss-Legendre per segment is exact for these integrands.
fn block_moments(sample: &Sampled1d, per: usize) -> Vec<(f64, [f64; 3])> {
    let q = &sample.values;
    let segs = q.len() - 1;
    let r = 0.5 / 3f64.sqrt();
    let mut out = Vec::with_capacity(segs.div_ceil(per));
    let mut j0 = 0;
    while j0 < segs {
        let j1 = (j0 + per).min(segs);
        let c = 0.5 * (sample.x(j0) + sample.x(j1));
        let mut m = [0.0; 3];
        for j in j0..j1 {
            for e in [0.5 - r, 0.5 + r] {
                let u = sample.x(j) + e * sample.h - c;
                let val = 0.5 * sample.h * (q[j] + e * (q[j + 1] - q[j]));
                m[0] += val;
                m[1] += val * u;
                m[2] += val * u * u;
            }
        }
        out.push((c, m));
        j0 = j1;
    }
    out
}

/// Kernel expanded to second order in `y - c` around each block centre.
///
/// Centres sit at `c_0 + k width` except possibly the shorter last block.
fn convolve_blocks(blocks: &[(f64, [f64; 3])], width: f64, v: f64, z: f64, mode: Mode) -> f64 {
    let sd = v.sqrt();
    let c0 = blocks[0].0;
    let reach = WINDOW * sd + width;
    let last = blocks.len() - 1;
    let k0 = (((z - reach - c0) / width).floor().max(0.0) as usize).min(last);
    let k1 = (((z + reach - c0) / width).ceil().max(0.0) as usize).min(last);
    let mut acc = 0.0;
    for &(c, m) in &blocks[k0..=k1] {
        let w = z - c;
        let h = norm_pdf(w / sd) / sd;
        let (a, b) = (w / v, 1.0 / v);
        acc += h * match mode {
            Mode::Value => m[0] + m[1] * a + 0.5 * m[2] * (a * a - b),
            Mode::Derivative => -a * m[0] - m[1] * (a * a - b) + 0.5 * m[2] * (3.0 * a * b - a * a * a),
        };
    }
    acc
}

/// `||h_v * f||_{L^1}` (or of `h_v * f'`) on an output grid fine enough for the kernel.
///
/// Once the kernel is wider than 16 sample steps, blocks of width at most
/// `sqrt(v)/16` enter through their first three moments.
fn convolved_l1(sample: &Sampled1d, v: f64, mode: Mode) -> f64 {
    let sd = v.sqrt();
    if sd < sample.h / 20.0 {
        return match mode {
            Mode::Value => sample.l1(),
            Mode::Derivative => {
                let jumps = sample.values[0].abs() + sample.values[sample.len() - 1].abs();
                sample.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() + jumps
            }
        };
    }
    let step = sample.h.max(sd / 32.0);
    let lo = sample.lo - 8.0 * sd;
    let hi = sample.hi() + 8.0 * sd;
    let m = ((hi - lo) / step).ceil() as usize + 1;
    let per = (sd / (16.0 * sample.h)).floor() as usize;
    let vals: Vec<f64> = if per >= 1 {
        let blocks = block_moments(sample, per);
        let width = per as f64 * sample.h;
        (0..m).map(|k| convolve_blocks(&blocks, width, v, lo + step * k as f64, mode)).collect()
    } else {
        (0..m).map(|k| convolve_at(sample, v, lo + step * k as f64, mode)).collect()
    };
    piecewise_linear_l1(&vals, step)
}

/// Settings of the thermic norm `B^{-alpha}_{1,1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermicConfig {
    pub alpha_tilde: f64,
    /// Log-spaced nodes on `[v_min, 1]`.
    pub v_nodes: usize,
    pub v_min: f64,
    /// Variance of the Gaussian low-pass multiplier.
    pub lowpass_v: f64,
}

impl Default for ThermicConfig {
    fn default() -> Self {
        Self { alpha_tilde: 5.0 / 6.0, v_nodes: 64, v_min: 1e-6, lowpass_v: 1.0 }
    }
}

impl ThermicConfig {
    pub fn with_alpha(alpha_tilde: f64) -> Self {
        Self { alpha_tilde, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_tilde > 0.0 && self.alpha_tilde.is_finite()) {
            return Err(Error::config("besov.alpha_tilde", "must be positive"));
        }
        if self.v_nodes < 2 {
            return Err(Error::config("besov.v_nodes", "need at least 2 nodes"));
        }
        if !(self.v_min > 0.0 && self.v_min < 1.0) {
            return Err(Error::config("besov.v_min", "must lie in (0, 1)"));
        }
        if !(self.lowpass_v > 0.0) {
            return Err(Error::config("besov.lowpass_v", "must be positive"));
        }
        Ok(())
    }

    /// Strictly increasing log-spaced grid on `[v_min, 1]`.
    pub fn v_grid(&self) -> Vec<f64> {
        log_grid(self.v_min, self.v_nodes)
    }

    /// Grid for a sample of step `h`: extends below `v_min` down to `(h/20)^2`,
    /// where the inner norm stops changing, at the same nodes per decade.
    pub fn v_grid_for(&self, h: f64) -> Vec<f64> {
        let floor = (h / 20.0).powi(2);
        if floor >= self.v_min {
            return self.v_grid();
        }
        let nodes = ((self.v_nodes - 1) as f64 * floor.ln() / self.v_min.ln()).ceil() as usize + 1;
        log_grid(floor, nodes)
    }
}

fn log_grid(v_min: f64, nodes: usize) -> Vec<f64> {
    let a = v_min.ln();
    let m = nodes - 1;
    (0..=m).map(|k| if k == m { 1.0 } else { (a * (1.0 - k as f64 / m as f64)).exp() }).collect()
}

/// Parts of the thermic norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermicNorm {
    pub lowpass: f64,
    /// `int_0^1 v^{alpha/2 - 1} ||h_v * f||_1 dv`, including `endpoint`.
    pub tail: f64,
    pub total: f64,
    /// Contribution of `(0, v_min)` with the inner norm frozen at `v_min`.
    pub endpoint: f64,
    /// `(v, ||h_v * f||_1)` at the grid nodes.
    pub profile: Vec<(f64, f64)>,
}

/// `int_{u_a}^{u_b} e^{c u} (p + q u) du` for the linear model through the endpoints.
fn exp_linear_integral(c: f64, ua: f64, ub: f64, na: f64, nb: f64) -> f64 {
    let du = ub - ua;
    let (ea, eb) = ((c * ua).exp(), (c * ub).exp());
    // int_0^1 e^{c(ua + du r)} (na + (nb - na) r) du dr
    let k = c * du;
    if k.abs() < 1e-8 {
        return du * ea * (0.5 * (na + nb) + k * (na / 6.0 + nb / 3.0));
    }
    let i0 = (eb - ea) / k;
    let i1 = (eb - i0) / k;
    du * (na * i0 + (nb - na) * i1)
}

/// Tail integral of a profile, linear in `log v` between nodes.
fn tail_from_profile(profile: &[(f64, f64)], alpha: f64) -> (f64, f64) {
    let c = alpha / 2.0;
    let mut tail = 0.0;
    for w in profile.windows(2) {
        let (va, na) = w[0];
        let (vb, nb) = w[1];
        tail += exp_linear_integral(c, va.ln(), vb.ln(), na, nb);
    }
    let (v0, n0) = profile[0];
    let endpoint = n0 * v0.powf(c) / c;
    (tail + endpoint, endpoint)
}

fn thermic_norm_mode(sample: &Sampled1d, cfg: &ThermicConfig, mode: Mode) -> Result<ThermicNorm> {
    cfg.validate()?;
    let grid = cfg.v_grid_for(sample.h);
    let inner: Vec<f64> = grid.par_iter().map(|&v| convolved_l1(sample, v, mode)).collect();
    let profile: Vec<(f64, f64)> = grid.into_iter().zip(inner).collect();
    let (mut tail, endpoint) = tail_from_profile(&profile, cfg.alpha_tilde);
    let lowpass = convolved_l1(sample, cfg.lowpass_v, mode);
    if !(tail <= DIVERGENCE_CAP) {
        tail = f64::INFINITY;
    }
    Ok(ThermicNorm { lowpass, tail, total: lowpass + tail, endpoint, profile })
}

/// `B^{-alpha}_{1,1}` thermic quasi-norm of `f`.
pub fn thermic_norm_neg(sample: &Sampled1d, cfg: &ThermicConfig) -> Result<ThermicNorm> {
    thermic_norm_mode(sample, cfg, Mode::Value)
}

/// Same norm for the distributional derivative `f'`.
pub fn thermic_norm_neg_derivative(sample: &Sampled1d, cfg: &ThermicConfig) -> Result<ThermicNorm> {
    thermic_norm_mode(sample, cfg, Mode::Derivative)
}

/// `beta_i = (2i-3)(2i-1)/(2i-3-gamma)` for levels `i >= 2`.
pub fn beta_exponent(i: usize, gamma: f64) -> Result<f64> {
    if i < 2 {
        return Err(Error::Domain("beta exponent is defined for levels i >= 2".into()));
    }
    let a = (2 * i - 3) as f64;
    Ok(a * (2 * i - 1) as f64 / (a - gamma))
}

/// Tail split at `v_split` into `(below, above)` using the same profile model.
pub fn split_tail(norm: &ThermicNorm, alpha: f64, v_split: f64) -> Result<(f64, f64)> {
    let prof = &norm.profile;
    let (v0, _) = prof[0];
    let vmax = prof[prof.len() - 1].0;
    if !(v_split > 0.0 && v_split <= vmax) {
        return Err(Error::Domain(format!("split point {v_split} outside (0, {vmax}]")));
    }
    let c = alpha / 2.0;
    if v_split <= v0 {
        // inside the frozen endpoint piece
        let below = prof[0].1 * v_split.powf(c) / c;
        return Ok((below, norm.tail - below));
    }
    let mut below = norm.endpoint;
    let mut above = 0.0;
    let us = v_split.ln();
    for w in prof.windows(2) {
        let (va, na) = w[0];
        let (vb, nb) = w[1];
        let (ua, ub) = (va.ln(), vb.ln());
        if ub <= us {
            below += exp_linear_integral(c, ua, ub, na, nb);
        } else if ua >= us {
            above += exp_linear_integral(c, ua, ub, na, nb);
        } else {
            let ns = na + (nb - na) * (us - ua) / (ub - ua);
            below += exp_linear_integral(c, ua, us, na, ns);
            above += exp_linear_integral(c, us, ub, ns, nb);
        }
    }
    Ok((below, above))
}

/// `C_b^{alpha}` norm on the grid: sup, derivative sups and the top seminorm.
///
/// Derivatives are central differences; the seminorm is a brute-force pair
/// maximum over at most 2048 evenly strided nodes.
pub fn holder_norm_scalar(sample: &Sampled1d, alpha_tilde: f64) -> Result<f64> {
    if !(alpha_tilde > 0.0 && alpha_tilde < 3.0) {
        return Err(Error::config("alpha_tilde", "must lie in (0, 3)"));
    }
    if alpha_tilde.fract() == 0.0 {
        return Err(Error::Unsupported("integer Hölder order (Zygmund case)".into()));
    }
    let top = alpha_tilde.floor() as usize;
    let frac = alpha_tilde - top as f64;
    let mut derivs = vec![sample.values.clone()];
    for _ in 0..top {
        let prev = derivs.last().unwrap();
        derivs.push(finite_difference(prev, sample.h));
    }
    let mut norm: f64 = derivs.iter().map(|d| d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).sum();
    let g = &derivs[top];
    let stride = g.len().div_ceil(2048).max(1);
    let idx: Vec<usize> = (0..g.len()).step_by(stride).collect();
    let mut semi = 0.0f64;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let dist = sample.h * (j - i) as f64;
            semi = semi.max((g[i] - g[j]).abs() / dist.powf(frac));
        }
    }
    norm += semi;
    Ok(norm)
}

fn finite_difference(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|k| match k {
            0 => (v[1] - v[0]) / h,
            k if k == n - 1 => (v[n - 1] - v[n - 2]) / h,
            k => (v[k + 1] - v[k - 1]) / (2.0 * h),
        })
        .collect()
}

/// `|int f g| / (||g||_{C^alpha} ||f||_{B^{-alpha}_{1,1}})` on a common grid.
pub fn duality_ratio(f: &Sampled1d, g: &Sampled1d, cfg: &ThermicConfig) -> Result<f64> {
    if f.len() != g.len() || (f.lo - g.lo).abs() > 1e-12 || (f.h - g.h).abs() > 1e-12 {
        return Err(Error::Shape { expected: f.len(), got: g.len() });
    }
    let prod = Sampled1d::new(f.lo, f.h, f.values.iter().zip(&g.values).map(|(a, b)| a * b).collect())?;
    let pairing = prod.integral().abs();
    let denom = holder_norm_scalar(g, cfg.alpha_tilde)? * thermic_norm_neg(f, cfg)?.total;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(pairing / denom)
}

/// Settings of the Psi decay profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsiConfig {
    /// Slice points in `y_i`.
    pub points: usize,
    /// Half-width of the slice in standard deviations of block `i`.
    pub width_sd: f64,
    /// Gauss-Legendre nodes per off-block coordinate.
    pub off_nodes: usize,
    /// Half-width of the off-block box in marginal standard deviations.
    pub off_width_sd: f64,
    pub thermic: ThermicConfig,
    pub proxy: ProxyConfig,
}

impl Default for PsiConfig {
    fn default() -> Self {
        Self {
            points: 512,
            width_sd: 12.0,
            off_nodes: 16,
            off_width_sd: 8.0,
            thermic: ThermicConfig::default(),
            proxy: ProxyConfig::default(),
        }
    }
}

/// One row of the Psi profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiPoint {
    pub gap: f64,
    /// `int dy_off ||Psi||_{B^{-alpha}_{1,1}}`.
    pub norm: f64,
    /// Norm of the single slice through `theta_{s,t}(x)`.
    pub center_norm: f64,
    /// `int dy_off |int Psi u(s, .) dy_i|` when a field is given.
    pub pairing: Option<f64>,
}

/// Off-block quadrature: `(points, weights)` of a tensor Gauss-Legendre rule.
fn off_block_rule(center: &[f64], sd: &[f64], nodes: usize, half: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = center.len();
    let per = if m <= 1 { nodes } else { nodes.min((4096f64.powf(1.0 / m as f64)) as usize).max(4) };
    let rules: Vec<_> = (0..m).map(|j| gauss_legendre_on(per, center[j] - half * sd[j], center[j] + half * sd[j])).collect();
    let total = per.pow(m as u32);
    let mut pts = Vec::with_capacity(total);
    let mut wts = Vec::with_capacity(total);
    for mut k in 0..total {
        let mut p = vec![0.0; m];
        let mut w = 1.0;
        for (j, r) in rules.iter().enumerate() {
            let a = k % per;
            k /= per;
            p[j] = r.nodes[a];
            w *= r.weights[a];
        }
        pts.push(p);
        wts.push(w);
    }
    (pts, wts)
}

/// `||Psi||` profile for `Psi = D_{y_i}(D^theta_x p~ Delta_{i,F})` as a function of `y_i`.
///
/// The proxy is frozen at `(t, x)`. For each gap the slice norm is integrated
/// over the off-block variables on a box of `off_width_sd` marginal standard
/// deviations around `theta_{s,t}(x)`. Supports `d = 1`.
#[allow(clippy::too_many_arguments)]
pub fn psi_besov_profile(
    problem: &ChainProblem,
    u_field: Option<&SampledField>,
    level_i: usize,
    theta: &[usize],
    t: f64,
    x: &[f64],
    time_grid: &[f64],
    cfg: &PsiConfig,
) -> Result<DiagnosticReport> {
    let dims = problem.dims;
    if dims.d != 1 {
        return Err(Error::Unsupported("Psi profile is implemented for d = 1".into()));
    }
    if !(2..=dims.n).contains(&level_i) {
        return Err(Error::config("level_i", format!("must lie in 2..={}", dims.n)));
    }
    if theta.len() != dims.n {
        return Err(Error::Shape { expected: dims.n, got: theta.len() });
    }
    dims.check_len(x)?;
    if time_grid.is_empty() || time_grid.iter().any(|&g| !(g > 0.0) || t + g > dims.horizon) {
        return Err(Error::config("time_grid", "gaps must be positive with t + gap <= T"));
    }
    if cfg.points < 16 || cfg.off_nodes < 2 {
        return Err(Error::config("psi.points", "need at least 16 slice points and 2 off-block nodes"));
    }
    let coords = block_multi_index(theta, 1);
    let alpha = (2.0 + dims.gamma) / (2 * level_i - 1) as f64;
    let tcfg = ThermicConfig { alpha_tilde: alpha, ..cfg.thermic };
    tcfg.validate()?;
    let s_max = time_grid.iter().fold(0.0f64, |m, g| m.max(t + g));
    let proxy = FrozenProxy::new(problem, t, x, s_max, cfg.proxy)?;
    let k = level_i - 1;
    let nd = dims.nd();
    let others: Vec<usize> = (0..nd).filter(|&j| j != k).collect();

    struct Setup {
        s: f64,
        kern: crate::proxy::GaussianKernel,
        th: Vec<f64>,
        f_th: f64,
        jac: f64,
        sd: f64,
        pts: Vec<Vec<f64>>,
        wts: Vec<f64>,
    }
    let setups: Vec<Setup> = time_grid
        .iter()
        .map(|&gap| -> Result<Setup> {
            let s = t + gap;
            let kern = proxy.kernel(t, s, x)?;
            let th = proxy.theta(s).as_slice().to_vec();
            let f_th = problem.drift(s, &th)[k];
            let jac = problem.transmission_jacobian(s, &th, k)[(0, 0)];
            let sd = kern.cov[(k, k)].sqrt();
            let center: Vec<f64> = others.iter().map(|&j| th[j]).collect();
            let sds: Vec<f64> = others.iter().map(|&j| kern.cov[(j, j)].sqrt()).collect();
            let (pts, wts) = off_block_rule(&center, &sds, cfg.off_nodes, cfg.off_width_sd);
            Ok(Setup { s, kern, th, f_th, jac, sd, pts, wts })
        })
        .collect::<Result<_>>()?;

    // one slice: (norm, pairing)
    let slice = |st: &Setup, off: &[f64]| -> Result<(f64, Option<f64>)> {
        let mut y = st.th.clone();
        for (a, &j) in others.iter().enumerate() {
            y[j] = off[a];
        }
        let lo = st.th[k] - cfg.width_sd * st.sd;
        let hi = st.th[k] + cfg.width_sd * st.sd;
        let q = Sampled1d::from_fn(lo, hi, cfg.points, |yk| {
            y[k] = yk;
            let fy = problem.drift(st.s, &y)[k];
            let delta = fy - st.f_th - st.jac * (y[k - 1] - st.th[k - 1]);
            st.kern.derivative(&y, &coords).unwrap_or(0.0) * delta
        })?;
        let pairing = u_field.map(|u| {
            // int Psi u dy_k = -int q D_{y_k} u dy_k
            let vals: Vec<f64> = (0..q.len())
                .map(|j| {
                    y[k] = q.x(j);
                    q.values[j] * u.derivative(st.s, &y, &[k]).unwrap_or(0.0)
                })
                .collect();
            Sampled1d { lo: q.lo, h: q.h, values: vals }.integral().abs()
        });
        if q.max_abs() == 0.0 {
            return Ok((0.0, pairing));
        }
        Ok((thermic_norm_neg_derivative(&q, &tcfg)?.total, pairing))
    };

    let jobs: Vec<(usize, usize)> =
        setups.iter().enumerate().flat_map(|(g, st)| (0..st.pts.len()).map(move |p| (g, p))).collect();
    let parts: Vec<(f64, Option<f64>)> =
        jobs.par_iter().map(|&(g, p)| slice(&setups[g], &setups[g].pts[p])).collect::<Result<_>>()?;
    let centers: Vec<f64> = setups
        .par_iter()
        .map(|st| {
            let c: Vec<f64> = others.iter().map(|&j| st.th[j]).collect();
            slice(st, &c).map(|r| r.0)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<PsiPoint> = time_grid
        .iter()
        .zip(&centers)
        .map(|(&gap, &c)| PsiPoint { gap, norm: 0.0, center_norm: c, pairing: u_field.map(|_| 0.0) })
        .collect();
    for (&(g, p), (norm, pairing)) in jobs.iter().zip(&parts) {
        let w = setups[g].wts[p];
        rows[g].norm += w * norm;
        if let (Some(acc), Some(v)) = (rows[g].pairing.as_mut(), pairing) {
            *acc += w * v;
        }
    }

    let predicted = -(theta.iter().enumerate().map(|(j, &c)| c as f64 * (j as f64 + 0.5)).sum::<f64>() - dims.gamma / 2.0);
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let norms: Vec<f64> = rows.iter().map(|r| r.norm).collect();
    let mut report = DiagnosticReport::new("psi_besov_profile", "besov", "Besov decay of the degenerate perturbation term")
        .series(gaps.clone(), norms.clone())
        .detail("alpha_tilde", alpha)
        .detail("level_i", level_i)
        .detail("theta", theta)
        .detail("predicted_slope", predicted)
        .detail("slice", "off-blocks integrated by tensor Gauss-Legendre around the transported point")
        .detail("rows", &rows);
    let max = norms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        report = report.detail("exact_cancellation", true).detail("slope", serde_json::Value::Null);
    } else if norms.iter().all(|&v| v > 0.0 && v.is_finite()) {
        let lx: Vec<f64> = gaps.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
        report = report.detail("exact_cancellation", false).detail("slope", linear_fit(&lx, &ly).0);
    } else {
        report = report.detail("exact_cancellation", false).detail("slope", serde_json::Value::Null);
    }
    Ok(report)
}

/// Slope stored in a Psi profile report, if defined.
pub fn profile_slope(report: &DiagnosticReport) -> Option<f64> {
    report.details.get("slope").and_then(|v| v.as_f64())
}
