//! Gauss rules and low-discrepancy point sets.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A one-dimensional rule: nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` with this rule.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule {
    let base = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Rule {
        nodes: base.nodes.iter().map(|&x| mid + half * x).collect(),
        weights: base.weights.iter().map(|&w| w * half).collect(),
    }
}

/// Gauss–Hermite rule for the standard normal law: `sum w_k f(x_k) ~ E f(Z)`.
///
/// Initial nodes come from the Jacobi matrix eigenvalues and are polished by
/// Newton steps on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "gauss_hermite needs at least one node");
    // physicists' convention internally: weight exp(-x^2)
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let mut guess: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    guess.sort_by(|a, b| a.total_cmp(b));
    let pi_m4 = std::f64::consts::PI.powf(-0.25);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for mut x in guess {
        let mut pp = 0.0;
        for _ in 0..50 {
            let (p1, p2) = hermite_orthonormal(n, x, pi_m4);
            pp = (2.0 * n as f64).sqrt() * p2;
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() < 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, p2) = hermite_orthonormal(n, x, pi_m4);
        if p2 != 0.0 {
            pp = (2.0 * n as f64).sqrt() * p2;
        }
        let w = 2.0 / (pp * pp);
        nodes.push(std::f64::consts::SQRT_2 * x);
        weights.push(w / std::f64::consts::PI.sqrt());
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    // enforce exact symmetry
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn hermite_orthonormal(n: usize, x: f64, p0: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = p0;
    for k in 1..=n {
        let k = k as f64;
        let next = x * (2.0 / k).sqrt() * cur - ((k - 1.0) / k).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Tensor product of a 1-D rule over `dim` coordinates.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub dim: usize,
    /// Row-major nodes, `dim` coordinates each.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    pub fn new(rule: &Rule, dim: usize, budget: usize) -> Result<Self> {
        let q = rule.len();
        let total = q
            .checked_pow(dim as u32)
            .filter(|&t| t <= budget)
            .ok_or_else(|| Error::config("quadrature", format!("{q}^{dim} nodes exceeds the budget of {budget}")))?;
        let mut nodes = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for &k in &idx {
                nodes.push(rule.nodes[k]);
                w *= rule.weights[k];
            }
            weights.push(w);
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if *slot < q {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(Self { dim, nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }
}

/// Default ceiling on the number of tensor nodes.
pub const TENSOR_BUDGET: usize = 1 << 22;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Randomly shifted Halton sequence in `[0,1)^dim`.
///
/// The shift is drawn from `seed`; the first `k` points never depend on how
/// many points are requested afterwards, so sample sets are nested.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton dimension capped at {}", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x48a1_70f3_9e37_79b9);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self { dim, shift }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Point `i` (zero-based; index 0 maps to the shift itself).
    pub fn point(&self, i: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.dim) {
            let v = radical_inverse(i as u64 + 1, PRIMES[k]) + self.shift[k];
            *o = v - v.floor();
        }
    }

    pub fn points(&self, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|i| {
                let mut p = vec![0.0; self.dim];
                self.point(i, &mut p);
                p
            })
            .collect()
    }
}

/// Axis-aligned box `[lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::config("box", "bounds must be non-empty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::config("box", "each interval must be finite with lo < hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self { lo: vec![-half_width; dim], hi: vec![half_width; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Maps a unit-cube point into the box.
    pub fn map_unit(&self, u: &[f64], out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.lo[k] + u[k] * self.width(k);
        }
    }
}
