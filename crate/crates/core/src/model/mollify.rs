//! Spatial mollification of coefficients by a separable bump kernel.

use std::sync::Arc;

use super::{AffineForm, ChainProblem, Coefficients};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_on, Rule, TensorRule};
use crate::MAX_ND;

/// Largest tensor node count accepted for the kernel quadrature.
pub const MOLLIFIER_BUDGET: usize = 100_000;

fn bump(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - z * z)).exp()
    }
}

/// Normalizing constant of the 1-D bump on `[-1,1]`, from a 400-node rule.
pub fn bump_mass() -> f64 {
    gauss_legendre_on(400, -1.0, 1.0).integrate(bump)
}

/// Level-`m` mollifier `phi_m(z) = m^{nd} phi(m z)`.
///
/// `phi` is a product of 1-D bumps, each supported on `[-r, r]` with
/// `r = 1/sqrt(nd)`, so the support sits inside the unit ball.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub m: f64,
    pub dim: usize,
    radius: f64,
    c1: f64,
}

impl Mollifier {
    pub fn new(m: f64, dim: usize) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::config("mollification.m", "must be positive"));
        }
        if dim == 0 || dim > MAX_ND {
            return Err(Error::config("mollification", "kernel dimension out of range"));
        }
        let radius = 1.0 / (dim as f64).sqrt();
        Ok(Self { m, dim, radius, c1: 1.0 / (radius * bump_mass()) })
    }

    /// Kernel `phi(z)` at level 1.
    pub fn kernel(&self, z: &[f64]) -> f64 {
        z.iter().map(|v| self.c1 * bump(v / self.radius)).product()
    }

    /// `phi_m(z)`.
    pub fn kernel_m(&self, z: &[f64]) -> f64 {
        let scaled: Vec<f64> = z.iter().map(|v| v * self.m).collect();
        self.m.powi(self.dim as i32) * self.kernel(&scaled)
    }

    /// Quadrature nodes `z_k / m` with weights summing to one.
    pub fn nodes(&self, points_per_dim: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if points_per_dim < 8 {
            return Err(Error::config("mollification.quad_points", "need at least 8 points per dimension"));
        }
        let gl = gauss_legendre_on(points_per_dim, -self.radius, self.radius);
        let weighted = Rule {
            nodes: gl.nodes.clone(),
            weights: gl.nodes.iter().zip(&gl.weights).map(|(z, w)| w * bump(z / self.radius)).collect(),
        };
        let tensor = TensorRule::new(&weighted, self.dim, MOLLIFIER_BUDGET)?;
        let total: f64 = tensor.weights.iter().sum();
        let mut offsets = Vec::with_capacity(tensor.len());
        let mut weights = Vec::with_capacity(tensor.len());
        for k in 0..tensor.len() {
            let w = tensor.weights[k] / total;
            if w == 0.0 {
                continue;
            }
            offsets.push(tensor.node(k).iter().map(|z| z / self.m).collect());
            weights.push(w);
        }
        Ok((offsets, weights))
    }
}

struct Mollified {
    base: Arc<dyn Coefficients>,
    nd: usize,
    d: usize,
    offsets: Vec<Vec<f64>>,
    weights: Vec<f64>,
    affine: Option<AffineForm>,
}

impl Coefficients for Mollified {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let nd = self.nd;
        let mut y = [0.0; MAX_ND];
        let mut f = [0.0; MAX_ND];
        out[..nd].iter_mut().for_each(|v| *v = 0.0);
        for (z, w) in self.offsets.iter().zip(&self.weights) {
            for k in 0..nd {
                y[k] = x[k] - z[k];
            }
            self.base.drift(t, &y[..nd], &mut f[..nd]);
            for k in 0..nd {
                out[k] += w * f[k];
            }
        }
    }

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let nd = self.nd;
        let dd = self.d * self.d;
        let mut y = [0.0; MAX_ND];
        let mut a = [0.0; MAX_ND * MAX_ND];
        out[..dd].iter_mut().for_each(|v| *v = 0.0);
        for (z, w) in self.offsets.iter().zip(&self.weights) {
            for k in 0..nd {
                y[k] = x[k] - z[k];
            }
            self.base.diffusion(t, &y[..nd], &mut a[..dd]);
            for k in 0..dd {
                out[k] += w * a[k];
            }
        }
    }

    fn affine_form(&self) -> Option<AffineForm> {
        self.affine.clone()
    }
}

/// Returns the problem with `F` and `a` replaced by `F * phi_m`, `a * phi_m`.
///
/// Affine drifts with constant diffusion are returned unchanged: the kernel is
/// even, so convolution reproduces them exactly. With `mollify_data`, the
/// source and terminal functions are convolved as well.
pub fn mollify(problem: &ChainProblem, mollifier: &Mollifier, points_per_dim: usize, mollify_data: bool) -> Result<ChainProblem> {
    if mollifier.dim != problem.nd() {
        return Err(Error::Shape { expected: problem.nd(), got: mollifier.dim });
    }
    let (offsets, weights) = mollifier.nodes(points_per_dim)?;
    let mut out = problem.clone();
    if problem.affine.is_none() {
        let coeffs = Mollified {
            base: problem.coeffs.clone(),
            nd: problem.nd(),
            d: problem.dims.d,
            offsets: offsets.clone(),
            weights: weights.clone(),
            affine: None,
        };
        out.coeffs = Arc::new(coeffs);
    }
    if mollify_data {
        let nd = problem.nd();
        let (o1, w1) = (Arc::new(offsets), Arc::new(weights));
        let (o2, w2) = (o1.clone(), w1.clone());
        let g = problem.terminal.clone();
        let f = problem.source.clone();
        out.terminal = Arc::new(move |x: &[f64]| {
            let mut y = [0.0; MAX_ND];
            o1.iter()
                .zip(w1.iter())
                .map(|(z, w)| {
                    for k in 0..nd {
                        y[k] = x[k] - z[k];
                    }
                    w * g(&y[..nd])
                })
                .sum()
        });
        out.source = Arc::new(move |t: f64, x: &[f64]| {
            let mut y = [0.0; MAX_ND];
            o2.iter()
                .zip(w2.iter())
                .map(|(z, w)| {
                    for k in 0..nd {
                        y[k] = x[k] - z[k];
                    }
                    w * f(t, &y[..nd])
                })
                .sum()
        });
        out.terminal_spec = None;
        out.source_spec = None;
    }
    out.catalog_id = problem.catalog_id.as_ref().map(|id| format!("{id}@m={}", mollifier.m));
    Ok(out)
}
