//! Intrinsic scale matrix, dilation, quasi-distances and anisotropic Hölder norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{BoxDomain, Halton};
use crate::MAX_ND;

/// Chain shape `(n, d)` with Hölder exponent and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainDims {
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl ChainDims {
    pub fn new(n: usize, d: usize, gamma: f64, horizon: f64) -> Result<Self> {
        Self::with_limit(n, d, gamma, horizon, MAX_ND)
    }

    pub fn with_limit(n: usize, d: usize, gamma: f64, horizon: f64, max_nd: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if d == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::config("gamma", format!("must lie in (0,1), got {gamma}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("T", format!("must be positive, got {horizon}")));
        }
        if n * d > max_nd {
            return Err(Error::config("n", format!("n*d = {} exceeds the quadrature limit {max_nd}", n * d)));
        }
        Ok(Self { n, d, gamma, horizon })
    }

    pub fn nd(&self) -> usize {
        self.n * self.d
    }

    /// Coordinate range of block `i` (zero-based).
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        i * self.d..(i + 1) * self.d
    }

    /// Block index of coordinate `k`.
    pub fn level_of(&self, k: usize) -> usize {
        k / self.d
    }

    pub(crate) fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.nd() {
            return Err(Error::Shape { expected: self.nd(), got: v.len() });
        }
        Ok(())
    }
}

/// The diagonal matrix `T_u` whose `i`-th block (one-based) is `u^i I_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleMatrix {
    pub u: f64,
    pub n: usize,
    pub d: usize,
}

impl ScaleMatrix {
    pub fn new(u: f64, n: usize, d: usize) -> Result<Self> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::Domain(format!("scale parameter must be positive, got {u}")));
        }
        Ok(Self { u, n, d })
    }

    /// Diagonal entries.
    pub fn diagonal(&self, inverse: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.d);
        for i in 1..=self.n {
            let f = self.u.powi(i as i32);
            let f = if inverse { 1.0 / f } else { f };
            out.extend(std::iter::repeat_n(f, self.d));
        }
        out
    }

    pub fn to_matrix(&self, inverse: bool) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.diagonal(inverse)))
    }

    pub fn apply(&self, v: &[f64], inverse: bool) -> Vec<f64> {
        v.iter().zip(self.diagonal(inverse)).map(|(x, f)| x * f).collect()
    }
}

/// Multiplies block `i` of `v` by `u^i` (or `u^{-i}`); `n = v.len() / d`.
pub fn scale_matrix_apply(u: f64, v: &[f64], d: usize, inverse: bool) -> Result<Vec<f64>> {
    if d == 0 || v.len() % d != 0 {
        return Err(Error::Shape { expected: d.max(1) * (v.len() / d.max(1)).max(1), got: v.len() });
    }
    Ok(ScaleMatrix::new(u, v.len() / d, d)?.apply(v, inverse))
}

/// A space-time point `(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: Vec<f64>) -> Result<Self> {
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("space-time point has non-finite coordinates".into()));
        }
        Ok(Self { t, x })
    }
}

fn block_norm(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `sum_i |y_i - x_i|^{1/(2i-1)}` with Euclidean block norms.
pub fn quasi_distance(x: &[f64], y: &[f64], d: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    if d == 0 || x.len() % d != 0 {
        return Err(Error::Shape { expected: d, got: x.len() });
    }
    Ok(quasi_distance_unchecked(x, y, d))
}

pub(crate) fn quasi_distance_unchecked(x: &[f64], y: &[f64], d: usize) -> f64 {
    let n = x.len() / d;
    (0..n)
        .map(|i| {
            let r = block_norm(&x[i * d..(i + 1) * d], &y[i * d..(i + 1) * d]);
            r.powf(1.0 / (2 * i + 1) as f64)
        })
        .sum()
}

/// `(q.t - p.t)^{1/2} + d(p.x, q.x)`.
pub fn parabolic_distance(p: &SpaceTimePoint, q: &SpaceTimePoint, d: usize) -> Result<f64> {
    if q.t < p.t {
        return Err(Error::Ordering(format!("second time {} precedes first time {}", q.t, p.t)));
    }
    Ok((q.t - p.t).sqrt() + quasi_distance(&p.x, &q.x, d)?)
}

/// `(t, x_1, ..., x_n) -> (l^2 t, l x_1, l^3 x_2, ..., l^{2n-1} x_n)`.
pub fn dilate(lambda: f64, p: &SpaceTimePoint, d: usize) -> Result<SpaceTimePoint> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("dilation factor must be positive, got {lambda}")));
    }
    if d == 0 || p.x.len() % d != 0 {
        return Err(Error::Shape { expected: d, got: p.x.len() });
    }
    let x = p
        .x
        .iter()
        .enumerate()
        .map(|(k, v)| v * lambda.powi((2 * (k / d) + 1) as i32))
        .collect();
    Ok(SpaceTimePoint { t: lambda * lambda * p.t, x })
}

/// One-directional Hölder norm estimate for a single block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionNorm {
    /// Block index (one-based).
    pub level: usize,
    pub exponent: f64,
    /// Sup of the function itself over anchors.
    pub sup: f64,
    /// Sup norms of derivatives of orders `1..=floor(exponent)`.
    pub derivative_sups: Vec<f64>,
    /// Fractional seminorm of the top derivative.
    pub seminorm: f64,
    /// Derivative sups plus seminorm.
    pub homogeneous: f64,
    /// `homogeneous + sup`.
    pub bounded: f64,
}

/// Result of [`holder_norm_anisotropic`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub order_k: usize,
    pub gamma: f64,
    pub directions: Vec<DirectionNorm>,
    /// Sum over blocks of the homogeneous one-directional norms.
    pub norm: f64,
    /// Sum over blocks of the bounded one-directional norms.
    pub bounded_norm: f64,
    pub sup_norm: f64,
    pub samples: usize,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
}

/// Sample plan for the Hölder estimator: anchor points and per-block partner offsets.
#[derive(Debug, Clone)]
pub struct HolderSamples {
    pub anchors: Vec<Vec<f64>>,
    /// `partners[i]` are candidate values of block `i` paired with each anchor.
    pub partners: Vec<Vec<Vec<f64>>>,
    /// Finite-difference step per coordinate.
    pub steps: Vec<f64>,
}

impl HolderSamples {
    pub fn from_box(dims: &ChainDims, domain: &BoxDomain, samples: usize, seed: u64) -> Result<Self> {
        if domain.dim() != dims.nd() {
            return Err(Error::Shape { expected: dims.nd(), got: domain.dim() });
        }
        if samples < 2 {
            return Err(Error::config("samples", "need at least 2 samples"));
        }
        let seq = Halton::new(dims.nd(), seed);
        let mut anchors = Vec::with_capacity(samples);
        let mut u = vec![0.0; dims.nd()];
        for k in 0..samples {
            seq.point(k, &mut u);
            let mut p = vec![0.0; dims.nd()];
            domain.map_unit(&u, &mut p);
            anchors.push(p);
        }
        let partners = (0..dims.n)
            .map(|i| anchors.iter().map(|a| a[dims.block(i)].to_vec()).collect())
            .collect();
        let steps = (0..dims.nd()).map(|k| domain.width(k) / 256.0).collect();
        Ok(Self { anchors, partners, steps })
    }

    /// Keeps only anchors and partners inside `domain`.
    pub fn restrict(&self, dims: &ChainDims, domain: &BoxDomain) -> Self {
        let anchors: Vec<Vec<f64>> = self.anchors.iter().filter(|a| domain.contains(a)).cloned().collect();
        let partners = (0..dims.n)
            .map(|i| {
                let r = dims.block(i);
                self.partners[i]
                    .iter()
                    .filter(|p| p.iter().enumerate().all(|(j, v)| *v >= domain.lo[r.start + j] && *v <= domain.hi[r.start + j]))
                    .cloned()
                    .collect()
            })
            .collect();
        Self { anchors, partners, steps: self.steps.clone() }
    }
}

/// Gradient (order 1) or Hessian (order 2) of `f` in block `i` at `z`, flattened.
pub(crate) fn block_derivative(
    f: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
    range: std::ops::Range<usize>,
    steps: &[f64],
    order: usize,
) -> Vec<f64> {
    let mut buf = z.to_vec();
    let idx: Vec<usize> = range.collect();
    match order {
        0 => vec![f(z)],
        1 => idx
            .iter()
            .map(|&a| {
                let h = steps[a];
                buf[a] = z[a] + h;
                let p = f(&buf);
                buf[a] = z[a] - h;
                let m = f(&buf);
                buf[a] = z[a];
                (p - m) / (2.0 * h)
            })
            .collect(),
        2 => {
            let f0 = f(z);
            let mut out = Vec::with_capacity(idx.len() * idx.len());
            for &a in &idx {
                for &b in &idx {
                    let (ha, hb) = (steps[a], steps[b]);
                    let v = if a == b {
                        buf[a] = z[a] + ha;
                        let p = f(&buf);
                        buf[a] = z[a] - ha;
                        let m = f(&buf);
                        buf[a] = z[a];
                        (p - 2.0 * f0 + m) / (ha * ha)
                    } else {
                        let mut acc = 0.0;
                        for (sa, sb, sg) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                            buf[a] = z[a] + sa * ha;
                            buf[b] = z[b] + sb * hb;
                            acc += sg * f(&buf);
                        }
                        buf[a] = z[a];
                        buf[b] = z[b];
                        acc / (4.0 * ha * hb)
                    };
                    out.push(v);
                }
            }
            out
        }
        _ => unreachable!("derivative order above 2"),
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One-directional `C^{exponent}` estimate of `f` in block `i` (zero-based).
pub fn direction_norm(
    f: &dyn Fn(&[f64]) -> f64,
    dims: &ChainDims,
    i: usize,
    exponent: f64,
    plan: &HolderSamples,
) -> DirectionNorm {
    let top = exponent.floor() as usize;
    let frac = exponent - top as f64;
    let range = dims.block(i);
    let mut sup = 0.0f64;
    let mut derivative_sups = vec![0.0f64; top];
    let mut tops = Vec::with_capacity(plan.anchors.len());
    for z in &plan.anchors {
        sup = sup.max(f(z).abs());
        for (o, slot) in derivative_sups.iter_mut().enumerate() {
            let dv = block_derivative(f, z, range.clone(), &plan.steps, o + 1);
            *slot = slot.max(max_abs(&dv));
        }
        tops.push(block_derivative(f, z, range.clone(), &plan.steps, top));
    }
    let mut seminorm = 0.0f64;
    if frac > 0.0 {
        let mut w = vec![0.0; dims.nd()];
        for (z, dz) in plan.anchors.iter().zip(&tops) {
            w.copy_from_slice(z);
            for p in &plan.partners[i] {
                w[range.clone()].copy_from_slice(p);
                let dist = block_norm(&z[range.clone()], p);
                if dist <= 0.0 {
                    continue;
                }
                let dw = block_derivative(f, &w, range.clone(), &plan.steps, top);
                let diff = dz.iter().zip(&dw).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                seminorm = seminorm.max(diff / dist.powf(frac));
            }
        }
    }
    let homogeneous = derivative_sups.iter().sum::<f64>() + seminorm;
    DirectionNorm { level: i + 1, exponent, sup, derivative_sups, seminorm, homogeneous, bounded: homogeneous + sup }
}

/// Estimates the anisotropic `C^{k+gamma}_d` norm of `field` on `domain`.
///
/// Direction `i` uses exponent `(k + gamma) / (2i - 1)`. Anchors and partners
/// are nested Halton points, so doubling `samples` only adds pairs.
pub fn holder_norm_anisotropic(
    field: &dyn Fn(&[f64]) -> f64,
    dims: &ChainDims,
    order_k: usize,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
) -> Result<HolderEstimate> {
    if order_k != 0 && order_k != 2 {
        return Err(Error::config("order_k", "must be 0 or 2"));
    }
    let plan = HolderSamples::from_box(dims, domain, samples, seed)?;
    Ok(holder_norm_on_samples(field, dims, order_k, &plan, domain))
}

/// Same estimator on an explicit sample plan.
pub fn holder_norm_on_samples(
    field: &dyn Fn(&[f64]) -> f64,
    dims: &ChainDims,
    order_k: usize,
    plan: &HolderSamples,
    domain: &BoxDomain,
) -> HolderEstimate {
    let directions: Vec<DirectionNorm> = (0..dims.n)
        .map(|i| {
            let exponent = (order_k as f64 + dims.gamma) / (2 * i + 1) as f64;
            direction_norm(field, dims, i, exponent, plan)
        })
        .collect();
    let sup_norm = directions.iter().fold(0.0f64, |m, d| m.max(d.sup));
    HolderEstimate {
        order_k,
        gamma: dims.gamma,
        norm: directions.iter().map(|d| d.homogeneous).sum(),
        bounded_norm: directions.iter().map(|d| d.bounded).sum(),
        directions,
        sup_norm,
        samples: plan.anchors.len(),
        box_lo: domain.lo.clone(),
        box_hi: domain.hi.clone(),
    }
}
