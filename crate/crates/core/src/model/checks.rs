//! Empirical verification of ellipticity, transmission and drift regularity.

use serde::Serialize;

use super::ChainProblem;
use crate::anisotropy::{direction_norm, ChainDims, HolderSamples};
use crate::error::{Error, Result};
use crate::quadrature::{BoxDomain, Halton};
use crate::stats::{min_singular_value, sym_eigenvalues};

/// Sampled points `(t, x)` in `[0,T] x box`.
fn sample_points(dims: &ChainDims, domain: &BoxDomain, samples: usize, seed: u64) -> Result<Vec<(f64, Vec<f64>)>> {
    if domain.dim() != dims.nd() {
        return Err(Error::Shape { expected: dims.nd(), got: domain.dim() });
    }
    if samples == 0 {
        return Err(Error::config("samples", "must be positive"));
    }
    let seq = Halton::new(dims.nd() + 1, seed);
    let mut u = vec![0.0; dims.nd() + 1];
    Ok((0..samples)
        .map(|k| {
            seq.point(k, &mut u);
            let mut x = vec![0.0; dims.nd()];
            domain.map_unit(&u[1..], &mut x);
            (u[0] * dims.horizon, x)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub kappa_hat: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub max_sigma_residual: f64,
    /// `kappa_hat` exceeded the configured cap.
    pub bounded_violation: bool,
    pub pass: bool,
}

/// Estimates `kappa = max(lambda_max(a), 1/lambda_min(a))` over sampled points.
pub fn check_uniform_ellipticity(
    problem: &ChainProblem,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
    kappa_cap: f64,
) -> Result<EllipticityReport> {
    let pts = sample_points(&problem.dims, domain, samples, seed)?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut sig_res = 0.0f64;
    for (t, x) in &pts {
        let a = problem.diffusion(*t, x);
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-8 {
            return Err(Error::Model(format!("diffusion matrix not symmetric at t={t}: asymmetry {asym:.3e}")));
        }
        let ev = sym_eigenvalues(&a);
        lo = lo.min(ev[0]);
        hi = hi.max(*ev.last().unwrap());
        let s = problem.sigma(*t, x);
        sig_res = sig_res.max((&s * s.transpose() - &a).amax());
    }
    let kappa_hat = if lo > 0.0 { hi.max(1.0 / lo).max(1.0) } else { f64::INFINITY };
    let bounded_violation = kappa_hat > kappa_cap;
    Ok(EllipticityReport {
        kappa_hat,
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        max_sigma_residual: sig_res,
        bounded_violation,
        pass: lo > 0.0 && !bounded_violation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HormanderReport {
    /// Per level `i = 2..n`, min singular value of `D_{x_{i-1}} F_i`.
    pub min_singular_values: Vec<f64>,
    pub floor: f64,
    pub pass: bool,
    /// The abstract convex sets of the nondegeneracy condition are replaced by a singular-value floor.
    pub note: String,
}

/// Transmission check at explicit points.
pub fn check_hormander_at(problem: &ChainProblem, points: &[(f64, Vec<f64>)], floor: f64) -> HormanderReport {
    let n = problem.dims.n;
    let mut mins = vec![f64::INFINITY; n.saturating_sub(1)];
    for (t, x) in points {
        for (i, slot) in mins.iter_mut().enumerate() {
            let j = problem.transmission_jacobian(*t, x, i + 1);
            *slot = slot.min(min_singular_value(&j));
        }
    }
    let pass = mins.iter().all(|&v| v > floor);
    HormanderReport {
        min_singular_values: mins,
        floor,
        pass,
        note: "nondegeneracy proxied by a singular-value floor".into(),
    }
}

/// Transmission check over sampled points; vacuous for `n = 1`.
pub fn check_hormander(problem: &ChainProblem, domain: &BoxDomain, samples: usize, seed: u64, floor: f64) -> Result<HormanderReport> {
    let pts = sample_points(&problem.dims, domain, samples, seed)?;
    Ok(check_hormander_at(problem, &pts, floor))
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftModulus {
    /// Level `i` (one-based) of the drift component.
    pub level: usize,
    /// Variable block `j` (one-based).
    pub variable: usize,
    pub exponent: f64,
    /// Seminorm of the top derivative at the fractional part of the exponent.
    pub seminorm: f64,
    /// Same estimate with twice the samples.
    pub seminorm_refined: f64,
    /// Sup of whole derivatives below the exponent.
    pub derivative_sups: Vec<f64>,
    pub finite: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub moduli: Vec<DriftModulus>,
    pub samples: usize,
}

/// Growth factor under refinement above which a modulus is flagged as not finite.
pub const MODULUS_GROWTH_LIMIT: f64 = 1.5;

/// Hölder moduli of `F_i` in each block `j >= (i-1) v 1` at exponent
/// `((2i-3) v 0 + gamma) / (2j-1)`, with a refinement trend.
pub fn check_drift_regularity(problem: &ChainProblem, domain: &BoxDomain, samples: usize, seed: u64) -> Result<RegularityReport> {
    let dims = problem.dims;
    let coarse = HolderSamples::from_box(&dims, domain, samples, seed)?;
    let fine = HolderSamples::from_box(&dims, domain, 2 * samples, seed)?;
    let d = dims.d;
    let mut moduli = Vec::new();
    for i in 1..=dims.n {
        let base = (2.0 * i as f64 - 3.0).max(0.0) + dims.gamma;
        let first = if i >= 2 { i - 1 } else { 1 };
        for j in first..=dims.n {
            let exponent = base / (2 * j - 1) as f64;
            let mut sem = 0.0f64;
            let mut sem_fine = 0.0f64;
            let mut ders: Vec<f64> = Vec::new();
            for c in 0..d {
                let comp = (i - 1) * d + c;
                let f = |x: &[f64]| problem.drift(0.0, x)[comp];
                let a = direction_norm(&f, &dims, j - 1, exponent, &coarse);
                let b = direction_norm(&f, &dims, j - 1, exponent, &fine);
                sem = sem.max(a.seminorm);
                sem_fine = sem_fine.max(b.seminorm);
                if ders.len() < a.derivative_sups.len() {
                    ders.resize(a.derivative_sups.len(), 0.0);
                }
                for (slot, v) in ders.iter_mut().zip(&a.derivative_sups) {
                    *slot = slot.max(*v);
                }
            }
            let finite = sem.is_finite() && (sem_fine <= MODULUS_GROWTH_LIMIT * sem.max(1e-300) || sem_fine < 1e-12);
            moduli.push(DriftModulus {
                level: i,
                variable: j,
                exponent,
                seminorm: sem,
                seminorm_refined: sem_fine,
                derivative_sups: ders,
                finite,
            });
        }
    }
    Ok(RegularityReport { moduli, samples })
}

/// Combined outcome of the three checks.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub ellipticity: EllipticityReport,
    pub hormander: HormanderReport,
    pub regularity: RegularityReport,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.ellipticity.pass && self.hormander.pass && self.regularity.moduli.iter().all(|m| m.finite)
    }
}

/// Runs all three checks with shared sampling settings.
pub fn check_all(
    problem: &ChainProblem,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
    kappa_cap: f64,
    floor: f64,
) -> Result<AssumptionReport> {
    Ok(AssumptionReport {
        ellipticity: check_uniform_ellipticity(problem, domain, samples, seed, kappa_cap)?,
        hormander: check_hormander(problem, domain, samples, seed, floor)?,
        regularity: check_drift_regularity(problem, domain, samples, seed)?,
    })
}
