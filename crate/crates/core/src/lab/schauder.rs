//! Empirical Schauder constant across mollification levels.

use serde::{Deserialize, Serialize};

use crate::anisotropy::{holder_norm_anisotropic, holder_norm_on_samples, HolderSamples};
use crate::error::{Error, Result};
use crate::model::{mollify, ChainProblem, Mollifier};
use crate::quadrature::BoxDomain;
use crate::report::DiagnosticReport;
use crate::solver::{parametrix_solve, GridSpec, SampledField, SolverConfig};
use crate::stats::relative_spread;

/// Settings of [`schauder_constant_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchauderConfig {
    pub levels: Vec<f64>,
    #[serde(default = "default_points")]
    pub mollifier_points: usize,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// The norm box is the grid box shrunk by this factor about its centre.
    #[serde(default = "default_fraction")]
    pub box_fraction: f64,
    /// Allowed relative spread of the ratios.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_points() -> usize {
    8
}
fn default_samples() -> usize {
    24
}
fn default_fraction() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    0.05
}

impl SchauderConfig {
    pub fn new(levels: Vec<f64>, grid: GridSpec) -> Self {
        Self {
            levels,
            mollifier_points: default_points(),
            grid,
            solver: SolverConfig::default(),
            samples: default_samples(),
            seed: 0,
            box_fraction: default_fraction(),
            tolerance: default_tolerance(),
        }
    }
}

/// One mollification level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchauderRow {
    pub m: f64,
    pub u_norm: f64,
    pub g_norm: f64,
    pub f_norm: f64,
    /// `u_norm / (g_norm + f_norm)`, zero when both data norms vanish.
    pub ratio: f64,
    /// Norm of the first time slice alone.
    pub start_norm: f64,
    pub start_ratio: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm_box(grid: &GridSpec, fraction: f64) -> Result<BoxDomain> {
    let (lo, hi): (Vec<f64>, Vec<f64>) = grid
        .lo
        .iter()
        .zip(&grid.hi)
        .map(|(a, b)| {
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a) * fraction;
            (c - h, c + h)
        })
        .unzip();
    BoxDomain::new(lo, hi)
}

/// `||u(t_k, .)||_{C^{2+gamma}_{b,d}}` on `domain` for every time slice, with
/// difference steps equal to the grid steps so the interpolant is
/// differentiated at its own scale.
pub fn field_slice_norms(field: &SampledField, domain: &BoxDomain, samples: usize, seed: u64) -> Result<Vec<f64>> {
    let mut plan = HolderSamples::from_box(&field.dims, domain, samples, seed)?;
    plan.steps = field.axes.iter().map(|a| a.step).collect();
    Ok((0..field.times.len())
        .map(|ti| {
            let f = |x: &[f64]| field.interp_slice(ti, x);
            holder_norm_on_samples(&f, &field.dims, 2, &plan, domain).bounded_norm
        })
        .collect())
}

/// `sup_t ||u(t, .)||_{C^{2+gamma}_{b,d}}` over the time slices.
pub fn field_holder_norm(field: &SampledField, domain: &BoxDomain, samples: usize, seed: u64) -> Result<f64> {
    Ok(field_slice_norms(field, domain, samples, seed)?.into_iter().fold(0.0, f64::max))
}

/// Data norms `(||g||_{C^{2+gamma}}, sup_t ||f(t,.)||_{C^gamma})` on `domain`.
pub fn data_norms(problem: &ChainProblem, domain: &BoxDomain, times: &[f64], samples: usize, seed: u64) -> Result<(f64, f64)> {
    let dims = problem.dims;
    let g = |x: &[f64]| problem.terminal(x);
    let g_norm = holder_norm_anisotropic(&g, &dims, 2, domain, samples, seed)?.bounded_norm;
    let zero_source = problem.source_spec.as_ref().is_some_and(|f| f.is_zero());
    let mut f_norm = 0.0f64;
    if !zero_source {
        for &t in times {
            let f = |x: &[f64]| problem.source(t, x);
            f_norm = f_norm.max(holder_norm_anisotropic(&f, &dims, 0, domain, samples, seed)?.bounded_norm);
        }
    }
    Ok((g_norm, f_norm))
}

/// Solves the mollified problem at each level and reports
/// `R_m = ||u_m|| / (||g|| + ||f||)` with a stability verdict.
///
/// Only the coefficients are mollified; the data stay fixed.
pub fn schauder_constant_report(problem: &ChainProblem, cfg: &SchauderConfig) -> Result<(Vec<SchauderRow>, DiagnosticReport)> {
    if cfg.levels.is_empty() {
        return Err(Error::config("mollification", "need at least one level"));
    }
    if !(cfg.box_fraction > 0.0 && cfg.box_fraction <= 1.0) {
        return Err(Error::config("schauder.box_fraction", "must lie in (0, 1]"));
    }
    let domain = norm_box(&cfg.grid, cfg.box_fraction)?;
    let mut rows = Vec::with_capacity(cfg.levels.len());
    let mut data: Option<(f64, f64)> = None;
    for &m in &cfg.levels {
        let moll = Mollifier::new(m, problem.nd())?;
        let pm = mollify(problem, &moll, cfg.mollifier_points, false)?;
        let sol = parametrix_solve(&pm, &cfg.grid, &cfg.solver)?;
        let (g_norm, f_norm) = match data {
            Some(v) => v,
            None => {
                let v = data_norms(problem, &domain, &sol.field.times, cfg.samples, cfg.seed)?;
                data = Some(v);
                v
            }
        };
        let slices = field_slice_norms(&sol.field, &domain, cfg.samples, cfg.seed)?;
        let u_norm = slices.iter().copied().fold(0.0, f64::max);
        let start_norm = slices[0];
        let denom = g_norm + f_norm;
        let over = |v: f64| if denom == 0.0 { 0.0 } else { v / denom };
        rows.push(SchauderRow {
            m,
            u_norm,
            g_norm,
            f_norm,
            ratio: over(u_norm),
            start_norm,
            start_ratio: over(start_norm),
            iterations: sol.iterations,
            converged: sol.converged,
        });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let spread = relative_spread(&ratios);
    let pass = spread <= cfg.tolerance && rows.iter().all(|r| r.converged && r.ratio.is_finite());
    let report = DiagnosticReport::new("schauder_constant", "lab", "Schauder ratio across mollification levels")
        .table(
            ["m", "u_norm", "g_norm", "f_norm", "ratio", "start_ratio", "iterations"].map(String::from).to_vec(),
            rows.iter().map(|r| vec![r.m, r.u_norm, r.g_norm, r.f_norm, r.ratio, r.start_ratio, r.iterations as f64]).collect(),
        )
        .detail("relative_spread", spread)
        .detail("start_relative_spread", relative_spread(&rows.iter().map(|r| r.start_ratio).collect::<Vec<_>>()))
        .detail("tolerance", cfg.tolerance)
        .detail("problem", problem.catalog_id.clone().unwrap_or_default())
        .verdict(pass);
    Ok((rows, report))
}
