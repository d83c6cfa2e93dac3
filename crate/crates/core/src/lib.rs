//! Forward parametrix toolkit for degenerate Kolmogorov chains.
//!
//! The chain lives on `R^{nd}` split into `n` blocks of size `d`; noise
//! acts on the first block and is transmitted upward through the drift.
//! Modules follow the computational pipeline: metrics and norms
//! ([`anisotropy`]), coefficient models ([`model`]), the frozen Gaussian
//! proxy ([`proxy`]), thermic Besov norms ([`besov`]), the Picard solver
//! ([`solver`]), the Monte Carlo oracle ([`fk`]), rescaling ([`scaling`])
//! and the experiment layer ([`lab`]).

// NaN must fail range checks, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of, clippy::needless_range_loop)]

pub mod anisotropy;
pub mod besov;
pub mod error;
pub mod fk;
pub mod funcs;
pub mod lab;
pub mod model;
pub mod proxy;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod scaling;
pub mod solver;
pub mod stats;

pub use anisotropy::{ChainDims, ScaleMatrix, SpaceTimePoint};
pub use error::{Error, Result};
pub use model::ChainProblem;
pub use proxy::FrozenProxy;
pub use report::DiagnosticReport;
pub use solver::SampledField;

/// Hard cap on the state dimension `n * d` handled by tensor quadrature.
pub const MAX_ND: usize = 6;
