//! Chain problems: coefficients, data, assumption checks and mollification.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::anisotropy::ChainDims;
use crate::funcs::ScalarFn;
use crate::stats::sym_sqrt;
use crate::MAX_ND;

pub mod catalog;
pub mod checks;
pub mod mollify;

pub use checks::{check_drift_regularity, check_hormander, check_hormander_at, check_uniform_ellipticity, AssumptionReport};
pub use mollify::{mollify, Mollifier};

/// Affine description `F(t,x) = A x + b`, `a` constant.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub a_mat: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub diffusion: DMatrix<f64>,
}

/// Drift and diffusion fields of a chain.
///
/// `drift` writes all `n` blocks of `F(t,x)`; `diffusion` writes the `d x d`
/// matrix `a(t,x)` row-major. Implementations must respect the chain
/// structure: block `i >= 2` of the drift ignores blocks `1..i-2`.
pub trait Coefficients: Send + Sync {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Closed-form square root of `a`, when one is available.
    fn sigma(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Affine drift with constant diffusion, if the model is a linear Gaussian chain.
    fn affine_form(&self) -> Option<AffineForm> {
        None
    }
}

pub type SourceFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A Cauchy problem for the chain generator: coefficients, source `f`, terminal `g`.
#[derive(Clone)]
pub struct ChainProblem {
    pub dims: ChainDims,
    pub coeffs: Arc<dyn Coefficients>,
    pub source: SourceFn,
    pub terminal: TerminalFn,
    /// Closed-form descriptions of the data when known.
    pub source_spec: Option<ScalarFn>,
    pub terminal_spec: Option<ScalarFn>,
    pub catalog_id: Option<String>,
    /// Cached affine form of the coefficients.
    pub affine: Option<Arc<AffineForm>>,
}

impl fmt::Debug for ChainProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainProblem")
            .field("dims", &self.dims)
            .field("catalog_id", &self.catalog_id)
            .field("terminal", &self.terminal_spec)
            .field("source", &self.source_spec)
            .finish()
    }
}

impl ChainProblem {
    pub fn new(dims: ChainDims, coeffs: Arc<dyn Coefficients>) -> Self {
        let affine = coeffs.affine_form().map(Arc::new);
        Self {
            affine,
            dims,
            coeffs,
            source: Arc::new(|_, _| 0.0),
            terminal: Arc::new(|_| 0.0),
            source_spec: Some(ScalarFn::Zero),
            terminal_spec: Some(ScalarFn::Zero),
            catalog_id: None,
        }
    }

    pub fn with_terminal(mut self, g: ScalarFn) -> Self {
        let h = g.clone();
        self.terminal = Arc::new(move |x| h.eval(x));
        self.terminal_spec = Some(g);
        self
    }

    pub fn with_source(mut self, f: ScalarFn) -> Self {
        let h = f.clone();
        self.source = Arc::new(move |_, x| h.eval(x));
        self.source_spec = Some(f);
        self
    }

    pub fn with_terminal_fn(mut self, g: TerminalFn) -> Self {
        self.terminal = g;
        self.terminal_spec = None;
        self
    }

    pub fn with_source_fn(mut self, f: SourceFn) -> Self {
        self.source = f;
        self.source_spec = None;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.catalog_id = Some(id.into());
        self
    }

    pub fn nd(&self) -> usize {
        self.dims.nd()
    }

    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.coeffs.drift(t, x, out);
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nd()];
        self.coeffs.drift(t, x, &mut out);
        out
    }

    pub fn diffusion(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let d = self.dims.d;
        let mut buf = [0.0; MAX_ND * MAX_ND];
        self.coeffs.diffusion(t, x, &mut buf[..d * d]);
        DMatrix::from_row_slice(d, d, &buf[..d * d])
    }

    pub fn sigma(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let d = self.dims.d;
        let mut buf = [0.0; MAX_ND * MAX_ND];
        if self.coeffs.sigma(t, x, &mut buf[..d * d]) {
            DMatrix::from_row_slice(d, d, &buf[..d * d])
        } else {
            sym_sqrt(&self.diffusion(t, x))
        }
    }

    pub fn source(&self, t: f64, x: &[f64]) -> f64 {
        (self.source)(t, x)
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    /// Finite-difference step for coordinate value `v`.
    pub fn fd_step(v: f64) -> f64 {
        1e-5 * (1.0 + v.abs())
    }

    /// `D_{x_{i-1}} F_i(t,x)` for zero-based level `i >= 1`, as a `d x d` matrix.
    pub fn transmission_jacobian(&self, t: f64, x: &[f64], i: usize) -> DMatrix<f64> {
        let d = self.dims.d;
        if let Some(af) = &self.affine {
            return af.a_mat.view((i * d, (i - 1) * d), (d, d)).into_owned();
        }
        let nd = self.nd();
        let mut jac = DMatrix::zeros(d, d);
        let mut buf = [0.0; MAX_ND];
        let mut fp = [0.0; MAX_ND];
        let mut fm = [0.0; MAX_ND];
        buf[..nd].copy_from_slice(x);
        for c in 0..d {
            let k = (i - 1) * d + c;
            let h = Self::fd_step(x[k]);
            buf[k] = x[k] + h;
            self.coeffs.drift(t, &buf[..nd], &mut fp[..nd]);
            buf[k] = x[k] - h;
            self.coeffs.drift(t, &buf[..nd], &mut fm[..nd]);
            buf[k] = x[k];
            for r in 0..d {
                jac[(r, c)] = (fp[i * d + r] - fm[i * d + r]) / (2.0 * h);
            }
        }
        jac
    }

    /// Subdiagonal drift Jacobian: only blocks `(i, i-1)` are filled.
    pub fn subdiagonal_jacobian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let d = self.dims.d;
        let nd = self.nd();
        let mut out = DMatrix::zeros(nd, nd);
        for i in 1..self.dims.n {
            let j = self.transmission_jacobian(t, x, i);
            out.view_mut((i * d, (i - 1) * d), (d, d)).copy_from(&j);
        }
        out
    }
}
