//! Closed-form scalar test functions used as terminal data and sources.

use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

/// A scalar function of the state, selected by name in configs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `offset + <coeffs, x>`.
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `x_index^2`.
    Square { index: usize },
    /// `amp * sin(freq * x_index)`.
    Sin {
        index: usize,
        #[serde(default = "one")]
        freq: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    /// `amp * cos(freq * x_index)`.
    Cos {
        index: usize,
        #[serde(default = "one")]
        freq: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    /// `amp * |x_index - center|^power`.
    Kink {
        index: usize,
        #[serde(default)]
        center: f64,
        power: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    Sum { terms: Vec<ScalarFn> },
}

impl ScalarFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant { value } => *value,
            ScalarFn::Linear { coeffs, offset } => offset + coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>(),
            ScalarFn::Square { index } => x[*index] * x[*index],
            ScalarFn::Sin { index, freq, amp } => amp * (freq * x[*index]).sin(),
            ScalarFn::Cos { index, freq, amp } => amp * (freq * x[*index]).cos(),
            ScalarFn::Kink { index, center, power, amp } => amp * (x[*index] - center).abs().powf(*power),
            ScalarFn::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    /// Largest coordinate index referenced.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            ScalarFn::Zero | ScalarFn::Constant { .. } => None,
            ScalarFn::Linear { coeffs, .. } => coeffs.len().checked_sub(1),
            ScalarFn::Square { index }
            | ScalarFn::Sin { index, .. }
            | ScalarFn::Cos { index, .. }
            | ScalarFn::Kink { index, .. } => Some(*index),
            ScalarFn::Sum { terms } => terms.iter().filter_map(|t| t.max_index()).max(),
        }
    }

    /// Polynomial degree when the function is a polynomial of degree at most 2.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match self {
            ScalarFn::Zero | ScalarFn::Constant { .. } => Some(0),
            ScalarFn::Linear { .. } => Some(1),
            ScalarFn::Square { .. } => Some(2),
            ScalarFn::Sum { terms } => terms.iter().map(|t| t.polynomial_degree()).try_fold(0, |m, d| d.map(|d| m.max(d))),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarFn::Zero => true,
            ScalarFn::Constant { value } => *value == 0.0,
            ScalarFn::Sum { terms } => terms.iter().all(|t| t.is_zero()),
            _ => false,
        }
    }
}
