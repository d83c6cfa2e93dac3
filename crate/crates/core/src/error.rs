use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("configuration error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("model error: {0}")]
    Model(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("evaluation outside the grid interior: {0}")]
    Extrapolation(String),
    #[error("{}", nonconvergence_msg(*.segment, .history))]
    NonConvergence {
        segment: Option<usize>,
        history: Vec<f64>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn nonconvergence_msg(segment: Option<usize>, history: &[f64]) -> String {
    let tail: Vec<String> = history.iter().rev().take(4).rev().map(|v| format!("{v:.3e}")).collect();
    match segment {
        Some(k) => format!("Picard iteration diverged on segment {k} (last sup-changes: {})", tail.join(", ")),
        None => format!("Picard iteration diverged (last sup-changes: {})", tail.join(", ")),
    }
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
