//! Diagnostic records and their deterministic serialization.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

/// Payload of a diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Scalar { value: f64 },
    Series { x: Vec<f64>, y: Vec<f64> },
    Table { columns: Vec<String>, rows: Vec<Vec<f64>> },
    None,
}

/// A named diagnostic result with provenance and an optional verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub name: String,
    pub module: String,
    /// Short label of the estimate being checked.
    pub anchor: String,
    pub payload: Payload,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    pub details: BTreeMap<String, Value>,
}

impl DiagnosticReport {
    pub fn new(name: impl Into<String>, module: impl Into<String>, anchor: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            module: module.into(),
            anchor: anchor.into(),
            payload: Payload::None,
            pass: None,
            details: BTreeMap::new(),
        }
    }

    pub fn scalar(mut self, value: f64) -> Self {
        self.payload = Payload::Scalar { value };
        self
    }

    pub fn series(mut self, x: Vec<f64>, y: Vec<f64>) -> Self {
        self.payload = Payload::Series { x, y };
        self
    }

    pub fn table(mut self, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        self.payload = Payload::Table { columns, rows };
        self
    }

    pub fn verdict(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }

    pub fn detail(mut self, key: impl Into<String>, value: impl Serialize) -> Self {
        self.details.insert(key.into(), json_value(value));
        self
    }

    pub fn failed(&self) -> bool {
        self.pass == Some(false)
    }
}

/// Converts to JSON, mapping non-finite floats to strings so output stays valid.
pub fn json_value(value: impl Serialize) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

/// Formats a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{:.16e}", v)
    }
}
