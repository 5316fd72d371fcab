//! Report assembly and the exit-code map.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use pmlkit::gauss::SymMatrix;
use pmlkit::Error;
use serde_json::{json, Map, Value};

pub const EXIT_OK: u8 = 0;
pub const EXIT_SCHEMA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_UNSTABLE: u8 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn schema(msg: impl Into<String>) -> Self {
        Self { code: EXIT_SCHEMA, message: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NecessaryConditionViolated { .. } => EXIT_INFEASIBLE,
            Error::NotSchurStable { .. } => EXIT_UNSTABLE,
            Error::Domain(_)
            | Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::NotSymmetric { .. }
            | Error::RankMismatch { .. } => EXIT_SCHEMA,
            Error::NotPositiveDefinite { .. }
            | Error::NotPsd { .. }
            | Error::ZeroMatrix
            | Error::NoRoot(_)
            | Error::NonConvergence { .. } => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

/// A finite `f64` as JSON; non-finite values would not survive the round trip.
pub fn num(v: f64) -> Result<Value, CliError> {
    if v.is_finite() {
        Ok(json!(v))
    } else {
        Err(CliError::numerical(format!("non-finite result {v}")))
    }
}

pub fn matrix(m: &DMatrix<f64>) -> Result<Value, CliError> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|&v| num(v)).collect::<Result<Vec<_>, _>>().map(Value::Array))
        .collect::<Result<Vec<_>, _>>()
        .map(Value::Array)
}

pub fn sym(m: &SymMatrix) -> Result<Value, CliError> {
    matrix(m.as_matrix())
}

pub fn vector(v: &DVector<f64>) -> Result<Value, CliError> {
    v.iter().map(|&x| num(x)).collect::<Result<Vec<_>, _>>().map(Value::Array)
}

pub fn provenance(seed: Option<u64>) -> Value {
    json!({
        "toolkit": "pmlkit",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
    })
}

/// Serializes with sorted keys (serde_json's default map is ordered) and a
/// trailing newline.
pub fn render(report: &Map<String, Value>) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("JSON values always serialize");
    s.push('\n');
    s
}
