//! JSON configuration schema.
//!
//! Matrices are row-major arrays of rows; a bare number stands for a 1×1
//! matrix (or a length-1 vector). Unknown keys inside a section are schema
//! errors, unknown top-level keys are ignored so that reports can be fed
//! back as configs.

use nalgebra::{DMatrix, DVector};
use pmlkit::gauss::SymMatrix;
use serde::{Deserialize, Serialize};

use crate::report::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorInput {
    Scalar(f64),
    Entries(Vec<f64>),
}

impl MatrixInput {
    pub fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>, CliError> {
        let m = match self {
            MatrixInput::Scalar(v) => DMatrix::from_element(1, 1, *v),
            MatrixInput::Rows(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if r == 0 || c == 0 {
                    return Err(CliError::schema(format!("{name}: matrix must be non-empty")));
                }
                if rows.iter().any(|row| row.len() != c) {
                    return Err(CliError::schema(format!("{name}: rows have different lengths")));
                }
                DMatrix::from_fn(r, c, |i, j| rows[i][j])
            }
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(CliError::schema(format!("{name}: entries must be finite")));
        }
        Ok(m)
    }

    pub fn to_sym(&self, name: &str) -> Result<SymMatrix, CliError> {
        SymMatrix::new(self.to_matrix(name)?).map_err(|e| CliError::schema(format!("{name}: {e}")))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixInput::Rows((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
    }
}

impl VectorInput {
    pub fn to_vector(&self, name: &str) -> Result<DVector<f64>, CliError> {
        let v = match self {
            VectorInput::Scalar(v) => DVector::from_element(1, *v),
            VectorInput::Entries(e) if e.is_empty() => {
                return Err(CliError::schema(format!("{name}: vector must be non-empty")))
            }
            VectorInput::Entries(e) => DVector::from_column_slice(e),
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::schema(format!("{name}: entries must be finite")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_x: Option<VectorInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_y: Option<VectorInput>,
    pub sigma_xx: MatrixInput,
    pub sigma_xy: MatrixInput,
    pub sigma_yy: MatrixInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub epsilon: f64,
    pub delta: f64,
}

/// Query of a Gaussian mechanism: either `Z = C X` (`c` given) or a general
/// jointly Gaussian `Z` (`sigma_xz`, `sigma_zz` given).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_x: Option<VectorInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_z: Option<VectorInput>,
    pub sigma_xx: MatrixInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MatrixInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_xz: Option<MatrixInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_zz: Option<MatrixInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<MatrixInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "A")]
    pub a: MatrixInput,
    #[serde(rename = "C")]
    pub c: MatrixInput,
    #[serde(rename = "Q")]
    pub q: MatrixInput,
    #[serde(rename = "Theta", default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<MatrixInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemSection {
    #[serde(rename = "A")]
    pub a: MatrixInput,
    #[serde(rename = "C")]
    pub c: MatrixInput,
    #[serde(rename = "Q")]
    pub q: MatrixInput,
    pub epsilon: f64,
    pub delta: f64,
    /// Fixed noise; designed from the budget when absent.
    #[serde(rename = "Theta", default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<MatrixInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub subsystems: Vec<SubsystemSection>,
    pub weights: Vec<MatrixInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

/// Parameters of `convert`. A source PML budget comes from the `budget`
/// section; `delta` is the PML `δ` of a target budget (defaults to
/// `budget.delta`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_xx: Option<MatrixInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_dp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_dp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_mi: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convert: Option<ConvertSection>,
    /// Observation `y` for `pml-eval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<VectorInput>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| CliError::schema(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that do not need any linear algebra.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(b) = &self.budget {
            check_budget(b.epsilon, b.delta, "budget")?;
        }
        if let Some(net) = &self.network {
            if net.subsystems.is_empty() {
                return Err(CliError::schema("network.subsystems must be non-empty"));
            }
            if net.weights.len() != net.subsystems.len() {
                return Err(CliError::schema(format!(
                    "network.weights has {} entries for {} subsystems",
                    net.weights.len(),
                    net.subsystems.len()
                )));
            }
            for (i, s) in net.subsystems.iter().enumerate() {
                check_budget(s.epsilon, s.delta, &format!("network.subsystems[{i}]"))?;
            }
        }
        if let Some(sim) = &self.sim {
            if sim.horizon == Some(0) {
                return Err(CliError::schema("sim.horizon must be positive"));
            }
        }
        if let Some(c) = &self.convert {
            if let Some(d) = c.delta {
                if !(d > 0.0 && d < 1.0) {
                    return Err(CliError::schema("convert.delta must lie in (0, 1)"));
                }
            }
            if let Some(d) = c.delta_dp {
                if !(d > 0.0 && d < 1.0) {
                    return Err(CliError::schema("convert.delta_dp must lie in (0, 1)"));
                }
            }
            if let Some(z) = c.zeta {
                if !(z > 0.0 && z.is_finite()) {
                    return Err(CliError::schema("convert.zeta must be positive"));
                }
            }
            if c.l == Some(0) || c.n == Some(0) {
                return Err(CliError::schema("convert.l and convert.n must be positive"));
            }
        }
        Ok(())
    }

    pub fn budget(&self) -> Result<&BudgetSection, CliError> {
        self.budget.as_ref().ok_or_else(|| CliError::schema("missing section: budget"))
    }

    pub fn sim_section(&self) -> SimSection {
        self.sim.clone().unwrap_or(SimSection { seed: None, samples: None, horizon: None })
    }
}

fn check_budget(epsilon: f64, delta: f64, name: &str) -> Result<(), CliError> {
    if !epsilon.is_finite() {
        return Err(CliError::schema(format!("{name}.epsilon must be finite")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CliError::schema(format!("{name}.delta must lie in (0, 1)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_and_rows_both_parse() {
        let cfg = Config::parse(
            r#"{"joint": {"sigma_xx": 1, "sigma_xy": [[1]], "sigma_yy": [[2.0]]}, "budget": {"epsilon": 1, "delta": 0.1}}"#,
        )
        .unwrap();
        let j = cfg.joint.unwrap();
        assert_eq!(j.sigma_xx.to_matrix("x").unwrap(), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(j.sigma_yy.to_matrix("x").unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn ragged_matrix_is_a_schema_error() {
        let m = MatrixInput::Rows(vec![vec![1.0, 2.0], vec![3.0]]);
        assert_eq!(m.to_matrix("m").unwrap_err().code, 2);
    }

    #[test]
    fn out_of_range_delta_is_rejected() {
        let err = Config::parse(r#"{"budget": {"epsilon": 1, "delta": 1.5}}"#).unwrap_err();
        assert_eq!(err.code, 2);
    }

    #[test]
    fn unknown_section_field_is_rejected() {
        let err = Config::parse(r#"{"budget": {"epsilon": 1, "delta": 0.1, "eps": 2}}"#).unwrap_err();
        assert_eq!(err.code, 2);
    }

    #[test]
    fn weights_must_match_subsystems() {
        let err = Config::parse(
            r#"{"network": {"subsystems": [{"A": 0.5, "C": 1, "Q": 1, "epsilon": 6, "delta": 0.001}], "weights": []}}"#,
        )
        .unwrap_err();
        assert_eq!(err.code, 2);
    }

    #[test]
    fn matrix_round_trips_through_rows() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(MatrixInput::from_matrix(&m).to_matrix("m").unwrap(), m);
    }
}
