//! Privacy-aware sensor fusion over independent LTI subsystems.
//!
//! Each subsystem `i` publishes `Y_i = C_i X_i + V_i` and the fusion center
//! forms `Ȳ = Σ_i L_i Y_i`. Noise is designed per subsystem at the boundary
//! `Θ_i = κ_i/(1−κ_i) C_i Σ_i Cᵢᵀ`, and accuracy is `J = Σ_i tr(L_i Θ_i L_iᵀ)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::{default_psd_tolerance, min_eig_sym, numerical_rank, spectral_radius, SymMatrix};
use crate::lti::{check_shapes, is_schur_stable, solve_lyapunov, LtiSystem, SCHUR_MARGIN};
use crate::mechanism::{design_theta_linear, LinearMechanismSpec, ThetaPolicy};
use crate::pml::{kappa, PrivacyBudget};

/// Default lower bound `c` on designed noise in the joint `(Q, Θ)` program.
pub const DEFAULT_C_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: SymMatrix,
    /// Measurement noise; `None` until designed.
    pub theta: Option<SymMatrix>,
    /// Fusion weight `L_i` (`q × m_i`).
    pub weight: DMatrix<f64>,
    pub budget: PrivacyBudget,
}

impl Subsystem {
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        q: SymMatrix,
        weight: DMatrix<f64>,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        check_shapes(&a, &c, &q, &SymMatrix::identity(c.nrows()))?;
        if !is_schur_stable(&a) {
            return Err(Error::NotSchurStable { spectral_radius: spectral_radius(&a) });
        }
        if min_eig_sym(&q) <= 0.0 {
            return Err(Error::not_pd("state-noise covariance Q"));
        }
        if weight.ncols() != c.nrows() || weight.nrows() == 0 {
            return Err(Error::dims(
                "fusion weight L",
                format!("q x {}", c.nrows()),
                format!("{}x{}", weight.nrows(), weight.ncols()),
            ));
        }
        if weight.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("fusion weight must be finite".into()));
        }
        if budget.n != a.nrows() {
            return Err(Error::dims("budget private dimension n", a.nrows(), budget.n));
        }
        let rank = numerical_rank(&c);
        if budget.l != rank {
            return Err(Error::RankMismatch { budget: budget.l, actual: rank });
        }
        Ok(Self { a, c, q, theta: None, weight, budget })
    }

    /// Scalar subsystem `x' = a x + w`, `y = c x + v`, weight `l`.
    pub fn scalar(a: f64, c: f64, q: f64, weight: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self::new(m(a), m(c), SymMatrix::scalar(q)?, m(weight), PrivacyBudget::new(epsilon, delta, 1, 1)?)
    }

    /// Sets the measurement noise. Any PSD matrix is accepted here so that
    /// noiseless reference runs can be expressed.
    pub fn with_theta(mut self, theta: SymMatrix) -> Result<Self> {
        if theta.dim() != self.c.nrows() {
            return Err(Error::dims("Θ", self.c.nrows(), theta.dim()));
        }
        let min = min_eig_sym(&theta);
        if min < -default_psd_tolerance(&theta) {
            return Err(Error::NotPsd { what: "Θ".into(), min_eigenvalue: min });
        }
        self.theta = Some(theta);
        Ok(self)
    }

    pub fn prior(&self) -> Result<SymMatrix> {
        subsystem_prior(&self.a, &self.q)
    }

    /// The subsystem as an [`LtiSystem`]; requires a positive definite `Θ`.
    pub fn lti_system(&self) -> Result<LtiSystem> {
        let theta = self.theta.clone().ok_or_else(|| Error::InvalidInput("Θ not designed".into()))?;
        LtiSystem::new(self.a.clone(), self.c.clone(), self.q.clone(), theta)
    }

    fn theta_or_err(&self) -> Result<&SymMatrix> {
        self.theta.as_ref().ok_or_else(|| Error::InvalidInput("Θ not designed".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationNetwork {
    subsystems: Vec<Subsystem>,
    output_dim: usize,
}

impl AggregationNetwork {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        let first = subsystems
            .first()
            .ok_or_else(|| Error::InvalidInput("network needs at least one subsystem".into()))?;
        let q = first.weight.nrows();
        for s in &subsystems {
            if s.weight.nrows() != q {
                return Err(Error::dims("fusion weight rows", q, s.weight.nrows()));
            }
        }
        Ok(Self { subsystems, output_dim: q })
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Designs every subsystem's `Θ_i` in parallel; results are assembled
    /// in subsystem order.
    pub fn designed(&self) -> Result<Self> {
        let designed: Vec<Subsystem> = self
            .subsystems
            .par_iter()
            .map(|s| s.clone().with_theta(design_subsystem_noise(s)?))
            .collect::<Result<_>>()?;
        Ok(Self { subsystems: designed, output_dim: self.output_dim })
    }

    pub fn thetas(&self) -> Result<Vec<SymMatrix>> {
        self.subsystems.iter().map(|s| s.theta_or_err().cloned()).collect()
    }
}

/// Stationary prior `Σ_i = A_i Σ_i A_iᵀ + Q_i`.
pub fn subsystem_prior(a: &DMatrix<f64>, q: &SymMatrix) -> Result<SymMatrix> {
    solve_lyapunov(a, q)
}

/// Boundary noise `κ/(1−κ) C Σ Cᵀ + jitter·I` for the subsystem's budget.
pub fn design_subsystem_noise(sub: &Subsystem) -> Result<SymMatrix> {
    let spec = LinearMechanismSpec::centered(sub.prior()?, sub.c.clone())?;
    design_theta_linear(&spec, &sub.budget, &ThetaPolicy::boundary())
}

/// `J = Σ_i tr(L_i Θ_i L_iᵀ)`.
pub fn accuracy_metric(net: &AggregationNetwork) -> Result<f64> {
    net.subsystems
        .iter()
        .map(|s| Ok(s.theta_or_err()?.congruence(&s.weight).trace()))
        .sum()
}

/// Analytic optimum of the relaxed joint program for a scalar subsystem:
/// `q = c_floor` and `θ = max(κ/(1−κ) c² Σ, c_floor)` with `Σ = q/(1−a²)`.
pub fn scalar_joint_design(
    a: f64,
    c: f64,
    l_weight: f64,
    budget: &PrivacyBudget,
    c_floor: f64,
) -> Result<(f64, f64)> {
    if !(c_floor.is_finite() && c_floor > 0.0) {
        return Err(Error::Domain(format!("c_floor must be positive, got {c_floor}")));
    }
    if !l_weight.is_finite() || !c.is_finite() {
        return Err(Error::InvalidInput("weight and c must be finite".into()));
    }
    if c == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    if budget.n != 1 || budget.l != 1 {
        return Err(Error::InvalidInput("scalar design needs a budget with n = l = 1".into()));
    }
    if !(a.abs() < 1.0 - SCHUR_MARGIN) {
        return Err(Error::NotSchurStable { spectral_radius: a.abs() });
    }
    let k = kappa(budget)?;
    let q = c_floor;
    let sigma = q / (1.0 - a * a);
    let theta = (k / (1.0 - k) * c * c * sigma).max(c_floor);
    Ok((q, theta))
}

/// `Ȳ = Σ_i L_i y_i`.
pub fn aggregate(net: &AggregationNetwork, ys: &[DVector<f64>]) -> Result<DVector<f64>> {
    if ys.len() != net.subsystems.len() {
        return Err(Error::dims("number of outputs", net.subsystems.len(), ys.len()));
    }
    let mut out = DVector::zeros(net.output_dim);
    for (s, y) in net.subsystems.iter().zip(ys) {
        if y.len() != s.weight.ncols() {
            return Err(Error::dims("subsystem output", s.weight.ncols(), y.len()));
        }
        out += &s.weight * y;
    }
    Ok(out)
}
