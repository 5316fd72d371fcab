//! Discrete-time LTI Gaussian systems
//!
//! ```text
//! X_{k+1} = A X_k + W_k,   W_k ~ N(0, Q)
//! Y_k     = C X_k + V_k,   V_k ~ N(0, Θ)
//! ```
//!
//! with Lyapunov priors, Kalman recursion, the steady-state Riccati fixed
//! point and PML-based lower bounds on the steady-state error covariance.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gauss::{
    logdet_psd, min_eig_sym, numerical_rank, spd_inverse, spd_solve, spectral_radius, SymMatrix,
};
use crate::mechanism::{mechanism_joint, LinearMechanismSpec};
use crate::pml::{half_chi2_quantile, tightest_epsilon_for_joint, PrivacyBudget};

/// `A` is Schur stable when its spectral radius is below `1 − SCHUR_MARGIN`.
pub const SCHUR_MARGIN: f64 = 1e-10;
/// Largest dimension solved by the vectorized (Kronecker) Lyapunov system.
pub const LYAPUNOV_DIRECT_MAX_DIM: usize = 50;
pub const RICCATI_MAX_ITER: usize = 1_000_000;
pub const RICCATI_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    q: SymMatrix,
    theta: SymMatrix,
    l: usize,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, q: SymMatrix, theta: SymMatrix) -> Result<Self> {
        check_shapes(&a, &c, &q, &theta)?;
        if min_eig_sym(&q) <= 0.0 {
            return Err(Error::not_pd("state-noise covariance Q"));
        }
        if min_eig_sym(&theta) <= 0.0 {
            return Err(Error::not_pd("measurement-noise covariance Θ"));
        }
        let rho = spectral_radius(&a);
        if !is_schur_stable(&a) {
            return Err(Error::NotSchurStable { spectral_radius: rho });
        }
        let l = numerical_rank(&c);
        if l == 0 {
            return Err(Error::ZeroMatrix);
        }
        if l < c.nrows() {
            log::warn!("C has rank {l} < {} rows; using {l} χ² degrees of freedom", c.nrows());
        }
        Ok(Self { a, c, q, theta, l })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn q(&self) -> &SymMatrix {
        &self.q
    }
    pub fn theta(&self) -> &SymMatrix {
        &self.theta
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Measurement dimension.
    pub fn m(&self) -> usize {
        self.c.nrows()
    }
    /// Rank of `C`.
    pub fn l(&self) -> usize {
        self.l
    }

    /// The same system with a different measurement-noise covariance.
    pub fn with_theta(&self, theta: SymMatrix) -> Result<Self> {
        Self::new(self.a.clone(), self.c.clone(), self.q.clone(), theta)
    }
}

pub(crate) fn check_shapes(a: &DMatrix<f64>, c: &DMatrix<f64>, q: &SymMatrix, theta: &SymMatrix) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::dims("A", "square", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if c.ncols() != n || c.nrows() == 0 {
        return Err(Error::dims("C", format!("m x {n}"), format!("{}x{}", c.nrows(), c.ncols())));
    }
    if q.dim() != n {
        return Err(Error::dims("Q", n, q.dim()));
    }
    if theta.dim() != c.nrows() {
        return Err(Error::dims("Θ", c.nrows(), theta.dim()));
    }
    if a.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("A and C must be finite".into()));
    }
    Ok(())
}

pub fn is_schur_stable(a: &DMatrix<f64>) -> bool {
    a.is_square() && !a.is_empty() && spectral_radius(a) < 1.0 - SCHUR_MARGIN
}

/// Solves `Σ = A Σ Aᵀ + Q` for Schur-stable `A` and `Q ⪰ 0`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &SymMatrix) -> Result<SymMatrix> {
    let n = q.dim();
    if a.shape() != (n, n) {
        return Err(Error::dims("A", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
    }
    if !is_schur_stable(a) {
        return Err(Error::NotSchurStable { spectral_radius: spectral_radius(a) });
    }
    if n <= LYAPUNOV_DIRECT_MAX_DIM {
        lyapunov_direct(a, q)
    } else {
        Ok(lyapunov_doubling(a, q))
    }
}

/// `(I − A ⊗ A) vec Σ = vec Q`.
fn lyapunov_direct(a: &DMatrix<f64>, q: &SymMatrix) -> Result<SymMatrix> {
    let n = q.dim();
    let system = DMatrix::identity(n * n, n * n) - a.kronecker(a);
    let rhs = nalgebra::DVector::from_column_slice(q.as_matrix().as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotSchurStable { spectral_radius: spectral_radius(a) })?;
    Ok(SymMatrix::symmetrize(DMatrix::from_column_slice(n, n, sol.as_slice())))
}

/// `Σ = Σ_k A^k Q (A^k)ᵀ` accumulated by squaring.
fn lyapunov_doubling(a: &DMatrix<f64>, q: &SymMatrix) -> SymMatrix {
    let mut s = q.as_matrix().clone();
    let mut ak = a.clone();
    for _ in 0..200 {
        let incr = &ak * &s * ak.transpose();
        s += &incr;
        ak = &ak * &ak;
        if incr.norm() <= 1e-17 * s.norm() || ak.norm() == 0.0 {
            break;
        }
    }
    SymMatrix::symmetrize(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// Prior covariance `P⁻_k`.
    pub p_minus: SymMatrix,
    /// Gain `K_k`.
    pub gain: DMatrix<f64>,
    /// Posterior covariance `P_k`.
    pub p: SymMatrix,
}

/// One covariance/gain update for explicit matrices. `Q` and `Θ` may be
/// singular as long as the innovation covariance `C P⁻ Cᵀ + Θ` is not.
pub fn kalman_update(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &SymMatrix,
    theta: &SymMatrix,
    p_prev: &SymMatrix,
) -> Result<KalmanState> {
    check_shapes(a, c, q, theta)?;
    if p_prev.dim() != a.nrows() {
        return Err(Error::dims("P_prev", a.nrows(), p_prev.dim()));
    }
    let p_minus = p_prev.congruence(a).add(q);
    let innovation = p_minus.congruence(c).add(theta);
    // K = P⁻Cᵀ S⁻¹  ⇔  Kᵀ = S⁻¹ C P⁻
    let gain = spd_solve(&innovation, &(c * &*p_minus))
        .map_err(|_| Error::not_pd("innovation covariance C P⁻ Cᵀ + Θ"))?
        .transpose();
    let n = a.nrows();
    let p = SymMatrix::symmetrize((DMatrix::identity(n, n) - &gain * c) * &*p_minus);
    Ok(KalmanState { p_minus, gain, p })
}

pub fn kalman_step(p_prev: &SymMatrix, sys: &LtiSystem) -> Result<KalmanState> {
    kalman_update(&sys.a, &sys.c, &sys.q, &sys.theta, p_prev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Steady-state posterior covariance `P`.
    pub p: SymMatrix,
    /// Steady-state prior covariance `P⁻`.
    pub p_minus: SymMatrix,
    pub gain: DMatrix<f64>,
    pub iterations: usize,
    /// `‖P⁻ − A(P⁻ − P⁻Cᵀ(CP⁻Cᵀ+Θ)⁻¹CP⁻)Aᵀ − Q‖_F`.
    pub dare_residual: f64,
    /// `((P⁻)⁻¹ + Cᵀ Θ⁻¹ C)⁻¹`, which must equal `p`.
    pub p_information_form: SymMatrix,
}

/// Frobenius-norm residual of the prior-form Riccati equation at `p_minus`.
pub fn dare_residual(sys: &LtiSystem, p_minus: &SymMatrix) -> Result<f64> {
    let innovation = p_minus.congruence(&sys.c).add(&sys.theta);
    let cp = &sys.c * &**p_minus;
    let correction = cp.transpose() * spd_solve(&innovation, &cp)?;
    let post = &**p_minus - correction;
    let rhs = &sys.a * post * sys.a.transpose() + sys.q.as_matrix();
    Ok((&**p_minus - rhs).norm())
}

/// Iterates [`kalman_step`] from `P₀ = 0` to its fixed point.
pub fn steady_state_covariance(sys: &LtiSystem) -> Result<SteadyState> {
    let mut p = SymMatrix::zeros(sys.n());
    for it in 1..=RICCATI_MAX_ITER {
        let next = kalman_step(&p, sys)?;
        let change = (next.p.as_matrix() - p.as_matrix()).norm();
        let scale = p.as_matrix().norm().max(1.0);
        p = next.p.clone();
        if change <= RICCATI_REL_TOL * scale {
            let dare = dare_residual(sys, &next.p_minus)?;
            let theta_inv = spd_inverse(&sys.theta)?;
            let info = spd_inverse(&next.p_minus)?.add(&theta_inv.congruence(&sys.c.transpose()));
            return Ok(SteadyState {
                p_information_form: spd_inverse(&info)?,
                p: next.p,
                p_minus: next.p_minus,
                gain: next.gain,
                iterations: it,
                dare_residual: dare,
            });
        }
    }
    Err(Error::NonConvergence { iterations: RICCATI_MAX_ITER })
}

/// `½F⁻¹_{χ²_m}(1−δ) − ε + log det Q`, a lower bound on `log det P`.
pub fn pml_error_lower_bound_logdet(b: &PrivacyBudget, q: &SymMatrix, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("measurement dimension m must be positive".into()));
    }
    Ok(half_chi2_quantile(b.delta, m) - b.epsilon + logdet_psd(q).map_err(|_| Error::not_pd("Q"))?)
}

/// `n + ½F⁻¹_{χ²_m}(1−δ) − ε + log det Q`, a lower bound on `tr P`.
pub fn pml_error_lower_bound_trace(b: &PrivacyBudget, q: &SymMatrix, m: usize, n: usize) -> Result<f64> {
    if n != q.dim() {
        return Err(Error::dims("Q vs state dimension n", n, q.dim()));
    }
    Ok(n as f64 + pml_error_lower_bound_logdet(b, q, m)?)
}

/// The linear mechanism `(C, Θ)` acting on the stationary prior of `sys`.
pub fn stationary_mechanism(sys: &LtiSystem) -> Result<LinearMechanismSpec> {
    LinearMechanismSpec::centered(solve_lyapunov(&sys.a, &sys.q)?, sys.c.clone())
}

/// Least `ε` for which the measurement channel is `(ε, δ)`-PML private
/// under the stationary prior: `½F⁻¹_{χ²_l}(1−δ) + log det Σ_XX − log det Γ`.
pub fn tightest_epsilon(sys: &LtiSystem, delta: f64) -> Result<f64> {
    let joint = mechanism_joint(&stationary_mechanism(sys)?, &sys.theta)?;
    tightest_epsilon_for_joint(&joint, delta)
}
