//! Pointwise maximal leakage for jointly Gaussian private/public pairs.
//!
//! For `(X, Y)` jointly Gaussian with `rank Σ_XY = l > 0`, the leakage of an
//! observation `y` is
//!
//! ```text
//! ℓ(X → y) = log det Σ_XX − log det Γ + ξ(y)/2
//! ```
//!
//! where `Γ` is the posterior covariance and `ξ(y)` is a quadratic form in
//! `y − μ_Y` that is χ²_l distributed under the marginal of `Y`. That makes
//! `(ε, δ)`-PML privacy a one-line χ² quantile test.
//!
//! The determinant terms use the conditional density normalization `1/det Γ`
//! (no square root). [`pml_oracle_numeric`] reports both normalizations from
//! an independent maximization so the choice stays visible in tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauss::{
    chi2_cdf, chi2_quantile, logdet_psd, matrix::{compact_svd_with_rank, sorted_svd}, min_eig_sym,
    numerical_rank, spd_inverse, spd_solve, sym_inv_sqrt, sym_sqrt, CompactSvd, SymMatrix,
};

/// Slack on the log-determinant side of the PML privacy inequality. Designs
/// placed exactly on the boundary are accepted despite rounding.
pub const PRIVACY_CHECK_SLACK: f64 = 1e-9;

/// Joint law of the private `X ∈ ℝⁿ` and public `Y ∈ ℝᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian {
    mu_x: DVector<f64>,
    mu_y: DVector<f64>,
    sigma_xx: SymMatrix,
    sigma_xy: DMatrix<f64>,
    sigma_yy: SymMatrix,
    l: usize,
}

impl JointGaussian {
    pub fn new(
        mu_x: DVector<f64>,
        mu_y: DVector<f64>,
        sigma_xx: SymMatrix,
        sigma_xy: DMatrix<f64>,
        sigma_yy: SymMatrix,
    ) -> Result<Self> {
        Self::build(mu_x, mu_y, sigma_xx, sigma_xy, sigma_yy, true)
    }

    /// Joint law induced by a mechanism. Only strict positive definiteness
    /// (a successful Cholesky factorization) is required: output directions
    /// that carry no signal may hold nothing but the design jitter.
    pub(crate) fn from_mechanism(
        mu_x: DVector<f64>,
        mu_y: DVector<f64>,
        sigma_xx: SymMatrix,
        sigma_xy: DMatrix<f64>,
        sigma_yy: SymMatrix,
    ) -> Result<Self> {
        Self::build(mu_x, mu_y, sigma_xx, sigma_xy, sigma_yy, false)
    }

    fn build(
        mu_x: DVector<f64>,
        mu_y: DVector<f64>,
        sigma_xx: SymMatrix,
        sigma_xy: DMatrix<f64>,
        sigma_yy: SymMatrix,
        conditioned: bool,
    ) -> Result<Self> {
        let (n, m) = (sigma_xx.dim(), sigma_yy.dim());
        if mu_x.len() != n {
            return Err(Error::dims("JointGaussian mu_x", n, mu_x.len()));
        }
        if mu_y.len() != m {
            return Err(Error::dims("JointGaussian mu_y", m, mu_y.len()));
        }
        if sigma_xy.shape() != (n, m) {
            return Err(Error::dims(
                "JointGaussian sigma_xy",
                format!("{n}x{m}"),
                format!("{}x{}", sigma_xy.nrows(), sigma_xy.ncols()),
            ));
        }
        let full = joint_covariance(&sigma_xx, &sigma_xy, &sigma_yy);
        let min = min_eig_sym(&full);
        let floor = if conditioned { 1e-10 * full.trace() / (n + m) as f64 } else { 0.0 };
        if min <= floor || full.as_matrix().clone().cholesky().is_none() {
            return Err(Error::not_pd(format!(
                "joint covariance [[Σ_XX, Σ_XY], [Σ_XYᵀ, Σ_YY]] (min eigenvalue {min:e})"
            )));
        }
        let l = numerical_rank(&sigma_xy);
        if l == 0 {
            return Err(Error::InvalidInput(
                "Σ_XY has rank 0: X and Y are independent and nothing leaks".into(),
            ));
        }
        Ok(Self { mu_x, mu_y, sigma_xx, sigma_xy, sigma_yy, l })
    }

    /// Zero-mean convenience constructor.
    pub fn centered(sigma_xx: SymMatrix, sigma_xy: DMatrix<f64>, sigma_yy: SymMatrix) -> Result<Self> {
        let (n, m) = (sigma_xx.dim(), sigma_yy.dim());
        Self::new(DVector::zeros(n), DVector::zeros(m), sigma_xx, sigma_xy, sigma_yy)
    }

    pub fn mu_x(&self) -> &DVector<f64> {
        &self.mu_x
    }
    pub fn mu_y(&self) -> &DVector<f64> {
        &self.mu_y
    }
    pub fn sigma_xx(&self) -> &SymMatrix {
        &self.sigma_xx
    }
    pub fn sigma_xy(&self) -> &DMatrix<f64> {
        &self.sigma_xy
    }
    pub fn sigma_yy(&self) -> &SymMatrix {
        &self.sigma_yy
    }
    /// Private dimension `n`.
    pub fn n(&self) -> usize {
        self.sigma_xx.dim()
    }
    /// Public dimension `m`.
    pub fn m(&self) -> usize {
        self.sigma_yy.dim()
    }
    /// Effective rank `l` of `Σ_XY`.
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn full_covariance(&self) -> SymMatrix {
        joint_covariance(&self.sigma_xx, &self.sigma_xy, &self.sigma_yy)
    }
}

fn joint_covariance(sxx: &SymMatrix, sxy: &DMatrix<f64>, syy: &SymMatrix) -> SymMatrix {
    let (n, m) = (sxx.dim(), syy.dim());
    let mut full = DMatrix::zeros(n + m, n + m);
    full.view_mut((0, 0), (n, n)).copy_from(sxx.as_matrix());
    full.view_mut((0, n), (n, m)).copy_from(sxy);
    full.view_mut((n, 0), (m, n)).copy_from(&sxy.transpose());
    full.view_mut((n, n), (m, m)).copy_from(syy.as_matrix());
    SymMatrix::symmetrize(full)
}

/// `(ε, δ)` target together with the ranks that fix `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    /// χ² degrees of freedom (rank of the cross covariance).
    pub l: usize,
    /// Private dimension.
    pub n: usize,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, l: usize, n: usize) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::Domain(format!("ε must be finite and nonnegative, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("δ must lie in (0,1), got {delta}")));
        }
        if l == 0 || n == 0 {
            return Err(Error::Domain("budget ranks l and n must be positive".into()));
        }
        Ok(Self { epsilon, delta, l, n })
    }

    /// Budget sized for a given joint law.
    pub fn for_joint(epsilon: f64, delta: f64, j: &JointGaussian) -> Result<Self> {
        Self::new(epsilon, delta, j.l(), j.n())
    }

    /// `½ F⁻¹_{χ²_l}(1 − δ)`.
    pub fn half_quantile(&self) -> f64 {
        half_chi2_quantile(self.delta, self.l)
    }
}

/// `½ F⁻¹_{χ²_l}(1 − δ)` for `δ ∈ (0, 1)`.
pub fn half_chi2_quantile(delta: f64, l: usize) -> f64 {
    0.5 * chi2_quantile(1.0 - delta, l as u32).expect("δ and l validated by caller")
}

/// Derived matrices of the closed-form leakage.
#[derive(Debug, Clone, PartialEq)]
pub struct PmlComponents {
    /// `Γ = Σ_XX − Σ_XY Σ_YY⁻¹ Σ_XYᵀ`
    pub gamma: SymMatrix,
    /// `Ψ = Σ_YY − Σ_XYᵀ Σ_XX⁻¹ Σ_XY`
    pub psi: SymMatrix,
    /// Compact SVD of `Ψ^{-1/2} Σ_XYᵀ Σ_XX⁻¹`.
    pub svd: CompactSvd,
    /// `Ψ^{1/2} U Uᵀ Ψ^{1/2} + Σ_XYᵀ Σ_XX⁻¹ Σ_XY`
    pub weight: SymMatrix,
    pub logdet_sigma_xx: f64,
    pub logdet_gamma: f64,
    /// `Σ_YY⁻¹ · weight · Σ_YY⁻¹`, so that `ξ = dᵀ M d` with `d = y − μ_Y`.
    xi_form: SymMatrix,
    mu_y: DVector<f64>,
}

impl PmlComponents {
    /// `log det Σ_XX − log det Γ`, the leakage at `y = μ_Y`.
    pub fn min_leakage(&self) -> f64 {
        self.logdet_sigma_xx - self.logdet_gamma
    }

    pub fn xi(&self, y: &DVector<f64>) -> Result<f64> {
        if y.len() != self.mu_y.len() {
            return Err(Error::dims("observation y", self.mu_y.len(), y.len()));
        }
        let d = y - &self.mu_y;
        Ok((d.transpose() * &*self.xi_form * &d)[(0, 0)].max(0.0))
    }

    pub fn leakage(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(self.min_leakage() + 0.5 * self.xi(y)?)
    }
}

pub fn pml_components(j: &JointGaussian) -> Result<PmlComponents> {
    let sxx = j.sigma_xx();
    let syy = j.sigma_yy();
    let sxy = j.sigma_xy();

    // Σ_XX⁻¹ Σ_XY and Σ_YY⁻¹ Σ_XYᵀ
    let sxx_inv_sxy = spd_solve(sxx, sxy)?;
    let syy_inv_syx = spd_solve(syy, &sxy.transpose())?;

    let gamma = sxx.sub(&SymMatrix::symmetrize(sxy * &syy_inv_syx));
    let lambda = SymMatrix::symmetrize(sxy.transpose() * &sxx_inv_sxy);
    let psi = syy.sub(&lambda);
    let logdet_gamma = logdet_psd(&gamma).map_err(|_| Error::not_pd("posterior covariance Γ"))?;
    let psi_inv_half = sym_inv_sqrt(&psi).map_err(|_| Error::not_pd("Ψ"))?;
    let psi_half = sym_sqrt(&psi)?;
    let logdet_sigma_xx = logdet_psd(sxx).map_err(|_| Error::not_pd("Σ_XX"))?;

    let b = &*psi_inv_half * sxx_inv_sxy.transpose();
    let svd = compact_svd_with_rank(&b, j.l())?;
    let proj = &svd.u * svd.u.transpose();
    let weight = SymMatrix::symmetrize(&*psi_half * proj * &*psi_half + &*lambda);

    let syy_inv = spd_inverse(syy)?;
    let xi_form = weight.congruence(&syy_inv);

    Ok(PmlComponents {
        gamma,
        psi,
        svd,
        weight,
        logdet_sigma_xx,
        logdet_gamma,
        xi_form,
        mu_y: j.mu_y().clone(),
    })
}

/// `ξ(y) = |Σ_YY⁻¹ (y − μ_Y)|²_weight`.
pub fn xi_statistic(j: &JointGaussian, y: &DVector<f64>) -> Result<f64> {
    pml_components(j)?.xi(y)
}

/// `ℓ(X → y)`.
pub fn pml_leakage(j: &JointGaussian, y: &DVector<f64>) -> Result<f64> {
    pml_components(j)?.leakage(y)
}

/// `P[ℓ(X → Y) ≤ ε] = F_{χ²_l}(2ε − 2 log det Σ_XX + 2 log det Γ)`, zero
/// when the argument is not positive.
pub fn exact_privacy_prob(j: &JointGaussian, epsilon: f64) -> Result<f64> {
    let c = pml_components(j)?;
    Ok(privacy_prob_from_min_leakage(c.min_leakage(), epsilon, j.l()))
}

pub(crate) fn privacy_prob_from_min_leakage(min_leakage: f64, epsilon: f64, l: usize) -> f64 {
    let arg = 2.0 * (epsilon - min_leakage);
    // F_{χ²_1} grows like √q at 0, so a rounding-level gap is treated as 0.
    let noise = 8.0 * f64::EPSILON * epsilon.abs().max(min_leakage.abs()).max(1.0);
    if arg.is_nan() || arg <= noise {
        return 0.0;
    }
    chi2_cdf(arg, l as u32).expect("positive argument")
}

/// The exact `(ε, δ)`-PML test `½F⁻¹_{χ²_l}(1−δ) ≤ ε − log det Σ_XX + log det Γ`.
pub fn check_pml_privacy(j: &JointGaussian, b: &PrivacyBudget) -> Result<bool> {
    if b.l != j.l() {
        return Err(Error::RankMismatch { budget: b.l, actual: j.l() });
    }
    if b.n != j.n() {
        return Err(Error::dims("budget private dimension n", j.n(), b.n));
    }
    let c = pml_components(j)?;
    Ok(b.half_quantile() <= b.epsilon - c.min_leakage() + PRIVACY_CHECK_SLACK)
}

/// The smallest `ε` for which [`check_pml_privacy`] holds at level `δ`.
pub fn tightest_epsilon_for_joint(j: &JointGaussian, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("δ must lie in (0,1), got {delta}")));
    }
    let c = pml_components(j)?;
    Ok(half_chi2_quantile(delta, j.l()) + c.min_leakage())
}

/// `½F⁻¹_{χ²_l}(1−δ) < ε`, necessary for any Gaussian law to meet the budget.
pub fn necessary_condition(b: &PrivacyBudget) -> bool {
    b.half_quantile() < b.epsilon
}

/// `κ_l(ε, δ) = exp((½F⁻¹_{χ²_l}(1−δ) − ε) / n)`, in `(0, 1)` whenever the
/// necessary condition holds.
pub fn kappa(b: &PrivacyBudget) -> Result<f64> {
    let h = b.half_quantile();
    let k = ((h - b.epsilon) / b.n as f64).exp();
    if k >= 1.0 {
        return Err(Error::NecessaryConditionViolated { half_quantile: h, epsilon: b.epsilon });
    }
    Ok(k)
}

/// Leakage at `y` by direct maximization of the posterior/prior density
/// log-ratio over `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLeakage {
    /// Conditional density normalized by `1/det Γ`.
    pub paper_convention: f64,
    /// Standard Gaussian normalization `1/det(Γ)^{1/2}`.
    pub half_logdet_convention: f64,
    /// `max_x` of the exponent difference alone.
    pub quadratic_max: f64,
}

/// Maximizes `log f_{X|Y}(x|y) − log f_X(x)` without the projection closed form.
///
/// By Bayes the density ratio equals `f_{Y|X}(y|x) / f_Y(y)`, with
/// `Y | X = x ~ N(μ_Y + B(x − μ_X), Ψ)` and `B = Σ_XYᵀ Σ_XX⁻¹`. The supremum
/// over `x` is a weighted least-squares fit of `y − μ_Y` by the range of `B`,
/// solved after whitening by the Cholesky factor of `Ψ`. This avoids forming
/// `Γ⁻¹ − Σ_XX⁻¹`, whose small eigenvalues cancel catastrophically.
pub fn pml_oracle_numeric(j: &JointGaussian, y: &DVector<f64>) -> Result<OracleLeakage> {
    if y.len() != j.m() {
        return Err(Error::dims("observation y", j.m(), y.len()));
    }
    let (sxx, sxy, syy) = (j.sigma_xx(), j.sigma_xy(), j.sigma_yy());
    let d = y - j.mu_y();
    let b = spd_solve(sxx, sxy)?.transpose();
    let psi = syy.sub(&SymMatrix::symmetrize(&b * sxy));
    let chol = psi
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::not_pd("conditional covariance Ψ"))?;
    let lower = chol.l();
    let solve_lower = |m: &DMatrix<f64>| {
        lower
            .solve_lower_triangular(m)
            .ok_or_else(|| Error::not_pd("conditional covariance Ψ"))
    };
    let d_white = solve_lower(&DMatrix::from_column_slice(d.len(), 1, d.as_slice()))?;
    let b_white = solve_lower(&b)?;
    let (u, _, _) = sorted_svd(&b_white);
    let u = u.columns(0, j.l());
    let residual = &d_white - u * (u.transpose() * &d_white);
    let prior_term = (d.transpose() * spd_solve(syy, &DMatrix::from_column_slice(d.len(), 1, d.as_slice()))?)[(0, 0)];
    let quadratic_max = 0.5 * prior_term - 0.5 * residual.norm_squared();

    let logdet_sxx = logdet_psd(sxx)?;
    let gamma = sxx.sub(&SymMatrix::symmetrize(sxy * spd_solve(syy, &sxy.transpose())?));
    let logdet_gamma = logdet_psd(&gamma).map_err(|_| Error::not_pd("posterior covariance Γ"))?;
    Ok(OracleLeakage {
        paper_convention: logdet_sxx - logdet_gamma + quadratic_max,
        half_logdet_convention: 0.5 * (logdet_sxx - logdet_gamma) + quadratic_max,
        quadratic_max,
    })
}
