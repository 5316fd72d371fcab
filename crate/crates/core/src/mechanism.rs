//! Noise design for Gaussian mechanisms `Y = Z + V`, `V ~ N(0, Θ)`.
//!
//! A mechanism is `(ε, δ)`-PML private once
//!
//! ```text
//! [ (1−κ) Σ_XX   Σ_XZ     ]
//! [ Σ_XZᵀ        Θ + Σ_ZZ ]  ⪰ 0,
//! ```
//!
//! equivalently `Θ ⪰ (1/(1−κ)) Σ_XZᵀ Σ_XX⁻¹ Σ_XZ − Σ_ZZ`. For `Z = C X` this
//! reduces to `Θ ⪰ κ/(1−κ) · C Σ_XX Cᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauss::{
    default_psd_tolerance, max_eig_sym, min_eig_sym, numerical_rank, psd_part, spd_solve,
    SymMatrix,
};
use crate::pml::{kappa, JointGaussian, PrivacyBudget};

/// Joint law of the private `X` and the pre-noise query `Z`.
///
/// The joint covariance need only be PSD with `Σ_XX ≻ 0`, so deterministic
/// queries such as `Z = X` are allowed. Adding `Θ ≻ 0` always yields a
/// nondegenerate `(X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMechanismSpec {
    pub mu_x: DVector<f64>,
    pub mu_z: DVector<f64>,
    pub sigma_xx: SymMatrix,
    pub sigma_xz: DMatrix<f64>,
    pub sigma_zz: SymMatrix,
    l: usize,
}

impl GaussianMechanismSpec {
    pub fn new(
        mu_x: DVector<f64>,
        mu_z: DVector<f64>,
        sigma_xx: SymMatrix,
        sigma_xz: DMatrix<f64>,
        sigma_zz: SymMatrix,
    ) -> Result<Self> {
        let (n, m) = (sigma_xx.dim(), sigma_zz.dim());
        if mu_x.len() != n {
            return Err(Error::dims("mechanism mu_x", n, mu_x.len()));
        }
        if mu_z.len() != m {
            return Err(Error::dims("mechanism mu_z", m, mu_z.len()));
        }
        if sigma_xz.shape() != (n, m) {
            return Err(Error::dims(
                "mechanism sigma_xz",
                format!("{n}x{m}"),
                format!("{}x{}", sigma_xz.nrows(), sigma_xz.ncols()),
            ));
        }
        let min_xx = min_eig_sym(&sigma_xx);
        if min_xx <= 1e-12 * sigma_xx.spectral_norm() {
            return Err(Error::not_pd("Σ_XX"));
        }
        let full = block(&sigma_xx, &sigma_xz, &sigma_zz);
        let min = min_eig_sym(&full);
        if min < -default_psd_tolerance(&full) {
            return Err(Error::NotPsd { what: "joint covariance of (X, Z)".into(), min_eigenvalue: min });
        }
        let l = numerical_rank(&sigma_xz);
        if l == 0 {
            return Err(Error::InvalidInput("Σ_XZ has rank 0: the query carries no information".into()));
        }
        Ok(Self { mu_x, mu_z, sigma_xx, sigma_xz, sigma_zz, l })
    }

    pub fn centered(sigma_xx: SymMatrix, sigma_xz: DMatrix<f64>, sigma_zz: SymMatrix) -> Result<Self> {
        let (n, m) = (sigma_xx.dim(), sigma_zz.dim());
        Self::new(DVector::zeros(n), DVector::zeros(m), sigma_xx, sigma_xz, sigma_zz)
    }

    pub fn l(&self) -> usize {
        self.l
    }
}

/// `Z = C X` with `X ~ N(μ_X, Σ_XX)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMechanismSpec {
    pub mu_x: DVector<f64>,
    pub sigma_xx: SymMatrix,
    pub c: DMatrix<f64>,
    l: usize,
}

impl LinearMechanismSpec {
    pub fn new(mu_x: DVector<f64>, sigma_xx: SymMatrix, c: DMatrix<f64>) -> Result<Self> {
        let n = sigma_xx.dim();
        if mu_x.len() != n {
            return Err(Error::dims("mechanism mu_x", n, mu_x.len()));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dims(
                "mechanism C",
                format!("m x {n}"),
                format!("{}x{}", c.nrows(), c.ncols()),
            ));
        }
        if min_eig_sym(&sigma_xx) <= 1e-12 * sigma_xx.spectral_norm() {
            return Err(Error::not_pd("Σ_XX"));
        }
        let l = numerical_rank(&c);
        if l == 0 {
            return Err(Error::ZeroMatrix);
        }
        Ok(Self { mu_x, sigma_xx, c, l })
    }

    pub fn centered(sigma_xx: SymMatrix, c: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::zeros(sigma_xx.dim()), sigma_xx, c)
    }

    /// Rank of `C`.
    pub fn l(&self) -> usize {
        self.l
    }

    /// `C Σ_XX Cᵀ`.
    pub fn output_covariance(&self) -> SymMatrix {
        self.sigma_xx.congruence(&self.c)
    }

    /// The equivalent general specification: `Σ_XZ = Σ_XX Cᵀ`, `Σ_ZZ = C Σ_XX Cᵀ`.
    pub fn to_general(&self) -> GaussianMechanismSpec {
        GaussianMechanismSpec {
            mu_x: self.mu_x.clone(),
            mu_z: &self.c * &self.mu_x,
            sigma_xx: self.sigma_xx.clone(),
            sigma_xz: &*self.sigma_xx * self.c.transpose(),
            sigma_zz: self.output_covariance(),
            l: self.l,
        }
    }
}

/// Either kind of mechanism, viewed through its `(X, Z)` second moments.
pub trait Mechanism {
    fn general(&self) -> GaussianMechanismSpec;
}

impl Mechanism for GaussianMechanismSpec {
    fn general(&self) -> GaussianMechanismSpec {
        self.clone()
    }
}

impl Mechanism for LinearMechanismSpec {
    fn general(&self) -> GaussianMechanismSpec {
        self.to_general()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThetaVariant {
    /// Least PSD matrix satisfying the inequality, plus jitter.
    Boundary,
    /// `σ² I` with the smallest feasible `σ²`, plus jitter.
    ScaledIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPolicy {
    pub variant: ThetaVariant,
    pub jitter: f64,
}

pub const DEFAULT_JITTER: f64 = 1e-12;

impl ThetaPolicy {
    pub fn new(variant: ThetaVariant, jitter: f64) -> Result<Self> {
        if !(jitter.is_finite() && jitter > 0.0) {
            return Err(Error::Domain(format!("jitter must be positive, got {jitter}")));
        }
        Ok(Self { variant, jitter })
    }

    pub fn boundary() -> Self {
        Self { variant: ThetaVariant::Boundary, jitter: DEFAULT_JITTER }
    }

    pub fn scaled_identity() -> Self {
        Self { variant: ThetaVariant::ScaledIdentity, jitter: DEFAULT_JITTER }
    }
}

impl Default for ThetaPolicy {
    fn default() -> Self {
        Self::boundary()
    }
}

fn check_budget(b: &PrivacyBudget, n: usize, l: usize) -> Result<f64> {
    if b.n != n {
        return Err(Error::dims("budget private dimension n", n, b.n));
    }
    if b.l != l {
        return Err(Error::RankMismatch { budget: b.l, actual: l });
    }
    kappa(b)
}

fn apply_policy(lower: &SymMatrix, policy: &ThetaPolicy) -> SymMatrix {
    match policy.variant {
        ThetaVariant::Boundary => psd_part(lower).shifted(policy.jitter),
        ThetaVariant::ScaledIdentity => {
            let s2 = max_eig_sym(lower).max(0.0) + policy.jitter;
            SymMatrix::identity(lower.dim()).scaled(s2)
        }
    }
}

/// `(1/(1−κ)) Σ_XZᵀ Σ_XX⁻¹ Σ_XZ − Σ_ZZ`, the lower bound on `Θ`.
pub fn theta_lower_bound_general(spec: &GaussianMechanismSpec, kappa: f64) -> Result<SymMatrix> {
    let a = SymMatrix::symmetrize(spec.sigma_xz.transpose() * spd_solve(&spec.sigma_xx, &spec.sigma_xz)?);
    Ok(a.scaled(1.0 / (1.0 - kappa)).sub(&spec.sigma_zz))
}

/// `κ/(1−κ) · C Σ_XX Cᵀ`.
pub fn theta_lower_bound_linear(spec: &LinearMechanismSpec, kappa: f64) -> SymMatrix {
    spec.output_covariance().scaled(kappa / (1.0 - kappa))
}

pub fn design_theta_general(
    spec: &GaussianMechanismSpec,
    b: &PrivacyBudget,
    policy: &ThetaPolicy,
) -> Result<SymMatrix> {
    let k = check_budget(b, spec.sigma_xx.dim(), spec.l)?;
    Ok(apply_policy(&theta_lower_bound_general(spec, k)?, policy))
}

pub fn design_theta_linear(
    spec: &LinearMechanismSpec,
    b: &PrivacyBudget,
    policy: &ThetaPolicy,
) -> Result<SymMatrix> {
    let k = check_budget(b, spec.sigma_xx.dim(), spec.l)?;
    Ok(apply_policy(&theta_lower_bound_linear(spec, k), policy))
}

fn block(a: &SymMatrix, b: &DMatrix<f64>, d: &SymMatrix) -> SymMatrix {
    let (n, m) = (a.dim(), d.dim());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a.as_matrix());
    out.view_mut((0, n), (n, m)).copy_from(b);
    out.view_mut((n, 0), (m, n)).copy_from(&b.transpose());
    out.view_mut((n, n), (m, m)).copy_from(d.as_matrix());
    SymMatrix::symmetrize(out)
}

/// The block matrix `[(1−κ)Σ_XX, Σ_XZ; Σ_XZᵀ, Θ+Σ_ZZ]`.
pub fn lmi_matrix(
    kappa: f64,
    sigma_xx: &SymMatrix,
    sigma_xz: &DMatrix<f64>,
    sigma_zz: &SymMatrix,
    theta: &SymMatrix,
) -> Result<SymMatrix> {
    if theta.dim() != sigma_zz.dim() {
        return Err(Error::dims("Θ", sigma_zz.dim(), theta.dim()));
    }
    if sigma_xz.shape() != (sigma_xx.dim(), sigma_zz.dim()) {
        return Err(Error::dims(
            "Σ_XZ",
            format!("{}x{}", sigma_xx.dim(), sigma_zz.dim()),
            format!("{}x{}", sigma_xz.nrows(), sigma_xz.ncols()),
        ));
    }
    Ok(block(&sigma_xx.scaled(1.0 - kappa), sigma_xz, &theta.add(sigma_zz)))
}

/// PSD test of [`lmi_matrix`] at relative tolerance `1e-9`.
pub fn lmi_holds(
    kappa: f64,
    sigma_xx: &SymMatrix,
    sigma_xz: &DMatrix<f64>,
    sigma_zz: &SymMatrix,
    theta: &SymMatrix,
) -> Result<bool> {
    let m = lmi_matrix(kappa, sigma_xx, sigma_xz, sigma_zz, theta)?;
    Ok(min_eig_sym(&m) >= -default_psd_tolerance(&m))
}

pub fn verify_lmi(spec: &GaussianMechanismSpec, theta: &SymMatrix, b: &PrivacyBudget) -> Result<bool> {
    let k = check_budget(b, spec.sigma_xx.dim(), spec.l)?;
    lmi_holds(k, &spec.sigma_xx, &spec.sigma_xz, &spec.sigma_zz, theta)
}

pub fn verify_lmi_linear(spec: &LinearMechanismSpec, theta: &SymMatrix, b: &PrivacyBudget) -> Result<bool> {
    verify_lmi(&spec.to_general(), theta, b)
}

/// The law of `(X, Y)` with `Y = Z + V`: `Σ_XY = Σ_XZ`, `Σ_YY = Σ_ZZ + Θ`, `μ_Y = μ_Z`.
pub fn mechanism_joint<M: Mechanism + ?Sized>(spec: &M, theta: &SymMatrix) -> Result<JointGaussian> {
    let g = spec.general();
    if theta.dim() != g.sigma_zz.dim() {
        return Err(Error::dims("Θ", g.sigma_zz.dim(), theta.dim()));
    }
    if min_eig_sym(theta) <= 0.0 {
        return Err(Error::not_pd("noise covariance Θ"));
    }
    let syy = g.sigma_zz.add(theta);
    JointGaussian::from_mechanism(g.mu_x, g.mu_z, g.sigma_xx, g.sigma_xz, syy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pml::{check_pml_privacy, half_chi2_quantile};
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    /// Budget with `κ = 1/2` exactly up to rounding: `ε = ½F⁻¹ + n ln 2`.
    fn half_kappa_budget(l: usize, n: usize) -> PrivacyBudget {
        let delta = 0.01;
        PrivacyBudget::new(half_chi2_quantile(delta, l) + n as f64 * LN_2, delta, l, n).unwrap()
    }

    fn sigma3() -> SymMatrix {
        SymMatrix::from_rows(&[vec![2.0, 0.4, 0.1], vec![0.4, 1.5, -0.3], vec![0.1, -0.3, 1.0]]).unwrap()
    }

    #[test]
    fn identity_query_at_half_kappa() {
        let s = sigma3();
        let spec = GaussianMechanismSpec::centered(s.clone(), s.as_matrix().clone(), s.clone()).unwrap();
        let b = half_kappa_budget(3, 3);
        assert_relative_eq!(kappa(&b).unwrap(), 0.5, epsilon = 1e-14);
        let theta = design_theta_general(&spec, &b, &ThetaPolicy::boundary()).unwrap();
        let expected = s.shifted(DEFAULT_JITTER);
        assert!((theta.as_matrix() - expected.as_matrix()).amax() < 1e-12);
        assert!(verify_lmi(&spec, &theta, &b).unwrap());
    }

    #[test]
    fn weak_query_needs_only_jitter() {
        // Σ_XZᵀ Σ_XX⁻¹ Σ_XZ = 0.01 ⪯ (1−κ)·1
        let spec = GaussianMechanismSpec::centered(
            SymMatrix::scalar(1.0).unwrap(),
            DMatrix::from_element(1, 1, 0.1),
            SymMatrix::scalar(1.0).unwrap(),
        )
        .unwrap();
        let b = half_kappa_budget(1, 1);
        let theta = design_theta_general(&spec, &b, &ThetaPolicy::boundary()).unwrap();
        assert_eq!(theta[(0, 0)], DEFAULT_JITTER);
        let iso = design_theta_general(&spec, &b, &ThetaPolicy::scaled_identity()).unwrap();
        assert_eq!(iso[(0, 0)], DEFAULT_JITTER);
    }

    #[test]
    fn random_three_dim_designs_verify() {
        let sxx = sigma3();
        let sxz = DMatrix::from_row_slice(3, 2, &[0.8, 0.1, -0.2, 0.6, 0.3, 0.3]);
        let szz = SymMatrix::from_rows(&[vec![1.2, 0.1], vec![0.1, 0.9]]).unwrap();
        let spec = GaussianMechanismSpec::centered(sxx, sxz, szz).unwrap();
        let b = PrivacyBudget::new(6.5, 0.01, 2, 3).unwrap();
        for policy in [ThetaPolicy::boundary(), ThetaPolicy::scaled_identity()] {
            let theta = design_theta_general(&spec, &b, &policy).unwrap();
            assert!(verify_lmi(&spec, &theta, &b).unwrap());
            let j = mechanism_joint(&spec, &theta).unwrap();
            assert!(check_pml_privacy(&j, &b).unwrap());
        }
    }

    #[test]
    fn linear_scalar_design() {
        let spec = LinearMechanismSpec::centered(SymMatrix::scalar(6.4).unwrap(), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b = PrivacyBudget::new(6.0, 0.001, 1, 1).unwrap();
        let theta = design_theta_linear(&spec, &b, &ThetaPolicy::boundary()).unwrap();
        // κ/(1−κ)·6.4 with κ = exp(5.413783085331366 − 6)
        assert_relative_eq!(theta[(0, 0)], 8.028_333_331_829_634, max_relative = 1e-10);
        assert_relative_eq!(theta[(0, 0)], 8.031, epsilon = 5e-3);
    }

    #[test]
    fn linear_design_vanishes_for_huge_epsilon() {
        let spec = LinearMechanismSpec::centered(SymMatrix::scalar(6.4).unwrap(), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b = PrivacyBudget::new(800.0, 0.001, 1, 1).unwrap();
        let theta = design_theta_linear(&spec, &b, &ThetaPolicy::boundary()).unwrap();
        assert_eq!(theta[(0, 0)], DEFAULT_JITTER);
    }

    #[test]
    fn linear_identity_at_half_kappa() {
        let spec = LinearMechanismSpec::centered(SymMatrix::identity(2), DMatrix::identity(2, 2)).unwrap();
        let b = half_kappa_budget(2, 2);
        let theta = design_theta_linear(&spec, &b, &ThetaPolicy::boundary()).unwrap();
        let expected = DMatrix::identity(2, 2) * (1.0 + DEFAULT_JITTER);
        assert!((theta.as_matrix() - expected).amax() < 1e-12);
    }

    #[test]
    fn linear_and_general_bounds_agree() {
        let spec = LinearMechanismSpec::centered(sigma3(), DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, -1.0])).unwrap();
        let k = 0.3;
        let lin = theta_lower_bound_linear(&spec, k);
        let gen = theta_lower_bound_general(&spec.to_general(), k).unwrap();
        assert!((lin.as_matrix() - gen.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn lmi_rejects_zero_noise() {
        let s = sigma3();
        let spec = GaussianMechanismSpec::centered(s.clone(), s.as_matrix().clone(), s).unwrap();
        let b = half_kappa_budget(3, 3);
        assert!(!verify_lmi(&spec, &SymMatrix::zeros(3), &b).unwrap());
    }

    #[test]
    fn lmi_holds_for_uncoupled_blocks() {
        let sxx = sigma3();
        let szz = SymMatrix::identity(2);
        for theta in [SymMatrix::zeros(2), SymMatrix::identity(2).scaled(5.0)] {
            assert!(lmi_holds(0.9, &sxx, &DMatrix::zeros(3, 2), &szz, &theta).unwrap());
        }
    }

    #[test]
    fn design_rejects_infeasible_budget() {
        let spec = LinearMechanismSpec::centered(SymMatrix::scalar(1.0).unwrap(), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b = PrivacyBudget::new(1.0, 0.001, 1, 1).unwrap();
        assert!(matches!(
            design_theta_linear(&spec, &b, &ThetaPolicy::boundary()),
            Err(Error::NecessaryConditionViolated { .. })
        ));
    }

    #[test]
    fn joint_of_scalar_linear_mechanism() {
        let spec = LinearMechanismSpec::centered(SymMatrix::scalar(1.0).unwrap(), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let j = mechanism_joint(&spec, &SymMatrix::scalar(1.0).unwrap()).unwrap();
        assert_eq!(j.sigma_xy()[(0, 0)], 1.0);
        assert_eq!(j.sigma_yy()[(0, 0)], 2.0);
        assert_eq!(j.mu_y()[0], 0.0);
        assert!(mechanism_joint(&spec, &SymMatrix::zeros(1)).is_err());
    }

    #[test]
    fn joint_mean_follows_query() {
        let spec = LinearMechanismSpec::new(
            DVector::from_row_slice(&[1.0, 2.0]),
            SymMatrix::identity(2),
            DMatrix::from_row_slice(1, 2, &[3.0, -1.0]),
        )
        .unwrap();
        let j = mechanism_joint(&spec, &SymMatrix::scalar(1.0).unwrap()).unwrap();
        assert_eq!(j.mu_y()[0], 1.0);
    }

    #[test]
    fn large_noise_is_private() {
        let spec = LinearMechanismSpec::centered(sigma3(), DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0])).unwrap();
        let b = PrivacyBudget::new(6.0, 0.001, 1, 3).unwrap();
        let j = mechanism_joint(&spec, &SymMatrix::scalar(1e6).unwrap()).unwrap();
        assert!(check_pml_privacy(&j, &b).unwrap());
    }

    #[test]
    fn spec_validation() {
        assert!(LinearMechanismSpec::centered(SymMatrix::identity(2), DMatrix::zeros(1, 2)).is_err());
        assert!(LinearMechanismSpec::centered(SymMatrix::identity(2), DMatrix::zeros(1, 3)).is_err());
        assert!(GaussianMechanismSpec::centered(
            SymMatrix::scalar(1.0).unwrap(),
            DMatrix::from_element(1, 1, 2.0),
            SymMatrix::scalar(1.0).unwrap()
        )
        .is_err());
        assert!(ThetaPolicy::new(ThetaVariant::Boundary, 0.0).is_err());
    }
}
