//! Conversions between PML, differential privacy and mutual-information budgets.
//!
//! The DP side is expressed through the Gaussian-mechanism privacy profile
//!
//! ```text
//! φ(ε, r) = Φ(r/2 − ε/r) − e^ε Φ(−r/2 − ε/r)
//! ```
//!
//! where `r` is the sensitivity-to-noise ratio. `φ` increases in `r` and
//! decreases in `ε`; `φ⁻¹_ε(δ)` inverts it in `r`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gauss::{
    ln_std_normal_cdf, logdet_psd, max_eig_sym, min_eig_sym, numerical_rank, spd_inverse,
    std_normal_cdf, sym_inv_sqrt, SymMatrix,
};
use crate::pml::{half_chi2_quantile, kappa, PrivacyBudget, PRIVACY_CHECK_SLACK};

/// Search interval for the ratio `r`.
pub const RATIO_BRACKET: (f64, f64) = (1e-12, 1e6);
/// Slack on the eigenvalue side of [`dp_check`].
pub const DP_CHECK_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpBudget {
    pub epsilon_dp: f64,
    pub delta_dp: f64,
    /// Adjacency radius: inputs within distance `ζ` are neighbours.
    pub zeta: f64,
}

impl DpBudget {
    pub fn new(epsilon_dp: f64, delta_dp: f64, zeta: f64) -> Result<Self> {
        if !(epsilon_dp.is_finite() && epsilon_dp >= 0.0) {
            return Err(Error::Domain(format!("ε_DP must be finite and nonnegative, got {epsilon_dp}")));
        }
        check_probability(delta_dp, "δ_DP")?;
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::Domain(format!("ζ must be positive, got {zeta}")));
        }
        Ok(Self { epsilon_dp, delta_dp, zeta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiBudget {
    pub epsilon_mi: f64,
}

impl MiBudget {
    pub fn new(epsilon_mi: f64) -> Result<Self> {
        if !(epsilon_mi.is_finite() && epsilon_mi > 0.0) {
            return Err(Error::Domain(format!("ε_MI must be positive, got {epsilon_mi}")));
        }
        Ok(Self { epsilon_mi })
    }
}

fn check_probability(p: f64, name: &str) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("{name} must lie in (0,1), got {p}")));
    }
    Ok(())
}

/// `φ(ε, r)`.
pub fn phi(epsilon_dp: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("ratio r must be positive, got {r}")));
    }
    if !(epsilon_dp.is_finite() && epsilon_dp >= 0.0) {
        return Err(Error::Domain(format!("ε_DP must be finite and nonnegative, got {epsilon_dp}")));
    }
    if r.is_infinite() {
        return Ok(1.0);
    }
    let a = r / 2.0 - epsilon_dp / r;
    let b = -r / 2.0 - epsilon_dp / r;
    // e^ε Φ(b) evaluated in log space: e^ε overflows long before the product does.
    let second = (epsilon_dp + ln_std_normal_cdf(b)).exp();
    Ok((std_normal_cdf(a) - second).clamp(0.0, 1.0))
}

/// The ratio `r` with `φ(ε, r) = δ`, by bisection in `log r`.
pub fn phi_inverse(epsilon_dp: f64, delta_dp: f64) -> Result<f64> {
    check_probability(delta_dp, "δ_DP")?;
    let (mut lo, mut hi) = RATIO_BRACKET;
    if phi(epsilon_dp, lo)? > delta_dp || phi(epsilon_dp, hi)? < delta_dp {
        return Err(Error::NoRoot(format!(
            "φ({epsilon_dp}, ·) = {delta_dp} has no root in [{lo:e}, {hi:e}]"
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if phi(epsilon_dp, mid)? < delta_dp {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `λ_max(Cᵀ Θ⁻¹ C) ≤ (φ⁻¹_{ε_DP}(δ_DP)/ζ)²`: the mechanism `CX + V` is DP
/// for `ζ`-adjacent inputs.
pub fn dp_check(c: &DMatrix<f64>, theta: &SymMatrix, dp: &DpBudget) -> Result<bool> {
    if c.nrows() != theta.dim() {
        return Err(Error::dims("C rows vs Θ", theta.dim(), c.nrows()));
    }
    let theta_inv = spd_inverse(theta).map_err(|_| Error::not_pd("noise covariance Θ"))?;
    let lhs = max_eig_sym(&theta_inv.congruence(&c.transpose()));
    let ratio = phi_inverse(dp.epsilon_dp, dp.delta_dp)? / dp.zeta;
    Ok(lhs <= ratio * ratio + DP_CHECK_SLACK)
}

/// The ratio every `(ε, δ)`-PML mechanism guarantees: `ζ / √(κⁿ λ_min(Σ_XX))`.
pub fn pml_required_ratio(b: &PrivacyBudget, sigma_xx: &SymMatrix, zeta: f64) -> Result<f64> {
    if sigma_xx.dim() != b.n {
        return Err(Error::dims("Σ_XX vs budget n", b.n, sigma_xx.dim()));
    }
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(Error::Domain(format!("ζ must be positive, got {zeta}")));
    }
    kappa(b)?;
    let lmin = min_eig_sym(sigma_xx);
    if lmin <= 0.0 {
        return Err(Error::not_pd("Σ_XX"));
    }
    // κⁿ = exp(½F⁻¹ − ε); stay in log space for tiny κ.
    let ln_kn = b.half_quantile() - b.epsilon;
    Ok(zeta * (-0.5 * (ln_kn + lmin.ln())).exp())
}

/// Least `ε_DP ≥ 0` for which an `(ε, δ)`-PML mechanism is `(ε_DP, δ_DP)`-DP.
pub fn pml_to_dp(b: &PrivacyBudget, sigma_xx: &SymMatrix, zeta: f64, delta_dp: f64) -> Result<f64> {
    check_probability(delta_dp, "δ_DP")?;
    let r = pml_required_ratio(b, sigma_xx, zeta)?;
    // φ⁻¹_ε(δ) ≥ r  ⇔  φ(ε, r) ≤ δ, and φ decreases in ε.
    if phi(0.0, r)? <= delta_dp {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while phi(hi, r)? > delta_dp {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoRoot("ε_DP search diverged".into()));
        }
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if phi(mid, r)? > delta_dp {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Least `ε` for which a `(ε_DP, δ_DP)`-DP linear mechanism is `(ε, δ)`-PML:
/// `½F⁻¹_{χ²_l}(1−δ) + log det(I + (φ⁻¹/ζ)² Σ_XX)`.
pub fn dp_to_pml(dp: &DpBudget, sigma_xx: &SymMatrix, l: usize, delta: f64) -> Result<f64> {
    check_probability(delta, "δ")?;
    if l == 0 {
        return Err(Error::Domain("rank l must be positive".into()));
    }
    let ratio = phi_inverse(dp.epsilon_dp, dp.delta_dp)? / dp.zeta;
    let m = sigma_xx.scaled(ratio * ratio).shifted(1.0);
    Ok(half_chi2_quantile(delta, l) + logdet_psd(&m)?)
}

/// `I(X; Y)` for `Y = CX + V` by both closed forms, `(whitened, information)`:
///
/// ```text
/// ½ log det(I + Θ^{-1/2} C Σ_XX Cᵀ Θ^{-1/2})
/// ½ (log det Σ_XX + log det(Σ_XX⁻¹ + Cᵀ Θ⁻¹ C))
/// ```
pub fn mutual_information_forms(sigma_xx: &SymMatrix, c: &DMatrix<f64>, theta: &SymMatrix) -> Result<(f64, f64)> {
    let n = sigma_xx.dim();
    if c.ncols() != n {
        return Err(Error::dims("C columns vs Σ_XX", n, c.ncols()));
    }
    if c.nrows() != theta.dim() {
        return Err(Error::dims("C rows vs Θ", theta.dim(), c.nrows()));
    }
    let theta_inv_half = sym_inv_sqrt(theta).map_err(|_| Error::not_pd("noise covariance Θ"))?;
    let sigma_inv = spd_inverse(sigma_xx).map_err(|_| Error::not_pd("Σ_XX"))?;
    // Cᵀ Θ⁻¹ C as WᵀW with W = Θ^{-1/2} C; a Cholesky inverse of a Θ with
    // jitter-sized eigenvalues would swamp the signal block.
    let w = &*theta_inv_half * c;
    let whitened = sigma_xx.congruence(&w).shifted(1.0);
    let first = 0.5 * logdet_psd(&whitened)?;
    let info = sigma_inv.add(&SymMatrix::symmetrize(w.transpose() * &w));
    let second = 0.5 * (logdet_psd(sigma_xx)? + logdet_psd(&info)?);
    Ok((first.max(0.0), second.max(0.0)))
}

pub fn mutual_information(sigma_xx: &SymMatrix, c: &DMatrix<f64>, theta: &SymMatrix) -> Result<f64> {
    Ok(mutual_information_forms(sigma_xx, c, theta)?.0)
}

/// `ε_MI = −(n/2) log κ`.
pub fn pml_to_mi(b: &PrivacyBudget) -> Result<f64> {
    kappa(b)?;
    // −(n/2) log κ = (ε − ½F⁻¹)/2
    Ok(0.5 * (b.epsilon - b.half_quantile()))
}

/// `ε = 2ε_MI + ½F⁻¹_{χ²_l}(1−δ)`.
pub fn mi_to_pml(mi: &MiBudget, l: usize, n: usize, delta: f64) -> Result<f64> {
    check_probability(delta, "δ")?;
    if l == 0 || n == 0 {
        return Err(Error::Domain("ranks l and n must be positive".into()));
    }
    Ok(2.0 * mi.epsilon_mi + half_chi2_quantile(delta, l))
}

/// `(ε, δ)`-PML privacy of `CX + V` decided through `−2 I(X;Y) ≥ n log κ`.
pub fn mi_pml_equivalence(
    sigma_xx: &SymMatrix,
    c: &DMatrix<f64>,
    theta: &SymMatrix,
    b: &PrivacyBudget,
) -> Result<bool> {
    if b.n != sigma_xx.dim() {
        return Err(Error::dims("budget private dimension n", sigma_xx.dim(), b.n));
    }
    let rank = numerical_rank(c);
    if b.l != rank {
        return Err(Error::RankMismatch { budget: b.l, actual: rank });
    }
    let mi = mutual_information(sigma_xx, c, theta)?;
    // n log κ = ½F⁻¹ − ε, without the κ < 1 requirement
    Ok(-2.0 * mi >= b.half_quantile() - b.epsilon - PRIVACY_CHECK_SLACK)
}
