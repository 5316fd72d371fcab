//! Random problem instances for property checks and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::gauss::{spectral_radius, SymMatrix};
use crate::lti::LtiSystem;
use crate::mechanism::{GaussianMechanismSpec, LinearMechanismSpec};
use crate::pml::{half_chi2_quantile, JointGaussian, PrivacyBudget};

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `G Gᵀ / dim + floor·I` with Gaussian `G`; eigenvalues stay away from 0.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> SymMatrix {
    let g = gaussian_matrix(rng, dim, dim);
    let floor = rng.random_range(0.1..1.0);
    SymMatrix::symmetrize(&g * g.transpose() / dim as f64 + DMatrix::identity(dim, dim) * floor)
}

/// An `rows × cols` matrix of exact rank `rank`.
pub fn random_rank_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    assert!(rank >= 1 && rank <= rows.min(cols), "rank out of range");
    let u = gaussian_matrix(rng, rows, rank);
    let v = gaussian_matrix(rng, rank, cols);
    u * v
}

/// Joint law of `(X, BX + N)` with `rank B = l`, so `rank Σ_XY = l`.
pub fn random_joint<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, l: usize) -> Result<JointGaussian> {
    let sxx = random_spd(rng, n);
    let b = random_rank_matrix(rng, m, n, l);
    let r = random_spd(rng, m);
    let sxy = &*sxx * b.transpose();
    let syy = sxx.congruence(&b).add(&r);
    let mu_x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mu_y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    JointGaussian::new(mu_x, mu_y, sxx, sxy, syy)
}

/// General mechanism `Z = BX + N` with `rank B = l` and singular-free joint.
pub fn random_general_mechanism<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    l: usize,
) -> Result<GaussianMechanismSpec> {
    let j = random_joint(rng, n, m, l)?;
    GaussianMechanismSpec::new(
        j.mu_x().clone(),
        j.mu_y().clone(),
        j.sigma_xx().clone(),
        j.sigma_xy().clone(),
        j.sigma_yy().clone(),
    )
}

/// `Z = CX` with `rank C = l`.
pub fn random_linear_mechanism<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    l: usize,
) -> Result<LinearMechanismSpec> {
    LinearMechanismSpec::centered(random_spd(rng, n), random_rank_matrix(rng, m, n, l))
}

/// Budget with `δ ∈ [10⁻³, 0.2]` and `ε` between 0.05 and 5 above the
/// necessary-condition threshold `½F⁻¹_{χ²_l}(1−δ)`.
pub fn random_feasible_budget<R: Rng + ?Sized>(rng: &mut R, l: usize, n: usize) -> Result<PrivacyBudget> {
    let delta = 10f64.powf(rng.random_range(-3.0..(0.2f64).log10()));
    let eps = half_chi2_quantile(delta, l) + rng.random_range(0.05..5.0);
    PrivacyBudget::new(eps, delta, l, n)
}

/// Schur-stable `A` with spectral radius in `[0.05, 0.95]`, full-row-rank
/// `C` (`m ≤ n`) and random positive definite `Q`, `Θ`.
pub fn random_stable_system<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Result<LtiSystem> {
    assert!(m <= n, "full row rank needs m ≤ n");
    let mut a = gaussian_matrix(rng, n, n);
    let rho = spectral_radius(&a);
    if rho > 0.0 {
        a *= rng.random_range(0.05..0.95) / rho;
    }
    let c = random_rank_matrix(rng, m, n, m);
    LtiSystem::new(a, c, random_spd(rng, n), random_spd(rng, m))
}
