//! Numerical kernels shared by every other module: symmetric matrices,
//! χ²/normal distribution functions and seeded Gaussian sampling.

pub mod matrix;
pub mod sampling;
pub mod special;

pub use matrix::{
    compact_svd, default_psd_tolerance, is_psd, logdet_psd, matrix_from_rows, matrix_to_rows,
    max_eig_sym, min_eig_sym, numerical_rank, psd_certificate, psd_part, spd_inverse, spd_solve,
    spectral_radius, sym_inv_sqrt, sym_sqrt, CompactSvd, PsdCertificate, SymMatrix, PSD_REL_TOL,
    RANK_REL_TOL,
};
pub use sampling::{gaussian_sample, standard_normal_vector, RngStream, SAMPLE_CHUNK};
pub use special::{chi2_cdf, chi2_quantile, chi2_sf, ln_std_normal_cdf, std_normal_cdf};
