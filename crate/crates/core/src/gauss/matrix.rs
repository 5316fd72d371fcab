//! Dense symmetric-matrix kernels.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; [`SymMatrix`] is the
//! validated symmetric wrapper that the rest of the crate passes around.

use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and then symmetrized away) on ingestion.
pub const SYMMETRY_REL_TOL: f64 = 1e-12;
/// A matrix is accepted as PSD when `λ_min ≥ −PSD_REL_TOL · max(1, ‖M‖)`.
pub const PSD_REL_TOL: f64 = 1e-9;
/// Singular values at or below `RANK_REL_TOL · σ_max` are treated as zero.
pub const RANK_REL_TOL: f64 = 1e-10;

/// A real symmetric matrix of positive dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates and symmetrizes `m` as `(M + Mᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims(
                "SymMatrix::new",
                "square matrix",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix dimension must be positive".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(1.0);
        let asymmetry = (&m - m.transpose()).amax();
        if asymmetry > SYMMETRY_REL_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes without the asymmetry check. Used for products that are
    /// symmetric in exact arithmetic.
    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, value))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> SymMatrix {
        SymMatrix(&self.0 * factor)
    }

    /// `self + shift · I`.
    pub fn shifted(&self, shift: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        SymMatrix(m)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// `B · self · Bᵀ`, symmetrized.
    pub fn congruence(&self, b: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrize(b * &self.0 * b.transpose())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> DVector<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        DVector::from_vec(ev)
    }

    /// Spectral norm, i.e. the largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().amax()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.0)
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Builds a matrix from row-major nested rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::InvalidInput("matrix has no rows".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::InvalidInput("matrix has no columns".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dims("matrix_from_rows", ncols, bad.len()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Result of a PSD check: valid iff `min_eigenvalue ≥ −tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdCertificate {
    pub matrix: SymMatrix,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
}

impl PsdCertificate {
    pub fn is_valid(&self) -> bool {
        self.min_eigenvalue >= -self.tolerance
    }
}

/// The default PSD tolerance `PSD_REL_TOL · max(1, ‖M‖)`.
pub fn default_psd_tolerance(m: &SymMatrix) -> f64 {
    PSD_REL_TOL * m.spectral_norm().max(1.0)
}

pub fn psd_certificate(m: &SymMatrix) -> PsdCertificate {
    PsdCertificate {
        matrix: m.clone(),
        min_eigenvalue: min_eig_sym(m),
        tolerance: default_psd_tolerance(m),
    }
}

pub fn min_eig_sym(m: &SymMatrix) -> f64 {
    m.as_matrix().clone().symmetric_eigenvalues().min()
}

pub fn max_eig_sym(m: &SymMatrix) -> f64 {
    m.as_matrix().clone().symmetric_eigenvalues().max()
}

pub fn is_psd(m: &SymMatrix, tol: f64) -> bool {
    min_eig_sym(m) >= -tol
}

fn cholesky(m: &SymMatrix, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.as_matrix().clone()).ok_or_else(|| Error::not_pd(what))
}

/// `log det M` from the Cholesky factor: `2 Σ log L_ii`.
pub fn logdet_psd(m: &SymMatrix) -> Result<f64> {
    let chol = cholesky(m, "matrix passed to logdet")?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(SymMatrix::symmetrize(cholesky(m, "matrix to invert")?.inverse()))
}

/// Solves `M X = B` for SPD `M`.
pub fn spd_solve(m: &SymMatrix, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != m.dim() {
        return Err(Error::dims("spd_solve", m.dim(), b.nrows()));
    }
    Ok(cholesky(m, "system matrix")?.solve(b))
}

fn spectral_map(m: &SymMatrix, f: impl Fn(f64) -> f64) -> SymMatrix {
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    SymMatrix::symmetrize(v * DMatrix::from_diagonal(&mapped) * v.transpose())
}

/// Symmetric PSD square root by spectral decomposition. Eigenvalues within
/// tolerance of zero are clamped.
pub fn sym_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = m.as_matrix().clone().symmetric_eigenvalues();
    let norm = eig.amax();
    let min = eig.min();
    if min < -PSD_REL_TOL * norm {
        return Err(Error::NotPsd {
            what: "matrix passed to sym_sqrt".into(),
            min_eigenvalue: min,
        });
    }
    Ok(spectral_map(m, |l| l.max(0.0).sqrt()))
}

/// `M^{-1/2}` for positive definite `M`.
pub fn sym_inv_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    // Cholesky doubles as the definiteness check.
    cholesky(m, "matrix passed to sym_inv_sqrt")?;
    Ok(spectral_map(m, |l| 1.0 / l.sqrt()))
}

/// The PSD part of a symmetric matrix: negative eigenvalues set to zero.
pub fn psd_part(m: &SymMatrix) -> SymMatrix {
    spectral_map(m, |l| l.max(0.0))
}

/// Compact SVD `M = U D Vᵀ` keeping only the numerically nonzero part.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSvd {
    /// `m × l`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Positive, nonincreasing singular values.
    pub d: DVector<f64>,
    /// `n × l`, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.d) * self.v.transpose()
    }
}

/// Thin SVD with singular triplets sorted by decreasing singular value.
///
/// Backed by faer; nalgebra's bidiagonal SVD loses accuracy on
/// rank-deficient wide inputs.
pub(crate) fn sorted_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm.thin_svd().expect("faer SVD did not converge");
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = fs.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]));
    let u = DMatrix::from_fn(m.nrows(), k, |i, j| fu[(i, order[j])]);
    let v = DMatrix::from_fn(m.ncols(), k, |i, j| fv[(i, order[j])]);
    let s = order.iter().map(|&j| fs[j]).collect();
    (u, s, v)
}

pub fn compact_svd(m: &DMatrix<f64>, rank_tol: f64) -> Result<CompactSvd> {
    if m.is_empty() {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let (_, s, _) = sorted_svd(m);
    let smax = s[0];
    let rank = s.iter().filter(|&&x| x > rank_tol * smax).count();
    if smax <= 0.0 || rank == 0 {
        return Err(Error::ZeroMatrix);
    }
    compact_svd_with_rank(m, rank)
}

/// Compact SVD truncated to exactly `rank` leading triplets.
pub(crate) fn compact_svd_with_rank(m: &DMatrix<f64>, rank: usize) -> Result<CompactSvd> {
    let (u, s, v) = sorted_svd(m);
    if rank == 0 || rank > s.len() {
        return Err(Error::InvalidInput(format!(
            "requested rank {rank} out of range 1..={}",
            s.len()
        )));
    }
    if s[rank - 1] <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(CompactSvd {
        u: u.columns(0, rank).into_owned(),
        d: DVector::from_row_slice(&s[..rank]),
        v: v.columns(0, rank).into_owned(),
    })
}

/// Number of singular values above `RANK_REL_TOL · σ_max`; zero for the zero matrix.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let (_, s, _) = sorted_svd(m);
    let smax = s[0];
    if smax <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_REL_TOL * smax).count()
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
