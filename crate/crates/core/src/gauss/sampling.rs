//! Seeded, partitionable Gaussian sampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::matrix::{sym_sqrt, SymMatrix};
use crate::error::{Error, Result};

/// Samples per work unit. Each unit draws from its own derived stream, so
/// output does not depend on how many threads run the units.
pub const SAMPLE_CHUNK: usize = 4096;

/// Identifies an independent random stream: `(seed, stream_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Child stream `k`, independent of the parent and of every other child.
    pub fn child(&self, k: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(self.stream_index.wrapping_add(0x5851_F42D))),
            stream_index: k,
        }
    }
}

/// Standard-normal vector of length `dim` drawn from `rng`.
pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Draws `count` samples of `N(mean, cov)` as the rows of a `count × dim`
/// matrix, `x = mean + R z` with `R = cov^{1/2}`.
pub fn gaussian_sample(
    mean: &DVector<f64>,
    cov: &SymMatrix,
    rng: RngStream,
    count: usize,
) -> Result<DMatrix<f64>> {
    let dim = mean.len();
    if cov.dim() != dim {
        return Err(Error::dims("gaussian_sample covariance", dim, cov.dim()));
    }
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let root = sym_sqrt(cov)?;
    let chunks: Vec<Vec<DVector<f64>>> = (0..count.div_ceil(SAMPLE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut g = rng.child(c as u64).generator();
            let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
            (0..len)
                .map(|_| mean + &*root * standard_normal_vector(&mut g, dim))
                .collect()
        })
        .collect();
    let mut out = DMatrix::zeros(count, dim);
    for (i, x) in chunks.into_iter().flatten().enumerate() {
        out.set_row(i, &x.transpose());
    }
    Ok(out)
}
