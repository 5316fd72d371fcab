//! Monte Carlo checks and trajectory simulation.
//!
//! All randomness is drawn from [`RngStream`]s. Independent noise sources
//! use distinct child streams and parallel work is split into fixed chunks,
//! so every result is reproducible from the seed alone.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::aggregation::AggregationNetwork;
use crate::error::{Error, Result};
use crate::gauss::{
    chi2_cdf, gaussian_sample, standard_normal_vector, sym_sqrt, RngStream, SymMatrix,
};
use crate::lti::{check_shapes, kalman_step, solve_lyapunov, LtiSystem};
use crate::pml::{pml_components, privacy_prob_from_min_leakage, JointGaussian};

/// Steps discarded before stationary statistics are accumulated.
pub const BURN_IN: usize = 1000;
/// Smallest sample count accepted by [`empirical_violation_rate`].
pub const MIN_MC_SAMPLES: usize = 1000;
/// Horizon used for trajectory exports when none is configured.
pub const DEFAULT_HORIZON: usize = 200;

/// Child-stream indices of a simulation seed.
const STREAM_STATE_NOISE: u64 = 0;
const STREAM_MEASUREMENT_NOISE: u64 = 1;
const STREAM_INITIAL_STATE: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub sample_count: usize,
    /// Fraction of samples with `ℓ(X → y) > ε`.
    pub violation_rate: f64,
    /// KS distance of the sampled `ξ` against `χ²_l`.
    pub ks_statistic: f64,
    /// `P[ℓ(X → Y) ≤ ε]` in closed form.
    pub exact_prob: f64,
    pub seed: RngStream,
}

impl McReport {
    /// `4·√(p(1−p)/N)` around the exact violation probability `p`.
    pub fn tolerance(&self) -> f64 {
        let p = 1.0 - self.exact_prob;
        4.0 * (p * (1.0 - p) / self.sample_count as f64).sqrt()
    }

    pub fn within_tolerance(&self) -> bool {
        (self.violation_rate - (1.0 - self.exact_prob)).abs() <= self.tolerance()
    }
}

/// `ξ(y)` for `count` draws of `Y` from its marginal.
pub fn xi_samples(j: &JointGaussian, count: usize, rng: RngStream) -> Result<Vec<f64>> {
    let comps = pml_components(j)?;
    let ys = gaussian_sample(j.mu_y(), j.sigma_yy(), rng, count)?;
    (0..count)
        .into_par_iter()
        .map(|i| comps.xi(&ys.row(i).transpose()))
        .collect()
}

/// Estimates `P[ℓ(X → Y) > ε]` by sampling `Y` from its marginal.
pub fn empirical_violation_rate(
    j: &JointGaussian,
    epsilon: f64,
    n_samples: usize,
    rng: RngStream,
) -> Result<McReport> {
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_MC_SAMPLES} samples required, got {n_samples}"
        )));
    }
    let min = pml_components(j)?.min_leakage();
    let xi = xi_samples(j, n_samples, rng)?;
    let violations = xi.iter().filter(|&&x| min + 0.5 * x > epsilon).count();
    Ok(McReport {
        sample_count: n_samples,
        violation_rate: violations as f64 / n_samples as f64,
        ks_statistic: ks_statistic_chi2(&xi, j.l())?,
        exact_prob: privacy_prob_from_min_leakage(min, epsilon, j.l()),
        seed: rng,
    })
}

/// One-sample Kolmogorov–Smirnov distance between the empirical law of
/// `samples` and `χ²_l`.
pub fn ks_statistic_chi2(samples: &[f64], l: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("KS statistic needs at least one sample".into()));
    }
    if samples.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("χ² samples must be nonnegative".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.par_sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let cdf: Vec<f64> = sorted.par_iter().map(|&x| chi2_cdf(x, l as u32)).collect::<Result<_>>()?;
    Ok(cdf
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).max((i + 1) as f64 / n - f))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Row `k` is `X_k`.
    pub states: DMatrix<f64>,
    /// Row `k` is `Y_k`.
    pub outputs: DMatrix<f64>,
    /// Row `k` is `X̂_k`.
    pub estimates: Option<DMatrix<f64>>,
    /// `P_k` for each step.
    pub covariances: Option<Vec<SymMatrix>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.nrows()
    }
}

/// Simulates `X_{k+1} = A X_k + W_k`, `Y_k = C X_k + V_k` for `k < T`.
///
/// `Q` and `Θ` only need to be PSD. `W` and `V` come from separate child
/// streams of `rng`.
pub fn simulate_linear(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &SymMatrix,
    theta: &SymMatrix,
    x0: &DVector<f64>,
    horizon: usize,
    rng: RngStream,
) -> Result<Trajectory> {
    check_shapes(a, c, q, theta)?;
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let (n, m) = (a.nrows(), c.nrows());
    if x0.len() != n {
        return Err(Error::dims("initial state", n, x0.len()));
    }
    let rq = sym_sqrt(q)?;
    let rt = sym_sqrt(theta)?;
    let mut gw = rng.child(STREAM_STATE_NOISE).generator();
    let mut gv = rng.child(STREAM_MEASUREMENT_NOISE).generator();
    let mut states = DMatrix::zeros(horizon, n);
    let mut outputs = DMatrix::zeros(horizon, m);
    let mut x = x0.clone();
    for k in 0..horizon {
        let y = c * &x + &*rt * standard_normal_vector(&mut gv, m);
        states.set_row(k, &x.transpose());
        outputs.set_row(k, &y.transpose());
        x = a * &x + &*rq * standard_normal_vector(&mut gw, n);
    }
    Ok(Trajectory { states, outputs, estimates: None, covariances: None })
}

pub fn simulate_lti(sys: &LtiSystem, x0: &DVector<f64>, horizon: usize, rng: RngStream) -> Result<Trajectory> {
    simulate_linear(sys.a(), sys.c(), sys.q(), sys.theta(), x0, horizon, rng)
}

/// `X₀ ~ N(0, Σ_XX)` with `Σ_XX` the stationary covariance.
pub fn stationary_initial_state(a: &DMatrix<f64>, q: &SymMatrix, rng: RngStream) -> Result<DVector<f64>> {
    let sigma = solve_lyapunov(a, q)?;
    let r = sym_sqrt(&sigma)?;
    let mut g = rng.child(STREAM_INITIAL_STATE).generator();
    Ok(&*r * standard_normal_vector(&mut g, sigma.dim()))
}

/// Estimates and posterior covariances of the Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub estimates: DMatrix<f64>,
    pub covariances: Vec<SymMatrix>,
}

/// Filters `outputs` (row `k` = `Y_k`) starting from the prior
/// `(x0_hat, p0)` one step before `Y_0`:
/// `X̂_k = A X̂_{k−1} + K_k (Y_k − C A X̂_{k−1})`.
pub fn run_kalman(
    sys: &LtiSystem,
    outputs: &DMatrix<f64>,
    x0_hat: &DVector<f64>,
    p0: &SymMatrix,
) -> Result<KalmanTrack> {
    let (n, m) = (sys.n(), sys.m());
    if outputs.ncols() != m {
        return Err(Error::dims("output columns", m, outputs.ncols()));
    }
    if x0_hat.len() != n {
        return Err(Error::dims("initial estimate", n, x0_hat.len()));
    }
    if p0.dim() != n {
        return Err(Error::dims("initial covariance", n, p0.dim()));
    }
    let t = outputs.nrows();
    let mut estimates = DMatrix::zeros(t, n);
    let mut covariances = Vec::with_capacity(t);
    let mut x = x0_hat.clone();
    let mut p = p0.clone();
    for k in 0..t {
        let st = kalman_step(&p, sys)?;
        let pred = sys.a() * &x;
        let innovation = outputs.row(k).transpose() - sys.c() * &pred;
        x = pred + &st.gain * innovation;
        estimates.set_row(k, &x.transpose());
        p = st.p;
        covariances.push(p.clone());
    }
    Ok(KalmanTrack { estimates, covariances })
}

/// Simulates a stationary trajectory and filters it from the stationary prior.
pub fn simulate_and_filter(sys: &LtiSystem, horizon: usize, rng: RngStream) -> Result<Trajectory> {
    let x0 = stationary_initial_state(sys.a(), sys.q(), rng)?;
    let mut traj = simulate_lti(sys, &x0, horizon, rng)?;
    let prior = solve_lyapunov(sys.a(), sys.q())?;
    // (0, Σ) at k = −1 predicts (0, Σ) at k = 0 since Σ is stationary.
    let track = run_kalman(sys, &traj.outputs, &DVector::zeros(sys.n()), &prior)?;
    traj.estimates = Some(track.estimates);
    traj.covariances = Some(track.covariances);
    Ok(traj)
}

/// Time-averaged `|X_k − X̂_k|²` over `horizon` steps after [`BURN_IN`].
pub fn kalman_mean_squared_error(sys: &LtiSystem, horizon: usize, rng: RngStream) -> Result<f64> {
    let traj = simulate_and_filter(sys, horizon + BURN_IN, rng)?;
    let est = traj.estimates.as_ref().expect("filtered");
    let err = (BURN_IN..traj.horizon())
        .map(|k| (traj.states.row(k) - est.row(k)).norm_squared())
        .sum::<f64>();
    Ok(err / horizon as f64)
}

/// True and privatized aggregates, row `k` = `Z̄_k` and `Ȳ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationTrace {
    pub true_agg: DMatrix<f64>,
    pub private_agg: DMatrix<f64>,
}

impl AggregationTrace {
    /// Per-component sample variance of `Ȳ_k − Z̄_k`.
    pub fn error_variance(&self) -> DVector<f64> {
        let diff = &self.private_agg - &self.true_agg;
        let t = diff.nrows() as f64;
        DVector::from_fn(diff.ncols(), |j, _| {
            let col = diff.column(j);
            let mean = col.mean();
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)
        })
    }
}

/// Simulates every subsystem from its stationary law (subsystem `i` uses
/// child stream `i`) and forms `Z̄_k = Σ L_i C_i X_{i,k}`, `Ȳ_k = Σ L_i Y_{i,k}`.
pub fn simulate_aggregation(net: &AggregationNetwork, horizon: usize, rng: RngStream) -> Result<AggregationTrace> {
    let thetas = net.thetas()?;
    let parts: Vec<(DMatrix<f64>, DMatrix<f64>)> = net
        .subsystems()
        .par_iter()
        .zip(thetas.par_iter())
        .enumerate()
        .map(|(i, (s, theta))| {
            let stream = rng.child(i as u64);
            let x0 = stationary_initial_state(&s.a, &s.q, stream)?;
            let traj = simulate_linear(&s.a, &s.c, &s.q, theta, &x0, horizon, stream)?;
            let z = &traj.states * s.c.transpose() * s.weight.transpose();
            let y = &traj.outputs * s.weight.transpose();
            Ok((z, y))
        })
        .collect::<Result<_>>()?;
    let q = net.output_dim();
    let mut true_agg = DMatrix::zeros(horizon, q);
    let mut private_agg = DMatrix::zeros(horizon, q);
    for (z, y) in parts {
        true_agg += z;
        private_agg += y;
    }
    Ok(AggregationTrace { true_agg, private_agg })
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV whose first column is the integer step `k`.
pub fn write_csv<W: Write>(mut w: W, header: &[String], rows: &DMatrix<f64>) -> io::Result<()> {
    if header.len() != rows.ncols() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "header length differs from column count"));
    }
    writeln!(w, "k,{}", header.join(","))?;
    for (k, row) in rows.row_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        writeln!(w, "{k},{}", cells.join(","))?;
    }
    Ok(())
}
