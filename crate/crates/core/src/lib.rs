//! Pointwise maximal leakage (PML) for Gaussian mechanisms and LTI systems.
//!
//! - [`gauss`]: symmetric-matrix kernels, χ²/normal functions, seeded sampling
//! - [`pml`]: closed-form leakage and the exact `(ε, δ)`-PML test
//! - [`mechanism`]: noise covariance design for Gaussian mechanisms
//! - [`relations`]: PML ↔ DP ↔ mutual-information budget conversions
//! - [`lti`]: Lyapunov priors, Kalman recursion, error lower bounds
//! - [`aggregation`]: per-subsystem design for privacy-aware fusion
//! - [`sim`]: Monte Carlo checks and trajectory simulation
//! - [`instances`]: random problem generators

pub mod aggregation;
pub mod error;
pub mod gauss;
pub mod instances;
pub mod lti;
pub mod mechanism;
pub mod pml;
pub mod relations;
pub mod sim;

pub use error::{Error, Result};
