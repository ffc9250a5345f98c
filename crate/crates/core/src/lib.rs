//! Jointly sparse signal and support recovery for complex multiple
//! measurement vector (MMV) models, as used for device activity detection
//! and channel estimation in grant-free massive random access.
//!
//! Solvers:
//! - [`group_lasso`]: ADMM for GROUP LASSO in sharing form.
//! - [`amp`]: AMP with a per-device Bernoulli-Gaussian MMSE denoiser.
//! - [`map`]: coordinate descent for MAP / ML activity estimation.
//! - [`cov_lasso`]: nonnegative LASSO on the vectorized sample covariance.

pub mod amp;
pub mod cmat;
pub mod complex;
pub mod cov_lasso;
pub mod error;
pub mod group_lasso;
pub mod map;
pub mod metrics;
pub mod model;

pub use complex::ComplexMatrix;
pub use error::{Error, Result};
pub use num_complex::Complex64;
