//! Markov spacing chains for one-dimensional point processes.
//!
//! The crate builds spacing chains for two model families, hard-core
//! finite-range Gibbs gases (via a discretized transfer operator) and the
//! harmonic chain (an exact Gaussian AR(1)), then runs the
//! splitting/regeneration construction on the discretized kernels, estimates
//! Markov renewal measures and pair correlations by Monte Carlo, and fits
//! the exponential decay of both.
//!
//! Everything numeric is generic over the scalar type through
//! [`scalar::Scalar`]; the `*64` aliases below fix `f64`, which is what the
//! command-line front end and the acceptance checks use.

pub mod chains;
pub mod correlations;
pub mod error;
pub mod linalg;
pub mod models;
pub mod quad;
pub mod regeneration;
pub mod renewal;
pub mod scalar;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` aliases for the main domain types.
pub type Potential64 = models::PairPotential<f64>;
pub type HarmonicParams64 = models::HarmonicParams<f64>;
pub type Grid64 = quad::QuadratureGrid<f64>;
pub type GridSpec64 = transfer::GridSpec<f64>;
pub type Eigen64 = transfer::PrincipalEigen<f64>;
pub type Transition64 = transfer::TransitionModel<f64>;
pub type Sampler64 = chains::Sampler<f64>;
pub type Path64 = chains::SpacingPath<f64>;
pub type Cert64 = regeneration::MinorisationCert<f64>;
pub type RegenRecord64 = regeneration::RegenerationRecord<f64>;
pub type RenewalEstimate64 = renewal::RenewalEstimate<f64>;
pub type CovarianceCurve64 = correlations::CovarianceCurve<f64>;

/// `f32` aliases for the scalar-generic numeric core.
pub type Potential32 = models::PairPotential<f32>;
pub type HarmonicParams32 = models::HarmonicParams<f32>;
pub type Grid32 = quad::QuadratureGrid<f32>;
pub type GridSpec32 = transfer::GridSpec<f32>;
pub type Eigen32 = transfer::PrincipalEigen<f32>;
pub type Transition32 = transfer::TransitionModel<f32>;
