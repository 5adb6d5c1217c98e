//! Sequential empirical-Bayes multiple testing.
//!
//! The crate implements the adaptive and non-adaptive multistage lfdr
//! procedures (AMSET / MSET), the always-valid p-value + Benjamini-Hochberg
//! baseline, the empirical-Bayes estimation pipeline used by the data-driven
//! statistics, and the error-rate bookkeeping used to compare them.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the simulation
//! harness uses.

pub mod avpv;
pub mod error;
pub mod estimate;
pub mod lfdr;
pub mod metrics;
pub mod model;
pub mod procedures;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Two-groups model with an `f64` scalar.
pub type TwoGroupsModel = model::TwoGroupsModel<f64>;
/// Gaussian location mixture with an `f64` scalar.
pub type GaussianMixture = model::GaussianMixture<f64>;
/// Per-coordinate lfdr accumulator with an `f64` scalar.
pub type LfdrState = lfdr::LfdrState<f64>;
/// Always-valid p-value processes with an `f64` scalar.
pub type AvpvState = avpv::AvpvState<f64>;
/// Prior for the mSPRT mixture likelihood ratio with an `f64` scalar.
pub type PriorSpec = avpv::PriorSpec<f64>;
/// Procedure configuration with an `f64` scalar.
pub type ProcedureConfig = procedures::ProcedureConfig<f64>;
/// Observation matrix with an `f64` scalar.
pub type ObservationMatrix = model::ObservationMatrix<f64>;
/// NPMLE deconvolution output with an `f64` scalar.
pub type DeconvolutionResult = estimate::DeconvolutionResult<f64>;
/// Fitted two-groups model with an `f64` scalar.
pub type FittedModel = estimate::FittedModel<f64>;

pub use metrics::{Confusion, MetricsReport};
pub use model::GroundTruth;
pub use procedures::{DecisionRecord, RunOutput, StoppingRule, Thresholding};
