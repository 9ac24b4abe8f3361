//! Estimation of rate-distortion functions from data.
//!
//! The crate computes the first-order rate-distortion function `R1(P, D)` of
//! finite-alphabet laws by Blahut–Arimoto, the codebook rate `R1(P, Q, D)`
//! through its dual (log-MGF) representation, and builds on both the
//! plug-in, parametric, penalized and lossy-likelihood estimators of
//! `R1(P, D)` from a sample. Sources, sliding-block and quantization
//! reductions, and scripted consistency experiments live alongside.
//!
//! All information quantities are in nats.

pub mod ba;
pub mod cli;
pub mod dist;
pub mod distortion;
pub mod dual;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod ext_real;
pub mod family;
pub mod optimize;
pub mod point;
pub mod sources;
pub mod symbol;

pub use dist::{entropy, kl_divergence, normalize, FiniteDist};
pub use distortion::{DistortionKind, DistortionModel};
pub use error::{Error, Result};
pub use ext_real::ExtReal;
pub use family::{ParamFamily, Theta};
pub use point::RDPoint;
pub use symbol::Symbol;
