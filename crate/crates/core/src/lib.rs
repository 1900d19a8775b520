//! Blind channel normalization of speech cepstra.
//!
//! A cepstral trajectory induces a Riemannian metric on cepstral space (the
//! local covariance of its velocities). Parallel transporting a few reference
//! vectors with the Levi-Civita connection of that metric lays down a
//! coordinate system, the *scale*, in which the trajectory's representation is
//! unchanged by any invertible time-independent distortion, such as the one
//! imposed by a stationary noisy reverberant channel. Mapping corrupted cepstra
//! through the corrupted-channel scale and then through the inverse of the
//! clean-channel scale converts them into clean-channel cepstra.

// Negated comparisons reject NaN on purpose; index loops mirror the tensor
// notation of the geometry kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod container;
pub mod dsp;
pub mod baselines;
pub mod channel;
pub mod convert;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod pca;
pub mod pipeline;
pub mod scale;
pub mod synth;

pub use error::{Error, Result};
