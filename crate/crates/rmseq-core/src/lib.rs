//! Layered second-order Reed-Muller sequence codebooks for grant-free
//! multiple access, with FWHT-based successive interference cancellation.
//!
//! The crate is `no_std` (with `alloc`) and holds the pure algorithmic side:
//!
//! - [`gf2`]: binary linear algebra and GF(2^m) arithmetic,
//! - [`codebook`]: Kerdock / Delsarte-Goethals matrix sets, the
//!   user-ID ↔ (P, b) bijection and sequence generation,
//! - [`transforms`]: fast Walsh-Hadamard transform and the block-swap
//!   shift used by chirp decoding,
//! - [`detector`]: shuffled column recovery and the SIC detection loop,
//! - [`sim`]: traffic generation, channel models and Monte Carlo trials.
//!
//! File formats, CSV/JSON output and the command-line front end live in the
//! companion `rmseq-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod codebook;
pub mod detector;
pub mod gf2;
pub mod sim;
pub mod transforms;

use core::fmt;

pub use codebook::{Codebook, RmParams, RmSequence};
pub use detector::{DetectedUser, Detection, DetectorConfig};
pub use gf2::{BitMatrix, BitVec, FieldContext};
pub use sim::{ChannelModel, ExperimentConfig, ExperimentMetrics, TrialOutcome};

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// No primitive polynomial table entry for this extension degree.
    UnsupportedM(usize),
    /// The supplied polynomial is not primitive over GF(2).
    NotPrimitive { m: usize, poly: u32 },
    /// A parameter failed validation; the message names the field.
    InvalidParams(&'static str),
    /// Vector or matrix dimensions disagree.
    DimensionMismatch { expected: usize, actual: usize },
    /// User id outside the configured space.
    IdOutOfRange { id: u64, space: u64 },
    /// A P matrix that is not a member of the codebook's DG span.
    InvalidP,
    /// A bilinear form handed to `gram_matrix` was not symmetric.
    AsymmetricForm,
    /// The least-squares system is rank deficient (duplicate sequences).
    RankDeficient,
    /// Input length must be a power of two.
    LengthNotPowerOfTwo(usize),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UnsupportedM(m) => write!(f, "unsupported extension degree m = {m}"),
            Error::NotPrimitive { m, poly } => {
                write!(f, "polynomial {poly:#b} is not primitive for m = {m}")
            }
            Error::InvalidParams(what) => write!(f, "invalid parameter: {what}"),
            Error::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            Error::IdOutOfRange { id, space } => {
                write!(f, "user id {id} outside space of size {space}")
            }
            Error::InvalidP => write!(f, "P matrix is not a codebook member"),
            Error::AsymmetricForm => write!(f, "bilinear form is not symmetric"),
            Error::RankDeficient => write!(f, "least-squares system is rank deficient"),
            Error::LengthNotPowerOfTwo(n) => write!(f, "length {n} is not a power of two"),
        }
    }
}

impl core::error::Error for Error {}
