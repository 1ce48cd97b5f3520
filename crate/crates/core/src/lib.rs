//! Timing-based software attestation: randomized multi-pass polynomial
//! challenges, a device timing simulator, and the statistical verifier.

pub mod challenge;
pub mod checkpoint;
pub mod coefficients;
pub mod device;
pub mod error;
pub mod exec;
pub mod field;
pub mod permutation;
pub mod protocol;
pub mod stats;
