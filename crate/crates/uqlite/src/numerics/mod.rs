//! Deterministic numeric kernel: matrices, stable softmax, streaming moments,
//! and counter-based seed derivation. Everything here is a pure function over
//! immutable inputs and safe to call concurrently.

mod matrix;
mod rng;
mod stats;

pub use matrix::Matrix;
pub use rng::{tags, SeedStream};
pub use stats::{
    entropy_nat, fingerprint, log_sum_exp, softmax, streaming_mean_var, StreamingMoments,
};
