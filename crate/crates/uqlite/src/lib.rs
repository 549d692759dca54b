//! uqlite: a small stochastic transformer with end-to-end uncertainty
//! quantification at desk scale.
//!
//! The pipeline runs in three stages over a toy single-head transformer:
//! MC-dropout embedding posteriors (per-token uncertainty), uncertainty-
//! weighted attention (exponential penalty on unreliable tokens), and
//! entropy-gated abstention. Around it sit Monte-Carlo variance
//! decomposition (aleatoric/epistemic split, layer-wise attribution),
//! calibration metrics (ECE, NLL, CUS, ZTI), post-hoc baseline calibrators,
//! a synthetic data generator, and a CLI.

pub mod attention;
pub mod calibrate;
pub mod commands;
pub mod data;
pub mod decision;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod runtime;
pub mod variance;

pub use error::{Result, UqError};
