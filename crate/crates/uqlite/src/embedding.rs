//! Bayesian embedding calibration: aggregates M stochastic embedding passes
//! into a posterior mean, per-coordinate variance, and a scalar token
//! uncertainty
//!
//! `U(x_j) = (1/M) sum_m ||f_m(x_j) - mean_j||^2`
//!
//! which also equals the sum over dimensions of the per-coordinate variance
//! (population convention); the identity is kept as a cross-check because the
//! two quantities are computed on independent routes.

use crate::error::{domain, Result};
use crate::numerics::{Matrix, StreamingMoments};

#[derive(Debug, Clone)]
pub struct EmbeddingPosterior {
    /// n x d posterior mean.
    pub mean: Matrix,
    /// n x d per-coordinate population variance.
    pub var: Matrix,
    /// Scalar uncertainty per token (mean squared distance to the mean).
    pub token_uncertainty: Vec<f64>,
    pub num_samples: usize,
}

/// Aggregates M per-token embedding matrices (all n x d) into a posterior.
pub fn calibrate_embeddings(samples: &[Matrix]) -> Result<EmbeddingPosterior> {
    let first = samples
        .first()
        .ok_or_else(|| domain("calibrate_embeddings needs at least one sample"))?;
    let (n, d) = (first.rows(), first.cols());
    if samples.iter().any(|s| s.rows() != n || s.cols() != d) {
        return Err(domain("embedding samples disagree on shape"));
    }
    let m = samples.len();

    // Mean and per-coordinate variance via streaming moments.
    let mut acc: Vec<StreamingMoments> = (0..n).map(|_| StreamingMoments::new(d)).collect();
    for s in samples {
        for (j, a) in acc.iter_mut().enumerate() {
            a.push(s.row(j))?;
        }
    }
    let mut mean = Matrix::zeros(n, d);
    let mut var = Matrix::zeros(n, d);
    for (j, a) in acc.iter().enumerate() {
        mean.row_mut(j).copy_from_slice(a.mean());
        var.row_mut(j).copy_from_slice(&a.population_variance());
    }

    // Token uncertainty on the direct distance route.
    let mut token_uncertainty = vec![0.0; n];
    for s in samples {
        for (j, u) in token_uncertainty.iter_mut().enumerate() {
            let dist2: f64 = s
                .row(j)
                .iter()
                .zip(mean.row(j).iter())
                .map(|(x, mu)| (x - mu) * (x - mu))
                .sum();
            *u += dist2;
        }
    }
    for u in token_uncertainty.iter_mut() {
        *u /= m as f64;
    }

    Ok(EmbeddingPosterior {
        mean,
        var,
        token_uncertainty,
        num_samples: m,
    })
}

/// Dimension-normalized uncertainty `U / d`, so the attention penalty scale is
/// comparable across embedding widths. Order-preserving.
pub fn normalized_uncertainty(posterior: &EmbeddingPosterior) -> Vec<f64> {
    let d = posterior.mean.cols().max(1) as f64;
    posterior.token_uncertainty.iter().map(|u| u / d).collect()
}

/// CSV export `token_index,U,normalized_U` for uncertainty-map inspection.
pub fn posterior_csv(posterior: &EmbeddingPosterior) -> String {
    let normalized = normalized_uncertainty(posterior);
    let mut out = String::from("token_index,U,normalized_U\n");
    for (j, (u, nu)) in posterior
        .token_uncertainty
        .iter()
        .zip(normalized.iter())
        .enumerate()
    {
        out.push_str(&format!("{j},{u},{nu}\n"));
    }
    out
}
