//! Uncertainty-weighted attention.
//!
//! Base attention is standard scaled dot-product; the reweighting step
//! penalizes attention toward high-uncertainty key tokens:
//!
//! `alpha~_ij = alpha_ij * exp(-lambda * U_j) / sum_k alpha_ik * exp(-lambda * U_k)`
//!
//! Implemented in log space (subtract `lambda * U_j` from the row logits and
//! re-normalize), which is mathematically identical and stable for large
//! penalties.

use crate::error::{domain, Result};
use crate::numerics::{entropy_nat, softmax, Matrix};

/// Row-stochastic attention before and after uncertainty reweighting.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub base: Matrix,
    pub reweighted: Matrix,
    pub lambda: f64,
    pub token_uncertainty: Vec<f64>,
}

/// `alpha_ij = softmax_j(q_i . k_j / sqrt(d))`.
pub fn base_attention(queries: &Matrix, keys: &Matrix) -> Result<Matrix> {
    if queries.cols() == 0 {
        return Err(domain("attention dimension d must be >= 1"));
    }
    if queries.cols() != keys.cols() {
        return Err(domain(format!(
            "query dim {} does not match key dim {}",
            queries.cols(),
            keys.cols()
        )));
    }
    let scale = 1.0 / (queries.cols() as f64).sqrt();
    let mut scores = queries.matmul_transpose(keys)?;
    for v in scores.data_mut().iter_mut() {
        *v *= scale;
    }
    softmax_rows(&scores)
}

/// Applies the exponential uncertainty penalty to a row-stochastic matrix.
pub fn reweight(alpha: &Matrix, token_uncertainty: &[f64], lambda: f64) -> Result<Matrix> {
    validate_uncertainty(token_uncertainty, alpha.cols())?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(domain("lambda must be finite and >= 0"));
    }
    validate_row_stochastic(alpha, 1e-6)?;
    if lambda == 0.0 {
        return Ok(alpha.clone());
    }
    let mut out = Matrix::zeros(alpha.rows(), alpha.cols());
    for i in 0..alpha.rows() {
        let logits: Vec<f64> = alpha
            .row(i)
            .iter()
            .zip(token_uncertainty.iter())
            .map(|(&a, &u)| {
                if a > 0.0 {
                    a.ln() - lambda * u
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let row = softmax_neg_inf(&logits)?;
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

/// Reweighted attention straight from raw scores: `softmax_j(s_ij - lambda*U_j)`.
/// Same map as `reweight(softmax(s), U, lambda)` up to rounding; the forward
/// pass uses this form so the penalty never leaves log space.
pub fn reweight_scores(scores: &Matrix, token_uncertainty: &[f64], lambda: f64) -> Result<Matrix> {
    validate_uncertainty(token_uncertainty, scores.cols())?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(domain("lambda must be finite and >= 0"));
    }
    let mut out = Matrix::zeros(scores.rows(), scores.cols());
    for i in 0..scores.rows() {
        let logits: Vec<f64> = scores
            .row(i)
            .iter()
            .zip(token_uncertainty.iter())
            .map(|(&s, &u)| s - lambda * u)
            .collect();
        let row = softmax(&logits)?;
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

/// Per-row Shannon entropy in nats (diagnostic for uncertainty maps).
pub fn attention_entropy(alpha: &Matrix) -> Vec<f64> {
    (0..alpha.rows())
        .map(|i| entropy_nat(alpha.row(i)))
        .collect()
}

/// CSV dump `layer,row,col,alpha,alpha_tilde` across layers.
pub fn attention_csv(maps: &[AttentionMap]) -> String {
    let mut out = String::from("layer,row,col,alpha,alpha_tilde\n");
    for (layer, map) in maps.iter().enumerate() {
        for r in 0..map.base.rows() {
            for c in 0..map.base.cols() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    layer,
                    r,
                    c,
                    map.base.get(r, c),
                    map.reweighted.get(r, c)
                ));
            }
        }
    }
    out
}

fn validate_uncertainty(token_uncertainty: &[f64], n: usize) -> Result<()> {
    if token_uncertainty.len() != n {
        return Err(domain(format!(
            "uncertainty length {} does not match token count {}",
            token_uncertainty.len(),
            n
        )));
    }
    if token_uncertainty.iter().any(|u| !u.is_finite() || *u < 0.0) {
        return Err(domain("token uncertainty must be finite and >= 0"));
    }
    Ok(())
}

pub(crate) fn validate_row_stochastic(alpha: &Matrix, tol: f64) -> Result<()> {
    for i in 0..alpha.rows() {
        let row = alpha.row(i);
        if row.iter().any(|&v| !(0.0..=1.0 + tol).contains(&v)) {
            return Err(domain(format!(
                "attention row {i} has entries outside [0,1]"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(domain(format!("attention row {i} sums to {sum}, not 1")));
        }
    }
    Ok(())
}

fn softmax_rows(scores: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(scores.rows(), scores.cols());
    for i in 0..scores.rows() {
        let row = softmax(scores.row(i))?;
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

/// Softmax tolerating -inf logits (zero base attention mass).
fn softmax_neg_inf(logits: &[f64]) -> Result<Vec<f64>> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(domain("attention row has no positive mass"));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .map(|&v| {
            if v == f64::NEG_INFINITY {
                0.0
            } else {
                (v - max).exp()
            }
        })
        .collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}
