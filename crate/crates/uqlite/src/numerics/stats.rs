//! Softmax, entropy, and streaming moment accumulation.

use crate::error::{domain, Result};

/// Numerically stable softmax via max subtraction. Order-preserving.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(domain("softmax of empty vector"));
    }
    if logits.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(domain("softmax input must be finite"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(domain("softmax input has no finite entry"));
    }
    let mut out: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}

/// log(sum(exp(x))) with max subtraction.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Shannon entropy in nats with the 0*log(0) := 0 convention.
pub fn entropy_nat(probs: &[f64]) -> f64 {
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Single-pass per-coordinate mean and population variance (Welford).
#[derive(Debug, Clone)]
pub struct StreamingMoments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl StreamingMoments {
    pub fn new(dim: usize) -> StreamingMoments {
        StreamingMoments {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.mean.len() {
            return Err(domain(format!(
                "sample length {} does not match accumulator dimension {}",
                sample.len(),
                self.mean.len()
            )));
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(sample) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance (1/M convention).
    pub fn population_variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.m2.len()];
        }
        let n = self.count as f64;
        self.m2.iter().map(|s| (s / n).max(0.0)).collect()
    }
}

/// Mean and population variance of a nonempty batch of equally-sized vectors.
pub fn streaming_mean_var(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = samples
        .first()
        .ok_or_else(|| domain("streaming_mean_var needs at least one sample"))?;
    let mut acc = StreamingMoments::new(first.len());
    for s in samples {
        acc.push(s)?;
    }
    Ok((acc.mean().to_vec(), acc.population_variance()))
}

/// Short hex fingerprint of a byte string; used to stamp configs into artifacts.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
