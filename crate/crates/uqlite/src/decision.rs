//! Confidence-guided decision shaping.
//!
//! Normalized confidence `C(p) = 1 - H(p)/log K` gates predictions: accept
//! `argmax(p)` when `C >= tau`, abstain otherwise. The base of the logarithm
//! cancels in `C`.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::metrics::PredictionRecord;
use crate::numerics::entropy_nat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Class(usize),
    Uncertain,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapedDecision {
    pub probs: Vec<f64>,
    pub entropy: f64,
    pub confidence: f64,
    pub decision: Decision,
    pub tau: f64,
}

fn validate_probs(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(domain("confidence needs at least 2 classes"));
    }
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(domain("probabilities must be finite and >= 0"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(domain(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Entropy (nats) and normalized confidence of a predictive distribution.
/// Confidence within 1e-12 of an endpoint snaps to it, so the uniform and
/// one-hot degeneracies are exact despite summation rounding.
pub fn confidence(p: &[f64]) -> Result<(f64, f64)> {
    validate_probs(p)?;
    let h = entropy_nat(p).clamp(0.0, (p.len() as f64).ln());
    let mut c = (1.0 - h / (p.len() as f64).ln()).clamp(0.0, 1.0);
    if c < 1e-12 {
        c = 0.0;
    } else if c > 1.0 - 1e-12 {
        c = 1.0;
    }
    Ok((h, c))
}

/// Index of the largest probability, ties broken by lowest class index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Accept `argmax(p)` when `C(p) >= tau`, abstain otherwise. Equality accepts.
pub fn decide(p: &[f64], tau: f64) -> Result<ShapedDecision> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(domain("tau must lie in [0,1]"));
    }
    let (entropy, conf) = confidence(p)?;
    let decision = if conf >= tau {
        Decision::Class(argmax(p))
    } else {
        Decision::Uncertain
    };
    Ok(ShapedDecision {
        probs: p.to_vec(),
        entropy,
        confidence: conf,
        decision,
        tau,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskCoveragePoint {
    pub tau: f64,
    pub coverage: f64,
    pub calibrated_accuracy: f64,
    pub errors_prevented: f64,
}

/// Sweeps the abstention threshold over prediction records.
///
/// coverage = accepted / total; calibrated accuracy = accuracy on the accepted
/// subset (0 when nothing is accepted); errors_prevented = abstained errors /
/// total baseline errors (0 when the baseline makes no errors).
pub fn risk_coverage(records: &[PredictionRecord], taus: &[f64]) -> Result<Vec<RiskCoveragePoint>> {
    if records.is_empty() {
        return Err(domain("risk_coverage needs at least one record"));
    }
    let scored: Vec<(f64, bool)> = records
        .iter()
        .map(|r| confidence(r.probs()).map(|(_, c)| (c, r.correct())))
        .collect::<Result<_>>()?;
    let total = scored.len() as f64;
    let baseline_errors = scored.iter().filter(|(_, correct)| !correct).count() as f64;

    let mut curve = Vec::with_capacity(taus.len());
    for &tau in taus {
        if !(0.0..=1.0).contains(&tau) {
            return Err(domain("tau grid values must lie in [0,1]"));
        }
        let accepted: Vec<&(f64, bool)> = scored.iter().filter(|(c, _)| *c >= tau).collect();
        let coverage = accepted.len() as f64 / total;
        let calibrated_accuracy = if accepted.is_empty() {
            0.0
        } else {
            accepted.iter().filter(|(_, correct)| *correct).count() as f64 / accepted.len() as f64
        };
        let abstained_errors = scored
            .iter()
            .filter(|(c, correct)| *c < tau && !correct)
            .count() as f64;
        let errors_prevented = if baseline_errors == 0.0 {
            0.0
        } else {
            abstained_errors / baseline_errors
        };
        curve.push(RiskCoveragePoint {
            tau,
            coverage,
            calibrated_accuracy,
            errors_prevented,
        });
    }
    Ok(curve)
}

pub fn risk_coverage_csv(curve: &[RiskCoveragePoint]) -> String {
    let mut out = String::from("tau,coverage,calibrated_accuracy,errors_prevented\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.tau, p.coverage, p.calibrated_accuracy, p.errors_prevented
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(probs: Vec<f64>, label: usize) -> PredictionRecord {
        PredictionRecord::new(probs, label).unwrap()
    }

    #[test]
    fn uniform_has_zero_confidence() {
        let (h, c) = confidence(&[0.25; 4]).unwrap();
        assert!((h - 4.0_f64.ln()).abs() < 1e-12);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn one_hot_has_full_confidence() {
        let (h, c) = confidence(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(h, 0.0);
        assert_eq!(c, 1.0);
    }

    #[test]
    fn half_mass_on_two_of_four_gives_half_confidence() {
        let (_, c) = confidence(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_k_and_unnormalized() {
        assert!(confidence(&[1.0]).is_err());
        assert!(confidence(&[0.7, 0.7]).is_err());
        assert!(confidence(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn confidence_is_permutation_invariant() {
        let p = [0.42, 0.08, 0.31, 0.19];
        let (_, c) = confidence(&p).unwrap();
        let (_, c_rot) = confidence(&[0.19, 0.42, 0.08, 0.31]).unwrap();
        let (_, c_rev) = confidence(&[0.19, 0.31, 0.08, 0.42]).unwrap();
        assert!((c - c_rot).abs() < 1e-15);
        assert!((c - c_rev).abs() < 1e-15);
    }

    #[test]
    fn accepted_class_is_always_the_argmax() {
        use rand::Rng;
        let mut rng = crate::numerics::SeedStream::new(77).rng();
        for _ in 0..500 {
            let k = 2 + (rng.random::<u32>() as usize) % 5;
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let sum: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            if let Decision::Class(chosen) = decide(&p, 0.0).unwrap().decision {
                assert_eq!(chosen, argmax(&p));
            } else {
                panic!("tau = 0 must accept");
            }
        }
    }

    #[test]
    fn base_invariance_of_confidence() {
        let p = [0.61, 0.17, 0.12, 0.1];
        let (_, c) = confidence(&p).unwrap();
        let h2: f64 = p
            .iter()
            .map(|&v| if v > 0.0 { -v * v.log2() } else { 0.0 })
            .sum();
        let c2 = 1.0 - h2 / (p.len() as f64).log2();
        assert!((c - c2).abs() < 1e-12);
    }

    #[test]
    fn tau_zero_always_accepts() {
        let d = decide(&[0.3, 0.3, 0.4], 0.0).unwrap();
        assert_eq!(d.decision, Decision::Class(2));
    }

    #[test]
    fn tau_one_abstains_unless_one_hot() {
        let d = decide(&[0.95, 0.05], 1.0).unwrap();
        assert_eq!(d.decision, Decision::Uncertain);
        let d = decide(&[1.0, 0.0], 1.0).unwrap();
        assert_eq!(d.decision, Decision::Class(0));
    }

    #[test]
    fn tie_break_accepts_lowest_class_at_exact_threshold() {
        // C([0.5,0.5,0,0]) = 0.5 exactly; C = tau accepts; argmax tie -> class 0.
        let d = decide(&[0.5, 0.5, 0.0, 0.0], 0.5).unwrap();
        assert_eq!(d.decision, Decision::Class(0));
    }

    #[test]
    fn risk_coverage_four_record_case() {
        // Confidences {0.9, 0.9, 0.2, 0.2}, correctness {1, 1, 0, 1}.
        // Binary records realizing those entropy confidences.
        let p_hi = prob_with_confidence(0.9);
        let p_lo = prob_with_confidence(0.2);
        let records = vec![
            record(p_hi.clone(), 0),
            record(p_hi.clone(), 0),
            record(p_lo.clone(), 1), // wrong
            record(p_lo.clone(), 0),
        ];
        let curve = risk_coverage(&records, &[0.5]).unwrap();
        assert!((curve[0].coverage - 0.5).abs() < 1e-12);
        assert!((curve[0].calibrated_accuracy - 1.0).abs() < 1e-12);
        assert!((curve[0].errors_prevented - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_zero_point_matches_overall_accuracy() {
        let records = vec![
            record(vec![0.8, 0.2], 0),
            record(vec![0.7, 0.3], 1),
            record(vec![0.6, 0.4], 0),
        ];
        let curve = risk_coverage(&records, &[0.0]).unwrap();
        assert_eq!(curve[0].coverage, 1.0);
        assert!((curve[0].calibrated_accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(curve[0].errors_prevented, 0.0);
    }

    #[test]
    fn tau_one_abstains_everything_without_one_hots() {
        let records = vec![record(vec![0.8, 0.2], 1), record(vec![0.9, 0.1], 0)];
        let curve = risk_coverage(&records, &[1.0]).unwrap();
        assert_eq!(curve[0].coverage, 0.0);
        assert_eq!(curve[0].calibrated_accuracy, 0.0);
        assert_eq!(curve[0].errors_prevented, 1.0);
    }

    #[test]
    fn coverage_is_non_increasing_in_tau() {
        let mut rng = crate::numerics::SeedStream::new(5).rng();
        use rand::Rng;
        let records: Vec<PredictionRecord> = (0..200)
            .map(|_| {
                let a: f64 = rng.random::<f64>();
                record(vec![a, 1.0 - a], (rng.random::<u32>() % 2) as usize)
            })
            .collect();
        let taus: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let curve = risk_coverage(&records, &taus).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].coverage <= w[0].coverage);
        }
    }

    /// Binary distribution whose normalized confidence is exactly `c_target`
    /// (solved by bisection on the top-class probability).
    fn prob_with_confidence(c_target: f64) -> Vec<f64> {
        let mut lo = 0.5;
        let mut hi = 1.0 - 1e-15;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (_, c) = confidence(&[mid, 1.0 - mid]).unwrap();
            if c < c_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        vec![hi, 1.0 - hi]
    }
}
