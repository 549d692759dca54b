//! Calibration and trustworthiness metrics over prediction records.
//!
//! Binning convention: B equal-width bins on [0,1], interval (lo, hi] with the
//! first bin closed at 0. Binning confidence is the maximum class probability;
//! the ZTI acceptance set uses the entropy-normalized confidence `C(p)` with
//! `C >= tau`.

use serde::{Deserialize, Serialize};

use crate::decision;
use crate::error::{domain, Result};

pub const DEFAULT_BINS: usize = 15;
pub const DEFAULT_BETA: f64 = 1.0;
/// Clamp on the true-class probability inside NLL; keeps saturated softmax
/// outputs finite.
pub const NLL_CLAMP: f64 = 1e-12;

/// One scored prediction: probability vector, true label, severity weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    probs: Vec<f64>,
    label: usize,
    severity: f64,
}

impl PredictionRecord {
    pub fn new(probs: Vec<f64>, label: usize) -> Result<PredictionRecord> {
        Self::with_severity(probs, label, 1.0)
    }

    pub fn with_severity(probs: Vec<f64>, label: usize, severity: f64) -> Result<PredictionRecord> {
        if probs.len() < 2 {
            return Err(domain("prediction needs at least 2 classes"));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(domain("probabilities must be finite and >= 0"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(domain(format!("probabilities sum to {sum}, not 1")));
        }
        if label >= probs.len() {
            return Err(domain(format!(
                "label {} out of range for {} classes",
                label,
                probs.len()
            )));
        }
        if !severity.is_finite() || severity < 0.0 {
            return Err(domain("severity must be finite and >= 0"));
        }
        Ok(PredictionRecord {
            probs,
            label,
            severity,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn severity(&self) -> f64 {
        self.severity
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Maximum class probability (MSP confidence).
    pub fn confidence(&self) -> f64 {
        self.probs
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .clamp(0.0, 1.0)
    }

    /// argmax(p) == label, ties broken by lowest class index.
    pub fn correct(&self) -> bool {
        decision::argmax(&self.probs) == self.label
    }
}

/// Per-bin reliability statistics.
#[derive(Debug, Clone, Serialize)]
pub struct BinStats {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub acc: f64,
    pub conf: f64,
    /// Fraction of all records landing in this bin.
    pub proportion: f64,
    pub mean_severity: f64,
    /// CUS weight: mean_severity * (1 + beta * [conf > acc]); 0 for empty bins.
    pub weight: f64,
}

fn bin_bounds(b: usize, bins: usize) -> (f64, f64) {
    (b as f64 / bins as f64, (b + 1) as f64 / bins as f64)
}

fn bin_of(confidence: f64, bins: usize) -> usize {
    for b in 0..bins {
        let (lo, hi) = bin_bounds(b, bins);
        let in_bin = if b == 0 {
            confidence >= 0.0 && confidence <= hi
        } else {
            confidence > lo && confidence <= hi
        };
        if in_bin {
            return b;
        }
    }
    bins - 1
}

/// Full per-bin table; `ece` and `cus` are exact aggregations of this table.
pub fn reliability_diagram(
    records: &[PredictionRecord],
    bins: usize,
    beta: f64,
) -> Result<Vec<BinStats>> {
    if records.is_empty() {
        return Err(domain("reliability_diagram needs at least one record"));
    }
    if bins == 0 {
        return Err(domain("bin count must be >= 1"));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(domain("beta must be finite and >= 0"));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut acc_sum = vec![0.0; bins];
    let mut sev_sum = vec![0.0; bins];
    for r in records {
        let b = bin_of(r.confidence(), bins);
        count[b] += 1;
        conf_sum[b] += r.confidence();
        acc_sum[b] += if r.correct() { 1.0 } else { 0.0 };
        sev_sum[b] += r.severity();
    }
    let n = records.len() as f64;
    let table = (0..bins)
        .map(|b| {
            let (lo, hi) = bin_bounds(b, bins);
            let c = count[b];
            let (acc, conf, mean_severity) = if c > 0 {
                (
                    acc_sum[b] / c as f64,
                    conf_sum[b] / c as f64,
                    sev_sum[b] / c as f64,
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            let weight = if c > 0 {
                mean_severity * (1.0 + beta * if conf > acc { 1.0 } else { 0.0 })
            } else {
                0.0
            };
            BinStats {
                bin: b,
                lo,
                hi,
                count: c,
                acc,
                conf,
                proportion: c as f64 / n,
                mean_severity,
                weight,
            }
        })
        .collect();
    Ok(table)
}

/// Expected calibration error: sum_b P(b) * |acc(b) - conf(b)|.
pub fn ece(records: &[PredictionRecord], bins: usize) -> Result<f64> {
    let table = reliability_diagram(records, bins, 0.0)?;
    Ok(table
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.proportion * (b.acc - b.conf).abs())
        .sum())
}

/// Mean negative log-likelihood of the true class, natural log, clamped at
/// `NLL_CLAMP`.
pub fn nll(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(domain("nll needs at least one record"));
    }
    let sum: f64 = records
        .iter()
        .map(|r| -(r.probs()[r.label()].max(NLL_CLAMP)).ln())
        .sum();
    let value = sum / records.len() as f64;
    // -ln(1) = -0.0; keep the zero unsigned.
    Ok(if value == 0.0 { 0.0 } else { value })
}

/// Clinical uncertainty score: severity-weighted calibration error with an
/// extra `beta` penalty on overconfident bins. Degenerates to ECE when all
/// severities are 1 and beta = 0.
pub fn cus(records: &[PredictionRecord], bins: usize, beta: f64) -> Result<f64> {
    let table = reliability_diagram(records, bins, beta)?;
    Ok(table
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| (b.acc - b.conf).abs() * b.proportion * b.weight)
        .sum())
}

/// Zero-shot trustworthiness index: harmonic mean of coverage and calibrated
/// accuracy on the `C(p) >= tau` subset; 0 when both terms vanish.
pub fn zti(records: &[PredictionRecord], tau: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(domain("zti needs at least one record"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(domain("tau must lie in [0,1]"));
    }
    let mut accepted = 0usize;
    let mut accepted_correct = 0usize;
    for r in records {
        let (_, c) = decision::confidence(r.probs())?;
        if c >= tau {
            accepted += 1;
            if r.correct() {
                accepted_correct += 1;
            }
        }
    }
    let coverage = accepted as f64 / records.len() as f64;
    let calibrated_accuracy = if accepted > 0 {
        accepted_correct as f64 / accepted as f64
    } else {
        0.0
    };
    if coverage + calibrated_accuracy == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * coverage * calibrated_accuracy / (coverage + calibrated_accuracy))
}

/// Summary block written by the CLI; values are exactly the library calls.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsSummary {
    pub ece: f64,
    pub nll: f64,
    pub cus: f64,
    pub zti: f64,
    pub n: usize,
    pub bins: usize,
    pub beta: f64,
    pub tau: f64,
}

pub fn summarize(
    records: &[PredictionRecord],
    bins: usize,
    beta: f64,
    tau: f64,
) -> Result<MetricsSummary> {
    Ok(MetricsSummary {
        ece: ece(records, bins)?,
        nll: nll(records)?,
        cus: cus(records, bins, beta)?,
        zti: zti(records, tau)?,
        n: records.len(),
        bins,
        beta,
        tau,
    })
}

pub fn reliability_csv(table: &[BinStats]) -> String {
    let mut out = String::from("bin_lo,bin_hi,count,acc,conf,P,mean_severity,weight\n");
    for b in table {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            b.lo, b.hi, b.count, b.acc, b.conf, b.proportion, b.mean_severity, b.weight
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rec(probs: Vec<f64>, label: usize) -> PredictionRecord {
        PredictionRecord::new(probs, label).unwrap()
    }

    /// Four records with confidence 0.8, two correct: one occupied bin with
    /// acc 0.5, conf 0.8.
    fn overconfident_four() -> Vec<PredictionRecord> {
        vec![
            rec(vec![0.8, 0.2], 0),
            rec(vec![0.8, 0.2], 0),
            rec(vec![0.8, 0.2], 1),
            rec(vec![0.8, 0.2], 1),
        ]
    }

    #[test]
    fn record_validation() {
        assert!(PredictionRecord::new(vec![0.5], 0).is_err());
        assert!(PredictionRecord::new(vec![0.4, 0.4], 0).is_err());
        assert!(PredictionRecord::new(vec![0.5, 0.5], 2).is_err());
        assert!(PredictionRecord::with_severity(vec![0.5, 0.5], 0, -1.0).is_err());
    }

    #[test]
    fn ece_zero_for_one_hot_correct() {
        let records = vec![rec(vec![1.0, 0.0], 0), rec(vec![0.0, 1.0], 1)];
        assert_eq!(ece(&records, 15).unwrap(), 0.0);
    }

    #[test]
    fn ece_hand_case() {
        assert!((ece(&overconfident_four(), 15).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn nll_hand_cases() {
        let perfect = vec![rec(vec![1.0, 0.0], 0)];
        assert_eq!(nll(&perfect).unwrap(), 0.0);

        let half = vec![rec(vec![0.5, 0.5], 0), rec(vec![0.5, 0.5], 1)];
        assert!((nll(&half).unwrap() - 2.0_f64.ln()).abs() < 1e-12);

        let zero = vec![rec(vec![1.0, 0.0], 1)];
        assert!((nll(&zero).unwrap() - 27.631021).abs() < 1e-3);
    }

    #[test]
    fn cus_degenerates_to_ece() {
        let mut rng = crate::numerics::SeedStream::new(3).rng();
        for _ in 0..50 {
            let records: Vec<PredictionRecord> = (0..40)
                .map(|_| {
                    let a: f64 = rng.random::<f64>();
                    rec(vec![a, 1.0 - a], (rng.random::<u32>() % 2) as usize)
                })
                .collect();
            let e = ece(&records, 15).unwrap();
            let c = cus(&records, 15, 0.0).unwrap();
            assert_eq!(e, c);
        }
    }

    #[test]
    fn cus_hand_case_and_severity_linearity() {
        // Overconfident bin, unit severity, beta = 1 -> 0.3 * 2 = 0.6.
        assert!((cus(&overconfident_four(), 15, 1.0).unwrap() - 0.6).abs() < 1e-12);

        let doubled: Vec<PredictionRecord> = overconfident_four()
            .iter()
            .map(|r| PredictionRecord::with_severity(r.probs().to_vec(), r.label(), 2.0).unwrap())
            .collect();
        let base = cus(&overconfident_four(), 15, 1.0).unwrap();
        let scaled = cus(&doubled, 15, 1.0).unwrap();
        assert!((scaled - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn zti_hand_cases() {
        let perfect = vec![rec(vec![1.0, 0.0], 0), rec(vec![0.0, 1.0], 1)];
        assert_eq!(zti(&perfect, 0.8).unwrap(), 1.0);

        // Nothing accepted at tau = 1 without one-hot records.
        let soft = vec![rec(vec![0.9, 0.1], 0)];
        assert_eq!(zti(&soft, 1.0).unwrap(), 0.0);

        // Coverage 0.5, calibrated accuracy 1.0 -> 2/3.
        let mixed = vec![
            rec(vec![1.0, 0.0], 0),
            rec(vec![0.5, 0.5], 1), // abstains at any tau > 0
        ];
        assert!((zti(&mixed, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zti_at_tau_zero_matches_closed_form() {
        let records = vec![
            rec(vec![0.6, 0.4], 0),
            rec(vec![0.6, 0.4], 1),
            rec(vec![0.9, 0.1], 0),
        ];
        let acc = records.iter().filter(|r| r.correct()).count() as f64 / 3.0;
        let expected = 2.0 * acc / (1.0 + acc);
        assert!((zti(&records, 0.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn reliability_single_bin_for_high_confidence() {
        let records: Vec<PredictionRecord> =
            (0..10).map(|i| rec(vec![0.999, 0.001], i % 2)).collect();
        let table = reliability_diagram(&records, 15, 1.0).unwrap();
        let nonempty: Vec<&BinStats> = table.iter().filter(|b| b.count > 0).collect();
        assert_eq!(nonempty.len(), 1);
        assert_eq!(nonempty[0].bin, 14);
    }

    #[test]
    fn reliability_table_recomputes_ece_exactly() {
        let mut rng = crate::numerics::SeedStream::new(9).rng();
        let records: Vec<PredictionRecord> = (0..500)
            .map(|_| {
                let a: f64 = 0.5 + 0.5 * rng.random::<f64>();
                rec(vec![a, 1.0 - a], (rng.random::<u32>() % 2) as usize)
            })
            .collect();
        let table = reliability_diagram(&records, 15, 0.0).unwrap();
        let from_table: f64 = table
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.proportion * (b.acc - b.conf).abs())
            .sum();
        assert!((from_table - ece(&records, 15).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn uniform_confidences_fill_every_bin() {
        let mut rng = crate::numerics::SeedStream::new(10).rng();
        let records: Vec<PredictionRecord> = (0..100_000)
            .map(|_| {
                // Binary top-class probability uniform on (0.5, 1] covers the
                // top half of bins; spread labels across classes.
                let a: f64 = 0.5 + 0.5 * rng.random::<f64>();
                rec(vec![a, 1.0 - a], (rng.random::<u32>() % 2) as usize)
            })
            .collect();
        let table = reliability_diagram(&records, 15, 0.0).unwrap();
        for b in table.iter().filter(|b| b.lo >= 0.5) {
            assert!(b.count > 0, "bin {} unexpectedly empty", b.bin);
        }
        let total_p: f64 = table.iter().map(|b| b.proportion).sum();
        assert!((total_p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nll_is_a_proper_score() {
        // With labels at fixed empirical frequency, a constant forecast
        // minimizes NLL exactly at that frequency (2-class grid search).
        let records: Vec<Vec<PredictionRecord>> = (0..=100)
            .map(|i| {
                let q = (i as f64 / 100.0).clamp(1e-6, 1.0 - 1e-6);
                // 70 labels of class 0, 30 of class 1.
                (0..100)
                    .map(|j| rec(vec![q, 1.0 - q], if j < 70 { 0 } else { 1 }))
                    .collect()
            })
            .collect();
        let mut best_q = 0.0;
        let mut best = f64::INFINITY;
        for (i, rs) in records.iter().enumerate() {
            let v = nll(rs).unwrap();
            if v < best {
                best = v;
                best_q = i as f64 / 100.0;
            }
        }
        assert!((best_q - 0.7).abs() < 0.011, "minimizer {best_q}");
    }

    #[test]
    fn metric_ranges_hold_on_random_records() {
        use rand::Rng;
        let mut rng = crate::numerics::SeedStream::new(11).rng();
        for _ in 0..200 {
            let k = 2 + (rng.random::<u32>() as usize) % 4;
            let records: Vec<PredictionRecord> = (0..30)
                .map(|_| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
                    let sum: f64 = raw.iter().sum();
                    PredictionRecord::with_severity(
                        raw.iter().map(|v| v / sum).collect(),
                        (rng.random::<u32>() as usize) % k,
                        rng.random::<f64>() * 4.0,
                    )
                    .unwrap()
                })
                .collect();
            let e = ece(&records, 15).unwrap();
            assert!((0.0..=1.0).contains(&e));
            let z = zti(&records, rng.random::<f64>()).unwrap();
            assert!((0.0..=1.0).contains(&z));
            assert!(cus(&records, 15, rng.random::<f64>() * 3.0).unwrap() >= 0.0);
        }
    }

    #[test]
    fn empty_records_are_domain_errors() {
        assert!(ece(&[], 15).is_err());
        assert!(nll(&[]).is_err());
        assert!(cus(&[], 15, 1.0).is_err());
        assert!(zti(&[], 0.5).is_err());
        assert!(reliability_diagram(&[], 15, 1.0).is_err());
    }
}
