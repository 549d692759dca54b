//! End-to-end prediction pipelines.
//!
//! The uncertainty-aware path derives M mask sets, calibrates the embedding
//! posterior on the M stochastic embedding samples, feeds the (normalized)
//! token uncertainty into every layer's attention reweighting while replaying
//! the same masks, averages the M probability vectors, and gates the result
//! by normalized confidence. M = 1 carries no posterior spread, so it runs
//! the deterministic pass and coincides with the baseline when lambda = 0.

use serde::Serialize;

use crate::data::{Example, LogRecord};
use crate::decision::{self, ShapedDecision};
use crate::embedding::{calibrate_embeddings, normalized_uncertainty};
use crate::error::{domain, Result};
use crate::metrics::PredictionRecord;
use crate::model::{MaskSet, StochasticModel};
use crate::numerics::{tags, SeedStream, StreamingMoments};
use crate::runtime;
use crate::variance::variance_of_distribution_samples;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PipelineConfig {
    pub mc_samples: usize,
    pub lambda: f64,
    pub tau: f64,
    /// Feed U/d instead of raw U into the attention penalty.
    pub normalize_uncertainty: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mc_samples: 10,
            lambda: 1.0,
            tau: 0.8,
            normalize_uncertainty: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelinePrediction {
    /// MC-mean class probabilities (deterministic pass when M = 1).
    pub probs: Vec<f64>,
    /// Mean per-sample logits (deterministic logits when M = 1); diagnostic.
    pub logits: Vec<f64>,
    pub token_uncertainty: Vec<f64>,
    pub normalized_uncertainty: Vec<f64>,
    /// Trace of the MC covariance of the per-sample probability vectors.
    pub epistemic: f64,
    pub decision: ShapedDecision,
}

/// Single deterministic pass with no reweighting, gated at `tau`.
pub fn baseline_predict(
    model: &StochasticModel,
    tokens: &[usize],
    tau: f64,
) -> Result<PipelinePrediction> {
    let out = model.forward_deterministic(tokens)?;
    let n = tokens.len();
    Ok(PipelinePrediction {
        decision: decision::decide(&out.probs, tau)?,
        probs: out.probs,
        logits: out.logits,
        token_uncertainty: vec![0.0; n],
        normalized_uncertainty: vec![0.0; n],
        epistemic: 0.0,
    })
}

/// The three-stage uncertainty pipeline for one input sequence.
pub fn uq_predict(
    model: &StochasticModel,
    tokens: &[usize],
    config: &PipelineConfig,
    seeds: SeedStream,
) -> Result<PipelinePrediction> {
    if config.mc_samples == 0 {
        return Err(domain("pipeline needs at least one MC sample"));
    }
    if config.mc_samples == 1 {
        // One sample has zero posterior spread (U = 0); the degenerate
        // pipeline is the deterministic pass.
        return baseline_predict(model, tokens, config.tau);
    }
    let m = config.mc_samples;
    let n = tokens.len();

    // Stage 1: M stochastic embedding passes -> posterior and token U.
    let masks: Vec<MaskSet> = (0..m)
        .map(|i| MaskSet::for_sample(model.config(), n, seeds, i as u64))
        .collect();
    let embedded = masks
        .iter()
        .map(|mask| model.embed_stage(tokens, mask))
        .collect::<Result<Vec<_>>>()?;
    let posterior = calibrate_embeddings(&embedded)?;
    let normalized = normalized_uncertainty(&posterior);
    let penalty: &[f64] = if config.normalize_uncertainty {
        &normalized
    } else {
        &posterior.token_uncertainty
    };

    // Stages 2+3: replay each mask set through the reweighted forward pass.
    let outputs: Vec<Result<(Vec<f64>, Vec<f64>)>> = runtime::map_indexed(m, |i| {
        let out = model.forward(tokens, &masks[i], config.lambda, Some(penalty))?;
        Ok((out.probs, out.logits))
    });
    let mut probs_acc = StreamingMoments::new(model.config().num_classes);
    let mut logits_acc = StreamingMoments::new(model.config().num_classes);
    let mut prob_samples = Vec::with_capacity(m);
    for out in outputs {
        let (p, z) = out?;
        probs_acc.push(&p)?;
        logits_acc.push(&z)?;
        prob_samples.push(p);
    }
    let probs = probs_acc.mean().to_vec();
    let epistemic = variance_of_distribution_samples(&prob_samples)?;
    Ok(PipelinePrediction {
        decision: decision::decide(&probs, config.tau)?,
        probs,
        logits: logits_acc.mean().to_vec(),
        token_uncertainty: posterior.token_uncertainty,
        normalized_uncertainty: normalized,
        epistemic,
    })
}

fn meta_for(pred: &PipelinePrediction) -> Map<String, Value> {
    let mut meta = Map::new();
    meta.insert(
        "logits".into(),
        Value::Array(pred.logits.iter().map(|&z| Value::from(z)).collect()),
    );
    meta.insert("confidence_c".into(), Value::from(pred.decision.confidence));
    meta.insert(
        "decision".into(),
        match pred.decision.decision {
            decision::Decision::Class(k) => Value::from(k as u64),
            decision::Decision::Uncertain => Value::from("uncertain"),
        },
    );
    meta.insert("epistemic".into(), Value::from(pred.epistemic));
    meta
}

fn to_log_record(pred: &PipelinePrediction, label: usize, severity: f64) -> Result<LogRecord> {
    Ok(LogRecord {
        record: PredictionRecord::with_severity(pred.probs.clone(), label, severity)?,
        meta: Some(meta_for(pred)),
    })
}

/// Scores every example with the deterministic baseline. `severity(label)`
/// supplies the per-record weight.
pub fn evaluate_baseline(
    model: &StochasticModel,
    examples: &[Example],
    tau: f64,
    severity: &dyn Fn(usize) -> f64,
) -> Result<Vec<LogRecord>> {
    examples
        .iter()
        .map(|e| {
            let pred = baseline_predict(model, &e.tokens, tau)?;
            to_log_record(&pred, e.label, severity(e.label))
        })
        .collect()
}

/// Scores every example with the uncertainty pipeline; records are
/// independent and evaluated in parallel with per-record derived seeds.
pub fn evaluate_uq(
    model: &StochasticModel,
    examples: &[Example],
    config: &PipelineConfig,
    seeds: SeedStream,
    severity: &dyn Fn(usize) -> f64,
) -> Result<Vec<LogRecord>> {
    let severities: Vec<f64> = examples.iter().map(|e| severity(e.label)).collect();
    let results: Vec<Result<LogRecord>> = runtime::map_indexed(examples.len(), |i| {
        let record_seeds = seeds.child(tags::RECORD).child(i as u64);
        let pred = uq_predict(model, &examples[i].tokens, config, record_seeds)?;
        to_log_record(&pred, examples[i].label, severities[i])
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, StochasticModel};

    fn model() -> StochasticModel {
        StochasticModel::init(ModelConfig::new(12, 6, 2, 3).with_dropout(0.3), 3).unwrap()
    }

    #[test]
    fn m1_pipeline_equals_baseline() {
        let model = model();
        let tokens = [1, 5, 9];
        let cfg = PipelineConfig {
            mc_samples: 1,
            lambda: 0.0,
            tau: 0.0,
            normalize_uncertainty: true,
        };
        let mb = uq_predict(&model, &tokens, &cfg, SeedStream::new(1)).unwrap();
        let base = baseline_predict(&model, &tokens, 0.0).unwrap();
        assert_eq!(mb.probs, base.probs);
        assert_eq!(mb.logits, base.logits);
        assert!(mb.token_uncertainty.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn pipeline_is_deterministic_given_seed() {
        let model = model();
        let tokens = [0, 4, 8, 2];
        let cfg = PipelineConfig::default();
        let a = uq_predict(&model, &tokens, &cfg, SeedStream::new(9)).unwrap();
        let b = uq_predict(&model, &tokens, &cfg, SeedStream::new(9)).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.token_uncertainty, b.token_uncertainty);
        assert_eq!(a.epistemic, b.epistemic);
    }

    #[test]
    fn dropout_free_model_has_zero_uncertainty() {
        let det = StochasticModel::init(ModelConfig::new(12, 6, 2, 3), 3).unwrap();
        let cfg = PipelineConfig::default();
        let pred = uq_predict(&det, &[1, 2, 3], &cfg, SeedStream::new(4)).unwrap();
        assert!(pred.token_uncertainty.iter().all(|&u| u == 0.0));
        assert_eq!(pred.epistemic, 0.0);
        let base = baseline_predict(&det, &[1, 2, 3], cfg.tau).unwrap();
        for (a, b) in pred.probs.iter().zip(base.probs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluation_is_parallel_invariant() {
        let model = model();
        let examples: Vec<Example> = (0..20)
            .map(|i| Example {
                tokens: vec![i % 12, (i * 5) % 12, (i * 7) % 12],
                label: i % 3,
            })
            .collect();
        let cfg = PipelineConfig::default();
        crate::runtime::set_thread_cap(1);
        let seq = evaluate_uq(&model, &examples, &cfg, SeedStream::new(2), &|_| 1.0).unwrap();
        crate::runtime::set_thread_cap(4);
        let par = evaluate_uq(&model, &examples, &cfg, SeedStream::new(2), &|_| 1.0).unwrap();
        crate::runtime::set_thread_cap(0);
        for (a, b) in seq.iter().zip(par.iter()) {
            assert_eq!(a.record, b.record);
        }
    }
}
