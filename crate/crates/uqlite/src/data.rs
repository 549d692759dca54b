//! Synthetic clinical-like task generation and the JSONL prediction-log
//! format.
//!
//! Classes emit tokens from categorical profiles, so Bayes-optimal behavior
//! has closed form. Aleatoric structure comes from ambiguity pairs (profiles
//! blended toward their midpoint), epistemic structure from rare classes that
//! are down-weighted in the training split but appear at full rate in test.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{domain, Result, UqError};
use crate::metrics::PredictionRecord;
use crate::numerics::{tags, SeedStream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub num_classes: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    /// K x vocab categorical token distributions.
    pub class_token_profiles: Vec<Vec<f64>>,
    /// (class a, class b, overlap in [0,1]); 1.0 makes the pair identical.
    pub ambiguity_pairs: Vec<(usize, usize, f64)>,
    /// Classes sampled at `rare_class_weight` of the common rate in train/val.
    pub rare_classes: Vec<usize>,
    pub rare_class_weight: f64,
    /// Per-class severity attached to prediction records.
    pub severity_map: Vec<f64>,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    /// Well-separated default: class c concentrates 90% of its mass on its
    /// own vocab block.
    pub fn balanced(
        num_classes: usize,
        vocab_size: usize,
        seq_len: usize,
        seed: u64,
    ) -> SyntheticTaskSpec {
        let mut profiles = Vec::with_capacity(num_classes);
        let block = (vocab_size / num_classes).max(1);
        for c in 0..num_classes {
            let lo = (c * block).min(vocab_size - 1);
            let hi = ((c + 1) * block).min(vocab_size).max(lo + 1);
            let inside = hi - lo;
            let outside = vocab_size - inside;
            let mut p = vec![0.0; vocab_size];
            for (t, v) in p.iter_mut().enumerate() {
                *v = if (lo..hi).contains(&t) {
                    0.9 / inside as f64
                } else if outside > 0 {
                    0.1 / outside as f64
                } else {
                    0.0
                };
            }
            if outside == 0 {
                for v in p.iter_mut() {
                    *v = 1.0 / vocab_size as f64;
                }
            }
            profiles.push(p);
        }
        SyntheticTaskSpec {
            num_classes,
            vocab_size,
            seq_len,
            class_token_profiles: profiles,
            ambiguity_pairs: Vec::new(),
            rare_classes: Vec::new(),
            rare_class_weight: 0.15,
            severity_map: vec![1.0; num_classes],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.vocab_size == 0 || self.seq_len == 0 {
            return Err(domain("task spec needs K >= 2, vocab >= 1, seq_len >= 1"));
        }
        if self.class_token_profiles.len() != self.num_classes {
            return Err(domain("one token profile per class required"));
        }
        for (c, p) in self.class_token_profiles.iter().enumerate() {
            if p.len() != self.vocab_size {
                return Err(domain(format!("profile {c} has wrong vocab size")));
            }
            if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(domain(format!("profile {c} has invalid probabilities")));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(domain(format!("profile {c} sums to {sum}, not 1")));
            }
        }
        for &(a, b, ov) in &self.ambiguity_pairs {
            if a >= self.num_classes || b >= self.num_classes || a == b {
                return Err(domain("ambiguity pair indices invalid"));
            }
            if !(0.0..=1.0).contains(&ov) {
                return Err(domain("ambiguity overlap must lie in [0,1]"));
            }
        }
        if self.rare_classes.iter().any(|&c| c >= self.num_classes) {
            return Err(domain("rare class index out of range"));
        }
        if !(self.rare_class_weight > 0.0 && self.rare_class_weight < 1.0)
            && !self.rare_classes.is_empty()
        {
            return Err(domain("rare_class_weight must lie in (0,1)"));
        }
        if self.severity_map.len() != self.num_classes
            || self.severity_map.iter().any(|&s| !s.is_finite() || s < 0.0)
        {
            return Err(domain("severity_map needs one nonnegative entry per class"));
        }
        Ok(())
    }

    /// Profiles with ambiguity overlaps applied: each pair is pulled toward
    /// its midpoint by `overlap` (1.0 makes the two profiles identical).
    pub fn effective_profiles(&self) -> Vec<Vec<f64>> {
        let mut profiles = self.class_token_profiles.clone();
        for &(a, b, ov) in &self.ambiguity_pairs {
            if ov == 0.0 {
                continue;
            }
            let mid: Vec<f64> = profiles[a]
                .iter()
                .zip(profiles[b].iter())
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            for (v, m) in profiles[a].iter_mut().zip(mid.iter()) {
                *v = (1.0 - ov) * *v + ov * m;
            }
            for (v, m) in profiles[b].iter_mut().zip(mid.iter()) {
                *v = (1.0 - ov) * *v + ov * m;
            }
        }
        profiles
    }

    pub fn class_severity(&self, label: usize) -> f64 {
        self.severity_map.get(label).copied().unwrap_or(1.0)
    }
}

/// Interpolates every token profile toward an independent random profile.
/// Magnitude 0 is the identity; magnitude 1 replaces the profiles entirely.
pub fn shift(spec: &SyntheticTaskSpec, magnitude: f64) -> Result<SyntheticTaskSpec> {
    if !(0.0..=1.0).contains(&magnitude) {
        return Err(domain("shift magnitude must lie in [0,1]"));
    }
    let mut out = spec.clone();
    if magnitude == 0.0 {
        return Ok(out);
    }
    let stream = SeedStream::new(spec.seed).child(tags::SHIFT);
    for (c, profile) in out.class_token_profiles.iter_mut().enumerate() {
        let mut rng = stream.child(c as u64).rng();
        let target = random_profile(spec.vocab_size, &mut rng);
        for (v, t) in profile.iter_mut().zip(target.iter()) {
            *v = (1.0 - magnitude) * *v + magnitude * t;
        }
        let sum: f64 = profile.iter().sum();
        for v in profile.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

fn random_profile(vocab: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Dirichlet(1) via normalized exponentials.
    let raw: Vec<f64> = (0..vocab)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct SplitSet {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Samples the three splits. Train and val down-weight rare classes; test is
/// uniform over classes. Sequences are deduplicated across splits, and the
/// whole generation is a pure function of the spec seed.
pub fn generate(
    spec: &SyntheticTaskSpec,
    n_train: usize,
    n_val: usize,
    n_test: usize,
) -> Result<SplitSet> {
    spec.validate()?;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(domain("all split sizes must be >= 1"));
    }
    let profiles = spec.effective_profiles();
    let stream = SeedStream::new(spec.seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();

    let train_weights = class_weights(spec, true);
    let test_weights = class_weights(spec, false);

    let train = sample_split(
        spec,
        &profiles,
        &train_weights,
        n_train,
        stream.child(tags::SPLIT_TRAIN),
        &mut seen,
    )?;
    let val = sample_split(
        spec,
        &profiles,
        &train_weights,
        n_val,
        stream.child(tags::SPLIT_VAL),
        &mut seen,
    )?;
    let test = sample_split(
        spec,
        &profiles,
        &test_weights,
        n_test,
        stream.child(tags::SPLIT_TEST),
        &mut seen,
    )?;
    Ok(SplitSet { train, val, test })
}

fn class_weights(spec: &SyntheticTaskSpec, downweight_rare: bool) -> Vec<f64> {
    let raw: Vec<f64> = (0..spec.num_classes)
        .map(|c| {
            if downweight_rare && spec.rare_classes.contains(&c) {
                spec.rare_class_weight
            } else {
                1.0
            }
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

fn sample_split(
    spec: &SyntheticTaskSpec,
    profiles: &[Vec<f64>],
    weights: &[f64],
    n: usize,
    stream: SeedStream,
    seen: &mut HashSet<Vec<usize>>,
) -> Result<Vec<Example>> {
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut example = None;
        for _attempt in 0..1000 {
            let label = sample_categorical(weights, &mut rng);
            let tokens: Vec<usize> = (0..spec.seq_len)
                .map(|_| sample_categorical(&profiles[label], &mut rng))
                .collect();
            if seen.insert(tokens.clone()) {
                example = Some(Example { tokens, label });
                break;
            }
        }
        out.push(
            example
                .ok_or_else(|| domain("sequence space exhausted: cannot keep splits disjoint"))?,
        );
    }
    Ok(out)
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u <= cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Log-level metadata carried on the first line of a JSONL log.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LogMetadata {
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub split: String,
    /// Full resolved run configuration of the command that wrote the log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
    /// Omitted by default so runs stay byte-reproducible; populated from
    /// SOURCE_DATE_EPOCH when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

/// One log line: the scored record plus free-form meta (logits, decisions, ...).
#[derive(Debug, Clone)]
pub struct LogRecord {
    pub record: PredictionRecord,
    pub meta: Option<Map<String, Value>>,
}

#[derive(Debug, Clone, Default)]
pub struct PredictionLog {
    pub metadata: LogMetadata,
    pub records: Vec<LogRecord>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    probs: Vec<f64>,
    label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    severity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Map<String, Value>>,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    log_meta: LogMetadata,
}

impl PredictionLog {
    pub fn new(metadata: LogMetadata, records: Vec<LogRecord>) -> PredictionLog {
        PredictionLog { metadata, records }
    }

    /// JSONL serialization: a `log_meta` header line, then one record per line.
    /// Severity 1.0 (the default) is omitted on write and restored on read.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&MetaLine {
            log_meta: self.metadata.clone(),
        })?);
        out.push('\n');
        for r in &self.records {
            let line = RecordLine {
                probs: r.record.probs().to_vec(),
                label: r.record.label(),
                severity: if r.record.severity() == 1.0 {
                    None
                } else {
                    Some(r.record.severity())
                },
                meta: r.meta.clone(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses JSONL, rejecting malformed lines with their line number. A
    /// missing header line yields default metadata.
    pub fn from_jsonl(text: &str) -> Result<PredictionLog> {
        let mut metadata = LogMetadata::default();
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if idx == 0 {
                if let Ok(meta) = serde_json::from_str::<MetaLine>(trimmed) {
                    metadata = meta.log_meta;
                    continue;
                }
            }
            let parsed: RecordLine =
                serde_json::from_str(trimmed).map_err(|e| UqError::Schema {
                    line: line_no,
                    msg: e.to_string(),
                })?;
            let record = PredictionRecord::with_severity(
                parsed.probs,
                parsed.label,
                parsed.severity.unwrap_or(1.0),
            )
            .map_err(|e| UqError::Schema {
                line: line_no,
                msg: e.to_string(),
            })?;
            records.push(LogRecord {
                record,
                meta: parsed.meta,
            });
        }
        Ok(PredictionLog { metadata, records })
    }

    pub fn plain_records(&self) -> Vec<PredictionRecord> {
        self.records.iter().map(|r| r.record.clone()).collect()
    }
}

pub fn write_log(path: &Path, log: &PredictionLog) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(log.to_jsonl()?.as_bytes())?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<PredictionLog> {
    let text = std::fs::read_to_string(path)?;
    PredictionLog::from_jsonl(&text)
}

/// Dataset export: one `{"tokens":[...],"label":n}` object per line.
pub fn dataset_to_jsonl(examples: &[Example]) -> Result<String> {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn dataset_from_jsonl(text: &str) -> Result<Vec<Example>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line.trim()).map_err(|e| UqError::Schema {
                line: idx + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
