//! CLI command implementations. Every command is deterministic given its
//! seed (bench latency and ablation runtime columns measure wall clock), and
//! every artifact embeds the resolved run configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::calibrate::{self, Calibrator};
use crate::data::{self, Example, LogMetadata, LogRecord, PredictionLog, SyntheticTaskSpec};
use crate::error::{Result, UqError};
use crate::metrics::{self, MetricsSummary, PredictionRecord};
use crate::model::{self, ModelConfig, StochasticModel};
use crate::numerics::{fingerprint, SeedStream};
use crate::pipeline::{self, PipelineConfig};
use crate::runtime;
use crate::variance::{self, McConfig};

fn usage(msg: impl Into<String>) -> UqError {
    UqError::Usage(msg.into())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn config_json<T: Serialize>(params: &T) -> Result<String> {
    Ok(serde_json::to_string(params)?)
}

/// CSV artifacts carry the resolved config in a leading comment line.
fn csv_with_config(config: &str, body: &str) -> String {
    format!("# config {config}\n{body}")
}

// ---------------------------------------------------------------------------
// demo
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DemoParams {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub dropout_p: f64,
    pub mc_samples: usize,
    pub lambda: f64,
    pub tau: f64,
    pub bins: usize,
    pub beta: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Test-distribution shift magnitude (train/val stay on the source task).
    pub shift_magnitude: f64,
    /// Overlap applied to the last class pair (aleatoric ambiguity control).
    pub ambiguity: f64,
    /// Classes listed here are down-weighted in train/val (epistemic control).
    pub rare_classes: Vec<usize>,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            seed: 0,
            out_dir: PathBuf::from("out"),
            vocab_size: 40,
            seq_len: 16,
            num_classes: 4,
            embed_dim: 32,
            num_layers: 2,
            dropout_p: 0.3,
            mc_samples: 10,
            lambda: 1.0,
            tau: 0.8,
            bins: metrics::DEFAULT_BINS,
            beta: metrics::DEFAULT_BETA,
            n_train: 400,
            n_val: 200,
            n_test: 500,
            epochs: 300,
            lr: 1.0,
            shift_magnitude: 0.0,
            ambiguity: 0.0,
            rare_classes: Vec::new(),
        }
    }
}

impl DemoParams {
    fn task_spec(&self) -> Result<SyntheticTaskSpec> {
        let mut spec =
            SyntheticTaskSpec::balanced(self.num_classes, self.vocab_size, self.seq_len, self.seed);
        if self.ambiguity > 0.0 {
            if self.num_classes < 2 {
                return Err(usage("ambiguity needs at least two classes"));
            }
            spec.ambiguity_pairs =
                vec![(self.num_classes - 2, self.num_classes - 1, self.ambiguity)];
        }
        spec.rare_classes = self.rare_classes.clone();
        spec.validate()?;
        Ok(spec)
    }

    fn model_config(&self) -> ModelConfig {
        ModelConfig::new(
            self.vocab_size,
            self.embed_dim,
            self.num_layers,
            self.num_classes,
        )
        .with_dropout(self.dropout_p)
    }

    fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            mc_samples: self.mc_samples,
            lambda: self.lambda,
            tau: self.tau,
            normalize_uncertainty: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub config: Value,
    pub train_accuracy: f64,
    pub baseline: MetricsSummary,
    pub uq_pipeline: MetricsSummary,
}

/// Generates data, trains the head, and scores the deterministic baseline and
/// the uncertainty pipeline side by side.
pub struct DemoOutput {
    pub summary: DemoSummary,
    pub baseline: Vec<LogRecord>,
    pub uq_pipeline: Vec<LogRecord>,
    pub model: StochasticModel,
    pub test: Vec<Example>,
}

/// The demo pipeline without filesystem writes; `cmd_demo` persists its
/// artifacts.
pub fn run_demo(params: &DemoParams) -> Result<DemoOutput> {
    if params.mc_samples == 0 {
        return Err(usage("mc_samples must be >= 1"));
    }
    let spec = params.task_spec()?;
    let splits = data::generate(&spec, params.n_train, params.n_val, params.n_test)?;
    let test = if params.shift_magnitude > 0.0 {
        let shifted = data::shift(&spec, params.shift_magnitude)?;
        data::generate(&shifted, 1, 1, params.n_test)?.test
    } else {
        splits.test
    };

    let model = StochasticModel::init(params.model_config(), params.seed)?;
    let train_pairs: Vec<(Vec<usize>, usize)> = splits
        .train
        .iter()
        .map(|e| (e.tokens.clone(), e.label))
        .collect();
    let (trained, _report) =
        model::train_head(&model, &train_pairs, params.epochs, params.lr, params.seed)?;
    let train_correct = splits
        .train
        .iter()
        .filter(|e| {
            trained
                .forward_deterministic(&e.tokens)
                .map(|o| crate::decision::argmax(&o.probs) == e.label)
                .unwrap_or(false)
        })
        .count();
    let train_accuracy = train_correct as f64 / splits.train.len() as f64;

    let severity = |label: usize| spec.class_severity(label);
    let baseline = pipeline::evaluate_baseline(&trained, &test, params.tau, &severity)?;
    let uq_records = pipeline::evaluate_uq(
        &trained,
        &test,
        &params.pipeline_config(),
        SeedStream::new(params.seed),
        &severity,
    )?;

    let base_records: Vec<PredictionRecord> = baseline.iter().map(|r| r.record.clone()).collect();
    let uq_plain: Vec<PredictionRecord> = uq_records.iter().map(|r| r.record.clone()).collect();
    let summary = DemoSummary {
        config: serde_json::to_value(params)?,
        train_accuracy,
        baseline: metrics::summarize(&base_records, params.bins, params.beta, params.tau)?,
        uq_pipeline: metrics::summarize(&uq_plain, params.bins, params.beta, params.tau)?,
    };
    Ok(DemoOutput {
        summary,
        baseline,
        uq_pipeline: uq_records,
        model: trained,
        test,
    })
}

pub fn cmd_demo(params: &DemoParams) -> Result<()> {
    let out = run_demo(params)?;
    std::fs::create_dir_all(&params.out_dir)?;
    let config = config_json(params)?;
    let hash = fingerprint(config.as_bytes());
    let config_value: Value = serde_json::from_str(&config)?;
    let meta = |arm: &str| LogMetadata {
        model_id: format!("uqlite-demo-{}-{arm}", params.seed),
        config_hash: hash.clone(),
        split: "test".into(),
        config: Some(config_value.clone()),
        created: std::env::var("SOURCE_DATE_EPOCH").ok(),
    };
    data::write_log(
        &params.out_dir.join("baseline_log.jsonl"),
        &PredictionLog::new(meta("baseline"), out.baseline),
    )?;
    data::write_log(
        &params.out_dir.join("uq_log.jsonl"),
        &PredictionLog::new(meta("uq-pipeline"), out.uq_pipeline.clone()),
    )?;
    write_file(
        &params.out_dir.join("metrics.json"),
        &serde_json::to_string_pretty(&out.summary)?,
    )?;

    // Inspection artifacts: abstention sweep over the pipeline records, and
    // token/attention uncertainty maps for the first test sequence.
    let uq_plain: Vec<PredictionRecord> =
        out.uq_pipeline.iter().map(|r| r.record.clone()).collect();
    let taus: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let curve = crate::decision::risk_coverage(&uq_plain, &taus)?;
    write_file(
        &params.out_dir.join("risk_coverage.csv"),
        &csv_with_config(&config, &crate::decision::risk_coverage_csv(&curve)),
    )?;
    if let Some(example) = out.test.first() {
        let seeds = SeedStream::new(params.seed).child(0xA77);
        let masks: Vec<crate::model::MaskSet> = (0..params.mc_samples.max(2))
            .map(|i| {
                crate::model::MaskSet::for_sample(
                    out.model.config(),
                    example.tokens.len(),
                    seeds,
                    i as u64,
                )
            })
            .collect();
        let embedded = masks
            .iter()
            .map(|m| out.model.embed_stage(&example.tokens, m))
            .collect::<Result<Vec<_>>>()?;
        let posterior = crate::embedding::calibrate_embeddings(&embedded)?;
        write_file(
            &params.out_dir.join("uncertainty_map.csv"),
            &csv_with_config(&config, &crate::embedding::posterior_csv(&posterior)),
        )?;
        let penalty = crate::embedding::normalized_uncertainty(&posterior);
        let pass = out
            .model
            .forward(&example.tokens, &masks[0], params.lambda, Some(&penalty))?;
        write_file(
            &params.out_dir.join("attention_map.csv"),
            &csv_with_config(&config, &crate::attention::attention_csv(&pass.attention)),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MetricsParams {
    pub log_path: PathBuf,
    pub out_dir: PathBuf,
    pub bins: usize,
    pub beta: f64,
    pub tau: f64,
}

pub fn cmd_metrics(params: &MetricsParams) -> Result<()> {
    let log = data::read_log(&params.log_path)?;
    let records = log.plain_records();
    if records.is_empty() {
        return Err(UqError::Schema {
            line: 1,
            msg: "log contains no records".into(),
        });
    }
    let summary = metrics::summarize(&records, params.bins, params.beta, params.tau)?;
    let table = metrics::reliability_diagram(&records, params.bins, params.beta)?;
    let config = config_json(params)?;

    #[derive(Serialize)]
    struct MetricsArtifact {
        config: Value,
        metrics: MetricsSummary,
    }
    write_file(
        &params.out_dir.join("metrics.json"),
        &serde_json::to_string_pretty(&MetricsArtifact {
            config: serde_json::from_str(&config)?,
            metrics: summary,
        })?,
    )?;
    write_file(
        &params.out_dir.join("reliability.csv"),
        &csv_with_config(&config, &metrics::reliability_csv(&table)),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMethod {
    Msp,
    Temperature,
    Isotonic,
}

impl std::str::FromStr for CalibrationMethod {
    type Err = UqError;
    fn from_str(s: &str) -> Result<CalibrationMethod> {
        match s {
            "msp" => Ok(CalibrationMethod::Msp),
            "temperature" => Ok(CalibrationMethod::Temperature),
            "isotonic" => Ok(CalibrationMethod::Isotonic),
            other => Err(usage(format!(
                "unknown method {other:?}; expected msp|temperature|isotonic"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrateParams {
    pub method: CalibrationMethod,
    pub fit_log: PathBuf,
    pub apply_log: PathBuf,
    pub out_dir: PathBuf,
    pub bins: usize,
    pub beta: f64,
    pub tau: f64,
}

fn record_logits(record: &LogRecord, line: usize) -> Result<Vec<f64>> {
    let meta = record.meta.as_ref().ok_or(UqError::Schema {
        line,
        msg: "temperature fitting requires logits in record meta".into(),
    })?;
    let raw = meta.get("logits").ok_or(UqError::Schema {
        line,
        msg: "temperature fitting requires a \"logits\" meta field".into(),
    })?;
    let arr = raw.as_array().ok_or(UqError::Schema {
        line,
        msg: "\"logits\" must be an array".into(),
    })?;
    arr.iter()
        .map(|v| {
            v.as_f64().ok_or(UqError::Schema {
                line,
                msg: "\"logits\" must contain numbers".into(),
            })
        })
        .collect()
}

/// Logits for applying temperature: stored logits when present, otherwise
/// log-probabilities (softmax(log p / T) == softmax(z / T) exactly).
fn logits_or_log_probs(record: &LogRecord) -> Vec<f64> {
    if let Some(meta) = &record.meta {
        if let Some(arr) = meta.get("logits").and_then(|v| v.as_array()) {
            let parsed: Option<Vec<f64>> = arr.iter().map(|v| v.as_f64()).collect();
            if let Some(z) = parsed {
                if z.len() == record.record.num_classes() {
                    return z;
                }
            }
        }
    }
    record
        .record
        .probs()
        .iter()
        .map(|&p| p.max(metrics::NLL_CLAMP).ln())
        .collect()
}

pub fn cmd_calibrate(params: &CalibrateParams) -> Result<()> {
    let fit = data::read_log(&params.fit_log)?;
    let apply = data::read_log(&params.apply_log)?;
    if fit.records.is_empty() || apply.records.is_empty() {
        return Err(UqError::Schema {
            line: 1,
            msg: "calibration logs must be nonempty".into(),
        });
    }
    let before: Vec<PredictionRecord> = apply.plain_records();

    let (calibrator, calibrated): (Option<Calibrator>, Vec<LogRecord>) = match params.method {
        CalibrationMethod::Msp => {
            let records = apply
                .records
                .iter()
                .map(|r| {
                    let mut meta = r.meta.clone().unwrap_or_default();
                    meta.insert(
                        "msp".into(),
                        Value::from(calibrate::msp_score(r.record.probs())?),
                    );
                    Ok(LogRecord {
                        record: r.record.clone(),
                        meta: Some(meta),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (None, records)
        }
        CalibrationMethod::Temperature => {
            let val: Vec<(Vec<f64>, usize)> = fit
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| Ok((record_logits(r, i + 2)?, r.record.label())))
                .collect::<Result<Vec<_>>>()?;
            let fitted = calibrate::fit_temperature(&val)?;
            let records = apply
                .records
                .iter()
                .map(|r| {
                    let logits = logits_or_log_probs(r);
                    let probs = calibrate::apply_temperature(&fitted, &logits)?;
                    let mut meta = r.meta.clone().unwrap_or_default();
                    meta.insert("temperature".into(), Value::from(fitted.temperature));
                    Ok(LogRecord {
                        record: PredictionRecord::with_severity(
                            probs,
                            r.record.label(),
                            r.record.severity(),
                        )?,
                        meta: Some(meta),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (
                Some(Calibrator::Temperature {
                    t: fitted.temperature,
                }),
                records,
            )
        }
        CalibrationMethod::Isotonic => {
            let pairs: Vec<(f64, f64)> = fit
                .records
                .iter()
                .map(|r| {
                    (
                        r.record.confidence(),
                        if r.record.correct() { 1.0 } else { 0.0 },
                    )
                })
                .collect();
            let fitted = calibrate::fit_isotonic(&pairs)?;
            let records = apply
                .records
                .iter()
                .map(|r| {
                    Ok(LogRecord {
                        record: calibrate::recalibrate_record(&fitted, &r.record)?,
                        meta: r.meta.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (
                Some(Calibrator::Isotonic {
                    x: fitted.breakpoints,
                    y: fitted.values,
                }),
                records,
            )
        }
    };

    let after: Vec<PredictionRecord> = calibrated.iter().map(|r| r.record.clone()).collect();
    let config = config_json(params)?;
    let hash = fingerprint(config.as_bytes());

    data::write_log(
        &params.out_dir.join("calibrated_log.jsonl"),
        &PredictionLog::new(
            LogMetadata {
                model_id: apply.metadata.model_id.clone(),
                config_hash: hash,
                split: apply.metadata.split.clone(),
                config: Some(serde_json::from_str(&config)?),
                created: std::env::var("SOURCE_DATE_EPOCH").ok(),
            },
            calibrated,
        ),
    )?;
    if let Some(c) = &calibrator {
        write_file(&params.out_dir.join("calibrator.json"), &c.to_json()?)?;
    }

    #[derive(Serialize)]
    struct DiffArtifact {
        config: Value,
        before: MetricsSummary,
        after: MetricsSummary,
    }
    write_file(
        &params.out_dir.join("metrics_diff.json"),
        &serde_json::to_string_pretty(&DiffArtifact {
            config: serde_json::from_str(&config)?,
            before: metrics::summarize(&before, params.bins, params.beta, params.tau)?,
            after: metrics::summarize(&after, params.bins, params.beta, params.tau)?,
        })?,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AblateParams {
    pub demo: DemoParams,
    pub dropout_grid: Vec<f64>,
    pub mc_grid: Vec<usize>,
    pub out_path: PathBuf,
}

/// One row per (dropout, M) over a fixed seed: metrics of the uncertainty
/// pipeline plus measured runtime (the runtime column is wall clock).
pub fn cmd_ablate(params: &AblateParams) -> Result<()> {
    if params.dropout_grid.is_empty() || params.mc_grid.is_empty() {
        return Err(usage("both ablation grids must be nonempty"));
    }
    let base = run_demo(&DemoParams {
        dropout_p: 0.0,
        mc_samples: 1,
        ..params.demo.clone()
    })?;
    let severity = |_: usize| 1.0;

    let mut body = String::from("p,M,ece,nll,cus,zti,runtime_ms\n");
    for &p in &params.dropout_grid {
        let model = base.model.with_dropout(p)?;
        for &m in &params.mc_grid {
            if m == 0 {
                return Err(usage("MC grid values must be >= 1"));
            }
            let cfg = PipelineConfig {
                mc_samples: m,
                lambda: params.demo.lambda,
                tau: params.demo.tau,
                normalize_uncertainty: true,
            };
            let start = Instant::now();
            let records = pipeline::evaluate_uq(
                &model,
                &base.test,
                &cfg,
                SeedStream::new(params.demo.seed),
                &severity,
            )?;
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            let plain: Vec<PredictionRecord> = records.iter().map(|r| r.record.clone()).collect();
            let summary =
                metrics::summarize(&plain, params.demo.bins, params.demo.beta, params.demo.tau)?;
            body.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p, m, summary.ece, summary.nll, summary.cus, summary.zti, runtime_ms
            ));
        }
    }
    write_file(
        &params.out_path,
        &csv_with_config(&config_json(params)?, &body),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeParams {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub dropout_p: f64,
    pub mc_samples: usize,
    pub lambda: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    /// Explicit input sequence; derived from the task generator when empty.
    pub tokens: Vec<usize>,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        DecomposeParams {
            seed: 0,
            out_dir: PathBuf::from("out"),
            vocab_size: 20,
            seq_len: 8,
            num_classes: 3,
            embed_dim: 16,
            num_layers: 2,
            dropout_p: 0.3,
            mc_samples: 10,
            lambda: 1.0,
            n_outer: 60,
            n_inner: 60,
            tokens: Vec::new(),
        }
    }
}

pub fn cmd_decompose(params: &DecomposeParams) -> Result<()> {
    let config = ModelConfig::new(
        params.vocab_size,
        params.embed_dim,
        params.num_layers,
        params.num_classes,
    )
    .with_dropout(params.dropout_p);
    let model = StochasticModel::init(config, params.seed)?;
    let tokens = if params.tokens.is_empty() {
        let spec = SyntheticTaskSpec::balanced(
            params.num_classes,
            params.vocab_size,
            params.seq_len,
            params.seed,
        );
        data::generate(&spec, 1, 1, 1)?.test[0].tokens.clone()
    } else {
        params.tokens.clone()
    };

    // Reweighting needs the pipeline's token uncertainty.
    let seeds = SeedStream::new(params.seed);
    let token_u = if params.lambda > 0.0 && params.mc_samples > 1 {
        let pred = pipeline::uq_predict(
            &model,
            &tokens,
            &PipelineConfig {
                mc_samples: params.mc_samples,
                lambda: params.lambda,
                tau: 0.0,
                normalize_uncertainty: true,
            },
            seeds,
        )?;
        Some(pred.normalized_uncertainty)
    } else {
        None
    };

    let mc = McConfig::new(params.n_outer, params.n_inner, seeds.child(9000));
    let report =
        variance::layerwise_profile(&model, &tokens, &mc, params.lambda, token_u.as_deref())?;

    let config_text = config_json(params)?;
    #[derive(Serialize)]
    struct ReportArtifact<'a> {
        config: Value,
        report: &'a variance::DecompositionReport,
    }
    write_file(
        &params.out_dir.join("decomposition.json"),
        &serde_json::to_string_pretty(&ReportArtifact {
            config: serde_json::from_str(&config_text)?,
            report: &report,
        })?,
    )?;
    write_file(
        &params.out_dir.join("profile.csv"),
        &csv_with_config(&config_text, &variance::profile_csv(&report)),
    )?;

    let telescoped: f64 = report.per_layer_contribution.iter().sum();
    let v0 = report.per_layer_variance[0];
    let vl = *report.per_layer_variance.last().unwrap_or(&0.0);
    println!(
        "total {} = aleatoric {} + epistemic {} (gap {} <= {})",
        report.total_var,
        report.aleatoric,
        report.epistemic,
        report.law_gap,
        report.law_gap_tolerance
    );
    println!("attention term {} (diagnostic)", report.attention_term);
    println!(
        "telescoping sum(c_l) = {} vs V_0 - V_L = {} (residual {:e})",
        telescoped,
        v0 - vl,
        (telescoped - (v0 - vl)).abs()
    );
    if !report.law_holds {
        return Err(UqError::Invariant(format!(
            "law of total variance violated: gap {} > tolerance {}",
            report.law_gap, report.law_gap_tolerance
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BenchParams {
    pub seed: u64,
    pub out_path: PathBuf,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub dropout_p: f64,
    pub lambda: f64,
    pub mc_grid: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            seed: 0,
            out_path: PathBuf::from("bench.csv"),
            vocab_size: 40,
            seq_len: 32,
            num_classes: 4,
            embed_dim: 64,
            num_layers: 2,
            dropout_p: 0.3,
            lambda: 1.0,
            mc_grid: vec![1, 5, 10, 20, 50],
            repetitions: 30,
            warmup: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub mc_samples: usize,
    pub median_latency_ms: f64,
    pub param_count: usize,
}

/// Single-core per-query latency medians over `repetitions` runs after
/// `warmup` discarded passes.
pub fn run_bench(params: &BenchParams) -> Result<Vec<BenchRow>> {
    if params.mc_grid.is_empty() {
        return Err(usage("MC grid must be nonempty"));
    }
    if params.repetitions == 0 {
        return Err(usage("repetitions must be >= 1"));
    }
    let config = ModelConfig::new(
        params.vocab_size,
        params.embed_dim,
        params.num_layers,
        params.num_classes,
    )
    .with_dropout(params.dropout_p);
    let model = StochasticModel::init(config, params.seed)?;
    let spec = SyntheticTaskSpec::balanced(
        params.num_classes,
        params.vocab_size,
        params.seq_len,
        params.seed,
    );
    let tokens = data::generate(&spec, 1, 1, 1)?.test[0].tokens.clone();
    let seeds = SeedStream::new(params.seed);

    // Per-query latency is measured on one core.
    let previous_cap = runtime::thread_cap();
    runtime::set_thread_cap(1);
    let mut rows = Vec::with_capacity(params.mc_grid.len());
    for &m in &params.mc_grid {
        if m == 0 {
            runtime::set_thread_cap(previous_cap);
            return Err(usage("MC grid values must be >= 1"));
        }
        let cfg = PipelineConfig {
            mc_samples: m,
            lambda: params.lambda,
            tau: 0.8,
            normalize_uncertainty: true,
        };
        let run = |i: u64| -> Result<f64> {
            let start = Instant::now();
            let pred = pipeline::uq_predict(&model, &tokens, &cfg, seeds.child(i))?;
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(pred.probs);
            Ok(elapsed)
        };
        for i in 0..params.warmup {
            run(i as u64)?;
        }
        let mut latencies = Vec::with_capacity(params.repetitions);
        for i in 0..params.repetitions {
            latencies.push(run((params.warmup + i) as u64)?);
        }
        latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if latencies.len() % 2 == 1 {
            latencies[latencies.len() / 2]
        } else {
            0.5 * (latencies[latencies.len() / 2 - 1] + latencies[latencies.len() / 2])
        };
        rows.push(BenchRow {
            mc_samples: m,
            median_latency_ms: median,
            param_count: model.param_count(),
        });
    }
    runtime::set_thread_cap(previous_cap);
    Ok(rows)
}

pub fn cmd_bench(params: &BenchParams) -> Result<()> {
    let rows = run_bench(params)?;
    let mut body = String::from("M,median_latency_ms,param_count\n");
    for r in &rows {
        body.push_str(&format!(
            "{},{},{}\n",
            r.mc_samples, r.median_latency_ms, r.param_count
        ));
    }
    write_file(
        &params.out_path,
        &csv_with_config(&config_json(params)?, &body),
    )?;
    Ok(())
}
