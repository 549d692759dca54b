//! The toy stochastic transformer: embedding table, L single-head attention
//! layers, linear classification head.
//!
//! Stochasticity enters at fixed sites: additive Gaussian noise and dropout
//! on the embedding output, then per-layer dropout and optional additive
//! Gaussian noise on each post-attention activation. All draws for one pass
//! live in a `MaskSet`, fully determined by a `SeedStream` and a sample
//! index, so any pass can be replayed bit-exactly and samples can be taken
//! in parallel without changing results.
//!
//! Only the head is trainable; the transformer body stays frozen at its
//! random initialization. Uncertainty features add no parameters: the count
//! depends only on the architectural part of the config.

use serde::{Deserialize, Serialize};

use crate::attention::{self, AttentionMap};
use crate::error::{domain, Result, UqError};
use crate::numerics::{log_sum_exp, softmax, tags, Matrix, SeedStream};
use crate::runtime;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const MODEL_FORMAT_VERSION: &str = "uqlite-model-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_classes: usize,
    /// Default dropout probability for every site.
    #[serde(default)]
    pub dropout_p: f64,
    /// Override for the embedding-output site.
    #[serde(default)]
    pub embedding_dropout_p: Option<f64>,
    /// Per-layer overrides for the post-attention sites (length = num_layers).
    #[serde(default)]
    pub layer_dropout_p: Option<Vec<f64>>,
    /// Std-dev of additive Gaussian noise on the embedding output.
    #[serde(default)]
    pub embedding_noise_sigma: f64,
    /// Per-layer std-dev of additive Gaussian layer noise (empty = all zero).
    #[serde(default)]
    pub layer_noise_sigma: Vec<f64>,
}

impl ModelConfig {
    pub fn new(
        vocab_size: usize,
        embed_dim: usize,
        num_layers: usize,
        num_classes: usize,
    ) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim,
            num_layers,
            num_classes,
            dropout_p: 0.0,
            embedding_dropout_p: None,
            layer_dropout_p: None,
            embedding_noise_sigma: 0.0,
            layer_noise_sigma: Vec::new(),
        }
    }

    pub fn with_dropout(mut self, p: f64) -> ModelConfig {
        self.dropout_p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 {
            return Err(domain("vocab_size and embed_dim must be >= 1"));
        }
        if self.num_layers == 0 {
            return Err(domain("num_layers must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(domain("num_classes must be >= 2"));
        }
        let valid_p = |p: f64| p.is_finite() && (0.0..1.0).contains(&p);
        if !valid_p(self.dropout_p) {
            return Err(domain("dropout_p must lie in [0,1)"));
        }
        if let Some(p) = self.embedding_dropout_p {
            if !valid_p(p) {
                return Err(domain("embedding_dropout_p must lie in [0,1)"));
            }
        }
        if let Some(ps) = &self.layer_dropout_p {
            if ps.len() != self.num_layers {
                return Err(domain("layer_dropout_p length must equal num_layers"));
            }
            if ps.iter().any(|&p| !valid_p(p)) {
                return Err(domain("layer dropout probabilities must lie in [0,1)"));
            }
        }
        if !self.embedding_noise_sigma.is_finite() || self.embedding_noise_sigma < 0.0 {
            return Err(domain("embedding_noise_sigma must be >= 0"));
        }
        if !self.layer_noise_sigma.is_empty() && self.layer_noise_sigma.len() != self.num_layers {
            return Err(domain(
                "layer_noise_sigma length must equal num_layers (or be empty)",
            ));
        }
        if self
            .layer_noise_sigma
            .iter()
            .any(|&s| !s.is_finite() || s < 0.0)
        {
            return Err(domain("layer noise sigmas must be >= 0"));
        }
        Ok(())
    }

    pub fn embedding_dropout(&self) -> f64 {
        self.embedding_dropout_p.unwrap_or(self.dropout_p)
    }

    pub fn layer_dropout(&self, layer: usize) -> f64 {
        self.layer_dropout_p
            .as_ref()
            .map(|ps| ps[layer])
            .unwrap_or(self.dropout_p)
    }

    pub fn layer_sigma(&self, layer: usize) -> f64 {
        self.layer_noise_sigma.get(layer).copied().unwrap_or(0.0)
    }

    /// True when every stochastic site is switched off.
    pub fn is_deterministic(&self) -> bool {
        self.embedding_dropout() == 0.0
            && self.embedding_noise_sigma == 0.0
            && (0..self.num_layers)
                .all(|l| self.layer_dropout(l) == 0.0 && self.layer_sigma(l) == 0.0)
    }

    /// Parameter count is a pure function of the architectural fields; the
    /// uncertainty knobs (dropout, sigmas) never change it.
    pub fn param_count(&self) -> usize {
        self.vocab_size * self.embed_dim
            + self.num_layers * 3 * self.embed_dim * self.embed_dim
            + self.num_classes * self.embed_dim
            + self.num_classes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

#[derive(Debug, Clone)]
pub struct StochasticModel {
    config: ModelConfig,
    embedding: Matrix,
    layers: Vec<LayerWeights>,
    head_w: Matrix,
    head_b: Vec<f64>,
}

/// Dropout keep-masks and Gaussian draws for one stochastic pass.
///
/// Fully determined by (seed stream, sample index) given a config and
/// sequence length; replaying the same `MaskSet` replays the pass bit-exactly.
/// Stage 0 is the embedding site, stage `l` (1-based) is attention layer `l`.
#[derive(Debug, Clone)]
pub struct MaskSet {
    embedding_noise: Option<Matrix>,
    embedding_keep: Option<Matrix>,
    layer_keep: Vec<Option<Matrix>>,
    layer_noise: Vec<Option<Matrix>>,
}

impl MaskSet {
    /// All sites deterministic (no noise, no dropout).
    pub fn none(config: &ModelConfig) -> MaskSet {
        MaskSet {
            embedding_noise: None,
            embedding_keep: None,
            layer_keep: vec![None; config.num_layers],
            layer_noise: vec![None; config.num_layers],
        }
    }

    /// Draws every active site in a fixed order.
    pub fn draw(config: &ModelConfig, seq_len: usize, rng: &mut ChaCha8Rng) -> MaskSet {
        let d = config.embed_dim;
        let embedding_noise = if config.embedding_noise_sigma > 0.0 {
            Some(noise_matrix(seq_len, d, config.embedding_noise_sigma, rng))
        } else {
            None
        };
        let embedding_keep = if config.embedding_dropout() > 0.0 {
            Some(keep_matrix(seq_len, d, config.embedding_dropout(), rng))
        } else {
            None
        };
        let mut layer_keep = Vec::with_capacity(config.num_layers);
        let mut layer_noise = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            layer_keep.push(if config.layer_dropout(l) > 0.0 {
                Some(keep_matrix(seq_len, d, config.layer_dropout(l), rng))
            } else {
                None
            });
            layer_noise.push(if config.layer_sigma(l) > 0.0 {
                Some(noise_matrix(seq_len, d, config.layer_sigma(l), rng))
            } else {
                None
            });
        }
        MaskSet {
            embedding_noise,
            embedding_keep,
            layer_keep,
            layer_noise,
        }
    }

    /// Derives the mask set for sample `index` of a stream.
    pub fn for_sample(
        config: &ModelConfig,
        seq_len: usize,
        seeds: SeedStream,
        index: u64,
    ) -> MaskSet {
        let mut rng = seeds.child(tags::SAMPLE).child(index).rng();
        MaskSet::draw(config, seq_len, &mut rng)
    }

    /// Stages `0..prefix` from `outer`, the rest from `inner`. Stage 0 is the
    /// embedding site; stage `l >= 1` is attention layer `l`.
    pub fn splice_prefix(prefix: usize, outer: &MaskSet, inner: &MaskSet) -> MaskSet {
        let num_layers = inner.layer_keep.len();
        let mut out = inner.clone();
        if prefix >= 1 {
            out.embedding_noise = outer.embedding_noise.clone();
            out.embedding_keep = outer.embedding_keep.clone();
        }
        for l in 0..num_layers {
            if prefix >= l + 2 {
                out.layer_keep[l] = outer.layer_keep[l].clone();
                out.layer_noise[l] = outer.layer_noise[l].clone();
            }
        }
        out
    }
}

fn noise_matrix(rows: usize, cols: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut().iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = sigma * z;
    }
    m
}

fn keep_matrix(rows: usize, cols: usize, drop_p: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut().iter_mut() {
        *v = if rng.random::<f64>() < drop_p {
            0.0
        } else {
            1.0
        };
    }
    m
}

/// Inverted dropout: zero dropped coordinates, rescale the survivors.
fn apply_dropout(x: &mut Matrix, keep: Option<&Matrix>, drop_p: f64) {
    if let Some(mask) = keep {
        let scale = 1.0 / (1.0 - drop_p);
        for (v, &k) in x.data_mut().iter_mut().zip(mask.data().iter()) {
            *v *= k * scale;
        }
    }
}

fn add_noise(x: &mut Matrix, noise: Option<&Matrix>) {
    if let Some(n) = noise {
        for (v, &z) in x.data_mut().iter_mut().zip(n.data().iter()) {
            *v += z;
        }
    }
}

/// Everything one stochastic pass produces.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    pub pooled: Vec<f64>,
    /// Hidden states h^(0)..h^(L); h^(0) is the deterministic embedding lookup.
    pub hidden: Vec<Matrix>,
    pub attention: Vec<AttentionMap>,
}

impl StochasticModel {
    pub fn init(config: ModelConfig, seed: u64) -> Result<StochasticModel> {
        config.validate()?;
        let seeds = SeedStream::new(seed);
        let d = config.embed_dim;
        let embedding = random_matrix(
            config.vocab_size,
            d,
            1.0,
            &mut seeds.child(tags::MODEL_EMBEDDING).rng(),
        );
        let scale = 1.0 / (d as f64).sqrt();
        let layers = (0..config.num_layers)
            .map(|l| {
                let mut rng = seeds.child(tags::MODEL_LAYER).child(l as u64).rng();
                LayerWeights {
                    wq: random_matrix(d, d, scale, &mut rng),
                    wk: random_matrix(d, d, scale, &mut rng),
                    wv: random_matrix(d, d, scale, &mut rng),
                }
            })
            .collect();
        let mut head_rng = seeds.child(tags::MODEL_HEAD).rng();
        let head_w = random_matrix(config.num_classes, d, scale, &mut head_rng);
        let head_b = vec![0.0; config.num_classes];
        Ok(StochasticModel {
            config,
            embedding,
            layers,
            head_w,
            head_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Same weights, different inference-time dropout. Dropout is not a
    /// parameter, so sweeps reuse one trained model.
    pub fn with_dropout(&self, dropout_p: f64) -> Result<StochasticModel> {
        let mut out = self.clone();
        out.config.dropout_p = dropout_p;
        out.config.validate()?;
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    pub fn head(&self) -> (&Matrix, &[f64]) {
        (&self.head_w, &self.head_b)
    }

    pub fn set_head(&mut self, weights: Matrix, bias: Vec<f64>) -> Result<()> {
        if weights.rows() != self.config.num_classes
            || weights.cols() != self.config.embed_dim
            || bias.len() != self.config.num_classes
        {
            return Err(domain("head shape does not match config"));
        }
        weights.ensure_finite("set_head")?;
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(domain("head bias must be finite"));
        }
        self.head_w = weights;
        self.head_b = bias;
        Ok(())
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(domain("token sequence must be nonempty"));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(domain(format!(
                "token id {t} out of range (vocab_size {})",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Deterministic embedding lookup, h^(0).
    pub fn embed_tokens(&self, tokens: &[usize]) -> Result<Matrix> {
        self.check_tokens(tokens)?;
        let d = self.config.embed_dim;
        let mut out = Matrix::zeros(tokens.len(), d);
        for (i, &t) in tokens.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.embedding.row(t));
        }
        Ok(out)
    }

    /// Stochastic embedding-stage output: lookup + Gaussian noise + dropout.
    /// This is the quantity the embedding posterior is calibrated on, and
    /// exactly what the first attention layer consumes in `forward`.
    pub fn embed_stage(&self, tokens: &[usize], masks: &MaskSet) -> Result<Matrix> {
        let mut x = self.embed_tokens(tokens)?;
        add_noise(&mut x, masks.embedding_noise.as_ref());
        apply_dropout(
            &mut x,
            masks.embedding_keep.as_ref(),
            self.config.embedding_dropout(),
        );
        x.ensure_finite("embed_stage")?;
        Ok(x)
    }

    /// One pass through all three stages with explicit stochastic draws.
    ///
    /// `lambda = 0` or absent `token_uncertainty` makes the attention
    /// reweighting the identity.
    pub fn forward(
        &self,
        tokens: &[usize],
        masks: &MaskSet,
        lambda: f64,
        token_uncertainty: Option<&[f64]>,
    ) -> Result<ForwardOutput> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(domain("lambda must be finite and >= 0"));
        }
        let n = tokens.len();
        let d = self.config.embed_dim;
        let h0 = self.embed_tokens(tokens)?;
        let mut x = self.embed_stage(tokens, masks)?;

        let mut hidden = Vec::with_capacity(self.config.num_layers + 1);
        hidden.push(h0);
        let mut attention_maps = Vec::with_capacity(self.config.num_layers);
        let scale = 1.0 / (d as f64).sqrt();

        for (l, layer) in self.layers.iter().enumerate() {
            let q = x.matmul(&layer.wq)?;
            let k = x.matmul(&layer.wk)?;
            let v = x.matmul(&layer.wv)?;
            let mut scores = q.matmul_transpose(&k)?;
            for s in scores.data_mut().iter_mut() {
                *s *= scale;
            }
            let base = softmax_rows(&scores)?;
            let reweighted = match token_uncertainty {
                Some(u) if lambda > 0.0 => attention::reweight_scores(&scores, u, lambda)?,
                _ => base.clone(),
            };
            let mixed = reweighted.matmul(&v)?;
            let mut next = Matrix::zeros(n, d);
            for i in 0..n {
                for c in 0..d {
                    next.set(i, c, (x.get(i, c) + mixed.get(i, c)).tanh());
                }
            }
            add_noise(&mut next, masks.layer_noise[l].as_ref());
            apply_dropout(
                &mut next,
                masks.layer_keep[l].as_ref(),
                self.config.layer_dropout(l),
            );
            next.ensure_finite("layer activation")?;

            attention_maps.push(AttentionMap {
                base,
                reweighted,
                lambda,
                token_uncertainty: token_uncertainty
                    .map(|u| u.to_vec())
                    .unwrap_or_else(|| vec![0.0; n]),
            });
            hidden.push(next.clone());
            x = next;
        }

        let pooled = x.column_mean();
        let logits = self.head_logits(&pooled);
        let probs = softmax(&logits)?;
        Ok(ForwardOutput {
            probs,
            logits,
            pooled,
            hidden,
            attention: attention_maps,
        })
    }

    /// Deterministic pass (all stochastic sites off, no reweighting).
    pub fn forward_deterministic(&self, tokens: &[usize]) -> Result<ForwardOutput> {
        self.forward(tokens, &MaskSet::none(&self.config), 0.0, None)
    }

    /// M independent stochastic passes, deterministic given the seed stream,
    /// partitioned by sample index so parallel and sequential execution yield
    /// bit-identical sample sets.
    pub fn sample_forward(
        &self,
        tokens: &[usize],
        seeds: SeedStream,
        num_samples: usize,
        lambda: f64,
        token_uncertainty: Option<&[f64]>,
    ) -> Result<Vec<ForwardOutput>> {
        if num_samples == 0 {
            return Err(domain("sample count M must be >= 1"));
        }
        self.check_tokens(tokens)?;
        let outputs: Vec<Result<ForwardOutput>> = runtime::map_indexed(num_samples, |m| {
            let masks = MaskSet::for_sample(&self.config, tokens.len(), seeds, m as u64);
            self.forward(tokens, &masks, lambda, token_uncertainty)
        });
        outputs.into_iter().collect()
    }

    /// Mean-pooled deterministic features; the fixed representation the head
    /// is trained on.
    pub fn pooled_features(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        Ok(self.forward_deterministic(tokens)?.pooled)
    }

    fn head_logits(&self, pooled: &[f64]) -> Vec<f64> {
        (0..self.config.num_classes)
            .map(|k| {
                self.head_w
                    .row(k)
                    .iter()
                    .zip(pooled.iter())
                    .map(|(w, f)| w * f)
                    .sum::<f64>()
                    + self.head_b[k]
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION.to_string(),
            config: self.config.clone(),
            embedding: self.embedding.data().to_vec(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    wq: l.wq.data().to_vec(),
                    wk: l.wk.data().to_vec(),
                    wv: l.wv.data().to_vec(),
                })
                .collect(),
            head_w: self.head_w.data().to_vec(),
            head_b: self.head_b.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<StochasticModel> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(UqError::Schema {
                line: 1,
                msg: format!(
                    "unsupported model version {:?}, expected {MODEL_FORMAT_VERSION:?}",
                    file.version
                ),
            });
        }
        file.config.validate()?;
        let d = file.config.embed_dim;
        if file.layers.len() != file.config.num_layers {
            return Err(UqError::Schema {
                line: 1,
                msg: "layer count does not match config".into(),
            });
        }
        let embedding = Matrix::from_vec(file.config.vocab_size, d, file.embedding)?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                Ok(LayerWeights {
                    wq: Matrix::from_vec(d, d, l.wq)?,
                    wk: Matrix::from_vec(d, d, l.wk)?,
                    wv: Matrix::from_vec(d, d, l.wv)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let head_w = Matrix::from_vec(file.config.num_classes, d, file.head_w)?;
        if file.head_b.len() != file.config.num_classes
            || file.head_b.iter().any(|v| !v.is_finite())
        {
            return Err(UqError::Schema {
                line: 1,
                msg: "head bias malformed".into(),
            });
        }
        Ok(StochasticModel {
            config: file.config,
            embedding,
            layers,
            head_w,
            head_b: file.head_b,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    config: ModelConfig,
    embedding: Vec<f64>,
    layers: Vec<LayerFile>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    wq: Vec<f64>,
    wk: Vec<f64>,
    wv: Vec<f64>,
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut().iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
    m
}

fn softmax_rows(scores: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(scores.rows(), scores.cols());
    for i in 0..scores.rows() {
        let row = softmax(scores.row(i))?;
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

/// Labeled training set: token sequences with class labels.
pub type LabeledSet = [(Vec<usize>, usize)];

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    /// Cross-entropy before training and after each epoch.
    pub loss_history: Vec<f64>,
}

/// Cross-entropy of the current head on a labeled set (training diagnostic).
pub fn head_loss(model: &StochasticModel, data: &LabeledSet) -> Result<f64> {
    let (features, labels) = frozen_features(model, data)?;
    Ok(head_loss_on(
        &model.head_w,
        &model.head_b,
        &features,
        &labels,
    ))
}

/// Analytic gradient of the head cross-entropy (weights, bias).
pub fn head_gradient(model: &StochasticModel, data: &LabeledSet) -> Result<(Matrix, Vec<f64>)> {
    let (features, labels) = frozen_features(model, data)?;
    Ok(head_gradient_on(
        &model.head_w,
        &model.head_b,
        &features,
        &labels,
    ))
}

/// Trains the linear head by full-batch gradient descent on the frozen
/// deterministic features; the transformer body never changes.
///
/// Each epoch backtracks (halving the step) until the loss does not increase,
/// so the recorded loss history is non-increasing. Training is deterministic;
/// `_seed` is accepted for interface stability with stochastic trainers.
pub fn train_head(
    model: &StochasticModel,
    data: &LabeledSet,
    epochs: usize,
    lr: f64,
    _seed: u64,
) -> Result<(StochasticModel, TrainReport)> {
    if data.is_empty() {
        return Err(domain("training set must be nonempty"));
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(domain("learning rate must be finite and >= 0"));
    }
    let (features, labels) = frozen_features(model, data)?;

    let mut trained = model.clone();
    let mut loss = head_loss_on(&trained.head_w, &trained.head_b, &features, &labels);
    let mut history = vec![loss];
    if lr == 0.0 {
        history.extend(std::iter::repeat_n(loss, epochs));
        return Ok((
            trained,
            TrainReport {
                loss_history: history,
            },
        ));
    }

    // Doubling/halving step adaptation: grow the step after clean epochs,
    // backtrack within an epoch until the loss does not increase. The
    // recorded history is non-increasing by construction.
    let mut step = lr;
    for _ in 0..epochs {
        let (gw, gb) = head_gradient_on(&trained.head_w, &trained.head_b, &features, &labels);
        let mut trial = step;
        for attempt in 0..60 {
            let mut w = trained.head_w.clone();
            for (v, g) in w.data_mut().iter_mut().zip(gw.data().iter()) {
                *v -= trial * g;
            }
            let b: Vec<f64> = trained
                .head_b
                .iter()
                .zip(gb.iter())
                .map(|(v, g)| v - trial * g)
                .collect();
            let candidate = head_loss_on(&w, &b, &features, &labels);
            if candidate <= loss {
                trained.head_w = w;
                trained.head_b = b;
                loss = candidate;
                step = if attempt == 0 {
                    (trial * 2.0).min(1e9)
                } else {
                    trial
                };
                break;
            }
            trial *= 0.5;
            if trial == 0.0 {
                break;
            }
        }
        history.push(loss);
    }
    Ok((
        trained,
        TrainReport {
            loss_history: history,
        },
    ))
}

fn frozen_features(model: &StochasticModel, data: &LabeledSet) -> Result<(Matrix, Vec<usize>)> {
    if data.is_empty() {
        return Err(domain("labeled set must be nonempty"));
    }
    for (_, label) in data {
        if *label >= model.config.num_classes {
            return Err(domain(format!(
                "label {label} out of range for {} classes",
                model.config.num_classes
            )));
        }
    }
    let rows: Vec<Result<Vec<f64>>> =
        runtime::map_indexed(data.len(), |i| model.pooled_features(&data[i].0));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let features = Matrix::from_rows(&rows)?;
    let labels = data.iter().map(|(_, y)| *y).collect();
    Ok((features, labels))
}

fn head_loss_on(w: &Matrix, b: &[f64], features: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let logits = logits_for(w, b, features.row(i));
        total += log_sum_exp(&logits) - logits[y];
    }
    total / labels.len() as f64
}

fn head_gradient_on(
    w: &Matrix,
    b: &[f64],
    features: &Matrix,
    labels: &[usize],
) -> (Matrix, Vec<f64>) {
    let k = b.len();
    let d = features.cols();
    let mut gw = Matrix::zeros(k, d);
    let mut gb = vec![0.0; k];
    let n = labels.len() as f64;
    for (i, &y) in labels.iter().enumerate() {
        let logits = logits_for(w, b, features.row(i));
        let p = softmax(&logits).expect("finite logits");
        for c in 0..k {
            let err = p[c] - if c == y { 1.0 } else { 0.0 };
            gb[c] += err / n;
            let grow = gw.row_mut(c);
            for (g, &f) in grow.iter_mut().zip(features.row(i).iter()) {
                *g += err * f / n;
            }
        }
    }
    (gw, gb)
}

fn logits_for(w: &Matrix, b: &[f64], f: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|k| {
            w.row(k)
                .iter()
                .zip(f.iter())
                .map(|(wv, fv)| wv * fv)
                .sum::<f64>()
                + b[k]
        })
        .collect()
}
