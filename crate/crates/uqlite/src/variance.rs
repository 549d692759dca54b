//! Nested Monte-Carlo variance decomposition.
//!
//! The law of total variance `Var(Y) = E[Var(Y|X)] + Var(E[Y|X])` is
//! estimated with a two-stage sampler: the outer loop draws the conditioning
//! state, the inner loop draws the remaining stochasticity. For the
//! transformer, conditioning on the hidden state h^(l) means freezing the
//! stochastic draws of all stages up to l (stage 0 is the embedding site,
//! stage l an attention layer) in the outer loop and resampling the rest in
//! the inner loop.
//!
//! Categorical outputs are scalarized as the trace of the class-probability
//! covariance (sum of per-class population variances), which is permutation
//! invariant and additive across classes.
//!
//! Standard errors come from a bootstrap over outer groups (total-variance
//! estimates bootstrap over their pooled independent draws). The total is
//! always estimated from an independent stream so the two-term sum check is
//! a genuine statistical test rather than an algebraic identity.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::model::{MaskSet, StochasticModel};
use crate::numerics::{tags, SeedStream, StreamingMoments};
use crate::runtime;
use rand_chacha::ChaCha8Rng;

/// Trace of the empirical covariance of probability vectors (population
/// convention). Permutation of class order leaves the value unchanged.
pub fn variance_of_distribution_samples(samples: &[Vec<f64>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(domain("variance needs at least 2 samples"));
    }
    let dim = samples[0].len();
    let mut acc = StreamingMoments::new(dim);
    for s in samples {
        acc.push(s)?;
    }
    Ok(acc.population_variance().iter().sum())
}

/// A stochastic process split into an outer (conditioning) draw and an inner
/// (residual) draw producing a vector-valued output.
pub trait TwoStageSampler: Sync {
    type OuterState: Send;
    fn draw_outer(&self, rng: &mut ChaCha8Rng) -> Result<Self::OuterState>;
    fn draw_value(&self, outer: &Self::OuterState, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub n_outer: usize,
    pub n_inner: usize,
    pub bootstrap: usize,
    pub seeds: SeedStream,
}

impl McConfig {
    pub fn new(n_outer: usize, n_inner: usize, seeds: SeedStream) -> McConfig {
        McConfig {
            n_outer,
            n_inner,
            bootstrap: 200,
            seeds,
        }
    }
}

/// One law-of-total-variance estimate at a fixed conditioning point.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceSplit {
    /// Independent pooled estimate of Var[y].
    pub total: f64,
    pub total_se: f64,
    /// E[Var[y | conditioning]], the within-group (aleatoric) term.
    pub aleatoric: f64,
    pub aleatoric_se: f64,
    /// Var[E[y | conditioning]], the between-group (epistemic) term.
    pub epistemic: f64,
    pub epistemic_se: f64,
    /// Bootstrap SE of aleatoric + epistemic (jointly resampled).
    pub sum_se: f64,
}

impl VarianceSplit {
    /// |total - (aleatoric + epistemic)|.
    pub fn law_gap(&self) -> f64 {
        (self.total - (self.aleatoric + self.epistemic)).abs()
    }

    /// Combined SE of the gap: total and the two-term sum are independent.
    pub fn gap_se(&self) -> f64 {
        (self.total_se * self.total_se + self.sum_se * self.sum_se).sqrt()
    }

    pub fn law_holds(&self, sigmas: f64) -> bool {
        self.law_gap() <= sigmas * self.gap_se()
    }
}

/// Runs the nested estimator: `n_outer` conditioning draws with `n_inner`
/// residual draws each, plus `n_outer * n_inner` independent full draws for
/// the total. Outer draws are independent and run in parallel with per-draw
/// derived seeds; reduction is in index order, so results are bit-identical
/// to sequential execution.
pub fn nested_decompose<S: TwoStageSampler>(sampler: &S, cfg: &McConfig) -> Result<VarianceSplit> {
    if cfg.n_outer < 2 || cfg.n_inner < 2 {
        return Err(domain("n_outer and n_inner must be >= 2"));
    }

    // (inner mean vector, inner population variance trace) per outer group.
    let groups: Vec<Result<(Vec<f64>, f64)>> = runtime::map_indexed(cfg.n_outer, |o| {
        let outer_seed = cfg.seeds.child(tags::OUTER).child(o as u64);
        let outer = sampler.draw_outer(&mut outer_seed.rng())?;
        let mut acc: Option<StreamingMoments> = None;
        for i in 0..cfg.n_inner {
            let mut rng = outer_seed.child(tags::INNER).child(i as u64).rng();
            let value = sampler.draw_value(&outer, &mut rng)?;
            let acc = acc.get_or_insert_with(|| StreamingMoments::new(value.len()));
            acc.push(&value)?;
        }
        let acc = acc.expect("n_inner >= 2");
        let mean = acc.mean().to_vec();
        let var: f64 = acc.population_variance().iter().sum();
        Ok((mean, var))
    });
    let groups: Vec<(Vec<f64>, f64)> = groups.into_iter().collect::<Result<_>>()?;

    let group_means: Vec<Vec<f64>> = groups.iter().map(|(m, _)| m.clone()).collect();
    let group_vars: Vec<f64> = groups.iter().map(|(_, v)| *v).collect();
    let aleatoric = mean(&group_vars);
    let epistemic = variance_of_distribution_samples(&group_means)?;

    // Independent full draws for the total.
    let n_total = cfg.n_outer * cfg.n_inner;
    let totals: Vec<Result<Vec<f64>>> = runtime::map_indexed(n_total, |j| {
        let stream = cfg.seeds.child(tags::TOTAL).child(j as u64);
        let outer = sampler.draw_outer(&mut stream.rng())?;
        sampler.draw_value(&outer, &mut stream.child(1).rng())
    });
    let totals: Vec<Vec<f64>> = totals.into_iter().collect::<Result<_>>()?;
    let total = variance_of_distribution_samples(&totals)?;

    // Bootstrap over outer groups for the conditional terms, over pooled
    // draws for the total. Trace-of-covariance of a resample reduces to
    // mean(|x|^2) - |mean(x)|^2, so replicates only accumulate sufficient
    // statistics.
    let dim = group_means[0].len();
    let group_sq: Vec<f64> = group_means
        .iter()
        .map(|m| m.iter().map(|v| v * v).sum())
        .collect();
    let total_sq: Vec<f64> = totals
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum())
        .collect();

    let mut boot_rng = cfg.seeds.child(tags::BOOTSTRAP).rng();
    let mut alea_reps = Vec::with_capacity(cfg.bootstrap);
    let mut epi_reps = Vec::with_capacity(cfg.bootstrap);
    let mut sum_reps = Vec::with_capacity(cfg.bootstrap);
    use rand::Rng;
    let n_groups = groups.len() as f64;
    for _ in 0..cfg.bootstrap {
        let mut sum_v = 0.0;
        let mut sum_q = 0.0;
        let mut sum_mean = vec![0.0; dim];
        for _ in 0..groups.len() {
            let idx = (boot_rng.random::<u64>() as usize) % groups.len();
            sum_v += group_vars[idx];
            sum_q += group_sq[idx];
            for (s, v) in sum_mean.iter_mut().zip(group_means[idx].iter()) {
                *s += v;
            }
        }
        let a = sum_v / n_groups;
        let e = (sum_q / n_groups
            - sum_mean
                .iter()
                .map(|s| (s / n_groups) * (s / n_groups))
                .sum::<f64>())
        .max(0.0);
        alea_reps.push(a);
        epi_reps.push(e);
        sum_reps.push(a + e);
    }
    let mut total_reps = Vec::with_capacity(cfg.bootstrap);
    let n_tot = totals.len() as f64;
    for _ in 0..cfg.bootstrap {
        let mut sum_q = 0.0;
        let mut sum_mean = vec![0.0; dim];
        for _ in 0..totals.len() {
            let idx = (boot_rng.random::<u64>() as usize) % totals.len();
            sum_q += total_sq[idx];
            for (s, v) in sum_mean.iter_mut().zip(totals[idx].iter()) {
                *s += v;
            }
        }
        total_reps.push(
            (sum_q / n_tot
                - sum_mean
                    .iter()
                    .map(|s| (s / n_tot) * (s / n_tot))
                    .sum::<f64>())
            .max(0.0),
        );
    }

    Ok(VarianceSplit {
        total,
        total_se: std_dev(&total_reps),
        aleatoric,
        aleatoric_se: std_dev(&alea_reps),
        epistemic,
        epistemic_se: std_dev(&epi_reps),
        sum_se: std_dev(&sum_reps),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// The transformer as a two-stage sampler: stages `0..prefix` are drawn by
/// the outer loop, the rest by the inner loop.
struct PrefixConditioned<'a> {
    model: &'a StochasticModel,
    tokens: &'a [usize],
    lambda: f64,
    token_uncertainty: Option<&'a [f64]>,
    prefix: usize,
}

impl TwoStageSampler for PrefixConditioned<'_> {
    type OuterState = MaskSet;

    fn draw_outer(&self, rng: &mut ChaCha8Rng) -> Result<MaskSet> {
        Ok(MaskSet::draw(self.model.config(), self.tokens.len(), rng))
    }

    fn draw_value(&self, outer: &MaskSet, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let inner = MaskSet::draw(self.model.config(), self.tokens.len(), rng);
        let spliced = MaskSet::splice_prefix(self.prefix, outer, &inner);
        Ok(self
            .model
            .forward(self.tokens, &spliced, self.lambda, self.token_uncertainty)?
            .probs)
    }
}

/// Law-of-total-variance split conditioning on hidden state h^(l), 0 <= l <= L.
///
/// l = 0 conditions on the deterministic input (the "aleatoric" term then
/// estimates the total variance); l = L freezes everything, leaving a zero
/// residual for the deterministic head.
pub fn decompose_total(
    model: &StochasticModel,
    tokens: &[usize],
    layer: usize,
    cfg: &McConfig,
    lambda: f64,
    token_uncertainty: Option<&[f64]>,
) -> Result<VarianceSplit> {
    let num_layers = model.config().num_layers;
    if layer > num_layers {
        return Err(domain(format!(
            "conditioning layer {layer} out of range (model has {num_layers} layers)"
        )));
    }
    let prefix = if layer == 0 { 0 } else { layer + 1 };
    nested_decompose(
        &PrefixConditioned {
            model,
            tokens,
            lambda,
            token_uncertainty,
            prefix,
        },
        cfg,
    )
}

/// Aleatoric/epistemic split at the embedding stage: the outer loop freezes the
/// stochastic embedding draw, the inner loop resamples the attention layers.
/// The between-group term is the epistemic (embedding-posterior) component,
/// the within-group term the aleatoric remainder.
pub fn embedding_split(
    model: &StochasticModel,
    tokens: &[usize],
    cfg: &McConfig,
    lambda: f64,
    token_uncertainty: Option<&[f64]>,
) -> Result<VarianceSplit> {
    nested_decompose(
        &PrefixConditioned {
            model,
            tokens,
            lambda,
            token_uncertainty,
            prefix: 1,
        },
        cfg,
    )
}

/// Algorithm-level attention diagnostic `E[Var[y | alpha]]`: embedding-stage
/// masks frozen per outer draw, attention-layer masks resampled per inner
/// draw. Reported alongside the two-term split, never added to it.
pub fn attention_term(
    model: &StochasticModel,
    tokens: &[usize],
    cfg: &McConfig,
    lambda: f64,
    token_uncertainty: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let split = embedding_split(model, tokens, cfg, lambda, token_uncertainty)?;
    Ok((split.aleatoric, split.aleatoric_se))
}

/// Full decomposition report: embedding-stage split, attention diagnostic, and the
/// telescoping layer profile V_0..V_L with contributions c_l = V_{l-1} - V_l.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub total_var: f64,
    pub total_var_se: f64,
    pub aleatoric: f64,
    pub aleatoric_raw: f64,
    pub aleatoric_se: f64,
    pub epistemic: f64,
    pub epistemic_raw: f64,
    pub epistemic_se: f64,
    pub attention_term: f64,
    pub attention_term_se: f64,
    pub per_layer_variance: Vec<f64>,
    pub per_layer_variance_se: Vec<f64>,
    pub per_layer_contribution: Vec<f64>,
    pub law_gap: f64,
    pub law_gap_tolerance: f64,
    pub law_holds: bool,
    pub n_outer: usize,
    pub n_inner: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

pub fn layerwise_profile(
    model: &StochasticModel,
    tokens: &[usize],
    cfg: &McConfig,
    lambda: f64,
    token_uncertainty: Option<&[f64]>,
) -> Result<DecompositionReport> {
    let num_layers = model.config().num_layers;

    let headline = embedding_split(model, tokens, cfg, lambda, token_uncertainty)?;
    // Attention diagnostic on its own derived stream: it overlaps the
    // aleatoric term by construction, so agreement is statistical, not forced.
    let attn_cfg = McConfig {
        seeds: cfg.seeds.child(tags::PROFILE),
        ..*cfg
    };
    let (attn, attn_se) = attention_term(model, tokens, &attn_cfg, lambda, token_uncertainty)?;

    let mut per_layer_variance = Vec::with_capacity(num_layers + 1);
    let mut per_layer_variance_se = Vec::with_capacity(num_layers + 1);
    for l in 0..=num_layers {
        let layer_cfg = McConfig {
            seeds: cfg.seeds.child(tags::PROFILE).child(100 + l as u64),
            ..*cfg
        };
        let split = decompose_total(model, tokens, l, &layer_cfg, lambda, token_uncertainty)?;
        per_layer_variance.push(split.aleatoric);
        per_layer_variance_se.push(split.aleatoric_se);
    }
    let per_layer_contribution: Vec<f64> = (1..=num_layers)
        .map(|l| per_layer_variance[l - 1] - per_layer_variance[l])
        .collect();

    let law_gap = headline.law_gap();
    let law_gap_tolerance = 3.0 * headline.gap_se();
    Ok(DecompositionReport {
        total_var: headline.total,
        total_var_se: headline.total_se,
        aleatoric: headline.aleatoric,
        aleatoric_raw: headline.aleatoric,
        aleatoric_se: headline.aleatoric_se,
        epistemic: headline.epistemic,
        epistemic_raw: headline.epistemic,
        epistemic_se: headline.epistemic_se,
        attention_term: attn,
        attention_term_se: attn_se,
        per_layer_variance,
        per_layer_variance_se,
        per_layer_contribution,
        law_gap,
        law_gap_tolerance,
        // A zero gap with zero SE (fully deterministic model) counts as held.
        law_holds: law_gap <= law_gap_tolerance,
        n_outer: cfg.n_outer,
        n_inner: cfg.n_inner,
        bootstrap: cfg.bootstrap,
        seed: cfg.seeds.root_seed(),
    })
}

/// CSV export of the V_l / c_l profile.
pub fn profile_csv(report: &DecompositionReport) -> String {
    let mut out = String::from("layer,V,V_se,contribution\n");
    for (l, (v, se)) in report
        .per_layer_variance
        .iter()
        .zip(report.per_layer_variance_se.iter())
        .enumerate()
    {
        let c = if l == 0 {
            String::new()
        } else {
            format!("{}", report.per_layer_contribution[l - 1])
        };
        out.push_str(&format!("{l},{v},{se},{c}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn distribution_variance_hand_cases() {
        assert_eq!(
            variance_of_distribution_samples(&[vec![0.2, 0.8], vec![0.2, 0.8]]).unwrap(),
            0.0
        );
        let v = variance_of_distribution_samples(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert!(variance_of_distribution_samples(&[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn distribution_variance_is_permutation_invariant() {
        let samples = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.6, 0.3],
            vec![0.2, 0.2, 0.6],
        ];
        let permuted: Vec<Vec<f64>> = samples.iter().map(|s| vec![s[2], s[0], s[1]]).collect();
        let a = variance_of_distribution_samples(&samples).unwrap();
        let b = variance_of_distribution_samples(&permuted).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    /// Y = h + e with h uniform on {0,1} and e ~ N(0,1): aleatoric 1.0,
    /// epistemic 0.25, total 1.25.
    struct Surrogate;

    impl TwoStageSampler for Surrogate {
        type OuterState = f64;
        fn draw_outer(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
            Ok(if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 })
        }
        fn draw_value(&self, outer: &f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
            let e: f64 = StandardNormal.sample(rng);
            Ok(vec![outer + e])
        }
    }

    #[test]
    fn surrogate_matches_analytic_values() {
        let cfg = McConfig::new(2000, 2000, SeedStream::new(2024));
        let split = nested_decompose(&Surrogate, &cfg).unwrap();
        assert!(
            (split.aleatoric - 1.0).abs() <= 3.0 * split.aleatoric_se,
            "aleatoric {} +- {}",
            split.aleatoric,
            split.aleatoric_se
        );
        assert!(
            (split.epistemic - 0.25).abs() <= 3.0 * split.epistemic_se,
            "epistemic {} +- {}",
            split.epistemic,
            split.epistemic_se
        );
        assert!(
            (split.total - 1.25).abs() <= 3.0 * split.total_se,
            "total {} +- {}",
            split.total,
            split.total_se
        );
        assert!(
            split.law_holds(3.0),
            "gap {} > 3 x {}",
            split.law_gap(),
            split.gap_se()
        );
    }

    fn noisy_model(dropout: f64) -> StochasticModel {
        let config = ModelConfig::new(10, 6, 2, 3).with_dropout(dropout);
        StochasticModel::init(config, 11).unwrap()
    }

    #[test]
    fn deterministic_model_decomposes_to_zero() {
        let model = noisy_model(0.0);
        let cfg = McConfig::new(8, 8, SeedStream::new(1));
        let split = decompose_total(&model, &[1, 2, 3], 1, &cfg, 0.0, None).unwrap();
        assert_eq!(split.total, 0.0);
        assert_eq!(split.aleatoric, 0.0);
        assert_eq!(split.epistemic, 0.0);
    }

    #[test]
    fn law_of_total_variance_on_toy_model() {
        let model = noisy_model(0.3);
        let tokens = [1, 4, 7, 2];
        for layer in 0..=2 {
            let cfg = McConfig::new(80, 80, SeedStream::new(40 + layer as u64));
            let split = decompose_total(&model, &tokens, layer, &cfg, 0.0, None).unwrap();
            assert!(
                split.law_holds(3.0),
                "layer {layer}: gap {} > 3 x {}",
                split.law_gap(),
                split.gap_se()
            );
        }
    }

    #[test]
    fn conditioning_on_everything_leaves_zero_residual() {
        let model = noisy_model(0.4);
        let cfg = McConfig::new(30, 8, SeedStream::new(3));
        let split = decompose_total(&model, &[0, 5, 9], 2, &cfg, 0.0, None).unwrap();
        assert_eq!(split.aleatoric, 0.0);
        assert!(split.epistemic > 0.0);
    }

    #[test]
    fn noise_confined_to_layer_one_lands_in_c1() {
        let mut config = ModelConfig::new(10, 6, 2, 3);
        config.layer_dropout_p = Some(vec![0.4, 0.0]);
        let model = StochasticModel::init(config, 17).unwrap();
        let cfg = McConfig::new(60, 60, SeedStream::new(5));
        let report = layerwise_profile(&model, &[1, 2, 3, 4], &cfg, 0.0, None).unwrap();
        // V_1 and V_2 are exactly zero: no stochastic sites after layer 1.
        assert_eq!(report.per_layer_variance[1], 0.0);
        assert_eq!(report.per_layer_variance[2], 0.0);
        let c1 = report.per_layer_contribution[0];
        assert!(
            c1 >= 0.9 * report.total_var - 3.0 * report.total_var_se,
            "c1 {} vs total {}",
            c1,
            report.total_var
        );
        assert!(report.per_layer_contribution[1].abs() < 1e-15);
    }

    #[test]
    fn telescoping_identity_is_exact() {
        let model = noisy_model(0.3);
        let cfg = McConfig::new(12, 12, SeedStream::new(6));
        let report = layerwise_profile(&model, &[2, 3, 8], &cfg, 0.0, None).unwrap();
        let sum: f64 = report.per_layer_contribution.iter().sum();
        let v0 = report.per_layer_variance[0];
        let vl = *report.per_layer_variance.last().unwrap();
        assert!((sum - (v0 - vl)).abs() < 1e-12);
    }

    #[test]
    fn attention_term_tracks_noise_location() {
        let tokens = [1, 2, 3, 4];
        let cfg = McConfig::new(50, 50, SeedStream::new(7));

        // Dropout only in attention layers: attention term ~ total.
        let mut attn_only = ModelConfig::new(10, 6, 2, 3);
        attn_only.embedding_dropout_p = Some(0.0);
        attn_only.dropout_p = 0.35;
        let model = StochasticModel::init(attn_only, 19).unwrap();
        let (term, se) = attention_term(&model, &tokens, &cfg, 0.0, None).unwrap();
        let total_cfg = McConfig::new(50, 50, SeedStream::new(8));
        let split = decompose_total(&model, &tokens, 0, &total_cfg, 0.0, None).unwrap();
        assert!(
            (term - split.total).abs() <= 3.0 * (se * se + split.total_se.powi(2)).sqrt(),
            "attention term {term} vs total {}",
            split.total
        );

        // Dropout only at the embedding: attention term exactly 0.
        let mut emb_only = ModelConfig::new(10, 6, 2, 3);
        emb_only.embedding_dropout_p = Some(0.35);
        emb_only.layer_dropout_p = Some(vec![0.0, 0.0]);
        let model = StochasticModel::init(emb_only, 19).unwrap();
        let (term, _) = attention_term(&model, &tokens, &cfg, 0.0, None).unwrap();
        assert_eq!(term, 0.0);

        // Deterministic attention layers and embedding: everything 0.
        let det = StochasticModel::init(ModelConfig::new(10, 6, 2, 3), 19).unwrap();
        let (term, _) = attention_term(&det, &tokens, &cfg, 0.0, None).unwrap();
        assert_eq!(term, 0.0);
    }

    #[test]
    fn bootstrap_se_shrinks_with_sample_size() {
        let mut ratios = Vec::new();
        for trial in 0..10 {
            let small = McConfig::new(150, 150, SeedStream::new(900 + trial));
            let large = McConfig::new(300, 300, SeedStream::new(900 + trial));
            let s = nested_decompose(&Surrogate, &small).unwrap();
            let l = nested_decompose(&Surrogate, &large).unwrap();
            ratios.push(l.sum_se / s.sum_se);
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = ratios[ratios.len() / 2];
        assert!(
            (0.5..=1.0).contains(&median),
            "median SE ratio {median} outside [0.5, 1.0] ({ratios:?})"
        );
    }

    #[test]
    fn parallel_and_sequential_estimates_are_identical() {
        let model = noisy_model(0.3);
        let cfg = McConfig::new(10, 10, SeedStream::new(77));
        crate::runtime::set_thread_cap(1);
        let seq = decompose_total(&model, &[1, 2], 1, &cfg, 0.0, None).unwrap();
        crate::runtime::set_thread_cap(4);
        let par = decompose_total(&model, &[1, 2], 1, &cfg, 0.0, None).unwrap();
        crate::runtime::set_thread_cap(0);
        assert_eq!(seq.total, par.total);
        assert_eq!(seq.aleatoric, par.aleatoric);
        assert_eq!(seq.epistemic, par.epistemic);
    }
}
