//! Post-hoc baseline calibrators: MSP scoring, temperature scaling, isotonic
//! regression (pool-adjacent-violators), and a small deep ensemble.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, UqError};
use crate::metrics::PredictionRecord;
use crate::model::StochasticModel;
use crate::numerics::{log_sum_exp, softmax};

pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 20.0;

/// Maximum softmax probability, the simplest confidence proxy.
pub fn msp_score(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(domain("msp_score needs a nonempty probability vector"));
    }
    if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(domain("probabilities must be finite and >= 0"));
    }
    Ok(probs.iter().cloned().fold(0.0, f64::max).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub temperature: f64,
    pub iterations: usize,
    pub validation_nll: f64,
}

/// Mean cross-entropy of softmax(logits / T) over a validation set.
pub fn temperature_nll(val: &[(Vec<f64>, usize)], t: f64) -> Result<f64> {
    if val.is_empty() {
        return Err(domain("validation set must be nonempty"));
    }
    let mut total = 0.0;
    for (logits, label) in val {
        if *label >= logits.len() {
            return Err(domain("label out of range for logits"));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(domain("logits must be finite"));
        }
        let scaled: Vec<f64> = logits.iter().map(|z| z / t).collect();
        total += log_sum_exp(&scaled) - scaled[*label];
    }
    Ok(total / val.len() as f64)
}

/// Fits the temperature by bracketed golden-section search on [T_MIN, T_MAX]
/// to 1e-7 in T (tighter than the 1e-6 contract). The fitted temperature
/// never degrades the T = 1 baseline.
pub fn fit_temperature(val: &[(Vec<f64>, usize)]) -> Result<TemperatureModel> {
    if val.is_empty() {
        return Err(domain("validation set must be nonempty"));
    }
    let mut iterations = 0usize;
    let mut eval = |t: f64| -> Result<f64> {
        iterations += 1;
        temperature_nll(val, t)
    };

    // Coarse log-spaced scan to bracket the minimum.
    const COARSE: usize = 64;
    let grid: Vec<f64> = (0..=COARSE)
        .map(|i| {
            let f = i as f64 / COARSE as f64;
            T_MIN * (T_MAX / T_MIN).powf(f)
        })
        .collect();
    let mut best = 0usize;
    let mut best_val = f64::INFINITY;
    let mut values = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        let v = eval(t)?;
        values.push(v);
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(COARSE)];

    // Golden-section refinement inside the bracket.
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while hi - lo > 1e-7 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    let mut t_star = 0.5 * (lo + hi);
    let mut nll_star = eval(t_star)?;
    // Never worse than the uncalibrated T = 1.
    let nll_one = eval(1.0)?;
    if nll_one < nll_star {
        t_star = 1.0;
        nll_star = nll_one;
    }
    Ok(TemperatureModel {
        temperature: t_star.clamp(T_MIN, T_MAX),
        iterations,
        validation_nll: nll_star,
    })
}

/// softmax(logits / T); order-preserving for any T > 0.
pub fn apply_temperature(model: &TemperatureModel, logits: &[f64]) -> Result<Vec<f64>> {
    if model.temperature <= 0.0 {
        return Err(UqError::State("temperature must be positive".into()));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / model.temperature).collect();
    softmax(&scaled)
}

/// Non-decreasing map from confidence to empirical accuracy, fitted by
/// pool-adjacent-violators; queries interpolate linearly between breakpoints
/// and clamp outside them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsotonicModel {
    /// Strictly increasing confidence breakpoints (ties pooled before fitting).
    pub breakpoints: Vec<f64>,
    /// Non-decreasing fitted values in [0,1].
    pub values: Vec<f64>,
}

/// Weighted PAV on (confidence, correctness) pairs; equal confidences are
/// pooled into one weighted point before the monotone fit.
pub fn fit_isotonic(pairs: &[(f64, f64)]) -> Result<IsotonicModel> {
    if pairs.is_empty() {
        return Err(domain("isotonic fit needs at least one pair"));
    }
    for &(c, y) in pairs {
        if !(0.0..=1.0).contains(&c) || !c.is_finite() {
            return Err(domain("confidences must lie in [0,1]"));
        }
        if y != 0.0 && y != 1.0 {
            return Err(domain("correctness must be 0 or 1"));
        }
    }
    let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Pool ties.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (c, y) in sorted {
        if xs.last() == Some(&c) {
            let i = xs.len() - 1;
            let w = ws[i];
            ys[i] = (ys[i] * w + y) / (w + 1.0);
            ws[i] = w + 1.0;
        } else {
            xs.push(c);
            ys.push(y);
            ws.push(1.0);
        }
    }

    // PAV: merge adjacent blocks while a violator exists.
    let mut val: Vec<f64> = Vec::with_capacity(ys.len());
    let mut weight: Vec<f64> = Vec::with_capacity(ys.len());
    let mut size: Vec<usize> = Vec::with_capacity(ys.len());
    for (y, w) in ys.iter().zip(ws.iter()) {
        val.push(*y);
        weight.push(*w);
        size.push(1);
        while val.len() > 1 && val[val.len() - 2] > val[val.len() - 1] {
            let (v2, w2, s2) = (
                val.pop().unwrap(),
                weight.pop().unwrap(),
                size.pop().unwrap(),
            );
            let last = val.len() - 1;
            let merged_w = weight[last] + w2;
            val[last] = (val[last] * weight[last] + v2 * w2) / merged_w;
            weight[last] = merged_w;
            size[last] += s2;
        }
    }
    let mut values = Vec::with_capacity(xs.len());
    for (v, s) in val.iter().zip(size.iter()) {
        values.extend(std::iter::repeat_n(*v, *s));
    }
    Ok(IsotonicModel {
        breakpoints: xs,
        values,
    })
}

impl IsotonicModel {
    /// Piecewise-linear interpolation between breakpoints, clamped to the end
    /// values outside the fitted range.
    pub fn apply(&self, confidence: f64) -> Result<f64> {
        if self.breakpoints.is_empty() {
            return Err(UqError::State("isotonic model is unfitted".into()));
        }
        if self.breakpoints.len() != self.values.len() {
            return Err(UqError::State("isotonic model is malformed".into()));
        }
        let x = &self.breakpoints;
        let y = &self.values;
        if confidence <= x[0] {
            return Ok(y[0]);
        }
        if confidence >= *x.last().unwrap() {
            return Ok(*y.last().unwrap());
        }
        let j = match x.binary_search_by(|v| v.partial_cmp(&confidence).unwrap()) {
            Ok(j) => return Ok(y[j]),
            Err(j) => j,
        };
        let t = (confidence - x[j - 1]) / (x[j] - x[j - 1]);
        Ok(y[j - 1] + t * (y[j] - y[j - 1]))
    }
}

/// Recalibrates the top-class probability through the isotonic map and
/// rescales the remaining mass proportionally across the other classes.
pub fn recalibrate_record(
    model: &IsotonicModel,
    record: &PredictionRecord,
) -> Result<PredictionRecord> {
    let probs = record.probs();
    let top = crate::decision::argmax(probs);
    let conf = record.confidence();
    let new_top = model.apply(conf)?.clamp(0.0, 1.0);
    let rest = 1.0 - conf;
    let k = probs.len();
    let mut out = vec![0.0; k];
    if rest > 1e-12 {
        let scale = (1.0 - new_top) / rest;
        for (i, &p) in probs.iter().enumerate() {
            out[i] = if i == top { new_top } else { p * scale };
        }
    } else {
        // One-hot input: spread the freed mass uniformly.
        let spread = (1.0 - new_top) / (k - 1) as f64;
        for (i, o) in out.iter_mut().enumerate() {
            *o = if i == top { new_top } else { spread };
        }
    }
    // Guard against rounding drift before revalidation.
    let sum: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= sum;
    }
    PredictionRecord::with_severity(out, record.label(), record.severity())
}

/// Deterministic mean of E per-model forward passes (dropout off).
pub fn ensemble_predict(models: &[StochasticModel], tokens: &[usize]) -> Result<Vec<f64>> {
    let first = models
        .first()
        .ok_or_else(|| domain("ensemble needs at least one model"))?;
    if models.iter().any(|m| m.config() != first.config()) {
        return Err(domain("ensemble members must share one config"));
    }
    let k = first.config().num_classes;
    let mut mean = vec![0.0; k];
    for model in models {
        let out = model.forward_deterministic(tokens)?;
        for (m, p) in mean.iter_mut().zip(out.probs.iter()) {
            *m += p / models.len() as f64;
        }
    }
    Ok(mean)
}

/// Serialized calibrator: `{"type":"temperature","T":...}` or
/// `{"type":"isotonic","x":[...],"y":[...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Calibrator {
    Temperature {
        #[serde(rename = "T")]
        t: f64,
    },
    Isotonic {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

impl Calibrator {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Calibrator> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numerics::SeedStream;
    use rand::Rng;

    #[test]
    fn msp_hand_cases() {
        assert_eq!(msp_score(&[0.25; 4]).unwrap(), 0.25);
        assert_eq!(msp_score(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(msp_score(&[0.7, 0.2, 0.1]).unwrap(), 0.7);
        assert!(msp_score(&[]).is_err());
    }

    /// Iterated grid refinement, the independent route to the optimum.
    fn grid_search_temperature(val: &[(Vec<f64>, usize)]) -> f64 {
        let mut lo = T_MIN;
        let mut hi = T_MAX;
        for _ in 0..10 {
            let mut best_t = lo;
            let mut best_v = f64::INFINITY;
            for i in 0..=100 {
                let t = lo + (hi - lo) * i as f64 / 100.0;
                let v = temperature_nll(val, t).unwrap();
                if v < best_v {
                    best_v = v;
                    best_t = t;
                }
            }
            let width = (hi - lo) / 100.0;
            lo = (best_t - width).max(T_MIN);
            hi = (best_t + width).min(T_MAX);
        }
        0.5 * (lo + hi)
    }

    fn sampled_validation_set(scale: f64, n: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
        // Labels sampled from softmax(z * scale); with scale 1 the set is
        // perfectly calibrated at T = 1.
        let mut rng = SeedStream::new(seed).rng();
        (0..n)
            .map(|_| {
                let logits: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                let sample_probs =
                    softmax(&logits.iter().map(|z| z * scale).collect::<Vec<f64>>()).unwrap();
                let u: f64 = rng.random();
                let mut cum = 0.0;
                let mut label = 0;
                for (i, p) in sample_probs.iter().enumerate() {
                    cum += p;
                    if u <= cum {
                        label = i;
                        break;
                    }
                }
                (logits, label)
            })
            .collect()
    }

    #[test]
    fn calibrated_set_fits_near_unit_temperature() {
        let val = sampled_validation_set(1.0, 4000, 31);
        let fit = fit_temperature(&val).unwrap();
        assert!(
            (fit.temperature - 1.0).abs() < 0.1,
            "T* = {}",
            fit.temperature
        );
        let grid = grid_search_temperature(&val);
        assert!((fit.temperature - grid).abs() < 1e-6);
    }

    #[test]
    fn symmetric_conflicting_labels_push_t_to_max() {
        // Two records with identical logits and opposite labels: NLL is
        // minimized by the most uniform probabilities, so T* = T_MAX.
        let val = vec![(vec![1.0, -1.0], 0usize), (vec![1.0, -1.0], 1usize)];
        let fit = fit_temperature(&val).unwrap();
        assert!((fit.temperature - T_MAX).abs() < 1e-4);
        let probs = apply_temperature(&fit, &[1.0, -1.0]).unwrap();
        assert!((probs[0] - 0.5).abs() < 0.05);
    }

    #[test]
    fn fitted_temperature_never_degrades_t1() {
        for seed in 0..5 {
            let val = sampled_validation_set(2.0, 200, seed);
            let fit = fit_temperature(&val).unwrap();
            assert!(fit.validation_nll <= temperature_nll(&val, 1.0).unwrap() + 1e-9);
            assert!((T_MIN..=T_MAX).contains(&fit.temperature));
        }
    }

    #[test]
    fn temperature_preserves_argmax() {
        let mut rng = SeedStream::new(44).rng();
        for _ in 0..200 {
            let logits: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let t = TemperatureModel {
                temperature: T_MIN + rng.random::<f64>() * (T_MAX - T_MIN),
                iterations: 0,
                validation_nll: 0.0,
            };
            let probs = apply_temperature(&t, &logits).unwrap();
            assert_eq!(
                crate::decision::argmax(&probs),
                crate::decision::argmax(&logits)
            );
        }
    }

    #[test]
    fn pav_hand_case() {
        let fit = fit_isotonic(&[(0.1, 1.0), (0.2, 0.0), (0.3, 1.0)]).unwrap();
        assert_eq!(fit.breakpoints, vec![0.1, 0.2, 0.3]);
        assert_eq!(fit.values, vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn pav_monotone_input_is_reproduced() {
        let fit = fit_isotonic(&[(0.2, 0.0), (0.5, 1.0), (0.9, 1.0)]).unwrap();
        assert_eq!(fit.values, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn pav_constant_correctness_is_constant() {
        let fit = fit_isotonic(&[(0.2, 1.0), (0.5, 1.0), (0.9, 1.0)]).unwrap();
        assert!(fit.values.iter().all(|&v| v == 1.0));
    }

    /// O(n^2) minimax isotonic solver: iso_i = max_{a<=i} min_{b>=a} wavg(y[a..=b]).
    fn brute_force_isotonic(xs: &[f64], ys: &[f64], ws: &[f64]) -> Vec<f64> {
        let n = xs.len();
        (0..n)
            .map(|i| {
                let mut best = f64::NEG_INFINITY;
                for a in 0..=i {
                    let mut worst = f64::INFINITY;
                    let mut sum = 0.0;
                    let mut wsum = 0.0;
                    for b in a..n {
                        sum += ys[b] * ws[b];
                        wsum += ws[b];
                        if b >= i {
                            worst = worst.min(sum / wsum);
                        }
                    }
                    best = best.max(worst);
                }
                best
            })
            .collect()
    }

    #[test]
    fn pav_matches_brute_force_on_random_instances() {
        let mut rng = SeedStream::new(45).rng();
        for _ in 0..200 {
            let n = 2 + (rng.random::<u32>() % 12) as usize;
            let mut pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    (
                        (rng.random::<u32>() % 20) as f64 / 20.0,
                        (rng.random::<u32>() % 2) as f64,
                    )
                })
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let fit = fit_isotonic(&pairs).unwrap();

            // Brute-force on the tie-pooled sequence.
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut ws = Vec::new();
            for (c, y) in &pairs {
                if xs.last() == Some(c) {
                    let i = xs.len() - 1;
                    let w: f64 = ws[i];
                    ys[i] = (ys[i] * w + y) / (w + 1.0);
                    ws[i] = w + 1.0;
                } else {
                    xs.push(*c);
                    ys.push(*y);
                    ws.push(1.0);
                }
            }
            let brute = brute_force_isotonic(&xs, &ys, &ws);
            assert_eq!(fit.values.len(), brute.len());
            for (a, b) in fit.values.iter().zip(brute.iter()) {
                assert!((a - b).abs() < 1e-10, "PAV {a} vs brute force {b}");
            }
            assert!(fit.values.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        }
    }

    #[test]
    fn isotonic_interpolation_and_clamping() {
        let model = IsotonicModel {
            breakpoints: vec![0.2, 0.6],
            values: vec![0.5, 1.0],
        };
        assert_eq!(model.apply(0.2).unwrap(), 0.5);
        assert_eq!(model.apply(0.6).unwrap(), 1.0);
        assert!((model.apply(0.4).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(model.apply(0.05).unwrap(), 0.5);
        assert_eq!(model.apply(0.9).unwrap(), 1.0);

        let empty = IsotonicModel {
            breakpoints: vec![],
            values: vec![],
        };
        assert!(matches!(empty.apply(0.5), Err(UqError::State(_))));
    }

    #[test]
    fn recalibrated_records_stay_valid_distributions() {
        let model = fit_isotonic(&[(0.4, 0.0), (0.6, 1.0), (0.9, 1.0)]).unwrap();
        let mut rng = SeedStream::new(46).rng();
        for _ in 0..100 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.01).collect();
            let sum: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let rec = PredictionRecord::new(probs, 1).unwrap();
            let out = recalibrate_record(&model, &rec).unwrap();
            let total: f64 = out.probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        // One-hot input keeps a valid distribution too.
        let rec = PredictionRecord::new(vec![1.0, 0.0, 0.0], 0).unwrap();
        let out = recalibrate_record(&model, &rec).unwrap();
        assert!((out.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ensemble_mean_and_config_check() {
        let config = ModelConfig::new(10, 4, 1, 2);
        let a = StochasticModel::init(config.clone(), 1).unwrap();
        let b = StochasticModel::init(config.clone(), 2).unwrap();
        let tokens = [0, 3, 7];

        let single = ensemble_predict(std::slice::from_ref(&a), &tokens).unwrap();
        assert_eq!(single, a.forward_deterministic(&tokens).unwrap().probs);

        let same = ensemble_predict(&[a.clone(), a.clone()], &tokens).unwrap();
        for (x, y) in same.iter().zip(single.iter()) {
            assert!((x - y).abs() < 1e-15);
        }

        let pair = ensemble_predict(&[a.clone(), b.clone()], &tokens).unwrap();
        let pa = a.forward_deterministic(&tokens).unwrap().probs;
        let pb = b.forward_deterministic(&tokens).unwrap().probs;
        for ((m, x), y) in pair.iter().zip(pa.iter()).zip(pb.iter()) {
            assert!((m - 0.5 * (x + y)).abs() < 1e-12);
        }
        assert!((pair.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let other = StochasticModel::init(ModelConfig::new(10, 4, 2, 2), 3).unwrap();
        assert!(ensemble_predict(&[a, other], &tokens).is_err());
    }

    #[test]
    fn calibrator_json_round_trip() {
        let t = Calibrator::Temperature { t: 2.5 };
        let text = t.to_json().unwrap();
        assert!(text.contains("\"temperature\""));
        assert!(matches!(
            Calibrator::from_json(&text).unwrap(),
            Calibrator::Temperature { t } if t == 2.5
        ));

        let iso = Calibrator::Isotonic {
            x: vec![0.1, 0.9],
            y: vec![0.3, 0.8],
        };
        let text = iso.to_json().unwrap();
        assert!(text.contains("\"isotonic\""));
        match Calibrator::from_json(&text).unwrap() {
            Calibrator::Isotonic { x, y } => {
                assert_eq!(x, vec![0.1, 0.9]);
                assert_eq!(y, vec![0.3, 0.8]);
            }
            _ => panic!("wrong variant"),
        }
    }
}
