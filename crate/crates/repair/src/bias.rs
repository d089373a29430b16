//! The bias meter: a linear softmax estimator trained on fixed features,
//! whose converged cross-entropy risk defines the representation bias.
//!
//! The bias of a dataset towards a representation is the mutual information
//! between features and labels normalized by label entropy,
//! `1 - risk / entropy`, a dimensionless quantity in `[0, 1]`. Both the risk
//! and the entropy support per-example selection weights, so the same meter
//! serves the plain and the reweighted dataset.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use crate::batching::Batches;
use crate::data::{ExampleWeights, FeatureDataset};
use crate::data::files::fmt_float;
use crate::error::{Error, Result};

use rand::SeedableRng;

/// Probabilities are floored at this value before taking logs, preventing
/// infinite loss from a saturated softmax.
pub const PROB_FLOOR: f64 = 1e-12;

/// Linear softmax classifier over feature space: a `C x d` weight matrix
/// plus a `C`-vector of offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    weights: Array2<f64>,
    offsets: Array1<f64>,
}

impl SoftmaxClassifier {
    /// The zero classifier: uniform output everywhere.
    pub fn zeros(class_count: usize, dim: usize) -> Self {
        SoftmaxClassifier {
            weights: Array2::zeros((class_count, dim)),
            offsets: Array1::zeros(class_count),
        }
    }

    pub fn from_parts(weights: Array2<f64>, offsets: Array1<f64>) -> Result<Self> {
        if weights.nrows() != offsets.len() {
            return Err(Error::InvalidInput(format!(
                "weight rows ({}) and offsets ({}) disagree",
                weights.nrows(),
                offsets.len()
            )));
        }
        Ok(SoftmaxClassifier { weights, offsets })
    }

    pub fn class_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn offsets(&self) -> &Array1<f64> {
        &self.offsets
    }

    /// Row-stochastic class probabilities, computed with max-subtraction so
    /// logits up to |700| cannot overflow.
    pub fn forward(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "feature width {} does not match classifier width {}",
                features.ncols(),
                self.dim()
            )));
        }
        let mut logits = features.dot(&self.weights.t());
        logits += &self.offsets;
        for mut row in logits.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        Ok(logits)
    }

    /// Floored log-probability of each example's own label.
    pub fn label_log_probs(&self, ds: &FeatureDataset) -> Result<Vec<f64>> {
        let probs = self.forward(ds.features())?;
        Ok(ds
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &y)| probs[(i, y)].max(PROB_FLOOR).ln())
            .collect())
    }

    /// Top-1 predictions (first class wins ties).
    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<usize>> {
        let probs = self.forward(features)?;
        Ok(argmax_rows(&probs))
    }
}

pub(crate) fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            best
        })
        .collect()
}

fn effective_weights(n: usize, weights: Option<&ExampleWeights>) -> Result<Vec<f64>> {
    match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{} weights for a dataset of {n} examples",
                    w.len()
                )));
            }
            Ok(w.weights())
        }
        None => Ok(vec![1.0; n]),
    }
}

/// Class frequencies under the (optionally reweighted) empirical
/// distribution: `p_y = sum of weights of class-y examples / total weight`.
pub fn weighted_class_frequencies(
    labels: &[usize],
    class_count: usize,
    weights: Option<&ExampleWeights>,
) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::InvalidInput(
            "cannot compute class frequencies of an empty dataset".into(),
        ));
    }
    let w = effective_weights(labels.len(), weights)?;
    let mut mass = vec![0.0; class_count];
    for (&y, &wi) in labels.iter().zip(&w) {
        if y >= class_count {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for class_count {class_count}"
            )));
        }
        mass[y] += wi;
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "all effective example weights are zero".into(),
        ));
    }
    Ok(mass.into_iter().map(|m| m / total).collect())
}

/// Label entropy in nats per example under the (optionally reweighted)
/// empirical distribution. Zero-probability classes contribute nothing.
pub fn weighted_entropy(
    labels: &[usize],
    class_count: usize,
    weights: Option<&ExampleWeights>,
) -> Result<f64> {
    let freqs = weighted_class_frequencies(labels, class_count, weights)?;
    Ok(freqs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum())
}

/// Weighted cross-entropy risk of a classifier in nats per example:
/// the weight-normalized mean of `-log P(y_i | x_i)`.
pub fn weighted_risk(
    clf: &SoftmaxClassifier,
    ds: &FeatureDataset,
    weights: Option<&ExampleWeights>,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InvalidInput(
            "cannot compute risk of an empty dataset".into(),
        ));
    }
    let w = effective_weights(ds.len(), weights)?;
    let log_probs = clf.label_log_probs(ds)?;
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "all effective example weights are zero".into(),
        ));
    }
    let loss: f64 = w.iter().zip(&log_probs).map(|(&wi, &lp)| -wi * lp).sum();
    Ok(loss / total)
}

/// Analytic gradient of [`weighted_risk`] with respect to the classifier's
/// weights and offsets.
pub fn risk_gradient(
    clf: &SoftmaxClassifier,
    ds: &FeatureDataset,
    weights: Option<&ExampleWeights>,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let w = effective_weights(ds.len(), weights)?;
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "all effective example weights are zero".into(),
        ));
    }
    let mut delta = clf.forward(ds.features())?;
    for (i, &y) in ds.labels().iter().enumerate() {
        delta[(i, y)] -= 1.0;
    }
    for (mut row, &wi) in delta.rows_mut().into_iter().zip(&w) {
        row.mapv_inplace(|v| v * wi / total);
    }
    let grad_w = delta.t().dot(ds.features());
    let grad_b = delta.sum_axis(Axis(0));
    Ok((grad_w, grad_b))
}

/// Hyperparameters of the bias estimator's SGD training run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// L2 penalty on the weight matrix; used when `decay_sweep` is `None`.
    pub weight_decay: f64,
    pub seed: u64,
    /// When set, one estimator is trained per decay value and the reported
    /// bias is the maximum across the sweep.
    pub decay_sweep: Option<Vec<f64>>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            learning_rate: 0.1,
            iterations: 2000,
            batch_size: 256,
            weight_decay: 1e-3,
            seed: 0,
            decay_sweep: Some(vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]),
        }
    }
}

impl EstimatorConfig {
    /// Single-decay mode: one training run instead of a sweep.
    pub fn single(weight_decay: f64) -> Self {
        EstimatorConfig {
            weight_decay,
            decay_sweep: None,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be positive".into()));
        }
        if self.weight_decay < 0.0
            || self.decay_sweep.as_ref().is_some_and(|s| s.iter().any(|&d| d < 0.0))
        {
            return Err(Error::InvalidInput("weight decay must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A trained estimator together with its per-step training loss.
#[derive(Debug, Clone)]
pub struct TrainedEstimator {
    pub classifier: SoftmaxClassifier,
    /// Mini-batch loss (weighted risk plus L2 penalty) before each step.
    pub loss_history: Vec<f64>,
}

/// Train the bias estimator by mini-batch SGD on the weighted risk plus an
/// L2 penalty on the weight matrix.
///
/// The classifier starts at zero and the data order is reshuffled each epoch
/// from the config seed, so a run is fully determined by its inputs. Batch
/// gradients are weight-rescaled, making them unbiased estimates of the
/// full weighted risk gradient.
pub fn train_bias_estimator(
    ds: &FeatureDataset,
    weights: Option<&ExampleWeights>,
    config: &EstimatorConfig,
) -> Result<TrainedEstimator> {
    config.validate()?;
    if ds.len() < ds.class_count() {
        return Err(Error::InvalidInput(format!(
            "need at least as many examples ({}) as classes ({})",
            ds.len(),
            ds.class_count()
        )));
    }
    let w = effective_weights(ds.len(), weights)?;
    let mut clf = SoftmaxClassifier::zeros(ds.class_count(), ds.dim());
    let mut loss_history = Vec::with_capacity(config.iterations);
    let mut batches = Batches::new(
        ds.len(),
        config.batch_size,
        ChaCha8Rng::seed_from_u64(config.seed),
    );

    for step in 0..config.iterations {
        let batch: Vec<usize> = batches.next().to_vec();
        let xb = gather_rows(ds.features(), &batch);
        let mut probs = clf.forward(&xb)?;

        let batch_mass: f64 = batch.iter().map(|&i| w[i]).sum();
        if batch_mass <= 0.0 {
            return Err(Error::InvalidInput(
                "all effective example weights in a batch are zero".into(),
            ));
        }
        let mut loss = 0.0;
        for (row, &i) in batch.iter().enumerate() {
            let y = ds.labels()[i];
            loss -= w[i] * probs[(row, y)].max(PROB_FLOOR).ln();
            probs[(row, y)] -= 1.0;
        }
        loss /= batch_mass;
        loss += 0.5 * config.weight_decay * clf.weights.iter().map(|v| v * v).sum::<f64>();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        loss_history.push(loss);

        for (row, &i) in batch.iter().enumerate() {
            let scale = w[i] / batch_mass;
            probs.row_mut(row).mapv_inplace(|v| v * scale);
        }
        let grad_w = probs.t().dot(&xb);
        let grad_b = probs.sum_axis(Axis(0));
        clf.weights
            .zip_mut_with(&grad_w, |wv, &g| *wv -= config.learning_rate * g);
        clf.weights
            .mapv_inplace(|wv| wv - config.learning_rate * config.weight_decay * wv);
        clf.offsets
            .zip_mut_with(&grad_b, |bv, &g| *bv -= config.learning_rate * g);
    }

    Ok(TrainedEstimator {
        classifier: clf,
        loss_history,
    })
}

pub(crate) fn gather_rows(features: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), features.ncols()));
    for (row, &i) in indices.iter().enumerate() {
        out.row_mut(row).assign(&features.row(i));
    }
    out
}

/// The result of one bias measurement.
#[derive(Debug, Clone)]
pub struct BiasReport {
    /// Cross-entropy risk of the best run, nats per example.
    pub risk: f64,
    /// Label entropy, nats per example.
    pub entropy: f64,
    /// `clamp(raw_bias, 0, 1)`; the maximum across the decay sweep when one
    /// was run.
    pub bias: f64,
    /// `1 - risk / entropy`, unclamped.
    pub raw_bias: f64,
    pub config: EstimatorConfig,
    /// One `(weight_decay, bias)` entry per training run.
    pub per_decay_biases: Vec<(f64, f64)>,
}

impl BiasReport {
    /// Flat `key=value` record, one entry per line.
    pub fn to_key_values(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "risk={}", fmt_float(self.risk));
        let _ = writeln!(out, "entropy={}", fmt_float(self.entropy));
        let _ = writeln!(out, "bias={}", fmt_float(self.bias));
        let _ = writeln!(out, "raw_bias={}", fmt_float(self.raw_bias));
        let _ = writeln!(out, "learning_rate={}", fmt_float(self.config.learning_rate));
        let _ = writeln!(out, "iterations={}", self.config.iterations);
        let _ = writeln!(out, "batch_size={}", self.config.batch_size);
        let _ = writeln!(out, "seed={}", self.config.seed);
        match &self.config.decay_sweep {
            Some(sweep) => {
                let joined: Vec<String> = sweep.iter().map(|d| fmt_float(*d)).collect();
                let _ = writeln!(out, "decay_sweep={}", joined.join(";"));
            }
            None => {
                let _ = writeln!(out, "weight_decay={}", fmt_float(self.config.weight_decay));
            }
        }
        out
    }

    /// The per-decay table as CSV.
    pub fn decays_csv(&self) -> String {
        let mut out = String::from("weight_decay,bias\n");
        for (decay, bias) in &self.per_decay_biases {
            out.push_str(&format!(
                "{},{}\n",
                fmt_float(*decay),
                fmt_float(*bias)
            ));
        }
        out
    }
}

/// Measure the representation bias of a dataset: train one estimator per
/// decay value (or a single one), evaluate `1 - risk / entropy` for each,
/// and report the maximum.
pub fn measure_bias(
    ds: &FeatureDataset,
    weights: Option<&ExampleWeights>,
    config: &EstimatorConfig,
) -> Result<BiasReport> {
    let entropy = weighted_entropy(ds.labels(), ds.class_count(), weights)?;
    if entropy <= 0.0 {
        return Err(Error::ZeroEntropy);
    }
    let decays: Vec<f64> = match &config.decay_sweep {
        Some(sweep) if !sweep.is_empty() => sweep.clone(),
        _ => vec![config.weight_decay],
    };

    let mut per_decay = Vec::with_capacity(decays.len());
    let mut best: Option<(f64, f64)> = None; // (raw_bias, risk)
    for &decay in &decays {
        let run_config = EstimatorConfig {
            weight_decay: decay,
            decay_sweep: None,
            ..config.clone()
        };
        let trained = train_bias_estimator(ds, weights, &run_config)?;
        let risk = weighted_risk(&trained.classifier, ds, weights)?;
        let raw = 1.0 - risk / entropy;
        per_decay.push((decay, raw.clamp(0.0, 1.0)));
        if best.is_none_or(|(b, _)| raw > b) {
            best = Some((raw, risk));
        }
    }
    let (raw_bias, risk) = best.expect("at least one decay value");

    Ok(BiasReport {
        risk,
        entropy,
        bias: raw_bias.clamp(0.0, 1.0),
        raw_bias,
        config: config.clone(),
        per_decay_biases: per_decay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(features: Array2<f64>, labels: Vec<usize>, c: usize) -> FeatureDataset {
        let ids = (0..labels.len()).map(|i| format!("e{i}")).collect();
        FeatureDataset::new(features, labels, c, ids).unwrap()
    }

    fn weights(omega: &[f64]) -> ExampleWeights {
        ExampleWeights::from_omega(omega.to_vec()).unwrap()
    }

    // inverse sigmoid, for building weight fixtures with exact w values
    fn logit(w: f64) -> f64 {
        (w / (1.0 - w)).ln()
    }

    #[test]
    fn unweighted_frequencies_are_plain_counts() {
        let p = weighted_class_frequencies(&[0, 0, 1, 1], 2, None).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn weighted_frequencies_follow_the_mass() {
        // labels {0,0,1} with w = (1,1,2) -> (0.5, 0.5), using exact logits
        let w = weights(&[logit(0.25), logit(0.25), logit(0.5)]);
        let p = weighted_class_frequencies(&[0, 0, 1], 2, Some(&w)).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn near_zero_weight_shrinks_a_class() {
        // weights proportional to (1, 1e-9, 1)
        let w = weights(&[logit(0.5), logit(0.5e-9), logit(0.5)]);
        let p = weighted_class_frequencies(&[0, 1, 2], 3, Some(&w)).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 5e-10, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn entropy_of_balanced_ten_classes_is_ln_ten() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let h = weighted_entropy(&labels, 10, None).unwrap();
        assert_abs_diff_eq!(h, 10f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_of_one_class_is_zero() {
        assert_eq!(weighted_entropy(&[2, 2, 2], 3, None).unwrap(), 0.0);
    }

    #[test]
    fn weighted_entropy_hand_case() {
        // labels {0,0,1}, w=(1,1,2): every p' is 0.5, so H = ln 2
        let w = weights(&[logit(0.25), logit(0.25), logit(0.5)]);
        let h = weighted_entropy(&[0, 0, 1], 2, Some(&w)).unwrap();
        assert_abs_diff_eq!(h, 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_with_empty_class_uses_zero_convention() {
        // labels {0,2} with class 1 empty: H = ln 2 exactly
        let h = weighted_entropy(&[0, 2], 3, None).unwrap();
        assert_abs_diff_eq!(h, 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn constant_weights_equal_unweighted_entropy() {
        let labels = [0usize, 1, 1, 2, 0, 2, 2, 1];
        // w = 0.5 throughout: scaling by a power of two is lossless, so
        // equality is exact; other constants agree to rounding
        let half = ExampleWeights::neutral(labels.len());
        let a = weighted_entropy(&labels, 3, Some(&half)).unwrap();
        let b = weighted_entropy(&labels, 3, None).unwrap();
        assert_eq!(a, b);

        let w = weights(&vec![logit(0.7); labels.len()]);
        let c = weighted_entropy(&labels, 3, Some(&w)).unwrap();
        assert_abs_diff_eq!(c, b, epsilon = 1e-12);
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let clf = SoftmaxClassifier::zeros(4, 2);
        let p = clf.forward(&array![[1.0, -2.0], [0.0, 0.0]]).unwrap();
        for v in p.iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn forward_rows_are_probability_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Array2::from_shape_fn((3, 4), |_| rng.random_range(-2.0..2.0));
        let b = Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0));
        let clf = SoftmaxClassifier::from_parts(w, b).unwrap();
        let x = Array2::from_shape_fn((20, 4), |_| rng.random_range(-3.0..3.0));
        let p = clf.forward(&x).unwrap();
        for row in p.rows() {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn forward_survives_huge_logits() {
        let clf = SoftmaxClassifier::from_parts(
            Array2::zeros((3, 1)),
            array![1000.0, 0.0, 0.0],
        )
        .unwrap();
        let p = clf.forward(&array![[1.0]]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
    }

    // independent softmax recompute, the oracle for `forward`
    #[test]
    fn forward_matches_naive_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = 4;
        let d = 3;
        let w = Array2::from_shape_fn((c, d), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(c, |_| rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_fn((6, d), |_| rng.random_range(-1.0..1.0));
        let clf = SoftmaxClassifier::from_parts(w.clone(), b.clone()).unwrap();
        let p = clf.forward(&x).unwrap();
        for i in 0..6 {
            let logits: Vec<f64> = (0..c)
                .map(|k| (0..d).map(|j| w[(k, j)] * x[(i, j)]).sum::<f64>() + b[k])
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for k in 0..c {
                assert_abs_diff_eq!(p[(i, k)], logits[k].exp() / z, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn uniform_predictor_risk_is_ln_c() {
        let ds = dataset(array![[1.0], [2.0], [3.0]], vec![0, 1, 2], 3);
        let clf = SoftmaxClassifier::zeros(3, 1);
        let risk = weighted_risk(&clf, &ds, None).unwrap();
        assert_abs_diff_eq!(risk, 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn risk_is_invariant_to_duplication_with_halved_weights() {
        let ds = dataset(array![[0.2], [0.9]], vec![0, 1], 2);
        let dup = dataset(array![[0.2], [0.9], [0.2], [0.9]], vec![0, 1, 0, 1], 2);
        let clf = SoftmaxClassifier::from_parts(array![[2.0], [-1.0]], array![0.1, -0.3]).unwrap();
        let w2 = weights(&[logit(0.8), logit(0.6)]);
        let w4 = weights(&[logit(0.4), logit(0.3), logit(0.4), logit(0.3)]);
        let a = weighted_risk(&clf, &ds, Some(&w2)).unwrap();
        let b = weighted_risk(&clf, &dup, Some(&w4)).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn weighted_risk_hand_case() {
        // 2 classes, d=1: offsets (ln 9, 0), weights 0; x irrelevant (W=0).
        // Example 1: P(correct) = 0.9. Example 2 flips the label so
        // P(correct) = 0.1? No: use W so x switches the logit instead.
        // W = [[-ln 9], [0]], b = (ln 9, 0); x=0 -> P(y=0) = 0.9,
        // x=1 -> logits equal -> P(y=0) = 0.5.
        let ln9 = 9f64.ln();
        let clf = SoftmaxClassifier::from_parts(array![[-ln9], [0.0]], array![ln9, 0.0]).unwrap();
        let ds = dataset(array![[0.0], [1.0]], vec![0, 0], 2);
        let w = weights(&[logit(0.2), logit(0.6)]); // ratio 1:3
        let risk = weighted_risk(&clf, &ds, Some(&w)).unwrap();
        let expect = -(0.25 * 0.9f64.ln() + 0.75 * 0.5f64.ln());
        assert_abs_diff_eq!(risk, expect, epsilon = 1e-12);
    }

    #[test]
    fn risk_invariant_to_weight_rescaling() {
        let ds = dataset(array![[0.1], [0.7], [0.4]], vec![0, 1, 0], 2);
        let clf = SoftmaxClassifier::from_parts(array![[1.5], [-0.5]], array![0.0, 0.2]).unwrap();
        let base = [0.9, 0.3, 0.6];
        let half: Vec<f64> = base.iter().map(|w| w / 2.0).collect();
        let wa = weights(&base.map(logit));
        let wb = weights(&half.iter().map(|&w| logit(w)).collect::<Vec<_>>());
        let a = weighted_risk(&clf, &ds, Some(&wa)).unwrap();
        let b = weighted_risk(&clf, &ds, Some(&wb)).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn zero_iterations_returns_zero_classifier() {
        let ds = dataset(array![[1.0], [0.0], [1.0], [0.0]], vec![0, 1, 0, 1], 2);
        let config = EstimatorConfig {
            iterations: 0,
            decay_sweep: None,
            ..Default::default()
        };
        let trained = train_bias_estimator(&ds, None, &config).unwrap();
        assert_eq!(trained.classifier, SoftmaxClassifier::zeros(2, 1));
        let risk = weighted_risk(&trained.classifier, &ds, None).unwrap();
        assert_abs_diff_eq!(risk, 2f64.ln(), epsilon = 1e-12);
    }

    fn blobs(n: usize, separation: f64, seed: u64) -> FeatureDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut feats = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % 2;
            let center = if y == 0 { -separation } else { separation };
            feats[(i, 0)] = center + rng.random_range(-1.0..1.0);
            feats[(i, 1)] = rng.random_range(-1.0..1.0);
            labels.push(y);
        }
        dataset(feats, labels, 2)
    }

    #[test]
    fn separable_blobs_train_to_low_risk() {
        let ds = blobs(400, 3.0, 9);
        let config = EstimatorConfig {
            learning_rate: 0.5,
            iterations: 3000,
            decay_sweep: None,
            weight_decay: 0.0,
            ..Default::default()
        };
        let trained = train_bias_estimator(&ds, None, &config).unwrap();
        let risk = weighted_risk(&trained.classifier, &ds, None).unwrap();
        assert!(risk < 0.05, "risk {risk}");
    }

    #[test]
    fn noise_features_train_to_risk_near_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 600;
        let feats = Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let ds = dataset(feats, labels, 3);
        let config = EstimatorConfig::single(0.0);
        let trained = train_bias_estimator(&ds, None, &config).unwrap();
        let risk = weighted_risk(&trained.classifier, &ds, None).unwrap();
        let entropy = weighted_entropy(ds.labels(), 3, None).unwrap();
        assert!(risk >= 0.95 * entropy, "risk {risk}, entropy {entropy}");
    }

    #[test]
    fn training_never_exceeds_the_trivial_risk() {
        let ds = blobs(300, 0.5, 33);
        let config = EstimatorConfig::single(1e-3);
        let trained = train_bias_estimator(&ds, None, &config).unwrap();
        let risk = weighted_risk(&trained.classifier, &ds, None).unwrap();
        assert!(risk <= 2f64.ln() + 1e-6, "risk {risk}");
    }

    #[test]
    fn leaked_label_bias_is_high_noise_bias_is_low() {
        let n = 300;
        let c = 3;
        let mut leak = Array2::zeros((n, c));
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        for (i, &y) in labels.iter().enumerate() {
            leak[(i, y)] = 1.0;
        }
        let ds = dataset(leak, labels.clone(), c);
        let config = EstimatorConfig {
            learning_rate: 0.5,
            iterations: 3000,
            decay_sweep: Some(vec![1e-3, 1e-5]),
            ..Default::default()
        };
        let report = measure_bias(&ds, None, &config).unwrap();
        assert!(report.bias >= 0.95, "bias {}", report.bias);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = Array2::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0));
        let ds = dataset(noise, labels, c);
        let report = measure_bias(&ds, None, &config).unwrap();
        assert!(report.bias <= 0.05, "bias {}", report.bias);
        assert!((0.0..=1.0).contains(&report.bias));
    }

    #[test]
    fn zero_entropy_is_an_explicit_error() {
        let ds = dataset(array![[1.0], [2.0]], vec![1, 1], 2);
        let err = measure_bias(&ds, None, &EstimatorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroEntropy));
    }

    #[test]
    fn report_bias_is_max_over_sweep() {
        let ds = blobs(200, 2.0, 4);
        let config = EstimatorConfig {
            iterations: 500,
            decay_sweep: Some(vec![1e-1, 1e-3]),
            ..Default::default()
        };
        let report = measure_bias(&ds, None, &config).unwrap();
        let max = report
            .per_decay_biases
            .iter()
            .map(|(_, b)| *b)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.bias, max);
        assert_eq!(report.per_decay_biases.len(), 2);
    }

    #[test]
    fn risk_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let c = rng.random_range(2..=4);
            let n = rng.random_range(c..=8);
            let d = rng.random_range(1..=5);
            let feats = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.5..1.5));
            let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
            let ds = dataset(feats, labels, c);
            let w = Array2::from_shape_fn((c, d), |_| rng.random_range(-0.5..0.5));
            let b = Array1::from_shape_fn(c, |_| rng.random_range(-0.5..0.5));
            let clf = SoftmaxClassifier::from_parts(w.clone(), b.clone()).unwrap();
            let omega: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ew = weights(&omega);

            let (gw, gb) = risk_gradient(&clf, &ds, Some(&ew)).unwrap();
            let h = 1e-5;
            for idx in 0..(c * d) {
                let (r, s) = (idx / d, idx % d);
                let mut wp = w.clone();
                wp[(r, s)] += h;
                let mut wm = w.clone();
                wm[(r, s)] -= h;
                let fp = weighted_risk(
                    &SoftmaxClassifier::from_parts(wp, b.clone()).unwrap(),
                    &ds,
                    Some(&ew),
                )
                .unwrap();
                let fm = weighted_risk(
                    &SoftmaxClassifier::from_parts(wm, b.clone()).unwrap(),
                    &ds,
                    Some(&ew),
                )
                .unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let err = (gw[(r, s)] - fd).abs();
                assert!(
                    err <= 1e-8 || err / fd.abs().max(gw[(r, s)].abs()) < 1e-4,
                    "W grad mismatch: analytic {} vs fd {}",
                    gw[(r, s)],
                    fd
                );
            }
            for k in 0..c {
                let mut bp = b.clone();
                bp[k] += h;
                let mut bm = b.clone();
                bm[k] -= h;
                let fp = weighted_risk(
                    &SoftmaxClassifier::from_parts(w.clone(), bp).unwrap(),
                    &ds,
                    Some(&ew),
                )
                .unwrap();
                let fm = weighted_risk(
                    &SoftmaxClassifier::from_parts(w.clone(), bm).unwrap(),
                    &ds,
                    Some(&ew),
                )
                .unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let err = (gb[k] - fd).abs();
                assert!(
                    err <= 1e-8 || err / fd.abs().max(gb[k].abs()) < 1e-4,
                    "b grad mismatch: analytic {} vs fd {}",
                    gb[k],
                    fd
                );
            }
        }
    }
}
