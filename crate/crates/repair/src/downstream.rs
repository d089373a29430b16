//! Downstream effect of bias: train a small classifier on (possibly
//! resampled) biased data and compare its accuracy on biased and unbiased
//! test sets.
//!
//! The downstream model is a one-hidden-layer fully connected network with
//! a ReLU nonlinearity. It is deliberately simple: exploiting a planted
//! shortcut channel only requires that the model *can* use it, and the
//! shallow network does.

use ndarray::{Array1, Array2, Axis};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bias::{argmax_rows, SoftmaxClassifier};
use crate::data::FeatureDataset;
use crate::error::{Error, Result};

/// Anything that maps feature rows to class predictions.
pub trait Predictor {
    fn predict_labels(&self, features: &Array2<f64>) -> Result<Vec<usize>>;
}

impl Predictor for SoftmaxClassifier {
    fn predict_labels(&self, features: &Array2<f64>) -> Result<Vec<usize>> {
        self.predict(features)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_units: 128,
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 128,
            seed: 0,
        }
    }
}

/// One-hidden-layer network: ReLU features, softmax readout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    w1: Array2<f64>, // hidden x d
    b1: Array1<f64>,
    w2: Array2<f64>, // classes x hidden
    b2: Array1<f64>,
}

impl MlpClassifier {
    pub fn dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.w2.nrows()
    }

    fn logits(&self, features: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        if features.ncols() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "feature width {} does not match model width {}",
                features.ncols(),
                self.dim()
            )));
        }
        let mut hidden = features.dot(&self.w1.t());
        hidden += &self.b1;
        hidden.mapv_inplace(|v| v.max(0.0));
        let mut logits = hidden.dot(&self.w2.t());
        logits += &self.b2;
        Ok((hidden, logits))
    }

    fn probabilities(&self, features: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let (hidden, mut logits) = self.logits(features)?;
        for mut row in logits.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        Ok((hidden, logits))
    }
}

impl Predictor for MlpClassifier {
    fn predict_labels(&self, features: &Array2<f64>) -> Result<Vec<usize>> {
        let (_, logits) = self.logits(features)?;
        Ok(argmax_rows(&logits))
    }
}

/// Train the downstream network with mini-batch SGD on the cross-entropy.
///
/// The hidden layer starts from a seeded uniform init, the readout from
/// zero, so an untrained model predicts the first class everywhere and a
/// fixed seed reproduces the run exactly.
pub fn train_downstream(ds: &FeatureDataset, config: &MlpConfig) -> Result<MlpClassifier> {
    if ds.len() < ds.class_count() {
        return Err(Error::InvalidInput(format!(
            "need at least as many examples ({}) as classes ({})",
            ds.len(),
            ds.class_count()
        )));
    }
    if config.hidden_units == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidInput(
            "hidden_units, batch_size and learning_rate must be positive".into(),
        ));
    }
    let d = ds.dim();
    let c = ds.class_count();
    let h = config.hidden_units;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = (6.0 / (d + h) as f64).sqrt();
    let w1 = Array2::from_shape_fn((h, d), |_| rng.random_range(-bound..bound));
    let mut model = MlpClassifier {
        w1,
        b1: Array1::zeros(h),
        w2: Array2::zeros((c, h)),
        b2: Array1::zeros(c),
    };

    let mut perm: Vec<usize> = (0..ds.len()).collect();
    let lr = config.learning_rate;
    for epoch in 0..config.epochs {
        perm.shuffle(&mut rng);
        for chunk in perm.chunks(config.batch_size) {
            let xb = crate::bias::gather_rows(ds.features(), chunk);
            let (hidden, mut probs) = model.probabilities(&xb)?;

            let mut loss = 0.0;
            for (row, &i) in chunk.iter().enumerate() {
                let y = ds.labels()[i];
                loss -= probs[(row, y)].max(crate::bias::PROB_FLOOR).ln();
                probs[(row, y)] -= 1.0;
            }
            loss /= chunk.len() as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: epoch * ds.len() + 1,
                });
            }
            probs.mapv_inplace(|v| v / chunk.len() as f64);

            // readout gradients
            let g_w2 = probs.t().dot(&hidden);
            let g_b2 = probs.sum_axis(Axis(0));
            // backpropagate through the ReLU
            let mut delta_h = probs.dot(&model.w2);
            delta_h.zip_mut_with(&hidden, |v, &a| {
                if a <= 0.0 {
                    *v = 0.0;
                }
            });
            let g_w1 = delta_h.t().dot(&xb);
            let g_b1 = delta_h.sum_axis(Axis(0));

            model.w2.zip_mut_with(&g_w2, |v, &g| *v -= lr * g);
            model.b2.zip_mut_with(&g_b2, |v, &g| *v -= lr * g);
            model.w1.zip_mut_with(&g_w1, |v, &g| *v -= lr * g);
            model.b1.zip_mut_with(&g_b1, |v, &g| *v -= lr * g);
        }
    }
    Ok(model)
}

/// Top-1 accuracy of a predictor on a dataset.
pub fn evaluate_accuracy<P: Predictor + ?Sized>(model: &P, ds: &FeatureDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty dataset".into()));
    }
    let predictions = model.predict_labels(ds.features())?;
    let correct = predictions
        .iter()
        .zip(ds.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / ds.len() as f64)
}

/// Replicate a single-channel dataset into the 3-plane layout, so a model
/// trained on tinted images can be evaluated on grayscale inputs.
pub fn replicate_channels(gray: &FeatureDataset) -> FeatureDataset {
    let d = gray.dim();
    let mut features = Array2::zeros((gray.len(), 3 * d));
    for i in 0..gray.len() {
        for c in 0..3 {
            for j in 0..d {
                features[(i, c * d + j)] = gray.features()[(i, j)];
            }
        }
    }
    FeatureDataset::new(
        features,
        gray.labels().to_vec(),
        gray.class_count(),
        gray.ids().to_vec(),
    )
    .expect("construction is valid")
}

/// One train/evaluate cycle's outcome.
#[derive(Debug, Clone)]
pub struct GeneralizationReport {
    /// Human-readable description of the training set.
    pub train_set: String,
    pub accuracy_biased_test: f64,
    pub accuracy_unbiased_test: f64,
    pub measured_train_bias: f64,
    pub config: MlpConfig,
}

/// Accuracies of models trained on randomly sampled vs. reweighted-and-
/// resampled data, across a list of resampling rates.
#[derive(Debug, Clone)]
pub struct DependencyInput {
    pub rates: Vec<f64>,
    pub acc_random: Vec<f64>,
    pub acc_repaired: Vec<f64>,
}

/// The dependency coefficient: the mean accuracy gap between models trained
/// on randomly sampled and on reweighted-resampled data.
///
/// Zero means model performance is independent of the planted shortcut;
/// e.g. a value of 0.213 says the model loses about 21 accuracy points
/// when the shortcut is resampled away.
pub fn bias_dependency(input: &DependencyInput) -> Result<f64> {
    let k = input.rates.len();
    if k == 0 {
        return Err(Error::InvalidInput("no resampling rates given".into()));
    }
    if input.acc_random.len() != k || input.acc_repaired.len() != k {
        return Err(Error::InvalidInput(format!(
            "rates ({k}), acc_random ({}) and acc_repaired ({}) must have equal lengths",
            input.acc_random.len(),
            input.acc_repaired.len()
        )));
    }
    for &a in input.acc_random.iter().chain(&input.acc_repaired) {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidInput(format!("accuracy {a} outside [0, 1]")));
        }
    }
    let total: f64 = input
        .acc_random
        .iter()
        .zip(&input.acc_repaired)
        .map(|(r, p)| r - p)
        .sum();
    Ok(total / k as f64)
}
