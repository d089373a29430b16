//! Minimax reweighting: learn per-example selection weights that minimize
//! the best achievable performance ratio of the bias estimator.
//!
//! The game value for a batch `B` is
//!
//! ```text
//!   V(w, theta) = 1 - [ sum_B w_i log P(y_i | x_i; theta) ]
//!                   / [ sum_B w_i log p'_(y_i) ]
//! ```
//!
//! where `p'_y` is the weighted class frequency computed from the same
//! batch. Both sums share the same weight normalization, so the ratio needs
//! no `1 / sum w` factors. The estimator ascends `V` (it sharpens the bias
//! estimate) while the weight pre-activations descend it, one step each per
//! mini-batch, starting from `w = 0.5` and `theta = 0`.
//!
//! The weight gradient runs through the full objective, including the
//! dependence of `p'` on `w`: with per-class masses `S_y = sum_(y_i=y) w_i`
//! and `S = sum_i w_i`, the denominator is `D = sum_y S_y log(S_y / S)` and
//! `dD/dw_k = log p'_(y_k)` exactly, so
//!
//! ```text
//!   dV/dw_k = ( N log p'_(y_k) - D log P(y_k | x_k) ) / D^2
//! ```
//!
//! with `N` the numerator sum. A correctly classified, high-confidence
//! example has `log P ~ 0`, giving `dV/dw_k > 0`: descent pushes its weight
//! down, while misclassified examples gain weight.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batching::Batches;
use crate::bias::{gather_rows, weighted_entropy, weighted_risk, SoftmaxClassifier, PROB_FLOOR};
use crate::data::files::fmt_float;
use crate::data::{sigmoid, ExampleWeights, FeatureDataset};
use crate::error::{Error, Result};

/// Default floor on the magnitude of the denominator `sum w_i log p'_i`.
pub const DEFAULT_ENTROPY_FLOOR: f64 = 1e-6;

/// Learning rate for the weight pre-activations, either as given or scaled
/// by the dataset size (the number of learnable weights grows with it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaRate {
    Absolute(f64),
    /// Effective rate is `rate * n` for a dataset of `n` examples.
    PerExample(f64),
}

impl OmegaRate {
    pub fn effective(&self, n: usize) -> f64 {
        match *self {
            OmegaRate::Absolute(r) => r,
            OmegaRate::PerExample(r) => r * n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairConfig {
    pub lr_theta: f64,
    pub lr_omega: OmegaRate,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// L2 decay on the estimator during the run (0 = none).
    pub weight_decay: f64,
    /// Batches whose denominator magnitude falls below this are skipped.
    pub entropy_floor: f64,
    /// Log a history record every this many iterations.
    pub history_stride: usize,
    /// Estimator steps per weight step.
    pub theta_steps: usize,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            lr_theta: 1e-3,
            lr_omega: OmegaRate::Absolute(10.0),
            iterations: 4000,
            batch_size: 256,
            seed: 0,
            weight_decay: 0.0,
            entropy_floor: DEFAULT_ENTROPY_FLOOR,
            history_stride: 50,
            theta_steps: 1,
        }
    }
}

impl RepairConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr_theta > 0.0) {
            return Err(Error::InvalidInput("lr_theta must be positive".into()));
        }
        if self.lr_omega.effective(1) < 0.0 {
            return Err(Error::InvalidInput("lr_omega must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.theta_steps == 0 || self.history_stride == 0 {
            return Err(Error::InvalidInput(
                "batch_size, theta_steps and history_stride must be positive".into(),
            ));
        }
        if !(self.entropy_floor > 0.0) {
            return Err(Error::InvalidInput("entropy_floor must be positive".into()));
        }
        Ok(())
    }
}

/// One logged snapshot of a run, evaluated on the full dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub step: usize,
    pub objective: f64,
    pub risk: f64,
    pub entropy: f64,
    pub mean_weight: f64,
    pub frac_above_half: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RepairHistory {
    pub records: Vec<HistoryRecord>,
    /// Mini-batches whose weight update was skipped because the surviving
    /// weight had collapsed onto one class.
    pub skipped_batches: usize,
}

impl RepairHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,V,risk,entropy,mean_w,frac_above_half\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step,
                fmt_float(r.objective),
                fmt_float(r.risk),
                fmt_float(r.entropy),
                fmt_float(r.mean_weight),
                fmt_float(r.frac_above_half),
            ));
        }
        out
    }
}

/// Result of a full solver run.
#[derive(Debug, Clone)]
pub struct RepairRun {
    pub weights: ExampleWeights,
    pub classifier: SoftmaxClassifier,
    pub history: RepairHistory,
}

// Per-batch sums shared by the objective and both gradients.
struct BatchTerms {
    /// Selection probabilities of the batch rows.
    w: Vec<f64>,
    /// Class probabilities of the batch rows.
    probs: Array2<f64>,
    /// Floored `log P(y_i | x_i)` per batch row.
    log_probs: Vec<f64>,
    /// `log p'_(y_i)` per batch row, from batch-local weighted frequencies.
    log_freqs: Vec<f64>,
    /// `sum w_i log P(y_i | x_i)`.
    numerator: f64,
    /// `sum w_i log p'_(y_i)`.
    denominator: f64,
}

fn batch_terms(
    ds: &FeatureDataset,
    omega: &[f64],
    clf: &SoftmaxClassifier,
    batch: &[usize],
) -> Result<BatchTerms> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if omega.len() != ds.len() {
        return Err(Error::InvalidInput(format!(
            "{} pre-activations for a dataset of {} examples",
            omega.len(),
            ds.len()
        )));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::InvalidInput(format!(
            "batch index {bad} out of range for dataset of {} examples",
            ds.len()
        )));
    }

    let w: Vec<f64> = batch.iter().map(|&i| sigmoid(omega[i])).collect();
    let mass: f64 = w.iter().sum();
    if mass <= 0.0 {
        return Err(Error::InvalidInput("zero batch weight mass".into()));
    }
    let mut class_mass = vec![0.0f64; ds.class_count()];
    for (&i, &wi) in batch.iter().zip(&w) {
        class_mass[ds.labels()[i]] += wi;
    }

    let xb = gather_rows(ds.features(), batch);
    let probs = clf.forward(&xb)?;
    let mut log_probs = Vec::with_capacity(batch.len());
    let mut log_freqs = Vec::with_capacity(batch.len());
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (row, &i) in batch.iter().enumerate() {
        let y = ds.labels()[i];
        let lp = probs[(row, y)].max(PROB_FLOOR).ln();
        let lf = (class_mass[y] / mass).ln();
        numerator += w[row] * lp;
        denominator += w[row] * lf;
        log_probs.push(lp);
        log_freqs.push(lf);
    }

    Ok(BatchTerms {
        w,
        probs,
        log_probs,
        log_freqs,
        numerator,
        denominator,
    })
}

fn full_index_range(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// The game value `V` on a batch (or, with `None`, on the whole dataset).
pub fn objective(
    ds: &FeatureDataset,
    omega: &ExampleWeights,
    clf: &SoftmaxClassifier,
    batch: Option<&[usize]>,
) -> Result<f64> {
    let all;
    let batch = match batch {
        Some(b) => b,
        None => {
            all = full_index_range(ds.len());
            &all
        }
    };
    let terms = batch_terms(ds, omega.omega(), clf, batch)?;
    if terms.denominator.abs() < DEFAULT_ENTROPY_FLOOR {
        return Err(Error::DegenerateBatch {
            magnitude: terms.denominator.abs(),
            floor: DEFAULT_ENTROPY_FLOOR,
        });
    }
    Ok(1.0 - terms.numerator / terms.denominator)
}

/// Gradient of the batch objective with respect to the classifier.
///
/// The denominator is free of `theta`, so this is the weighted
/// log-likelihood gradient scaled by `-1 / denominator`; ascent on it
/// descends the weighted cross-entropy.
pub fn grad_theta(
    ds: &FeatureDataset,
    omega: &ExampleWeights,
    clf: &SoftmaxClassifier,
    batch: Option<&[usize]>,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let all;
    let batch = match batch {
        Some(b) => b,
        None => {
            all = full_index_range(ds.len());
            &all
        }
    };
    let terms = batch_terms(ds, omega.omega(), clf, batch)?;
    if terms.denominator.abs() < DEFAULT_ENTROPY_FLOOR {
        return Err(Error::DegenerateBatch {
            magnitude: terms.denominator.abs(),
            floor: DEFAULT_ENTROPY_FLOOR,
        });
    }
    Ok(theta_direction(ds, batch, &terms))
}

fn theta_direction(
    ds: &FeatureDataset,
    batch: &[usize],
    terms: &BatchTerms,
) -> (Array2<f64>, Array1<f64>) {
    // d/dtheta of sum_B w_i log P: rows w_i * (onehot(y_i) - p_i)
    let mut delta = terms.probs.clone();
    for (row, &i) in batch.iter().enumerate() {
        delta[(row, ds.labels()[i])] -= 1.0;
        let w = terms.w[row];
        delta.row_mut(row).mapv_inplace(|v| -v * w);
    }
    let scale = -1.0 / terms.denominator;
    let xb = gather_rows(ds.features(), batch);
    let mut grad_w = delta.t().dot(&xb);
    grad_w.mapv_inplace(|v| v * scale);
    let mut grad_b = delta.sum_axis(Axis(0));
    grad_b.mapv_inplace(|v| v * scale);
    (grad_w, grad_b)
}

/// Gradient of the batch objective with respect to every pre-activation.
///
/// Entries for examples outside the batch are exactly zero.
pub fn grad_omega(
    ds: &FeatureDataset,
    omega: &ExampleWeights,
    clf: &SoftmaxClassifier,
    batch: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let all;
    let batch = match batch {
        Some(b) => b,
        None => {
            all = full_index_range(ds.len());
            &all
        }
    };
    let terms = batch_terms(ds, omega.omega(), clf, batch)?;
    if terms.denominator.abs() < DEFAULT_ENTROPY_FLOOR {
        return Err(Error::DegenerateBatch {
            magnitude: terms.denominator.abs(),
            floor: DEFAULT_ENTROPY_FLOOR,
        });
    }
    let mut grad = vec![0.0; ds.len()];
    omega_direction(omega.omega(), batch, &terms, &mut grad);
    Ok(grad)
}

fn omega_direction(omega: &[f64], batch: &[usize], terms: &BatchTerms, grad: &mut [f64]) {
    let d2 = terms.denominator * terms.denominator;
    for (row, &i) in batch.iter().enumerate() {
        let dv_dw =
            (terms.numerator * terms.log_freqs[row] - terms.denominator * terms.log_probs[row])
                / d2;
        let w = sigmoid(omega[i]);
        grad[i] = dv_dw * w * (1.0 - w);
    }
}

/// Rescaled batch weights `r_i = w_i / mean(w over the batch)`; their mean
/// is 1 by construction.
pub fn minibatch_rescale(omega: &ExampleWeights, batch: &[usize]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= omega.len()) {
        return Err(Error::InvalidInput(format!(
            "batch index {bad} out of range for {} weights",
            omega.len()
        )));
    }
    let w: Vec<f64> = batch.iter().map(|&i| omega.weight(i)).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    if mean <= 0.0 {
        return Err(Error::InvalidInput("zero batch weight mass".into()));
    }
    Ok(w.into_iter().map(|wi| wi / mean).collect())
}

/// Run the alternating minimax optimization.
///
/// Starts from `omega = 0` (every selection probability 0.5) and the zero
/// classifier; per mini-batch takes `theta_steps` ascent steps on the
/// estimator and one descent step on the batch's pre-activations. Batches
/// whose denominator magnitude falls below `entropy_floor` are skipped and
/// counted. Two runs with the same config are bit-identical.
pub fn repair_run(ds: &FeatureDataset, config: &RepairConfig) -> Result<RepairRun> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot run on an empty dataset".into()));
    }
    if weighted_entropy(ds.labels(), ds.class_count(), None)? <= 0.0 {
        return Err(Error::ZeroEntropy);
    }

    let n = ds.len();
    let lr_omega = config.lr_omega.effective(n);
    let mut omega = vec![0.0f64; n];
    let mut clf = SoftmaxClassifier::zeros(ds.class_count(), ds.dim());
    let mut history = RepairHistory::default();
    let mut batches = Batches::new(n, config.batch_size, ChaCha8Rng::seed_from_u64(config.seed));

    log_record(ds, &omega, &clf, 0, &mut history)?;

    for step in 0..config.iterations {
        // extra estimator sharpening on fresh batches when configured
        for _ in 1..config.theta_steps {
            let batch: Vec<usize> = batches.next().to_vec();
            let terms = batch_terms(ds, &omega, &clf, &batch)?;
            if terms.denominator.abs() < config.entropy_floor {
                history.skipped_batches += 1;
                continue;
            }
            ascend_theta(&mut clf, ds, &batch, &terms, config)?;
        }

        // the alternating update proper: one batch, one step each way
        let batch: Vec<usize> = batches.next().to_vec();
        let terms = batch_terms(ds, &omega, &clf, &batch)?;
        if terms.denominator.abs() < config.entropy_floor {
            history.skipped_batches += 1;
            log::debug!("step {step}: skipped degenerate batch");
            continue;
        }
        ascend_theta(&mut clf, ds, &batch, &terms, config)?;

        if lr_omega > 0.0 {
            let terms = batch_terms(ds, &omega, &clf, &batch)?;
            let mut grad = vec![0.0; n];
            omega_direction(&omega, &batch, &terms, &mut grad);
            for &i in &batch {
                omega[i] -= lr_omega * grad[i];
            }
        }

        let done = step + 1;
        if done % config.history_stride == 0 || done == config.iterations {
            log_record(ds, &omega, &clf, done, &mut history)?;
        }
    }

    Ok(RepairRun {
        weights: ExampleWeights::from_omega(omega)?,
        classifier: clf,
        history,
    })
}

fn ascend_theta(
    clf: &mut SoftmaxClassifier,
    ds: &FeatureDataset,
    batch: &[usize],
    terms: &BatchTerms,
    config: &RepairConfig,
) -> Result<()> {
    let (grad_w, grad_b) = theta_direction(ds, batch, terms);
    let lr = config.lr_theta;
    let decay = lr * config.weight_decay;
    let mut w_new = clf.weights().clone();
    w_new.zip_mut_with(&grad_w, |v, &g| *v += lr * g);
    if config.weight_decay > 0.0 {
        w_new.mapv_inplace(|v| v - decay * v);
    }
    let mut b_new = clf.offsets().clone();
    b_new.zip_mut_with(&grad_b, |v, &g| *v += lr * g);
    *clf = SoftmaxClassifier::from_parts(w_new, b_new)?;
    Ok(())
}

fn log_record(
    ds: &FeatureDataset,
    omega: &[f64],
    clf: &SoftmaxClassifier,
    step: usize,
    history: &mut RepairHistory,
) -> Result<()> {
    let weights = ExampleWeights::from_omega(omega.to_vec()).map_err(|_| {
        Error::NonFiniteObjective {
            step,
            history: Box::new(history.clone()),
        }
    })?;
    let objective = match objective(ds, &weights, clf, None) {
        Ok(v) if v.is_finite() => v,
        _ => {
            return Err(Error::NonFiniteObjective {
                step,
                history: Box::new(history.clone()),
            })
        }
    };
    let risk = weighted_risk(clf, ds, Some(&weights))?;
    let entropy = weighted_entropy(ds.labels(), ds.class_count(), Some(&weights))?;
    let w = weights.weights();
    let mean_weight = w.iter().sum::<f64>() / w.len() as f64;
    let frac_above_half = w.iter().filter(|&&v| v > 0.5).count() as f64 / w.len() as f64;
    history.records.push(HistoryRecord {
        step,
        objective,
        risk,
        entropy,
        mean_weight,
        frac_above_half,
    });
    Ok(())
}
