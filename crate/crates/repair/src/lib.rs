//! Measure the representation bias of labeled feature datasets and remove
//! it by learning per-example resampling weights.
//!
//! A dataset is *biased* towards a feature representation when a classifier
//! over those features alone solves it well. The bias is quantified as the
//! mutual information between features and labels, normalized by label
//! entropy into `[0, 1]` ([`bias::measure_bias`]). Removing the bias is an
//! adversarial game ([`solver::repair_run`]): per-example selection weights
//! descend the normalized performance of the estimator while the estimator
//! keeps re-sharpening it. Thresholding, ranking or sampling the learned
//! weights ([`resample::resample`]) then materializes a debiased subset,
//! and [`downstream`] quantifies what the removal buys in generalization.
//!
//! The corpus machinery lives in [`data`] (IDX images, feature CSVs, weight
//! files), controlled bias injection in [`biasgen`], and ready-made
//! experiment pipelines in [`experiment`].
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --release -p repair --example measure_bias
//! cargo run --release -p repair --example repair_weights
//! cargo run --release -p repair --example resample_strategies
//! cargo run --release -p repair --example colored_mnist
//! cargo run --release -p repair --example downstream_generalization
//! cargo run --release -p repair --example repair_pipeline
//! ```
//!
//! The same capabilities are scriptable through the `repair` binary; see
//! the README.

mod batching;

pub mod bias;
pub mod biasgen;
pub mod cli;
pub mod data;
pub mod downstream;
pub mod error;
pub mod experiment;
pub mod resample;
pub mod solver;

pub use bias::{
    measure_bias, train_bias_estimator, weighted_class_frequencies, weighted_entropy,
    weighted_risk, BiasReport, EstimatorConfig, SoftmaxClassifier,
};
pub use biasgen::{
    colorize, color_feature, make_color_means, planted_bias_blobs, synthetic_shapes, ColorScheme,
    ColorSpec,
};
pub use data::{
    load_features_csv, load_idx, load_weights_csv, save_features_csv, save_weights_csv,
    ExampleWeights, FeatureDataset, ResamplePlan, Strategy,
};
pub use downstream::{
    bias_dependency, evaluate_accuracy, replicate_channels, train_downstream, DependencyInput,
    GeneralizationReport, MlpClassifier, MlpConfig, Predictor,
};
pub use error::{Error, Result};
pub use resample::{resample, ResampleParams};
pub use solver::{minibatch_rescale, objective, repair_run, OmegaRate, RepairConfig, RepairRun};
