//! Dataset model, file formats and subset views shared by every other module.

mod idx;
pub(crate) mod files;

pub use files::{
    load_features_csv, load_features_csv_with_classes, load_weights_csv, load_weights_for,
    save_features_csv, save_weights_csv,
};
pub use idx::load_idx;

use ndarray::Array2;

use crate::error::{Error, Result};

/// A labeled feature dataset: `n` examples of `d` real-valued features each,
/// with integer class labels in `[0, class_count)` and unique string ids.
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
    ids: Vec<String>,
}

impl FeatureDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
        ids: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "feature rows ({n}) and labels ({}) disagree",
                labels.len()
            )));
        }
        if ids.len() != n {
            return Err(Error::InvalidInput(format!(
                "feature rows ({n}) and ids ({}) disagree",
                ids.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::InvalidInput("class_count must be positive".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidInput(
                "feature dimension must be at least 1".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for class_count {class_count}"
            )));
        }
        {
            let mut seen = std::collections::HashSet::with_capacity(n);
            for id in &ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::InvalidInput(format!("duplicate example id `{id}`")));
                }
            }
        }
        let ds = FeatureDataset {
            features,
            labels,
            class_count,
            ids,
        };
        let empty = ds.empty_classes();
        if !empty.is_empty() {
            log::warn!("dataset has empty classes: {empty:?}");
        }
        Ok(ds)
    }

    /// Number of examples.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimensionality `d`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Number of examples per class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.class_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Classes with no examples. Permitted, but callers may want to know.
    pub fn empty_classes(&self) -> Vec<usize> {
        self.class_sizes()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(y, _)| y)
            .collect()
    }

    /// Copy of the dataset with every id prefixed, e.g. to tag its origin
    /// split before combining.
    pub fn with_id_prefix(&self, prefix: &str) -> FeatureDataset {
        FeatureDataset {
            features: self.features.clone(),
            labels: self.labels.clone(),
            class_count: self.class_count,
            ids: self.ids.iter().map(|id| format!("{prefix}{id}")).collect(),
        }
    }

    /// Stack two datasets with identical width and class count.
    pub fn concat(a: &FeatureDataset, b: &FeatureDataset) -> Result<FeatureDataset> {
        if a.dim() != b.dim() {
            return Err(Error::InvalidInput(format!(
                "cannot concat datasets of width {} and {}",
                a.dim(),
                b.dim()
            )));
        }
        if a.class_count != b.class_count {
            return Err(Error::InvalidInput(format!(
                "cannot concat datasets with class counts {} and {}",
                a.class_count, b.class_count
            )));
        }
        let features = ndarray::concatenate(
            ndarray::Axis(0),
            &[a.features.view(), b.features.view()],
        )
        .expect("widths checked above");
        let labels = a.labels.iter().chain(&b.labels).copied().collect();
        let ids = a.ids.iter().chain(&b.ids).cloned().collect();
        FeatureDataset::new(features, labels, a.class_count, ids)
    }

    /// Restrict the dataset to the given row indices, preserving order.
    pub fn select(&self, indices: &[usize]) -> Result<FeatureDataset> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!(
                "retained index {bad} out of range for dataset of {n} examples"
            )));
        }
        let d = self.dim();
        let mut features = Array2::zeros((indices.len(), d));
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            features.row_mut(row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
            ids.push(self.ids[i].clone());
        }
        FeatureDataset::new(features, labels, self.class_count, ids)
    }

    /// Restrict the dataset to a plan's retained rows. Class count is kept
    /// even when resampling empties a class.
    pub fn subset(&self, plan: &ResamplePlan) -> Result<FeatureDataset> {
        self.select(&plan.retained)
    }

    /// View of a contiguous block of feature columns as its own dataset.
    pub fn select_columns(&self, range: std::ops::Range<usize>) -> Result<FeatureDataset> {
        if range.end > self.dim() || range.is_empty() {
            return Err(Error::InvalidInput(format!(
                "column range {range:?} invalid for width {}",
                self.dim()
            )));
        }
        let features = self
            .features
            .slice(ndarray::s![.., range.start..range.end])
            .to_owned();
        FeatureDataset::new(features, self.labels.clone(), self.class_count, self.ids.clone())
    }
}

/// Numerically stable logistic function, clamped away from exactly 0 and 1
/// so that selection probabilities stay strictly inside the unit interval
/// even where `exp` saturates.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(1e-300, 1.0 - f64::EPSILON / 2.0)
}

/// Per-example selection weights, stored as pre-activations.
///
/// The selection probability of example `i` is `w_i = sigmoid(omega_i)`,
/// strictly inside `(0, 1)` for any finite pre-activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleWeights {
    omega: Vec<f64>,
}

impl ExampleWeights {
    /// All pre-activations zero, i.e. every selection probability 0.5.
    pub fn neutral(n: usize) -> Self {
        ExampleWeights {
            omega: vec![0.0; n],
        }
    }

    pub fn from_omega(omega: Vec<f64>) -> Result<Self> {
        if let Some(bad) = omega.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite pre-activation at index {bad}"
            )));
        }
        Ok(ExampleWeights { omega })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Selection probability of one example.
    pub fn weight(&self, i: usize) -> f64 {
        sigmoid(self.omega[i])
    }

    /// All selection probabilities.
    pub fn weights(&self) -> Vec<f64> {
        self.omega.iter().map(|&o| sigmoid(o)).collect()
    }
}

/// The five ways of turning weights into a retained subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Keep every example with `w_i >= t`.
    Threshold,
    /// Keep the `round(p n)` examples of largest weight.
    Rank,
    /// Keep the `round(p n_y)` examples of largest weight within each class.
    ClsRank,
    /// Keep each example independently with probability `w_i`.
    Sample,
    /// Keep `round(p n)` examples uniformly at random, ignoring weights.
    Uniform,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Threshold,
        Strategy::Rank,
        Strategy::ClsRank,
        Strategy::Sample,
        Strategy::Uniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Threshold => "threshold",
            Strategy::Rank => "rank",
            Strategy::ClsRank => "cls_rank",
            Strategy::Sample => "sample",
            Strategy::Uniform => "uniform",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Strategy::Threshold),
            "rank" => Ok(Strategy::Rank),
            "cls_rank" => Ok(Strategy::ClsRank),
            "sample" => Ok(Strategy::Sample),
            "uniform" => Ok(Strategy::Uniform),
            other => Err(Error::InvalidInput(format!(
                "unknown strategy `{other}` (expected threshold|rank|cls_rank|sample|uniform)"
            ))),
        }
    }
}

/// A concrete resampling decision: the strategy, its parameters, the seed
/// used for any random draws, and the resulting retained index set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    pub strategy: Strategy,
    pub threshold: f64,
    pub keep_fraction: f64,
    pub seed: u64,
    /// Sorted, unique indices into the dataset the plan was built for.
    pub retained: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> FeatureDataset {
        FeatureDataset::new(
            array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]],
            vec![0, 1, 1],
            2,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap()
    }

    #[test]
    fn rejects_label_out_of_range() {
        let err = FeatureDataset::new(
            array![[0.0], [1.0]],
            vec![0, 2],
            2,
            vec!["a".into(), "b".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("label 2"));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = FeatureDataset::new(
            array![[0.0], [1.0]],
            vec![0, 1],
            2,
            vec!["a".into(), "a".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate example id"));
    }

    #[test]
    fn empty_classes_are_reported() {
        let ds = FeatureDataset::new(
            array![[0.0], [1.0]],
            vec![0, 2],
            3,
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(ds.empty_classes(), vec![1]);
    }

    #[test]
    fn select_preserves_order_and_ids() {
        let ds = tiny();
        let sub = ds.select(&[0, 2]).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.ids(), &["a".to_string(), "c".to_string()]);
        assert_eq!(sub.labels(), &[0, 1]);
        assert_eq!(sub.class_count(), 2);
    }

    #[test]
    fn select_rejects_out_of_range() {
        assert!(tiny().select(&[3]).is_err());
    }

    #[test]
    fn subset_full_is_identity_and_idempotent() {
        let ds = tiny();
        let plan = ResamplePlan {
            strategy: Strategy::Uniform,
            threshold: 0.5,
            keep_fraction: 1.0,
            seed: 0,
            retained: vec![0, 1, 2],
        };
        let once = ds.subset(&plan).unwrap();
        assert_eq!(once, ds);
        let twice = once.subset(&plan).unwrap();
        assert_eq!(twice, ds);
    }

    #[test]
    fn subset_empty_plan() {
        let plan = ResamplePlan {
            strategy: Strategy::Threshold,
            threshold: 2.0,
            keep_fraction: 1.0,
            seed: 0,
            retained: vec![],
        };
        let sub = tiny().subset(&plan).unwrap();
        assert_eq!(sub.len(), 0);
        assert_eq!(sub.class_count(), 2);
    }

    #[test]
    fn subset_even_rows_of_ten() {
        let feats = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let ds = FeatureDataset::new(
            feats,
            vec![0; 10],
            1,
            (0..10).map(|i| format!("r{i}")).collect(),
        )
        .unwrap();
        let plan = ResamplePlan {
            strategy: Strategy::Rank,
            threshold: 0.5,
            keep_fraction: 0.5,
            seed: 0,
            retained: vec![0, 2, 4, 6, 8],
        };
        let sub = ds.subset(&plan).unwrap();
        assert_eq!(sub.len(), 5);
        assert_eq!(
            sub.ids(),
            &["r0", "r2", "r4", "r6", "r8"].map(String::from)
        );
    }

    #[test]
    fn concat_tags_travel_in_ids() {
        let a = tiny().with_id_prefix("train:");
        let b = tiny().with_id_prefix("test:");
        let both = FeatureDataset::concat(&a, &b).unwrap();
        assert_eq!(both.len(), 6);
        assert!(both.ids()[0].starts_with("train:"));
        assert!(both.ids()[3].starts_with("test:"));
    }

    #[test]
    fn sigmoid_is_strictly_inside_unit_interval() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) > 0.0);
        assert!(sigmoid(800.0) < 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weights_are_strictly_inside_unit_interval() {
        let w = ExampleWeights::from_omega(vec![-40.0, 0.0, 40.0]).unwrap();
        for v in w.weights() {
            assert!(v > 0.0 && v < 1.0);
        }
        assert_eq!(w.weight(1), 0.5);
    }
}
