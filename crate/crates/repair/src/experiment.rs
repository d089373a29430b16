//! Reproducible experiment pipelines over color-tinted corpora: bias as a
//! function of tint spread, bias after resampling, and downstream
//! generalization. Each produces a plot-ready CSV with one row per grid
//! cell, is resumable (completed cells found in the output are kept), and
//! reproduces byte-identical files for identical inputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::bias::{measure_bias, EstimatorConfig};
use crate::biasgen::{color_feature, colorize, make_color_means, ColorScheme, ColorSpec};
use crate::data::files::fmt_float;
use crate::data::{load_idx, ExampleWeights, FeatureDataset, Strategy};
use crate::downstream::{
    evaluate_accuracy, replicate_channels, train_downstream, MlpConfig,
};
use crate::error::{Error, Result};
use crate::resample::{resample, ResampleParams};
use crate::solver::{repair_run, RepairConfig};

/// Parameters of the synthetic grayscale corpus used when no image files
/// are supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub class_count: usize,
    pub height: usize,
    pub width: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_train: 6000,
            n_test: 1500,
            class_count: 20,
            height: 6,
            width: 6,
            noise_std: 0.4,
            seed: 7,
        }
    }
}

/// A grayscale train/test pair feeding the experiment pipelines.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub gray_train: FeatureDataset,
    pub gray_test: FeatureDataset,
}

impl ExperimentData {
    /// One corpus, split by row so both splits share the class templates.
    pub fn synthetic(spec: &SyntheticSpec) -> ExperimentData {
        let all = crate::biasgen::synthetic_shapes(
            spec.n_train + spec.n_test,
            spec.class_count,
            spec.height,
            spec.width,
            spec.noise_std,
            spec.seed,
        );
        let train_rows: Vec<usize> = (0..spec.n_train).collect();
        let test_rows: Vec<usize> = (spec.n_train..spec.n_train + spec.n_test).collect();
        ExperimentData {
            gray_train: all.select(&train_rows).expect("rows in range"),
            gray_test: all.select(&test_rows).expect("rows in range"),
        }
    }

    pub fn from_idx(
        train_images: &Path,
        train_labels: &Path,
        test_images: &Path,
        test_labels: &Path,
        limit: Option<usize>,
    ) -> Result<ExperimentData> {
        let mut gray_train = load_idx(train_images, train_labels)?;
        let mut gray_test = load_idx(test_images, test_labels)?;
        if let Some(k) = limit {
            if k == 0 {
                return Err(Error::InvalidInput("limit must be positive".into()));
            }
            let take_train: Vec<usize> = (0..gray_train.len().min(k)).collect();
            let take_test: Vec<usize> = (0..gray_test.len().min(k)).collect();
            gray_train = gray_train.select(&take_train)?;
            gray_test = gray_test.select(&take_test)?;
        }
        Ok(ExperimentData {
            gray_train,
            gray_test,
        })
    }
}

/// Shared knobs of the experiment pipelines.
#[derive(Debug, Clone)]
pub struct ExperimentContext {
    pub scheme: ColorScheme,
    /// Bias-meter configuration applied to every measurement.
    pub estimator: EstimatorConfig,
    /// Solver passes over the combined splits, in epoch units.
    pub repair_epochs: usize,
    /// Template for solver runs; `iterations` is derived from
    /// `repair_epochs` and the seed from the grid cell.
    pub repair: RepairConfig,
    pub mlp: MlpConfig,
    /// Worker threads for independent grid cells.
    pub jobs: usize,
}

impl Default for ExperimentContext {
    fn default() -> Self {
        ExperimentContext {
            scheme: ColorScheme::Random,
            // one fixed meter for every color-bias measurement: a budget
            // the tint features need, applied identically to every subset
            estimator: EstimatorConfig {
                learning_rate: 0.3,
                iterations: 2000,
                batch_size: 256,
                weight_decay: 1e-4,
                seed: 0,
                decay_sweep: None,
            },
            repair_epochs: 200,
            // the published recipe in tint units: mean-RGB features carry a
            // fixed mean intensity of 0.5, so the trajectory-equivalent
            // estimator rate is 1e-3 / 0.5^2; the weight rate is unscaled
            repair: RepairConfig {
                lr_theta: 4e-3,
                batch_size: 64,
                theta_steps: 40,
                ..RepairConfig::default()
            },
            mlp: MlpConfig {
                epochs: 40,
                ..MlpConfig::default()
            },
            jobs: 1,
        }
    }
}

/// Split-mix step deriving independent sub-seeds from a cell seed.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn epochs_to_iterations(epochs: usize, n: usize, batch: usize) -> usize {
    epochs * (n / batch.min(n)).max(1)
}

/// Tint both splits with one set of class means but independent draws.
fn colored_pair(
    data: &ExperimentData,
    scheme: ColorScheme,
    sigma: f64,
    seed: u64,
) -> Result<(FeatureDataset, FeatureDataset)> {
    let means = make_color_means(data.gray_train.class_count(), derive_seed(seed, 1), scheme);
    let train_spec = ColorSpec::new(means.clone(), sigma, derive_seed(seed, 2))?;
    let test_spec = ColorSpec::new(means, sigma, derive_seed(seed, 3))?;
    Ok((
        colorize(&data.gray_train, &train_spec)?,
        colorize(&data.gray_test, &test_spec)?,
    ))
}

/// Combined splits with origin tags in the ids.
fn combine_tagged(train: &FeatureDataset, test: &FeatureDataset) -> Result<FeatureDataset> {
    FeatureDataset::concat(
        &train.with_id_prefix("train:"),
        &test.with_id_prefix("test:"),
    )
}

// ---------------------------------------------------------------------------
// bias-vs-sigma
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaBiasRow {
    pub sigma: f64,
    pub seed: u64,
    pub bias: f64,
}

pub const SIGMA_BIAS_HEADER: &str = "sigma,seed,bias";

impl SigmaBiasRow {
    fn key(sigma: f64, seed: u64) -> String {
        format!("{},{}", fmt_float(sigma), seed)
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{}",
            fmt_float(self.sigma),
            self.seed,
            fmt_float(self.bias)
        )
    }

    fn parse(line: &str) -> Option<SigmaBiasRow> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return None;
        }
        Some(SigmaBiasRow {
            sigma: cells[0].parse().ok()?,
            seed: cells[1].parse().ok()?,
            bias: cells[2].parse().ok()?,
        })
    }
}

/// Measure the color bias of the tinted test split across a grid of tint
/// spreads. One row per `(sigma, seed)` cell.
pub fn run_bias_vs_sigma(
    data: &ExperimentData,
    sigmas: &[f64],
    seeds: &[u64],
    ctx: &ExperimentContext,
    out: &Path,
) -> Result<Vec<SigmaBiasRow>> {
    if sigmas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput("empty experiment grid".into()));
    }
    let grid: Vec<(f64, u64)> = sigmas
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let existing = read_rows(out, SIGMA_BIAS_HEADER, |line| {
        SigmaBiasRow::parse(line).map(|r| (SigmaBiasRow::key(r.sigma, r.seed), line.to_string()))
    })?;

    let rows = compute_cells(ctx.jobs, &grid, |&(sigma, seed)| {
        let key = SigmaBiasRow::key(sigma, seed);
        if let Some(row) = existing.get(&key) {
            return Ok((key, row.clone()));
        }
        let (_, colored_test) = colored_pair(data, ctx.scheme, sigma, seed)?;
        let features = color_feature(&colored_test)?;
        let estimator = ctx.estimator.clone().with_seed(derive_seed(seed, 10));
        let report = measure_bias(&features, None, &estimator)?;
        let row = SigmaBiasRow {
            sigma,
            seed,
            bias: report.bias,
        };
        Ok((key, row.to_csv()))
    })?;

    write_rows(out, SIGMA_BIAS_HEADER, &rows)?;
    Ok(rows
        .iter()
        .filter_map(|(_, line)| SigmaBiasRow::parse(line))
        .collect())
}

// ---------------------------------------------------------------------------
// repair-vs-uniform
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleBiasRow {
    pub sigma: f64,
    pub strategy: Strategy,
    pub rate: f64,
    pub seed: u64,
    pub bias_before: f64,
    pub bias_after: f64,
}

pub const RESAMPLE_BIAS_HEADER: &str = "sigma,strategy,rate,seed,bias_before,bias_after";

impl ResampleBiasRow {
    fn key(sigma: f64, strategy: Strategy, rate: f64, seed: u64) -> String {
        format!(
            "{},{},{},{}",
            fmt_float(sigma),
            strategy,
            fmt_float(rate),
            seed
        )
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            fmt_float(self.sigma),
            self.strategy,
            fmt_float(self.rate),
            self.seed,
            fmt_float(self.bias_before),
            fmt_float(self.bias_after)
        )
    }

    fn parse(line: &str) -> Option<ResampleBiasRow> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return None;
        }
        Some(ResampleBiasRow {
            sigma: cells[0].parse().ok()?,
            strategy: cells[1].parse().ok()?,
            rate: cells[2].parse().ok()?,
            seed: cells[3].parse().ok()?,
            bias_before: cells[4].parse().ok()?,
            bias_after: cells[5].parse().ok()?,
        })
    }
}

/// Learn weights on the combined tinted splits, resample under each
/// strategy, and measure the color bias before and after. One row per
/// `(sigma, strategy, rate, seed)` cell.
pub fn run_repair_vs_uniform(
    data: &ExperimentData,
    sigmas: &[f64],
    strategies: &[Strategy],
    rate: f64,
    seeds: &[u64],
    ctx: &ExperimentContext,
    out: &Path,
) -> Result<Vec<ResampleBiasRow>> {
    if sigmas.is_empty() || strategies.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput("empty experiment grid".into()));
    }
    let existing = read_rows(out, RESAMPLE_BIAS_HEADER, |line| {
        ResampleBiasRow::parse(line)
            .map(|r| (ResampleBiasRow::key(r.sigma, r.strategy, r.rate, r.seed), line.to_string()))
    })?;

    // one solver run serves every strategy of a (sigma, seed) cell
    let grid: Vec<(f64, u64)> = sigmas
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();

    let nested = compute_cells(ctx.jobs, &grid, |&(sigma, seed)| {
        let missing: Vec<Strategy> = strategies
            .iter()
            .copied()
            .filter(|&st| !existing.contains_key(&ResampleBiasRow::key(sigma, st, rate, seed)))
            .collect();
        let mut rows: Vec<(String, String)> = strategies
            .iter()
            .filter_map(|&st| {
                let key = ResampleBiasRow::key(sigma, st, rate, seed);
                existing.get(&key).map(|line| (key, line.clone()))
            })
            .collect();
        if missing.is_empty() {
            return Ok(rows);
        }

        let (colored_train, colored_test) = colored_pair(data, ctx.scheme, sigma, seed)?;
        let combined = combine_tagged(&colored_train, &colored_test)?;
        let features = color_feature(&combined)?;
        let estimator = ctx.estimator.clone().with_seed(derive_seed(seed, 10));
        let bias_before = measure_bias(&features, None, &estimator)?.bias;

        let needs_weights = missing.iter().any(|&st| st != Strategy::Uniform);
        let weights = if needs_weights {
            let config = RepairConfig {
                iterations: epochs_to_iterations(
                    ctx.repair_epochs,
                    features.len(),
                    ctx.repair.batch_size,
                ),
                seed: derive_seed(seed, 20),
                ..ctx.repair.clone()
            };
            repair_run(&features, &config)?.weights
        } else {
            ExampleWeights::neutral(features.len())
        };

        for st in missing {
            let plan = resample(
                &weights,
                features.labels(),
                st,
                &ResampleParams {
                    threshold: 0.5,
                    keep_fraction: rate,
                },
                derive_seed(seed, 30 + st as u64),
            )?;
            let subset = features.subset(&plan)?;
            let bias_after = measure_bias(&subset, None, &estimator)?.bias;
            let row = ResampleBiasRow {
                sigma,
                strategy: st,
                rate,
                seed,
                bias_before,
                bias_after,
            };
            rows.push((
                ResampleBiasRow::key(sigma, st, rate, seed),
                row.to_csv(),
            ));
        }
        Ok(rows)
    })?;

    // canonical order: sigma, strategy, rate, seed
    let mut by_key: BTreeMap<String, String> = BTreeMap::new();
    for rows in nested {
        for (key, row) in rows {
            by_key.insert(key, row);
        }
    }
    let mut ordered = Vec::new();
    for &sigma in sigmas {
        for &st in strategies {
            for &seed in seeds {
                let key = ResampleBiasRow::key(sigma, st, rate, seed);
                if let Some(row) = by_key.get(&key) {
                    ordered.push((key.clone(), row.clone()));
                }
            }
        }
    }
    write_rows(out, RESAMPLE_BIAS_HEADER, &ordered)?;
    Ok(ordered
        .iter()
        .filter_map(|(_, line)| ResampleBiasRow::parse(line))
        .collect())
}

// ---------------------------------------------------------------------------
// generalization
// ---------------------------------------------------------------------------

/// How the downstream training set is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    /// Train on the full tinted training split.
    Full,
    /// Resample the combined splits with this strategy, keep the training
    /// rows of the retained set.
    Resampled(Strategy),
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Selection::Full => f.write_str("none"),
            Selection::Resampled(s) => write!(f, "{s}"),
        }
    }
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            Ok(Selection::Full)
        } else {
            Ok(Selection::Resampled(s.parse()?))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationRow {
    pub sigma: f64,
    pub selection: Selection,
    pub rate: f64,
    pub seed: u64,
    pub train_bias: f64,
    pub acc_biased: f64,
    pub acc_unbiased: f64,
}

pub const GENERALIZATION_HEADER: &str =
    "sigma,strategy,rate,seed,train_bias,acc_biased,acc_unbiased";

impl GeneralizationRow {
    fn key(sigma: f64, selection: Selection, rate: f64, seed: u64) -> String {
        format!(
            "{},{},{},{}",
            fmt_float(sigma),
            selection,
            fmt_float(rate),
            seed
        )
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_float(self.sigma),
            self.selection,
            fmt_float(self.rate),
            self.seed,
            fmt_float(self.train_bias),
            fmt_float(self.acc_biased),
            fmt_float(self.acc_unbiased)
        )
    }

    fn parse(line: &str) -> Option<GeneralizationRow> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return None;
        }
        Some(GeneralizationRow {
            sigma: cells[0].parse().ok()?,
            selection: cells[1].parse().ok()?,
            rate: cells[2].parse().ok()?,
            seed: cells[3].parse().ok()?,
            train_bias: cells[4].parse().ok()?,
            acc_biased: cells[5].parse().ok()?,
            acc_unbiased: cells[6].parse().ok()?,
        })
    }
}

/// Train the downstream model on (possibly resampled) tinted data and
/// evaluate on the tinted and grayscale test sets. One row per
/// `(sigma, selection, rate, seed)` cell.
pub fn run_generalization(
    data: &ExperimentData,
    sigmas: &[f64],
    selections: &[Selection],
    rate: f64,
    seeds: &[u64],
    ctx: &ExperimentContext,
    out: &Path,
) -> Result<Vec<GeneralizationRow>> {
    if sigmas.is_empty() || selections.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput("empty experiment grid".into()));
    }
    let existing = read_rows(out, GENERALIZATION_HEADER, |line| {
        GeneralizationRow::parse(line).map(|r| {
            (
                GeneralizationRow::key(r.sigma, r.selection, r.rate, r.seed),
                line.to_string(),
            )
        })
    })?;

    let grid: Vec<(f64, Selection, u64)> = sigmas
        .iter()
        .flat_map(|&s| {
            selections
                .iter()
                .flat_map(move |&sel| seeds.iter().map(move |&seed| (s, sel, seed)))
        })
        .collect();

    let rows = compute_cells(ctx.jobs, &grid, |&(sigma, selection, seed)| {
        let key = GeneralizationRow::key(sigma, selection, rate, seed);
        if let Some(row) = existing.get(&key) {
            return Ok((key, row.clone()));
        }

        let (colored_train, colored_test) = colored_pair(data, ctx.scheme, sigma, seed)?;
        let estimator = ctx.estimator.clone().with_seed(derive_seed(seed, 10));

        let train_ds = match selection {
            Selection::Full => colored_train.clone(),
            Selection::Resampled(strategy) => {
                let combined = combine_tagged(&colored_train, &colored_test)?;
                let features = color_feature(&combined)?;
                let weights = if strategy == Strategy::Uniform {
                    ExampleWeights::neutral(features.len())
                } else {
                    let config = RepairConfig {
                        iterations: epochs_to_iterations(
                            ctx.repair_epochs,
                            features.len(),
                            ctx.repair.batch_size,
                        ),
                        seed: derive_seed(seed, 20),
                        ..ctx.repair.clone()
                    };
                    repair_run(&features, &config)?.weights
                };
                let plan = resample(
                    &weights,
                    features.labels(),
                    strategy,
                    &ResampleParams {
                        threshold: 0.5,
                        keep_fraction: rate,
                    },
                    derive_seed(seed, 30 + strategy as u64),
                )?;
                let retained = combined.subset(&plan)?;
                let train_rows: Vec<usize> = (0..retained.len())
                    .filter(|&i| retained.ids()[i].starts_with("train:"))
                    .collect();
                retained.select(&train_rows)?
            }
        };

        let train_bias = measure_bias(&color_feature(&train_ds)?, None, &estimator)?.bias;
        let mlp = MlpConfig {
            seed: derive_seed(seed, 40),
            ..ctx.mlp.clone()
        };
        let model = train_downstream(&train_ds, &mlp)?;
        let acc_biased = evaluate_accuracy(&model, &colored_test)?;
        let acc_unbiased = evaluate_accuracy(&model, &replicate_channels(&data.gray_test))?;

        let row = GeneralizationRow {
            sigma,
            selection,
            rate,
            seed,
            train_bias,
            acc_biased,
            acc_unbiased,
        };
        Ok((key, row.to_csv()))
    })?;

    write_rows(out, GENERALIZATION_HEADER, &rows)?;
    Ok(rows
        .iter()
        .filter_map(|(_, line)| GeneralizationRow::parse(line))
        .collect())
}

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

/// Read completed rows from a previous run. Lines that fail to parse are
/// dropped, so corrupt cells are recomputed.
fn read_rows(
    path: &Path,
    header: &str,
    parse: impl Fn(&str) -> Option<(String, String)>,
) -> Result<BTreeMap<String, String>> {
    let mut rows = BTreeMap::new();
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(rows),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        // wrong or corrupt header: recompute everything
        return Ok(rows);
    }
    for line in lines {
        if let Some((key, row)) = parse(line) {
            rows.insert(key, row);
        }
    }
    Ok(rows)
}

/// Write the full table atomically, rows in the given order.
fn write_rows(path: &Path, header: &str, rows: &[(String, String)]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "{header}").map_err(|e| Error::io(&tmp, e))?;
        for (_, row) in rows {
            writeln!(out, "{row}").map_err(|e| Error::io(&tmp, e))?;
        }
        out.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Run one closure per grid cell, possibly in parallel, preserving the
/// grid order of the results.
fn compute_cells<C: Sync, T: Send>(
    jobs: usize,
    grid: &[C],
    cell: impl Fn(&C) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if jobs <= 1 {
        return grid.iter().map(cell).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        grid.par_iter().map(&cell).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_data() -> ExperimentData {
        ExperimentData::synthetic(&SyntheticSpec {
            n_train: 300,
            n_test: 120,
            class_count: 4,
            height: 4,
            width: 4,
            noise_std: 0.25,
            seed: 5,
        })
    }

    fn fast_ctx() -> ExperimentContext {
        ExperimentContext {
            estimator: EstimatorConfig {
                learning_rate: 0.5,
                iterations: 600,
                batch_size: 128,
                weight_decay: 1e-4,
                seed: 0,
                decay_sweep: None,
            },
            repair_epochs: 40,
            mlp: MlpConfig {
                hidden_units: 16,
                epochs: 4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn bias_vs_sigma_writes_one_row_per_cell() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bias.csv");
        let rows = run_bias_vs_sigma(
            &small_data(),
            &[0.02, 0.5],
            &[1],
            &fast_ctx(),
            &out,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("sigma,seed,bias\n"));
        assert_eq!(text.lines().count(), 3);
        assert!(rows[0].bias > rows[1].bias, "{rows:?}");
    }

    #[test]
    fn reruns_are_byte_identical_and_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bias.csv");
        let ctx = fast_ctx();
        let data = small_data();
        run_bias_vs_sigma(&data, &[0.05, 0.3], &[1, 2], &ctx, &out).unwrap();
        let first = std::fs::read_to_string(&out).unwrap();

        // drop one row and corrupt another; the runner must restore both
        let mut lines: Vec<&str> = first.lines().collect();
        let removed = lines.remove(2);
        let corrupted = format!("{}\nnot,a,row,at,all\n", lines.join("\n"));
        std::fs::write(&out, corrupted).unwrap();

        run_bias_vs_sigma(&data, &[0.05, 0.3], &[1, 2], &ctx, &out).unwrap();
        let second = std::fs::read_to_string(&out).unwrap();
        assert_eq!(first, second);
        assert!(second.contains(removed));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bias.csv");
        let err = run_bias_vs_sigma(&small_data(), &[], &[1], &fast_ctx(), &out).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn generalization_rows_carry_all_columns() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("gen.csv");
        let rows = run_generalization(
            &small_data(),
            &[0.05],
            &[Selection::Full, Selection::Resampled(Strategy::Uniform)],
            0.5,
            &[3],
            &fast_ctx(),
            &out,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!((0.0..=1.0).contains(&row.acc_biased));
            assert!((0.0..=1.0).contains(&row.acc_unbiased));
            assert!((0.0..=1.0).contains(&row.train_bias));
        }
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with(GENERALIZATION_HEADER));
        assert!(text.contains(",none,"));
        assert!(text.contains(",uniform,"));
    }

    #[test]
    fn repair_vs_uniform_reduces_shortcut_bias() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("rvu.csv");
        let mut ctx = fast_ctx();
        ctx.repair_epochs = 150;
        let rows = run_repair_vs_uniform(
            &small_data(),
            &[0.1],
            &[Strategy::Rank, Strategy::Uniform],
            0.5,
            &[1],
            &ctx,
            &out,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        let rank = rows.iter().find(|r| r.strategy == Strategy::Rank).unwrap();
        let uniform = rows
            .iter()
            .find(|r| r.strategy == Strategy::Uniform)
            .unwrap();
        assert!(
            rank.bias_after < uniform.bias_after,
            "rank {} vs uniform {}",
            rank.bias_after,
            uniform.bias_after
        );
    }
}
