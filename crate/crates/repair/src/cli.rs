//! Command-line surface: every library capability behind a subcommand,
//! with a run manifest written before any computation starts.
//!
//! Exit codes: 0 on success, 2 on input problems (bad files, bad flags),
//! 3 on numeric failures.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::bias::{measure_bias, EstimatorConfig};
use crate::biasgen::{colorize, make_color_means, save_color_spec, ColorScheme, ColorSpec};
use crate::data::files::fmt_float;
use crate::data::{
    load_features_csv_with_classes, load_idx, load_weights_for, save_features_csv,
    save_weights_csv, FeatureDataset, Strategy,
};
use crate::downstream::MlpConfig;
use crate::error::{Error, Result};
use crate::experiment::{
    derive_seed, run_bias_vs_sigma, run_generalization, run_repair_vs_uniform, ExperimentContext,
    ExperimentData, Selection, SyntheticSpec,
};
use crate::resample::{resample, save_plan, ResampleParams};
use crate::solver::{repair_run, OmegaRate, RepairConfig};

/// Environment variable naming the default dataset root: relative input
/// paths that do not exist locally are retried under it.
pub const DATA_DIR_ENV: &str = "REPAIR_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "repair",
    version,
    about = "Measure representation bias of labeled feature datasets and remove it by resampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure the representation bias of a feature dataset.
    Measure(MeasureArgs),
    /// Learn minimum-bias resampling weights.
    Repair(RepairArgs),
    /// Turn a weight file into a retained subset.
    Resample(ResampleArgs),
    /// Build a color-tinted corpus from grayscale IDX images.
    ColoredMnist(ColoredMnistArgs),
    /// Run a full experiment grid and emit a plot-ready CSV.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct DataInput {
    /// Feature CSV (`id,label,f0,...`).
    #[arg(long)]
    features: Option<PathBuf>,
    /// IDX image file (used together with --idx-labels).
    #[arg(long, requires = "idx_labels", conflicts_with = "features")]
    idx_images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,
    /// Override the inferred class count.
    #[arg(long)]
    class_count: Option<usize>,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    data: DataInput,
    /// Weight CSV to measure the reweighted bias.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Estimator learning rate.
    #[arg(long, default_value_t = 0.1)]
    lr_theta: f64,
    /// Estimator SGD iterations per training run.
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 256)]
    batch: usize,
    /// Single weight decay (ignored when --decay-sweep is given).
    #[arg(long, default_value_t = 1e-4)]
    decay: f64,
    /// Comma-separated decay sweep; the report takes the max across runs.
    #[arg(long, value_delimiter = ',')]
    decay_sweep: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "repair-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RepairArgs {
    /// Feature CSV of the training split.
    #[arg(long)]
    features: PathBuf,
    /// Feature CSV of the test split; when given, the run uses both splits
    /// combined so their distributions match after resampling.
    #[arg(long)]
    test_features: Option<PathBuf>,
    #[arg(long)]
    class_count: Option<usize>,
    /// Estimator ascent rate.
    #[arg(long, default_value_t = 1e-3)]
    lr_theta: f64,
    /// Weight descent rate.
    #[arg(long, default_value_t = 10.0, conflicts_with = "lr_omega_per_n")]
    lr_omega: f64,
    /// Weight descent rate per example (scaled by the dataset size).
    #[arg(long)]
    lr_omega_per_n: Option<f64>,
    /// Solver iterations (mini-batches).
    #[arg(long, default_value_t = 4000)]
    iters: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    /// L2 decay on the estimator during the run.
    #[arg(long, default_value_t = 0.0)]
    decay: f64,
    /// Skip weight updates when the batch entropy term falls below this.
    #[arg(long, default_value_t = 1e-6)]
    entropy_floor: f64,
    /// Log a history record every this many iterations.
    #[arg(long, default_value_t = 50)]
    history_stride: usize,
    /// Estimator steps per weight step.
    #[arg(long, default_value_t = 1)]
    theta_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "repair-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ResampleArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    class_count: Option<usize>,
    /// Weight CSV from a solver run.
    #[arg(long)]
    weights: PathBuf,
    /// threshold | rank | cls_rank | sample | uniform
    #[arg(long)]
    strategy: String,
    /// Weight threshold for the threshold strategy.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Keep fraction for rank, cls_rank and uniform.
    #[arg(long, default_value_t = 0.5)]
    keep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "repair-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ColoredMnistArgs {
    #[arg(long)]
    train_images: PathBuf,
    #[arg(long)]
    train_labels: PathBuf,
    #[arg(long)]
    test_images: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    /// Per-channel standard deviation of the class color distributions.
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    /// spread | random
    #[arg(long, default_value = "spread")]
    scheme: String,
    /// Keep only the first N examples of each split.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "repair-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// bias-vs-sigma | repair-vs-uniform | generalization
    name: String,
    /// Comma-separated tint spreads.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05,0.1,0.2,0.5")]
    sigmas: Vec<f64>,
    /// Comma-separated strategies; `none` trains on the full split
    /// (generalization only).
    #[arg(long, value_delimiter = ',', default_value = "rank,uniform")]
    strategies: Vec<String>,
    /// Keep fraction applied by every strategy.
    #[arg(long, default_value_t = 0.5)]
    keep: f64,
    /// Comma-separated cell seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Worker threads for independent grid cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    /// IDX inputs; omit all four to run on the synthetic corpus.
    #[arg(long, requires_all = ["train_labels", "test_images", "test_labels"])]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Keep only the first N examples of each split.
    #[arg(long)]
    limit: Option<usize>,

    /// Synthetic corpus: examples in the training split.
    #[arg(long, default_value_t = 6000)]
    synthetic_train: usize,
    /// Synthetic corpus: examples in the test split.
    #[arg(long, default_value_t = 1500)]
    synthetic_test: usize,
    #[arg(long, default_value_t = 20)]
    classes: usize,
    /// Synthetic corpus: image side length.
    #[arg(long, default_value_t = 6)]
    image_size: usize,
    /// Synthetic corpus: pixel noise level.
    #[arg(long, default_value_t = 0.4)]
    noise_std: f64,
    #[arg(long, default_value_t = 7)]
    data_seed: u64,

    /// random | spread class color means.
    #[arg(long, default_value = "random")]
    scheme: String,
    /// Solver passes over the combined splits, in epochs.
    #[arg(long, default_value_t = 200)]
    repair_epochs: usize,
    /// Solver estimator ascent rate.
    #[arg(long, default_value_t = 4e-3)]
    lr_theta: f64,
    /// Solver weight descent rate.
    #[arg(long, default_value_t = 10.0, conflicts_with = "lr_omega_per_n")]
    lr_omega: f64,
    #[arg(long)]
    lr_omega_per_n: Option<f64>,
    /// Bias-meter SGD iterations per measurement.
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Solver mini-batch size.
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Downstream network width.
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 40)]
    mlp_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    mlp_lr: f64,
    #[arg(long, default_value = "repair-out")]
    out_dir: PathBuf,
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Measure(args) => cmd_measure(args),
        Command::Repair(args) => cmd_repair(args),
        Command::Resample(args) => cmd_resample(args),
        Command::ColoredMnist(args) => cmd_colored_mnist(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolve an input path, falling back to `REPAIR_DATA_DIR` for relative
/// paths that do not exist locally.
fn resolve_input(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    if let Ok(root) = std::env::var(DATA_DIR_ENV) {
        let candidate = Path::new(&root).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str) -> Manifest {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Manifest {
            lines: vec![
                ("command".into(), command.into()),
                ("version".into(), env!("CARGO_PKG_VERSION").into()),
                ("timestamp_unix".into(), timestamp.to_string()),
            ],
        }
    }

    fn arg(&mut self, key: &str, value: impl Display) {
        self.lines.push((format!("arg.{key}"), value.to_string()));
    }

    fn input(&mut self, key: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.lines
            .push((format!("input.{key}"), path.display().to_string()));
        self.lines.push((format!("digest.{key}"), format!("sha256:{hex}")));
        Ok(())
    }

    fn output(&mut self, key: &str, path: &Path) {
        self.lines
            .push((format!("output.{key}"), path.display().to_string()));
    }

    /// Write the manifest into the output directory. Called before any
    /// computation happens.
    fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join("manifest.txt");
        let mut text = String::new();
        for (key, value) in &self.lines {
            text.push_str(&format!("{key}={value}\n"));
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn load_data_input(input: &DataInput, manifest: &mut Manifest) -> Result<FeatureDataset> {
    match (&input.features, &input.idx_images, &input.idx_labels) {
        (Some(features), None, None) => {
            let path = resolve_input(features);
            manifest.input("features", &path)?;
            load_features_csv_with_classes(&path, input.class_count)
        }
        (None, Some(images), Some(labels)) => {
            let images = resolve_input(images);
            let labels = resolve_input(labels);
            manifest.input("idx_images", &images)?;
            manifest.input("idx_labels", &labels)?;
            load_idx(&images, &labels)
        }
        _ => Err(Error::InvalidInput(
            "provide --features or the --idx-images/--idx-labels pair".into(),
        )),
    }
}

fn cmd_measure(args: MeasureArgs) -> Result<()> {
    let mut manifest = Manifest::new("measure");
    manifest.arg("lr_theta", args.lr_theta);
    manifest.arg("iters", args.iters);
    manifest.arg("batch", args.batch);
    manifest.arg("seed", args.seed);
    match &args.decay_sweep {
        Some(sweep) => manifest.arg(
            "decay_sweep",
            sweep
                .iter()
                .map(|d| fmt_float(*d))
                .collect::<Vec<_>>()
                .join(","),
        ),
        None => manifest.arg("decay", args.decay),
    }

    let ds = load_data_input(&args.data, &mut manifest)?;
    let weights = match &args.weights {
        Some(path) => {
            let path = resolve_input(path);
            manifest.input("weights", &path)?;
            Some(load_weights_for(&path, &ds)?)
        }
        None => None,
    };

    let report_path = args.out_dir.join("bias_report.txt");
    let decays_path = args.out_dir.join("bias_decays.csv");
    manifest.output("report", &report_path);
    manifest.output("decays", &decays_path);
    manifest.write(&args.out_dir)?;

    let config = EstimatorConfig {
        learning_rate: args.lr_theta,
        iterations: args.iters,
        batch_size: args.batch,
        weight_decay: args.decay,
        seed: args.seed,
        decay_sweep: args.decay_sweep.clone(),
    };
    let report = measure_bias(&ds, weights.as_ref(), &config)?;
    std::fs::write(&report_path, report.to_key_values())
        .map_err(|e| Error::io(&report_path, e))?;
    std::fs::write(&decays_path, report.decays_csv()).map_err(|e| Error::io(&decays_path, e))?;
    println!(
        "bias={} risk={} entropy={}",
        fmt_float(report.bias),
        fmt_float(report.risk),
        fmt_float(report.entropy)
    );
    Ok(())
}

fn cmd_repair(args: RepairArgs) -> Result<()> {
    let mut manifest = Manifest::new("repair");
    manifest.arg("lr_theta", args.lr_theta);
    match args.lr_omega_per_n {
        Some(rate) => manifest.arg("lr_omega_per_n", rate),
        None => manifest.arg("lr_omega", args.lr_omega),
    }
    manifest.arg("iters", args.iters);
    manifest.arg("batch", args.batch);
    manifest.arg("decay", args.decay);
    manifest.arg("entropy_floor", args.entropy_floor);
    manifest.arg("history_stride", args.history_stride);
    manifest.arg("theta_steps", args.theta_steps);
    manifest.arg("seed", args.seed);

    let train_path = resolve_input(&args.features);
    manifest.input("features", &train_path)?;
    let train = load_features_csv_with_classes(&train_path, args.class_count)?;
    let ds = match &args.test_features {
        Some(test_path) => {
            let test_path = resolve_input(test_path);
            manifest.input("test_features", &test_path)?;
            let class_count = args.class_count.or(Some(train.class_count()));
            let test = load_features_csv_with_classes(&test_path, class_count)?;
            let train = load_features_csv_with_classes(&train_path, class_count)?;
            FeatureDataset::concat(
                &train.with_id_prefix("train:"),
                &test.with_id_prefix("test:"),
            )?
        }
        None => train,
    };

    let weights_path = args.out_dir.join("weights.csv");
    let history_path = args.out_dir.join("history.csv");
    let report_path = args.out_dir.join("bias_report.txt");
    manifest.output("weights", &weights_path);
    manifest.output("history", &history_path);
    manifest.output("report", &report_path);
    manifest.write(&args.out_dir)?;

    let config = RepairConfig {
        lr_theta: args.lr_theta,
        lr_omega: match args.lr_omega_per_n {
            Some(rate) => OmegaRate::PerExample(rate),
            None => OmegaRate::Absolute(args.lr_omega),
        },
        iterations: args.iters,
        batch_size: args.batch,
        seed: args.seed,
        weight_decay: args.decay,
        entropy_floor: args.entropy_floor,
        history_stride: args.history_stride,
        theta_steps: args.theta_steps,
    };
    let run = repair_run(&ds, &config)?;
    save_weights_csv(&run.weights, &ds.ids().to_vec(), &weights_path)?;
    std::fs::write(&history_path, run.history.to_csv())
        .map_err(|e| Error::io(&history_path, e))?;

    // reweighted bias with the learned weights, measured afresh
    let meter = EstimatorConfig::single(1e-4).with_seed(derive_seed(args.seed, 99));
    let report = measure_bias(&ds, Some(&run.weights), &meter)?;
    std::fs::write(&report_path, report.to_key_values())
        .map_err(|e| Error::io(&report_path, e))?;
    println!(
        "final_objective={} reweighted_bias={} skipped_batches={}",
        fmt_float(run.history.records.last().map_or(f64::NAN, |r| r.objective)),
        fmt_float(report.bias),
        run.history.skipped_batches
    );
    Ok(())
}

fn cmd_resample(args: ResampleArgs) -> Result<()> {
    let mut manifest = Manifest::new("resample");
    manifest.arg("strategy", &args.strategy);
    manifest.arg("threshold", args.threshold);
    manifest.arg("keep", args.keep);
    manifest.arg("seed", args.seed);

    let strategy: Strategy = args.strategy.parse()?;
    let features_path = resolve_input(&args.features);
    let weights_path = resolve_input(&args.weights);
    manifest.input("features", &features_path)?;
    manifest.input("weights", &weights_path)?;
    let ds = load_features_csv_with_classes(&features_path, args.class_count)?;
    let weights = load_weights_for(&weights_path, &ds)?;

    let plan_path = args.out_dir.join("plan.csv");
    let subset_path = args.out_dir.join("subset.csv");
    manifest.output("plan", &plan_path);
    manifest.output("subset", &subset_path);
    manifest.write(&args.out_dir)?;

    let plan = resample(
        &weights,
        ds.labels(),
        strategy,
        &ResampleParams {
            threshold: args.threshold,
            keep_fraction: args.keep,
        },
        args.seed,
    )?;
    save_plan(&plan, ds.ids(), &plan_path)?;
    let subset = ds.subset(&plan)?;
    save_features_csv(&subset, &subset_path)?;
    println!("retained={} of {}", plan.retained.len(), ds.len());
    Ok(())
}

fn cmd_colored_mnist(args: ColoredMnistArgs) -> Result<()> {
    let mut manifest = Manifest::new("colored-mnist");
    manifest.arg("sigma", args.sigma);
    manifest.arg("scheme", &args.scheme);
    manifest.arg("seed", args.seed);
    if let Some(limit) = args.limit {
        manifest.arg("limit", limit);
    }

    let scheme: ColorScheme = args.scheme.parse()?;
    let train_images = resolve_input(&args.train_images);
    let train_labels = resolve_input(&args.train_labels);
    let test_images = resolve_input(&args.test_images);
    let test_labels = resolve_input(&args.test_labels);
    manifest.input("train_images", &train_images)?;
    manifest.input("train_labels", &train_labels)?;
    manifest.input("test_images", &test_images)?;
    manifest.input("test_labels", &test_labels)?;

    let data = ExperimentData::from_idx(
        &train_images,
        &train_labels,
        &test_images,
        &test_labels,
        args.limit,
    )?;

    let train_path = args.out_dir.join("colored_train.csv");
    let test_path = args.out_dir.join("colored_test.csv");
    let spec_path = args.out_dir.join("color_spec.txt");
    manifest.output("colored_train", &train_path);
    manifest.output("colored_test", &test_path);
    manifest.output("color_spec", &spec_path);
    manifest.write(&args.out_dir)?;

    let means = make_color_means(data.gray_train.class_count(), args.seed, scheme);
    let train_spec = ColorSpec::new(means.clone(), args.sigma, derive_seed(args.seed, 2))?;
    let test_spec = ColorSpec::new(means, args.sigma, derive_seed(args.seed, 3))?;
    let colored_train = colorize(&data.gray_train, &train_spec)?;
    let colored_test = colorize(&data.gray_test, &test_spec)?;
    save_features_csv(&colored_train, &train_path)?;
    save_features_csv(&colored_test, &test_path)?;
    save_color_spec(&train_spec, &spec_path)?;
    println!(
        "colored {} train and {} test examples at sigma={}",
        colored_train.len(),
        colored_test.len(),
        fmt_float(args.sigma)
    );
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut manifest = Manifest::new("experiment");
    manifest.arg("name", &args.name);
    manifest.arg(
        "sigmas",
        args.sigmas
            .iter()
            .map(|s| fmt_float(*s))
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.arg("strategies", args.strategies.join(","));
    manifest.arg("keep", args.keep);
    manifest.arg(
        "seeds",
        args.seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.arg("jobs", args.jobs);
    manifest.arg("scheme", &args.scheme);
    manifest.arg("repair_epochs", args.repair_epochs);
    manifest.arg("lr_theta", args.lr_theta);
    match args.lr_omega_per_n {
        Some(rate) => manifest.arg("lr_omega_per_n", rate),
        None => manifest.arg("lr_omega", args.lr_omega),
    }
    manifest.arg("iters", args.iters);
    manifest.arg("batch", args.batch);
    manifest.arg("hidden", args.hidden);
    manifest.arg("mlp_epochs", args.mlp_epochs);
    manifest.arg("mlp_lr", args.mlp_lr);

    let data = match (&args.train_images, &args.train_labels, &args.test_images, &args.test_labels)
    {
        (Some(ti), Some(tl), Some(si), Some(sl)) => {
            let (ti, tl) = (resolve_input(ti), resolve_input(tl));
            let (si, sl) = (resolve_input(si), resolve_input(sl));
            manifest.input("train_images", &ti)?;
            manifest.input("train_labels", &tl)?;
            manifest.input("test_images", &si)?;
            manifest.input("test_labels", &sl)?;
            ExperimentData::from_idx(&ti, &tl, &si, &sl, args.limit)?
        }
        (None, None, None, None) => {
            let spec = SyntheticSpec {
                n_train: args.synthetic_train,
                n_test: args.synthetic_test,
                class_count: args.classes,
                height: args.image_size,
                width: args.image_size,
                noise_std: args.noise_std,
                seed: args.data_seed,
            };
            manifest.arg("synthetic_train", spec.n_train);
            manifest.arg("synthetic_test", spec.n_test);
            manifest.arg("classes", spec.class_count);
            manifest.arg("image_size", spec.height);
            manifest.arg("noise_std", spec.noise_std);
            manifest.arg("data_seed", spec.seed);
            ExperimentData::synthetic(&spec)
        }
        _ => {
            return Err(Error::InvalidInput(
                "provide all four IDX paths or none (synthetic corpus)".into(),
            ))
        }
    };

    let scheme: ColorScheme = args.scheme.parse()?;
    let ctx = ExperimentContext {
        scheme,
        estimator: EstimatorConfig {
            learning_rate: 0.3,
            iterations: args.iters,
            batch_size: 256,
            weight_decay: 1e-4,
            seed: 0,
            decay_sweep: None,
        },
        repair_epochs: args.repair_epochs,
        repair: RepairConfig {
            lr_theta: args.lr_theta,
            lr_omega: match args.lr_omega_per_n {
                Some(rate) => OmegaRate::PerExample(rate),
                None => OmegaRate::Absolute(args.lr_omega),
            },
            batch_size: args.batch,
            theta_steps: 40,
            ..RepairConfig::default()
        },
        mlp: MlpConfig {
            hidden_units: args.hidden,
            learning_rate: args.mlp_lr,
            epochs: args.mlp_epochs,
            batch_size: 128,
            seed: 0,
        },
        jobs: args.jobs.max(1),
    };

    let out = args
        .out_dir
        .join(format!("{}.csv", args.name.replace('-', "_")));
    manifest.output("results", &out);
    manifest.write(&args.out_dir)?;

    match args.name.as_str() {
        "bias-vs-sigma" => {
            let rows = run_bias_vs_sigma(&data, &args.sigmas, &args.seeds, &ctx, &out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        "repair-vs-uniform" => {
            let strategies: Vec<Strategy> = args
                .strategies
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?;
            let rows = run_repair_vs_uniform(
                &data,
                &args.sigmas,
                &strategies,
                args.keep,
                &args.seeds,
                &ctx,
                &out,
            )?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        "generalization" => {
            let selections: Vec<Selection> = args
                .strategies
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?;
            let rows = run_generalization(
                &data,
                &args.sigmas,
                &selections,
                args.keep,
                &args.seeds,
                &ctx,
                &out,
            )?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown experiment `{other}` (expected bias-vs-sigma|repair-vs-uniform|generalization)"
            )))
        }
    }
    Ok(())
}
