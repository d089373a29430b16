// scratch calibration runs; not part of the shipped examples
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use repair::bias::{measure_bias, EstimatorConfig};
use repair::biasgen::{color_feature, colorize, make_color_means, ColorScheme, ColorSpec};
use repair::data::{ExampleWeights, FeatureDataset, Strategy};
use repair::downstream::{evaluate_accuracy, replicate_channels, train_downstream, MlpConfig};
use repair::experiment::{derive_seed, ExperimentData, SyntheticSpec};
use repair::resample::{resample, ResampleParams};
use repair::solver::{repair_run, OmegaRate, RepairConfig};

fn dataset(features: Array2<f64>, labels: Vec<usize>, c: usize) -> FeatureDataset {
    let ids = (0..labels.len()).map(|i| format!("e{i}")).collect();
    FeatureDataset::new(features, labels, c, ids).unwrap()
}

fn noise_polarization() {
    println!("== noise polarization ==");
    for n in [400usize, 1000] {
        for (lr_theta, iters) in [(1e-3, 2000), (0.02, 2000)] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let feats = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
            let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
            let ds = dataset(feats, labels, 4);
            let config = RepairConfig {
                lr_theta,
                iterations: iters,
                batch_size: 128,
                history_stride: 1000,
                ..Default::default()
            };
            let run = repair_run(&ds, &config).unwrap();
            let w = run.weights.weights();
            let mean_dev = w.iter().map(|v| (v - 0.5).abs()).sum::<f64>() / w.len() as f64;
            let mean_w = w.iter().sum::<f64>() / w.len() as f64;
            println!("n={n} lr_theta={lr_theta} iters={iters}: mean|w-0.5|={mean_dev:.4} mean_w={mean_w:.4}");
        }
    }
}

fn planted_shortcut() {
    println!("== planted shortcut (overlapping 1-d leak) ==");
    let n = 600;
    let c = 3;
    let meter = EstimatorConfig {
        learning_rate: 0.3,
        iterations: 1500,
        decay_sweep: None,
        weight_decay: 1e-4,
        ..Default::default()
    };
    for gap in [1.6f64, 2.2] {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut feats = Array2::zeros((n, 3));
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        for (i, &y) in labels.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            feats[(i, 0)] = gap * y as f64 + z;
            for j in 1..3 {
                feats[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let ds = dataset(feats, labels.clone(), c);
        let before = measure_bias(&ds, None, &meter).unwrap().bias;
        for (lr_theta, iters, gw) in [
            (0.02f64, 3000usize, 10.0f64),
            (0.02, 8000, 10.0),
            (0.05, 8000, 10.0),
            (0.02, 8000, 30.0),
        ] {
            let config = RepairConfig {
                lr_theta,
                lr_omega: OmegaRate::Absolute(gw),
                iterations: iters,
                batch_size: 128,
                history_stride: 2000,
                ..Default::default()
            };
            let run = repair_run(&ds, &config).unwrap();
            let plan = resample(
                &run.weights,
                ds.labels(),
                Strategy::Rank,
                &ResampleParams { threshold: 0.5, keep_fraction: 0.5 },
                7,
            )
            .unwrap();
            let after = measure_bias(&ds.subset(&plan).unwrap(), None, &meter).unwrap().bias;
            let w = run.weights.weights();
            let frac_polar = w.iter().filter(|&&v| !(0.25..=0.75).contains(&v)).count() as f64
                / w.len() as f64;
            let mean_w = w.iter().sum::<f64>() / w.len() as f64;
            let last = run.history.records.last().unwrap();
            println!(
                "gap={gap} lr_t={lr_theta} it={iters} gw={gw}: before={before:.3} after={after:.3} ratio={:.2} polar={frac_polar:.2} mean_w={mean_w:.2} V={:.3}",
                after / before, last.objective
            );
        }
    }
}

fn colored_pipeline() {
    println!("== colored surrogate ==");
    let mut spec = SyntheticSpec::default();
    if let Ok(v) = std::env::var("IMG") { let k: usize = v.parse().unwrap(); spec.height = k; spec.width = k; }
    if let Ok(v) = std::env::var("CLASSES") { spec.class_count = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("NTRAIN") { spec.n_train = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("NTEST") { spec.n_test = v.parse().unwrap(); }
    let data = ExperimentData::synthetic(&spec);
    let meter = EstimatorConfig {
        learning_rate: 5.0,
        iterations: 2000,
        batch_size: 256,
        weight_decay: 1e-4,
        seed: 0,
        decay_sweep: None,
    };

    // shape learnability ceiling: gray-on-gray training
    let mlp = MlpConfig { hidden_units: 128, learning_rate: 0.1, epochs: 30, batch_size: 128, seed: 1 };
    let gray3_train = replicate_channels(&data.gray_train);
    let gray3_test = replicate_channels(&data.gray_test);
    let model = train_downstream(&gray3_train, &mlp).unwrap();
    println!(
        "gray-trained: train_acc={:.3} test_acc={:.3}",
        evaluate_accuracy(&model, &gray3_train).unwrap(),
        evaluate_accuracy(&model, &gray3_test).unwrap()
    );

    for scheme in [ColorScheme::Random, ColorScheme::Spread] {
        println!("-- scheme {scheme:?} --");
        for sigma in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5] {
            let seed = 1u64;
            let means = make_color_means(spec.class_count, derive_seed(seed, 1), scheme);
            let tr = ColorSpec::new(means.clone(), sigma, derive_seed(seed, 2)).unwrap();
            let te = ColorSpec::new(means, sigma, derive_seed(seed, 3)).unwrap();
            let colored_train = colorize(&data.gray_train, &tr).unwrap();
            let colored_test = colorize(&data.gray_test, &te).unwrap();
            let bias = measure_bias(&color_feature(&colored_test).unwrap(), None, &meter)
                .unwrap()
                .bias;

            let model = train_downstream(&colored_train, &mlp).unwrap();
            let acc_colored = evaluate_accuracy(&model, &colored_test).unwrap();
            let acc_gray = evaluate_accuracy(&model, &gray3_test).unwrap();
            println!("sigma={sigma}: test_bias={bias:.3} acc_colored={acc_colored:.3} acc_gray={acc_gray:.3}");
        }
    }
}

fn repair_on_colored() {
    println!("== repair on colored surrogate (random scheme) ==");
    let mut spec = SyntheticSpec::default();
    if let Ok(v) = std::env::var("IMG") { let k: usize = v.parse().unwrap(); spec.height = k; spec.width = k; }
    if let Ok(v) = std::env::var("CLASSES") { spec.class_count = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("NTRAIN") { spec.n_train = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("NTEST") { spec.n_test = v.parse().unwrap(); }
    let data = ExperimentData::synthetic(&spec);
    let meter_iters: usize = std::env::var("METER_ITERS").ok().and_then(|v| v.parse().ok()).unwrap_or(2000);
    let meter_lr: f64 = std::env::var("METER_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(5.0);
    let meter = EstimatorConfig {
        learning_rate: meter_lr,
        iterations: meter_iters,
        batch_size: 256,
        weight_decay: 1e-4,
        seed: 0,
        decay_sweep: None,
    };
    let mlp_epochs: usize = std::env::var("MLP_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(30);
    let mlp = MlpConfig { hidden_units: std::env::var("HID").ok().and_then(|v| v.parse().ok()).unwrap_or(128), learning_rate: 0.1, epochs: mlp_epochs, batch_size: 128, seed: 1 };
    let gray3_test = replicate_channels(&data.gray_test);

    let epochs_equiv: usize = std::env::args().nth(2).and_then(|v| v.parse().ok()).unwrap_or(200);
    let sigma_arg: Option<f64> = std::env::args().nth(3).and_then(|v| v.parse().ok());
    let sigmas: Vec<f64> = match sigma_arg {
        Some(s) => vec![s],
        None => vec![0.02, 0.05, 0.1],
    };
    for sigma in sigmas {
        let seed_lo: u64 = std::env::args().nth(6).and_then(|v| v.parse().ok()).unwrap_or(1);
        let seed_hi: u64 = std::env::args().nth(7).and_then(|v| v.parse().ok()).unwrap_or(3);
        for seed in seed_lo..=seed_hi {
            let means = make_color_means(spec.class_count, derive_seed(seed, 1), ColorScheme::Random);
            let tr = ColorSpec::new(means.clone(), sigma, derive_seed(seed, 2)).unwrap();
            let te = ColorSpec::new(means, sigma, derive_seed(seed, 3)).unwrap();
            let colored_train = colorize(&data.gray_train, &tr).unwrap();
            let colored_test = colorize(&data.gray_test, &te).unwrap();
            let combined = FeatureDataset::concat(
                &colored_train.with_id_prefix("train:"),
                &colored_test.with_id_prefix("test:"),
            )
            .unwrap();
            let features = color_feature(&combined).unwrap();
            let before = measure_bias(&features, None, &meter).unwrap().bias;

            // weights are learned against the representation of interest
            let n = features.len();
            let theta_steps: usize = std::env::args().nth(4).and_then(|v| v.parse().ok()).unwrap_or(1);
            let batch: usize = std::env::args().nth(5).and_then(|v| v.parse().ok()).unwrap_or(256);
            let lr_theta: f64 = std::env::var("GT").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-3);
            let config = RepairConfig {
                lr_theta,
                iterations: epochs_equiv * (n / batch).max(1),
                batch_size: batch,
                seed: derive_seed(seed, 20),
                theta_steps,
                ..Default::default()
            };
            let run = repair_run(&features, &config).unwrap();
            let w = run.weights.weights();
            let frac_polar = w.iter().filter(|&&v| !(0.25..=0.75).contains(&v)).count() as f64
                / w.len() as f64;
            let mean_w = w.iter().sum::<f64>() / w.len() as f64;

            let last = run.history.records.last().unwrap();
            let mut line = format!(
                "sigma={sigma} seed={seed}: before={before:.3} polar={frac_polar:.2} mean_w={mean_w:.2} V={:.3} risk={:.3}",
                last.objective, last.risk,
            );
            for strategy in [Strategy::Rank, Strategy::Threshold, Strategy::Uniform] {
                let weights = if strategy == Strategy::Uniform {
                    ExampleWeights::neutral(n)
                } else {
                    run.weights.clone()
                };
                let plan = resample(
                    &weights,
                    features.labels(),
                    strategy,
                    &ResampleParams { threshold: 0.5, keep_fraction: 0.5 },
                    derive_seed(seed, 30 + strategy as u64),
                )
                .unwrap();
                let subset_bias = measure_bias(&features.subset(&plan).unwrap(), None, &meter)
                    .unwrap()
                    .bias;
                line.push_str(&format!(" {}={subset_bias:.3}", strategy));

                // downstream on retained train rows
                let retained = combined.subset(&plan).unwrap();
                let train_rows: Vec<usize> = (0..retained.len())
                    .filter(|&i| retained.ids()[i].starts_with("train:"))
                    .collect();
                let train_ds = retained.select(&train_rows).unwrap();
                let sweep: Vec<usize> = std::env::var("MLP_SWEEP")
                    .map(|v| v.split(',').map(|e| e.parse().unwrap()).collect())
                    .unwrap_or_else(|_| vec![mlp.epochs]);
                for epochs in sweep {
                    let cfg = MlpConfig { epochs, ..mlp.clone() };
                    let model = train_downstream(&train_ds, &cfg).unwrap();
                    let acc_gray = evaluate_accuracy(&model, &gray3_test).unwrap();
                    let acc_col = evaluate_accuracy(&model, &colored_test).unwrap();
                    line.push_str(&format!("(e{epochs}:g={acc_gray:.3},c={acc_col:.3},n={})", train_ds.len()));
                }
            }
            println!("{line}");
        }
    }
}

fn oracle_gap() {
    // ceiling probe: decorrelated-color half vs uniform half
    let mut spec = SyntheticSpec::default();
    if let Ok(v) = std::env::var("IMG") { let k: usize = v.parse().unwrap(); spec.height = k; spec.width = k; }
    if let Ok(v) = std::env::var("CLASSES") { spec.class_count = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("NTRAIN") { spec.n_train = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("NTEST") { spec.n_test = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("NOISE") { spec.noise_std = v.parse().unwrap(); }
    let data = ExperimentData::synthetic(&spec);
    let mlp_epochs: usize = std::env::var("MLP_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(30);
    let mlp = MlpConfig { hidden_units: std::env::var("HID").ok().and_then(|v| v.parse().ok()).unwrap_or(128), learning_rate: 0.1, epochs: mlp_epochs, batch_size: 128, seed: 1 };
    let gray3_test = replicate_channels(&data.gray_test);
    let sigma: f64 = std::env::var("SIG").ok().and_then(|v| v.parse().ok()).unwrap_or(0.05);
    for seed in 1u64..=3 {
        let means = make_color_means(spec.class_count, derive_seed(seed, 1), ColorScheme::Random);
        let tr = ColorSpec::new(means.clone(), sigma, derive_seed(seed, 2)).unwrap();
        let te = ColorSpec::new(means.clone(), sigma, derive_seed(seed, 3)).unwrap();
        let colored_train = colorize(&data.gray_train, &tr).unwrap();
        let colored_test = colorize(&data.gray_test, &te).unwrap();

        // uniform half
        let w = ExampleWeights::neutral(colored_train.len());
        let plan = resample(&w, colored_train.labels(), Strategy::Uniform,
            &ResampleParams { threshold: 0.5, keep_fraction: 0.5 }, derive_seed(seed, 31)).unwrap();
        let uni = colored_train.subset(&plan).unwrap();
        let m_uni = train_downstream(&uni, &mlp).unwrap();

        // decorrelated half: same rows, colors drawn under shuffled labels
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let gray_half = data.gray_train.subset(&plan).unwrap();
        let mut labels = gray_half.labels().to_vec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 77));
        labels.shuffle(&mut rng);
        let shuffled = FeatureDataset::new(
            gray_half.features().clone(), labels, gray_half.class_count(),
            gray_half.ids().to_vec()).unwrap();
        let decor_pixels = colorize(&shuffled, &tr).unwrap();
        let decor = FeatureDataset::new(
            decor_pixels.features().clone(), gray_half.labels().to_vec(),
            gray_half.class_count(), gray_half.ids().to_vec()).unwrap();
        let m_dec = train_downstream(&decor, &mlp).unwrap();

        // ideal discard-only selector: keep examples whose true-tint-model
        // posterior for their own class is smallest
        let mut scores: Vec<(usize, f64)> = (0..colored_train.len())
            .map(|i| {
                let y = colored_train.labels()[i];
                // recover the tint from the colored pixels and gray intensity
                let d = data.gray_train.dim();
                let intensity: f64 = data.gray_train.features().row(i).iter().sum::<f64>() / d as f64;
                let mut z = [0.0f64; 3];
                for c in 0..3 {
                    let plane_mean: f64 = (0..d).map(|j| colored_train.features()[(i, c * d + j)]).sum::<f64>() / d as f64;
                    z[c] = if intensity > 1e-9 { plane_mean / intensity } else { 0.5 };
                }
                let mut num = 0.0;
                let mut den = 0.0;
                for cls in 0..colored_train.class_count() {
                    let d2: f64 = (0..3).map(|c| (z[c] - means[(cls, c)]).powi(2)).sum();
                    let lik = (-d2 / (2.0 * sigma * sigma)).exp();
                    den += lik;
                    if cls == y { num = lik; }
                }
                (i, if den > 0.0 { num / den } else { 0.0 })
            })
            .collect();
        scores.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let mut keep: Vec<usize> = scores.iter().take(colored_train.len() / 2).map(|s| s.0).collect();
        keep.sort_unstable();
        let ideal = colored_train.select(&keep).unwrap();
        let m_ideal = train_downstream(&ideal, &mlp).unwrap();
        println!(
            "sigma={sigma} seed={seed}: ideal-rank g={:.3} c={:.3}",
            evaluate_accuracy(&m_ideal, &gray3_test).unwrap(),
            evaluate_accuracy(&m_ideal, &colored_test).unwrap(),
        );
        println!(
            "sigma={sigma} seed={seed}: uniform g={:.3} c={:.3} | decor g={:.3} c={:.3}",
            evaluate_accuracy(&m_uni, &gray3_test).unwrap(),
            evaluate_accuracy(&m_uni, &colored_test).unwrap(),
            evaluate_accuracy(&m_dec, &gray3_test).unwrap(),
            evaluate_accuracy(&m_dec, &colored_test).unwrap(),
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("all");
    let t0 = std::time::Instant::now();
    match which {
        "noise" => noise_polarization(),
        "shortcut" => planted_shortcut(),
        "colored" => colored_pipeline(),
        "repair" => repair_on_colored(),
        "oracle" => oracle_gap(),
        _ => {
            noise_polarization();
            planted_shortcut();
        }
    }
    println!("elapsed: {:.1?}", t0.elapsed());
}
