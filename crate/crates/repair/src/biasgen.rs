//! Controlled bias injection: class-correlated color tinting of grayscale
//! images, plus fully synthetic corpora for fast experiments.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::files::fmt_float;
use crate::data::FeatureDataset;
use crate::error::{Error, Result};

/// Class-conditional color distributions: one RGB mean per class and a
/// shared per-channel standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorSpec {
    /// `C x 3` matrix of per-class means, inside the unit cube.
    pub means: Array2<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl ColorSpec {
    pub fn new(means: Array2<f64>, sigma: f64, seed: u64) -> Result<Self> {
        if means.ncols() != 3 {
            return Err(Error::InvalidInput(format!(
                "color means must have 3 columns, got {}",
                means.ncols()
            )));
        }
        if means.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(
                "color means must lie inside the unit cube".into(),
            ));
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidInput("sigma must be nonnegative".into()));
        }
        Ok(ColorSpec { means, sigma, seed })
    }

    pub fn class_count(&self) -> usize {
        self.means.nrows()
    }

    /// Flat `key=value` record.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("sigma={}\n", fmt_float(self.sigma)));
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("class_count={}\n", self.class_count()));
        for y in 0..self.class_count() {
            out.push_str(&format!(
                "mean_{y}={};{};{}\n",
                fmt_float(self.means[(y, 0)]),
                fmt_float(self.means[(y, 1)]),
                fmt_float(self.means[(y, 2)])
            ));
        }
        out
    }
}

/// Write a color spec as a key-value text record.
pub fn save_color_spec(spec: &ColorSpec, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(spec.to_key_values().as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Read a color spec back from its key-value record.
pub fn load_color_spec(path: &Path) -> Result<ColorSpec> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sigma = None;
    let mut seed = None;
    let mut class_count = None;
    let mut means: Vec<(usize, [f64; 3])> = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("malformed line `{line}`")))?;
        match key {
            "sigma" => sigma = Some(parse_f64(value, path)?),
            "seed" => {
                seed = Some(value.parse::<u64>().map_err(|_| {
                    Error::format(path, format!("bad seed `{value}`"))
                })?)
            }
            "class_count" => {
                class_count = Some(value.parse::<usize>().map_err(|_| {
                    Error::format(path, format!("bad class_count `{value}`"))
                })?)
            }
            k if k.starts_with("mean_") => {
                let y: usize = k[5..]
                    .parse()
                    .map_err(|_| Error::format(path, format!("bad key `{k}`")))?;
                let parts: Vec<&str> = value.split(';').collect();
                if parts.len() != 3 {
                    return Err(Error::format(path, format!("mean_{y} needs 3 values")));
                }
                means.push((
                    y,
                    [
                        parse_f64(parts[0], path)?,
                        parse_f64(parts[1], path)?,
                        parse_f64(parts[2], path)?,
                    ],
                ));
            }
            other => return Err(Error::format(path, format!("unknown key `{other}`"))),
        }
    }
    let sigma = sigma.ok_or_else(|| Error::format(path, "missing sigma"))?;
    let seed = seed.ok_or_else(|| Error::format(path, "missing seed"))?;
    let c = class_count.ok_or_else(|| Error::format(path, "missing class_count"))?;
    if means.len() != c {
        return Err(Error::format(
            path,
            format!("expected {c} means, found {}", means.len()),
        ));
    }
    let mut matrix = Array2::zeros((c, 3));
    for (y, rgb) in means {
        if y >= c {
            return Err(Error::format(path, format!("mean_{y} out of range")));
        }
        for (j, v) in rgb.into_iter().enumerate() {
            matrix[(y, j)] = v;
        }
    }
    ColorSpec::new(matrix, sigma, seed)
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::format(path, format!("bad number `{s}`")))
}

/// How per-class color means are laid out in the RGB cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorScheme {
    /// Greedy farthest-point placement on a lattice over the cube, so the
    /// class colors are maximally separated. The seed picks the start.
    Spread,
    /// Uniform draws from `[0.2, 0.8]^3`; classes may land close together,
    /// giving a softer, more natural overlap structure.
    Random,
}

impl std::str::FromStr for ColorScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spread" => Ok(ColorScheme::Spread),
            "random" => Ok(ColorScheme::Random),
            other => Err(Error::InvalidInput(format!(
                "unknown color scheme `{other}` (expected spread|random)"
            ))),
        }
    }
}

impl std::fmt::Display for ColorScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColorScheme::Spread => "spread",
            ColorScheme::Random => "random",
        })
    }
}

/// Deterministically choose one RGB mean per class.
pub fn make_color_means(class_count: usize, seed: u64, scheme: ColorScheme) -> Array2<f64> {
    assert!(class_count >= 1, "need at least one class");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match scheme {
        ColorScheme::Random => {
            Array2::from_shape_fn((class_count, 3), |_| rng.random_range(0.2..0.8))
        }
        ColorScheme::Spread => {
            // lattice fine enough to hold one point per class
            let mut m = 2usize;
            while m * m * m < class_count {
                m += 1;
            }
            let coord = |k: usize| k as f64 / (m - 1) as f64;
            let mut candidates = Vec::with_capacity(m * m * m);
            for r in 0..m {
                for g in 0..m {
                    for b in 0..m {
                        candidates.push([coord(r), coord(g), coord(b)]);
                    }
                }
            }
            let mut chosen: Vec<[f64; 3]> = Vec::with_capacity(class_count);
            let start = rng.random_range(0..candidates.len());
            chosen.push(candidates.swap_remove(start));
            while chosen.len() < class_count {
                // farthest-point step; ties resolve to the earliest candidate
                let (best, _) = candidates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let min_d2 = chosen
                            .iter()
                            .map(|s| dist2(c, s))
                            .fold(f64::INFINITY, f64::min);
                        (i, min_d2)
                    })
                    .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, d)| {
                        if d > acc.1 {
                            (i, d)
                        } else {
                            acc
                        }
                    });
                chosen.push(candidates.remove(best));
            }
            let mut means = Array2::zeros((class_count, 3));
            for (y, rgb) in chosen.into_iter().enumerate() {
                for (j, v) in rgb.into_iter().enumerate() {
                    means[(y, j)] = v;
                }
            }
            means
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn example_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Tint a grayscale dataset with class-conditional colors.
///
/// Each example draws a color vector from its class distribution (clipped
/// to the unit cube) and multiplies every pixel by it, one channel plane at
/// a time: the output layout is `[R plane | G plane | B plane]`, width
/// `3 * d`. The draw depends only on `(spec.seed, example index)`.
pub fn colorize(gray: &FeatureDataset, spec: &ColorSpec) -> Result<FeatureDataset> {
    if spec.class_count() != gray.class_count() {
        return Err(Error::InvalidInput(format!(
            "color spec has {} classes, dataset has {}",
            spec.class_count(),
            gray.class_count()
        )));
    }
    if gray.features().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidInput(
            "grayscale values must lie in [0, 1]".into(),
        ));
    }
    let d = gray.dim();
    let mut features = Array2::zeros((gray.len(), 3 * d));
    for i in 0..gray.len() {
        let y = gray.labels()[i];
        let mut rng = example_rng(spec.seed, i);
        for c in 0..3 {
            let g: f64 = StandardNormal.sample(&mut rng);
            let tint = (spec.means[(y, c)] + spec.sigma * g).clamp(0.0, 1.0);
            for j in 0..d {
                features[(i, c * d + j)] = gray.features()[(i, j)] * tint;
            }
        }
    }
    FeatureDataset::new(
        features,
        gray.labels().to_vec(),
        gray.class_count(),
        gray.ids().to_vec(),
    )
}

/// The minimal color representation of a tinted dataset: per example, the
/// 3-vector of channel-plane means.
pub fn color_feature(colored: &FeatureDataset) -> Result<FeatureDataset> {
    let d = colored.dim();
    if d % 3 != 0 {
        return Err(Error::InvalidInput(format!(
            "width {d} is not divisible into 3 channel planes"
        )));
    }
    let plane = d / 3;
    let mut features = Array2::zeros((colored.len(), 3));
    for i in 0..colored.len() {
        for c in 0..3 {
            let mut sum = 0.0;
            for j in 0..plane {
                sum += colored.features()[(i, c * plane + j)];
            }
            features[(i, c)] = sum / plane as f64;
        }
    }
    FeatureDataset::new(
        features,
        colored.labels().to_vec(),
        colored.class_count(),
        colored.ids().to_vec(),
    )
}

/// Pure-synthetic dataset with a planted shortcut: a signal block of class
/// Gaussians separated by `separability` and a bias block separated by
/// `bias_strength`, both with unit within-class noise, concatenated.
/// `bias_strength = 0` makes the bias block class-independent noise.
pub fn planted_bias_blobs(
    n: usize,
    class_count: usize,
    d_signal: usize,
    d_bias: usize,
    separability: f64,
    bias_strength: f64,
    seed: u64,
) -> FeatureDataset {
    assert!(n >= 1 && class_count >= 1, "need examples and classes");
    assert!(d_signal >= 1 && d_bias >= 1, "block dimensions must be positive");
    let labels: Vec<usize> = (0..n).map(|i| i % class_count).collect();
    let signal_dirs = class_directions(class_count, d_signal, seed, 1);
    let bias_dirs = class_directions(class_count, d_bias, seed, 2);

    let d = d_signal + d_bias;
    let mut features = Array2::zeros((n, d));
    for (i, &y) in labels.iter().enumerate() {
        let mut rng = example_rng(seed, i);
        for j in 0..d_signal {
            let g: f64 = StandardNormal.sample(&mut rng);
            features[(i, j)] = separability * signal_dirs[(y, j)] + g;
        }
        for j in 0..d_bias {
            let g: f64 = StandardNormal.sample(&mut rng);
            features[(i, d_signal + j)] = bias_strength * bias_dirs[(y, j)] + g;
        }
    }
    let ids = (0..n).map(|i| format!("{i:06}")).collect();
    FeatureDataset::new(features, labels, class_count, ids).expect("construction is valid")
}

/// One random unit direction per class.
fn class_directions(class_count: usize, dim: usize, seed: u64, stream: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - stream);
    let mut dirs = Array2::zeros((class_count, dim));
    for y in 0..class_count {
        let mut norm2 = 0.0;
        for j in 0..dim {
            let g: f64 = StandardNormal.sample(&mut rng);
            dirs[(y, j)] = g;
            norm2 += g * g;
        }
        let norm = norm2.sqrt().max(1e-12);
        for j in 0..dim {
            dirs[(y, j)] /= norm;
        }
    }
    dirs
}

/// Synthetic grayscale image corpus: one fixed random template per class,
/// equalized to a common mean intensity, plus per-example intensity jitter
/// and pixel noise. A stand-in for a real digit corpus when none is on
/// disk: shapes are learnable but not trivial, and intensity alone carries
/// no label information.
pub fn synthetic_shapes(
    n: usize,
    class_count: usize,
    height: usize,
    width: usize,
    noise_std: f64,
    seed: u64,
) -> FeatureDataset {
    assert!(n >= 1 && class_count >= 1, "need examples and classes");
    assert!(height * width >= 4, "image too small");
    let d = height * width;

    // classes share a base pattern and differ by sparse bumps, so shape is
    // learnable but not trivially so
    let mut base = vec![0.0f64; d];
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX / 2);
        for v in base.iter_mut() {
            if rng.random::<f64>() < 0.45 {
                *v = rng.random_range(0.5..1.0);
            }
        }
    }
    let mut templates = Array2::zeros((class_count, d));
    for y in 0..class_count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX / 2 - 1 - y as u64);
        let mut mean = 0.0;
        for j in 0..d {
            let bump = if rng.random::<f64>() < 0.35 {
                rng.random_range(-0.5..0.5)
            } else {
                0.0
            };
            let v = (base[j] + bump).clamp(0.0, 1.0);
            templates[(y, j)] = v;
            mean += v;
        }
        mean /= d as f64;
        if mean <= 0.0 {
            templates[(y, 0)] = 0.5;
            mean = 0.5 / d as f64;
        }
        // equalize mean intensity across classes
        let scale = 0.5 / mean;
        for j in 0..d {
            templates[(y, j)] = (templates[(y, j)] * scale).min(1.0);
        }
    }

    let labels: Vec<usize> = (0..n).map(|i| i % class_count).collect();
    let mut features = Array2::zeros((n, d));
    for (i, &y) in labels.iter().enumerate() {
        let mut rng = example_rng(seed, i);
        let jitter = rng.random_range(0.9..1.1);
        for j in 0..d {
            let g: f64 = StandardNormal.sample(&mut rng);
            features[(i, j)] = (templates[(y, j)] * jitter + noise_std * g).clamp(0.0, 1.0);
        }
    }
    let ids = (0..n).map(|i| format!("{i:06}")).collect();
    FeatureDataset::new(features, labels, class_count, ids).expect("construction is valid")
}
