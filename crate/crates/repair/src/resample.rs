//! Turn learned weights into concrete retained-index sets.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::files::fmt_float;
use crate::data::{ExampleWeights, FeatureDataset, ResamplePlan, Strategy};
use crate::error::{Error, Result};

/// Strategy parameters: the weight threshold `t` and the keep fraction `p`.
/// Each strategy reads only the parameter it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleParams {
    pub threshold: f64,
    pub keep_fraction: f64,
}

impl Default for ResampleParams {
    fn default() -> Self {
        ResampleParams {
            threshold: 0.5,
            keep_fraction: 0.5,
        }
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Build a retained-index set from weights under one of the five
/// strategies. Rank ties break by ascending index; `sample` and `uniform`
/// draw from a generator seeded with `seed`.
pub fn resample(
    weights: &ExampleWeights,
    labels: &[usize],
    strategy: Strategy,
    params: &ResampleParams,
    seed: u64,
) -> Result<ResamplePlan> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::InvalidInput("cannot resample an empty dataset".into()));
    }
    if labels.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} labels for {n} weights",
            labels.len()
        )));
    }
    if !(0.0..=1.0).contains(&params.threshold) {
        return Err(Error::InvalidInput(format!(
            "threshold {} outside [0, 1]",
            params.threshold
        )));
    }
    if !(params.keep_fraction > 0.0 && params.keep_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "keep fraction {} outside (0, 1]",
            params.keep_fraction
        )));
    }

    let w = weights.weights();
    let p = params.keep_fraction;
    let mut retained = match strategy {
        Strategy::Threshold => (0..n).filter(|&i| w[i] >= params.threshold).collect(),
        Strategy::Rank => {
            let k = round_half_up(p * n as f64);
            if k == 0 {
                return Err(Error::InvalidInput(format!(
                    "keep fraction {p} of {n} examples rounds to zero"
                )));
            }
            top_k_by_weight((0..n).collect(), &w, k)
        }
        Strategy::ClsRank => {
            let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
            let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
            for (i, &y) in labels.iter().enumerate() {
                per_class[y].push(i);
            }
            let mut keep = Vec::new();
            for (y, members) in per_class.into_iter().enumerate() {
                if members.is_empty() {
                    log::warn!("cls_rank: class {y} is empty, skipped");
                    continue;
                }
                let k = round_half_up(p * members.len() as f64);
                keep.extend(top_k_by_weight(members, &w, k));
            }
            if keep.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "keep fraction {p} retains nothing from any class"
                )));
            }
            keep
        }
        Strategy::Sample => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .filter(|&i| rng.random::<f64>() < w[i])
                .collect::<Vec<_>>()
        }
        Strategy::Uniform => {
            let k = round_half_up(p * n as f64);
            if k == 0 {
                return Err(Error::InvalidInput(format!(
                    "keep fraction {p} of {n} examples rounds to zero"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, n, k).into_vec()
        }
    };
    retained.sort_unstable();

    Ok(ResamplePlan {
        strategy,
        threshold: params.threshold,
        keep_fraction: params.keep_fraction,
        seed,
        retained,
    })
}

/// Largest-weight `k` members; equal weights resolve to the lower index.
fn top_k_by_weight(mut members: Vec<usize>, w: &[f64], k: usize) -> Vec<usize> {
    members.sort_by(|&a, &b| {
        w[b].partial_cmp(&w[a])
            .expect("weights are finite")
            .then(a.cmp(&b))
    });
    members.truncate(k);
    members
}

/// Write a plan as a CSV of retained ids, preceded by a comment line
/// echoing the strategy, its parameters and the seed.
pub fn save_plan(plan: &ResamplePlan, ids: &[String], path: &Path) -> Result<()> {
    if let Some(&bad) = plan.retained.iter().find(|&&i| i >= ids.len()) {
        return Err(Error::InvalidInput(format!(
            "retained index {bad} out of range for {} ids",
            ids.len()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "# strategy={} threshold={} keep={} seed={}",
        plan.strategy,
        fmt_float(plan.threshold),
        fmt_float(plan.keep_fraction),
        plan.seed
    )
    .map_err(|e| Error::io(path, e))?;
    writeln!(out, "id").map_err(|e| Error::io(path, e))?;
    for &i in &plan.retained {
        writeln!(out, "{}", ids[i]).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a plan back, resolving retained ids against a target dataset.
pub fn load_plan(path: &Path, ds: &FeatureDataset) -> Result<ResamplePlan> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let meta = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, "empty file")),
    };
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| Error::format(path, "missing `# strategy=...` line"))?;
    let mut strategy = None;
    let mut threshold = 0.5;
    let mut keep = 0.5;
    let mut seed = 0;
    for field in meta.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("malformed field `{field}`")))?;
        match key {
            "strategy" => strategy = Some(value.parse::<Strategy>()?),
            "threshold" => {
                threshold = value
                    .parse()
                    .map_err(|_| Error::format(path, format!("bad threshold `{value}`")))?
            }
            "keep" => {
                keep = value
                    .parse()
                    .map_err(|_| Error::format(path, format!("bad keep `{value}`")))?
            }
            "seed" => {
                seed = value
                    .parse()
                    .map_err(|_| Error::format(path, format!("bad seed `{value}`")))?
            }
            other => return Err(Error::format(path, format!("unknown field `{other}`"))),
        }
    }
    let strategy = strategy.ok_or_else(|| Error::format(path, "missing strategy field"))?;

    match lines.next() {
        Some(line) => {
            if line.map_err(|e| Error::io(path, e))? != "id" {
                return Err(Error::format(path, "missing `id` header"));
            }
        }
        None => return Err(Error::format(path, "missing `id` header")),
    }

    let index_of: std::collections::HashMap<&str, usize> = ds
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut retained = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim_end_matches('\r');
        if id.is_empty() {
            continue;
        }
        match index_of.get(id) {
            Some(&i) => retained.push(i),
            None => {
                return Err(Error::format(
                    path,
                    format!("retained id `{id}` not present in the target dataset"),
                ))
            }
        }
    }
    retained.sort_unstable();
    retained.dedup();

    Ok(ResamplePlan {
        strategy,
        threshold,
        keep_fraction: keep,
        seed,
        retained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    // proptest's prelude exports a `Strategy` trait; ours wins here
    use crate::data::Strategy;

    fn from_w(values: &[f64]) -> ExampleWeights {
        ExampleWeights::from_omega(values.iter().map(|&w| (w / (1.0 - w)).ln()).collect())
            .unwrap()
    }

    #[test]
    fn threshold_keeps_exactly_the_rule() {
        let w = from_w(&[0.9, 0.4, 0.6]);
        let plan = resample(
            &w,
            &[0, 0, 0],
            Strategy::Threshold,
            &ResampleParams { threshold: 0.5, keep_fraction: 1.0 },
            0,
        )
        .unwrap();
        assert_eq!(plan.retained, vec![0, 2]);
    }

    #[test]
    fn rank_keeps_top_half() {
        let w = from_w(&[0.9, 0.4, 0.6, 0.1]);
        let plan = resample(&w, &[0; 4], Strategy::Rank, &ResampleParams::default(), 0).unwrap();
        assert_eq!(plan.retained, vec![0, 2]);
    }

    #[test]
    fn rank_ties_break_by_index() {
        let w = from_w(&[0.5, 0.5, 0.5, 0.5]);
        let plan = resample(&w, &[0; 4], Strategy::Rank, &ResampleParams::default(), 0).unwrap();
        assert_eq!(plan.retained, vec![0, 1]);
    }

    #[test]
    fn cls_rank_keeps_per_class_top() {
        let w = from_w(&[0.9, 0.1, 0.2, 0.8]);
        let plan = resample(
            &w,
            &[0, 0, 1, 1],
            Strategy::ClsRank,
            &ResampleParams::default(),
            0,
        )
        .unwrap();
        assert_eq!(plan.retained, vec![0, 3]);
    }

    #[test]
    fn cls_rank_skips_empty_classes() {
        let w = from_w(&[0.9, 0.1, 0.2, 0.8]);
        // class 1 is empty (labels jump from 0 to 2)
        let plan = resample(
            &w,
            &[0, 0, 2, 2],
            Strategy::ClsRank,
            &ResampleParams::default(),
            0,
        )
        .unwrap();
        assert_eq!(plan.retained, vec![0, 3]);
    }

    #[test]
    fn sample_size_tracks_the_weight_sum() {
        let n = 10000;
        let w = from_w(&vec![0.3; n]);
        let plan = resample(
            &w,
            &vec![0; n],
            Strategy::Sample,
            &ResampleParams::default(),
            3,
        )
        .unwrap();
        let sigma = (n as f64 * 0.3 * 0.7).sqrt();
        let got = plan.retained.len() as f64;
        assert!(
            (got - 3000.0).abs() <= 3.0 * sigma,
            "kept {got}, expected 3000 +- {:.1}",
            3.0 * sigma
        );
    }

    #[test]
    fn uniform_is_reproducible_and_full_at_p_one() {
        let w = ExampleWeights::neutral(20);
        let params = ResampleParams { threshold: 0.5, keep_fraction: 0.4 };
        let a = resample(&w, &[0; 20], Strategy::Uniform, &params, 5).unwrap();
        let b = resample(&w, &[0; 20], Strategy::Uniform, &params, 5).unwrap();
        assert_eq!(a.retained, b.retained);
        assert_eq!(a.retained.len(), 8);

        let full = resample(
            &w,
            &[0; 20],
            Strategy::Uniform,
            &ResampleParams { threshold: 0.5, keep_fraction: 1.0 },
            5,
        )
        .unwrap();
        assert_eq!(full.retained, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn zero_cardinality_is_an_error() {
        let w = ExampleWeights::neutral(3);
        let err = resample(
            &w,
            &[0; 3],
            Strategy::Rank,
            &ResampleParams { threshold: 0.5, keep_fraction: 0.1 },
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("rounds to zero"), "{err}");
    }

    #[test]
    fn plan_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.csv");
        let ds = FeatureDataset::new(
            ndarray::Array2::zeros((4, 1)),
            vec![0, 1, 0, 1],
            2,
            vec!["w".into(), "x".into(), "y".into(), "z".into()],
        )
        .unwrap();
        let plan = ResamplePlan {
            strategy: Strategy::Rank,
            threshold: 0.5,
            keep_fraction: 0.75,
            seed: 9,
            retained: vec![0, 2, 3],
        };
        save_plan(&plan, ds.ids(), &path).unwrap();
        let back = load_plan(&path, &ds).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn loading_a_plan_with_unknown_ids_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.csv");
        std::fs::write(&path, "# strategy=rank threshold=0.5 keep=0.5 seed=0\nid\nnope\n")
            .unwrap();
        let ds = FeatureDataset::new(
            ndarray::Array2::zeros((1, 1)),
            vec![0],
            1,
            vec!["a".into()],
        )
        .unwrap();
        assert!(load_plan(&path, &ds).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rank_cardinality_is_exact(
            weights in proptest::collection::vec(-4.0f64..4.0, 1..120),
            p in 0.05f64..1.0,
        ) {
            let n = weights.len();
            let w = ExampleWeights::from_omega(weights).unwrap();
            let k = ((p * n as f64) + 0.5).floor() as usize;
            prop_assume!(k > 0);
            let plan = resample(
                &w,
                &vec![0; n],
                Strategy::Rank,
                &ResampleParams { threshold: 0.5, keep_fraction: p },
                0,
            ).unwrap();
            prop_assert_eq!(plan.retained.len(), k);
            let mut sorted = plan.retained.clone();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), plan.retained.len());
        }

        #[test]
        fn cls_rank_preserves_class_proportions(
            labels in proptest::collection::vec(0usize..4, 4..120),
            p in 0.05f64..1.0,
            seed in 0u64..50,
        ) {
            let n = labels.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let omega: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w = ExampleWeights::from_omega(omega).unwrap();
            let result = resample(
                &w,
                &labels,
                Strategy::ClsRank,
                &ResampleParams { threshold: 0.5, keep_fraction: p },
                0,
            );
            let plan = match result {
                Ok(plan) => plan,
                // every class rounded to zero
                Err(_) => return Ok(()),
            };
            let class_count = labels.iter().copied().max().unwrap() + 1;
            let mut kept = vec![0usize; class_count];
            for &i in &plan.retained {
                kept[labels[i]] += 1;
            }
            for y in 0..class_count {
                let n_y = labels.iter().filter(|&&l| l == y).count();
                let expect = ((p * n_y as f64) + 0.5).floor() as usize;
                prop_assert_eq!(kept[y], expect, "class {}", y);
            }
        }

        #[test]
        fn rank_is_invariant_under_monotone_transforms(
            weights in proptest::collection::vec(-4.0f64..4.0, 2..80),
            p in 0.1f64..1.0,
        ) {
            let n = weights.len();
            let w = ExampleWeights::from_omega(weights.clone()).unwrap();
            // omega -> 3*omega + 1 maps w through a strictly increasing
            // transform of the selection probability
            let stretched = ExampleWeights::from_omega(
                weights.iter().map(|&o| 3.0 * o + 1.0).collect(),
            ).unwrap();
            let params = ResampleParams { threshold: 0.5, keep_fraction: p };
            let a = resample(&w, &vec![0; n], Strategy::Rank, &params, 0);
            let b = resample(&stretched, &vec![0; n], Strategy::Rank, &params, 0);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.retained, b.retained),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "disagreement: {:?} vs {:?}", a.is_ok(), b.is_ok()),
            }
        }

        #[test]
        fn threshold_is_the_literal_rule(
            weights in proptest::collection::vec(-4.0f64..4.0, 1..80),
            t in 0.0f64..1.0,
        ) {
            let w = ExampleWeights::from_omega(weights).unwrap();
            let plan = resample(
                &w,
                &vec![0; w.len()],
                Strategy::Threshold,
                &ResampleParams { threshold: t, keep_fraction: 1.0 },
                0,
            ).unwrap();
            let expect: Vec<usize> =
                (0..w.len()).filter(|&i| w.weight(i) >= t).collect();
            prop_assert_eq!(plan.retained, expect);
        }
    }
}
