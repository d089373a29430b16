//! CSV interchange formats: feature tables and weight files.
//!
//! Both formats are UTF-8 with LF line endings and `.` as the decimal
//! separator. Feature files carry a `id,label,f0,...,f{d-1}` header; weight
//! files carry `id,omega,w`, where `w` is informational only and recomputed
//! from `omega` on load.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::{sigmoid, ExampleWeights, FeatureDataset};
use crate::error::{Error, Result};

/// Shortest exact decimal form, round-trippable through `str::parse::<f64>`.
pub(crate) fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

/// Fixed-width scientific form with 18 significant digits; always
/// round-trips exactly.
pub(crate) fn fmt_float_full(x: f64) -> String {
    format!("{x:.17e}")
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(',') || id.contains('\n') || id.contains('\r') {
        return Err(Error::InvalidInput(format!(
            "id `{}` is empty or contains a separator",
            id.escape_default()
        )));
    }
    Ok(())
}

/// Load a feature CSV, inferring the class count as `max(label) + 1`.
pub fn load_features_csv(path: &Path) -> Result<FeatureDataset> {
    load_features_csv_with_classes(path, None)
}

/// Load a feature CSV with an explicit class count override.
pub fn load_features_csv_with_classes(
    path: &Path,
    class_count: Option<usize>,
) -> Result<FeatureDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::format(path, "empty file (missing header)")),
    };
    let d = parse_feature_header(&header, path)?;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let id = cells.next().unwrap_or("");
        check_id(id).map_err(|_| {
            Error::format(path, format!("line {}: invalid id", lineno + 1))
        })?;
        if !seen.insert(id.to_string()) {
            return Err(Error::format(
                path,
                format!("line {}: duplicate id `{id}`", lineno + 1),
            ));
        }
        let label_cell = cells.next().ok_or_else(|| {
            Error::format(path, format!("line {}: missing label", lineno + 1))
        })?;
        if label_cell.starts_with('-') {
            return Err(Error::format(
                path,
                format!("line {}: negative label `{label_cell}`", lineno + 1),
            ));
        }
        let label: usize = label_cell.parse().map_err(|_| {
            Error::format(
                path,
                format!("line {}: label `{label_cell}` is not a nonnegative integer", lineno + 1),
            )
        })?;

        let mut row = 0usize;
        for cell in cells {
            let v: f64 = cell.parse().map_err(|_| {
                Error::format(
                    path,
                    format!("line {}: non-numeric feature cell `{cell}`", lineno + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    format!("line {}: non-finite feature cell `{cell}`", lineno + 1),
                ));
            }
            values.push(v);
            row += 1;
        }
        if row != d {
            return Err(Error::format(
                path,
                format!("line {}: ragged row ({row} features, header says {d})", lineno + 1),
            ));
        }
        ids.push(id.to_string());
        labels.push(label);
    }

    let n = ids.len();
    let inferred = labels.iter().copied().max().map_or(1, |m| m + 1);
    let class_count = match class_count {
        Some(c) => {
            if inferred > c {
                return Err(Error::format(
                    path,
                    format!("label {} out of range for class count {c}", inferred - 1),
                ));
            }
            c
        }
        None => inferred,
    };
    let features = Array2::from_shape_vec((n, d), values).expect("row widths checked");
    FeatureDataset::new(features, labels, class_count, ids)
}

fn parse_feature_header(header: &str, path: &Path) -> Result<usize> {
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::format(
            path,
            "header must be `id,label,f0,...` with at least one feature column",
        ));
    }
    for (k, col) in cols[2..].iter().enumerate() {
        if *col != format!("f{k}") {
            return Err(Error::format(
                path,
                format!("feature column {} named `{col}`, expected `f{k}`", k + 2),
            ));
        }
    }
    Ok(cols.len() - 2)
}

/// Write a feature CSV in the canonical layout.
pub fn save_features_csv(ds: &FeatureDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut header = String::from("id,label");
    for k in 0..ds.dim() {
        write!(header, ",f{k}").unwrap();
    }
    writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
    for i in 0..ds.len() {
        check_id(&ds.ids()[i])?;
        let mut line = format!("{},{}", ds.ids()[i], ds.labels()[i]);
        for v in ds.features().row(i) {
            line.push(',');
            line.push_str(&fmt_float(*v));
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Write a weight file: one `(id, omega, w)` row per example.
pub fn save_weights_csv(weights: &ExampleWeights, ids: &[String], path: &Path) -> Result<()> {
    if weights.len() != ids.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights but {} ids",
            weights.len(),
            ids.len()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "id,omega,w").map_err(|e| Error::io(path, e))?;
    for (i, id) in ids.iter().enumerate() {
        check_id(id)?;
        let omega = weights.omega()[i];
        writeln!(out, "{id},{},{}", fmt_float_full(omega), fmt_float(sigmoid(omega)))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a weight file back as `(ids, weights)` in file order. The stored
/// `w` column is ignored; selection probabilities are recomputed from the
/// pre-activations.
pub fn load_weights_csv(path: &Path) -> Result<(Vec<String>, ExampleWeights)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim_end_matches('\r') != "id,omega,w" {
                return Err(Error::format(path, "header must be `id,omega,w`"));
            }
        }
        None => return Err(Error::format(path, "empty file (missing header)")),
    }
    let mut ids = Vec::new();
    let mut omega = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(Error::format(
                path,
                format!("line {}: expected 3 cells, found {}", lineno + 1, cells.len()),
            ));
        }
        if !seen.insert(cells[0].to_string()) {
            return Err(Error::format(
                path,
                format!("line {}: duplicate id `{}`", lineno + 1, cells[0]),
            ));
        }
        let o: f64 = cells[1].parse().map_err(|_| {
            Error::format(
                path,
                format!("line {}: non-numeric omega `{}`", lineno + 1, cells[1]),
            )
        })?;
        if !o.is_finite() {
            return Err(Error::format(
                path,
                format!("line {}: non-finite omega", lineno + 1),
            ));
        }
        ids.push(cells[0].to_string());
        omega.push(o);
    }
    Ok((ids, ExampleWeights::from_omega(omega)?))
}

/// Read a weight file and align it to a target dataset's id order.
///
/// Every dataset id must appear in the file and vice versa.
pub fn load_weights_for(path: &Path, ds: &FeatureDataset) -> Result<ExampleWeights> {
    let (ids, weights) = load_weights_csv(path)?;
    let by_id: std::collections::HashMap<&str, f64> = ids
        .iter()
        .map(String::as_str)
        .zip(weights.omega().iter().copied())
        .collect();
    let missing: Vec<&str> = ds
        .ids()
        .iter()
        .map(String::as_str)
        .filter(|id| !by_id.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(Error::format(
            path,
            format!(
                "{} dataset ids missing from weight file: {}{}",
                missing.len(),
                shown.join(", "),
                if missing.len() > shown.len() { ", ..." } else { "" }
            ),
        ));
    }
    if ids.len() != ds.len() {
        return Err(Error::format(
            path,
            format!(
                "weight file has {} ids but the dataset has {} (id set mismatch)",
                ids.len(),
                ds.len()
            ),
        ));
    }
    let omega = ds.ids().iter().map(|id| by_id[id.as_str()]).collect();
    ExampleWeights::from_omega(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn ds3() -> FeatureDataset {
        FeatureDataset::new(
            array![[0.5, -1.0], [2.0, 0.25], [1e-12, 3.0]],
            vec![0, 1, 1],
            2,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap()
    }

    #[test]
    fn feature_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let ds = ds3();
        save_features_csv(&ds, &path).unwrap();
        let back = load_features_csv(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn three_rows_two_features() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "id,label,f0,f1\nx,0,1.0,2.0\ny,1,3.0,4.0\nz,1,5.0,6.0\n").unwrap();
        let ds = load_features_csv(&path).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.class_count()), (3, 2, 2));
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "id,label,f0\nx,0,1.0\nx,1,2.0\n").unwrap();
        let err = load_features_csv(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate id `x`"), "{err}");
    }

    #[test]
    fn gap_in_labels_leaves_an_empty_class() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "id,label,f0\nx,0,1.0\ny,2,2.0\n").unwrap();
        let ds = load_features_csv(&path).unwrap();
        assert_eq!(ds.class_count(), 3);
        assert_eq!(ds.empty_classes(), vec![1]);
    }

    #[test]
    fn ragged_and_negative_and_non_numeric_rows_fail() {
        let dir = tempfile::tempdir().unwrap();
        for (name, body, needle) in [
            ("r.csv", "id,label,f0,f1\nx,0,1.0\n", "ragged"),
            ("n.csv", "id,label,f0\nx,-1,1.0\n", "negative label"),
            ("c.csv", "id,label,f0\nx,0,abc\n", "non-numeric"),
        ] {
            let path = dir.path().join(name);
            std::fs::write(&path, body).unwrap();
            let err = load_features_csv(&path).unwrap_err();
            assert!(err.to_string().contains(needle), "{err}");
        }
    }

    #[test]
    fn weight_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let omega: Vec<f64> = (0..100).map(|_| rng.random_range(-20.0..20.0)).collect();
        let ids: Vec<String> = (0..100).map(|i| format!("e{i}")).collect();
        let w = ExampleWeights::from_omega(omega.clone()).unwrap();
        save_weights_csv(&w, &ids, &path).unwrap();
        let (back_ids, back) = load_weights_csv(&path).unwrap();
        assert_eq!(back_ids, ids);
        assert_eq!(back.omega(), omega.as_slice());
    }

    #[test]
    fn zero_omega_stores_half() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let w = ExampleWeights::from_omega(vec![0.0]).unwrap();
        save_weights_csv(&w, &["only".into()], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",0.5"), "{text}");
    }

    #[test]
    fn stored_w_column_is_not_trusted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "id,omega,w\na,0.0,0.99\n").unwrap();
        let (_, w) = load_weights_csv(&path).unwrap();
        assert_eq!(w.weight(0), 0.5);
    }

    #[test]
    fn alignment_reports_missing_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "id,omega,w\na,0.0,0.5\nb,1.0,0.7\n").unwrap();
        let err = load_weights_for(&path, &ds3()).unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
        assert!(err.to_string().contains('c'), "{err}");
    }

    #[test]
    fn alignment_reorders_to_dataset_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "id,omega,w\nc,3.0,0\nb,2.0,0\na,1.0,0\n").unwrap();
        let w = load_weights_for(&path, &ds3()).unwrap();
        assert_eq!(w.omega(), &[1.0, 2.0, 3.0]);
    }
}
