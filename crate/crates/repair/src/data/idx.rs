//! Big-endian IDX image/label files (the MNIST container format).

use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use ndarray::Array2;

use crate::data::FeatureDataset;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Load an IDX image/label file pair into a dataset.
///
/// Pixels are flattened row-major to `d = rows * cols` features and scaled
/// to `[0, 1]` by dividing by 255. The class count is `max(label) + 1`
/// (10 for the standard MNIST files). Example ids are the zero-based
/// record index, zero-padded.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<FeatureDataset> {
    let images = read_all(image_path)?;
    let labels = read_all(label_path)?;

    let (pixels, count, rows, cols) = parse_images(&images, image_path)?;
    let label_values = parse_labels(&labels, label_path)?;

    if label_values.len() != count {
        return Err(Error::format(
            label_path,
            format!(
                "item count mismatch: {} images in {} but {} labels",
                count,
                image_path.display(),
                label_values.len()
            ),
        ));
    }

    let d = rows * cols;
    let mut features = Array2::zeros((count, d));
    for (i, chunk) in pixels.chunks_exact(d.max(1)).enumerate().take(count) {
        for (j, &px) in chunk.iter().enumerate() {
            features[(i, j)] = f64::from(px) / 255.0;
        }
    }

    let class_count = label_values.iter().copied().max().map_or(1, |m| m + 1);
    let ids = (0..count).map(|i| format!("{i:06}")).collect();
    FeatureDataset::new(features, label_values, class_count, ids)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_images<'a>(bytes: &'a [u8], path: &Path) -> Result<(&'a [u8], usize, usize, usize)> {
    let mut cur = std::io::Cursor::new(bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(path, "truncated header"))?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            path,
            format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let count = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(path, "truncated header"))? as usize;
    let rows = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(path, "truncated header"))? as usize;
    let cols = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(path, "truncated header"))? as usize;

    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(path, "image dimensions overflow"))?;
    let payload = &bytes[16..];
    if payload.len() < expected {
        return Err(Error::format(
            path,
            format!(
                "truncated payload: expected {expected} pixel bytes, found {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            path,
            format!(
                "trailing data: expected {expected} pixel bytes, found {}",
                payload.len()
            ),
        ));
    }
    Ok((payload, count, rows, cols))
}

fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let mut cur = std::io::Cursor::new(bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(path, "truncated header"))?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            path,
            format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let count = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::format(path, "truncated header"))? as usize;
    let mut values = vec![0u8; count];
    cur.read_exact(&mut values)
        .map_err(|_| Error::format(path, format!("truncated payload: expected {count} labels")))?;
    if (bytes.len() - 8) > count {
        return Err(Error::format(
            path,
            format!("trailing data: expected {count} label bytes, found {}", bytes.len() - 8),
        ));
    }
    Ok(values.into_iter().map(usize::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_images(path: &Path, rows: usize, cols: usize, images: &[Vec<u8>]) {
        let mut f = std::fs::File::create(path).unwrap();
        f.write_all(&IMAGE_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(images.len() as u32).to_be_bytes()).unwrap();
        f.write_all(&(rows as u32).to_be_bytes()).unwrap();
        f.write_all(&(cols as u32).to_be_bytes()).unwrap();
        for img in images {
            f.write_all(img).unwrap();
        }
    }

    fn write_idx_labels(path: &Path, labels: &[u8]) {
        let mut f = std::fs::File::create(path).unwrap();
        f.write_all(&LABEL_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    // Four 2x2 images with pixel values known by construction.
    #[test]
    fn decodes_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        write_idx_images(
            &img,
            2,
            2,
            &[
                vec![0, 51, 102, 153],
                vec![255, 0, 255, 0],
                vec![10, 20, 30, 40],
                vec![0, 0, 0, 255],
            ],
        );
        write_idx_labels(&lab, &[3, 1, 0, 2]);

        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.class_count(), 4);
        assert_eq!(ds.labels(), &[3, 1, 0, 2]);
        // byte-level reference decode
        let expect = [
            [0.0, 51.0 / 255.0, 102.0 / 255.0, 153.0 / 255.0],
            [1.0, 0.0, 1.0, 0.0],
            [10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0, 40.0 / 255.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(ds.features()[(i, j)], expect[i][j]);
            }
        }
        assert_eq!(ds.ids()[0], "000000");
    }

    #[test]
    fn empty_body_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        write_idx_images(&img, 2, 2, &[]);
        write_idx_labels(&lab, &[]);
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 0);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        write_idx_images(&img, 1, 1, &[vec![1], vec![2], vec![3], vec![4], vec![5]]);
        write_idx_labels(&lab, &[0, 1, 2, 3, 4, 5]);
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(err.to_string().contains("mismatch"), "{err}");
    }

    #[test]
    fn bad_magic_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        std::fs::write(&img, 0x0000_0804u32.to_be_bytes()).unwrap();
        write_idx_labels(&lab, &[]);
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        let mut f = std::fs::File::create(&img).unwrap();
        f.write_all(&IMAGE_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&[1, 2, 3]).unwrap(); // 8 bytes short
        drop(f);
        write_idx_labels(&lab, &[0, 1]);
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }
}
