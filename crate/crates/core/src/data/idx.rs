//! IDX image/label files (the MNIST and Fashion-MNIST distribution format):
//! big-endian u32 magic and dims, unsigned-byte payload.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

use super::RawDataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Parses one images/labels pair. Pixels are mapped to `p/127.5 − 1` so the
/// data lands in the generator's tanh range.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let (pixels, rows, cols) = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    let d = rows * cols;
    if pixels.len() / d != labels.len() {
        return Err(Error::data(format!(
            "count mismatch: {} images vs {} labels",
            pixels.len() / d,
            labels.len()
        )));
    }
    let samples: Vec<f64> = pixels.iter().map(|&p| p as f64 / 127.5 - 1.0).collect();
    Ok(RawDataset {
        name: "idx".to_string(),
        d,
        samples,
        labels: labels.iter().map(|&l| l as u32).collect(),
        skipped_rows: 0,
        scale_cols: Vec::new(),
    })
}

/// Loads the conventional four files (`train-*` and `t10k-*`) from one
/// directory and pools them into a single dataset.
pub fn load_idx_pooled(dir: &Path, name: &str) -> Result<RawDataset> {
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )?;
    if train.d != test.d {
        return Err(Error::data("train/test image dimensions differ"));
    }
    let mut samples = train.samples;
    samples.extend_from_slice(&test.samples);
    let mut labels = train.labels;
    labels.extend_from_slice(&test.labels);
    Ok(RawDataset {
        name: name.to_string(),
        d: train.d,
        samples,
        labels,
        skipped_rows: 0,
        scale_cols: Vec::new(),
    })
}

fn read_images(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let magic = read_u32_be(&mut file, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::data(format!(
            "{}: bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut file, path)? as usize;
    let rows = read_u32_be(&mut file, path)? as usize;
    let cols = read_u32_be(&mut file, path)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    file.read_exact(&mut pixels)
        .map_err(|_| Error::data(format!("{}: truncated image data", path.display())))?;
    Ok((pixels, rows, cols))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let magic = read_u32_be(&mut file, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::data(format!(
            "{}: bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut file, path)? as usize;
    let mut labels = vec![0u8; count];
    file.read_exact(&mut labels)
        .map_err(|_| Error::data(format!("{}: truncated label data", path.display())))?;
    Ok(labels)
}

fn read_u32_be(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::data(format!("{}: truncated header", path.display())))?;
    Ok(u32::from_be_bytes(buf))
}
