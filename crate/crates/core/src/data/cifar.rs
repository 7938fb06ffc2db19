//! CIFAR-10 binary batches: records of one label byte followed by 3072
//! pixel bytes, flattened to vectors in [−1, 1].

use std::path::Path;

use crate::error::{Error, Result};

use super::RawDataset;

pub const RECORD_BYTES: usize = 1 + 3072;

/// Loads a single `.bin` batch or a directory of them (`data_batch_1..5`
/// plus `test_batch`, in that order).
pub fn load_cifar10(path: &Path) -> Result<RawDataset> {
    let files: Vec<std::path::PathBuf> = if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        let names = [
            "data_batch_1.bin",
            "data_batch_2.bin",
            "data_batch_3.bin",
            "data_batch_4.bin",
            "data_batch_5.bin",
            "test_batch.bin",
        ];
        let found: Vec<_> = names
            .iter()
            .map(|n| path.join(n))
            .filter(|p| p.is_file())
            .collect();
        if found.is_empty() {
            return Err(Error::data(format!(
                "no CIFAR-10 batches under {}",
                path.display()
            )));
        }
        found
    };

    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for file in files {
        let bytes = std::fs::read(&file)?;
        if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
            return Err(Error::data(format!(
                "{}: {} bytes is not a whole number of {RECORD_BYTES}-byte records",
                file.display(),
                bytes.len()
            )));
        }
        for record in bytes.chunks_exact(RECORD_BYTES) {
            labels.push(record[0] as u32);
            samples.extend(record[1..].iter().map(|&p| p as f64 / 127.5 - 1.0));
        }
    }

    Ok(RawDataset {
        name: "cifar10".to_string(),
        d: 3072,
        samples,
        labels,
        skipped_rows: 0,
        scale_cols: Vec::new(),
    })
}
