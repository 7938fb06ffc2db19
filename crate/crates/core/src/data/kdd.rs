//! KDD-Cup-99 network-intrusion CSV: 41 features (3 categorical) plus a
//! label field.
//!
//! The label convention is inverted on purpose: attack rows are the majority
//! here, so rows tagged `normal.` become the anomaly class (class 1) and
//! every attack type is pooled as the normal class (class 0). Numeric
//! columns are min-max scaled later, by the protocol, with training-pool
//! statistics.

use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

use super::RawDataset;

pub const NUM_FIELDS: usize = 42; // 41 features + label
const CATEGORICAL: [usize; 3] = [1, 2, 3]; // protocol_type, service, flag

/// Distinct category strings per categorical column, lexicographically
/// sorted so the encoding is stable across runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KddVocab {
    pub protocol: Vec<String>,
    pub service: Vec<String>,
    pub flag: Vec<String>,
}

impl KddVocab {
    pub fn from_rows<'a>(rows: impl Iterator<Item = &'a Vec<String>>) -> KddVocab {
        let mut sets = [
            std::collections::BTreeSet::new(),
            std::collections::BTreeSet::new(),
            std::collections::BTreeSet::new(),
        ];
        for fields in rows {
            for (k, &c) in CATEGORICAL.iter().enumerate() {
                sets[k].insert(fields[c].clone());
            }
        }
        let mut it = sets.into_iter().map(|s| s.into_iter().collect::<Vec<_>>());
        KddVocab {
            protocol: it.next().unwrap(),
            service: it.next().unwrap(),
            flag: it.next().unwrap(),
        }
    }

    pub fn encoded_width(&self) -> usize {
        // 38 numeric features + the three one-hot blocks
        (NUM_FIELDS - 1 - CATEGORICAL.len())
            + self.protocol.len()
            + self.service.len()
            + self.flag.len()
    }

    /// Output column indices that hold numeric (non-one-hot) features.
    pub fn numeric_cols(&self) -> Vec<usize> {
        let mut cols = Vec::new();
        let mut out = 0usize;
        for c in 0..NUM_FIELDS - 1 {
            match c {
                1 => out += self.protocol.len(),
                2 => out += self.service.len(),
                3 => out += self.flag.len(),
                _ => {
                    cols.push(out);
                    out += 1;
                }
            }
        }
        cols
    }
}

fn one_hot(out: &mut Vec<f64>, vocab: &[String], value: &str, unknown: &mut bool) {
    let start = out.len();
    out.resize(start + vocab.len(), 0.0);
    match vocab.binary_search_by(|v| v.as_str().cmp(value)) {
        Ok(i) => out[start + i] = 1.0,
        Err(_) => *unknown = true, // all-zeros block
    }
}

/// Encodes one parsed row against a vocabulary. Returns the feature vector
/// and whether any category was unknown (encoded as an all-zeros block).
pub fn encode_row(fields: &[String], vocab: &KddVocab) -> Result<(Vec<f64>, bool)> {
    if fields.len() != NUM_FIELDS {
        return Err(Error::data(format!(
            "kdd row has {} fields, expected {NUM_FIELDS}",
            fields.len()
        )));
    }
    let mut out = Vec::with_capacity(vocab.encoded_width());
    let mut unknown = false;
    for c in 0..NUM_FIELDS - 1 {
        match c {
            1 => one_hot(&mut out, &vocab.protocol, &fields[c], &mut unknown),
            2 => one_hot(&mut out, &vocab.service, &fields[c], &mut unknown),
            3 => one_hot(&mut out, &vocab.flag, &fields[c], &mut unknown),
            _ => out.push(
                fields[c]
                    .parse::<f64>()
                    .map_err(|_| Error::data(format!("non-numeric field '{}'", fields[c])))?,
            ),
        }
    }
    Ok((out, unknown))
}

pub fn is_anomaly_label(label: &str) -> bool {
    matches!(label, "normal." | "normal")
}

/// Parses the CSV, builds the categorical vocabulary from the file, and
/// encodes every row. Malformed rows are skipped and counted.
pub fn load_kdd(path: &Path) -> Result<RawDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != NUM_FIELDS {
            skipped += 1;
            continue;
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Err(Error::data(format!("{}: no parseable rows", path.display())));
    }

    let vocab = KddVocab::from_rows(rows.iter());
    let width = vocab.encoded_width();

    let mut samples = Vec::with_capacity(rows.len() * width);
    let mut labels = Vec::with_capacity(rows.len());
    for fields in &rows {
        match encode_row(fields, &vocab) {
            Ok((row, _)) => {
                samples.extend_from_slice(&row);
                labels.push(is_anomaly_label(&fields[NUM_FIELDS - 1]) as u32);
            }
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("kdd: skipped {skipped} malformed rows in {}", path.display());
    }

    Ok(RawDataset {
        name: "kdd".to_string(),
        d: width,
        samples,
        labels,
        skipped_rows: skipped,
        scale_cols: vocab.numeric_cols(),
    })
}

/// Accepts either a file or a directory holding one of the usual names.
pub fn load_kdd_dir(path: &Path) -> Result<RawDataset> {
    if path.is_file() {
        return load_kdd(path);
    }
    const CANDIDATES: [&str; 4] = [
        "kddcup.data_10_percent",
        "kddcup.data_10_percent_corrected",
        "kddcup.data",
        "kdd.csv",
    ];
    for name in CANDIDATES {
        let p = path.join(name);
        if p.is_file() {
            return load_kdd(&p);
        }
    }
    Err(Error::data(format!(
        "no KDD file found under {} (tried {CANDIDATES:?})",
        path.display()
    )))
}
