//! Dataset loading and the one-class anomaly protocol.
//!
//! Official train/test splits are pooled, one class is designated anomalous,
//! the pool is reshuffled and re-split 80/20, and anomalies are removed from
//! the training side before any model sees it.

pub mod cifar;
pub mod idx;
pub mod kdd;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Unsplit data as loaded from disk: class labels, not anomaly flags.
pub struct RawDataset {
    pub name: String,
    pub d: usize,
    /// `n × d`, row-major.
    pub samples: Vec<f64>,
    pub labels: Vec<u32>,
    /// Malformed rows dropped by the loader.
    pub skipped_rows: usize,
    /// Columns to min-max scale with training-pool statistics (KDD numeric
    /// features). Empty for data already in range.
    pub scale_cols: Vec<usize>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Clone, Debug)]
pub struct DatasetMeta {
    pub source: String,
    pub anomaly_class: u32,
    pub d: usize,
}

/// Sample matrix with binary anomaly flags (1 = anomalous).
#[derive(Clone)]
pub struct LabeledDataset {
    pub samples: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub labels: Vec<u8>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.d..(i + 1) * self.d]
    }

    /// Single row as a `[1 × d]` tensor.
    pub fn row_tensor(&self, i: usize) -> Tensor {
        Tensor::matrix(1, self.d, self.row(i).to_vec()).expect("stored rows are finite")
    }

    /// Gathers the given rows into a `[len × d]` batch tensor.
    pub fn batch(&self, rows: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Tensor::matrix(rows.len(), self.d, data).expect("stored rows are finite")
    }

    pub fn anomaly_rate(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.n.max(1) as f64
    }
}

/// How to carve the pooled data.
#[derive(Clone, Copy, Debug)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub eval_fraction_of_train: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: 0.8,
            eval_fraction_of_train: 0.1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::contract("train_fraction must lie in (0,1)"));
        }
        if !(self.eval_fraction_of_train >= 0.0 && self.eval_fraction_of_train < 1.0) {
            return Err(Error::contract("eval_fraction_of_train must lie in [0,1)"));
        }
        Ok(())
    }
}

/// Per-column min-max transform fitted on the training pool.
#[derive(Clone, Debug)]
pub struct Scaler {
    cols: Vec<usize>,
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl Scaler {
    fn fit(raw: &RawDataset, pool_rows: &[usize]) -> Option<Scaler> {
        if raw.scale_cols.is_empty() {
            return None;
        }
        let mut mins = vec![f64::INFINITY; raw.scale_cols.len()];
        let mut maxs = vec![f64::NEG_INFINITY; raw.scale_cols.len()];
        for &r in pool_rows {
            let row = raw.row(r);
            for (k, &c) in raw.scale_cols.iter().enumerate() {
                mins[k] = mins[k].min(row[c]);
                maxs[k] = maxs[k].max(row[c]);
            }
        }
        Some(Scaler {
            cols: raw.scale_cols.clone(),
            mins,
            maxs,
        })
    }

    fn apply(&self, row: &mut [f64]) {
        for (k, &c) in self.cols.iter().enumerate() {
            let span = self.maxs[k] - self.mins[k];
            row[c] = if span == 0.0 {
                0.0
            } else {
                (row[c] - self.mins[k]) / span
            };
        }
    }

    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    pub fn maxs(&self) -> &[f64] {
        &self.maxs
    }
}

/// The realized one-class protocol for one (dataset, anomaly class) pair.
pub struct Protocol {
    /// One-class training data: anomaly rows removed, labels all zero.
    pub train_normals: LabeledDataset,
    /// Labeled model-selection split carved out of the pool before anomaly
    /// removal.
    pub eval: LabeledDataset,
    /// Held-out 20%, both classes.
    pub test: LabeledDataset,
    /// Fitted scaler (when the source needs one), for hygiene checks and for
    /// scoring the whole dataset.
    pub scaler: Option<Scaler>,
    /// Pool row indices into the raw dataset (pre eval carve), kept so
    /// disjointness is checkable.
    pub pool_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Pools everything, binarizes labels against `anomaly_class`, shuffles with
/// `spec.seed`, re-splits 80/20, carves the labeled eval slice out of the
/// pool, and drops anomalies from what remains. `limit` subsamples the pool
/// (after shuffling) for desk-scale runs; the test split is untouched.
pub fn make_protocol(
    raw: &RawDataset,
    anomaly_class: u32,
    spec: SplitSpec,
    limit: Option<usize>,
) -> Result<Protocol> {
    spec.validate()?;
    if raw.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    if !raw.labels.contains(&anomaly_class) {
        return Err(Error::data(format!(
            "anomaly class {anomaly_class} not present in {}",
            raw.name
        )));
    }

    let n = raw.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let n_pool = ((n as f64) * spec.train_fraction).round() as usize;
    let (pool, test) = order.split_at(n_pool);
    let mut pool = pool.to_vec();
    let test = test.to_vec();
    if let Some(limit) = limit {
        pool.truncate(limit);
    }

    let scaler = Scaler::fit(raw, &pool);

    let n_eval = ((pool.len() as f64) * spec.eval_fraction_of_train).round() as usize;
    let (eval_rows, train_rows) = pool.split_at(n_eval);

    let materialize = |rows: &[usize], only_normals: bool, source: &str| -> LabeledDataset {
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for &r in rows {
            let flag = (raw.labels[r] == anomaly_class) as u8;
            if only_normals && flag == 1 {
                continue;
            }
            let mut row = raw.row(r).to_vec();
            if let Some(s) = &scaler {
                s.apply(&mut row);
            }
            samples.extend_from_slice(&row);
            labels.push(flag);
        }
        let n = labels.len();
        LabeledDataset {
            samples,
            n,
            d: raw.d,
            labels,
            meta: DatasetMeta {
                source: source.to_string(),
                anomaly_class,
                d: raw.d,
            },
        }
    };

    let train_normals = materialize(train_rows, true, &raw.name);
    if train_normals.n == 0 {
        return Err(Error::data("no normal samples left for training"));
    }
    let eval = materialize(eval_rows, false, &raw.name);
    let test_ds = materialize(&test, false, &raw.name);

    Ok(Protocol {
        train_normals,
        eval,
        test: test_ds,
        scaler,
        pool_rows: pool,
        test_rows: test,
    })
}

impl Protocol {
    /// Every row of the raw dataset, scaled with the already-fitted training
    /// statistics — the literal "test on the whole dataset" mode.
    pub fn whole_dataset(&self, raw: &RawDataset, anomaly_class: u32) -> LabeledDataset {
        let mut samples = Vec::with_capacity(raw.samples.len());
        let mut labels = Vec::with_capacity(raw.len());
        for r in 0..raw.len() {
            let mut row = raw.row(r).to_vec();
            if let Some(s) = &self.scaler {
                s.apply(&mut row);
            }
            samples.extend_from_slice(&row);
            labels.push((raw.labels[r] == anomaly_class) as u8);
        }
        LabeledDataset {
            samples,
            n: raw.len(),
            d: raw.d,
            labels,
            meta: DatasetMeta {
                source: raw.name.clone(),
                anomaly_class,
                d: raw.d,
            },
        }
    }
}

/// Two interleaving half-moons mapped into the tanh range, moon 0 playing
/// the normal class. A fixed generation seed makes the point set behave
/// like a file on disk; protocol shuffling stays per-experiment.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, noise).expect("noise >= 0");
    let mut samples = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = std::f64::consts::PI * rand::Rng::gen::<f64>(&mut rng);
        let class = (i % 2) as u32;
        let (mut x, mut y) = if class == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        x += gauss.sample(&mut rng);
        y += gauss.sample(&mut rng);
        samples.push((x - 0.5) / 1.5);
        samples.push((y - 0.25) / 1.25);
        labels.push(class);
    }
    RawDataset {
        name: "moons".to_string(),
        d: 2,
        samples,
        labels,
        skipped_rows: 0,
        scale_cols: Vec::new(),
    }
}

/// Fixed parameters used when `moons` is requested as a named dataset.
pub fn moons_default() -> RawDataset {
    make_moons(1000, 0.08, 7071)
}

/// Loads a named dataset from the conventional layout under `data_dir`
/// (`<data_dir>/mnist/train-images-idx3-ubyte`, `<data_dir>/kdd/...`, ...).
pub fn load_named(name: &str, data_dir: &Path) -> Result<RawDataset> {
    match name {
        "mnist" => idx::load_idx_pooled(&data_dir.join("mnist"), "mnist"),
        "fashion" => idx::load_idx_pooled(&data_dir.join("fashion"), "fashion"),
        "cifar10" => cifar::load_cifar10(&data_dir.join("cifar10")),
        "kdd" => kdd::load_kdd_dir(&data_dir.join("kdd")),
        "moons" => Ok(moons_default()),
        other => Err(Error::data(format!("unknown dataset '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_raw(n: usize) -> RawDataset {
        // feature = class id + small offset, classes 0..4 round-robin
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = (i % 5) as u32;
            samples.extend_from_slice(&[class as f64, i as f64 / n as f64]);
            labels.push(class);
        }
        RawDataset {
            name: "tiny".into(),
            d: 2,
            samples,
            labels,
            skipped_rows: 0,
            scale_cols: Vec::new(),
        }
    }

    #[test]
    fn split_sizes_match_fractions() {
        let raw = tiny_raw(1000);
        let p = make_protocol(&raw, 0, SplitSpec::new(3), None).unwrap();
        assert_eq!(p.test.n, 200);
        assert_eq!(p.eval.n, 80); // 10% of the 800 pool
        // 720 remaining, one of five classes removed on average
        assert!(p.train_normals.n > 500 && p.train_normals.n < 650);
        assert!(p.train_normals.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn same_seed_same_split() {
        let raw = tiny_raw(500);
        let a = make_protocol(&raw, 1, SplitSpec::new(9), None).unwrap();
        let b = make_protocol(&raw, 1, SplitSpec::new(9), None).unwrap();
        assert_eq!(a.pool_rows, b.pool_rows);
        assert_eq!(a.test_rows, b.test_rows);
        assert_eq!(a.train_normals.samples, b.train_normals.samples);
        let c = make_protocol(&raw, 1, SplitSpec::new(10), None).unwrap();
        assert_ne!(a.pool_rows, c.pool_rows);
    }

    #[test]
    fn pool_and_test_disjoint() {
        let raw = tiny_raw(300);
        let p = make_protocol(&raw, 2, SplitSpec::new(1), None).unwrap();
        for r in &p.pool_rows {
            assert!(!p.test_rows.contains(r));
        }
        assert_eq!(p.pool_rows.len() + p.test_rows.len(), 300);
    }

    #[test]
    fn limit_subsamples_pool_only() {
        let raw = tiny_raw(1000);
        let p = make_protocol(&raw, 0, SplitSpec::new(3), Some(100)).unwrap();
        assert_eq!(p.pool_rows.len(), 100);
        assert_eq!(p.test.n, 200);
    }

    #[test]
    fn absent_anomaly_class_rejected() {
        let raw = tiny_raw(100);
        assert!(make_protocol(&raw, 77, SplitSpec::new(1), None).is_err());
    }

    #[test]
    fn test_split_base_rate_near_class_share() {
        let raw = tiny_raw(5000);
        let p = make_protocol(&raw, 3, SplitSpec::new(5), None).unwrap();
        let rate = p.test.anomaly_rate();
        assert!((rate - 0.2).abs() < 0.05, "rate {rate}"); // 1 of 5 classes
    }

    #[test]
    fn moons_are_deterministic_and_in_range() {
        let a = make_moons(100, 0.05, 11);
        let b = make_moons(100, 0.05, 11);
        assert_eq!(a.samples, b.samples);
        assert!(a.samples.iter().all(|v| v.abs() <= 1.2));
        assert_eq!(a.labels.iter().filter(|&&l| l == 1).count(), 50);
    }

    #[test]
    fn scaler_uses_pool_stats_only() {
        // col 0 spans [0,9] in pool rows but test row has 100; scaling must
        // come from the pool, sending the test value far above 1.
        let mut raw = tiny_raw(10);
        raw.scale_cols = vec![0];
        for i in 0..10 {
            raw.samples[i * 2] = i as f64;
        }
        // find which row lands in test for this seed and spike it
        let p = make_protocol(&raw, 0, SplitSpec::new(2), None).unwrap();
        let spiked = p.test_rows[0];
        raw.samples[spiked * 2] = 100.0;
        let p = make_protocol(&raw, 0, SplitSpec::new(2), None).unwrap();
        let s = p.scaler.as_ref().unwrap();
        assert!(s.maxs()[0] <= 9.0, "pool max {}", s.maxs()[0]);
        let test_val = p.test.row(0)[0];
        assert!(test_val > 1.0, "unscaled spike leaked: {test_val}");
    }
}
