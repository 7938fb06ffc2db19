//! Experiment configuration: one flat struct covering every detector, a
//! `key=value` file format mirroring the CLI flags, and seed derivation for
//! sweep workers.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::objectives::AdvLossKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Mnist,
    Fashion,
    Cifar10,
    Kdd,
    /// Synthetic two-moons; handy for runs without any data files.
    Moons,
}

impl DatasetId {
    pub fn parse(s: &str) -> Result<DatasetId> {
        match s {
            "mnist" => Ok(DatasetId::Mnist),
            "fashion" => Ok(DatasetId::Fashion),
            "cifar10" => Ok(DatasetId::Cifar10),
            "kdd" => Ok(DatasetId::Kdd),
            "moons" => Ok(DatasetId::Moons),
            other => Err(Error::data(format!(
                "unknown dataset '{other}', expected mnist|fashion|cifar10|kdd|moons"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Fashion => "fashion",
            DatasetId::Cifar10 => "cifar10",
            DatasetId::Kdd => "kdd",
            DatasetId::Moons => "moons",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Anogan,
    Egbad,
    Ganomaly,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<ModelKind> {
        match s {
            "anogan" => Ok(ModelKind::Anogan),
            "egbad" => Ok(ModelKind::Egbad),
            "ganomaly" => Ok(ModelKind::Ganomaly),
            other => Err(Error::data(format!(
                "unknown model '{other}', expected anogan|egbad|ganomaly"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Anogan => "anogan",
            ModelKind::Egbad => "egbad",
            ModelKind::Ganomaly => "ganomaly",
        }
    }
}

/// Everything needed to run one experiment end to end. Fields not used by a
/// given model (e.g. `gamma_steps` outside AnoGAN) are carried but ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetId,
    pub anomaly_class: u32,
    pub model: ModelKind,
    pub train_loss: AdvLossKind,
    pub residual: bool,
    /// Test-time score variant for AnoGAN/EGBAD. GANomaly scores in latent
    /// space and ignores this.
    pub test_score: AdvLossKind,
    pub epochs: usize,
    pub batch: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub lambda: f64,
    pub w_adv: f64,
    pub w_con: f64,
    pub w_enc: f64,
    pub gamma_steps: usize,
    pub restarts: usize,
    pub search_lr: f64,
    pub lr: f64,
    pub beta1: f64,
    pub seed: u64,
    pub limit: Option<usize>,
    pub test_on_all: bool,
    pub encoder_act: bool,
    pub model_selection: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetId::Moons,
            anomaly_class: 1,
            model: ModelKind::Egbad,
            train_loss: AdvLossKind::Bce,
            residual: false,
            test_score: AdvLossKind::FeatureMatching,
            epochs: 15,
            batch: 64,
            latent_dim: 64,
            hidden_dim: 128,
            lambda: 0.1,
            w_adv: 1.0,
            w_con: 50.0,
            w_enc: 1.0,
            gamma_steps: 500,
            restarts: 1,
            search_lr: 0.01,
            lr: 2e-4,
            beta1: 0.5,
            seed: 42,
            limit: None,
            test_on_all: false,
            encoder_act: false,
            model_selection: true,
        }
    }
}

impl ExperimentConfig {
    /// Stable identity of the *training* this config needs — everything
    /// except the test-time score, so cells sharing a trained model share a
    /// key (and a seed).
    pub fn train_key(&self) -> String {
        format!(
            "{}-c{}-{}-t{}-r{}-e{}-b{}-l{}-h{}-s{}{}",
            self.dataset.as_str(),
            self.anomaly_class,
            self.model.as_str(),
            self.train_loss.as_str(),
            self.residual as u8,
            self.epochs,
            self.batch,
            self.latent_dim,
            self.hidden_dim,
            self.seed,
            self.limit.map(|l| format!("-n{l}")).unwrap_or_default(),
        )
    }

    /// Human-readable identity of the full cell.
    pub fn cell_key(&self) -> String {
        format!("{}-x{}", self.train_key(), self.test_score.as_str())
    }

    /// Serializes as flat `key=value` lines (the config-file format).
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dataset={}", self.dataset.as_str());
        let _ = writeln!(s, "anomaly_class={}", self.anomaly_class);
        let _ = writeln!(s, "model={}", self.model.as_str());
        let _ = writeln!(s, "train_loss={}", self.train_loss.as_str());
        let _ = writeln!(s, "residual={}", self.residual);
        let _ = writeln!(s, "test_score={}", self.test_score.as_str());
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "batch={}", self.batch);
        let _ = writeln!(s, "latent_dim={}", self.latent_dim);
        let _ = writeln!(s, "hidden_dim={}", self.hidden_dim);
        let _ = writeln!(s, "lambda={}", self.lambda);
        let _ = writeln!(s, "weights={},{},{}", self.w_adv, self.w_con, self.w_enc);
        let _ = writeln!(s, "gamma_steps={}", self.gamma_steps);
        let _ = writeln!(s, "restarts={}", self.restarts);
        let _ = writeln!(s, "search_lr={}", self.search_lr);
        let _ = writeln!(s, "lr={}", self.lr);
        let _ = writeln!(s, "beta1={}", self.beta1);
        let _ = writeln!(s, "seed={}", self.seed);
        if let Some(limit) = self.limit {
            let _ = writeln!(s, "limit={limit}");
        }
        let _ = writeln!(s, "test_on_all={}", self.test_on_all);
        let _ = writeln!(s, "encoder_act={}", self.encoder_act);
        let _ = writeln!(s, "model_selection={}", self.model_selection);
        s
    }

    /// Parses `key=value` lines on top of the defaults. `#` starts a
    /// comment; unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::data(format!("config line {}: expected key=value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| Error::data(format!("bad value '{v}' for {k}"));
        match key {
            "dataset" => self.dataset = DatasetId::parse(value)?,
            "anomaly_class" => self.anomaly_class = value.parse().map_err(|_| bad(key, value))?,
            "model" => self.model = ModelKind::parse(value)?,
            "train_loss" => self.train_loss = AdvLossKind::parse(value)?,
            "residual" => self.residual = parse_bool(value)?,
            "test_score" => self.test_score = AdvLossKind::parse(value)?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad(key, value))?,
            "batch" => self.batch = value.parse().map_err(|_| bad(key, value))?,
            "latent_dim" => self.latent_dim = value.parse().map_err(|_| bad(key, value))?,
            "hidden_dim" => self.hidden_dim = value.parse().map_err(|_| bad(key, value))?,
            "lambda" => self.lambda = value.parse().map_err(|_| bad(key, value))?,
            "weights" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad(key, value));
                }
                self.w_adv = parts[0].trim().parse().map_err(|_| bad(key, value))?;
                self.w_con = parts[1].trim().parse().map_err(|_| bad(key, value))?;
                self.w_enc = parts[2].trim().parse().map_err(|_| bad(key, value))?;
            }
            "gamma_steps" => self.gamma_steps = value.parse().map_err(|_| bad(key, value))?,
            "restarts" => self.restarts = value.parse().map_err(|_| bad(key, value))?,
            "search_lr" => self.search_lr = value.parse().map_err(|_| bad(key, value))?,
            "lr" => self.lr = value.parse().map_err(|_| bad(key, value))?,
            "beta1" => self.beta1 = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            "limit" => self.limit = Some(value.parse().map_err(|_| bad(key, value))?),
            "test_on_all" => self.test_on_all = parse_bool(value)?,
            "encoder_act" => self.encoder_act = parse_bool(value)?,
            "model_selection" => self.model_selection = parse_bool(value)?,
            other => return Err(Error::data(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::data(format!("bad boolean '{other}'"))),
    }
}

/// Seed stream for a sweep worker: FNV-1a over the config's training key,
/// mixed with the master seed through splitmix64. Stable across platforms.
pub fn derive_seed(master: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h ^ splitmix64(master))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip_is_identity() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = DatasetId::Mnist;
        cfg.anomaly_class = 3;
        cfg.model = ModelKind::Ganomaly;
        cfg.limit = Some(12000);
        cfg.lambda = 0.25;
        cfg.w_con = 40.0;
        let parsed = ExperimentConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn json_roundtrip_is_identity() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let parsed: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ExperimentConfig::from_kv("nonsense=1").is_err());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = ExperimentConfig::from_kv("# comment\n\nseed=7\n").unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn cells_share_train_key_across_test_scores() {
        let mut a = ExperimentConfig::default();
        a.test_score = AdvLossKind::Bce;
        let mut b = a.clone();
        b.test_score = AdvLossKind::FeatureMatching;
        assert_eq!(a.train_key(), b.train_key());
        assert_ne!(a.cell_key(), b.cell_key());
    }

    #[test]
    fn derive_seed_is_stable_and_sensitive() {
        let a = derive_seed(1, "mnist-c0");
        assert_eq!(a, derive_seed(1, "mnist-c0"));
        assert_ne!(a, derive_seed(2, "mnist-c0"));
        assert_ne!(a, derive_seed(1, "mnist-c1"));
    }
}
