//! GAN-based anomaly detection on a minimal reverse-mode tensor core.
//!
//! Three detectors share the same machinery:
//!
//! - **AnoGAN**: train a plain GAN on normal data, invert each query by
//!   iterated latent optimization, score by the inversion loss.
//! - **EGBAD** (BiGAN): train an encoder jointly with the GAN so queries are
//!   scored in a single forward pass.
//! - **GANomaly**: encoder–decoder–encoder generator scored by the distance
//!   between the two latent codes.
//!
//! Everything runs on [`tensor::Tensor`]/[`tensor::Tape`], a small dense f64
//! array type with reverse-mode differentiation, so the whole pipeline is
//! dependency-light and bit-reproducible given a seed.

pub mod anogan;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod egbad;
pub mod error;
pub mod ganomaly;
pub mod metrics;
pub mod network;
pub mod objectives;
pub mod runner;
pub mod tensor;
pub mod train;

pub use config::{DatasetId, ExperimentConfig, ModelKind};
pub use data::{LabeledDataset, SplitSpec};
pub use error::{Error, Result};
pub use metrics::PrCurve;
pub use network::{Activation, LayerSpec, Network};
pub use objectives::AdvLossKind;
pub use runner::ScoreReport;
pub use tensor::{Optimizer, OptimizerKind, Tape, Tensor};
