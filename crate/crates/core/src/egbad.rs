//! EGBAD: BiGAN-based detection. The encoder learned during adversarial
//! training replaces AnoGAN's per-sample search, so scoring is a single
//! forward pass.

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::auprc_of;
use crate::network::{arch, sample_latent, Network};
use crate::objectives::{bigan_losses, AdvLossKind};
use crate::tensor::{Optimizer, OptimizerKind, Tape, Tensor, BCE_EPS};
use crate::train::{epoch_batches, SelectionRow, TrainOpts};

/// One cell of the train/test configuration table: generator loss form,
/// optional encoder residual term, and the score used at test time. The four
/// `(train_g_loss × use_residual)` trainings times two test scores cover all
/// eight cells.
#[derive(Clone, Copy, Debug)]
pub struct EgbadConfig {
    pub train_g_loss: AdvLossKind,
    pub use_residual: bool,
    pub test_score: AdvLossKind,
    /// Score mixing weight, same convention as AnoGAN's combined loss.
    pub lambda: f64,
    pub opts: TrainOpts,
    /// Leaky-relu after the encoder's first layer. Off reproduces the
    /// better-performing published architecture that ships without it.
    pub encoder_first_layer_activation: bool,
    pub model_selection: bool,
}

impl Default for EgbadConfig {
    fn default() -> Self {
        EgbadConfig {
            train_g_loss: AdvLossKind::Bce,
            use_residual: false,
            test_score: AdvLossKind::FeatureMatching,
            lambda: 0.1,
            opts: TrainOpts::default(),
            encoder_first_layer_activation: false,
            model_selection: true,
        }
    }
}

pub struct EgbadModel {
    pub g: Network,
    pub e: Network,
    pub d: Network,
}

impl EgbadModel {
    pub fn snapshot(&self) -> EgbadModel {
        EgbadModel {
            g: self.g.snapshot(),
            e: self.e.snapshot(),
            d: self.d.snapshot(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.e.out_dim()
    }
}

/// Joint training of (G, E, D) on one-class data. When model selection is
/// on and a labeled eval split is supplied, the checkpoint with the best
/// eval AUPRC (feature-matching score) is returned instead of the last one.
pub fn train_egbad(
    normals: &LabeledDataset,
    eval: Option<&LabeledDataset>,
    cfg: &EgbadConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(EgbadModel, Vec<SelectionRow>)> {
    if normals.n == 0 {
        return Err(Error::data("empty training data"));
    }
    let opts = &cfg.opts;
    let g = Network::build(
        &arch::generator(opts.latent_dim, opts.hidden_dim, normals.d),
        0,
        rng.next_u64(),
    )?;
    let e = Network::build(
        &arch::encoder(
            normals.d,
            opts.hidden_dim,
            opts.latent_dim,
            cfg.encoder_first_layer_activation,
        ),
        0,
        rng.next_u64(),
    )?;
    let (d_specs, tap) = arch::discriminator(normals.d + opts.latent_dim, opts.hidden_dim);
    let d = Network::build(&d_specs, tap, rng.next_u64())?;

    let kind = OptimizerKind::adam_beta1(opts.beta1);
    let mut d_opt = Optimizer::new(kind, opts.lr, d.params())?;
    let ge_params: Vec<Tensor> = g.params().into_iter().chain(e.params()).collect();
    let mut ge_opt = Optimizer::new(kind, opts.lr, ge_params)?;

    let model = EgbadModel { g, e, d };
    let mut best: Option<(f64, EgbadModel)> = None;
    let mut log = Vec::new();

    for epoch in 0..opts.epochs {
        for batch in epoch_batches(normals.n, opts.batch_size, rng) {
            let x = normals.batch(&batch);
            let z = sample_latent(batch.len(), opts.latent_dim, rng);

            let tape = Tape::new();
            let losses = bigan_losses(
                &tape,
                &model.d,
                &model.e,
                &model.g,
                &x,
                &z,
                cfg.train_g_loss,
                cfg.use_residual,
            )?;
            tape.backward(&losses.d_loss)?;
            d_opt.step()?;
            zero_all(&model);
            tape.backward(&losses.ge_loss)?;
            ge_opt.step()?;
            zero_all(&model);
        }

        if cfg.model_selection {
            if let Some(eval) = eval {
                let scores =
                    score_dataset(&model, eval, AdvLossKind::FeatureMatching, cfg.lambda)?;
                let auprc = auprc_of(&scores, &eval.labels)?;
                log.push(SelectionRow { epoch, auprc });
                if best.as_ref().map(|(b, _)| auprc > *b).unwrap_or(true) {
                    best = Some((auprc, model.snapshot()));
                }
            }
        }
    }

    match best {
        Some((_, snapshot)) => Ok((snapshot, log)),
        None => Ok((model, log)),
    }
}

fn zero_all(m: &EgbadModel) {
    m.g.zero_grad();
    m.e.zero_grad();
    m.d.zero_grad();
}

/// Scores one query without any optimization step:
/// `(1−λ)·‖x − G(E(x))‖₁ + λ·L_D`, where the discriminator term compares the
/// real pair (x, E(x)) against the reconstructed pair per `kind`.
pub fn anomaly_score_egbad(
    m: &EgbadModel,
    x: &Tensor,
    kind: AdvLossKind,
    lambda: f64,
) -> Result<f64> {
    let batch = score_batch(m, x, kind, lambda)?;
    Ok(batch[0])
}

/// Batched scoring; row scores are independent of which batch a sample
/// lands in.
pub fn score_batch(
    m: &EgbadModel,
    x: &Tensor,
    kind: AdvLossKind,
    lambda: f64,
) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let z = m.e.forward(&tape, x)?;
    let x_hat = m.g.forward(&tape, &z)?;
    let diff = tape.sub(x, &x_hat)?;
    let residual = tape.row_norm(&diff, 1)?;

    let pair_real = tape.concat_cols(x, &z)?;
    let disc_term: Vec<f64> = match kind {
        AdvLossKind::Bce => {
            let p = m.d.forward(&tape, &pair_real)?;
            let vals: Vec<f64> = p
                .data()
                .iter()
                .map(|&v| -(v.clamp(BCE_EPS, 1.0 - BCE_EPS).ln()))
                .collect();
            vals
        }
        AdvLossKind::FeatureMatching => {
            let pair_fake = tape.concat_cols(&x_hat, &z)?;
            let (_, f_real) = m.d.forward_with_features(&tape, &pair_real)?;
            let (_, f_fake) = m.d.forward_with_features(&tape, &pair_fake)?;
            let fdiff = tape.sub(&f_real, &f_fake)?;
            tape.row_norm(&fdiff, 1)?.to_vec()
        }
    };

    let scores = residual
        .data()
        .iter()
        .zip(disc_term)
        .map(|(&r, d)| (1.0 - lambda) * r + lambda * d)
        .collect();
    Ok(scores)
}

/// Scores a whole dataset in fixed-size chunks.
pub fn score_dataset(
    m: &EgbadModel,
    ds: &LabeledDataset,
    kind: AdvLossKind,
    lambda: f64,
) -> Result<Vec<f64>> {
    const CHUNK: usize = 256;
    let mut scores = Vec::with_capacity(ds.n);
    let mut start = 0;
    while start < ds.n {
        let rows: Vec<usize> = (start..(start + CHUNK).min(ds.n)).collect();
        let x = ds.batch(&rows);
        scores.extend(score_batch(m, &x, kind, lambda)?);
        start += CHUNK;
    }
    Ok(scores)
}
