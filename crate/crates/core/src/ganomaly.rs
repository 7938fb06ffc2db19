//! GANomaly: an encoder–decoder–encoder generator plus discriminator. The
//! generator is trained with a three-term loss (adversarial, contextual,
//! encoding); queries are scored purely in latent space, by the distance
//! between the two encodings.

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::auprc_of;
use crate::network::{arch, Network};
use crate::objectives::{d_loss_gan, ones_like, AdvLossKind};
use crate::tensor::{Optimizer, OptimizerKind, Tape, Tensor};
use crate::train::{epoch_batches, SelectionRow, TrainOpts};

/// Weights of the three generator loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanomalyWeights {
    pub adv: f64,
    pub con: f64,
    pub enc: f64,
}

impl Default for GanomalyWeights {
    fn default() -> Self {
        GanomalyWeights {
            adv: 1.0,
            con: 50.0,
            enc: 1.0,
        }
    }
}

impl GanomalyWeights {
    pub fn validate(&self) -> Result<()> {
        if self.adv < 0.0 || self.con < 0.0 || self.enc < 0.0 {
            return Err(Error::contract("loss weights must be non-negative"));
        }
        if self.adv == 0.0 && self.con == 0.0 && self.enc == 0.0 {
            return Err(Error::contract("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// How the latent distance is reported. Both are monotone in each other, so
/// ranking metrics agree; squared-L2 is the default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentScore {
    SquaredL2,
    L2,
}

pub struct GanomalyModel {
    /// First encoder, x → z.
    pub g_e: Network,
    /// Decoder, z → x̂.
    pub g_d: Network,
    /// Second encoder, x̂ → ẑ; same layer shapes as `g_e`, independent
    /// parameters.
    pub e: Network,
    pub d: Network,
}

impl GanomalyModel {
    pub fn validate(&self) -> Result<()> {
        if self.g_e.specs() != self.e.specs() {
            return Err(Error::contract(
                "the two encoders must share an architecture",
            ));
        }
        let latent = self.g_e.out_dim();
        if self.g_d.in_dim() != latent || self.e.out_dim() != latent {
            return Err(Error::contract("latent dimensions disagree"));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> GanomalyModel {
        GanomalyModel {
            g_e: self.g_e.snapshot(),
            g_d: self.g_d.snapshot(),
            e: self.e.snapshot(),
            d: self.d.snapshot(),
        }
    }

    /// Parameters of the whole generator side (both encoders and decoder).
    pub fn generator_params(&self) -> Vec<Tensor> {
        self.g_e
            .params()
            .into_iter()
            .chain(self.g_d.params())
            .chain(self.e.params())
            .collect()
    }

    fn zero_grad(&self) {
        self.g_e.zero_grad();
        self.g_d.zero_grad();
        self.e.zero_grad();
        self.d.zero_grad();
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GanomalyConfig {
    pub adv_kind: AdvLossKind,
    pub weights: GanomalyWeights,
    pub opts: TrainOpts,
    pub model_selection: bool,
    pub score: LatentScore,
}

impl Default for GanomalyConfig {
    fn default() -> Self {
        GanomalyConfig {
            adv_kind: AdvLossKind::FeatureMatching,
            weights: GanomalyWeights::default(),
            opts: TrainOpts::default(),
            model_selection: true,
            score: LatentScore::SquaredL2,
        }
    }
}

pub struct GanomalyLosses {
    pub g_total: Tensor,
    pub l_adv: Tensor,
    pub l_con: Tensor,
    pub l_enc: Tensor,
    pub d_loss: Tensor,
}

/// All GANomaly losses from one forward pass. With G(x) = G_D(G_E(x)):
/// the contextual term is the mean per-sample L1 of `x − G(x)`, the encoding
/// term the mean per-sample L2 of `G_E(x) − E(G(x))`, and the adversarial
/// term either feature matching or cross-entropy. `d_loss` is the plain GAN
/// discriminator loss with the reconstruction detached.
pub fn ganomaly_losses(
    tape: &Tape,
    m: &GanomalyModel,
    x: &Tensor,
    w: &GanomalyWeights,
    adv_kind: AdvLossKind,
) -> Result<GanomalyLosses> {
    w.validate()?;
    let z = m.g_e.forward(tape, x)?;
    let x_hat = m.g_d.forward(tape, &z)?;
    let z_hat = m.e.forward(tape, &x_hat)?;

    let con_diff = tape.sub(x, &x_hat)?;
    let l_con = tape.mean(&tape.row_norm(&con_diff, 1)?)?;

    let enc_diff = tape.sub(&z, &z_hat)?;
    let l_enc = tape.mean(&tape.row_norm(&enc_diff, 2)?)?;

    let l_adv = match adv_kind {
        AdvLossKind::FeatureMatching => {
            let (_, f_real) = m.d.forward_with_features(tape, x)?;
            let (_, f_fake) = m.d.forward_with_features(tape, &x_hat)?;
            let diff = tape.sub(&tape.mean_axis0(&f_real)?, &tape.mean_axis0(&f_fake)?)?;
            tape.norm(&diff, 2)?
        }
        AdvLossKind::Bce => {
            let p = m.d.forward(tape, &x_hat)?;
            tape.bce(&p, &ones_like(&p))?
        }
    };

    let weighted_adv = tape.scale(&l_adv, w.adv)?;
    let weighted_con = tape.scale(&l_con, w.con)?;
    let weighted_enc = tape.scale(&l_enc, w.enc)?;
    let g_total = tape.add(&tape.add(&weighted_adv, &weighted_con)?, &weighted_enc)?;

    let d_loss = d_loss_gan(tape, &m.d, x, &x_hat.detach())?;

    Ok(GanomalyLosses {
        g_total,
        l_adv,
        l_con,
        l_enc,
        d_loss,
    })
}

/// Trains on one-class data, alternating a discriminator step and a
/// generator step per batch. Model selection mirrors the EGBAD trainer:
/// per-epoch eval AUPRC of the latent score, best checkpoint kept.
pub fn train_ganomaly(
    normals: &LabeledDataset,
    eval: Option<&LabeledDataset>,
    cfg: &GanomalyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(GanomalyModel, Vec<SelectionRow>)> {
    if normals.n == 0 {
        return Err(Error::data("empty training data"));
    }
    cfg.weights.validate()?;
    let opts = &cfg.opts;
    let enc_spec = arch::encoder(normals.d, opts.hidden_dim, opts.latent_dim, true);
    let g_e = Network::build(&enc_spec, 0, rng.next_u64())?;
    let g_d = Network::build(
        &arch::generator(opts.latent_dim, opts.hidden_dim, normals.d),
        0,
        rng.next_u64(),
    )?;
    let e = Network::build(&enc_spec, 0, rng.next_u64())?;
    let (d_specs, tap) = arch::discriminator(normals.d, opts.hidden_dim);
    let d = Network::build(&d_specs, tap, rng.next_u64())?;

    let model = GanomalyModel { g_e, g_d, e, d };
    model.validate()?;

    let kind = OptimizerKind::adam_beta1(opts.beta1);
    let mut d_opt = Optimizer::new(kind, opts.lr, model.d.params())?;
    let mut g_opt = Optimizer::new(kind, opts.lr, model.generator_params())?;

    let mut best: Option<(f64, GanomalyModel)> = None;
    let mut log = Vec::new();

    for epoch in 0..opts.epochs {
        for batch in epoch_batches(normals.n, opts.batch_size, rng) {
            let x = normals.batch(&batch);
            let tape = Tape::new();
            let losses = ganomaly_losses(&tape, &model, &x, &cfg.weights, cfg.adv_kind)?;
            tape.backward(&losses.d_loss)?;
            d_opt.step()?;
            model.zero_grad();
            tape.backward(&losses.g_total)?;
            g_opt.step()?;
            model.zero_grad();
        }

        if cfg.model_selection {
            if let Some(eval) = eval {
                let scores = score_dataset(&model, eval, cfg.score)?;
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

/// Latent-space anomaly score: distance between the first encoding and the
/// encoding of the reconstruction. No image-space term.
pub fn anomaly_score_gano(m: &GanomalyModel, x: &Tensor, kind: LatentScore) -> Result<f64> {
    Ok(score_batch(m, x, kind)?[0])
}

pub fn score_batch(m: &GanomalyModel, x: &Tensor, kind: LatentScore) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let z = m.g_e.forward(&tape, x)?;
    let x_hat = m.g_d.forward(&tape, &z)?;
    let z_hat = m.e.forward(&tape, &x_hat)?;
    let diff = tape.sub(&z, &z_hat)?;
    let l2 = tape.row_norm(&diff, 2)?;
    let scores = l2
        .data()
        .iter()
        .map(|&v| match kind {
            LatentScore::L2 => v,
            LatentScore::SquaredL2 => v * v,
        })
        .collect();
    Ok(scores)
}

pub fn score_dataset(
    m: &GanomalyModel,
    ds: &LabeledDataset,
    kind: LatentScore,
) -> Result<Vec<f64>> {
    const CHUNK: usize = 256;
    let mut scores = Vec::with_capacity(ds.n);
    let mut start = 0;
    while start < ds.n {
        let rows: Vec<usize> = (start..(start + CHUNK).min(ds.n)).collect();
        scores.extend(score_batch(m, &ds.batch(&rows), kind)?);
        start += CHUNK;
    }
    Ok(scores)
}

/// Per-sample reconstruction residual `|x − G(x)|`, the localization signal;
/// one flat `d`-vector per row of `x`.
pub fn residual_maps(m: &GanomalyModel, x: &Tensor) -> Result<Vec<Vec<f64>>> {
    let tape = Tape::new();
    let z = m.g_e.forward(&tape, x)?;
    let x_hat = m.g_d.forward(&tape, &z)?;
    let diff = tape.sub(x, &x_hat)?;
    let abs = tape.abs(&diff)?;
    let d = x.cols();
    let maps = abs.data().chunks(d).map(|c| c.to_vec()).collect();
    Ok(maps)
}

/// Writes residual maps as a flat binary array: `u32 n`, `u32 d`, then
/// `n·d` little-endian f64 values.
pub fn write_residual_maps(path: &std::path::Path, maps: &[Vec<f64>]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n = maps.len() as u32;
    let d = maps.first().map(|m| m.len()).unwrap_or(0) as u32;
    f.write_all(&n.to_le_bytes())?;
    f.write_all(&d.to_le_bytes())?;
    for map in maps {
        for v in map {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Min-max feature scaling of anomaly scores into [0, 1]. A constant score
/// list is degenerate: every output is defined as 0 and the flag comes back
/// true (a warning is logged).
pub fn scale_scores(scores: &[f64]) -> (Vec<f64>, bool) {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores.len() < 2 || max <= min {
        log::warn!("scale_scores: degenerate score list (constant or too short)");
        return (vec![0.0; scores.len()], true);
    }
    (
        scores.iter().map(|&s| (s - min) / (max - min)).collect(),
        false,
    )
}
