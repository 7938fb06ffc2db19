//! AnoGAN: a plain GAN trained on normal data; queries are scored by
//! inverting the generator with an iterated latent search and reading off
//! the inversion loss.

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{arch, sample_latent, Network};
use crate::objectives::{d_loss_gan, g_loss, AdvLossKind};
use crate::tensor::{Optimizer, OptimizerKind, Tape, Tensor};
use crate::train::{epoch_batches, TrainOpts};

/// Latent-search configuration. `lambda` mixes the residual and
/// discriminator terms: `(1−λ)·L_R + λ·L_D`.
#[derive(Clone, Copy, Debug)]
pub struct AnoganConfig {
    pub gamma_steps: usize,
    pub search_lr: f64,
    pub lambda: f64,
    pub d_loss_kind: AdvLossKind,
    pub restarts: usize,
}

impl Default for AnoganConfig {
    fn default() -> Self {
        AnoganConfig {
            gamma_steps: 500,
            search_lr: 0.01,
            lambda: 0.1,
            d_loss_kind: AdvLossKind::FeatureMatching,
            restarts: 1,
        }
    }
}

impl AnoganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_steps < 1 {
            return Err(Error::contract("latent search needs at least one step"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::contract(format!(
                "lambda {} outside [0,1]",
                self.lambda
            )));
        }
        if self.restarts < 1 {
            return Err(Error::contract("restarts must be >= 1"));
        }
        if !(self.search_lr > 0.0) {
            return Err(Error::contract("search_lr must be > 0"));
        }
        Ok(())
    }
}

/// L1 distance between a query and its reconstruction.
pub fn residual_loss(tape: &Tape, x: &Tensor, x_hat: &Tensor) -> Result<Tensor> {
    if x.shape() != x_hat.shape() {
        return Err(Error::DimMismatch {
            op: "residual_loss",
            lhs: x.shape().to_vec(),
            rhs: x_hat.shape().to_vec(),
        });
    }
    let diff = tape.sub(x, x_hat)?;
    tape.norm(&diff, 1)
}

/// Discriminator term of the search loss. Feature matching compares per-row
/// L1 feature distances (averaged over the batch); the cross-entropy variant
/// asks the discriminator to call the reconstruction real.
pub fn discriminator_loss_ano(
    tape: &Tape,
    d: &Network,
    x: &Tensor,
    x_hat: &Tensor,
    kind: AdvLossKind,
) -> Result<Tensor> {
    if x.shape() != x_hat.shape() {
        return Err(Error::DimMismatch {
            op: "discriminator_loss_ano",
            lhs: x.shape().to_vec(),
            rhs: x_hat.shape().to_vec(),
        });
    }
    match kind {
        AdvLossKind::FeatureMatching => {
            let (_, f_x) = d.forward_with_features(tape, x)?;
            let (_, f_hat) = d.forward_with_features(tape, x_hat)?;
            let diff = tape.sub(&f_x, &f_hat)?;
            let per_sample = tape.row_norm(&diff, 1)?;
            tape.mean(&per_sample)
        }
        AdvLossKind::Bce => {
            let p = d.forward(tape, x_hat)?;
            tape.bce(&p, &crate::objectives::ones_like(&p))
        }
    }
}

fn combined_loss(
    tape: &Tape,
    g: &Network,
    d: &Network,
    x: &Tensor,
    z: &Tensor,
    cfg: &AnoganConfig,
) -> Result<Tensor> {
    let x_hat = g.forward(tape, z)?;
    if cfg.lambda == 0.0 {
        return residual_loss(tape, x, &x_hat);
    }
    let l_d = discriminator_loss_ano(tape, d, x, &x_hat, cfg.d_loss_kind)?;
    if cfg.lambda == 1.0 {
        return tape.scale(&l_d, 1.0);
    }
    let l_r = residual_loss(tape, x, &x_hat)?;
    let weighted_r = tape.scale(&l_r, 1.0 - cfg.lambda)?;
    let weighted_d = tape.scale(&l_d, cfg.lambda)?;
    tape.add(&weighted_r, &weighted_d)
}

pub struct SearchResult {
    pub z: Tensor,
    /// Loss values `L(z_0) ... L(z_Γ)`, one per visited point.
    pub trajectory: Vec<f64>,
    pub final_loss: f64,
}

/// Inverts the generator for one query: Γ optimizer steps on the latent
/// code with all network parameters frozen. Runs `cfg.restarts` independent
/// initializations from the prior and keeps the one with the lowest final
/// loss.
pub fn latent_search(
    g: &Network,
    d: &Network,
    x: &Tensor,
    cfg: &AnoganConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SearchResult> {
    cfg.validate()?;
    let mut best: Option<SearchResult> = None;
    for _ in 0..cfg.restarts {
        let z0 = sample_latent(x.rows(), g.in_dim(), rng);
        let run = search_once(g, d, x, cfg, z0)?;
        if best
            .as_ref()
            .map(|b| run.final_loss < b.final_loss)
            .unwrap_or(true)
        {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Same search from a caller-supplied starting point, single restart.
pub fn latent_search_from(
    g: &Network,
    d: &Network,
    x: &Tensor,
    cfg: &AnoganConfig,
    z0: Tensor,
) -> Result<SearchResult> {
    cfg.validate()?;
    search_once(g, d, x, cfg, z0)
}

fn search_once(
    g: &Network,
    d: &Network,
    x: &Tensor,
    cfg: &AnoganConfig,
    z0: Tensor,
) -> Result<SearchResult> {
    let z = z0.detach().with_grad();
    let dim = g.in_dim();
    // keep z in the prior's typical set to stop the search diverging
    let radius = 3.0 * (dim as f64).sqrt();
    let mut opt = Optimizer::new(OptimizerKind::adam(), cfg.search_lr, vec![z.clone()])?;
    let mut trajectory = Vec::with_capacity(cfg.gamma_steps + 1);

    for step in 0..cfg.gamma_steps {
        let tape = Tape::new();
        let loss = combined_loss(&tape, g, d, x, &z, cfg).map_err(|e| {
            Error::Contract(format!("latent search aborted at step {step}: {e}"))
        })?;
        trajectory.push(loss.item());
        z.zero_grad();
        tape.backward(&loss)?;
        opt.step()?;
        project_rows_to_ball(&z, radius);
    }
    let tape = Tape::new();
    let final_loss = combined_loss(&tape, g, d, x, &z, cfg)?.item();
    trajectory.push(final_loss);
    Ok(SearchResult {
        z,
        trajectory,
        final_loss,
    })
}

fn project_rows_to_ball(z: &Tensor, radius: f64) {
    let cols = z.cols();
    let mut data = z.data_mut();
    for row in data.chunks_mut(cols) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            let s = radius / norm;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Anomaly score of a single query: the combined loss at the end of the
/// search. Unbounded above; high means anomalous.
pub fn anomaly_score_ano(
    g: &Network,
    d: &Network,
    x: &Tensor,
    cfg: &AnoganConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    Ok(latent_search(g, d, x, cfg, rng)?.final_loss)
}

/// Scores every row of `ds` with an independent search; rng stream advances
/// per sample, so scores depend only on (models, sample order, seed).
pub fn score_dataset(
    g: &Network,
    d: &Network,
    ds: &LabeledDataset,
    cfg: &AnoganConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(ds.n);
    for i in 0..ds.n {
        scores.push(anomaly_score_ano(g, d, &ds.row_tensor(i), cfg, rng)?);
    }
    Ok(scores)
}

/// Trains a plain GAN on one-class data. Returns (generator, discriminator).
pub fn train_anogan(
    normals: &LabeledDataset,
    opts: &TrainOpts,
    gen_loss: AdvLossKind,
    rng: &mut ChaCha8Rng,
) -> Result<(Network, Network)> {
    if normals.n == 0 {
        return Err(Error::data("empty training data"));
    }
    let g = Network::build(
        &arch::generator(opts.latent_dim, opts.hidden_dim, normals.d),
        0,
        rng.next_u64(),
    )?;
    let (d_specs, tap) = arch::discriminator(normals.d, opts.hidden_dim);
    let d = Network::build(&d_specs, tap, rng.next_u64())?;

    let kind = OptimizerKind::adam_beta1(opts.beta1);
    let mut d_opt = Optimizer::new(kind, opts.lr, d.params())?;
    let mut g_opt = Optimizer::new(kind, opts.lr, g.params())?;

    for _epoch in 0..opts.epochs {
        for batch in epoch_batches(normals.n, opts.batch_size, rng) {
            let x = normals.batch(&batch);

            let tape = Tape::new();
            let z = sample_latent(batch.len(), opts.latent_dim, rng);
            let x_fake = g.forward(&tape, &z)?.detach();
            let d_loss = d_loss_gan(&tape, &d, &x, &x_fake)?;
            tape.backward(&d_loss)?;
            d_opt.step()?;
            d.zero_grad();
            g.zero_grad();

            let tape = Tape::new();
            let z = sample_latent(batch.len(), opts.latent_dim, rng);
            let x_fake = g.forward(&tape, &z)?;
            let loss = g_loss(&tape, &d, &x_fake, Some(&x), gen_loss)?;
            tape.backward(&loss)?;
            g_opt.step()?;
            d.zero_grad();
            g.zero_grad();
        }
    }
    Ok((g, d))
}
