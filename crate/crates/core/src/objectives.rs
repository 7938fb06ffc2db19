//! Adversarial loss functions: the standard GAN min-max objective, its
//! conditional variant, the BiGAN pair objective, and the feature-matching
//! generator loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Tape, Tensor};

/// Which form the adversarial generator/test term takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvLossKind {
    /// Sigmoid cross-entropy against the discriminator verdict.
    Bce,
    /// Match discriminator intermediate features instead of the verdict.
    FeatureMatching,
}

impl AdvLossKind {
    pub fn parse(s: &str) -> Result<AdvLossKind> {
        match s {
            "bce" => Ok(AdvLossKind::Bce),
            "fm" => Ok(AdvLossKind::FeatureMatching),
            other => Err(Error::data(format!(
                "unknown loss kind '{other}', expected bce|fm"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AdvLossKind::Bce => "bce",
            AdvLossKind::FeatureMatching => "fm",
        }
    }
}

/// Anything that can act as a discriminator: a plain [`Network`] or a
/// conditioned wrapper around one.
pub trait Module {
    fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor>;
    fn forward_with_features(&self, tape: &Tape, x: &Tensor) -> Result<(Tensor, Tensor)>;
}

impl Module for Network {
    fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        Network::forward(self, tape, x)
    }

    fn forward_with_features(&self, tape: &Tape, x: &Tensor) -> Result<(Tensor, Tensor)> {
        Network::forward_with_features(self, tape, x)
    }
}

/// A network viewed with a fixed one-hot condition appended to its input
/// columns; passing this to [`d_loss_gan`]/[`g_loss`] yields the conditional
/// objective.
pub struct Conditioned<'a> {
    net: &'a Network,
    y: &'a Tensor,
}

impl<'a> Conditioned<'a> {
    pub fn new(net: &'a Network, y: &'a Tensor) -> Conditioned<'a> {
        Conditioned { net, y }
    }
}

impl Module for Conditioned<'_> {
    fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        conditional_wrap(tape, self.net, x, self.y)
    }

    fn forward_with_features(&self, tape: &Tape, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let joined = check_one_hot_and_concat(tape, x, self.y)?;
        self.net.forward_with_features(tape, &joined)
    }
}

/// Discriminator loss of the zero-sum game:
/// `bce(D(x_real), 1) + bce(D(x_fake), 0)`.
///
/// `x_fake` is expected to be detached from the generator's tape — a step on
/// this loss updates discriminator parameters only.
pub fn d_loss_gan<M: Module>(
    tape: &Tape,
    d: &M,
    x_real: &Tensor,
    x_fake: &Tensor,
) -> Result<Tensor> {
    let p_real = d.forward(tape, x_real)?;
    let p_fake = d.forward(tape, x_fake)?;
    let real_term = tape.bce(&p_real, &ones_like(&p_real))?;
    let fake_term = tape.bce(&p_fake, &zeros_like(&p_fake))?;
    tape.add(&real_term, &fake_term)
}

/// Generator loss. `Bce` is the non-saturating form `bce(D(x_fake), 1)`;
/// `FeatureMatching` is the L2 distance between batch-mean features of the
/// real and generated batches, both taken at the discriminator's feature tap.
pub fn g_loss<M: Module>(
    tape: &Tape,
    d: &M,
    x_fake: &Tensor,
    x_real: Option<&Tensor>,
    kind: AdvLossKind,
) -> Result<Tensor> {
    match kind {
        AdvLossKind::Bce => {
            let p_fake = d.forward(tape, x_fake)?;
            tape.bce(&p_fake, &ones_like(&p_fake))
        }
        AdvLossKind::FeatureMatching => {
            let x_real = x_real.ok_or_else(|| {
                Error::contract("feature-matching generator loss needs a real batch")
            })?;
            let (_, f_real) = d.forward_with_features(tape, x_real)?;
            let (_, f_fake) = d.forward_with_features(tape, x_fake)?;
            let mean_real = tape.mean_axis0(&f_real)?;
            let mean_fake = tape.mean_axis0(&f_fake)?;
            let diff = tape.sub(&mean_real, &mean_fake)?;
            tape.norm(&diff, 2)
        }
    }
}

/// Concatenates a one-hot condition to the input columns and runs the
/// network. Errors when a row of `y` is not one-hot.
pub fn conditional_wrap(tape: &Tape, net: &Network, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let joined = check_one_hot_and_concat(tape, x, y)?;
    net.forward(tape, &joined)
}

fn check_one_hot_and_concat(tape: &Tape, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if y.shape().len() != 2 || y.shape()[0] != x.shape()[0] {
        return Err(Error::DimMismatch {
            op: "conditional_wrap",
            lhs: x.shape().to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    let (rows, cols) = (y.shape()[0], y.shape()[1]);
    let yd = y.data();
    for r in 0..rows {
        let row = &yd[r * cols..(r + 1) * cols];
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::contract(format!(
                "conditional_wrap: row {r} of y is not one-hot"
            )));
        }
    }
    drop(yd);
    tape.concat_cols(x, y)
}

/// Losses of the BiGAN objective over (x, z) pairs.
pub struct BiganLosses {
    pub d_loss: Tensor,
    pub ge_loss: Tensor,
}

/// Builds both sides of the BiGAN game on one tape.
///
/// `d_loss = bce(D(x, E(x)), 1) + bce(D(G(z), z), 0)` with both pairs
/// detached, so a step updates only the discriminator. `ge_loss` is the
/// non-saturating complement; `gen_kind` selects the generator-side term
/// (bce verdict vs feature matching), and `use_residual` adds the mean
/// per-sample L1 reconstruction error `‖x − G(E(x))‖₁` to the encoder side.
pub fn bigan_losses(
    tape: &Tape,
    d_joint: &Network,
    e: &Network,
    g: &Network,
    x_real: &Tensor,
    z_prior: &Tensor,
    gen_kind: AdvLossKind,
    use_residual: bool,
) -> Result<BiganLosses> {
    let z_enc = e.forward(tape, x_real)?;
    if z_enc.cols() != z_prior.cols() {
        return Err(Error::DimMismatch {
            op: "bigan latent",
            lhs: z_enc.shape().to_vec(),
            rhs: z_prior.shape().to_vec(),
        });
    }
    let x_gen = g.forward(tape, z_prior)?;

    let pair_real = tape.concat_cols(x_real, &z_enc)?;
    let pair_fake = tape.concat_cols(&x_gen, z_prior)?;

    // Discriminator side sees detached pairs.
    let p_real_d = d_joint.forward(tape, &pair_real.detach())?;
    let p_fake_d = d_joint.forward(tape, &pair_fake.detach())?;
    let d_real = tape.bce(&p_real_d, &ones_like(&p_real_d))?;
    let d_fake = tape.bce(&p_fake_d, &zeros_like(&p_fake_d))?;
    let d_loss = tape.add(&d_real, &d_fake)?;

    // Encoder term: fool D on real pairs.
    let p_real = d_joint.forward(tape, &pair_real)?;
    let e_term = tape.bce(&p_real, &zeros_like(&p_real))?;

    // Generator term: bce verdict or feature matching against the (constant)
    // real-pair feature means, so the choice influences only the generator.
    let g_term = match gen_kind {
        AdvLossKind::Bce => {
            let p_fake = d_joint.forward(tape, &pair_fake)?;
            tape.bce(&p_fake, &ones_like(&p_fake))?
        }
        AdvLossKind::FeatureMatching => {
            let (_, f_real) = d_joint.forward_with_features(tape, &pair_real.detach())?;
            let (_, f_fake) = d_joint.forward_with_features(tape, &pair_fake)?;
            let mean_real = tape.mean_axis0(&f_real)?;
            let mean_fake = tape.mean_axis0(&f_fake)?;
            let diff = tape.sub(&mean_real, &mean_fake)?;
            tape.norm(&diff, 2)?
        }
    };

    let mut ge_loss = tape.add(&e_term, &g_term)?;
    if use_residual {
        let x_rec = g.forward(tape, &z_enc)?;
        let delta = tape.sub(x_real, &x_rec)?;
        let per_sample = tape.row_norm(&delta, 1)?;
        let residual = tape.mean(&per_sample)?;
        ge_loss = tape.add(&ge_loss, &residual)?;
    }

    Ok(BiganLosses { d_loss, ge_loss })
}

pub(crate) fn ones_like(t: &Tensor) -> Tensor {
    Tensor::new(t.shape(), vec![1.0; t.numel()]).expect("ones are finite")
}

pub(crate) fn zeros_like(t: &Tensor) -> Tensor {
    Tensor::zeros(t.shape())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{arch, LayerSpec, Network};

    const LN2: f64 = std::f64::consts::LN_2;

    /// Discriminator that outputs exactly 0.5 everywhere: zero weights, zero
    /// bias, sigmoid head.
    fn half_d(in_dim: usize) -> Network {
        let (specs, tap) = arch::discriminator(in_dim, 4);
        let net = Network::build(&specs, tap, 1).unwrap();
        for p in net.params() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        net
    }

    #[test]
    fn d_loss_at_half_is_two_ln2() {
        let tape = Tape::new();
        let d = half_d(3);
        let x_real = Tensor::matrix(4, 3, vec![0.3; 12]).unwrap();
        let x_fake = Tensor::matrix(4, 3, vec![-0.2; 12]).unwrap();
        let loss = d_loss_gan(&tape, &d, &x_real, &x_fake).unwrap();
        assert!((loss.item() - 2.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_loss_near_zero() {
        // One sigmoid layer with huge positive bias → D(real)≈1; pass fakes
        // through a negated copy to get D(fake)≈0.
        let specs = [
            LayerSpec::dense(1, 1),
            LayerSpec::Activation(crate::network::Activation::Sigmoid),
        ];
        let d = Network::build(&specs, 0, 1).unwrap();
        let ps = d.params();
        ps[0].data_mut()[0] = 50.0;
        ps[1].data_mut()[0] = 0.0;
        let tape = Tape::new();
        let x_real = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let x_fake = Tensor::matrix(2, 1, vec![-1.0, -1.0]).unwrap();
        let loss = d_loss_gan(&tape, &d, &x_real, &x_fake).unwrap();
        assert!(loss.item() < 1e-6, "loss {}", loss.item());
    }

    #[test]
    fn d_loss_matches_scalar_loop() {
        let tape = Tape::new();
        let (specs, tap) = arch::discriminator(2, 3);
        let d = Network::build(&specs, tap, 9).unwrap();
        let x_real = Tensor::matrix(3, 2, vec![0.1, -0.4, 0.9, 0.2, -0.7, 0.5]).unwrap();
        let x_fake = Tensor::matrix(3, 2, vec![0.6, 0.6, -0.1, -0.9, 0.3, 0.0]).unwrap();
        let loss = d_loss_gan(&tape, &d, &x_real, &x_fake).unwrap();

        let oracle_tape = Tape::new();
        let pr = d.forward(&oracle_tape, &x_real).unwrap().to_vec();
        let pf = d.forward(&oracle_tape, &x_fake).unwrap().to_vec();
        let mut expect = 0.0;
        for &p in &pr {
            expect += -(p.ln());
        }
        expect /= pr.len() as f64;
        let mut fake_sum = 0.0;
        for &p in &pf {
            fake_sum += -((1.0 - p).ln());
        }
        expect += fake_sum / pf.len() as f64;
        assert!((loss.item() - expect).abs() < 1e-12);
    }

    #[test]
    fn g_loss_bce_at_half_is_ln2() {
        let tape = Tape::new();
        let d = half_d(2);
        let x_fake = Tensor::matrix(5, 2, vec![0.1; 10]).unwrap();
        let loss = g_loss(&tape, &d, &x_fake, None, AdvLossKind::Bce).unwrap();
        assert!((loss.item() - LN2).abs() < 1e-12);
    }

    #[test]
    fn fm_loss_zero_when_batches_equal() {
        let tape = Tape::new();
        let (specs, tap) = arch::discriminator(3, 4);
        let d = Network::build(&specs, tap, 3).unwrap();
        let x = Tensor::matrix(4, 3, vec![0.25; 12]).unwrap();
        let loss = g_loss(&tape, &d, &x, Some(&x), AdvLossKind::FeatureMatching).unwrap();
        assert!(loss.item().abs() < 1e-12);
    }

    #[test]
    fn fm_loss_matches_manual_mean_feature_distance() {
        let tape = Tape::new();
        let (specs, tap) = arch::discriminator(2, 3);
        let d = Network::build(&specs, tap, 21).unwrap();
        let xr = Tensor::matrix(2, 2, vec![0.5, -0.5, 0.25, 0.75]).unwrap();
        let xf = Tensor::matrix(2, 2, vec![-0.1, 0.3, 0.8, -0.6]).unwrap();
        let loss = g_loss(&tape, &d, &xf, Some(&xr), AdvLossKind::FeatureMatching).unwrap();

        let t2 = Tape::new();
        let (_, fr) = d.forward_with_features(&t2, &xr).unwrap();
        let (_, ff) = d.forward_with_features(&t2, &xf).unwrap();
        let (fr, ff) = (fr.to_vec(), ff.to_vec());
        let n = 3;
        let mut dist = 0.0;
        for j in 0..n {
            let mr = (fr[j] + fr[n + j]) / 2.0;
            let mf = (ff[j] + ff[n + j]) / 2.0;
            dist += (mr - mf) * (mr - mf);
        }
        assert!((loss.item() - dist.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fm_loss_symmetric_under_batch_swap() {
        let tape = Tape::new();
        let (specs, tap) = arch::discriminator(2, 3);
        let d = Network::build(&specs, tap, 5).unwrap();
        let a = Tensor::matrix(3, 2, vec![0.4, -0.2, 0.1, 0.9, -0.5, 0.3]).unwrap();
        let b = Tensor::matrix(3, 2, vec![-0.3, 0.6, 0.2, -0.8, 0.7, 0.0]).unwrap();
        let ab = g_loss(&tape, &d, &b, Some(&a), AdvLossKind::FeatureMatching).unwrap();
        let ba = g_loss(&tape, &d, &a, Some(&b), AdvLossKind::FeatureMatching).unwrap();
        assert!((ab.item() - ba.item()).abs() < 1e-12);
    }

    #[test]
    fn conditional_concat_width() {
        let (specs, tap) = arch::discriminator(13, 4);
        let net = Network::build(&specs, tap, 2).unwrap();
        let tape = Tape::new();
        let x = Tensor::matrix(4, 10, vec![0.0; 40]).unwrap();
        let mut y = vec![0.0; 12];
        for r in 0..4 {
            y[r * 3 + r % 3] = 1.0;
        }
        let y = Tensor::matrix(4, 3, y).unwrap();
        let out = conditional_wrap(&tape, &net, &x, &y).unwrap();
        assert_eq!(out.shape(), &[4, 1]);
    }

    #[test]
    fn non_one_hot_condition_rejected() {
        let (specs, tap) = arch::discriminator(5, 4);
        let net = Network::build(&specs, tap, 2).unwrap();
        let tape = Tape::new();
        let x = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
        for bad in [vec![0.5, 0.5], vec![1.0, 1.0], vec![0.0, 0.0]] {
            let y = Tensor::matrix(1, 2, bad).unwrap();
            assert!(conditional_wrap(&tape, &net, &x, &y).is_err());
        }
    }

    #[test]
    fn conditioned_rows_permute_with_batch() {
        let (specs, tap) = arch::discriminator(4, 6);
        let net = Network::build(&specs, tap, 31).unwrap();
        let tape = Tape::new();
        let x = Tensor::matrix(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let y = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = conditional_wrap(&tape, &net, &x, &y).unwrap().to_vec();

        let xp = Tensor::matrix(3, 2, vec![0.5, 0.6, 0.1, 0.2, 0.3, 0.4]).unwrap();
        let yp = Tensor::matrix(3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let outp = conditional_wrap(&tape, &net, &xp, &yp).unwrap().to_vec();
        assert_eq!(out[0], outp[1]);
        assert_eq!(out[1], outp[2]);
        assert_eq!(out[2], outp[0]);
    }

    #[test]
    fn conditioned_d_loss_at_half_is_two_ln2() {
        let d = half_d(5); // 3 data cols + 2 condition cols
        let tape = Tape::new();
        let x_real = Tensor::matrix(2, 3, vec![0.3; 6]).unwrap();
        let x_fake = Tensor::matrix(2, 3, vec![-0.1; 6]).unwrap();
        let y = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let cond = Conditioned::new(&d, &y);
        let loss = d_loss_gan(&tape, &cond, &x_real, &x_fake).unwrap();
        assert!((loss.item() - 2.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn bigan_d_loss_at_half_and_pair_width() {
        let latent = 4;
        let data_dim = 6;
        let (d_specs, tap) = arch::discriminator(data_dim + latent, 8);
        let d = Network::build(&d_specs, tap, 1).unwrap();
        for p in d.params() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let e = Network::build(&arch::encoder(data_dim, 8, latent, false), 0, 2).unwrap();
        let g = Network::build(&arch::generator(latent, 8, data_dim), 0, 3).unwrap();
        assert_eq!(d.in_dim(), data_dim + latent);

        let tape = Tape::new();
        let x = Tensor::matrix(3, data_dim, vec![0.2; 18]).unwrap();
        let z = Tensor::matrix(3, latent, vec![0.1; 12]).unwrap();
        let losses =
            bigan_losses(&tape, &d, &e, &g, &x, &z, AdvLossKind::Bce, false).unwrap();
        assert!((losses.d_loss.item() - 2.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn bigan_latent_mismatch_rejected() {
        let (d_specs, tap) = arch::discriminator(6 + 4, 8);
        let d = Network::build(&d_specs, tap, 1).unwrap();
        let e = Network::build(&arch::encoder(6, 8, 3, false), 0, 2).unwrap(); // wrong latent
        let g = Network::build(&arch::generator(4, 8, 6), 0, 3).unwrap();
        let tape = Tape::new();
        let x = Tensor::matrix(2, 6, vec![0.0; 12]).unwrap();
        let z = Tensor::matrix(2, 4, vec![0.0; 8]).unwrap();
        assert!(bigan_losses(&tape, &d, &e, &g, &x, &z, AdvLossKind::Bce, false).is_err());
    }

    #[test]
    fn d_step_leaves_generator_untouched() {
        use crate::tensor::{Optimizer, OptimizerKind};
        let (d_specs, tap) = arch::discriminator(3, 4);
        let d = Network::build(&d_specs, tap, 4).unwrap();
        let g = Network::build(&arch::generator(2, 4, 3), 0, 5).unwrap();
        let g_before: Vec<Tensor> = g.params().iter().map(|p| p.deep_clone()).collect();

        let tape = Tape::new();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let z = crate::network::sample_latent(4, 2, &mut rng);
        let x_fake = g.forward(&tape, &z).unwrap().detach();
        let x_real = Tensor::matrix(4, 3, vec![0.5; 12]).unwrap();
        let loss = d_loss_gan(&tape, &d, &x_real, &x_fake).unwrap();
        tape.backward(&loss).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::adam(), 1e-3, d.params()).unwrap();
        opt.step().unwrap();

        for (now, before) in g.params().iter().zip(&g_before) {
            assert!(now.bits_eq(before));
        }
    }
}
