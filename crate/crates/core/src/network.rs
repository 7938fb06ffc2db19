//! Layered parametric functions (generators, discriminators, encoders) built
//! from declarative specs, with a named feature tap for feature matching.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    /// Identity. Keeps layer indices (and therefore feature taps) stable when
    /// an activation is toggled off.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    },
    Activation(Activation),
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> LayerSpec {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            bias: true,
        }
    }
}

enum Layer {
    Dense { w: Tensor, b: Option<Tensor> },
    Activation(Activation),
}

/// A stack of dense and activation layers with materialized parameters.
pub struct Network {
    layers: Vec<Layer>,
    specs: Vec<LayerSpec>,
    feature_tap: usize,
    in_dim: usize,
    out_dim: usize,
}

impl Network {
    /// Materializes a spec. Dense weights are Glorot-uniform from a PRNG
    /// seeded with `seed` (same seed, same bits); biases start at zero.
    pub fn build(specs: &[LayerSpec], feature_tap: usize, seed: u64) -> Result<Network> {
        let (in_dim, out_dim) = validate_specs(specs)?;
        if feature_tap >= specs.len() {
            return Err(Error::contract(format!(
                "feature_tap {} out of range for {} layers",
                feature_tap,
                specs.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|spec| match *spec {
                LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    bias,
                } => {
                    let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
                    let dist = Uniform::new_inclusive(-bound, bound);
                    let data: Vec<f64> = (0..in_dim * out_dim)
                        .map(|_| dist.sample(&mut rng))
                        .collect();
                    let w = Tensor::new(&[in_dim, out_dim], data)
                        .expect("glorot init is finite")
                        .with_grad();
                    let b = bias.then(|| Tensor::zeros(&[out_dim]).with_grad());
                    Layer::Dense { w, b }
                }
                LayerSpec::Activation(a) => Layer::Activation(a),
            })
            .collect();
        Ok(Network {
            layers,
            specs: specs.to_vec(),
            feature_tap,
            in_dim,
            out_dim,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn feature_tap(&self) -> usize {
        self.feature_tap
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// All trainable tensors, in layer order (weights before biases).
    pub fn params(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Dense { w, b } = layer {
                out.push(w.clone());
                if let Some(b) = b {
                    out.push(b.clone());
                }
            }
        }
        out
    }

    pub fn zero_grad(&self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    /// Deep copy of the parameters (checkpoint snapshot).
    pub fn snapshot(&self) -> Network {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Dense { w, b } => Layer::Dense {
                        w: w.deep_clone(),
                        b: b.as_ref().map(|b| b.deep_clone()),
                    },
                    Layer::Activation(a) => Layer::Activation(*a),
                })
                .collect(),
            specs: self.specs.clone(),
            feature_tap: self.feature_tap,
            in_dim: self.in_dim,
            out_dim: self.out_dim,
        }
    }

    /// Copies parameter values from `other` (shapes must match).
    pub fn load_from(&self, other: &Network) -> Result<()> {
        if self.specs != other.specs {
            return Err(Error::contract("load_from: mismatched layer specs"));
        }
        for (dst, src) in self.params().iter().zip(other.params()) {
            dst.data_mut().copy_from_slice(&src.data());
        }
        Ok(())
    }

    pub fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        Ok(self.run(tape, x)?.0)
    }

    /// Forward pass that also returns the feature-tap layer's post-activation
    /// output. The final output is computed identically to [`forward`].
    pub fn forward_with_features(&self, tape: &Tape, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (out, features) = self.run(tape, x)?;
        Ok((out, features.expect("feature_tap is validated at build time")))
    }

    fn run(&self, tape: &Tape, x: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        if x.shape().len() != 2 || x.shape()[1] != self.in_dim {
            return Err(Error::DimMismatch {
                op: "network forward",
                lhs: x.shape().to_vec(),
                rhs: vec![x.rows(), self.in_dim],
            });
        }
        let mut cur = x.clone();
        let mut features = None;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Dense { w, b } => {
                    let y = tape.matmul(&cur, w)?;
                    match b {
                        Some(b) => tape.add_bias(&y, b)?,
                        None => y,
                    }
                }
                Layer::Activation(a) => match a {
                    Activation::Relu => tape.relu(&cur)?,
                    Activation::LeakyRelu(alpha) => tape.leaky_relu(&cur, *alpha)?,
                    Activation::Sigmoid => tape.sigmoid(&cur)?,
                    Activation::Tanh => tape.tanh(&cur)?,
                    Activation::None => cur,
                },
            };
            if i == self.feature_tap {
                features = Some(cur.clone());
            }
        }
        Ok((cur, features))
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<(usize, usize)> {
    let mut width: Option<usize> = None;
    let mut in_dim = None;
    for spec in specs {
        match *spec {
            LayerSpec::Dense {
                in_dim: di,
                out_dim: doo,
                ..
            } => {
                if di == 0 || doo == 0 {
                    return Err(Error::contract("dense layer with zero dimension"));
                }
                if let Some(w) = width {
                    if w != di {
                        return Err(Error::DimMismatch {
                            op: "network spec",
                            lhs: vec![w],
                            rhs: vec![di],
                        });
                    }
                }
                in_dim.get_or_insert(di);
                width = Some(doo);
            }
            LayerSpec::Activation(_) => {}
        }
    }
    match (in_dim, width) {
        (Some(i), Some(o)) => Ok((i, o)),
        _ => Err(Error::contract("network spec has no dense layer")),
    }
}

/// I.i.d. standard-normal latent batch `[batch × dim]` drawn from the prior.
pub fn sample_latent<R: Rng>(batch: usize, dim: usize, rng: &mut R) -> Tensor {
    let data: Vec<f64> = (0..batch * dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor::new(&[batch, dim], data).expect("normal samples are finite")
}

/// Default desk-scale architectures. The widths are configurable; these are
/// the smallest shapes that train on image-vector data in CPU minutes.
pub mod arch {
    use super::{Activation, LayerSpec};

    pub const DEFAULT_HIDDEN: usize = 128;
    pub const DEFAULT_LATENT: usize = 64;
    pub const LEAKY_SLOPE: f64 = 0.2;

    /// Generator / decoder: latent → hidden (leaky relu) → data (tanh).
    pub fn generator(latent: usize, hidden: usize, out: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::dense(latent, hidden),
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            LayerSpec::dense(hidden, out),
            LayerSpec::Activation(Activation::Tanh),
        ]
    }

    /// Discriminator: data → hidden (leaky relu) → 1 (sigmoid), feature tap
    /// on the hidden activation.
    pub fn discriminator(in_dim: usize, hidden: usize) -> (Vec<LayerSpec>, usize) {
        (
            vec![
                LayerSpec::dense(in_dim, hidden),
                LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
                LayerSpec::dense(hidden, 1),
                LayerSpec::Activation(Activation::Sigmoid),
            ],
            1,
        )
    }

    /// Encoder: data → hidden → hidden → latent, no output squashing. Only
    /// the *first* layer's activation is togglable — the reference BiGAN
    /// code shipped without that one and measurably performs better that
    /// way. The second hidden activation is always present so the encoder
    /// stays nonlinear either way.
    pub fn encoder(
        in_dim: usize,
        hidden: usize,
        latent: usize,
        first_layer_activation: bool,
    ) -> Vec<LayerSpec> {
        let first = if first_layer_activation {
            Activation::LeakyRelu(LEAKY_SLOPE)
        } else {
            Activation::None
        };
        vec![
            LayerSpec::dense(in_dim, hidden),
            LayerSpec::Activation(first),
            LayerSpec::dense(hidden, hidden),
            LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            LayerSpec::dense(hidden, latent),
        ]
    }
}
