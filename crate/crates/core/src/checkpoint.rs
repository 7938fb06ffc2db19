//! Self-describing binary network checkpoints.
//!
//! Layout: magic `"GADN"`, version `u32`, feature-tap `u32`, layer count
//! `u32`, then one record per layer. Dense records carry dims and raw
//! little-endian f64 weights, so a save/load round-trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Activation, LayerSpec, Network};

pub const MAGIC: [u8; 4] = *b"GADN";
pub const VERSION: u32 = 1;

const KIND_DENSE: u8 = 0;
const KIND_ACTIVATION: u8 = 1;

const ACT_RELU: u8 = 0;
const ACT_LEAKY: u8 = 1;
const ACT_SIGMOID: u8 = 2;
const ACT_TANH: u8 = 3;
const ACT_NONE: u8 = 4;

pub fn save(net: &Network, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(net.feature_tap() as u32).to_le_bytes())?;
    w.write_all(&(net.specs().len() as u32).to_le_bytes())?;

    let params = net.params();
    let mut p = params.iter();
    for spec in net.specs() {
        match *spec {
            LayerSpec::Dense {
                in_dim,
                out_dim,
                bias,
            } => {
                w.write_all(&[KIND_DENSE])?;
                w.write_all(&(in_dim as u32).to_le_bytes())?;
                w.write_all(&(out_dim as u32).to_le_bytes())?;
                w.write_all(&[bias as u8])?;
                let weights = p.next().expect("params align with specs");
                for v in weights.data().iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
                if bias {
                    let b = p.next().expect("bias param present");
                    for v in b.data().iter() {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
            LayerSpec::Activation(a) => {
                w.write_all(&[KIND_ACTIVATION])?;
                let (tag, alpha) = match a {
                    Activation::Relu => (ACT_RELU, 0.0),
                    Activation::LeakyRelu(alpha) => (ACT_LEAKY, alpha),
                    Activation::Sigmoid => (ACT_SIGMOID, 0.0),
                    Activation::Tanh => (ACT_TANH, 0.0),
                    Activation::None => (ACT_NONE, 0.0),
                };
                w.write_all(&[tag])?;
                w.write_all(&alpha.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::data(format!("{}: truncated header", path.display())))?;
    if magic != MAGIC {
        return Err(Error::data(format!(
            "{}: bad magic {magic:?}, expected {MAGIC:?}",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::data(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let feature_tap = read_u32(&mut r)? as usize;
    let n_layers = read_u32(&mut r)? as usize;

    let mut specs = Vec::with_capacity(n_layers);
    let mut weights: Vec<Vec<f64>> = Vec::new();
    for _ in 0..n_layers {
        let kind = read_u8(&mut r)?;
        match kind {
            KIND_DENSE => {
                let in_dim = read_u32(&mut r)? as usize;
                let out_dim = read_u32(&mut r)? as usize;
                let bias = read_u8(&mut r)? != 0;
                weights.push(read_f64s(&mut r, in_dim * out_dim)?);
                if bias {
                    weights.push(read_f64s(&mut r, out_dim)?);
                }
                specs.push(LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    bias,
                });
            }
            KIND_ACTIVATION => {
                let tag = read_u8(&mut r)?;
                let alpha = f64::from_le_bytes(read_bytes::<8>(&mut r)?);
                let act = match tag {
                    ACT_RELU => Activation::Relu,
                    ACT_LEAKY => Activation::LeakyRelu(alpha),
                    ACT_SIGMOID => Activation::Sigmoid,
                    ACT_TANH => Activation::Tanh,
                    ACT_NONE => Activation::None,
                    other => {
                        return Err(Error::data(format!("unknown activation tag {other}")))
                    }
                };
                specs.push(LayerSpec::Activation(act));
            }
            other => return Err(Error::data(format!("unknown layer kind {other}"))),
        }
    }

    let net = Network::build(&specs, feature_tap, 0)?;
    for (param, stored) in net.params().iter().zip(weights) {
        if param.numel() != stored.len() {
            return Err(Error::data("checkpoint weight count mismatch"));
        }
        param.data_mut().copy_from_slice(&stored);
    }
    Ok(net)
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    Ok(read_bytes::<1>(r)?[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_bytes::<4>(r)?))
}

fn read_bytes<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::data("truncated checkpoint"))?;
    Ok(buf)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f64::from_le_bytes(read_bytes::<8>(r)?));
    }
    Ok(out)
}
