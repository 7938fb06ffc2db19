//! Shared test oracles: central finite differences for gradient checks and
//! seeded random tensors sampled away from non-smooth points.
#![allow(dead_code)] // each test binary uses its own subset

use gad_core::{Result, Tape, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_H: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

#[derive(Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Verifies every element of every parameter's analytic gradient against a
/// central finite difference of the loss. `build` must construct the loss
/// from the parameters' *current* values on the tape it is given.
pub fn gradcheck(
    params: &[Tensor],
    build: &dyn Fn(&Tape) -> Result<Tensor>,
    h: f64,
) -> GradCheck {
    for p in params {
        p.zero_grad();
    }
    let tape = Tape::new();
    let loss = build(&tape).expect("loss construction");
    tape.backward(&loss).expect("backward");
    let grads: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval = || -> f64 {
        let tape = Tape::new();
        build(&tape).expect("loss eval").item()
    };

    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0;
    for (p, grad) in params.iter().zip(&grads) {
        for j in 0..p.numel() {
            let orig = p.data()[j];
            p.data_mut()[j] = orig + h;
            let f_plus = eval();
            p.data_mut()[j] = orig - h;
            let f_minus = eval();
            p.data_mut()[j] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let analytic = grad[j];
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            max_rel_err = max_rel_err.max((analytic - numeric).abs() / denom);
            checked += 1;
        }
    }
    GradCheck {
        max_rel_err,
        checked,
    }
}

pub fn assert_gradcheck(params: &[Tensor], build: &dyn Fn(&Tape) -> Result<Tensor>, what: &str) {
    let result = gradcheck(params, build, FD_H);
    assert!(
        result.max_rel_err < FD_TOL,
        "{what}: max rel err {} over {} entries",
        result.max_rel_err,
        result.checked
    );
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values in [-1, 1] excluding the band around zero, so kinked ops
/// (relu, abs, L1) are sampled on smooth ground.
pub fn smooth_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| {
            let mag = 0.1 + 0.9 * rng.gen::<f64>();
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * mag
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Uniform values anywhere in [-1, 1].
pub fn uniform_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Probabilities in [0.05, 0.95], clear of the bce clamp.
pub fn prob_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| 0.05 + 0.9 * rng.gen::<f64>())
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Hard 0/1 targets.
pub fn binary_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Random small shape `[m, n]` with 1 ≤ m,n ≤ max_dim.
pub fn small_shape(rng: &mut ChaCha8Rng, max_dim: usize) -> (usize, usize) {
    (
        1 + rng.gen_range(0..max_dim),
        1 + rng.gen_range(0..max_dim),
    )
}
