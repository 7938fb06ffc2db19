//! Shared training plumbing: batch iteration, optimizer defaults, and the
//! per-epoch model-selection log.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Knobs common to all adversarial training loops.
#[derive(Clone, Copy, Debug)]
pub struct TrainOpts {
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub beta1: f64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            epochs: 15,
            batch_size: 64,
            latent_dim: 64,
            hidden_dim: 128,
            lr: 2e-4,
            beta1: 0.5,
        }
    }
}

/// Shuffled index batches for one epoch. Partial tail batches are kept.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}

/// One model-selection measurement: eval-split AUPRC after an epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionRow {
    pub epoch: usize,
    pub auprc: f64,
}

pub fn write_selection_log(path: &Path, rows: &[SelectionRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,auprc")?;
    for row in rows {
        writeln!(f, "{},{:.6}", row.epoch, row.auprc)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn batches_cover_every_index_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batches = epoch_batches(103, 10, &mut rng);
        assert_eq!(batches.len(), 11);
        let mut seen: Vec<usize> = batches.into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..103).collect::<Vec<_>>());
    }
}
