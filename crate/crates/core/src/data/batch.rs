use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Index batches for one epoch. With `shuffle`, the order depends only on
/// `(seed, epoch)`; the final short batch is kept.
pub fn epoch_batches(
    len: usize,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 1 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        order.shuffle(&mut rng::indexed_stream(seed, "batches", epoch as u64));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Epoch-indexed batch plan over a corpus of `len` items.
#[derive(Debug, Clone, Copy)]
pub struct Batches {
    pub len: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl Batches {
    pub fn new(len: usize, batch_size: usize, shuffle: bool, seed: u64) -> Result<Self> {
        if batch_size < 1 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(Batches {
            len,
            batch_size,
            shuffle,
            seed,
        })
    }

    pub fn per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        epoch_batches(self.len, self.batch_size, self.shuffle, self.seed, epoch)
            .expect("batch size validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_keep_short_tail() {
        let b = epoch_batches(10, 4, true, 0, 0).unwrap();
        let sizes: Vec<usize> = b.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn unshuffled_preserves_order() {
        let b = epoch_batches(5, 2, false, 9, 3).unwrap();
        assert_eq!(b, vec![vec![0, 1], vec![2, 3], vec![4]]);
    }

    #[test]
    fn covers_every_item_once_and_is_seeded() {
        let a = epoch_batches(37, 8, true, 42, 2).unwrap();
        let b = epoch_batches(37, 8, true, 42, 2).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.concat();
        all.sort();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_ne!(a, epoch_batches(37, 8, true, 42, 3).unwrap());
    }

    #[test]
    fn zero_batch_size_rejected() {
        assert!(epoch_batches(3, 0, false, 0, 0).is_err());
        assert!(Batches::new(3, 0, false, 0).is_err());
    }

    #[test]
    fn plan_counts_batches() {
        let p = Batches::new(10, 4, true, 1).unwrap();
        assert_eq!(p.per_epoch(), 3);
        assert_eq!(p.epoch(0).len(), 3);
    }
}
