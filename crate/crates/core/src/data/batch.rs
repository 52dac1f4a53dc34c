use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::{augment, AugmentConfig};
use super::LabeledExample;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchOptions {
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: u64,
    pub shuffle: bool,
    /// Training batches only; `None` or a disabled config leaves images as-is.
    pub augment: Option<AugmentConfig>,
}

impl BatchOptions {
    /// In-order, unaugmented batches for evaluation.
    pub fn eval(batch_size: usize) -> Self {
        BatchOptions { batch_size, seed: 0, epoch: 0, shuffle: false, augment: None }
    }
}

#[derive(Clone, Debug)]
pub struct Batch<T: Element> {
    /// `(B, H, W, C)`.
    pub images: Tensor<T>,
    /// `(B, K)` in `{0, 1}`.
    pub targets: Tensor<T>,
    /// Positions of the examples in the source slice.
    pub indices: Vec<usize>,
}

/// Independent RNG per purpose, seed, epoch and example.
fn keyed_rng(domain: u64, seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([domain, seed, epoch, index]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

const SHUFFLE: u64 = 1;
const AUGMENT: u64 = 2;

/// Iterator over mini-batches of `examples`.
pub struct BatchIter<'a, T: Element> {
    examples: &'a [LabeledExample],
    order: Vec<usize>,
    opts: BatchOptions,
    pos: usize,
    _marker: std::marker::PhantomData<T>,
}

/// Batches in a shuffled order determined by `(seed, epoch)`; the last batch
/// may be short. Examples within a batch are prepared in parallel but always
/// emitted in the same order.
pub fn batch_iter<T: Element>(examples: &[LabeledExample], opts: BatchOptions) -> Result<BatchIter<'_, T>> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidSpec("batch_size must be positive".into()));
    }
    let first = examples[0].image.shape();
    if let Some(e) = examples.iter().find(|e| e.image.shape() != first || e.target.len() != examples[0].target.len()) {
        return Err(Error::shape("batch_iter", format!("`{}` differs from the first example's shape", e.source_id)));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    if opts.shuffle {
        order.shuffle(&mut keyed_rng(SHUFFLE, opts.seed, opts.epoch, 0));
    }
    Ok(BatchIter { examples, order, opts, pos: 0, _marker: std::marker::PhantomData })
}

impl<T: Element> BatchIter<'_, T> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.opts.batch_size)
    }

    fn assemble(&self, indices: &[usize]) -> Result<Batch<T>> {
        let opts = self.opts;
        let images: Vec<Vec<T>> = indices
            .par_iter()
            .map(|&i| {
                let ex = &self.examples[i];
                let img = match opts.augment {
                    Some(cfg) if cfg.enabled => augment(&ex.image, &cfg, &mut keyed_rng(AUGMENT, opts.seed, opts.epoch, i as u64)),
                    _ => ex.image.clone(),
                };
                img.data().iter().map(|&v| T::from_f64_lossy(v as f64)).collect()
            })
            .collect();
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.examples[0].image.shape());
        let k = self.examples[0].target.len();
        let targets = indices
            .iter()
            .flat_map(|&i| self.examples[i].target.iter().map(|&t| if t { T::one() } else { T::zero() }))
            .collect();
        Ok(Batch {
            images: Tensor::new(images.concat(), &shape)?,
            targets: Tensor::new(targets, &[indices.len(), k])?,
            indices: indices.to_vec(),
        })
    }
}

impl<T: Element> Iterator for BatchIter<'_, T> {
    type Item = Result<Batch<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.opts.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(self.assemble(&indices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples(n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|i| LabeledExample {
                image: Tensor::new(vec![i as f32 / n as f32; 2 * 2 * 3], &[2, 2, 3]).unwrap(),
                target: vec![i % 2 == 0, i % 3 == 0],
                source_id: i.to_string(),
            })
            .collect()
    }

    fn opts(epoch: u64) -> BatchOptions {
        BatchOptions { batch_size: 4, seed: 9, epoch, shuffle: true, augment: Some(AugmentConfig::default()) }
    }

    #[test]
    fn sizes_and_permutation() {
        let ex = examples(10);
        let batches: Vec<Batch<f32>> = batch_iter(&ex, opts(0)).unwrap().map(Result::unwrap).collect();
        assert_eq!(batches.iter().map(|b| b.indices.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(batches[2].targets.shape(), &[2, 2]);
    }

    #[test]
    fn deterministic_per_epoch() {
        let ex = examples(10);
        let order = |e| batch_iter::<f32>(&ex, opts(e)).unwrap().flat_map(|b| b.unwrap().indices).collect::<Vec<_>>();
        assert_eq!(order(3), order(3));
        assert_ne!(order(3), order(4));
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(batch_iter::<f32>(&[], opts(0)), Err(Error::EmptyDataset)));
    }
}
