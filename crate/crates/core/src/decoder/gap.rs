use rand::Rng;

use crate::encoder::FeatureMap;
use crate::error::{Error, Result};
use crate::params::{normal, ParamStore};
use crate::tensor::{Element, Tensor};

/// Read-out of the GAP head: `weight` is `(K, D)`, `bias` is `(K)`.
#[derive(Clone, Debug)]
pub struct GapDecoderParams<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

const WEIGHT: &str = "decoder.weight";
const BIAS: &str = "decoder.bias";

impl<T: Element> GapDecoderParams<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let p = GapDecoderParams { weight, bias };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        match (self.weight.shape(), self.bias.shape()) {
            (&[k, _], &[kb]) if k == kb => Ok(()),
            (w, b) => Err(Error::shape("gap_decode", format!("weight {w:?} and bias {b:?} disagree on K"))),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn depth(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn init(store: &mut ParamStore<T>, depth: usize, num_labels: usize, rng: &mut impl Rng) -> Result<()> {
        store.insert(WEIGHT, normal(rng, num_labels * depth, (1.0 / depth as f64).sqrt()), &[num_labels, depth])?;
        store.insert(BIAS, vec![T::zero(); num_labels], &[num_labels])
    }

    pub fn from_store(store: &ParamStore<T>) -> Result<Self> {
        Self::new(store.get(WEIGHT)?.clone(), store.get(BIAS)?.clone())
    }

    pub fn param_count(depth: usize, num_labels: usize) -> usize {
        depth * num_labels + num_labels
    }

    /// Multiply-adds per image: the spatial mean (one add per feature value)
    /// plus the `D x K` projection.
    pub fn multiply_adds(height: usize, width: usize, depth: usize, num_labels: usize) -> u64 {
        (height * width * depth + depth * num_labels) as u64
    }
}

/// `logits_b = W * mean_{h,w}(F_b) + b`, shape `(batch, K)`.
pub fn gap_decode<T: Element>(features: &FeatureMap<T>, params: &GapDecoderParams<T>) -> Result<Tensor<T>> {
    params.check()?;
    if features.depth() != params.depth() {
        return Err(Error::shape(
            "gap_decode",
            format!("feature depth {} but weight expects {}", features.depth(), params.depth()),
        ));
    }
    let pooled = features.values().mean_axes(&[1, 2])?;
    pooled.matmul(&params.weight.transpose(&[1, 0])?)?.add(&params.bias)
}
