use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::attention;
use crate::encoder::FeatureMap;
use crate::error::{Error, Result};
use crate::params::{he_normal, normal, ParamStore};
use crate::tensor::{Element, Tensor};

/// Hyperparameters of the query-token decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlDecoderConfig {
    /// Query tokens `G`; `None` means `ceil(K / 4)`.
    pub groups: Option<usize>,
    /// Token width `d`.
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// One read-out matrix shared by every group instead of one per group.
    pub shared_readout: bool,
    pub layer_norm_eps: f64,
}

impl Default for MlDecoderConfig {
    fn default() -> Self {
        MlDecoderConfig {
            groups: None,
            model_dim: 32,
            ffn_dim: 64,
            layers: 1,
            heads: 1,
            shared_readout: false,
            layer_norm_eps: 1e-5,
        }
    }
}

impl MlDecoderConfig {
    pub fn groups_for(&self, num_labels: usize) -> usize {
        self.groups.unwrap_or(num_labels.div_ceil(4).max(1))
    }

    /// Labels decoded per group, `s = ceil(K / G)`.
    pub fn group_size(&self, num_labels: usize) -> usize {
        num_labels.div_ceil(self.groups_for(num_labels))
    }

    pub fn validate(&self, num_labels: usize) -> Result<()> {
        let g = self.groups_for(num_labels);
        if num_labels == 0 {
            return Err(Error::InvalidSpec("decoder needs at least one label".into()));
        }
        if g == 0 || g > num_labels {
            return Err(Error::GroupOverflow { groups: g, labels: num_labels });
        }
        if self.model_dim == 0 || self.ffn_dim == 0 || self.layers == 0 || self.heads == 0 {
            return Err(Error::InvalidSpec("decoder dims, layers and heads must be positive".into()));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidSpec(format!("model_dim {} not divisible by {} heads", self.model_dim, self.heads)));
        }
        Ok(())
    }

    pub fn param_count(&self, depth: usize, num_labels: usize) -> usize {
        let (g, s, d, f) = (self.groups_for(num_labels), self.group_size(num_labels), self.model_dim, self.ffn_dim);
        let layer = 2 * depth * d + d * f + f + f * d + d + 4 * d;
        let readout = if self.shared_readout { d * s } else { g * d * s };
        g * d + self.layers * layer + readout + g * s
    }

    /// Multiply-adds per image on an `H x W x D` feature map. Layer norms,
    /// softmax and bias adds are not counted.
    pub fn multiply_adds(&self, height: usize, width: usize, depth: usize, num_labels: usize) -> u64 {
        let n = height * width;
        let (g, s, d, f) = (self.groups_for(num_labels), self.group_size(num_labels), self.model_dim, self.ffn_dim);
        let per_layer = 2 * n * depth * d + 2 * g * n * d + 2 * g * d * f;
        (self.layers * per_layer + g * d * s) as u64
    }
}

/// Weights of one cross-attention block.
#[derive(Clone, Debug)]
pub struct MlDecoderLayer<T: Element> {
    pub key_proj: Tensor<T>,
    pub value_proj: Tensor<T>,
    pub ffn_w1: Tensor<T>,
    pub ffn_b1: Tensor<T>,
    pub ffn_w2: Tensor<T>,
    pub ffn_b2: Tensor<T>,
    pub norm1_scale: Tensor<T>,
    pub norm1_shift: Tensor<T>,
    pub norm2_scale: Tensor<T>,
    pub norm2_shift: Tensor<T>,
}

const LAYER_FIELDS: [&str; 10] = [
    "key_proj",
    "value_proj",
    "ffn_w1",
    "ffn_b1",
    "ffn_w2",
    "ffn_b2",
    "norm1_scale",
    "norm1_shift",
    "norm2_scale",
    "norm2_shift",
];

impl<T: Element> MlDecoderLayer<T> {
    fn tensors(&self) -> [&Tensor<T>; 10] {
        [
            &self.key_proj,
            &self.value_proj,
            &self.ffn_w1,
            &self.ffn_b1,
            &self.ffn_w2,
            &self.ffn_b2,
            &self.norm1_scale,
            &self.norm1_shift,
            &self.norm2_scale,
            &self.norm2_shift,
        ]
    }

    fn from_tensors(t: [Tensor<T>; 10]) -> Self {
        let [key_proj, value_proj, ffn_w1, ffn_b1, ffn_w2, ffn_b2, norm1_scale, norm1_shift, norm2_scale, norm2_shift] = t;
        MlDecoderLayer {
            key_proj,
            value_proj,
            ffn_w1,
            ffn_b1,
            ffn_w2,
            ffn_b2,
            norm1_scale,
            norm1_shift,
            norm2_scale,
            norm2_shift,
        }
    }
}

/// All parameters of the query-token decoder plus the structural settings
/// needed to run it.
#[derive(Clone, Debug)]
pub struct MlDecoderParams<T: Element> {
    /// `(G, d)` learnable query tokens.
    pub queries: Tensor<T>,
    pub layers: Vec<MlDecoderLayer<T>>,
    /// `(G, d, s)`, or `(d, s)` when shared across groups.
    pub readout_weight: Tensor<T>,
    /// `(G, s)`.
    pub readout_bias: Tensor<T>,
    pub num_labels: usize,
    pub heads: usize,
    pub layer_norm_eps: f64,
}

impl<T: Element> MlDecoderParams<T> {
    /// Seeded initialization for features of depth `depth`.
    pub fn init(config: &MlDecoderConfig, depth: usize, num_labels: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate(num_labels)?;
        let (g, s, d, f) = (config.groups_for(num_labels), config.group_size(num_labels), config.model_dim, config.ffn_dim);
        let param = |data: Vec<T>, shape: &[usize]| Tensor::param(data, shape);
        let ones = |n: usize| vec![T::one(); n];
        let zeros = |n: usize| vec![T::zero(); n];
        let queries = param(normal(rng, g * d, 1.0 / (d as f64).sqrt()), &[g, d])?;
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            layers.push(MlDecoderLayer {
                key_proj: param(normal(rng, depth * d, (1.0 / depth as f64).sqrt()), &[depth, d])?,
                value_proj: param(normal(rng, depth * d, (1.0 / depth as f64).sqrt()), &[depth, d])?,
                ffn_w1: param(he_normal(rng, d * f, d), &[d, f])?,
                ffn_b1: param(zeros(f), &[f])?,
                ffn_w2: param(he_normal(rng, f * d, f), &[f, d])?,
                ffn_b2: param(zeros(d), &[d])?,
                norm1_scale: param(ones(d), &[d])?,
                norm1_shift: param(zeros(d), &[d])?,
                norm2_scale: param(ones(d), &[d])?,
                norm2_shift: param(zeros(d), &[d])?,
            });
        }
        let readout_shape: Vec<usize> = if config.shared_readout { vec![d, s] } else { vec![g, d, s] };
        let n: usize = readout_shape.iter().product();
        let readout_weight = param(normal(rng, n, (1.0 / d as f64).sqrt()), &readout_shape)?;
        let readout_bias = param(zeros(g * s), &[g, s])?;
        let p = MlDecoderParams {
            queries,
            layers,
            readout_weight,
            readout_bias,
            num_labels,
            heads: config.heads,
            layer_norm_eps: config.layer_norm_eps,
        };
        p.check(None)?;
        Ok(p)
    }

    pub fn groups(&self) -> usize {
        self.queries.shape()[0]
    }

    pub fn model_dim(&self) -> usize {
        self.queries.shape()[1]
    }

    pub fn group_size(&self) -> usize {
        self.readout_bias.shape()[1]
    }

    pub fn shared_readout(&self) -> bool {
        self.readout_weight.rank() == 2
    }

    /// Consistency of every tensor shape; `depth` additionally pins the key
    /// and value projections to the feature depth.
    pub fn check(&self, depth: Option<usize>) -> Result<()> {
        let bad = |what: String| Err(Error::shape("ml_decode", what));
        let [g, d] = *self.queries.shape() else { return bad(format!("queries {:?}", self.queries.shape())) };
        if g > self.num_labels {
            return Err(Error::GroupOverflow { groups: g, labels: self.num_labels });
        }
        let &[gb, s] = self.readout_bias.shape() else { return bad(format!("readout bias {:?}", self.readout_bias.shape())) };
        if gb != g || g * s < self.num_labels {
            return bad(format!("{g} groups of {s} cannot cover {} labels", self.num_labels));
        }
        let want_readout: Vec<usize> = if self.shared_readout() { vec![d, s] } else { vec![g, d, s] };
        if self.readout_weight.shape() != want_readout {
            return bad(format!("readout weight {:?}, expected {want_readout:?}", self.readout_weight.shape()));
        }
        if self.heads == 0 || d % self.heads != 0 {
            return bad(format!("model dim {d} not divisible by {} heads", self.heads));
        }
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            let &[depth_k, dk] = l.key_proj.shape() else { return bad(format!("layer {i} key_proj")) };
            let f = l.ffn_w1.shape().get(1).copied().unwrap_or(0);
            let expect: [&[usize]; 10] = [
                &[depth_k, d],
                &[depth_k, d],
                &[d, f],
                &[f],
                &[f, d],
                &[d],
                &[d],
                &[d],
                &[d],
                &[d],
            ];
            for ((t, want), name) in l.tensors().iter().zip(expect).zip(LAYER_FIELDS) {
                if t.shape() != want {
                    return bad(format!("layer {i} {name} is {:?}, expected {want:?}", t.shape()));
                }
            }
            if dk != d || depth.is_some_and(|dep| dep != depth_k) {
                return bad(format!("layer {i} projects depth {depth_k} but features have depth {depth:?}"));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let layers: usize = self.layers.iter().flat_map(|l| l.tensors()).map(Tensor::numel).sum();
        self.queries.numel() + layers + self.readout_weight.numel() + self.readout_bias.numel()
    }

    pub fn to_store(&self, store: &mut ParamStore<T>) -> Result<()> {
        let mut put = |name: String, t: &Tensor<T>| store.insert(name, t.to_vec(), t.shape());
        put("decoder.queries".into(), &self.queries)?;
        for (i, l) in self.layers.iter().enumerate() {
            for (t, field) in l.tensors().into_iter().zip(LAYER_FIELDS) {
                put(format!("decoder.layer{i}.{field}"), t)?;
            }
        }
        put("decoder.readout.weight".into(), &self.readout_weight)?;
        put("decoder.readout.bias".into(), &self.readout_bias)
    }

    pub fn from_store(store: &ParamStore<T>, config: &MlDecoderConfig, num_labels: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(config.layers);
        for i in 0..config.layers {
            let mut ts = Vec::with_capacity(10);
            for field in LAYER_FIELDS {
                ts.push(store.get(&format!("decoder.layer{i}.{field}"))?.clone());
            }
            layers.push(MlDecoderLayer::from_tensors(ts.try_into().expect("ten fields")));
        }
        let p = MlDecoderParams {
            queries: store.get("decoder.queries")?.clone(),
            layers,
            readout_weight: store.get("decoder.readout.weight")?.clone(),
            readout_bias: store.get("decoder.readout.bias")?.clone(),
            num_labels,
            heads: config.heads,
            layer_norm_eps: config.layer_norm_eps,
        };
        p.check(None)?;
        Ok(p)
    }
}

/// `(..., T, d)` -> `(..., heads, T, d / heads)`.
fn split_heads<T: Element>(x: &Tensor<T>, heads: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    let r = s.len();
    let (tokens, d) = (s[r - 2], s[r - 1]);
    let mut shape = s[..r - 2].to_vec();
    shape.extend([tokens, heads, d / heads]);
    let mut perm: Vec<usize> = (0..r - 2).collect();
    perm.extend([r - 1, r - 2, r]);
    x.reshape(&shape)?.transpose(&perm)
}

/// `(B, heads, T, dh)` -> `(B, T, heads * dh)`.
fn merge_heads<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let &[b, h, t, dh] = x.shape() else { unreachable!("merge_heads expects rank 4") };
    x.transpose(&[0, 2, 1, 3])?.reshape(&[b, t, h * dh])
}

fn affine<T: Element>(x: &Tensor<T>, scale: &Tensor<T>, shift: &Tensor<T>) -> Result<Tensor<T>> {
    x.mul(scale)?.add(shift)
}

/// Query-token decoding of `F` into `(batch, K)` logits.
///
/// Per layer: keys and values are linear projections of the flattened
/// features; the queries attend to them; the response goes through a layer
/// norm, then a feed-forward block with a residual connection and a second
/// layer norm. The final tokens pass through the group read-out, each token
/// producing `s` consecutive logits; the concatenation is cut to `K`.
pub fn ml_decode<T: Element>(features: &FeatureMap<T>, params: &MlDecoderParams<T>) -> Result<Tensor<T>> {
    params.check(Some(features.depth()))?;
    let (b, n) = (features.batch(), features.height() * features.width());
    let (g, s) = (params.groups(), params.group_size());
    let flat = features.values().reshape(&[b, n, features.depth()])?;
    let eps = params.layer_norm_eps;

    let mut tokens = params.queries.clone();
    for layer in &params.layers {
        let keys = split_heads(&flat.matmul(&layer.key_proj)?, params.heads)?;
        let values = split_heads(&flat.matmul(&layer.value_proj)?, params.heads)?;
        let q = split_heads(&tokens, params.heads)?;
        let (resp, _) = attention(&q, &keys, &values)?;
        let resp = merge_heads(&resp)?;
        let normed = affine(&resp.layer_norm_lastdim(eps)?, &layer.norm1_scale, &layer.norm1_shift)?;
        let hidden = normed.matmul(&layer.ffn_w1)?.add(&layer.ffn_b1)?.relu()?;
        let ffn = hidden.matmul(&layer.ffn_w2)?.add(&layer.ffn_b2)?;
        tokens = affine(&normed.add(&ffn)?.layer_norm_lastdim(eps)?, &layer.norm2_scale, &layer.norm2_shift)?;
    }

    // (B, G, d) -> (G, B, d) so each group multiplies its own (d, s) block.
    let per_group = tokens.transpose(&[1, 0, 2])?.matmul(&params.readout_weight)?;
    let per_group = per_group.add(&params.readout_bias.reshape(&[g, 1, s])?)?;
    let logits = per_group.transpose(&[1, 0, 2])?.reshape(&[b, g * s])?;
    if g * s > params.num_labels {
        logits.narrow_lastdim(0, params.num_labels)
    } else {
        Ok(logits)
    }
}
