//! Image encoders producing the spatial latent map `F` of shape `(B, H, W, D)`.
//!
//! Two sources are supported: a small trainable convolutional stack
//! ([`encode`]) and precomputed features read from `FMAP` files
//! ([`load_external_features`]), so large pretrained backbones can feed the
//! decoders without living in this crate.

mod fmap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{he_normal, ParamStore};
use crate::tensor::{Element, Tensor};

pub use fmap::{load_external_features, read_external_features, write_external_features};

/// Batch of spatial feature maps, `(batch, H, W, D)`.
#[derive(Clone, Debug)]
pub struct FeatureMap<T: Element> {
    values: Tensor<T>,
}

impl<T: Element> FeatureMap<T> {
    pub fn new(values: Tensor<T>) -> Result<Self> {
        if values.rank() != 4 {
            return Err(Error::shape("feature_map", format!("expected (B,H,W,D), got {:?}", values.shape())));
        }
        Ok(FeatureMap { values })
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    pub fn into_values(self) -> Tensor<T> {
        self.values
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn depth(&self) -> usize {
        self.values.shape()[3]
    }

    /// Rows `start..start+len` of the batch, detached.
    pub fn slice_batch(&self, start: usize, len: usize) -> Result<FeatureMap<T>> {
        let per = self.height() * self.width() * self.depth();
        if len == 0 || start + len > self.batch() {
            return Err(Error::shape("feature_map", format!("batch range {start}..{} out of {}", start + len, self.batch())));
        }
        let data = self.values.data()[start * per..(start + len) * per].to_vec();
        FeatureMap::new(Tensor::new(data, &[len, self.height(), self.width(), self.depth()])?)
    }

    /// Stacks the selected batch rows, detached.
    pub fn gather(&self, rows: &[usize]) -> Result<FeatureMap<T>> {
        let per = self.height() * self.width() * self.depth();
        let mut data = Vec::with_capacity(rows.len() * per);
        for &r in rows {
            if r >= self.batch() {
                return Err(Error::shape("feature_map", format!("row {r} out of {}", self.batch())));
            }
            data.extend_from_slice(&self.values.data()[r * per..(r + 1) * per]);
        }
        FeatureMap::new(Tensor::new(data, &[rows.len(), self.height(), self.width(), self.depth()])?)
    }
}

/// One convolution stage: output channels and stride (1 or 2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub out_channels: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyEncoderConfig {
    pub stages: Vec<Stage>,
    pub kernel_size: usize,
    /// `(height, width, channels)` of the input images.
    pub input_size: (usize, usize, usize),
}

impl Default for TinyEncoderConfig {
    fn default() -> Self {
        TinyEncoderConfig {
            stages: vec![
                Stage { out_channels: 8, stride: 2 },
                Stage { out_channels: 16, stride: 2 },
                Stage { out_channels: 32, stride: 2 },
            ],
            kernel_size: 3,
            input_size: (64, 64, 3),
        }
    }
}

impl TinyEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input_size;
        if self.stages.is_empty() || h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidSpec("encoder needs at least one stage and a non-empty input".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!("kernel_size {} must be odd", self.kernel_size)));
        }
        if self.stages.iter().any(|s| s.out_channels == 0 || !(1..=2).contains(&s.stride)) {
            return Err(Error::InvalidSpec("stage strides must be 1 or 2 and channels positive".into()));
        }
        let total = self.total_stride();
        if h % total != 0 || w % total != 0 {
            return Err(Error::IndivisibleSpatialDims {
                strides: self.stages.iter().map(|s| s.stride).collect(),
                height: h,
                width: w,
            });
        }
        Ok(())
    }

    pub fn total_stride(&self) -> usize {
        self.stages.iter().map(|s| s.stride).product()
    }

    /// `(H, W, D)` of the produced feature map.
    pub fn output_dims(&self) -> (usize, usize, usize) {
        let t = self.total_stride();
        let d = self.stages.last().map_or(0, |s| s.out_channels);
        (self.input_size.0 / t, self.input_size.1 / t, d)
    }

    fn stage_shapes(&self) -> impl Iterator<Item = (usize, [usize; 4])> + '_ {
        let k = self.kernel_size;
        let mut cin = self.input_size.2;
        self.stages.iter().enumerate().map(move |(i, s)| {
            let shape = [k, k, cin, s.out_channels];
            cin = s.out_channels;
            (i, shape)
        })
    }

    /// Adds He-initialized weights and zero biases under `encoder.stage{i}.*`.
    pub fn init_params<T: Element>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        for (i, shape) in self.stage_shapes() {
            let n = shape.iter().product();
            let fan_in = shape[0] * shape[1] * shape[2];
            store.insert(format!("encoder.stage{i}.weight"), he_normal(rng, n, fan_in), &shape)?;
            store.insert(format!("encoder.stage{i}.bias"), vec![T::zero(); shape[3]], &[shape[3]])?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.stage_shapes().map(|(_, s)| s.iter().product::<usize>() + s[3]).sum()
    }

    /// Multiply-adds for one image.
    pub fn multiply_adds(&self) -> u64 {
        let (mut h, mut w) = (self.input_size.0, self.input_size.1);
        let mut total = 0u64;
        for (i, s) in self.stage_shapes() {
            h /= self.stages[i].stride;
            w /= self.stages[i].stride;
            total += (h * w * s.iter().product::<usize>()) as u64;
        }
        total
    }
}

/// Runs the convolutional stack: every stage is conv2d (same padding) -> bias -> relu.
pub fn encode<T: Element>(images: &Tensor<T>, config: &TinyEncoderConfig, params: &ParamStore<T>) -> Result<FeatureMap<T>> {
    config.validate()?;
    let (h, w, c) = config.input_size;
    match images.shape() {
        &[_, ih, iw, ic] if (ih, iw, ic) == (h, w, c) => {}
        other => {
            return Err(Error::shape("encode", format!("images {other:?} do not match input size {:?}", config.input_size)));
        }
    }
    let pad = config.kernel_size / 2;
    let mut x = images.clone();
    for (i, shape) in config.stage_shapes() {
        let weight = params.get(&format!("encoder.stage{i}.weight"))?;
        let bias = params.get(&format!("encoder.stage{i}.bias"))?;
        if weight.shape() != shape || bias.shape() != [shape[3]] {
            return Err(Error::shape(
                "encode",
                format!("stage {i} expects weight {shape:?}, found {:?} / bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        x = x.conv2d(weight, config.stages[i].stride, pad)?.add(bias)?.relu()?;
    }
    FeatureMap::new(x)
}
