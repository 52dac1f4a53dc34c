//! Encoder plus decoder head as one trainable unit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{gap_decode, ml_decode, GapDecoderParams, MlDecoderConfig, MlDecoderParams};
use crate::encoder::{encode, FeatureMap, TinyEncoderConfig};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderSpec {
    Tiny(TinyEncoderConfig),
    /// Inputs are precomputed `(H, W, D)` feature maps.
    External { height: usize, width: usize, depth: usize },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Tiny(TinyEncoderConfig::default())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DecoderSpec {
    #[default]
    Gap,
    MlDecoder(MlDecoderConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
    pub num_labels: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.encoder {
            EncoderSpec::Tiny(cfg) => cfg.validate()?,
            EncoderSpec::External { height, width, depth } => {
                if *height == 0 || *width == 0 || *depth == 0 {
                    return Err(Error::InvalidSpec("external feature dims must be positive".into()));
                }
            }
        }
        if self.num_labels == 0 {
            return Err(Error::InvalidSpec("num_labels must be positive".into()));
        }
        if let DecoderSpec::MlDecoder(cfg) = &self.decoder {
            cfg.validate(self.num_labels)?;
        }
        Ok(())
    }

    /// `(H, W, C)` of one model input.
    pub fn input_dims(&self) -> (usize, usize, usize) {
        match &self.encoder {
            EncoderSpec::Tiny(cfg) => cfg.input_size,
            &EncoderSpec::External { height, width, depth } => (height, width, depth),
        }
    }

    /// `(H, W, D)` of the feature map handed to the decoder.
    pub fn feature_dims(&self) -> (usize, usize, usize) {
        match &self.encoder {
            EncoderSpec::Tiny(cfg) => cfg.output_dims(),
            &EncoderSpec::External { height, width, depth } => (height, width, depth),
        }
    }

    pub fn encoder_param_count(&self) -> usize {
        match &self.encoder {
            EncoderSpec::Tiny(cfg) => cfg.param_count(),
            EncoderSpec::External { .. } => 0,
        }
    }

    pub fn decoder_param_count(&self) -> usize {
        let (_, _, d) = self.feature_dims();
        match &self.decoder {
            DecoderSpec::Gap => GapDecoderParams::<f32>::param_count(d, self.num_labels),
            DecoderSpec::MlDecoder(cfg) => cfg.param_count(d, self.num_labels),
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder_param_count() + self.decoder_param_count()
    }

    /// Analytic multiply-adds per image.
    pub fn multiply_adds(&self) -> u64 {
        let (h, w, d) = self.feature_dims();
        let enc = match &self.encoder {
            EncoderSpec::Tiny(cfg) => cfg.multiply_adds(),
            EncoderSpec::External { .. } => 0,
        };
        let dec = match &self.decoder {
            DecoderSpec::Gap => GapDecoderParams::<f32>::multiply_adds(h, w, d, self.num_labels),
            DecoderSpec::MlDecoder(cfg) => cfg.multiply_adds(h, w, d, self.num_labels),
        };
        enc + dec
    }
}

#[derive(Clone, Debug)]
pub struct Model<T: Element> {
    spec: ModelSpec,
    params: ParamStore<T>,
}

impl<T: Element> Model<T> {
    /// Seeded initialization of every parameter.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        if let EncoderSpec::Tiny(cfg) = &spec.encoder {
            cfg.init_params(&mut params, &mut rng)?;
        }
        let (_, _, d) = spec.feature_dims();
        match &spec.decoder {
            DecoderSpec::Gap => GapDecoderParams::init(&mut params, d, spec.num_labels, &mut rng)?,
            DecoderSpec::MlDecoder(cfg) => MlDecoderParams::init(cfg, d, spec.num_labels, &mut rng)?.to_store(&mut params)?,
        }
        Ok(Model { spec, params })
    }

    /// Wraps existing parameters after checking that names and shapes are
    /// exactly those `spec` produces.
    pub fn from_parts(spec: ModelSpec, params: ParamStore<T>) -> Result<Self> {
        let reference = Model::<T>::init(spec.clone(), 0)?;
        let want: Vec<(&str, &[usize])> = reference.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let got: Vec<(&str, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if want != got {
            let detail = want
                .iter()
                .zip(got.iter().map(Some).chain(std::iter::repeat(None)))
                .find(|(w, g)| Some(*w) != *g)
                .map(|(w, g)| format!("expected {} {:?}, found {:?}", w.0, w.1, g))
                .unwrap_or_else(|| format!("{} extra parameters", got.len() - want.len()));
            return Err(Error::shape("model", detail));
        }
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn features(&self, inputs: &Tensor<T>) -> Result<FeatureMap<T>> {
        match &self.spec.encoder {
            EncoderSpec::Tiny(cfg) => encode(inputs, cfg, &self.params),
            EncoderSpec::External { .. } => {
                let (h, w, d) = self.spec.input_dims();
                match inputs.shape() {
                    &[_, ih, iw, id] if (ih, iw, id) == (h, w, d) => FeatureMap::new(inputs.clone()),
                    other => Err(Error::shape("model", format!("features {other:?} do not match {:?}", (h, w, d)))),
                }
            }
        }
    }

    /// `(B, K)` logits for a `(B, H, W, C)` input batch.
    pub fn forward(&self, inputs: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.features(inputs)?;
        match &self.spec.decoder {
            DecoderSpec::Gap => gap_decode(&f, &GapDecoderParams::from_store(&self.params)?),
            DecoderSpec::MlDecoder(cfg) => ml_decode(&f, &MlDecoderParams::from_store(&self.params, cfg, self.spec.num_labels)?),
        }
    }

    /// Copy whose forward pass records no graph.
    pub fn frozen(&self) -> Self {
        Model { spec: self.spec.clone(), params: self.params.frozen() }
    }

    pub fn cast<U: Element>(&self) -> Model<U> {
        Model { spec: self.spec.clone(), params: self.params.cast() }
    }
}
