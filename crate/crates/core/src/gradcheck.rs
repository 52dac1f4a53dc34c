//! Finite-difference verification of every differentiable path: each op of
//! the catalog, the loss, both decoder heads and the tiny encoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{gap_decode, ml_decode, GapDecoderParams, MlDecoderConfig, MlDecoderParams};
use crate::encoder::{encode, FeatureMap, Stage, TinyEncoderConfig};
use crate::error::{Error, Result};
use crate::loss::{batch_loss, AsymmetricLossConfig};
use crate::params::{normal, ParamStore};
use crate::tensor::{finite_difference_check, forward, inject_backward_fault, kink_margin, track_kinks, Attrs, OpKind, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub seeds: usize,
    pub first_seed: u64,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Name of an op whose backward rule is deliberately corrupted, to show
    /// that the check catches it.
    pub inject_fault: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig { seeds: 20, first_seed: 0, epsilon: 1e-5, tolerance: 1e-4, inject_fault: None }
    }
}

impl GradcheckConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let cfg: GradcheckConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
        cfg.fault()?;
        Ok(cfg)
    }

    fn fault(&self) -> Result<Option<OpKind>> {
        self.inject_fault.as_deref().map(str::parse).transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub name: String,
    pub max_error: f64,
    pub worst_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub seeds: usize,
    pub probes: Vec<ProbeResult>,
}

impl GradcheckReport {
    pub fn failures(&self) -> Vec<&ProbeResult> {
        self.probes.iter().filter(|p| p.max_error.is_nan() || p.max_error >= self.tolerance).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn max_error(&self) -> f64 {
        self.probes.iter().map(|p| p.max_error).fold(0.0, f64::max)
    }
}

type Probe = fn(&mut ChaCha8Rng, f64) -> Result<f64>;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Result<Tensor<f64>> {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(lo..hi)).collect(), shape)
}

/// Values bounded away from zero, for ops with a kink there.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Result<Tensor<f64>> {
    let n = shape.iter().product();
    Tensor::new(
        (0..n)
            .map(|_| {
                let m = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) { m } else { -m }
            })
            .collect(),
        shape,
    )
}

/// Smallest distance of any relu input to zero allowed at a probe point.
const MIN_KINK_MARGIN: f64 = 1e-3;

/// Redraws with `draw` until evaluating the drawn case keeps every relu input
/// at least [`MIN_KINK_MARGIN`] from zero, so that no central difference
/// straddles a kink.
fn away_from_kinks<C>(rng: &mut ChaCha8Rng, mut draw: impl FnMut(&mut ChaCha8Rng) -> Result<C>, eval: impl Fn(&C) -> Result<Tensor<f64>>) -> Result<C> {
    for _ in 0..1000 {
        let case = draw(rng)?;
        track_kinks(true);
        let result = eval(&case);
        let margin = kink_margin();
        track_kinks(false);
        result?;
        if margin >= MIN_KINK_MARGIN {
            return Ok(case);
        }
    }
    Err(Error::InvalidSpec("could not draw a probe point away from relu kinks".into()))
}

/// `sum(y * r)` with fixed random `r`, so no output coordinate cancels out.
fn weighted_sum(y: &Tensor<f64>, r: &Tensor<f64>) -> Result<Tensor<f64>> {
    y.mul(r)?.sum_all()
}

/// Checks `op` against each input in turn, holding the others fixed.
fn check_op(op: OpKind, inputs: Vec<Tensor<f64>>, attrs: Attrs, rng: &mut ChaCha8Rng, eps: f64) -> Result<f64> {
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let out_shape = forward(op, &refs, &attrs)?.shape().to_vec();
    let r = uniform(rng, &out_shape, -1.0, 1.0)?;
    let mut worst = 0.0f64;
    for i in 0..inputs.len() {
        let f = |x: &Tensor<f64>| {
            let mut args: Vec<&Tensor<f64>> = inputs.iter().collect();
            args[i] = x;
            weighted_sum(&forward(op, &args, &attrs)?, &r)
        };
        worst = worst.max(finite_difference_check(f, &inputs[i], eps)?);
    }
    Ok(worst)
}

fn op_probe(op: OpKind, rng: &mut ChaCha8Rng, eps: f64) -> Result<f64> {
    let u = |rng: &mut ChaCha8Rng, s: &[usize]| uniform(rng, s, -1.0, 1.0);
    let (inputs, attrs) = match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul => (vec![u(rng, &[2, 3])?, u(rng, &[3])?], Attrs::None),
        OpKind::ScalarMul => (vec![u(rng, &[2, 3])?], Attrs::Scalar(-1.7)),
        OpKind::Matmul => (vec![u(rng, &[2, 2, 3])?, u(rng, &[3, 4])?], Attrs::None),
        OpKind::Conv2d => (vec![u(rng, &[2, 5, 5, 2])?, u(rng, &[3, 3, 2, 3])?], Attrs::Conv { stride: 2, padding: 1 }),
        OpKind::Relu => (vec![off_zero(rng, &[2, 5])?], Attrs::None),
        OpKind::Sigmoid | OpKind::LogSigmoid | OpKind::Exp => (vec![uniform(rng, &[2, 5], -3.0, 3.0)?], Attrs::None),
        OpKind::SoftmaxLastdim => (vec![uniform(rng, &[3, 4], -2.0, 2.0)?], Attrs::None),
        OpKind::Log => (vec![uniform(rng, &[2, 5], 0.5, 2.0)?], Attrs::None),
        OpKind::Power => (vec![uniform(rng, &[2, 5], 0.5, 2.0)?], Attrs::Scalar(2.5)),
        OpKind::MeanAxes | OpKind::SumAxes => (vec![u(rng, &[2, 3, 4])?], Attrs::Axes(vec![0, 2])),
        OpKind::Reshape => (vec![u(rng, &[2, 6])?], Attrs::Shape(vec![3, 4])),
        OpKind::Transpose => (vec![u(rng, &[2, 3, 4])?], Attrs::Axes(vec![2, 0, 1])),
        OpKind::LayerNormLastdim => (vec![u(rng, &[3, 5])?], Attrs::Scalar(1e-5)),
        OpKind::Pad2d => (vec![u(rng, &[1, 3, 2, 2])?], Attrs::Pad { top: 1, bottom: 0, left: 2, right: 1 }),
        OpKind::MaxPool2d => (vec![u(rng, &[1, 4, 4, 2])?], Attrs::Pool { kernel: 2, stride: 2 }),
        OpKind::NarrowLastdim => (vec![u(rng, &[2, 5])?], Attrs::Narrow { start: 1, len: 3 }),
    };
    check_op(op, inputs, attrs, rng, eps)
}

fn random_targets(rng: &mut ChaCha8Rng, shape: &[usize]) -> Result<Tensor<f64>> {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect(), shape)
}

fn loss_probe(rng: &mut ChaCha8Rng, eps: f64) -> Result<f64> {
    let z = uniform(rng, &[2, 3], -2.0, 2.0)?;
    let y = random_targets(rng, &[2, 3])?;
    let g_minus = rng.random_range(0.0..6.0);
    let g_plus = rng.random_range(0.0..2.0);
    let mut worst = 0.0f64;
    for cfg in [
        AsymmetricLossConfig::default(),
        AsymmetricLossConfig::bce(),
        AsymmetricLossConfig { gamma_plus: g_plus, gamma_minus: g_minus, ..Default::default() },
    ] {
        worst = worst.max(finite_difference_check(|x| batch_loss(x, &y, &cfg), &z, eps)?);
    }
    Ok(worst)
}

/// Saturated logits, one label at a time so the probe resolves gradients
/// far below the magnitude of a summed loss.
fn loss_extreme_probe(rng: &mut ChaCha8Rng, eps: f64) -> Result<f64> {
    let cfg = AsymmetricLossConfig::default();
    let mut worst = 0.0f64;
    for z in [-20.0, 20.0] {
        for y in [0.0, 1.0] {
            let z = Tensor::new(vec![z + rng.random_range(-0.5..0.5)], &[1, 1])?;
            let y = Tensor::new(vec![y], &[1, 1])?;
            worst = worst.max(finite_difference_check(|x| batch_loss(x, &y, &cfg), &z, eps)?);
        }
    }
    Ok(worst)
}

fn gap_probe(rng: &mut ChaCha8Rng, eps: f64) -> Result<f64> {
    let (d, k) = (4, 3);
    let f = uniform(rng, &[2, 2, 3, d], -1.0, 1.0)?;
    let w = uniform(rng, &[k, d], -1.0, 1.0)?;
    let b = uniform(rng, &[k], -1.0, 1.0)?;
    let r = uniform(rng, &[2, k], -1.0, 1.0)?;
    let run = |f: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
        weighted_sum(&gap_decode(&FeatureMap::new(f.clone())?, &GapDecoderParams::new(w.clone(), b.clone())?)?, &r)
    };
    let mut worst = finite_difference_check(|x| run(x, &w, &b), &f, eps)?;
    worst = worst.max(finite_difference_check(|x| run(&f, x, &b), &w, eps)?);
    worst = worst.max(finite_difference_check(|x| run(&f, &w, x), &b, eps)?);
    Ok(worst)
}

fn ml_tensor_mut(p: &mut MlDecoderParams<f64>, i: usize) -> &mut Tensor<f64> {
    let per_layer = 10;
    let n_layers = p.layers.len();
    match i {
        0 => &mut p.queries,
        i if i <= n_layers * per_layer => {
            let l = &mut p.layers[(i - 1) / per_layer];
            match (i - 1) % per_layer {
                0 => &mut l.key_proj,
                1 => &mut l.value_proj,
                2 => &mut l.ffn_w1,
                3 => &mut l.ffn_b1,
                4 => &mut l.ffn_w2,
                5 => &mut l.ffn_b2,
                6 => &mut l.norm1_scale,
                7 => &mut l.norm1_shift,
                8 => &mut l.norm2_scale,
                _ => &mut l.norm2_shift,
            }
        }
        i if i == n_layers * per_layer + 1 => &mut p.readout_weight,
        _ => &mut p.readout_bias,
    }
}

/// Every decoder tensor gets random values (not just its initializer), so
/// norm scales, shifts and biases are exercised away from 1 and 0.
fn ml_probe(rng: &mut ChaCha8Rng, eps: f64) -> Result<f64> {
    let (d, k) = (4, 3);
    let cfg = MlDecoderConfig { groups: Some(2), model_dim: 4, ffn_dim: 6, layers: 2, heads: 2, ..Default::default() };
    let count = 1 + 10 * cfg.layers + 2;
    let draw = |rng: &mut ChaCha8Rng| -> Result<_> {
        let mut params = MlDecoderParams::<f64>::init(&cfg, d, k, rng)?;
        for i in 0..count {
            let t = ml_tensor_mut(&mut params, i);
            let shape = t.shape().to_vec();
            *t = Tensor::new(normal(rng, t.numel(), 0.7), &shape)?;
        }
        let features = FeatureMap::new(uniform(rng, &[2, 2, 2, d], -1.0, 1.0)?)?;
        Ok((params, features))
    };
    let (mut params, features) = away_from_kinks(rng, draw, |(p, f)| ml_decode(f, p))?;
    let r = uniform(rng, &[2, k], -1.0, 1.0)?;
    let mut worst = finite_difference_check(
        |x| weighted_sum(&ml_decode(&FeatureMap::new(x.clone())?, &params)?, &r),
        features.values(),
        eps,
    )?;
    for i in 0..count {
        let point = ml_tensor_mut(&mut params, i).clone();
        let run = |x: &Tensor<f64>| {
            let mut p = params.clone();
            *ml_tensor_mut(&mut p, i) = x.clone();
            weighted_sum(&ml_decode(&features, &p)?, &r)
        };
        worst = worst.max(finite_difference_check(run, &point, eps)?);
    }
    Ok(worst)
}

fn encoder_probe(rng: &mut ChaCha8Rng, eps: f64) -> Result<f64> {
    let cfg = TinyEncoderConfig {
        stages: vec![Stage { out_channels: 3, stride: 2 }, Stage { out_channels: 4, stride: 1 }],
        kernel_size: 3,
        input_size: (6, 6, 2),
    };
    let draw = |rng: &mut ChaCha8Rng| -> Result<_> {
        let mut store = ParamStore::<f64>::new();
        cfg.init_params(&mut store, rng)?;
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for n in &names {
            let fresh = normal(rng, store.get(n)?.numel(), 0.5);
            store.set(n, fresh)?;
        }
        Ok((store.frozen(), uniform(rng, &[2, 6, 6, 2], 0.0, 1.0)?))
    };
    let (store, images) = away_from_kinks(rng, draw, |(s, x)| Ok(encode(x, &cfg, s)?.into_values()))?;
    let (h, w, dd) = cfg.output_dims();
    let r = uniform(rng, &[2, h, w, dd], -1.0, 1.0)?;
    let mut worst = finite_difference_check(|x| weighted_sum(encode(x, &cfg, &store)?.values(), &r), &images, eps)?;
    for n in store.names() {
        let run = |x: &Tensor<f64>| {
            let mut s = store.clone();
            s.replace(n, x.clone())?;
            weighted_sum(encode(&images, &cfg, &s)?.values(), &r)
        };
        worst = worst.max(finite_difference_check(run, store.get(n)?, eps)?);
    }
    Ok(worst)
}

type BoxedProbe = Box<dyn Fn(&mut ChaCha8Rng, f64) -> Result<f64>>;

fn probes() -> Vec<(String, BoxedProbe)> {
    let mut out: Vec<(String, BoxedProbe)> = OpKind::ALL
        .into_iter()
        .map(|op| (format!("op:{}", op.name()), Box::new(move |rng: &mut ChaCha8Rng, eps| op_probe(op, rng, eps)) as _))
        .collect();
    let named: [(&str, Probe); 5] = [
        ("loss", loss_probe),
        ("loss:saturated", loss_extreme_probe),
        ("decoder:gap", gap_probe),
        ("decoder:ml", ml_probe),
        ("encoder:tiny", encoder_probe),
    ];
    out.extend(named.into_iter().map(|(n, p)| (n.to_string(), Box::new(p) as _)));
    out
}

struct FaultGuard;

impl Drop for FaultGuard {
    fn drop(&mut self) {
        inject_backward_fault(None);
    }
}

/// Runs every probe for `cfg.seeds` seeds and reports the worst relative
/// error per probe. A probe that errors out counts as an infinite error.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.seeds == 0 || cfg.epsilon.is_nan() || cfg.epsilon <= 0.0 {
        return Err(Error::InvalidSpec("gradcheck needs seeds >= 1 and epsilon > 0".into()));
    }
    let fault = cfg.fault()?;
    let _guard = FaultGuard;
    inject_backward_fault(fault);
    let mut results = Vec::new();
    for (name, probe) in probes() {
        let mut worst = ProbeResult { name, max_error: 0.0, worst_seed: cfg.first_seed };
        for seed in cfg.first_seed..cfg.first_seed + cfg.seeds as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let err = probe(&mut rng, cfg.epsilon).unwrap_or(f64::INFINITY);
            if err > worst.max_error || err.is_nan() {
                worst.max_error = if err.is_nan() { f64::INFINITY } else { err };
                worst.worst_seed = seed;
            }
        }
        results.push(worst);
    }
    Ok(GradcheckReport { tolerance: cfg.tolerance, seeds: cfg.seeds, probes: results })
}
