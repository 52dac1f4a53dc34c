use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dishnet::decoder::{attention, gap_decode, ml_decode, GapDecoderParams, MlDecoderConfig, MlDecoderParams};
use dishnet::encoder::FeatureMap;
use dishnet::params::normal;
use dishnet::Tensor;

fn features(shape: [usize; 4], seed: u64) -> FeatureMap<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMap::new(Tensor::new(normal(&mut rng, shape.iter().product(), 1.0), &shape).unwrap()).unwrap()
}

/// Reorders the spatial positions of every batch item by `perm` (over H*W).
fn permute_spatial(f: &FeatureMap<f64>, perm: &[usize]) -> FeatureMap<f64> {
    let (b, h, w, d) = (f.batch(), f.height(), f.width(), f.depth());
    let src = f.values().data();
    let mut out = Vec::with_capacity(src.len());
    for i in 0..b {
        for &p in perm {
            let at = (i * h * w + p) * d;
            out.extend_from_slice(&src[at..at + d]);
        }
    }
    FeatureMap::new(Tensor::new(out, &[b, h, w, d]).unwrap()).unwrap()
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gap_ignores_spatial_order(perm in perm_strategy(6), seed in 0u64..1000) {
        let f = features([2, 2, 3, 4], seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let p = GapDecoderParams::new(
            Tensor::new(normal(&mut rng, 12, 1.0), &[3, 4]).unwrap(),
            Tensor::new(normal(&mut rng, 3, 1.0), &[3]).unwrap(),
        ).unwrap();
        let a = gap_decode(&f, &p).unwrap();
        let b = gap_decode(&permute_spatial(&f, &perm), &p).unwrap();
        prop_assert!(max_diff(a.data(), b.data()) < 1e-12);
    }

    #[test]
    fn ml_decoder_ignores_spatial_order(perm in perm_strategy(6), seed in 0u64..1000) {
        let cfg = MlDecoderConfig { groups: Some(2), model_dim: 8, ffn_dim: 8, heads: 2, ..Default::default() };
        let p = MlDecoderParams::<f64>::init(&cfg, 4, 5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let f = features([2, 3, 2, 4], seed + 7);
        let a = ml_decode(&f, &p).unwrap();
        let b = ml_decode(&permute_spatial(&f, &perm), &p).unwrap();
        prop_assert!(max_diff(a.data(), b.data()) < 1e-10);
    }

    #[test]
    fn attention_rows_are_a_simplex(g in 1usize..5, n in 1usize..7, d in 1usize..6, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = |rows: usize| Tensor::<f64>::new(normal(&mut rng, rows * d, 3.0), &[rows, d]).unwrap();
        let (q, k, v) = (t(g), t(n), t(n));
        let (_, weights) = attention(&q, &k, &v).unwrap();
        prop_assert_eq!(weights.shape(), &[g, n]);
        for row in weights.data().chunks(n) {
            prop_assert!(row.iter().all(|&a| (0.0..=1.0).contains(&a)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn parameter_count_is_linear_in_groups() {
    let count = |g: usize| MlDecoderConfig { groups: Some(g), ..Default::default() }.param_count(32, 64);
    // With G dividing K the read-out holds K*(d+1) weights for any G, so only
    // the G*d query weights move.
    let (c4, c8, c16) = (count(4), count(8), count(16));
    assert_eq!(c8 - c4, 4 * 32);
    assert_eq!(c16 - c8, 8 * 32);
}

#[test]
fn one_group_per_label_is_a_per_label_linear_head() {
    let k = 5;
    let cfg = MlDecoderConfig { groups: Some(k), model_dim: 6, ffn_dim: 8, ..Default::default() };
    let mut p = MlDecoderParams::<f64>::init(&cfg, 3, k, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    assert_eq!(p.group_size(), 1);
    assert_eq!(p.readout_weight.shape(), &[k, 6, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    p.readout_bias = Tensor::new(normal(&mut rng, k, 1.0), &[k, 1]).unwrap();
    let f = features([3, 2, 2, 3], 13);
    let logits = ml_decode(&f, &p).unwrap();

    // Same tokens, read out by a plain loop: logit_k = <token_k, w_k> + b_k.
    let mut zero = p.clone();
    zero.readout_weight = Tensor::new(vec![0.0; k * 6], &[k, 6, 1]).unwrap();
    zero.readout_bias = Tensor::new(vec![0.0; k], &[k, 1]).unwrap();
    let w = p.readout_weight.data();
    let bias = p.readout_bias.data();
    // Recover the final tokens one coordinate at a time with unit read-outs.
    let mut tokens = vec![0.0; 3 * k * 6];
    for j in 0..6 {
        let mut unit = zero.clone();
        let mut data = vec![0.0; k * 6];
        for g in 0..k {
            data[g * 6 + j] = 1.0;
        }
        unit.readout_weight = Tensor::new(data, &[k, 6, 1]).unwrap();
        let out = ml_decode(&f, &unit).unwrap();
        for b in 0..3 {
            for g in 0..k {
                tokens[(b * k + g) * 6 + j] = out.data()[b * k + g];
            }
        }
    }
    for b in 0..3 {
        for g in 0..k {
            let tok = &tokens[(b * k + g) * 6..(b * k + g + 1) * 6];
            let expect: f64 = tok.iter().zip(&w[g * 6..(g + 1) * 6]).map(|(t, w)| t * w).sum::<f64>() + bias[g];
            assert!((logits.data()[b * k + g] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn single_location_hand_trace() {
    // One spatial position, value projection = identity on a vector that is
    // already zero-mean with unit variance, zero FFN and unit norms: the block
    // passes the value vector through untouched.
    let cfg = MlDecoderConfig { groups: Some(2), model_dim: 2, ffn_dim: 3, layer_norm_eps: 0.0, ..Default::default() };
    let mut p = MlDecoderParams::<f64>::init(&cfg, 2, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let layer = &mut p.layers[0];
    layer.value_proj = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    layer.ffn_w1 = Tensor::new(vec![0.0; 6], &[2, 3]).unwrap();
    layer.ffn_b1 = Tensor::new(vec![0.0; 3], &[3]).unwrap();
    layer.ffn_w2 = Tensor::new(vec![0.0; 6], &[3, 2]).unwrap();
    layer.ffn_b2 = Tensor::new(vec![0.0; 2], &[2]).unwrap();
    p.readout_weight = Tensor::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], &[2, 2, 2]).unwrap();
    p.readout_bias = Tensor::new(vec![0.5, -0.5, 1.0, 0.0], &[2, 2]).unwrap();
    let f = FeatureMap::new(Tensor::new(vec![1.0, -1.0], &[1, 1, 1, 2]).unwrap()).unwrap();
    let logits = ml_decode(&f, &p).unwrap();
    // v = [1, -1]; group 0: [1-3, 2-4] + [0.5, -0.5]; group 1: [5-7] + 1, cut at K=3.
    assert_eq!(logits.shape(), &[1, 3]);
    let expect = [-1.5, -2.5, -1.0];
    assert!(max_diff(logits.data(), &expect) < 1e-12, "{:?}", logits.data());
}
