use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dishnet::encoder::{encode, load_external_features, write_external_features, FeatureMap, Stage, TinyEncoderConfig};
use dishnet::params::{normal, ParamStore};
use dishnet::Tensor;

fn config_strategy() -> impl Strategy<Value = TinyEncoderConfig> {
    (prop::collection::vec((1usize..5, 1usize..=2), 1..4), prop::sample::select(vec![1usize, 3, 5]), 1usize..4, 1usize..4, 1usize..4)
        .prop_map(|(stages, kernel_size, hm, wm, c)| {
            let stages: Vec<Stage> = stages.into_iter().map(|(out_channels, stride)| Stage { out_channels, stride }).collect();
            let t: usize = stages.iter().map(|s| s.stride).product();
            TinyEncoderConfig { stages, kernel_size, input_size: (hm * t, wm * t, c) }
        })
}

fn init(cfg: &TinyEncoderConfig, seed: u64) -> ParamStore<f64> {
    let mut store = ParamStore::new();
    cfg.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    store
}

fn images(n: usize, (h, w, c): (usize, usize, usize), seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(normal(&mut rng, n * h * w * c, 1.0), &[n, h, w, c]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn output_dims_follow_strides(cfg in config_strategy(), seed in 0u64..1000) {
        let store = init(&cfg, seed);
        let f = encode(&images(2, cfg.input_size, seed), &cfg, &store).unwrap();
        let t = cfg.total_stride();
        let (h, w, d) = cfg.output_dims();
        prop_assert_eq!((h, w), (cfg.input_size.0 / t, cfg.input_size.1 / t));
        prop_assert_eq!(d, cfg.stages.last().unwrap().out_channels);
        prop_assert_eq!(f.values().shape(), &[2, h, w, d]);
        prop_assert_eq!(store.numel(), cfg.param_count());
    }

    #[test]
    fn batch_permutation_commutes(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(), seed in 0u64..1000) {
        let cfg = TinyEncoderConfig {
            stages: vec![Stage { out_channels: 3, stride: 2 }, Stage { out_channels: 4, stride: 1 }],
            kernel_size: 3,
            input_size: (6, 4, 2),
        };
        let store = init(&cfg, seed);
        let x = images(4, cfg.input_size, seed + 1);
        let per = x.numel() / 4;
        let shuffled: Vec<f64> = perm.iter().flat_map(|&i| x.data()[i * per..(i + 1) * per].to_vec()).collect();
        let a = encode(&x, &cfg, &store).unwrap();
        let b = encode(&Tensor::new(shuffled, x.shape()).unwrap(), &cfg, &store).unwrap();
        let expect = a.gather(&perm).unwrap();
        prop_assert_eq!(expect.values().data(), b.values().data());
    }
}

#[test]
fn indivisible_input_is_rejected() {
    let cfg = TinyEncoderConfig { input_size: (60, 64, 3), ..Default::default() };
    assert!(cfg.validate().is_err());
}

#[test]
fn fmap_roundtrip_is_lossless() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values: Vec<f32> = normal(&mut rng, 2 * 3 * 5 * 7, 10.0);
    let fm = FeatureMap::new(Tensor::new(values.clone(), &[2, 3, 5, 7]).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.fmap");
    write_external_features(&path, &fm).unwrap();
    let back = load_external_features(&path).unwrap();
    assert_eq!(back.values().shape(), &[2, 3, 5, 7]);
    assert!(back.values().data().iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 20 + 4 * values.len() as u64);
}
