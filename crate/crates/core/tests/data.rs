use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dishnet::data::{
    augment, batch_iter, generate_synthetic, load_manifest, resize_bilinear, write_manifest, AugmentConfig, Batch,
    BatchOptions, LabelVocabulary, SyntheticSpec,
};
use dishnet::Tensor;

fn vocab() -> LabelVocabulary {
    LabelVocabulary::new(["rice", "beef", "broccoli", "carrot", "egg", "tofu"]).unwrap()
}

proptest! {
    #[test]
    fn multi_hot_roundtrip(picks in prop::sample::subsequence(vec![0usize, 1, 2, 3, 4, 5], 0..=6), seed in any::<u64>()) {
        let v = vocab();
        let mut names: Vec<&str> = picks.iter().map(|&i| v.label(i).unwrap()).collect();
        use rand::seq::SliceRandom;
        names.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let hot = v.encode(&names).unwrap();
        prop_assert_eq!(hot.iter().filter(|&&h| h).count(), picks.len());
        let back = v.decode(&hot);
        let sorted: Vec<&str> = picks.iter().map(|&i| v.label(i).unwrap()).collect();
        prop_assert_eq!(back, sorted);
    }

    #[test]
    fn resize_stays_in_unit_range(h in 1usize..12, w in 1usize..12, oh in 1usize..20, ow in 1usize..20, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..h * w * 3).map(|_| rng.random::<f32>()).collect();
        let out = resize_bilinear(&Tensor::new(data, &[h, w, 3]).unwrap(), (oh, ow)).unwrap();
        prop_assert_eq!(out.shape(), &[oh, ow, 3]);
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn augmentation_keeps_shape_for_many_seeds() {
    let data = generate_synthetic(&SyntheticSpec { num_train: 2, num_test: 1, ..Default::default() }).unwrap();
    let cfg = AugmentConfig { enabled: true, hflip: true, vflip: true, ..Default::default() };
    for seed in 0..100 {
        let img = &data.train[(seed % 2) as usize].image;
        let out = augment(img, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(out.shape(), img.shape());
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn augmented_batches_keep_targets() {
    let data = generate_synthetic(&SyntheticSpec { num_train: 20, num_test: 1, ..Default::default() }).unwrap();
    let augment = Some(AugmentConfig { enabled: true, hflip: true, vflip: true, ..Default::default() });
    let opts = BatchOptions { batch_size: 6, seed: 3, epoch: 2, shuffle: true, augment };
    for batch in batch_iter::<f32>(&data.train, opts).unwrap() {
        let batch = batch.unwrap();
        let k = data.vocab.len();
        for (row, &i) in batch.indices.iter().enumerate() {
            let expect: Vec<f32> = data.train[i].target.iter().map(|&t| f32::from(u8::from(t))).collect();
            assert_eq!(&batch.targets.data()[row * k..(row + 1) * k], expect.as_slice());
        }
    }
}

#[test]
fn batch_order_does_not_depend_on_thread_count() {
    let data = generate_synthetic(&SyntheticSpec { num_train: 30, num_test: 1, ..Default::default() }).unwrap();
    let augment = Some(AugmentConfig { enabled: true, hflip: true, ..Default::default() });
    let opts = BatchOptions { batch_size: 8, seed: 9, epoch: 1, shuffle: true, augment };
    let collect = |threads: usize| -> Vec<Batch<f32>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| batch_iter(&data.train, opts).unwrap().map(Result::unwrap).collect())
    };
    let (one, four) = (collect(1), collect(4));
    assert_eq!(one.len(), 4);
    for (a, b) in one.iter().zip(&four) {
        assert_eq!(a.indices, b.indices);
        assert_eq!(a.images.data(), b.images.data());
        assert_eq!(a.targets.data(), b.targets.data());
    }
}

#[test]
fn manifest_roundtrip_preserves_images_and_targets() {
    let spec = SyntheticSpec { num_train: 6, num_test: 3, ..Default::default() };
    let data = generate_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_manifest(&data, dir.path()).unwrap();
    let back = load_manifest(dir.path().join("manifest.csv"), dir.path().join("vocab.txt"), None).unwrap();
    assert_eq!(back.vocab.labels(), data.vocab.labels());
    for (a, b) in data.train.iter().chain(&data.test).zip(back.train.iter().chain(&back.test)) {
        assert_eq!(a.target, b.target);
        // PNG stores 8-bit values; synthetic pixels are already on that grid.
        let worst = a.image.data().iter().zip(b.image.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(worst <= 0.5 / 255.0, "{worst}");
    }
}

#[test]
fn manifest_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("vocab.txt"), "rice\nbeef\n").unwrap();
    let write = |body: &str| {
        std::fs::write(dir.path().join("manifest.csv"), format!("path,split,labels\n{body}")).unwrap();
        load_manifest(dir.path().join("manifest.csv"), dir.path().join("vocab.txt"), None)
    };
    assert!(write("missing.png,train,\"rice\"\n").is_err());
    let spec = SyntheticSpec { num_train: 1, num_test: 1, ..Default::default() };
    let img = &generate_synthetic(&spec).unwrap().train[0].image;
    dishnet::data::save_png(dir.path().join("a.png"), img).unwrap();
    assert!(write("a.png,train,\"soup\"\n").is_err());
    assert!(write("a.png,valid,\"rice\"\n").is_err());
    assert!(write("a.png,train,\"rice\"\na.png,test,\"beef\"\n").is_err());
    assert!(write("a.png,train,\"rice;beef\"\n").is_ok());
}
