//! Writes one synthetic image and several augmented views of it as PNGs.
//!
//! cargo run --example augmentation -- [out_dir]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dishnet::data::{augment, generate_synthetic, save_png, AugmentConfig, SyntheticSpec};

fn main() -> dishnet::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("dishnet-augment"), Into::into);
    std::fs::create_dir_all(&out)?;
    let data = generate_synthetic(&SyntheticSpec { num_train: 1, num_test: 1, ..Default::default() })?;
    let image = &data.train[0].image;
    save_png(out.join("original.png"), image)?;

    let cfg = AugmentConfig { enabled: true, hflip: true, vflip: true, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..4 {
        let view = augment(image, &cfg, &mut rng);
        println!("view {i}: {:?}", view.shape());
        save_png(out.join(format!("view{i}.png")), &view)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
