//! Renders a synthetic dataset to disk (PNGs, manifest.csv, vocab.txt) and
//! loads it back through the manifest reader.
//!
//! cargo run --example synth_manifest -- [out_dir]

use dishnet::data::{generate_synthetic, load_manifest, write_manifest, SyntheticSpec};

fn main() -> dishnet::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("dishnet-synth"), Into::into);
    let spec = SyntheticSpec { num_train: 24, num_test: 8, ..Default::default() };
    let data = generate_synthetic(&spec)?;
    write_manifest(&data, &out)?;
    println!("labels: {}", data.vocab.to_text().replace('\n', " "));

    let back = load_manifest(out.join("manifest.csv"), out.join("vocab.txt"), Some((spec.canvas.0, spec.canvas.1)))?;
    println!("reloaded {} train / {} test images", back.train.len(), back.test.len());
    let first = &back.train[0];
    let names = data.vocab.decode(&first.target);
    println!("{} -> {}", first.source_id, names.join(";"));
    Ok(())
}
