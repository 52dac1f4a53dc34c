//! Drives the command-line front end in-process: renders a small dataset,
//! trains on it, then lists per-label confidences for one image.

use dishnet::cli::run;

fn main() {
    let dir = std::env::temp_dir().join("dishnet-predict");
    std::fs::create_dir_all(&dir).unwrap();
    let spec = dir.join("synth.toml");
    std::fs::write(&spec, "canvas = [64, 64]\nnum_labels = 8\nobjects_per_image = [1, 4]\nnum_train = 128\nnum_test = 32\nseed = 5\n").unwrap();
    let data = dir.join("data");
    let config = dir.join("train.toml");
    std::fs::write(
        &config,
        format!(
            "epochs = 10\noutput = {:?}\n\n[schedule]\nwarmup_iters = 10\n\n[data]\nsource = \"manifest\"\nmanifest = {:?}\nvocab = {:?}\n",
            dir.join("run"),
            data.join("manifest.csv"),
            data.join("vocab.txt")
        ),
    )
    .unwrap();

    let steps: [&[&str]; 2] = [
        &["synth", "--spec", spec.to_str().unwrap(), "--out", data.to_str().unwrap()],
        &["train", "--config", config.to_str().unwrap()],
    ];
    for args in steps {
        let code = run(std::iter::once("dishnet").chain(args.iter().copied()));
        assert_eq!(code, 0, "{args:?} failed");
    }
    let first = std::fs::read_to_string(data.join("manifest.csv")).unwrap();
    let row = first.lines().nth(1).expect("manifest has rows");
    let mut cols = row.split(',');
    let (image, truth) = (cols.next().unwrap(), cols.nth(1).unwrap_or(""));
    let code = run([
        "dishnet",
        "predict",
        "--checkpoint",
        dir.join("run/final.ckpt").to_str().unwrap(),
        "--image",
        data.join(image).to_str().unwrap(),
        "--truth",
        truth,
    ]);
    std::process::exit(code);
}
