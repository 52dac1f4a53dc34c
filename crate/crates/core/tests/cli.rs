use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dishnet::checkpoint::{Checkpoint, CheckpointMeta};
use dishnet::model::{DecoderSpec, EncoderSpec, Model, ModelSpec};
use dishnet::params::ParamStore;

fn dishnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dishnet")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SYNTH: &str = "canvas = [16, 16]\nnum_labels = 4\nobjects_per_image = [1, 2]\nnum_train = 12\nnum_test = 6\nseed = 1\n";

fn encoder_toml() -> &'static str {
    "[encoder]\nkind = \"tiny\"\nkernel_size = 3\ninput_size = [16, 16, 3]\nstages = [{ out_channels = 4, stride = 2 }]\n"
}

/// A training config over a tiny synthetic set; `extra` is spliced in at the top level.
fn train_config(dir: &Path, extra: &str, decoder: &str) -> PathBuf {
    let path = dir.join("train.toml");
    let text = format!(
        "output = {:?}\nbatch_size = 4\n{extra}\n[schedule]\nwarmup_iters = 2\n\n{}\n{decoder}\n[data]\nsource = \"synthetic\"\n{SYNTH}",
        dir.join("run"),
        encoder_toml()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn zero_epochs_writes_initial_checkpoint_and_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_config(dir.path(), "epochs = 0", "");
    let out = dishnet(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    assert!(run.join("final.ckpt").exists() && run.join("best.ckpt").exists());
    assert_eq!(std::fs::read_to_string(run.join("train_log.jsonl")).unwrap(), "");
    let ckpt = Checkpoint::<f32>::load(run.join("final.ckpt")).unwrap();
    assert_eq!(ckpt.meta.epoch, 0);
    let fresh = Model::<f32>::init(ckpt.meta.model.clone(), 0).unwrap();
    for ((_, a), (_, b)) in ckpt.model.params().iter().zip(fresh.params().iter()) {
        assert_eq!(a.data(), b.data());
    }
}

#[test]
fn training_descends_and_logs_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_config(dir.path(), "epochs = 4", "");
    assert_eq!(code(&dishnet(&["train", "--config", cfg.to_str().unwrap()])), 0);
    let log = std::fs::read_to_string(dir.path().join("run/train_log.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 4);
    let loss = |r: &serde_json::Value| r["train_loss"].as_f64().unwrap();
    assert!(loss(&rows[3]) < loss(&rows[0]));
    assert!(rows.iter().all(|r| r["test_map"].as_f64().is_some_and(|m| (0.0..=1.0).contains(&m))));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let too_many_groups = "[decoder]\nkind = \"mldecoder\"\ngroups = 5\n";
    let cfg = train_config(dir.path(), "epochs = 1", too_many_groups);
    let out = dishnet(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("group"), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = train_config(dir.path(), "epochs = 1\ncolour = \"red\"", "");
    assert_eq!(code(&dishnet(&["train", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&dishnet(&["train", "--config", dir.path().join("nope.toml").to_str().unwrap()])), 2);
    assert_eq!(code(&dishnet(&["frobnicate"])), 2);
}

#[test]
fn missing_images_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("vocab.txt"), "a\nb\n").unwrap();
    std::fs::write(dir.path().join("manifest.csv"), "path,split,labels\ngone.png,train,\"a\"\n").unwrap();
    let cfg = dir.path().join("train.toml");
    std::fs::write(
        &cfg,
        format!(
            "output = {:?}\n{}\n[data]\nsource = \"manifest\"\nmanifest = \"manifest.csv\"\nvocab = \"vocab.txt\"\n",
            dir.path().join("run"),
            encoder_toml()
        ),
    )
    .unwrap();
    assert_eq!(code(&dishnet(&["train", "--config", cfg.to_str().unwrap()])), 3);
}

/// Checkpoint whose every weight is zero, so every logit is zero.
fn zero_checkpoint(dir: &Path) -> PathBuf {
    let spec = ModelSpec {
        encoder: EncoderSpec::External { height: 2, width: 2, depth: 3 },
        decoder: DecoderSpec::Gap,
        num_labels: 3,
    };
    let init = Model::<f32>::init(spec.clone(), 0).unwrap();
    let mut params = ParamStore::new();
    for (name, t) in init.params().iter() {
        params.insert(name, vec![0.0; t.numel()], t.shape()).unwrap();
    }
    let ckpt = Checkpoint {
        meta: CheckpointMeta { model: spec, labels: vec!["a".into(), "b".into(), "c".into()], epoch: 0, config: serde_json::Value::Null },
        model: Model::from_parts(init.spec().clone(), params).unwrap(),
    };
    let path = dir.join("zero.ckpt");
    ckpt.save(&path).unwrap();
    let fmap = dir.join("x.fmap");
    let values = dishnet::Tensor::new(vec![0.7f32; 12], &[1, 2, 2, 3]).unwrap();
    dishnet::encoder::write_external_features(&fmap, &dishnet::encoder::FeatureMap::new(values).unwrap()).unwrap();
    path
}

#[test]
fn predict_lists_sigmoid_confidences() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = zero_checkpoint(dir.path());
    let image = dir.path().join("x.fmap");
    let args = |t: &'static str| -> Vec<String> {
        ["predict", "--checkpoint", ckpt.to_str().unwrap(), "--image", image.to_str().unwrap(), "--threshold", t, "--truth", "b"]
            .map(String::from)
            .to_vec()
    };
    let run = |t| {
        let a = args(t);
        let out = dishnet(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    let listing = run("0.5");
    let lines: Vec<&str> = listing.lines().collect();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        assert!(l.contains("0.500000"), "{l}");
        assert!(l.contains("detected"));
    }
    assert!(listing.lines().any(|l| l.starts_with("b ") && l.ends_with("TP")));
    assert_eq!(listing.matches("FP").count(), 2);
    assert!(!run("1.01").contains("detected"));
}

#[test]
fn checkpoint_and_image_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = zero_checkpoint(dir.path());
    std::fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    let junk = dir.path().join("junk.ckpt");
    let image = dir.path().join("x.fmap");
    let out = dishnet(&["predict", "--checkpoint", junk.to_str().unwrap(), "--image", image.to_str().unwrap()]);
    assert_eq!(code(&out), 5);
    let missing = dir.path().join("missing.fmap");
    let out = dishnet(&["predict", "--checkpoint", ckpt.to_str().unwrap(), "--image", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn synth_then_eval_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("synth.toml");
    std::fs::write(&spec, SYNTH).unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&dishnet(&["synth", "--spec", spec.to_str().unwrap(), "--out", data.to_str().unwrap()])), 0);
    assert!(data.join("manifest.csv").exists());

    let cfg = train_config(dir.path(), "epochs = 2", "");
    assert_eq!(code(&dishnet(&["train", "--config", cfg.to_str().unwrap()])), 0);
    let report = dir.path().join("report.json");
    let ckpt = dir.path().join("run/final.ckpt");
    let out = dishnet(&[
        "eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", data.join("manifest.csv").to_str().unwrap(),
        "--out", report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["map", "per_label_ap", "flops", "params", "config", "created_at"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["per_label_ap"].as_array().unwrap().len(), 4);
    // 16x16x3 -> 8x8x4 conv (3*3*3*4 weights per position) + GAP head.
    assert_eq!(r["flops"].as_u64().unwrap(), 8 * 8 * 108 + (8 * 8 * 4 + 4 * 4));
    assert_eq!(r["params"].as_u64().unwrap(), 108 + 4 + 4 * 4 + 4);
    // A checkpoint that cannot be read is a checkpoint error, whatever the data.
    let bad = dishnet(&["eval", "--checkpoint", "/nonexistent.ckpt", "--data", cfg.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(code(&bad), 5);
}

#[test]
fn gradcheck_passes_and_flags_a_corrupted_rule() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok.toml");
    std::fs::write(&ok, "seeds = 2\n").unwrap();
    let out = dishnet(&["gradcheck", "--config", ok.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("decoder:ml"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seeds = 2\ninject_fault = \"sigmoid\"\n").unwrap();
    let out = dishnet(&["gradcheck", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 6);
    assert!(String::from_utf8_lossy(&out.stderr).contains("op:sigmoid"));
}
