//! Command-line front end: `train`, `eval`, `predict`, `gradcheck`, `synth`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::data::{generate_synthetic, load_image, load_manifest_with_vocab, write_manifest, LabeledExample, SyntheticSpec};
use crate::encoder::load_external_features;
use crate::error::Error;
use crate::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::model::EncoderSpec;
use crate::report::evaluate;
use crate::tensor::Tensor;
use crate::train::train_to_dir;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_CHECKPOINT: i32 = 5;
pub const EXIT_GRADCHECK: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "dishnet", version, about = "Multi-label image classification toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint and write a JSON report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// A manifest CSV, or a training config whose data source is used.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// List per-label confidences for one image (or FMAP feature file).
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Ground-truth labels, `;`-separated.
        #[arg(long)]
        truth: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render a synthetic dataset to PNGs plus manifest and vocabulary.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

trait Code<T> {
    fn code(self, code: i32) -> Result<T, Failure>;
}

impl<T> Code<T> for crate::Result<T> {
    fn code(self, code: i32) -> Result<T, Failure> {
        self.map_err(|error| Failure { code, error })
    }
}

/// Shape problems while opening a checkpoint are checkpoint errors;
/// everything else is about the data.
fn checkpoint_or_data(error: Error) -> Failure {
    let code = match error {
        Error::ShapeMismatch { .. } => EXIT_CHECKPOINT,
        _ => EXIT_DATA,
    };
    Failure { code, error }
}

fn config_or_data(error: Error) -> Failure {
    let code = match error {
        Error::InvalidSpec(_) | Error::GroupOverflow { .. } | Error::IndivisibleSpatialDims { .. } | Error::Toml(_) => EXIT_CONFIG,
        Error::Diverged { .. } | Error::NonFiniteGrad(_) => EXIT_DIVERGED,
        _ => EXIT_DATA,
    };
    Failure { code, error }
}

fn cmd_train(config: &Path) -> Result<String, Failure> {
    let cfg = TrainConfig::load(config).code(EXIT_CONFIG)?;
    let data = cfg.load_data().code(EXIT_DATA)?;
    cfg.model_spec(data.vocab.len()).code(EXIT_CONFIG)?;
    let (run, files) = train_to_dir(&cfg, &data).map_err(config_or_data)?;
    let mut out = String::new();
    if let (Some(first), Some(last)) = (run.log.first(), run.log.last()) {
        let _ = writeln!(out, "train loss {:.4} -> {:.4} over {} epochs", first.train_loss, last.train_loss, run.log.len());
    }
    if let Some((epoch, map, _)) = &run.best {
        let _ = writeln!(out, "best test mAP {map:.4} at epoch {epoch}");
    }
    let _ = write!(out, "wrote {}, {} and {}", files.final_checkpoint.display(), files.best_checkpoint.display(), files.log.display());
    Ok(out)
}

fn eval_examples(data: &Path, ckpt: &Checkpoint<f32>, split: SplitArg) -> crate::Result<Vec<LabeledExample>> {
    let ds = if data.extension().is_some_and(|e| e == "toml") {
        let cfg = TrainConfig::load(data)?;
        let ds = cfg.load_data()?;
        if ds.vocab.labels() != ckpt.meta.labels.as_slice() {
            return Err(Error::shape("eval", "dataset vocabulary differs from the checkpoint's labels"));
        }
        ds
    } else {
        let size = match &ckpt.meta.model.encoder {
            EncoderSpec::Tiny(enc) => Some((enc.input_size.0, enc.input_size.1)),
            EncoderSpec::External { .. } => None,
        };
        load_manifest_with_vocab(data, ckpt.vocabulary()?, size)?
    };
    let examples = match split {
        SplitArg::Train => ds.train,
        SplitArg::Test => ds.test,
        SplitArg::All => ds.train.into_iter().chain(ds.test).collect(),
    };
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(examples)
}

fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path, split: SplitArg, batch_size: usize) -> Result<String, Failure> {
    let ckpt = Checkpoint::<f32>::load(checkpoint).code(EXIT_CHECKPOINT)?;
    let examples = eval_examples(data, &ckpt, split).map_err(checkpoint_or_data)?;
    let report = evaluate(&ckpt, &examples, batch_size).map_err(checkpoint_or_data)?;
    let json = serde_json::to_string_pretty(&report).map_err(Error::from).code(EXIT_DATA)?;
    std::fs::write(out, json + "\n").map_err(Error::from).code(EXIT_DATA)?;
    Ok(format!(
        "mAP {:.4} on {} examples, {} multiply-adds, {} params -> {}",
        report.map,
        report.examples,
        report.flops,
        report.params,
        out.display()
    ))
}

fn cmd_predict(checkpoint: &Path, image: &Path, truth: Option<&str>, threshold: f64) -> Result<String, Failure> {
    let ckpt = Checkpoint::<f32>::load(checkpoint).code(EXIT_CHECKPOINT)?;
    let vocab = ckpt.vocabulary().code(EXIT_CHECKPOINT)?;
    let truth = truth.map(|t| vocab.encode_list(t)).transpose().code(EXIT_DATA)?;
    let input = match &ckpt.meta.model.encoder {
        EncoderSpec::Tiny(enc) => {
            let img = load_image(image, Some((enc.input_size.0, enc.input_size.1))).code(EXIT_DATA)?;
            let shape: Vec<usize> = [1].into_iter().chain(img.shape().iter().copied()).collect();
            img.reshape(&shape).code(EXIT_DATA)?
        }
        EncoderSpec::External { .. } => load_external_features(image).code(EXIT_DATA)?.into_values(),
    };
    let scores: Tensor<f32> = ckpt.model.frozen().forward(&input).and_then(|z| z.sigmoid()).map_err(checkpoint_or_data)?;
    let k = vocab.len();
    let mut out = String::new();
    for (row, chunk) in scores.data().chunks(k).enumerate() {
        if scores.shape()[0] > 1 {
            let _ = writeln!(out, "# item {row}");
        }
        let mut ranked: Vec<(usize, f32)> = chunk.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (label, p) in ranked {
            let detected = f64::from(p) >= threshold;
            let tag = match (&truth, detected) {
                (Some(t), true) if t[label] => "  detected  TP",
                (Some(_), true) => "  detected  FP",
                (None, true) => "  detected",
                _ => "",
            };
            let _ = writeln!(out, "{:<24} {:.6}{tag}", vocab.label(label).unwrap_or("?"), p);
        }
    }
    Ok(out.trim_end().to_string())
}

fn cmd_gradcheck(config: Option<&Path>) -> Result<String, Failure> {
    let cfg = match config {
        Some(p) => GradcheckConfig::load(p).code(EXIT_CONFIG)?,
        None => GradcheckConfig::default(),
    };
    let report = run_gradcheck(&cfg).code(EXIT_CONFIG)?;
    let mut out = String::new();
    for p in &report.probes {
        let status = if p.max_error < report.tolerance { "ok" } else { "FAIL" };
        let _ = writeln!(out, "{:<24} max rel err {:.3e} (seed {})  {status}", p.name, p.max_error, p.worst_seed);
    }
    if report.passed() {
        let _ = write!(out, "all {} probes below {:.0e} over {} seeds", report.probes.len(), report.tolerance, report.seeds);
        Ok(out)
    } else {
        let names: Vec<&str> = report.failures().iter().map(|p| p.name.as_str()).collect();
        print!("{out}");
        Err(Failure { code: EXIT_GRADCHECK, error: Error::InvalidSpec(format!("gradient check failed for {}", names.join(", "))) })
    }
}

fn cmd_synth(spec: &Path, out: &Path) -> Result<String, Failure> {
    let text = std::fs::read_to_string(spec).map_err(Error::from).code(EXIT_CONFIG)?;
    let spec: SyntheticSpec = toml::from_str(&text).map_err(Error::from).code(EXIT_CONFIG)?;
    let ds = generate_synthetic(&spec).code(EXIT_CONFIG)?;
    write_manifest(&ds, out).code(EXIT_DATA)?;
    Ok(format!("wrote {} train and {} test images to {}", ds.train.len(), ds.test.len(), out.display()))
}

/// Runs one parsed command, returning its summary text.
pub fn execute(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Train { config } => cmd_train(config),
        Command::Eval { checkpoint, data, out, split, batch_size } => cmd_eval(checkpoint, data, out, *split, *batch_size),
        Command::Predict { checkpoint, image, truth, threshold } => cmd_predict(checkpoint, image, truth.as_deref(), *threshold),
        Command::Gradcheck { config } => cmd_gradcheck(config.as_deref()),
        Command::Synth { spec, out } => cmd_synth(spec, out),
    }
}

/// Parses `args` (program name first), runs the command, prints the outcome
/// and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            println!("{text}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}
