//! `salnet`: extract, sample, train, predict and evaluate from the shell.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use salnet_core::channels::ChannelConfig;
use salnet_core::cnn::Strategy;
use salnet_core::config::{load_config, PipelineConfig};
use salnet_core::io::load_manifest;
use salnet_core::pipeline::{self, HeldOut, TrainRequest};
use salnet_core::synthetic::{write_fixture, FixtureKind, FixtureSpec};

const EXIT_INPUT: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "salnet", version, about = "Patch-classifier video saliency pipeline")]
struct Cli {
    /// Experiment configuration (TOML with [channels], [sampler], [arch], [solver], [predict]).
    #[arg(long, global = true, env = "SALNET_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads for per-frame and per-patch work.
    #[arg(long, global = true, env = "SALNET_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute per-frame feature stacks.
    Extract(ExtractArgs),
    /// Cut labelled patches from feature stacks.
    Sample(SampleArgs),
    /// Train the patch classifier.
    Train(TrainArgs),
    /// Predict dense saliency maps.
    Predict(PredictArgs),
    /// Score map directories against recorded gaze.
    Evaluate(EvaluateArgs),
    /// Write a synthetic video fixture with gaze and manifests.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Dataset manifest (TSV).
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for feature stacks.
    #[arg(long)]
    out: PathBuf,
    /// 3k, 4k, 8k, rgb8k or hsv8k.
    #[arg(long)]
    channels: Option<ChannelConfig>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Dataset manifest (TSV).
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of feature stacks written by extract.
    #[arg(long)]
    features: PathBuf,
    /// Directory for the patch dataset.
    #[arg(long)]
    out: PathBuf,
    /// Patch side in pixels.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Threshold relaxation step.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of relaxation steps.
    #[arg(long)]
    depth: Option<usize>,
    /// Gaze density spread in pixels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Seed for non-salient draws and class balancing.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    PerEpochFullPass,
    FixedChunk,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Patch dataset written by sample.
    #[arg(long)]
    dataset: PathBuf,
    /// Separate patch dataset used for validation.
    #[arg(long, conflicts_with = "holdout_fraction")]
    held_out: Option<PathBuf>,
    /// Fraction of the dataset held out for validation when no --held-out is given.
    #[arg(long, default_value_t = 0.2)]
    holdout_fraction: f64,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Accuracy report CSV (default: <out>.csv).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many iterations (the schedule still follows the full budget).
    #[arg(long)]
    stop_after: Option<u64>,
    /// Channel configuration the dataset was extracted with.
    #[arg(long)]
    channels: Option<ChannelConfig>,
    /// Base learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Patches per iteration.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Passes over the training set.
    #[arg(long)]
    epochs: Option<usize>,
    /// Iteration cap.
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Iterations between validations (fixed-chunk).
    #[arg(long)]
    validation_interval: Option<u64>,
    /// Training and validation schedule.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Seed for batch order and the hold-out split.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Checkpoint written by train.
    #[arg(long)]
    model: PathBuf,
    /// Dataset manifest (TSV).
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of feature stacks.
    #[arg(long)]
    features: PathBuf,
    /// Directory for predicted maps.
    #[arg(long)]
    out: PathBuf,
    /// Also write 8-bit PGM maps.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Dataset manifest whose gaze files are scored against.
    #[arg(long)]
    manifest: PathBuf,
    /// Map directory as NAME=DIR; repeat for every model.
    #[arg(long = "maps", required = true, value_parser = parse_named_dir)]
    maps: Vec<(String, PathBuf)>,
    /// CSV report; a text table is written next to it with extension .txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Blob,
    Motion,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Fixture root directory.
    #[arg(long)]
    out: PathBuf,
    /// Bright blob or motion-defined object.
    #[arg(long, value_enum, default_value_t = KindArg::Blob)]
    kind: KindArg,
    /// Videos in the training manifest.
    #[arg(long, default_value_t = 8)]
    train_videos: usize,
    /// Videos in the test manifest.
    #[arg(long, default_value_t = 4)]
    test_videos: usize,
    /// Frames per video.
    #[arg(long, default_value_t = 10)]
    frames: usize,
    /// Frame width and height.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Rendering seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_named_dir(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected NAME=DIR, got {s:?}")),
    }
}

fn load(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    Ok(load_config(path, std::env::vars())?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load(cli.config.as_deref())?;
    match cli.command {
        Command::Extract(a) => {
            let channels = a.channels.unwrap_or(cfg.channels.config);
            let manifest = load_manifest(&a.manifest)?;
            let written = pipeline::cmd_extract(&manifest, channels, &a.out)?;
            println!("wrote {} {channels} feature stacks to {}", written.len(), a.out.display());
        }
        Command::Sample(a) => {
            let s = &mut cfg.sampler;
            if let Some(v) = a.patch_size {
                s.patch_size = v;
            }
            if let Some(v) = a.epsilon {
                s.epsilon = v;
            }
            if let Some(v) = a.depth {
                s.depth = v;
            }
            if a.sigma.is_some() {
                s.sigma_px = a.sigma;
            }
            if let Some(v) = a.seed {
                s.seed = v;
            }
            let manifest = load_manifest(&a.manifest)?;
            let summary = pipeline::cmd_sample(&manifest, &a.features, &s.params(), s.seed, &a.out)?;
            println!(
                "wrote {} patches ({} salient) to {}",
                summary.patches,
                summary.salient,
                a.out.display()
            );
        }
        Command::Train(a) => {
            let s = &mut cfg.solver;
            if let Some(v) = a.learning_rate {
                s.learning_rate = v;
            }
            if let Some(v) = a.batch_size {
                s.batch_size = v;
            }
            if let Some(v) = a.epochs {
                s.epochs = v;
            }
            if let Some(v) = a.max_iterations {
                s.max_iterations = v;
            }
            if let Some(v) = a.validation_interval {
                s.validation_interval = v;
            }
            if let Some(v) = a.strategy {
                s.strategy = match v {
                    StrategyArg::PerEpochFullPass => Strategy::PerEpochFullPass,
                    StrategyArg::FixedChunk => Strategy::FixedChunk,
                };
            }
            if let Some(v) = a.seed {
                s.seed = v;
            }
            s.validate()?;
            let held_out = match a.held_out {
                Some(dir) => HeldOut::Dataset(dir),
                None => HeldOut::Fraction(a.holdout_fraction),
            };
            let outcome = pipeline::cmd_train(&TrainRequest {
                dataset: &a.dataset,
                held_out,
                arch: &cfg.arch,
                solver: &cfg.solver,
                channels: a.channels.unwrap_or(cfg.channels.config),
                out_model: &a.out,
                report: a.report.as_deref(),
                resume: a.resume.as_deref(),
                halt_at: a.stop_after,
            })?;
            let r = &outcome.report;
            println!(
                "trained {} iterations; best held-out accuracy {:.4} at iteration {} ({:.1?})",
                r.iterations_run, r.best_accuracy, r.best_iteration, r.wall_time
            );
        }
        Command::Predict(a) => {
            if a.pgm {
                cfg.predict.write_pgm = true;
            }
            let manifest = load_manifest(&a.manifest)?;
            let written = pipeline::cmd_predict(&a.model, &manifest, &a.features, &cfg.predict, &a.out)?;
            println!("wrote {} maps to {}", written.len(), a.out.display());
        }
        Command::Evaluate(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let report = pipeline::cmd_evaluate(&a.maps, &manifest, &a.out)?;
            print!("{}", report.to_table());
        }
        Command::Synth(a) => {
            if a.size < 16 || a.frames < 2 {
                bail!("synthetic videos need at least 16×16 pixels and 2 frames");
            }
            let spec = FixtureSpec {
                kind: match a.kind {
                    KindArg::Blob => FixtureKind::BrightBlob,
                    KindArg::Motion => FixtureKind::MotionDefined,
                },
                width: a.size,
                height: a.size,
                frames: a.frames,
                ..FixtureSpec::default()
            };
            let paths = write_fixture(&a.out, &spec, a.seed, a.train_videos, a.test_videos)
                .with_context(|| format!("writing fixture to {}", a.out.display()))?;
            println!(
                "wrote {} videos; manifests {} and {}",
                paths.videos.len(),
                paths.train_manifest.display(),
                paths.test_manifest.display()
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<salnet_core::Error>() {
        Some(salnet_core::Error::Divergence { .. }) => EXIT_DIVERGENCE,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match cli.workers {
        Some(0) => {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_INPUT);
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
