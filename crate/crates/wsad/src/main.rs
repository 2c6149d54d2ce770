//! Command-line driver: synthesize data, train, evaluate, score, ablate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wsad::error::Error;
use wsad::evaluator::{self, Metrics};
use wsad::feature_store::{self, FrameTruth, SynthConfig, VideoBag};
use wsad::loss::LossConfig;
use wsad::mlp::{self, ForwardMode};
use wsad::trainer::{self, Checkpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "wsad", version, about = "Weakly supervised anomaly detection on precomputed segment features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus (manifest, features, frame truth)
    GenSynth(GenSynthArgs),
    /// Train a model from a dataset directory
    Train(TrainArgs),
    /// Evaluate a checkpoint: frame-level AUC against ground truth
    Eval(EvalArgs),
    /// Score one feature file with a checkpoint
    Score(ScoreArgs),
    /// Run the three-variant ablation over several seeds
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// RNG seed
    #[arg(long)]
    seed: u64,
    /// Number of normal videos
    #[arg(long, default_value_t = 20)]
    videos_normal: usize,
    /// Number of anomalous videos
    #[arg(long, default_value_t = 20)]
    videos_anomalous: usize,
    /// Feature dimension
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Distance between normal and anomalous feature means
    #[arg(long, default_value_t = 6.0)]
    sep: f64,
    /// Feature noise standard deviation
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Minimum segments per video
    #[arg(long, default_value_t = 10)]
    seg_min: usize,
    /// Maximum segments per video
    #[arg(long, default_value_t = 60)]
    seg_max: usize,
    /// Minimum anomalous burst length in segments
    #[arg(long, default_value_t = 3)]
    burst_min: usize,
    /// Maximum anomalous burst length in segments
    #[arg(long, default_value_t = 10)]
    burst_max: usize,
    /// Frames per segment (f)
    #[arg(long, default_value_t = 16)]
    frames_per_seg: u32,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (manifest.tsv + feature files)
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Learning rate
    #[arg(long, default_value_t = 5e-5)]
    lr: f64,
    /// Cluster-distance loss weight
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    /// Cap on the normal-video distance loss
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Training epochs
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden layer width
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    /// Dropout rate
    #[arg(long, default_value_t = 0.6)]
    dropout: f64,
    /// Refresh per-video clustering every this many epochs
    #[arg(long, default_value_t = 1)]
    recluster_every: usize,
    /// Epochs of all-ones anomalous labels before pseudo-labeling starts
    #[arg(long, default_value_t = 20)]
    pseudo_warmup: usize,
    /// Label all segments of anomalous videos 1 instead of pseudo-labeling
    #[arg(long)]
    no_pseudo: bool,
    /// Disable the cluster-distance loss term
    #[arg(long)]
    no_lc: bool,
    /// Optional per-epoch loss report (one JSON record per line)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Test dataset directory (manifest.tsv + feature files)
    #[arg(long)]
    data: PathBuf,
    /// Directory of per-video frame-truth files
    #[arg(long)]
    truth: PathBuf,
    /// Checkpoint to evaluate
    #[arg(long)]
    ckpt: PathBuf,
    /// Output metrics file (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Optional directory for per-video score timeline CSVs
    #[arg(long)]
    timelines: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Checkpoint to score with
    #[arg(long)]
    ckpt: PathBuf,
    /// Feature file of one video
    #[arg(long)]
    features: PathBuf,
    /// Output CSV of per-segment scores
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Training dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Test corpus directory (manifest.tsv + features + truth/)
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output CSV table
    #[arg(long)]
    out: PathBuf,
    /// Training epochs per run
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Learning rate for every variant
    #[arg(long, default_value_t = 5e-5)]
    lr: f64,
    /// Epochs of all-ones anomalous labels before pseudo-labeling starts
    #[arg(long, default_value_t = 20)]
    pseudo_warmup: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NumericFailure(_) => 3,
        _ => 2,
    }
}

fn usage_error(msg: &str) -> ! {
    eprintln!("error: {msg}");
    std::process::exit(1);
}

fn run(cli: Cli) -> wsad::Result<()> {
    match cli.command {
        Command::GenSynth(args) => gen_synth(args),
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Score(args) => score(args),
        Command::Ablate(args) => ablate(args),
    }
}

fn gen_synth(args: GenSynthArgs) -> wsad::Result<()> {
    let cfg = SynthConfig {
        num_normal_videos: args.videos_normal,
        num_anomalous_videos: args.videos_anomalous,
        feature_dim: args.dim,
        segment_count_range: (args.seg_min, args.seg_max),
        anomaly_burst_range: (args.burst_min, args.burst_max),
        class_separation: args.sep,
        noise_sigma: args.sigma,
        frames_per_segment: args.frames_per_seg,
        seed: args.seed,
    };
    if let Err(e) = cfg.validate() {
        usage_error(&e.to_string());
    }
    let index = feature_store::generate_synthetic(&cfg, &args.out)?;
    println!("wrote {} videos under {}", index.len(), args.out.display());
    Ok(())
}

fn train_config_from(args: &TrainArgs) -> TrainConfig {
    TrainConfig {
        lr: args.lr,
        epochs: args.epochs,
        seed: args.seed,
        recluster_every: args.recluster_every,
        use_pseudo: !args.no_pseudo,
        pseudo_warmup: args.pseudo_warmup,
        use_lc: !args.no_lc,
        loss: LossConfig { lambda: args.lambda, alpha: args.alpha, ..LossConfig::default() },
        hidden_dim: args.hidden,
        dropout_rate: args.dropout,
    }
}

fn train(args: TrainArgs) -> wsad::Result<()> {
    if !(args.lr > 0.0) {
        usage_error("lr must be positive");
    }
    if !(args.lambda >= 0.0) {
        usage_error("lambda must be >= 0");
    }
    if !(args.alpha > 0.0) {
        usage_error("alpha must be positive");
    }
    if args.epochs == 0 {
        usage_error("epochs must be >= 1");
    }
    if args.recluster_every == 0 {
        usage_error("recluster-every must be >= 1");
    }
    if args.hidden == 0 {
        usage_error("hidden must be >= 1");
    }
    if !(0.0..1.0).contains(&args.dropout) {
        usage_error("dropout must be in [0,1)");
    }
    let cfg = train_config_from(&args);
    let bags = load_corpus(&args.data)?;
    let outcome = trainer::train(&bags, &cfg)?;
    let ckpt = Checkpoint {
        params: outcome.params,
        adam: outcome.adam,
        loss: cfg.loss,
        seed: cfg.seed,
        epochs_done: outcome.epochs_done as u64,
        recluster_every: cfg.recluster_every as u32,
        pseudo_warmup: cfg.pseudo_warmup as u32,
        use_pseudo: cfg.use_pseudo,
        use_lc: cfg.use_lc,
    };
    trainer::save_checkpoint(&ckpt, &args.out)?;
    if let Some(report_path) = &args.report {
        outcome.report.write(report_path)?;
    }
    let last = outcome.report.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs on {} videos; final mean L {:.6}; checkpoint {}",
        outcome.epochs_done,
        bags.len(),
        last.mean_l,
        args.out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> wsad::Result<()> {
    let bags = load_corpus(&args.data)?;
    let truths = load_truths(&args.truth, &bags)?;
    let ckpt = trainer::load_checkpoint(&args.ckpt)?;
    let (auc, series) = evaluator::evaluate(&ckpt.params, &bags, &truths)?;
    let num_frames = series.iter().map(|s| s.scores.len()).sum();
    evaluator::write_metrics(&Metrics { frame_auc: auc, num_frames }, &args.out)?;
    if let Some(dir) = &args.timelines {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &series {
            evaluator::export_timeline(s, &dir.join(format!("{}.csv", s.video_id)))?;
        }
    }
    println!("frame_auc {auc:.6} over {num_frames} frames");
    Ok(())
}

fn score(args: ScoreArgs) -> wsad::Result<()> {
    let ckpt = trainer::load_checkpoint(&args.ckpt)?;
    let bag = feature_store::read_video_features(&args.features)?;
    let cache = mlp::forward(&ckpt.params, &bag.features_f64(), bag.num_segments, ForwardMode::Eval)?;
    let mut out = String::from("segment,score\n");
    for (j, s) in cache.scores.iter().enumerate() {
        out.push_str(&format!("{j},{s}\n"));
    }
    std::fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
    println!("scored {} segments of {}", bag.num_segments, bag.video_id);
    Ok(())
}

fn ablate(args: AblateArgs) -> wsad::Result<()> {
    if args.seeds.is_empty() {
        usage_error("at least one seed required");
    }
    if args.epochs == 0 {
        usage_error("epochs must be >= 1");
    }
    if args.lr <= 0.0 {
        usage_error("lr must be positive");
    }
    let train_bags = load_corpus(&args.data)?;
    let test_bags = load_corpus(&args.truth)?;
    let truths = load_truths(&args.truth, &test_bags)?;
    let base = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        pseudo_warmup: args.pseudo_warmup,
        ..TrainConfig::default()
    };
    let rows = trainer::run_ablation(&train_bags, &test_bags, &truths, &base, &args.seeds)?;
    trainer::write_ablation_csv(&rows, &args.out)?;
    for r in &rows {
        println!("{}\tseed {}\tauc {:.6}", r.variant, r.seed, r.auc);
    }
    Ok(())
}

fn load_corpus(dir: &Path) -> wsad::Result<Vec<VideoBag>> {
    let index = feature_store::load_manifest(&dir.join("manifest.tsv"))?;
    feature_store::load_dataset(&index, dir)
}

/// Loads frame truth for every bag, failing closed if any file is missing.
/// Accepts either a directory of `<video_id>.txt` files or a corpus root
/// with a `truth/` subdirectory.
fn load_truths(dir: &Path, bags: &[VideoBag]) -> wsad::Result<Vec<FrameTruth>> {
    let mut truths = Vec::with_capacity(bags.len());
    for bag in bags {
        let name = format!("{}.txt", bag.video_id);
        let direct = dir.join(&name);
        let nested = dir.join("truth").join(&name);
        let path = if direct.is_file() {
            direct
        } else if nested.is_file() {
            nested
        } else {
            return Err(Error::MissingTruth(bag.video_id.clone()));
        };
        truths.push(feature_store::load_frame_truth(&path, &bag.video_id)?);
    }
    Ok(truths)
}
