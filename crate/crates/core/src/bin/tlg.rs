use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tlg::grounding::{GroundingModel, Preset};
use tlg::io::write_json;
use tlg::metrics::Tolerance;
use tlg::pipeline::{self, GrounderKind, PipelineConfig, PropagatorKind, SEED_ENV};
use tlg::synth::{write_benchmark, SynthConfig};
use tlg::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tlg",
    version,
    about = "Tracklet-language grounding for referring video object segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark directory.
    Synth(SynthArgs),
    /// Propagate key-frame proposals into candidate tracklets.
    Propagate(StageArgs),
    /// Tracklet NMS over `<out>/candidates`.
    Nms(StageArgs),
    /// Ground `<out>/kept` against the expressions and write predictions.
    Ground(StageArgs),
    /// Run every stage.
    Pipeline(StageArgs),
    /// Four-variant ablation table on a synthetic benchmark.
    Ablate(AblateArgs),
    /// J, F and J&F of predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Write a grounding checkpoint.
    Model(ModelArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// JSON synthesis config; defaults to noise-free easy scenes.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shorthand for hard scenes with noisy proposals and propagation.
    #[arg(long, conflicts_with = "config")]
    hard_noisy: bool,
}

#[derive(Args)]
struct PipelineFlags {
    /// JSON pipeline config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    #[arg(long)]
    keyframes: Option<usize>,
    #[arg(long)]
    nms_threshold: Option<f64>,
    #[arg(long)]
    max_keep: Option<usize>,
    #[arg(long)]
    no_nms: bool,
    #[arg(long, value_enum)]
    propagator: Option<PropagatorArg>,
    #[arg(long, value_enum)]
    grounder: Option<GrounderArg>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    heads: Option<usize>,
    /// Checkpoint path; repeat for an ensemble.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    frame_stride: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct StageArgs {
    /// Benchmark directory (proposals, features, tokens, scenes).
    #[arg(long, default_value = ".")]
    data: PathBuf,
    /// Run directory receiving the stage outputs.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: PipelineFlags,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Also write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    flags: PipelineFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Boundary tolerance in pixels, or `auto`.
    #[arg(long, default_value = "auto")]
    tolerance: Tolerance,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    /// Hand-set weights matching attribute-coded synthetic features.
    Matcher,
    /// Randomly initialized weights for a preset.
    Random,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "matcher")]
    kind: ModelKind,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    /// Matcher only: model width, which must equal the feature channels.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Matcher only: number of attribute channels.
    #[arg(long, default_value_t = 16)]
    attr_dims: usize,
    #[arg(long, default_value_t = 10.0)]
    temperature: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropagatorArg {
    Oracle,
    Static,
}

#[derive(Clone, Copy, ValueEnum)]
enum GrounderArg {
    Naive,
    Transformer,
}

impl PipelineFlags {
    fn resolve(self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        // clap already folds TLG_SEED into --seed
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.keyframes {
            c.keyframes = v;
        }
        if let Some(v) = self.nms_threshold {
            c.nms_threshold = v;
        }
        if let Some(v) = self.max_keep {
            c.max_keep = v;
        }
        if self.no_nms {
            c.nms = false;
        }
        if let Some(v) = self.propagator {
            c.propagator = match v {
                PropagatorArg::Oracle => PropagatorKind::Oracle,
                PropagatorArg::Static => PropagatorKind::Static,
            };
        }
        if let Some(v) = self.grounder {
            c.grounder = match v {
                GrounderArg::Naive => GrounderKind::Naive,
                GrounderArg::Transformer => GrounderKind::Transformer,
            };
        }
        if let Some(v) = self.preset {
            c.preset = v;
        }
        if self.heads.is_some() {
            c.heads = self.heads;
        }
        if !self.checkpoints.is_empty() {
            c.checkpoints = self.checkpoints;
            if self.grounder.is_none() {
                c.grounder = GrounderKind::Transformer;
            }
        }
        if let Some(v) = self.frame_stride {
            c.frame_stride = v;
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        c.validate()?;
        Ok(c)
    }
}

fn report_videos(stage: &str, videos: &[String], out: &Path) {
    println!("{stage}: {} videos -> {}", videos.len(), out.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let config = if a.hard_noisy {
                SynthConfig::hard_noisy()
            } else {
                match &a.config {
                    Some(path) => tlg::io::read_json(path).map_err(|e| Error::Config(e.to_string()))?,
                    None => SynthConfig::default(),
                }
            };
            config.validate()?;
            let scenes = write_benchmark(&config, a.count, a.seed, &a.out)?;
            println!("synth: {} scenes -> {}", scenes.len(), a.out.display());
        }
        Command::Propagate(a) => {
            let config = a.flags.resolve()?;
            report_videos(
                "propagate",
                &pipeline::run_propagate_stage(&config, &a.data, &a.out)?,
                &a.out,
            );
        }
        Command::Nms(a) => {
            let config = a.flags.resolve()?;
            report_videos("nms", &pipeline::run_nms_stage(&config, &a.out)?, &a.out);
        }
        Command::Ground(a) => {
            let config = a.flags.resolve()?;
            report_videos("ground", &pipeline::run_ground_stage(&config, &a.data, &a.out)?, &a.out);
        }
        Command::Pipeline(a) => {
            let config = a.flags.resolve()?;
            report_videos("pipeline", &pipeline::run_pipeline(&config, &a.data, &a.out)?, &a.out);
        }
        Command::Ablate(a) => {
            let config = a.flags.resolve()?;
            let report = pipeline::run_ablation(&config, &a.data)?;
            print!("{}", report.to_table());
            if let Some(path) = a.json {
                write_json(&path, &report)?;
            }
        }
        Command::Evaluate(a) => {
            let report = pipeline::run_evaluate(&a.pred, &a.gt, a.tolerance)?;
            print!("{}", report.to_table());
            if let Some(path) = a.json {
                write_json(&path, &report)?;
            }
        }
        Command::Model(a) => {
            let preset = a.preset.config();
            let model = match a.kind {
                ModelKind::Matcher => GroundingModel::attribute_matcher(
                    a.dim,
                    preset.layers,
                    preset.heads,
                    preset.ffn_dim,
                    a.attr_dims,
                    a.temperature,
                )?,
                ModelKind::Random => GroundingModel::random(preset, a.seed)?,
            };
            model.save(&a.out)?;
            let c = model.config();
            println!(
                "model: dim {} layers {} heads {} -> {}",
                c.dim,
                c.layers,
                c.heads,
                a.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
