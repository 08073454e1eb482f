//! Stage orchestration over on-disk artifacts.
//!
//! Inputs follow [`BenchmarkLayout`]; a run directory receives
//! `candidates/`, `kept/`, `grounding/` and `pred/`, one file per video, so
//! every stage can be rerun from the previous stage's files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::{
    ground_video, Grounder, GroundingModel, NaiveGrounder, Preset, TokenFeatures, VideoFeatures, VideoGrounding,
};
use crate::io::{json_stems, read_json, write_json};
use crate::metrics::{evaluate, read_sequence_dir, EvalReport, MaskSequence, Tolerance};
use crate::propagation::{
    build_candidate_set, sample_key_frames, Propagator, ProposalSet, StaticPropagator, DEFAULT_KEY_FRAMES,
};
use crate::synth::{BenchmarkLayout, Scene};
use crate::tracklet::{tracklet_nms, TrackletSet, DEFAULT_MAX_KEEP, DEFAULT_NMS_THRESHOLD};

pub const SEED_ENV: &str = "TLG_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrounderKind {
    Naive,
    Transformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagatorKind {
    /// Follows the scene's true motion; needs `scenes/` in the input.
    Oracle,
    /// Replicates each proposal unchanged on every frame.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub keyframes: usize,
    /// Skip tracklet NMS and ground every candidate.
    pub nms: bool,
    pub nms_threshold: f64,
    pub max_keep: usize,
    pub propagator: PropagatorKind,
    pub grounder: GrounderKind,
    pub preset: Preset,
    /// Attention heads of loaded checkpoints; defaults to the preset's.
    pub heads: Option<usize>,
    /// Ensemble members for the transformer grounder.
    pub checkpoints: Vec<PathBuf>,
    pub frame_stride: usize,
    pub seed: u64,
    /// Video worker pool size; defaults to available parallelism.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            keyframes: DEFAULT_KEY_FRAMES,
            nms: true,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            max_keep: DEFAULT_MAX_KEEP,
            propagator: PropagatorKind::Oracle,
            grounder: GrounderKind::Naive,
            preset: Preset::Desk,
            heads: None,
            checkpoints: Vec::new(),
            frame_stride: 1,
            seed: 0,
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: PipelineConfig = read_json(path).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `TLG_SEED` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.keyframes == 0 {
            return bad("keyframes must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.nms_threshold) {
            return bad("nms_threshold must lie in [0, 1]");
        }
        if self.max_keep == 0 {
            return bad("max_keep must be at least 1");
        }
        if self.frame_stride == 0 {
            return bad("frame_stride must be at least 1");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if self.heads == Some(0) {
            return bad("heads must be at least 1");
        }
        if self.grounder == GrounderKind::Transformer && self.checkpoints.is_empty() {
            return bad("the transformer grounder needs at least one checkpoint");
        }
        Ok(())
    }

    fn heads(&self) -> usize {
        self.heads.unwrap_or(self.preset.config().heads)
    }

    /// Loads the configured grounders; one entry per ensemble member.
    pub fn grounders(&self) -> Result<Vec<Box<dyn Grounder>>> {
        match self.grounder {
            GrounderKind::Naive => Ok(vec![Box::new(NaiveGrounder)]),
            GrounderKind::Transformer => self
                .checkpoints
                .iter()
                .map(|p| Ok(Box::new(GroundingModel::load(p, self.heads())?) as Box<dyn Grounder>))
                .collect(),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

/// Everything one video needs to go through the pipeline.
#[derive(Debug, Clone)]
pub struct VideoInputs {
    pub scene: Option<Scene>,
    pub proposals: ProposalSet,
    pub features: VideoFeatures,
    pub tokens: TokenFeatures,
}

impl VideoInputs {
    pub fn load(layout: &BenchmarkLayout, video: &str) -> Result<Self> {
        let scene_path = layout.scene(video);
        let scene = scene_path.exists().then(|| Scene::read(&scene_path)).transpose()?;
        Ok(VideoInputs {
            scene,
            proposals: ProposalSet::read(&layout.proposals(video))?,
            features: VideoFeatures::read(&layout.features(video))?,
            tokens: TokenFeatures::read(&layout.tokens(video))?,
        })
    }

    fn video_id(&self) -> &str {
        &self.proposals.video_id
    }

    fn propagator(&self, kind: PropagatorKind, seed: u64) -> Result<Box<dyn Propagator>> {
        match kind {
            PropagatorKind::Static => Ok(Box::new(StaticPropagator)),
            PropagatorKind::Oracle => {
                let scene = self
                    .scene
                    .as_ref()
                    .ok_or_else(|| Error::Input("oracle propagation needs the scene description".into()))?;
                Ok(Box::new(scene.oracle_propagator(seed)))
            }
        }
    }
}

fn timed<T>(stage: &'static str, video: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage, video));
    log::info!(
        "stage={stage} video={video} ok={} wall_ms={:.3}",
        out.is_ok(),
        start.elapsed().as_secs_f64() * 1e3
    );
    out
}

pub fn stage_propagate(config: &PipelineConfig, inputs: &VideoInputs) -> Result<TrackletSet> {
    timed("propagate", inputs.video_id(), || {
        let plan = sample_key_frames(inputs.proposals.num_frames, config.keyframes)?;
        let propagator = inputs.propagator(config.propagator, config.seed)?;
        build_candidate_set(&plan, &inputs.proposals.restricted_to(&plan), propagator.as_ref())
    })
}

/// Tracklet NMS, or the identity when `config.nms` is off.
pub fn stage_nms(config: &PipelineConfig, candidates: &TrackletSet) -> Result<TrackletSet> {
    timed("nms", &candidates.video_id, || {
        if config.nms {
            tracklet_nms(candidates, config.nms_threshold, config.max_keep)
        } else {
            Ok(candidates.clone())
        }
    })
}

/// Grounds the kept tracklets and returns the log entry plus the selected masks.
pub fn stage_ground(
    config: &PipelineConfig,
    kept: &TrackletSet,
    features: &VideoFeatures,
    tokens: &TokenFeatures,
    grounders: &[&dyn Grounder],
) -> Result<(VideoGrounding, MaskSequence)> {
    timed("ground", &kept.video_id, || {
        let grounding = ground_video(kept, features, tokens, grounders, config.frame_stride)?;
        let masks = kept.tracklets[grounding.result.selected].masks.clone();
        let pred = MaskSequence::new(kept.video_id.clone(), kept.width, kept.height, masks)?;
        Ok((grounding, pred))
    })
}

#[derive(Debug, Clone)]
pub struct VideoOutputs {
    pub candidates: TrackletSet,
    pub kept: TrackletSet,
    pub grounding: VideoGrounding,
    pub pred: MaskSequence,
}

pub fn run_video(config: &PipelineConfig, inputs: &VideoInputs, grounders: &[&dyn Grounder]) -> Result<VideoOutputs> {
    let candidates = stage_propagate(config, inputs)?;
    let kept = stage_nms(config, &candidates)?;
    let (grounding, pred) = stage_ground(config, &kept, &inputs.features, &inputs.tokens, grounders)?;
    Ok(VideoOutputs {
        candidates,
        kept,
        grounding,
        pred,
    })
}

/// Output layout of a pipeline run.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    fn file(&self, dir: &str, video: &str) -> PathBuf {
        self.root.join(dir).join(format!("{video}.json"))
    }

    pub fn candidates(&self, video: &str) -> PathBuf {
        self.file("candidates", video)
    }

    pub fn kept(&self, video: &str) -> PathBuf {
        self.file("kept", video)
    }

    pub fn grounding(&self, video: &str) -> PathBuf {
        self.file("grounding", video)
    }

    pub fn pred_dir(&self) -> PathBuf {
        self.root.join("pred")
    }

    pub fn pred(&self, video: &str) -> PathBuf {
        self.file("pred", video)
    }
}

fn as_refs(grounders: &[Box<dyn Grounder>]) -> Vec<&dyn Grounder> {
    grounders.iter().map(|g| g.as_ref()).collect()
}

fn for_each_video<T: Send>(
    config: &PipelineConfig,
    videos: &[String],
    f: impl Fn(&str) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    config.pool()?.install(|| videos.par_iter().map(|v| f(v)).collect())
}

/// Stage 1 only: writes `candidates/` for every video in `data`.
pub fn run_propagate_stage(config: &PipelineConfig, data: &Path, out: &Path) -> Result<Vec<String>> {
    let (layout, run) = (BenchmarkLayout::new(data), RunLayout::new(out));
    let videos = layout_videos(&layout)?;
    for_each_video(config, &videos, |v| {
        let inputs = VideoInputs::load(&layout, v)?;
        stage_propagate(config, &inputs)?.write(&run.candidates(v))
    })?;
    Ok(videos)
}

/// Stage 2 only: `candidates/` to `kept/`.
pub fn run_nms_stage(config: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let run = RunLayout::new(out);
    let videos = json_stems(&out.join("candidates"))?;
    for_each_video(config, &videos, |v| {
        let candidates = TrackletSet::read(&run.candidates(v))?;
        stage_nms(config, &candidates)?.write(&run.kept(v))
    })?;
    Ok(videos)
}

/// Stage 3 only: `kept/` to `grounding/` and `pred/`.
pub fn run_ground_stage(config: &PipelineConfig, data: &Path, out: &Path) -> Result<Vec<String>> {
    let (layout, run) = (BenchmarkLayout::new(data), RunLayout::new(out));
    let grounders = config.grounders()?;
    let refs = as_refs(&grounders);
    let videos = json_stems(&out.join("kept"))?;
    for_each_video(config, &videos, |v| {
        let kept = TrackletSet::read(&run.kept(v))?;
        let features = VideoFeatures::read(&layout.features(v))?;
        let tokens = TokenFeatures::read(&layout.tokens(v))?;
        let (grounding, pred) = stage_ground(config, &kept, &features, &tokens, &refs)?;
        write_json(&run.grounding(v), &grounding)?;
        pred.write(&run.pred(v))
    })?;
    Ok(videos)
}

fn layout_videos(layout: &BenchmarkLayout) -> Result<Vec<String>> {
    let videos = json_stems(&layout.root.join("proposals"))?;
    if videos.is_empty() {
        return Err(Error::Input(format!(
            "no proposals found under {}",
            layout.root.display()
        )));
    }
    Ok(videos)
}

/// Every stage for every video in `data`, writing all artifacts under `out`.
pub fn run_pipeline(config: &PipelineConfig, data: &Path, out: &Path) -> Result<Vec<String>> {
    config.validate()?;
    let (layout, run) = (BenchmarkLayout::new(data), RunLayout::new(out));
    let grounders = config.grounders()?;
    let refs = as_refs(&grounders);
    let videos = layout_videos(&layout)?;
    for_each_video(config, &videos, |v| {
        let inputs = VideoInputs::load(&layout, v)?;
        let outputs = run_video(config, &inputs, &refs)?;
        outputs.candidates.write(&run.candidates(v))?;
        outputs.kept.write(&run.kept(v))?;
        write_json(&run.grounding(v), &outputs.grounding)?;
        outputs.pred.write(&run.pred(v))
    })?;
    Ok(videos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub description: String,
    pub mean_j: f64,
    pub mean_f: f64,
    pub mean_jf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub videos: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<3}  {:<44}  {:>7}  {:>7}  {:>7}",
            "", "variant", "J&F", "J", "F"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<3}  {:<44}  {:>7.4}  {:>7.4}  {:>7.4}",
                format!("({})", r.variant),
                r.description,
                r.mean_jf,
                r.mean_j,
                r.mean_f
            );
        }
        let _ = writeln!(out, "videos: {}", self.videos);
        out
    }
}

/// Temperatures of the built-in matcher models used when no checkpoints are configured.
pub const MATCHER_TEMPERATURES: [f64; 2] = [8.0, 12.0];

fn matcher_models(inputs: &VideoInputs) -> Result<Vec<GroundingModel>> {
    let scene = inputs
        .scene
        .as_ref()
        .ok_or_else(|| Error::Input("built-in matcher needs the scene description".into()))?;
    let desk = Preset::Desk.config();
    MATCHER_TEMPERATURES
        .iter()
        .map(|&temp| {
            GroundingModel::attribute_matcher(
                inputs.features.channels(),
                desk.layers,
                desk.heads,
                desk.ffn_dim,
                scene.config.attr_dims(),
                temp,
            )
        })
        .collect()
}

/// Scores the four cumulative variants on every video in `data` against `data/gt`:
/// (a) one middle key frame without propagation, naive grounding;
/// (b) all key frames with propagation, no NMS, naive grounding;
/// (c) as (b) with transformer grounding;
/// (d) as (c) with NMS and an ensemble.
///
/// Transformer members come from `config.checkpoints` when set, otherwise
/// from built-in attribute matchers.
pub fn run_ablation(config: &PipelineConfig, data: &Path) -> Result<AblationReport> {
    config.validate()?;
    let layout = BenchmarkLayout::new(data);
    let videos = layout_videos(&layout)?;
    let gt = read_sequence_dir(&layout.gt_dir())?;
    let loaded = if config.checkpoints.is_empty() {
        None
    } else {
        let models = PipelineConfig {
            grounder: GrounderKind::Transformer,
            ..config.clone()
        }
        .grounders()?;
        Some(models)
    };

    let a = PipelineConfig {
        keyframes: 1,
        propagator: PropagatorKind::Static,
        nms: false,
        ..config.clone()
    };
    let b = PipelineConfig {
        nms: false,
        ..config.clone()
    };
    let d = PipelineConfig {
        nms: true,
        ..config.clone()
    };

    let per_video = for_each_video(config, &videos, |v| {
        let inputs = VideoInputs::load(&layout, v)?;
        let naive: [&dyn Grounder; 1] = [&NaiveGrounder];
        let built = if loaded.is_none() {
            matcher_models(&inputs)?
        } else {
            Vec::new()
        };
        let members: Vec<&dyn Grounder> = match &loaded {
            Some(models) => as_refs(models),
            None => built.iter().map(|m| m as &dyn Grounder).collect(),
        };
        let single = &members[..1];
        Ok([
            run_video(&a, &inputs, &naive)?.pred.masks,
            run_video(&b, &inputs, &naive)?.pred.masks,
            run_video(&b, &inputs, single)?.pred.masks,
            run_video(&d, &inputs, &members)?.pred.masks,
        ])
    })?;

    let descriptions = [
        ("a", "single key frame, no propagation, similarity"),
        ("b", "+ propagation"),
        ("c", "+ transformer grounding"),
        ("d", "+ tracklet NMS and ensemble"),
    ];
    let mut rows = Vec::with_capacity(descriptions.len());
    for (i, (variant, description)) in descriptions.iter().enumerate() {
        let preds = videos
            .iter()
            .zip(&per_video)
            .map(|(v, outs)| (v.clone(), outs[i].clone()))
            .collect();
        let report: EvalReport = evaluate(&preds, &gt, Tolerance::Auto)?;
        rows.push(AblationRow {
            variant: variant.to_string(),
            description: description.to_string(),
            mean_j: report.mean_j,
            mean_f: report.mean_f,
            mean_jf: report.mean_jf,
        });
    }
    Ok(AblationReport {
        videos: videos.len(),
        rows,
    })
}

/// Scores `pred` against `gt`; both are directories of mask sequences.
pub fn run_evaluate(pred: &Path, gt: &Path, tolerance: Tolerance) -> Result<EvalReport> {
    evaluate(&read_sequence_dir(pred)?, &read_sequence_dir(gt)?, tolerance)
}
