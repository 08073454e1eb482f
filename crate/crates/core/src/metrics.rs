//! Region similarity (J), contour accuracy (F) and their mean, J&F.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{json_stems, read_json, write_json};
use crate::mask::BinaryMask;

/// A single mask per frame for one video (predictions and ground truth on disk).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskSequence {
    pub video_id: String,
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub masks: Vec<BinaryMask>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskSequenceJson {
    video_id: String,
    width: usize,
    height: usize,
    num_frames: usize,
    masks: Vec<BinaryMask>,
}

impl<'de> Deserialize<'de> for MaskSequence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = MaskSequenceJson::deserialize(deserializer)?;
        if raw.num_frames != raw.masks.len() {
            return Err(serde::de::Error::custom(format!(
                "num_frames is {} but {} masks are listed",
                raw.num_frames,
                raw.masks.len()
            )));
        }
        MaskSequence::new(raw.video_id, raw.width, raw.height, raw.masks).map_err(serde::de::Error::custom)
    }
}

impl MaskSequence {
    pub fn new(video_id: impl Into<String>, width: usize, height: usize, masks: Vec<BinaryMask>) -> Result<Self> {
        if masks.iter().any(|m| m.width() != width || m.height() != height) {
            return Err(Error::dim(format!("mask sequence frames must all be {width}x{height}")));
        }
        Ok(MaskSequence {
            video_id: video_id.into(),
            width,
            height,
            num_frames: masks.len(),
            masks,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn check_pair(pred: &[BinaryMask], gt: &[BinaryMask]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::dim(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::input("cannot evaluate an empty sequence"));
    }
    Ok(())
}

/// J: mean per-frame IoU. Both-empty frames score 1, one-sided empty frames 0.
pub fn region_similarity(pred: &[BinaryMask], gt: &[BinaryMask]) -> Result<f64> {
    check_pair(pred, gt)?;
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        total += p.iou(g)?;
    }
    Ok(total / pred.len() as f64)
}

/// Boundary matching tolerance in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tolerance {
    /// `ceil(0.0075 · image diagonal)`
    Auto,
    #[serde(untagged)]
    Pixels(usize),
}

impl Tolerance {
    pub fn pixels(self, width: usize, height: usize) -> usize {
        match self {
            Tolerance::Pixels(n) => n,
            Tolerance::Auto => {
                let diag = ((width * width + height * height) as f64).sqrt();
                (0.0075 * diag).ceil() as usize
            }
        }
    }
}

impl FromStr for Tolerance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Tolerance::Auto);
        }
        s.parse()
            .map(Tolerance::Pixels)
            .map_err(|_| Error::Config(format!("tolerance must be `auto` or a pixel count, got `{s}`")))
    }
}

/// Boundary F-measure of a single frame.
pub fn frame_contour_accuracy(pred: &BinaryMask, gt: &BinaryMask, radius: usize) -> Result<f64> {
    let pb = pred.boundary();
    let gb = gt.boundary();
    let (np, ng) = (pb.area(), gb.area());
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    if np == 0 || ng == 0 {
        return Ok(0.0);
    }
    let precision = pb.intersection_area(&gb.dilate(radius))? as f64 / np as f64;
    let recall = gb.intersection_area(&pb.dilate(radius))? as f64 / ng as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// F: mean per-frame boundary F-measure.
pub fn contour_accuracy(pred: &[BinaryMask], gt: &[BinaryMask], tolerance: Tolerance) -> Result<f64> {
    check_pair(pred, gt)?;
    let radius = tolerance.pixels(gt[0].width(), gt[0].height());
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        total += frame_contour_accuracy(p, g, radius)?;
    }
    Ok(total / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    pub j: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_video: Vec<VideoScore>,
    pub mean_j: f64,
    pub mean_f: f64,
    pub mean_jf: f64,
}

impl EvalReport {
    pub fn from_scores(per_video: Vec<VideoScore>) -> Self {
        let n = per_video.len().max(1) as f64;
        let mean_j = per_video.iter().map(|v| v.j).sum::<f64>() / n;
        let mean_f = per_video.iter().map(|v| v.f).sum::<f64>() / n;
        EvalReport {
            per_video,
            mean_j,
            mean_f,
            mean_jf: (mean_j + mean_f) / 2.0,
        }
    }

    /// Aligned plain-text table, one row per video plus the mean.
    pub fn to_table(&self) -> String {
        let width = self
            .per_video
            .iter()
            .map(|v| v.video_id.len())
            .chain(std::iter::once(5))
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>7}  {:>7}  {:>7}", "video", "J&F", "J", "F");
        for v in &self.per_video {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}",
                v.video_id,
                (v.j + v.f) / 2.0,
                v.j,
                v.f
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}",
            "mean", self.mean_jf, self.mean_j, self.mean_f
        );
        out
    }
}

/// Scores every predicted video against its ground truth; means are unweighted.
pub fn evaluate(
    predictions: &BTreeMap<String, Vec<BinaryMask>>,
    ground_truth: &BTreeMap<String, Vec<BinaryMask>>,
    tolerance: Tolerance,
) -> Result<EvalReport> {
    let mut scores = Vec::with_capacity(predictions.len());
    for (video, pred) in predictions {
        let gt = ground_truth
            .get(video)
            .ok_or_else(|| Error::input(format!("no ground truth for video `{video}`")))?;
        let j = region_similarity(pred, gt).map_err(|e| e.in_stage("evaluate", video.clone()))?;
        let f = contour_accuracy(pred, gt, tolerance).map_err(|e| e.in_stage("evaluate", video.clone()))?;
        scores.push(VideoScore {
            video_id: video.clone(),
            j,
            f,
        });
    }
    Ok(EvalReport::from_scores(scores))
}

/// Loads every `<video>.json` mask sequence in `dir`, keyed by file stem.
pub fn read_sequence_dir(dir: &Path) -> Result<BTreeMap<String, Vec<BinaryMask>>> {
    let mut out = BTreeMap::new();
    for stem in json_stems(dir)? {
        let seq = MaskSequence::read(&dir.join(format!("{stem}.json")))?;
        out.insert(stem, seq.masks);
    }
    Ok(out)
}
