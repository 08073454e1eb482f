//! Tracklet-language grounding.
//!
//! Per frame, every kept tracklet is pooled from that frame's feature map and
//! scored against the expression by a [`Grounder`]; ensemble members are
//! averaged, frame scores are averaged over time, and the best tracklet wins.

pub mod features;
pub mod model;
pub mod naive;
pub mod transformer;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{pooled_matrix, pooled_tracklet_feature, FeatureMap, TokenFeatures, VideoFeatures};
pub use model::{EncoderLayer, GroundingModel, ModelConfig, Preset};
pub use naive::naive_similarity_grounding;
pub use transformer::{
    assemble_tokens, forward_with_attention, grounding_head, softmax, transformer_forward, transformer_grounding,
};

use crate::error::{Error, Result};
use crate::tracklet::{TrackletId, TrackletSet};

/// Tolerance on per-frame probability rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Anything that turns one frame's `P x D` tracklet features and the
/// expression into a probability per tracklet.
pub trait Grounder: Send + Sync {
    fn score_frame(&self, tracklet_feats: &Array2<f64>, lang: &TokenFeatures) -> Result<Vec<f64>>;
}

/// Cosine-similarity baseline grounder.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveGrounder;

impl Grounder for NaiveGrounder {
    fn score_frame(&self, tracklet_feats: &Array2<f64>, lang: &TokenFeatures) -> Result<Vec<f64>> {
        naive_similarity_grounding(tracklet_feats, lang)
    }
}

impl Grounder for GroundingModel {
    fn score_frame(&self, tracklet_feats: &Array2<f64>, lang: &TokenFeatures) -> Result<Vec<f64>> {
        transformer_grounding(tracklet_feats, lang, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    /// `per_frame[t][p]`, each row a probability vector.
    pub per_frame: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
    pub selected: usize,
}

fn check_probability_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let width = rows
        .first()
        .map(Vec::len)
        .filter(|&p| p > 0)
        .ok_or_else(|| Error::input("score matrix is empty"))?;
    for (t, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::dim(format!(
                "score row {t} has {} entries, expected {width}",
                row.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::input(format!("score row {t} is not a probability vector")));
        }
    }
    Ok(width)
}

/// Temporal mean of per-frame scores and its argmax (smallest index on ties).
pub fn fuse_and_select(per_frame: Vec<Vec<f64>>) -> Result<GroundingResult> {
    let p = check_probability_rows(&per_frame)?;
    let n = per_frame.len() as f64;
    let fused: Vec<f64> = (0..p)
        .map(|j| per_frame.iter().map(|row| row[j]).sum::<f64>() / n)
        .collect();
    let mut selected = 0;
    for (j, &s) in fused.iter().enumerate() {
        if s > fused[selected] {
            selected = j;
        }
    }
    Ok(GroundingResult {
        per_frame,
        fused,
        selected,
    })
}

/// Elementwise mean of several models' `T x P` score matrices.
pub fn ensemble_average(results: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    let first = results
        .first()
        .ok_or_else(|| Error::input("ensemble needs at least one member"))?;
    for r in results {
        check_probability_rows(r)?;
        if r.len() != first.len() || r.iter().zip(first).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::dim(
                "ensemble members produced differently shaped score matrices",
            ));
        }
    }
    let n = results.len() as f64;
    Ok((0..first.len())
        .map(|t| {
            (0..first[t].len())
                .map(|p| results.iter().map(|r| r[t][p]).sum::<f64>() / n)
                .collect()
        })
        .collect())
}

/// Grounding outcome of one video, as written to the result log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoGrounding {
    pub video_id: String,
    /// Frames that were grounded (every `stride`-th frame).
    pub frames: Vec<usize>,
    pub tracklet_ids: Vec<TrackletId>,
    pub tracklet_scores: Vec<f64>,
    pub members: usize,
    pub result: GroundingResult,
    pub selected_id: TrackletId,
}

/// Grounds every tracklet of `set` against the expression on every `stride`-th frame.
pub fn ground_video(
    set: &TrackletSet,
    features: &VideoFeatures,
    lang: &TokenFeatures,
    members: &[&dyn Grounder],
    stride: usize,
) -> Result<VideoGrounding> {
    if stride == 0 {
        return Err(Error::Config("frame stride must be at least 1".into()));
    }
    if members.is_empty() {
        return Err(Error::Config("no grounder configured".into()));
    }
    if set.is_empty() {
        return Err(Error::input("no candidate tracklets to ground"));
    }
    if features.frames.len() != set.num_frames {
        return Err(Error::dim(format!(
            "{} feature frames for a {}-frame video",
            features.frames.len(),
            set.num_frames
        )));
    }
    let frames: Vec<usize> = (0..set.num_frames).step_by(stride).collect();
    let per_member: Vec<Vec<Vec<f64>>> = frames
        .par_iter()
        .map(|&t| {
            let masks: Vec<_> = set.tracklets.iter().map(|tr| &tr.masks[t]).collect();
            let feats = pooled_matrix(&features.frames[t], &masks)?;
            members
                .iter()
                .map(|g| g.score_frame(&feats, lang))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    // per_member is [frame][member][p]; regroup to [member][frame][p]
    let by_member: Vec<Vec<Vec<f64>>> = (0..members.len())
        .map(|m| per_member.iter().map(|f| f[m].clone()).collect())
        .collect();
    let result = fuse_and_select(ensemble_average(&by_member)?)?;
    Ok(VideoGrounding {
        video_id: set.video_id.clone(),
        frames,
        tracklet_ids: set.tracklets.iter().map(|t| t.id).collect(),
        tracklet_scores: set.tracklets.iter().map(|t| t.score()).collect(),
        members: members.len(),
        selected_id: set.tracklets[result.selected].id,
        result,
    })
}
