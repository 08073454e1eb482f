//! Tracklets, tracklet-IoU, tracklet scoring and tracklet-level NMS.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::mask::BinaryMask;

/// Default suppression threshold for [`tracklet_nms`].
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.5;
/// Default number of tracklets kept per video after NMS.
pub const DEFAULT_MAX_KEEP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackletId(pub u64);

impl std::fmt::Display for TrackletId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A mask sequence over the whole video, seeded from one key-frame proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tracklet {
    pub id: TrackletId,
    pub source_frame: usize,
    pub source_model: String,
    pub confidence: f64,
    pub prop_prob: Vec<f64>,
    pub masks: Vec<BinaryMask>,
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl Tracklet {
    pub fn num_frames(&self) -> usize {
        self.masks.len()
    }

    fn validate(&self, width: usize, height: usize, num_frames: usize) -> Result<()> {
        let id = self.id;
        if self.masks.len() != num_frames || self.prop_prob.len() != num_frames {
            return Err(Error::dim(format!(
                "tracklet {id}: {} masks and {} probabilities for {num_frames} frames",
                self.masks.len(),
                self.prop_prob.len()
            )));
        }
        if self.source_frame >= num_frames {
            return Err(Error::input(format!(
                "tracklet {id}: source frame {} out of range",
                self.source_frame
            )));
        }
        if let Some(m) = self.masks.iter().find(|m| m.width() != width || m.height() != height) {
            return Err(Error::dim(format!(
                "tracklet {id}: mask {}x{} in a {width}x{height} video",
                m.width(),
                m.height()
            )));
        }
        if !is_probability(self.confidence) || !self.prop_prob.iter().all(|&p| is_probability(p)) {
            return Err(Error::input(format!("tracklet {id}: probability outside [0, 1]")));
        }
        if self.prop_prob[self.source_frame] != 1.0 {
            return Err(Error::input(format!(
                "tracklet {id}: propagation probability at its key frame must be 1"
            )));
        }
        Ok(())
    }

    /// Detection confidence times the mean propagation probability.
    pub fn score(&self) -> f64 {
        tracklet_score(self)
    }
}

/// All candidate tracklets of one video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackletSet {
    pub video_id: String,
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub tracklets: Vec<Tracklet>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackletSetJson {
    video_id: String,
    width: usize,
    height: usize,
    num_frames: usize,
    tracklets: Vec<Tracklet>,
}

impl<'de> Deserialize<'de> for TrackletSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = TrackletSetJson::deserialize(deserializer)?;
        TrackletSet::new(raw.video_id, raw.width, raw.height, raw.num_frames, raw.tracklets)
            .map_err(serde::de::Error::custom)
    }
}

impl TrackletSet {
    pub fn new(
        video_id: impl Into<String>,
        width: usize,
        height: usize,
        num_frames: usize,
        tracklets: Vec<Tracklet>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || num_frames == 0 {
            return Err(Error::dim(format!(
                "video dims must be positive, got {width}x{height}x{num_frames}"
            )));
        }
        let mut ids = HashSet::new();
        for t in &tracklets {
            t.validate(width, height, num_frames)?;
            if !ids.insert(t.id) {
                return Err(Error::input(format!("duplicate tracklet id {}", t.id)));
            }
        }
        Ok(TrackletSet {
            video_id: video_id.into(),
            width,
            height,
            num_frames,
            tracklets,
        })
    }

    pub fn empty(video_id: impl Into<String>, width: usize, height: usize, num_frames: usize) -> Result<Self> {
        Self::new(video_id, width, height, num_frames, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }

    pub fn get(&self, id: TrackletId) -> Option<&Tracklet> {
        self.tracklets.iter().find(|t| t.id == id)
    }

    fn same_video_dims(&self, other: &TrackletSet) -> bool {
        self.width == other.width && self.height == other.height && self.num_frames == other.num_frames
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Σ_t |p ∩ q| / Σ_t |p ∪ q| over the whole sequence; 1.0 when both are empty everywhere.
pub fn tracklet_iou(p: &Tracklet, q: &Tracklet) -> Result<f64> {
    if p.masks.len() != q.masks.len() {
        return Err(Error::dim(format!(
            "tracklets {} and {} span {} and {} frames",
            p.id,
            q.id,
            p.masks.len(),
            q.masks.len()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (a, b) in p.masks.iter().zip(&q.masks) {
        let (i, u) = a.overlap(b)?;
        inter += i;
        union += u;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn tracklet_score(t: &Tracklet) -> f64 {
    if t.prop_prob.is_empty() {
        return 0.0;
    }
    let mean = t.prop_prob.iter().sum::<f64>() / t.prop_prob.len() as f64;
    t.confidence * mean
}

/// Concatenates tracklet sets from several proposal sources, re-issuing ids `0..n`.
pub fn merge_sources(sets: &[TrackletSet]) -> Result<TrackletSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::input("merge_sources needs at least one set"))?;
    if let Some(bad) = sets.iter().find(|s| !first.same_video_dims(s)) {
        return Err(Error::dim(format!(
            "cannot merge {}x{}x{} with {}x{}x{}",
            first.width, first.height, first.num_frames, bad.width, bad.height, bad.num_frames
        )));
    }
    let tracklets = sets
        .iter()
        .flat_map(|s| s.tracklets.iter().cloned())
        .enumerate()
        .map(|(i, mut t)| {
            t.id = TrackletId(i as u64);
            t
        })
        .collect();
    TrackletSet::new(
        first.video_id.clone(),
        first.width,
        first.height,
        first.num_frames,
        tracklets,
    )
}

/// Greedy NMS ordering: score descending, then smaller id.
pub fn nms_order(a: &Tracklet, b: &Tracklet) -> Ordering {
    b.score()
        .partial_cmp(&a.score())
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

/// Greedy tracklet-level NMS.
///
/// Candidates are visited in [`nms_order`]; each kept tracklet suppresses every
/// remaining candidate with tracklet-IoU `>= iou_threshold`. Stops after
/// `max_keep` tracklets. The result is in selection order.
pub fn tracklet_nms(set: &TrackletSet, iou_threshold: f64, max_keep: usize) -> Result<TrackletSet> {
    if max_keep == 0 {
        return Err(Error::input("max_keep must be at least 1"));
    }
    if !is_probability(iou_threshold) {
        return Err(Error::input(format!("iou threshold {iou_threshold} outside [0, 1]")));
    }
    let mut order: Vec<&Tracklet> = set.tracklets.iter().collect();
    order.sort_by(|a, b| nms_order(a, b));

    let mut suppressed = vec![false; order.len()];
    let mut kept = Vec::new();
    for i in 0..order.len() {
        if kept.len() == max_keep {
            break;
        }
        if suppressed[i] {
            continue;
        }
        kept.push(order[i].clone());
        for j in i + 1..order.len() {
            if !suppressed[j] && tracklet_iou(order[i], order[j])? >= iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    TrackletSet::new(set.video_id.clone(), set.width, set.height, set.num_frames, kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tracklet(id: u64, masks: Vec<BinaryMask>, confidence: f64) -> Tracklet {
        let n = masks.len();
        Tracklet {
            id: TrackletId(id),
            source_frame: 0,
            source_model: "test".into(),
            confidence,
            prop_prob: vec![1.0; n],
            masks,
        }
    }

    fn px(pixels: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_pixels(4, 4, pixels).unwrap()
    }

    #[test]
    fn iou_examples() {
        let p = tracklet(0, vec![px(&[(0, 0), (1, 1)])], 1.0);
        assert_eq!(tracklet_iou(&p, &p).unwrap(), 1.0);

        let q = tracklet(1, vec![px(&[(3, 3)])], 1.0);
        assert_eq!(tracklet_iou(&p, &q).unwrap(), 0.0);

        let p = tracklet(0, vec![px(&[(0, 0), (0, 1)]), px(&[(1, 1)])], 1.0);
        let q = tracklet(1, vec![px(&[(0, 1), (0, 2)]), px(&[(1, 1)])], 1.0);
        assert_eq!(tracklet_iou(&p, &q).unwrap(), 0.5);

        let e = tracklet(2, vec![px(&[]), px(&[])], 1.0);
        assert_eq!(tracklet_iou(&e, &e.clone()).unwrap(), 1.0);
    }

    #[test]
    fn iou_rejects_mismatched_lengths() {
        let p = tracklet(0, vec![px(&[])], 1.0);
        let q = tracklet(1, vec![px(&[]), px(&[])], 1.0);
        assert!(matches!(tracklet_iou(&p, &q), Err(Error::Dimension(_))));
    }

    #[test]
    fn score_examples() {
        let mut t = tracklet(0, vec![px(&[]); 3], 1.0);
        assert_eq!(tracklet_score(&t), 1.0);
        t.confidence = 0.0;
        assert_eq!(tracklet_score(&t), 0.0);
        t.confidence = 0.8;
        t.prop_prob = vec![1.0, 0.5, 0.0];
        assert!((tracklet_score(&t) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn set_validation() {
        let t = tracklet(0, vec![px(&[])], 1.0);
        assert!(TrackletSet::new("v", 4, 4, 1, vec![t.clone(), t.clone()]).is_err());
        assert!(TrackletSet::new("v", 4, 4, 2, vec![t.clone()]).is_err());
        let mut bad = t.clone();
        bad.confidence = 1.5;
        assert!(TrackletSet::new("v", 4, 4, 1, vec![bad]).is_err());
        let mut bad = t.clone();
        bad.prop_prob = vec![0.5];
        assert!(TrackletSet::new("v", 4, 4, 1, vec![bad]).is_err());
    }

    #[test]
    fn merge_examples() {
        let mk = |n: u64| {
            let ts = (0..n).map(|i| tracklet(i, vec![px(&[])], 0.5)).collect();
            TrackletSet::new("v", 4, 4, 1, ts).unwrap()
        };
        let a = mk(3);
        assert_eq!(merge_sources(std::slice::from_ref(&a)).unwrap(), a);
        let mut b = mk(2);
        b.tracklets[0].source_model = "other".into();
        let merged = merge_sources(&[a, b]).unwrap();
        assert_eq!(merged.len(), 5);
        let ids: HashSet<_> = merged.tracklets.iter().map(|t| t.id).collect();
        assert_eq!(ids.len(), 5);
        assert_eq!(merged.tracklets[3].source_model, "other");

        let odd = TrackletSet::empty("w", 4, 4, 2).unwrap();
        assert!(merge_sources(&[mk(1), odd]).is_err());
        assert!(merge_sources(&[]).is_err());
    }

    #[test]
    fn nms_examples() {
        let one = TrackletSet::new("v", 4, 4, 1, vec![tracklet(0, vec![px(&[(0, 0)])], 0.3)]).unwrap();
        assert_eq!(tracklet_nms(&one, 0.5, 10).unwrap().len(), 1);

        let m = vec![px(&[(0, 0), (1, 0)])];
        let dup = TrackletSet::new("v", 4, 4, 1, vec![tracklet(0, m.clone(), 0.8), tracklet(1, m, 0.9)]).unwrap();
        let kept = tracklet_nms(&dup, 0.5, 10).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.tracklets[0].id, TrackletId(1));

        let empty = TrackletSet::empty("v", 4, 4, 1).unwrap();
        assert!(tracklet_nms(&empty, 0.5, 10).unwrap().is_empty());
        assert!(tracklet_nms(&empty, 0.5, 0).is_err());
    }

    #[test]
    fn nms_keeps_top_ten_of_disjoint() {
        let ts: Vec<_> = (0..12)
            .map(|i| {
                let mask = BinaryMask::from_pixels(4, 4, &[(i % 4, i / 4)]).unwrap();
                tracklet(i as u64, vec![mask], (i as f64 + 1.0) / 12.0)
            })
            .collect();
        let set = TrackletSet::new("v", 4, 4, 1, ts).unwrap();
        let kept = tracklet_nms(&set, DEFAULT_NMS_THRESHOLD, DEFAULT_MAX_KEEP).unwrap();
        let ids: Vec<u64> = kept.tracklets.iter().map(|t| t.id.0).collect();
        assert_eq!(ids, vec![11, 10, 9, 8, 7, 6, 5, 4, 3, 2]);
    }

    #[test]
    fn json_round_trip() {
        let set = TrackletSet::new("clip", 4, 4, 2, vec![tracklet(7, vec![px(&[(1, 1)]), px(&[])], 0.5)]).unwrap();
        let s = serde_json::to_string(&set).unwrap();
        assert!(s.starts_with(r#"{"video_id":"clip","width":4,"height":4,"num_frames":2,"tracklets":[{"id":7,"#));
        let back: TrackletSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, set);
    }

    proptest! {
        #[test]
        fn raising_confidence_never_lowers_score(
            c in 0.0f64..1.0,
            bump in 0.0f64..1.0,
            probs in prop::collection::vec(0.0f64..=1.0, 1..8),
        ) {
            let mut t = tracklet(0, vec![px(&[]); probs.len()], c);
            t.prop_prob = probs;
            let before = t.score();
            t.confidence = (c + bump).min(1.0);
            prop_assert!(t.score() >= before);
        }
    }
}
