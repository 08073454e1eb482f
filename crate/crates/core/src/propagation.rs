//! Key-frame sampling and mask propagation.
//!
//! A [`Propagator`] turns one key-frame proposal into a mask for every frame of
//! the video. [`propagate`] enforces the contract every implementation must
//! satisfy (the seed is reproduced at its key frame with probability 1, lost
//! frames degrade to an empty mask with probability 0), and
//! [`build_candidate_set`] runs it over all proposals to get the candidate pool.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::mask::BinaryMask;
use crate::tracklet::{Tracklet, TrackletId, TrackletSet};

/// Default number of key frames per video.
pub const DEFAULT_KEY_FRAMES: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFramePlan {
    pub num_frames: usize,
    pub indices: Vec<usize>,
}

impl KeyFramePlan {
    pub fn contains(&self, frame: usize) -> bool {
        self.indices.binary_search(&frame).is_ok()
    }
}

/// Uniformly spaced key frames: `round(i (T-1) / (K-1))`, or the midpoint when `K == 1`.
pub fn sample_key_frames(num_frames: usize, k: usize) -> Result<KeyFramePlan> {
    if num_frames == 0 {
        return Err(Error::input("cannot sample key frames from an empty video"));
    }
    if k == 0 {
        return Err(Error::input("key frame count must be at least 1"));
    }
    let mut indices: Vec<usize> = if k == 1 {
        vec![num_frames / 2]
    } else {
        let span = num_frames - 1;
        let steps = k - 1;
        // round-half-up in integer arithmetic
        (0..k).map(|i| (2 * i * span + steps) / (2 * steps)).collect()
    };
    indices.dedup();
    Ok(KeyFramePlan { num_frames, indices })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoContext {
    pub video_id: String,
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
}

/// Mask and propagation probability for one frame, or why the target was lost.
pub type FrameOutcome = std::result::Result<(BinaryMask, f64), String>;

/// A video mask propagation model.
///
/// Implementations return one outcome per frame. They are invoked
/// concurrently for different proposals.
pub trait Propagator: Send + Sync {
    fn propagate(&self, seed: &BinaryMask, key: usize, ctx: &VideoContext) -> Vec<FrameOutcome>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedMasks {
    pub masks: Vec<BinaryMask>,
    pub prop_prob: Vec<f64>,
}

/// Runs `propagator` from `seed` at frame `key` in both temporal directions.
pub fn propagate(
    seed: &BinaryMask,
    key: usize,
    ctx: &VideoContext,
    propagator: &dyn Propagator,
) -> Result<PropagatedMasks> {
    if key >= ctx.num_frames {
        return Err(Error::input(format!(
            "key frame {key} outside video of {} frames",
            ctx.num_frames
        )));
    }
    if seed.width() != ctx.width || seed.height() != ctx.height {
        return Err(Error::dim(format!(
            "seed mask {}x{} in a {}x{} video",
            seed.width(),
            seed.height(),
            ctx.width,
            ctx.height
        )));
    }
    let mut outcomes = propagator.propagate(seed, key, ctx).into_iter();
    let empty = BinaryMask::empty(ctx.width, ctx.height)?;
    let mut masks = Vec::with_capacity(ctx.num_frames);
    let mut prop_prob = Vec::with_capacity(ctx.num_frames);
    for t in 0..ctx.num_frames {
        let outcome = outcomes.next();
        if t == key {
            masks.push(seed.clone());
            prop_prob.push(1.0);
            continue;
        }
        match outcome {
            Some(Ok((mask, p)))
                if mask.width() == ctx.width && mask.height() == ctx.height && (0.0..=1.0).contains(&p) =>
            {
                masks.push(mask);
                prop_prob.push(p);
            }
            other => {
                if let Some(Err(reason)) = other {
                    log::debug!("video={} key={key} frame={t} propagation lost: {reason}", ctx.video_id);
                }
                masks.push(empty.clone());
                prop_prob.push(0.0);
            }
        }
    }
    Ok(PropagatedMasks { masks, prop_prob })
}

/// One instance-segmentation candidate on a key frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub id: TrackletId,
    pub key_frame: usize,
    pub source_model: String,
    pub confidence: f64,
    pub mask: BinaryMask,
}

/// Proposals of one video. Serialized in the tracklet-set schema with masks
/// present only at each entry's `source_frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    pub video_id: String,
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub proposals: Vec<Proposal>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalEntryJson {
    id: TrackletId,
    source_frame: usize,
    source_model: String,
    confidence: f64,
    #[serde(default)]
    prop_prob: Vec<f64>,
    masks: Vec<Option<BinaryMask>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalSetJson {
    video_id: String,
    width: usize,
    height: usize,
    num_frames: usize,
    tracklets: Vec<ProposalEntryJson>,
}

impl ProposalSet {
    pub fn context(&self) -> VideoContext {
        VideoContext {
            video_id: self.video_id.clone(),
            width: self.width,
            height: self.height,
            num_frames: self.num_frames,
        }
    }

    /// Proposals whose key frame is in `plan`, in their original order.
    pub fn restricted_to(&self, plan: &KeyFramePlan) -> ProposalSet {
        ProposalSet {
            proposals: self
                .proposals
                .iter()
                .filter(|p| plan.contains(p.key_frame))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    fn to_json(&self) -> ProposalSetJson {
        let tracklets = self
            .proposals
            .iter()
            .map(|p| {
                let mut masks = vec![None; self.num_frames];
                masks[p.key_frame] = Some(p.mask.clone());
                let mut prop_prob = vec![0.0; self.num_frames];
                prop_prob[p.key_frame] = 1.0;
                ProposalEntryJson {
                    id: p.id,
                    source_frame: p.key_frame,
                    source_model: p.source_model.clone(),
                    confidence: p.confidence,
                    prop_prob,
                    masks,
                }
            })
            .collect();
        ProposalSetJson {
            video_id: self.video_id.clone(),
            width: self.width,
            height: self.height,
            num_frames: self.num_frames,
            tracklets,
        }
    }

    fn from_json(raw: ProposalSetJson) -> Result<Self> {
        let mut proposals = Vec::with_capacity(raw.tracklets.len());
        for entry in raw.tracklets {
            let id = entry.id;
            if entry.masks.len() != raw.num_frames || entry.source_frame >= raw.num_frames {
                return Err(Error::input(format!(
                    "proposal {id}: mask list does not cover {} frames",
                    raw.num_frames
                )));
            }
            let mask = entry
                .masks
                .into_iter()
                .nth(entry.source_frame)
                .flatten()
                .ok_or_else(|| Error::input(format!("proposal {id}: no mask at its source frame")))?;
            if mask.width() != raw.width || mask.height() != raw.height {
                return Err(Error::dim(format!("proposal {id}: mask size does not match video")));
            }
            if !(0.0..=1.0).contains(&entry.confidence) {
                return Err(Error::input(format!("proposal {id}: confidence outside [0, 1]")));
            }
            proposals.push(Proposal {
                id,
                key_frame: entry.source_frame,
                source_model: entry.source_model,
                confidence: entry.confidence,
                mask,
            });
        }
        Ok(ProposalSet {
            video_id: raw.video_id,
            width: raw.width,
            height: raw.height,
            num_frames: raw.num_frames,
            proposals,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(read_json(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_json())
    }
}

/// Propagates every proposal into a full-length tracklet.
///
/// Every proposal must sit on a frame of `plan`; the output keeps proposal
/// order and ids, so `|output| == |proposals|`.
pub fn build_candidate_set(
    plan: &KeyFramePlan,
    proposals: &ProposalSet,
    propagator: &dyn Propagator,
) -> Result<TrackletSet> {
    let ctx = proposals.context();
    if plan.num_frames != ctx.num_frames {
        return Err(Error::dim(format!(
            "key-frame plan covers {} frames, video has {}",
            plan.num_frames, ctx.num_frames
        )));
    }
    if let Some(p) = proposals.proposals.iter().find(|p| !plan.contains(p.key_frame)) {
        return Err(Error::input(format!(
            "proposal {} sits on frame {}, which is not a planned key frame",
            p.id, p.key_frame
        )));
    }
    let tracklets = proposals
        .proposals
        .par_iter()
        .map(|p| {
            let out = propagate(&p.mask, p.key_frame, &ctx, propagator)?;
            Ok(Tracklet {
                id: p.id,
                source_frame: p.key_frame,
                source_model: p.source_model.clone(),
                confidence: p.confidence,
                prop_prob: out.prop_prob,
                masks: out.masks,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TrackletSet::new(ctx.video_id, ctx.width, ctx.height, ctx.num_frames, tracklets)
}

/// Replicates the seed on every frame: the no-propagation baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticPropagator;

impl Propagator for StaticPropagator {
    fn propagate(&self, seed: &BinaryMask, _key: usize, ctx: &VideoContext) -> Vec<FrameOutcome> {
        (0..ctx.num_frames).map(|_| Ok((seed.clone(), 1.0))).collect()
    }
}

/// Ground-truth motion of one scene object, used to identify which object a seed belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleObject {
    pub velocity: (i64, i64),
    pub masks: Vec<BinaryMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleMotion {
    /// Every seed moves with the same per-frame translation.
    Uniform((i64, i64)),
    /// A seed follows the object it overlaps most at its key frame; seeds
    /// touching no object stay put.
    PerObject(Vec<OracleObject>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleNoise {
    /// Probability of flipping each pixel of the one-pixel band around the mask edge.
    pub flip_prob: f64,
    /// Propagation probability is `decay^|t - key|`.
    pub decay: f64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        OracleNoise {
            flip_prob: 0.0,
            decay: 1.0,
        }
    }
}

impl OracleNoise {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) || !(0.0..=1.0).contains(&self.decay) {
            return Err(Error::input("oracle noise parameters must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Stand-in for a learned propagation model on synthetic scenes with known motion.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOraclePropagator {
    pub motion: OracleMotion,
    pub noise: OracleNoise,
    pub seed: u64,
}

impl SyntheticOraclePropagator {
    pub fn uniform(velocity: (i64, i64)) -> Self {
        SyntheticOraclePropagator {
            motion: OracleMotion::Uniform(velocity),
            noise: OracleNoise::default(),
            seed: 0,
        }
    }

    pub fn per_object(objects: Vec<OracleObject>, noise: OracleNoise, seed: u64) -> Self {
        SyntheticOraclePropagator {
            motion: OracleMotion::PerObject(objects),
            noise,
            seed,
        }
    }

    fn velocity_for(&self, seed: &BinaryMask, key: usize) -> (i64, i64) {
        match &self.motion {
            OracleMotion::Uniform(v) => *v,
            OracleMotion::PerObject(objects) => {
                let mut best = (0usize, (0, 0));
                for obj in objects {
                    let overlap = obj
                        .masks
                        .get(key)
                        .and_then(|m| m.intersection_area(seed).ok())
                        .unwrap_or(0);
                    if overlap > best.0 {
                        best = (overlap, obj.velocity);
                    }
                }
                best.1
            }
        }
    }

    fn frame_rng(&self, seed: &BinaryMask, key: usize, frame: usize) -> ChaCha8Rng {
        let mut h = mix(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        h = mix(h ^ key as u64);
        h = mix(h ^ frame as u64);
        for &r in seed.runs() {
            h = mix(h ^ r as u64);
        }
        ChaCha8Rng::seed_from_u64(h)
    }
}

/// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Flips each pixel of the edge band (inner boundary plus the outer ring) with probability `p`.
pub fn flip_edge_pixels(mask: &BinaryMask, p: f64, rng: &mut impl Rng) -> BinaryMask {
    if p <= 0.0 || mask.is_empty() {
        return mask.clone();
    }
    let inner = mask.boundary();
    let outer = mask.dilate(1).difference(mask).expect("dilation keeps dimensions");
    let band = inner.union(&outer).expect("same dimensions");
    let mut grid = mask.decode();
    let w = mask.width();
    for (x, y) in band.pixels() {
        if rng.random_bool(p) {
            grid[y * w + x] = !grid[y * w + x];
        }
    }
    BinaryMask::encode(w, mask.height(), &grid).expect("dimensions unchanged")
}

impl Propagator for SyntheticOraclePropagator {
    fn propagate(&self, seed: &BinaryMask, key: usize, ctx: &VideoContext) -> Vec<FrameOutcome> {
        let (vx, vy) = self.velocity_for(seed, key);
        (0..ctx.num_frames)
            .map(|t| {
                let dt = t as i64 - key as i64;
                let moved = seed.translate(vx * dt, vy * dt);
                if dt == 0 {
                    return Ok((moved, 1.0));
                }
                let mut rng = self.frame_rng(seed, key, t);
                let mask = flip_edge_pixels(&moved, self.noise.flip_prob, &mut rng);
                Ok((mask, self.noise.decay.powi(dt.unsigned_abs() as i32)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracklet::{tracklet_iou, tracklet_nms};

    fn ctx(w: usize, h: usize, t: usize) -> VideoContext {
        VideoContext {
            video_id: "v".into(),
            width: w,
            height: h,
            num_frames: t,
        }
    }

    #[test]
    fn key_frame_examples() {
        assert_eq!(sample_key_frames(7, 7).unwrap().indices, vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(sample_key_frames(10, 1).unwrap().indices, vec![5]);
        assert_eq!(sample_key_frames(10, 4).unwrap().indices, vec![0, 3, 6, 9]);
        assert_eq!(sample_key_frames(3, 7).unwrap().indices, vec![0, 1, 2]);
        assert_eq!(sample_key_frames(1, 7).unwrap().indices, vec![0]);
        assert!(sample_key_frames(0, 3).is_err());
        assert!(sample_key_frames(5, 0).is_err());
    }

    #[test]
    fn key_frames_cover_both_ends() {
        for t in 2..40 {
            for k in 2..12 {
                let plan = sample_key_frames(t, k).unwrap();
                assert_eq!(plan.indices[0], 0);
                assert_eq!(*plan.indices.last().unwrap(), t - 1);
                assert!(plan.indices.windows(2).all(|w| w[0] < w[1]));
                assert_eq!(plan.indices.len(), k.min(t));
            }
        }
    }

    #[test]
    fn single_frame_video() {
        let seed = BinaryMask::rect(6, 6, 1, 1, 2, 2).unwrap();
        let out = propagate(&seed, 0, &ctx(6, 6, 1), &SyntheticOraclePropagator::uniform((1, 0))).unwrap();
        assert_eq!(out.masks, vec![seed]);
        assert_eq!(out.prop_prob, vec![1.0]);
    }

    #[test]
    fn zero_motion_replicates_seed() {
        let seed = BinaryMask::rect(6, 6, 1, 1, 2, 3).unwrap();
        let out = propagate(&seed, 2, &ctx(6, 6, 5), &SyntheticOraclePropagator::uniform((0, 0))).unwrap();
        assert!(out.masks.iter().all(|m| *m == seed));
        assert!(out.prop_prob.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn translation_moves_square() {
        let seed = BinaryMask::rect(8, 8, 2, 2, 2, 2).unwrap();
        let out = propagate(&seed, 0, &ctx(8, 8, 3), &SyntheticOraclePropagator::uniform((1, 0))).unwrap();
        for (t, m) in out.masks.iter().enumerate() {
            assert_eq!(*m, BinaryMask::rect(8, 8, 2 + t, 2, 2, 2).unwrap());
        }
    }

    #[test]
    fn backward_propagation_from_middle_key() {
        let seed = BinaryMask::rect(8, 8, 4, 2, 2, 2).unwrap();
        let out = propagate(&seed, 2, &ctx(8, 8, 4), &SyntheticOraclePropagator::uniform((1, 0))).unwrap();
        let xs: Vec<_> = out.masks.iter().map(|m| m.pixels().next().unwrap().0).collect();
        assert_eq!(xs, vec![2, 3, 4, 5]);
    }

    struct Flaky;

    impl Propagator for Flaky {
        fn propagate(&self, seed: &BinaryMask, _key: usize, ctx: &VideoContext) -> Vec<FrameOutcome> {
            (0..ctx.num_frames)
                .map(|t| match t % 3 {
                    0 => Ok((seed.clone(), 0.7)),
                    1 => Err("lost".into()),
                    _ => Ok((seed.clone(), 7.0)),
                })
                .take(ctx.num_frames - 1)
                .collect()
        }
    }

    #[test]
    fn contract_enforced_for_misbehaving_propagator() {
        let seed = BinaryMask::rect(5, 5, 0, 0, 2, 2).unwrap();
        let out = propagate(&seed, 1, &ctx(5, 5, 5), &Flaky).unwrap();
        assert_eq!(out.masks.len(), 5);
        assert_eq!(out.prop_prob, vec![0.7, 1.0, 0.0, 0.7, 0.0]);
        assert_eq!(out.masks[1], seed);
        assert!(out.masks[2].is_empty() && out.masks[4].is_empty());
    }

    #[test]
    fn propagate_validates_inputs() {
        let seed = BinaryMask::rect(5, 5, 0, 0, 2, 2).unwrap();
        let p = StaticPropagator;
        assert!(propagate(&seed, 5, &ctx(5, 5, 5), &p).is_err());
        assert!(propagate(&seed, 0, &ctx(6, 5, 5), &p).is_err());
    }

    #[test]
    fn noisy_oracle_decays_and_is_deterministic() {
        let seed = BinaryMask::rect(16, 16, 4, 4, 6, 6).unwrap();
        let oracle = SyntheticOraclePropagator {
            motion: OracleMotion::Uniform((1, 0)),
            noise: OracleNoise {
                flip_prob: 0.3,
                decay: 0.9,
            },
            seed: 11,
        };
        let a = propagate(&seed, 1, &ctx(16, 16, 4), &oracle).unwrap();
        let b = propagate(&seed, 1, &ctx(16, 16, 4), &oracle).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.masks[1], seed);
        let expect = [0.9, 1.0, 0.9, 0.81];
        for (p, e) in a.prop_prob.iter().zip(expect) {
            assert!((p - e).abs() < 1e-12);
        }
        assert_ne!(a.masks[2], seed.translate(1, 0));
    }

    fn proposal(id: u64, key: usize, mask: BinaryMask) -> Proposal {
        Proposal {
            id: TrackletId(id),
            key_frame: key,
            source_model: "seg".into(),
            confidence: 0.9,
            mask,
        }
    }

    #[test]
    fn candidate_set_cardinality() {
        let plan = sample_key_frames(6, 2).unwrap();
        let empty = ProposalSet {
            video_id: "v".into(),
            width: 8,
            height: 8,
            num_frames: 6,
            proposals: vec![],
        };
        assert!(build_candidate_set(&plan, &empty, &StaticPropagator)
            .unwrap()
            .is_empty());

        let mut props = empty.clone();
        for (i, key) in [0, 0, 0, 5, 5, 5].into_iter().enumerate() {
            props
                .proposals
                .push(proposal(i as u64, key, BinaryMask::rect(8, 8, i, 0, 1, 1).unwrap()));
        }
        assert_eq!(build_candidate_set(&plan, &props, &StaticPropagator).unwrap().len(), 6);

        props.proposals.push(proposal(9, 3, BinaryMask::empty(8, 8).unwrap()));
        assert!(build_candidate_set(&plan, &props, &StaticPropagator).is_err());
    }

    #[test]
    fn same_object_from_two_key_frames_collapses() {
        let (w, h, t) = (24, 24, 8);
        let velocity = (1, 1);
        let gt: Vec<_> = (0..t)
            .map(|f| BinaryMask::rect(w, h, 2 + f, 3 + f, 4, 4).unwrap())
            .collect();
        let other: Vec<_> = (0..t).map(|_| BinaryMask::rect(w, h, 18, 2, 3, 3).unwrap()).collect();
        let oracle = SyntheticOraclePropagator::per_object(
            vec![
                OracleObject {
                    velocity,
                    masks: gt.clone(),
                },
                OracleObject {
                    velocity: (0, 0),
                    masks: other.clone(),
                },
            ],
            OracleNoise::default(),
            0,
        );
        let plan = sample_key_frames(t, 2).unwrap();
        let props = ProposalSet {
            video_id: "v".into(),
            width: w,
            height: h,
            num_frames: t,
            proposals: vec![
                proposal(0, 0, gt[0].clone()),
                proposal(1, 7, gt[7].clone()),
                proposal(2, 0, other[0].clone()),
                proposal(3, 7, other[7].clone()),
            ],
        };
        let set = build_candidate_set(&plan, &props, &oracle).unwrap();
        assert_eq!(tracklet_iou(&set.tracklets[0], &set.tracklets[1]).unwrap(), 1.0);
        assert_eq!(set.tracklets[0].masks, gt);
        let kept = tracklet_nms(&set, 0.5, 10).unwrap();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn proposal_json_round_trip() {
        let props = ProposalSet {
            video_id: "v".into(),
            width: 4,
            height: 3,
            num_frames: 3,
            proposals: vec![proposal(4, 1, BinaryMask::rect(4, 3, 1, 1, 2, 1).unwrap())],
        };
        let json = serde_json::to_string(&props.to_json()).unwrap();
        assert!(json.contains(r#""masks":[null,{"size":[3,4],"counts":[4,1,2,1,4]},null]"#));
        let back = ProposalSet::from_json(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, props);
    }
}
