//! Deterministic synthetic benchmark: moving attributed shapes, a templated
//! referring expression with a known referent, attribute-coded features and
//! key-frame proposals.
//!
//! Feature channels are laid out as `[colors | shapes | motion buckets | zero
//! padding]`; a language token is the one-hot vector of the attribute it
//! names, so visual and linguistic features share a coordinate system.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::{FeatureMap, TokenFeatures, VideoFeatures};
use crate::io::{read_json, write_json};
use crate::mask::BinaryMask;
use crate::metrics::MaskSequence;
use crate::propagation::{
    flip_edge_pixels, OracleNoise, OracleObject, Proposal, ProposalSet, SyntheticOraclePropagator,
};
use crate::tracklet::TrackletId;

pub const MAX_OBJECTS: usize = 5;
pub const NUM_SHAPES: usize = 3;
/// Eight compass sectors plus "static".
pub const NUM_MOTION_BUCKETS: usize = 9;

const COLOR_NAMES: [&str; 8] = ["red", "green", "blue", "yellow", "purple", "orange", "cyan", "white"];
const MOTION_NAMES: [&str; NUM_MOTION_BUCKETS] = [
    "static",
    "right",
    "up-right",
    "up",
    "up-left",
    "left",
    "down-left",
    "down",
    "down-right",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Disk,
    Triangle,
}

impl Shape {
    const ALL: [Shape; NUM_SHAPES] = [Shape::Square, Shape::Disk, Shape::Triangle];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Disk => "disk",
            Shape::Triangle => "triangle",
        }
    }

    /// Whether box-local pixel `(i, j)` of a `size x size` box is covered.
    pub fn covers(self, i: usize, j: usize, size: usize) -> bool {
        let (ci, cj, s) = (
            (2 * i + 1) as i64 - size as i64,
            (2 * j + 1) as i64 - size as i64,
            size as i64,
        );
        match self {
            Shape::Square => true,
            Shape::Disk => ci * ci + cj * cj <= s * s,
            // apex up, base on the bottom row
            Shape::Triangle => ci.abs() <= (2 * j + 1) as i64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    /// Every distractor shares at least one attribute with the referent.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneNoise {
    /// Edge-pixel flip probability applied to every proposal mask.
    pub proposal_flip_prob: f64,
    pub propagation: OracleNoise,
    /// Low-confidence clutter proposals per frame.
    pub spurious_per_frame: usize,
    /// Proposal confidence is drawn uniformly from this range.
    pub confidence: [f64; 2],
}

impl Default for SceneNoise {
    fn default() -> Self {
        SceneNoise {
            proposal_flip_prob: 0.0,
            propagation: OracleNoise::default(),
            spurious_per_frame: 0,
            confidence: [0.7, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub colors: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub max_speed: i64,
    /// Pixels per feature cell along each axis.
    pub feature_stride: usize,
    pub feature_dim: usize,
    pub difficulty: Difficulty,
    pub noise: SceneNoise,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 64,
            height: 64,
            num_frames: 12,
            min_objects: 2,
            max_objects: 5,
            colors: 4,
            min_size: 6,
            max_size: 12,
            max_speed: 2,
            feature_stride: 4,
            feature_dim: 64,
            difficulty: Difficulty::Easy,
            noise: SceneNoise::default(),
        }
    }
}

impl SynthConfig {
    /// Hard scenes with noisy proposals and propagation.
    pub fn hard_noisy() -> Self {
        SynthConfig {
            difficulty: Difficulty::Hard,
            noise: SceneNoise {
                proposal_flip_prob: 0.15,
                propagation: OracleNoise {
                    flip_prob: 0.25,
                    decay: 0.95,
                },
                spurious_per_frame: 2,
                confidence: [0.5, 1.0],
            },
            ..SynthConfig::default()
        }
    }

    pub fn attr_dims(&self) -> usize {
        self.colors + NUM_SHAPES + NUM_MOTION_BUCKETS
    }

    pub fn feature_grid(&self) -> (usize, usize) {
        (
            (self.width / self.feature_stride).max(1),
            (self.height / self.feature_stride).max(1),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 || self.num_frames == 0 {
            return bad("scene dimensions must be positive".into());
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects || self.max_objects > MAX_OBJECTS {
            return bad(format!(
                "object count range must satisfy 1 <= min <= max <= {MAX_OBJECTS}, got {}..={}",
                self.min_objects, self.max_objects
            ));
        }
        if self.colors == 0 || self.colors > COLOR_NAMES.len() {
            return bad(format!("colors must be in 1..={}", COLOR_NAMES.len()));
        }
        if self.min_size == 0 || self.min_size > self.max_size || self.max_size > self.width.min(self.height) {
            return bad("object size range must fit inside the frame".into());
        }
        if self.max_speed < 0 {
            return bad("max_speed must be non-negative".into());
        }
        if self.feature_stride == 0 {
            return bad("feature_stride must be positive".into());
        }
        if self.feature_dim < self.attr_dims() {
            return bad(format!(
                "feature_dim {} is smaller than the {} attribute channels",
                self.feature_dim,
                self.attr_dims()
            ));
        }
        let [lo, hi] = self.noise.confidence;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return bad("confidence range must satisfy 0 <= lo <= hi <= 1".into());
        }
        if !(0.0..=1.0).contains(&self.noise.proposal_flip_prob) {
            return bad("proposal_flip_prob must lie in [0, 1]".into());
        }
        self.noise
            .propagation
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Motion bucket of an integer velocity: 0 for static, else 1 + compass sector
/// (counter-clockwise from "right", image y pointing down).
pub fn motion_bucket(velocity: (i64, i64)) -> usize {
    let (vx, vy) = velocity;
    if vx == 0 && vy == 0 {
        return 0;
    }
    let angle = (-vy as f64).atan2(vx as f64);
    let sector = (angle / std::f64::consts::FRAC_PI_4).round() as i64;
    1 + sector.rem_euclid(8) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: usize,
    pub size: usize,
    /// Top-left corner of the shape's bounding box at frame 0.
    pub start: (i64, i64),
    pub velocity: (i64, i64),
}

impl SceneObject {
    pub fn motion(&self) -> usize {
        motion_bucket(self.velocity)
    }

    fn attributes(&self) -> [usize; 3] {
        [self.color, self.shape.index(), self.motion()]
    }

    pub fn position(&self, frame: usize) -> (i64, i64) {
        let t = frame as i64;
        (self.start.0 + self.velocity.0 * t, self.start.1 + self.velocity.1 * t)
    }

    /// Rendered mask at `frame`, clipped at the borders.
    pub fn mask(&self, width: usize, height: usize, frame: usize) -> BinaryMask {
        let (x0, y0) = self.position(frame);
        let s = self.size as i64;
        BinaryMask::from_fn(width, height, |x, y| {
            let (i, j) = (x as i64 - x0, y as i64 - y0);
            i >= 0 && j >= 0 && i < s && j < s && self.shape.covers(i as usize, j as usize, self.size)
        })
    }

    /// Attribute vector in channel coordinates for a scene with `colors` colors.
    pub fn attribute_channels(&self, colors: usize) -> [usize; 3] {
        [
            self.color,
            colors + self.shape.index(),
            colors + NUM_SHAPES + self.motion(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Color,
    Shape,
    Motion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expression {
    pub attributes: Vec<Attribute>,
    /// Token ids, which are feature channel indices.
    pub tokens: Vec<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub video_id: String,
    pub seed: u64,
    pub config: SynthConfig,
    pub objects: Vec<SceneObject>,
    pub referent_index: usize,
    pub expression: Expression,
}

impl Scene {
    pub fn object_masks(&self, index: usize) -> Vec<BinaryMask> {
        let c = &self.config;
        (0..c.num_frames)
            .map(|t| self.objects[index].mask(c.width, c.height, t))
            .collect()
    }

    pub fn referent_masks(&self) -> Vec<BinaryMask> {
        self.object_masks(self.referent_index)
    }

    pub fn ground_truth(&self) -> Result<MaskSequence> {
        MaskSequence::new(
            self.video_id.clone(),
            self.config.width,
            self.config.height,
            self.referent_masks(),
        )
    }

    /// Oracle propagator following this scene's true motion.
    pub fn oracle_propagator(&self, seed: u64) -> SyntheticOraclePropagator {
        let objects = (0..self.objects.len())
            .map(|i| OracleObject {
                velocity: self.objects[i].velocity,
                masks: self.object_masks(i),
            })
            .collect();
        SyntheticOraclePropagator::per_object(objects, self.config.noise.propagation, seed ^ self.seed)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn attribute_value(obj: &SceneObject, attr: Attribute) -> usize {
    match attr {
        Attribute::Color => obj.color,
        Attribute::Shape => obj.shape.index(),
        Attribute::Motion => obj.motion(),
    }
}

const ATTRIBUTE_SUBSETS: [&[Attribute]; 7] = [
    &[Attribute::Color],
    &[Attribute::Shape],
    &[Attribute::Motion],
    &[Attribute::Color, Attribute::Shape],
    &[Attribute::Color, Attribute::Motion],
    &[Attribute::Shape, Attribute::Motion],
    &[Attribute::Color, Attribute::Shape, Attribute::Motion],
];

fn build_expression(
    objects: &[SceneObject],
    referent: usize,
    colors: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Expression> {
    let target = &objects[referent];
    let unique = |attrs: &[Attribute]| {
        objects.iter().enumerate().all(|(i, o)| {
            i == referent
                || attrs
                    .iter()
                    .any(|&a| attribute_value(o, a) != attribute_value(target, a))
        })
    };
    let candidates: Vec<&[Attribute]> = ATTRIBUTE_SUBSETS.iter().copied().filter(|s| unique(s)).collect();
    let smallest = candidates.iter().map(|s| s.len()).min()?;
    let minimal: Vec<&[Attribute]> = candidates.into_iter().filter(|s| s.len() == smallest).collect();
    let attrs = minimal[rng.random_range(0..minimal.len())].to_vec();

    let channels = target.attribute_channels(colors);
    let mut tokens = Vec::new();
    let mut words = vec!["the".to_string()];
    if attrs.contains(&Attribute::Color) {
        tokens.push(channels[0]);
        words.push(COLOR_NAMES[target.color].to_string());
    }
    let moving = attrs.contains(&Attribute::Motion);
    if moving && target.motion() == 0 {
        words.push("static".to_string());
    }
    if attrs.contains(&Attribute::Shape) {
        tokens.push(channels[1]);
        words.push(target.shape.name().to_string());
    } else {
        words.push("object".to_string());
    }
    if moving {
        tokens.push(channels[2]);
        if target.motion() != 0 {
            words.push(format!("moving {}", MOTION_NAMES[target.motion()]));
        }
    }
    Some(Expression {
        attributes: attrs,
        tokens,
        text: words.join(" "),
    })
}

/// Position range keeping a box of `size` inside `[0, extent)` for all frames.
fn start_range(extent: usize, size: usize, v: i64, frames: usize) -> Option<(i64, i64)> {
    let travel = v * (frames as i64 - 1);
    let lo = (-travel).max(0);
    let hi = extent as i64 - size as i64 - travel.max(0);
    (lo <= hi).then_some((lo, hi))
}

fn boxes_clear(a: &SceneObject, b: &SceneObject, frames: usize) -> bool {
    (0..frames).all(|t| {
        let (ax, ay) = a.position(t);
        let (bx, by) = b.position(t);
        let (sa, sb) = (a.size as i64, b.size as i64);
        // one pixel of clearance between bounding boxes
        ax + sa < bx || bx + sb < ax || ay + sa < by || by + sb < ay
    })
}

fn random_object(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Option<SceneObject> {
    let size = rng.random_range(config.min_size..=config.max_size);
    let speed = config.max_speed;
    let velocity = (rng.random_range(-speed..=speed), rng.random_range(-speed..=speed));
    let (xlo, xhi) = start_range(config.width, size, velocity.0, config.num_frames)?;
    let (ylo, yhi) = start_range(config.height, size, velocity.1, config.num_frames)?;
    Some(SceneObject {
        shape: Shape::ALL[rng.random_range(0..NUM_SHAPES)],
        color: rng.random_range(0..config.colors),
        size,
        start: (rng.random_range(xlo..=xhi), rng.random_range(ylo..=yhi)),
        velocity,
    })
}

const OBJECT_ATTEMPTS: usize = 400;
const SCENE_ATTEMPTS: usize = 50;

/// Generates one scene; identical `(config, seed)` always gives the identical scene.
pub fn generate_scene(config: &SynthConfig, seed: u64, video_id: impl Into<String>) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(config.min_objects..=config.max_objects);
    for _ in 0..SCENE_ATTEMPTS {
        let mut objects: Vec<SceneObject> = Vec::with_capacity(count);
        for _ in 0..OBJECT_ATTEMPTS {
            if objects.len() == count {
                break;
            }
            let Some(candidate) = random_object(config, &mut rng) else {
                continue;
            };
            let attrs = candidate.attributes();
            let distinct = objects.iter().all(|o| o.attributes() != attrs);
            // in hard scenes object 0 is the referent and the rest must resemble it
            let resembles = objects.first().is_none_or(|r| {
                config.difficulty == Difficulty::Easy || r.attributes().iter().zip(&attrs).any(|(a, b)| a == b)
            });
            let clear = objects.iter().all(|o| boxes_clear(o, &candidate, config.num_frames));
            if distinct && resembles && clear {
                objects.push(candidate);
            }
        }
        if objects.len() < count {
            continue;
        }
        let referent_slot = rng.random_range(0..count);
        objects.swap(0, referent_slot);
        if let Some(expression) = build_expression(&objects, referent_slot, config.colors, &mut rng) {
            return Ok(Scene {
                video_id: video_id.into(),
                seed,
                config: config.clone(),
                objects,
                referent_index: referent_slot,
                expression,
            });
        }
    }
    Err(Error::Config(format!(
        "could not place {count} objects with unique referring attributes; \
         use more colors, larger frames or fewer objects"
    )))
}

/// Per-frame attribute feature maps and the expression's token features.
pub fn attribute_features(scene: &Scene) -> Result<(VideoFeatures, TokenFeatures)> {
    let c = &scene.config;
    if c.feature_dim < c.attr_dims() {
        return Err(Error::dim(format!(
            "feature_dim {} cannot hold {} attribute channels",
            c.feature_dim,
            c.attr_dims()
        )));
    }
    let (gw, gh) = c.feature_grid();
    let mut frames = Vec::with_capacity(c.num_frames);
    for t in 0..c.num_frames {
        let mut fmap = FeatureMap::zeros(gw, gh, c.feature_dim)?;
        for obj in &scene.objects {
            let cells = obj.mask(c.width, c.height, t).downsample_to_grid(gw, gh)?;
            let channels = obj.attribute_channels(c.colors);
            for cy in 0..gh {
                for cx in 0..gw {
                    let w = cells.get(cx, cy);
                    if w > 0.0 {
                        let cell = fmap.cell_mut(cx, cy);
                        for &ch in &channels {
                            cell[ch] += w;
                        }
                    }
                }
            }
        }
        frames.push(fmap);
    }
    let tokens = &scene.expression.tokens;
    let mut lang = Array2::zeros((tokens.len(), c.feature_dim));
    for (row, &tok) in tokens.iter().enumerate() {
        lang[[row, tok]] = 1.0;
    }
    Ok((VideoFeatures { frames }, TokenFeatures::new(lang)?))
}

/// Key-frame proposals on every frame: one per visible object plus clutter.
pub fn scene_proposals(scene: &Scene) -> Result<ProposalSet> {
    let c = &scene.config;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x005e_edf9_1e55);
    let [lo, hi] = c.noise.confidence;
    let mut proposals = Vec::new();
    let mut next_id = 0u64;
    for t in 0..c.num_frames {
        for obj in &scene.objects {
            let mask = obj.mask(c.width, c.height, t);
            if mask.is_empty() {
                continue;
            }
            let mask = flip_edge_pixels(&mask, c.noise.proposal_flip_prob, &mut rng);
            let confidence = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            proposals.push(Proposal {
                id: TrackletId(next_id),
                key_frame: t,
                source_model: "synthetic-instance".into(),
                confidence,
                mask,
            });
            next_id += 1;
        }
        for _ in 0..c.noise.spurious_per_frame {
            let (w, h) = (rng.random_range(2..=5usize), rng.random_range(2..=5usize));
            let x = rng.random_range(0..c.width.saturating_sub(w).max(1));
            let y = rng.random_range(0..c.height.saturating_sub(h).max(1));
            proposals.push(Proposal {
                id: TrackletId(next_id),
                key_frame: t,
                source_model: "synthetic-clutter".into(),
                confidence: rng.random_range(0.05..=0.4),
                mask: BinaryMask::rect(c.width, c.height, x, y, w, h)?,
            });
            next_id += 1;
        }
    }
    Ok(ProposalSet {
        video_id: scene.video_id.clone(),
        width: c.width,
        height: c.height,
        num_frames: c.num_frames,
        proposals,
    })
}

/// On-disk layout of a synthetic benchmark directory.
#[derive(Debug, Clone)]
pub struct BenchmarkLayout {
    pub root: PathBuf,
}

impl BenchmarkLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        BenchmarkLayout { root: root.into() }
    }

    pub fn scene(&self, id: &str) -> PathBuf {
        self.root.join("scenes").join(format!("{id}.json"))
    }

    pub fn proposals(&self, id: &str) -> PathBuf {
        self.root.join("proposals").join(format!("{id}.json"))
    }

    pub fn features(&self, id: &str) -> PathBuf {
        self.root.join("features").join(format!("{id}.tlg1"))
    }

    pub fn tokens(&self, id: &str) -> PathBuf {
        self.root.join("tokens").join(format!("{id}.tlg1"))
    }

    pub fn gt_dir(&self) -> PathBuf {
        self.root.join("gt")
    }

    pub fn gt(&self, id: &str) -> PathBuf {
        self.gt_dir().join(format!("{id}.json"))
    }

    /// Video ids present, sorted.
    pub fn video_ids(&self) -> Result<Vec<String>> {
        crate::io::json_stems(&self.root.join("scenes"))
    }
}

/// Seed of the `index`-th scene of a benchmark generated from `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn video_id(index: usize) -> String {
    format!("scene{index:04}")
}

/// Generates `count` scenes and writes every artifact under `out`.
pub fn write_benchmark(config: &SynthConfig, count: usize, seed: u64, out: &Path) -> Result<Vec<Scene>> {
    let layout = BenchmarkLayout::new(out);
    let mut scenes = Vec::with_capacity(count);
    for i in 0..count {
        let scene = generate_scene(config, scene_seed(seed, i), video_id(i))?;
        let id = scene.video_id.clone();
        let (features, tokens) = attribute_features(&scene)?;
        scene.write(&layout.scene(&id))?;
        scene_proposals(&scene)?.write(&layout.proposals(&id))?;
        features.write(&layout.features(&id))?;
        tokens.write(&layout.tokens(&id))?;
        scene.ground_truth()?.write(&layout.gt(&id))?;
        scenes.push(scene);
    }
    Ok(scenes)
}
