//! Grounding-module parameters: encoder layers, modal embeddings and the scoring MLP.
//!
//! Projections act on row vectors, `y = x · W`, so a weight of shape
//! `[in, out]` maps `in` channels to `out` channels.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{Checkpoint, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub head_hidden: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.ffn_dim == 0 || self.head_hidden == 0 {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// D=16, 2 layers, 2 heads, FFN width 32.
    Desk,
    /// D=768, 4 layers, 12 heads.
    Paper,
}

impl Preset {
    pub fn config(self) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig {
                dim: 16,
                layers: 2,
                heads: 2,
                ffn_dim: 32,
                head_hidden: 16,
            },
            Preset::Paper => ModelConfig {
                dim: 768,
                layers: 4,
                heads: 12,
                ffn_dim: 3072,
                head_hidden: 768,
            },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown model preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub ffn_w1: Array2<f64>,
    pub ffn_b1: Array1<f64>,
    pub ffn_w2: Array2<f64>,
    pub ffn_b2: Array1<f64>,
}

impl EncoderLayer {
    fn zeros(dim: usize, ffn: usize) -> Self {
        EncoderLayer {
            wq: Array2::zeros((dim, dim)),
            wk: Array2::zeros((dim, dim)),
            wv: Array2::zeros((dim, dim)),
            wo: Array2::zeros((dim, dim)),
            ln1_g: Array1::ones(dim),
            ln1_b: Array1::zeros(dim),
            ln2_g: Array1::ones(dim),
            ln2_b: Array1::zeros(dim),
            ffn_w1: Array2::zeros((dim, ffn)),
            ffn_b1: Array1::zeros(ffn),
            ffn_w2: Array2::zeros((ffn, dim)),
            ffn_b2: Array1::zeros(dim),
        }
    }
}

/// Transformer grounding module, inference only.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingModel {
    pub heads: usize,
    pub layers: Vec<EncoderLayer>,
    pub embed_visual: Array1<f64>,
    pub embed_linguistic: Array1<f64>,
    pub head_w1: Array2<f64>,
    pub head_b1: Array1<f64>,
    pub head_w2: Array2<f64>,
    pub head_b2: f64,
}

const LAYER_TENSORS: [&str; 12] = [
    "wq", "wk", "wv", "wo", "ln1.g", "ln1.b", "ln2.g", "ln2.b", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
];

fn to_f32_grid(x: f64) -> f64 {
    x as f32 as f64
}

impl GroundingModel {
    pub fn dim(&self) -> usize {
        self.embed_visual.len()
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim(),
            layers: self.layers.len(),
            heads: self.heads,
            ffn_dim: self.layers.first().map_or(0, |l| l.ffn_b1.len()),
            head_hidden: self.head_b1.len(),
        }
    }

    /// Checks every tensor shape against `dim`, the head count and finiteness.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.heads == 0 || !d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model dim {d} must be a positive multiple of {} heads",
                self.heads
            )));
        }
        let dh = self.head_b1.len();
        let shape_err =
            |name: &str, got: &[usize], want: &[usize]| Error::dim(format!("{name}: shape {got:?}, expected {want:?}"));
        let check2 = |name: &str, a: &Array2<f64>, rows: usize, cols: usize| -> Result<()> {
            if a.dim() != (rows, cols) {
                return Err(shape_err(name, a.shape(), &[rows, cols]));
            }
            Ok(())
        };
        let check1 = |name: &str, a: &Array1<f64>, n: usize| -> Result<()> {
            if a.len() != n {
                return Err(shape_err(name, a.shape(), &[n]));
            }
            Ok(())
        };
        check1("embed.linguistic", &self.embed_linguistic, d)?;
        for (i, l) in self.layers.iter().enumerate() {
            let f = l.ffn_b1.len();
            for (name, w) in [("wq", &l.wq), ("wk", &l.wk), ("wv", &l.wv), ("wo", &l.wo)] {
                check2(&format!("layer{i}.{name}"), w, d, d)?;
            }
            for (name, v) in [
                ("ln1.g", &l.ln1_g),
                ("ln1.b", &l.ln1_b),
                ("ln2.g", &l.ln2_g),
                ("ln2.b", &l.ln2_b),
                ("ffn.b2", &l.ffn_b2),
            ] {
                check1(&format!("layer{i}.{name}"), v, d)?;
            }
            check2(&format!("layer{i}.ffn.w1"), &l.ffn_w1, d, f)?;
            check2(&format!("layer{i}.ffn.w2"), &l.ffn_w2, f, d)?;
        }
        check2("head.w1", &self.head_w1, d, dh)?;
        check2("head.w2", &self.head_w2, dh, 1)?;
        let finite = self.layers.iter().all(|l| {
            [&l.wq, &l.wk, &l.wv, &l.wo, &l.ffn_w1, &l.ffn_w2]
                .iter()
                .all(|a| a.iter().all(|v| v.is_finite()))
                && [&l.ln1_g, &l.ln1_b, &l.ln2_g, &l.ln2_b, &l.ffn_b1, &l.ffn_b2]
                    .iter()
                    .all(|a| a.iter().all(|v| v.is_finite()))
        }) && [&self.embed_visual, &self.embed_linguistic, &self.head_b1]
            .iter()
            .all(|a| a.iter().all(|v| v.is_finite()))
            && self.head_w1.iter().chain(self.head_w2.iter()).all(|v| v.is_finite())
            && self.head_b2.is_finite();
        if !finite {
            return Err(Error::input("model parameters contain non-finite values"));
        }
        Ok(())
    }

    /// Random weights (scaled normal init), rounded to f32 so checkpoints are lossless.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ModelConfig {
            dim: d,
            layers,
            heads,
            ffn_dim: f,
            head_hidden: dh,
        } = config;
        let mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).unwrap();
            Array2::from_shape_fn((rows, cols), |_| to_f32_grid(normal.sample(rng)))
        };
        let vec = |n: usize, center: f64, spread: f64, rng: &mut ChaCha8Rng| {
            let normal = Normal::new(center, spread).unwrap();
            Array1::from_shape_fn(n, |_| to_f32_grid(normal.sample(rng)))
        };
        let layers = (0..layers)
            .map(|_| EncoderLayer {
                wq: mat(d, d, &mut rng),
                wk: mat(d, d, &mut rng),
                wv: mat(d, d, &mut rng),
                wo: mat(d, d, &mut rng),
                ln1_g: vec(d, 1.0, 0.1, &mut rng),
                ln1_b: vec(d, 0.0, 0.1, &mut rng),
                ln2_g: vec(d, 1.0, 0.1, &mut rng),
                ln2_b: vec(d, 0.0, 0.1, &mut rng),
                ffn_w1: mat(d, f, &mut rng),
                ffn_b1: vec(f, 0.0, 0.1, &mut rng),
                ffn_w2: mat(f, d, &mut rng),
                ffn_b2: vec(d, 0.0, 0.1, &mut rng),
            })
            .collect();
        Ok(GroundingModel {
            heads,
            layers,
            embed_visual: vec(d, 0.0, 0.5, &mut rng),
            embed_linguistic: vec(d, 0.0, 0.5, &mut rng),
            head_w1: mat(d, dh, &mut rng),
            head_b1: vec(dh, 0.0, 0.1, &mut rng),
            head_w2: mat(dh, 1, &mut rng),
            head_b2: to_f32_grid(Normal::new(0.0, 0.1).unwrap().sample(&mut rng)),
        })
    }

    /// Hand-set weights that score tracklets by attribute agreement with the expression.
    ///
    /// Expects non-negative features whose first `attr_dims` channels carry
    /// attributes and whose remaining channels are zero, and language tokens
    /// that are each a single one-hot attribute. Channel layout of the residual
    /// stream: attributes `[0, A)`, visual flag `A`, linguistic flag `A + 1`,
    /// sentence copy `[A + 2, 2A + 2)`.
    ///
    /// Layer 0, head 0 lets every token attend (almost exclusively) to the
    /// language tokens and writes their attribute average into the sentence
    /// channels; all other heads, layers and FFNs are zero, so the residual
    /// stream passes through. The MLP then computes
    /// `temperature · Σ_i min(τ_i, s_i)` as
    /// `Σ relu(τ_i) − Σ relu(τ_i − s_i)`.
    pub fn attribute_matcher(
        dim: usize,
        layers: usize,
        heads: usize,
        ffn_dim: usize,
        attr_dims: usize,
        temperature: f64,
    ) -> Result<Self> {
        let a = attr_dims;
        let config = ModelConfig {
            dim,
            layers,
            heads,
            ffn_dim,
            head_hidden: 2 * a,
        };
        config.validate()?;
        if a == 0 || layers == 0 {
            return Err(Error::Config(
                "attribute matcher needs attributes and at least one layer".into(),
            ));
        }
        if dim < 2 * a + 2 || config.head_dim() < a {
            return Err(Error::Config(format!(
                "attribute matcher over {a} attributes needs dim >= {} and head dim >= {a}; got dim {dim}, head dim {}",
                2 * a + 2,
                config.head_dim()
            )));
        }
        let (flag_v, flag_l, sent) = (a, a + 1, a + 2);
        // A linguistic token (one attribute plus its flag) normalizes with these moments.
        let eps = super::transformer::LAYER_NORM_EPS;
        let mu = 2.0 / dim as f64;
        let sigma = (mu - mu * mu + eps).sqrt();
        let gate = 4.0;

        let mut first = EncoderLayer::zeros(dim, ffn_dim);
        first.wq[[flag_v, 0]] = gate;
        first.wk[[flag_l, 0]] = gate;
        for i in 0..a {
            first.wv[[i, i]] = sigma;
            first.wv[[flag_l, i]] = sigma * mu / (1.0 - mu);
            first.wo[[i, sent + i]] = 1.0;
        }
        let mut all_layers = vec![first];
        all_layers.extend((1..layers).map(|_| EncoderLayer::zeros(dim, ffn_dim)));

        let mut embed_visual = Array1::zeros(dim);
        embed_visual[flag_v] = 1.0;
        let mut embed_linguistic = Array1::zeros(dim);
        embed_linguistic[flag_l] = 1.0;

        let mut head_w1 = Array2::zeros((dim, 2 * a));
        let mut head_w2 = Array2::zeros((2 * a, 1));
        for i in 0..a {
            head_w1[[i, i]] = 1.0;
            head_w1[[sent + i, i]] = -1.0;
            head_w1[[i, a + i]] = 1.0;
            head_w2[[i, 0]] = -temperature;
            head_w2[[a + i, 0]] = temperature;
        }
        let mut model = GroundingModel {
            heads,
            layers: all_layers,
            embed_visual,
            embed_linguistic,
            head_w1,
            head_b1: Array1::zeros(2 * a),
            head_w2,
            head_b2: 0.0,
        };
        model.round_to_f32();
        Ok(model)
    }

    fn round_to_f32(&mut self) {
        for l in &mut self.layers {
            for w in [&mut l.wq, &mut l.wk, &mut l.wv, &mut l.wo, &mut l.ffn_w1, &mut l.ffn_w2] {
                w.mapv_inplace(to_f32_grid);
            }
            for v in [
                &mut l.ln1_g,
                &mut l.ln1_b,
                &mut l.ln2_g,
                &mut l.ln2_b,
                &mut l.ffn_b1,
                &mut l.ffn_b2,
            ] {
                v.mapv_inplace(to_f32_grid);
            }
        }
        self.embed_visual.mapv_inplace(to_f32_grid);
        self.embed_linguistic.mapv_inplace(to_f32_grid);
        self.head_w1.mapv_inplace(to_f32_grid);
        self.head_b1.mapv_inplace(to_f32_grid);
        self.head_w2.mapv_inplace(to_f32_grid);
        self.head_b2 = to_f32_grid(self.head_b2);
    }

    /// Canonical tensor order: layers ascending, then embeddings, then head.
    pub fn to_checkpoint(&self) -> Checkpoint {
        fn t2(a: &Array2<f64>) -> Tensor {
            Tensor {
                dims: a.shape().to_vec(),
                data: a.iter().map(|&v| v as f32).collect(),
            }
        }
        fn t1(a: &Array1<f64>) -> Tensor {
            Tensor {
                dims: vec![a.len()],
                data: a.iter().map(|&v| v as f32).collect(),
            }
        }
        let mut ck = Checkpoint::default();
        for (i, l) in self.layers.iter().enumerate() {
            let tensors = [
                t2(&l.wq),
                t2(&l.wk),
                t2(&l.wv),
                t2(&l.wo),
                t1(&l.ln1_g),
                t1(&l.ln1_b),
                t1(&l.ln2_g),
                t1(&l.ln2_b),
                t2(&l.ffn_w1),
                t1(&l.ffn_b1),
                t2(&l.ffn_w2),
                t1(&l.ffn_b2),
            ];
            for (name, t) in LAYER_TENSORS.iter().zip(tensors) {
                ck.push(format!("layer{i}.{name}"), t);
            }
        }
        ck.push("embed.visual", t1(&self.embed_visual));
        ck.push("embed.linguistic", t1(&self.embed_linguistic));
        ck.push("head.w1", t2(&self.head_w1));
        ck.push("head.b1", t1(&self.head_b1));
        ck.push("head.w2", t2(&self.head_w2));
        ck.push(
            "head.b2",
            Tensor {
                dims: vec![1],
                data: vec![self.head_b2 as f32],
            },
        );
        ck
    }

    /// Rebuilds a model from canonical tensor names. The head count is not
    /// stored in the file and must be supplied.
    pub fn from_checkpoint(ck: &Checkpoint, heads: usize) -> Result<Self> {
        let get = |name: &str| {
            ck.get(name)
                .ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))
        };
        let a2 = |name: &str| -> Result<Array2<f64>> {
            let t = get(name)?;
            let [r, c] = t.dims[..] else {
                return Err(Error::format(
                    "checkpoint",
                    format!("`{name}` must be rank 2, got {:?}", t.dims),
                ));
            };
            Array2::from_shape_vec((r, c), t.data.iter().map(|&v| v as f64).collect())
                .map_err(|e| Error::format("checkpoint", e.to_string()))
        };
        let a1 = |name: &str| -> Result<Array1<f64>> {
            let t = get(name)?;
            if t.rank() != 1 {
                return Err(Error::format(
                    "checkpoint",
                    format!("`{name}` must be rank 1, got {:?}", t.dims),
                ));
            }
            Ok(Array1::from_iter(t.data.iter().map(|&v| v as f64)))
        };
        let mut layers = Vec::new();
        while ck.get(&format!("layer{}.wq", layers.len())).is_some() {
            let p = |n: &str| format!("layer{}.{n}", layers.len());
            layers.push(EncoderLayer {
                wq: a2(&p("wq"))?,
                wk: a2(&p("wk"))?,
                wv: a2(&p("wv"))?,
                wo: a2(&p("wo"))?,
                ln1_g: a1(&p("ln1.g"))?,
                ln1_b: a1(&p("ln1.b"))?,
                ln2_g: a1(&p("ln2.g"))?,
                ln2_b: a1(&p("ln2.b"))?,
                ffn_w1: a2(&p("ffn.w1"))?,
                ffn_b1: a1(&p("ffn.b1"))?,
                ffn_w2: a2(&p("ffn.w2"))?,
                ffn_b2: a1(&p("ffn.b2"))?,
            });
        }
        let expected = 12 * layers.len() + 6;
        if ck.tensors.len() != expected {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "{} tensors present, {expected} expected for {} layers",
                    ck.tensors.len(),
                    layers.len()
                ),
            ));
        }
        let b2 = a1("head.b2")?;
        if b2.len() != 1 {
            return Err(Error::format("checkpoint", "`head.b2` must have shape [1]"));
        }
        let model = GroundingModel {
            heads,
            layers,
            embed_visual: a1("embed.visual")?,
            embed_linguistic: a1("embed.linguistic")?,
            head_w1: a2("head.w1")?,
            head_b1: a1("head.b1")?,
            head_w2: a2("head.w2")?,
            head_b2: b2[0],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path, heads: usize) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?, heads)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }
}
