//! Independent dense and brute-force references used by the integration and
//! acceptance tests. Nothing here calls the library's mask algebra, NMS,
//! transformer or metric code.

#![allow(dead_code)]

use rand::Rng;
use tlg::grounding::GroundingModel;
use tlg::{BinaryMask, Tracklet, TrackletId, TrackletSet};

/// Row-major dense mask: `px[y * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: usize,
    pub h: usize,
    pub px: Vec<bool>,
}

impl Dense {
    pub fn at(&self, x: usize, y: usize) -> bool {
        self.px[y * self.w + x]
    }

    pub fn count(&self) -> usize {
        self.px.iter().filter(|&&b| b).count()
    }

    /// Column-major alternating run lengths, hand-rolled.
    pub fn to_mask(&self) -> BinaryMask {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for x in 0..self.w {
            for y in 0..self.h {
                if self.at(x, y) == current {
                    len += 1;
                } else {
                    runs.push(len);
                    current = !current;
                    len = 1;
                }
            }
        }
        runs.push(len);
        BinaryMask::from_runs(self.w, self.h, runs).expect("runs cover the lattice")
    }

    pub fn from_mask(m: &BinaryMask) -> Dense {
        let (w, h) = (m.width(), m.height());
        let mut px = vec![false; w * h];
        let mut pos = 0;
        let mut value = false;
        for &r in m.runs() {
            for i in pos..pos + r {
                let (x, y) = (i / h, i % h);
                px[y * w + x] = value;
            }
            pos += r;
            value = !value;
        }
        Dense { w, h, px }
    }
}

/// Random mask drawn from a mix of styles: empty, full, iid noise, rectangles.
pub fn random_dense(rng: &mut impl Rng, w: usize, h: usize) -> Dense {
    let style = rng.random_range(0..10);
    let px = match style {
        0 => vec![false; w * h],
        1 => vec![true; w * h],
        2..=5 => {
            let density: f64 = rng.random_range(0.05..0.95);
            (0..w * h).map(|_| rng.random_bool(density)).collect()
        }
        _ => {
            let mut px = vec![false; w * h];
            for _ in 0..rng.random_range(1..4) {
                let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
                let (x1, y1) = (rng.random_range(x0..w), rng.random_range(y0..h));
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        px[y * w + x] = true;
                    }
                }
            }
            px
        }
    };
    Dense { w, h, px }
}

pub fn dense_inter(a: &Dense, b: &Dense) -> usize {
    a.px.iter().zip(&b.px).filter(|(p, q)| **p && **q).count()
}

pub fn dense_union(a: &Dense, b: &Dense) -> usize {
    a.px.iter().zip(&b.px).filter(|(p, q)| **p || **q).count()
}

pub fn dense_iou(a: &Dense, b: &Dense) -> f64 {
    let u = dense_union(a, b);
    if u == 0 {
        1.0
    } else {
        dense_inter(a, b) as f64 / u as f64
    }
}

pub fn dense_tracklet_iou(a: &[Dense], b: &[Dense]) -> f64 {
    let (mut i, mut u) = (0, 0);
    for (p, q) in a.iter().zip(b) {
        i += dense_inter(p, q);
        u += dense_union(p, q);
    }
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

/// Tracklet with the dense masks it was built from.
#[derive(Debug, Clone)]
pub struct DenseTracklet {
    pub id: u64,
    pub confidence: f64,
    pub prop_prob: Vec<f64>,
    pub source_frame: usize,
    pub masks: Vec<Dense>,
}

impl DenseTracklet {
    pub fn score(&self) -> f64 {
        let mut s = 0.0;
        for p in &self.prop_prob {
            s += p;
        }
        self.confidence * s / self.prop_prob.len() as f64
    }

    pub fn to_tracklet(&self) -> Tracklet {
        Tracklet {
            id: TrackletId(self.id),
            source_frame: self.source_frame,
            source_model: "ref".into(),
            confidence: self.confidence,
            prop_prob: self.prop_prob.clone(),
            masks: self.masks.iter().map(Dense::to_mask).collect(),
        }
    }
}

/// Dyadic values so that scores compare identically however they are summed.
fn dyadic(rng: &mut impl Rng) -> f64 {
    rng.random_range(0..=8) as f64 / 8.0
}

/// Random tracklets; some are near-copies of earlier ones so NMS has work to do.
pub fn random_tracklets(rng: &mut impl Rng, n: usize, t: usize, w: usize, h: usize) -> Vec<DenseTracklet> {
    let mut ids: Vec<u64> = (0..n as u64 * 3).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut out: Vec<DenseTracklet> = Vec::with_capacity(n);
    for &id in ids.iter().take(n) {
        let source_frame = rng.random_range(0..t);
        let mut prop_prob: Vec<f64> = (0..t).map(|_| dyadic(rng)).collect();
        prop_prob[source_frame] = 1.0;
        let masks = if !out.is_empty() && rng.random_bool(0.4) {
            let base = &out[rng.random_range(0..out.len())];
            base.masks
                .iter()
                .map(|m| {
                    let mut m = m.clone();
                    for _ in 0..rng.random_range(0..4) {
                        let i = rng.random_range(0..w * h);
                        m.px[i] = !m.px[i];
                    }
                    m
                })
                .collect()
        } else {
            (0..t).map(|_| random_dense(rng, w, h)).collect()
        };
        out.push(DenseTracklet {
            id,
            confidence: dyadic(rng),
            prop_prob,
            source_frame,
            masks,
        });
    }
    out
}

pub fn to_set(items: &[DenseTracklet], t: usize, w: usize, h: usize) -> TrackletSet {
    TrackletSet::new("ref", w, h, t, items.iter().map(DenseTracklet::to_tracklet).collect()).unwrap()
}

/// Textbook greedy NMS on dense masks; returns kept ids in selection order.
pub fn reference_nms(items: &[DenseTracklet], threshold: f64, max_keep: usize) -> Vec<u64> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    // selection sort: highest score first, smaller id on ties
    for i in 0..order.len() {
        let mut best = i;
        for j in i + 1..order.len() {
            let (a, b) = (&items[order[j]], &items[order[best]]);
            if a.score() > b.score() || (a.score() == b.score() && a.id < b.id) {
                best = j;
            }
        }
        order.swap(i, best);
    }
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept.len() == max_keep {
            break;
        }
        if kept
            .iter()
            .all(|&k| dense_tracklet_iou(&items[i].masks, &items[k].masks) < threshold)
        {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| items[i].id).collect()
}

// ---- dense metrics ----

pub fn dense_boundary(m: &Dense) -> Dense {
    let mut px = vec![false; m.w * m.h];
    for y in 0..m.h {
        for x in 0..m.w {
            if !m.at(x, y) {
                continue;
            }
            let edge = x == 0 || y == 0 || x + 1 == m.w || y + 1 == m.h;
            let exposed = edge || !m.at(x - 1, y) || !m.at(x + 1, y) || !m.at(x, y - 1) || !m.at(x, y + 1);
            px[y * m.w + x] = exposed;
        }
    }
    Dense { w: m.w, h: m.h, px }
}

/// Pixels within Chebyshev distance `r` of some foreground pixel, by brute force.
pub fn dense_dilate(m: &Dense, r: usize) -> Dense {
    let mut px = vec![false; m.w * m.h];
    for y in 0..m.h {
        for x in 0..m.w {
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(m.w - 1));
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(m.h - 1));
            px[y * m.w + x] = (y0..=y1).any(|yy| (x0..=x1).any(|xx| m.at(xx, yy)));
        }
    }
    Dense { w: m.w, h: m.h, px }
}

pub fn dense_frame_f(pred: &Dense, gt: &Dense, r: usize) -> f64 {
    let (pb, gb) = (dense_boundary(pred), dense_boundary(gt));
    let (np, ng) = (pb.count(), gb.count());
    if np == 0 && ng == 0 {
        return 1.0;
    }
    if np == 0 || ng == 0 {
        return 0.0;
    }
    let precision = dense_inter(&pb, &dense_dilate(&gb, r)) as f64 / np as f64;
    let recall = dense_inter(&gb, &dense_dilate(&pb, r)) as f64 / ng as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn dense_j(pred: &[Dense], gt: &[Dense]) -> f64 {
    pred.iter().zip(gt).map(|(p, g)| dense_iou(p, g)).sum::<f64>() / pred.len() as f64
}

// ---- naive transformer ----

type Mat = Vec<Vec<f64>>;

fn matmul(a: &Mat, w: &ndarray::Array2<f64>) -> Mat {
    let (n, k, m) = (a.len(), w.nrows(), w.ncols());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[i][l] * w[[l, j]];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn layer_norm(x: &Mat, g: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = (var + 1e-5).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / sd * g[j] + b[j])
                .collect()
        })
        .collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Triple-loop encoder forward pass.
pub fn naive_forward(tokens: &Mat, model: &GroundingModel) -> Mat {
    let mut x = tokens.clone();
    let n = x.len();
    for layer in &model.layers {
        let h = layer_norm(&x, &layer.ln1_g, &layer.ln1_b);
        let (q, k, v) = (matmul(&h, &layer.wq), matmul(&h, &layer.wk), matmul(&h, &layer.wv));
        let d = q[0].len();
        let dh = d / model.heads;
        let mut concat = vec![vec![0.0; d]; n];
        for head in 0..model.heads {
            let off = head * dh;
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| (0..dh).map(|c| q[i][off + c] * k[j][off + c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let a = softmax(&scores);
                for c in 0..dh {
                    concat[i][off + c] = (0..n).map(|j| a[j] * v[j][off + c]).sum();
                }
            }
        }
        let attn = matmul(&concat, &layer.wo);
        for i in 0..n {
            for j in 0..d {
                x[i][j] += attn[i][j];
            }
        }
        let h = layer_norm(&x, &layer.ln2_g, &layer.ln2_b);
        let mut hidden = matmul(&h, &layer.ffn_w1);
        for row in &mut hidden {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v + layer.ffn_b1[j]).max(0.0);
            }
        }
        let out = matmul(&hidden, &layer.ffn_w2);
        for i in 0..n {
            for j in 0..d {
                x[i][j] += out[i][j] + layer.ffn_b2[j];
            }
        }
    }
    x
}

/// Naive grounding: embed, encode, score tracklet rows, softmax over them.
pub fn naive_grounding(tracklets: &Mat, lang: &Mat, model: &GroundingModel) -> Vec<f64> {
    let mut tokens = Vec::new();
    for row in tracklets {
        tokens.push(row.iter().enumerate().map(|(j, v)| v + model.embed_visual[j]).collect());
    }
    for row in lang {
        tokens.push(
            row.iter()
                .enumerate()
                .map(|(j, v)| v + model.embed_linguistic[j])
                .collect(),
        );
    }
    let x = naive_forward(&tokens, model);
    let hidden = model.head_w1.ncols();
    let logits: Vec<f64> = x[..tracklets.len()]
        .iter()
        .map(|row| {
            let mut z = model.head_b2;
            for u in 0..hidden {
                let mut a = model.head_b1[u];
                for (j, v) in row.iter().enumerate() {
                    a += v * model.head_w1[[j, u]];
                }
                z += a.max(0.0) * model.head_w2[[u, 0]];
            }
            z
        })
        .collect();
    softmax(&logits)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, d: usize) -> Mat {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn to_array(m: &Mat) -> ndarray::Array2<f64> {
    let (n, d) = (m.len(), m.first().map_or(0, Vec::len));
    ndarray::Array2::from_shape_fn((n, d), |(i, j)| m[i][j])
}
