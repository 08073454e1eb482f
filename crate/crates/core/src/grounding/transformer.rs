//! Pre-norm Transformer encoder forward pass and the tracklet scoring head.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::features::TokenFeatures;
use super::model::{EncoderLayer, GroundingModel};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let total = row.sum();
        row /= total;
    }
}

/// Per-row layer normalization with population variance.
pub fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.mean().unwrap_or(0.0);
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
        row *= gain;
        row += bias;
    }
    out
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn check_finite(x: &Array2<f64>, layer: usize, stage: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { layer, stage })
    }
}

/// Multi-head self-attention; also returns each head's `N x N` attention weights.
fn self_attention(h: &Array2<f64>, layer: &EncoderLayer, heads: usize) -> (Array2<f64>, Vec<Array2<f64>>) {
    let q = h.dot(&layer.wq);
    let k = h.dot(&layer.wk);
    let v = h.dot(&layer.wv);
    let d = q.ncols();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut concat = Array2::zeros(q.raw_dim());
    let mut weights = Vec::with_capacity(heads);
    for head in 0..heads {
        let cols = s![.., head * dh..(head + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut scores);
        concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        weights.push(scores);
    }
    (concat.dot(&layer.wo), weights)
}

fn feed_forward(h: &Array2<f64>, layer: &EncoderLayer) -> Array2<f64> {
    let mut hidden = h.dot(&layer.ffn_w1);
    hidden += &layer.ffn_b1;
    hidden.mapv_inplace(relu);
    let mut out = hidden.dot(&layer.ffn_w2);
    out += &layer.ffn_b2;
    out
}

/// Attention weights of one forward pass, indexed `[layer][head]`.
pub type AttentionMaps = Vec<Vec<Array2<f64>>>;

/// Like [`transformer_forward`], also returning every layer's attention weights.
pub fn forward_with_attention(tokens: &Array2<f64>, model: &GroundingModel) -> Result<(Array2<f64>, AttentionMaps)> {
    if tokens.nrows() == 0 {
        return Err(Error::input("transformer input has no tokens"));
    }
    if tokens.ncols() != model.dim() {
        return Err(Error::dim(format!(
            "tokens have {} channels, model expects {}",
            tokens.ncols(),
            model.dim()
        )));
    }
    check_finite(tokens, 0, "input")?;
    let mut x = tokens.clone();
    let mut maps = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let (attn, weights) = self_attention(&layer_norm(&x, &layer.ln1_g, &layer.ln1_b), layer, model.heads);
        check_finite(&attn, i, "attention")?;
        x += &attn;
        let ffn = feed_forward(&layer_norm(&x, &layer.ln2_g, &layer.ln2_b), layer);
        check_finite(&ffn, i, "feed-forward")?;
        x += &ffn;
        check_finite(&x, i, "residual")?;
        maps.push(weights);
    }
    Ok((x, maps))
}

/// Pre-norm encoder stack without positional encodings:
/// `x += MHSA(LN(x)); x += FFN(LN(x))` per layer.
pub fn transformer_forward(tokens: &Array2<f64>, model: &GroundingModel) -> Result<Array2<f64>> {
    forward_with_attention(tokens, model).map(|(x, _)| x)
}

/// `[τ_1 + e_v, …, τ_P + e_v, q_1 + e_l, …, q_L + e_l]` with one embedding per modality.
pub fn assemble_tokens(
    tracklet_feats: &Array2<f64>,
    lang: &TokenFeatures,
    model: &GroundingModel,
) -> Result<Array2<f64>> {
    let d = model.dim();
    if tracklet_feats.ncols() != d || lang.channels() != d {
        return Err(Error::dim(format!(
            "tracklet features have {} channels and tokens {}, model expects {d}",
            tracklet_feats.ncols(),
            lang.channels()
        )));
    }
    let p = tracklet_feats.nrows();
    let mut seq = Array2::zeros((p + lang.len(), d));
    seq.slice_mut(s![..p, ..])
        .assign(&(tracklet_feats + &model.embed_visual));
    seq.slice_mut(s![p.., ..])
        .assign(&(&lang.tokens + &model.embed_linguistic));
    Ok(seq)
}

/// Scores the first `p` (tracklet) rows with the 2-layer MLP and softmaxes
/// over those `p` logits only.
pub fn grounding_head(contextual: &Array2<f64>, p: usize, model: &GroundingModel) -> Result<Vec<f64>> {
    if p == 0 || p > contextual.nrows() {
        return Err(Error::input(format!(
            "cannot score {p} tracklets from {} tokens",
            contextual.nrows()
        )));
    }
    let logits: Vec<f64> = contextual
        .slice(s![..p, ..])
        .axis_iter(Axis(0))
        .map(|row| head_logit(row, model))
        .collect();
    Ok(softmax(&logits))
}

fn head_logit(row: ArrayView1<f64>, model: &GroundingModel) -> f64 {
    let mut hidden = row.dot(&model.head_w1);
    hidden += &model.head_b1;
    hidden.mapv_inplace(relu);
    hidden.dot(&model.head_w2.column(0)) + model.head_b2
}

/// Full transformer grounding of one frame: assemble, encode, score.
pub fn transformer_grounding(
    tracklet_feats: &Array2<f64>,
    lang: &TokenFeatures,
    model: &GroundingModel,
) -> Result<Vec<f64>> {
    let tokens = assemble_tokens(tracklet_feats, lang, model)?;
    let out = transformer_forward(&tokens, model)?;
    grounding_head(&out, tracklet_feats.nrows(), model)
}
