use ndarray::{Array1, Array2, Axis};

use super::features::TokenFeatures;
use super::transformer::softmax;
use crate::error::{Error, Result};

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let (na, nb) = (a.dot(a).sqrt(), b.dot(b).sqrt());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

/// Feature-similarity baseline: softmax over cosines between each tracklet
/// feature and the mean language token.
pub fn naive_similarity_grounding(tracklet_feats: &Array2<f64>, lang: &TokenFeatures) -> Result<Vec<f64>> {
    if tracklet_feats.nrows() == 0 {
        return Err(Error::input("naive grounding needs at least one tracklet"));
    }
    if tracklet_feats.ncols() != lang.channels() {
        return Err(Error::dim(format!(
            "tracklet features have {} channels, tokens {}",
            tracklet_feats.ncols(),
            lang.channels()
        )));
    }
    let sentence = lang.tokens.mean_axis(Axis(0)).expect("at least one token");
    let cosines: Vec<f64> = tracklet_feats
        .rows()
        .into_iter()
        .map(|row| cosine(&row.to_owned(), &sentence))
        .collect();
    Ok(softmax(&cosines))
}
