use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::tensor_io::Tensor;

/// Visual feature grid of one frame, stored row-major as `[h][w][D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::dim(format!(
                "feature map dims must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::dim(format!(
                "feature map {width}x{height}x{channels} given {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("feature map contains non-finite values"));
        }
        Ok(FeatureMap {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let start = (cy * self.width + cx) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn cell_mut(&mut self, cx: usize, cy: usize) -> &mut [f64] {
        let start = (cy * self.width + cx) * self.channels;
        &mut self.data[start..start + self.channels]
    }
}

/// Per-frame feature maps of a whole video; file form is a `[T, h, w, D]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub frames: Vec<FeatureMap>,
}

impl VideoFeatures {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [frames, h, w, d] = t.dims[..] else {
            return Err(Error::dim(format!(
                "video features must be rank 4 [T, h, w, D], got {:?}",
                t.dims
            )));
        };
        let per_frame = h * w * d;
        let maps = (0..frames)
            .map(|f| {
                let slice = &t.data[f * per_frame..(f + 1) * per_frame];
                FeatureMap::new(w, h, d, slice.iter().map(|&v| v as f64).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        if maps.is_empty() {
            return Err(Error::dim("video features have zero frames"));
        }
        Ok(VideoFeatures { frames: maps })
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::dim("video features have zero frames"))?;
        let mut data = Vec::with_capacity(self.frames.len() * first.data.len());
        for f in &self.frames {
            if (f.width, f.height, f.channels) != (first.width, first.height, first.channels) {
                return Err(Error::dim("feature maps differ in shape across frames"));
            }
            data.extend(f.data.iter().map(|&v| v as f32));
        }
        Tensor::new(vec![self.frames.len(), first.height, first.width, first.channels], data)
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_tensor(&Tensor::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_tensor()?.write(path)
    }
}

/// Linguistic token features, `L x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures {
    pub tokens: Array2<f64>,
}

impl TokenFeatures {
    pub fn new(tokens: Array2<f64>) -> Result<Self> {
        if tokens.nrows() == 0 || tokens.ncols() == 0 {
            return Err(Error::dim("token features need at least one token and channel"));
        }
        if tokens.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("token features contain non-finite values"));
        }
        Ok(TokenFeatures { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [l, d] = t.dims[..] else {
            return Err(Error::dim(format!(
                "token features must be rank 2 [L, D], got {:?}",
                t.dims
            )));
        };
        let data = t.data.iter().map(|&v| v as f64).collect();
        Self::new(Array2::from_shape_vec((l, d), data).map_err(|e| Error::dim(e.to_string()))?)
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(
            vec![self.len(), self.channels()],
            self.tokens.iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_tensor(&Tensor::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_tensor()?.write(path)
    }
}

/// Masked average pooling: the mask is area-averaged onto the feature grid and
/// the cell features are averaged with those weights. An empty mask pools to zero.
pub fn pooled_tracklet_feature(fmap: &FeatureMap, mask: &BinaryMask) -> Result<Vec<f64>> {
    let cells = mask.downsample_to_grid(fmap.width, fmap.height)?;
    let mut acc = vec![0.0; fmap.channels];
    let mut total = 0.0;
    for cy in 0..fmap.height {
        for cx in 0..fmap.width {
            let w = cells.get(cx, cy);
            if w == 0.0 {
                continue;
            }
            total += w;
            for (a, &f) in acc.iter_mut().zip(fmap.cell(cx, cy)) {
                *a += w * f;
            }
        }
    }
    if total > 0.0 {
        for a in &mut acc {
            *a /= total;
        }
    }
    Ok(acc)
}

/// Stacks pooled features of every mask into a `P x D` matrix.
pub fn pooled_matrix(fmap: &FeatureMap, masks: &[&BinaryMask]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((masks.len(), fmap.channels));
    for (mut row, mask) in out.rows_mut().into_iter().zip(masks) {
        let v = pooled_tracklet_feature(fmap, mask)?;
        row.assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(out)
}
