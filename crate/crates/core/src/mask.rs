//! Run-length encoded binary masks.
//!
//! Runs are stored in column-major pixel order (pixel `(x, y)` sits at linear
//! index `x * height + y`) and alternate background/foreground, starting with
//! background. The first run may be zero when the mask starts with foreground;
//! no other run is ever zero, so two masks are equal iff their runs are equal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct BinaryMask {
    width: usize,
    height: usize,
    runs: Vec<usize>,
}

/// Uncompressed-counts interchange form: `{"size": [H, W], "counts": [...]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RleJson {
    size: [usize; 2],
    counts: Vec<usize>,
}

impl TryFrom<RleJson> for BinaryMask {
    type Error = Error;

    fn try_from(value: RleJson) -> Result<Self> {
        let [height, width] = value.size;
        BinaryMask::from_runs(width, height, value.counts)
    }
}

impl From<BinaryMask> for RleJson {
    fn from(mask: BinaryMask) -> Self {
        RleJson {
            size: [mask.height, mask.width],
            counts: mask.runs,
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::dim(format!(
            "mask dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Accumulates column-major pixels into canonical runs.
struct RunBuilder {
    runs: Vec<usize>,
    value: bool,
    len: usize,
}

impl RunBuilder {
    fn new() -> Self {
        RunBuilder {
            runs: Vec::new(),
            value: false,
            len: 0,
        }
    }

    fn push_run(&mut self, value: bool, n: usize) {
        if n == 0 {
            return;
        }
        if value != self.value {
            self.runs.push(self.len);
            self.value = value;
            self.len = 0;
        }
        self.len += n;
    }

    fn finish(mut self) -> Vec<usize> {
        self.runs.push(self.len);
        // A trailing zero can only come from an all-background mask of size 0,
        // which dimension checks rule out.
        self.runs
    }
}

/// Walks a run list one segment at a time.
struct RunCursor<'a> {
    runs: &'a [usize],
    idx: usize,
    left: usize,
}

impl<'a> RunCursor<'a> {
    fn new(runs: &'a [usize]) -> Self {
        let mut cursor = RunCursor {
            runs,
            idx: 0,
            left: runs.first().copied().unwrap_or(0),
        };
        cursor.skip_empty();
        cursor
    }

    fn skip_empty(&mut self) {
        while self.left == 0 && self.idx + 1 < self.runs.len() {
            self.idx += 1;
            self.left = self.runs[self.idx];
        }
    }

    fn value(&self) -> bool {
        self.idx % 2 == 1
    }

    fn advance(&mut self, n: usize) {
        self.left -= n;
        self.skip_empty();
    }
}

impl BinaryMask {
    /// Builds a mask from a run list, canonicalizing zero-length interior runs.
    pub fn from_runs(width: usize, height: usize, runs: Vec<usize>) -> Result<Self> {
        check_dims(width, height)?;
        let total: usize = runs.iter().sum();
        if total != width * height {
            return Err(Error::dim(format!(
                "run lengths sum to {total}, expected {}",
                width * height
            )));
        }
        let mut builder = RunBuilder::new();
        for (i, &n) in runs.iter().enumerate() {
            builder.push_run(i % 2 == 1, n);
        }
        Ok(BinaryMask {
            width,
            height,
            runs: builder.finish(),
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(BinaryMask {
            width,
            height,
            runs: vec![width * height],
        })
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(BinaryMask {
            width,
            height,
            runs: vec![0, width * height],
        })
    }

    /// Encodes a dense row-major grid (`grid[y * width + x]`).
    pub fn encode(width: usize, height: usize, grid: &[bool]) -> Result<Self> {
        check_dims(width, height)?;
        if grid.len() != width * height {
            return Err(Error::dim(format!(
                "grid has {} pixels, expected {width}x{height}",
                grid.len()
            )));
        }
        Ok(Self::from_fn(width, height, |x, y| grid[y * width + x]))
    }

    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut builder = RunBuilder::new();
        for x in 0..width {
            for y in 0..height {
                builder.push_run(f(x, y), 1);
            }
        }
        BinaryMask {
            width,
            height,
            runs: builder.finish(),
        }
    }

    /// Mask with exactly the listed `(x, y)` pixels set; out-of-range pixels are an error.
    pub fn from_pixels(width: usize, height: usize, pixels: &[(usize, usize)]) -> Result<Self> {
        check_dims(width, height)?;
        let mut grid = vec![false; width * height];
        for &(x, y) in pixels {
            if x >= width || y >= height {
                return Err(Error::dim(format!("pixel ({x}, {y}) outside {width}x{height}")));
            }
            grid[y * width + x] = true;
        }
        Self::encode(width, height, &grid)
    }

    /// Axis-aligned rectangle `[x0, x0+w) x [y0, y0+h)`, clipped to the lattice.
    pub fn rect(width: usize, height: usize, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self::from_fn(width, height, |x, y| {
            x >= x0 && x < x0 + w && y >= y0 && y < y0 + h
        }))
    }

    /// Dense row-major decode.
    pub fn decode(&self) -> Vec<bool> {
        let mut grid = vec![false; self.width * self.height];
        let mut pos = 0;
        for (i, &n) in self.runs.iter().enumerate() {
            if i % 2 == 1 {
                for idx in pos..pos + n {
                    let (x, y) = (idx / self.height, idx % self.height);
                    grid[y * self.width + x] = true;
                }
            }
            pos += n;
        }
        grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn runs(&self) -> &[usize] {
        &self.runs
    }

    pub fn area(&self) -> usize {
        self.runs.iter().skip(1).step_by(2).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let target = x * self.height + y;
        let mut pos = 0;
        for (i, &n) in self.runs.iter().enumerate() {
            if target < pos + n {
                return i % 2 == 1;
            }
            pos += n;
        }
        false
    }

    /// Iterates foreground pixels as `(x, y)` in column-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let height = self.height;
        let mut pos = 0;
        self.runs.iter().enumerate().flat_map(move |(i, &n)| {
            let start = pos;
            pos += n;
            let range = if i % 2 == 1 { start..start + n } else { 0..0 };
            range.map(move |idx| (idx / height, idx % height))
        })
    }

    fn same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::dim(format!(
                "mask size mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// `(|a ∩ b|, |a ∪ b|)` by merging the two run lists.
    pub fn overlap(&self, other: &BinaryMask) -> Result<(usize, usize)> {
        self.same_dims(other)?;
        let mut a = RunCursor::new(&self.runs);
        let mut b = RunCursor::new(&other.runs);
        let mut remaining = self.width * self.height;
        let (mut inter, mut union) = (0, 0);
        while remaining > 0 {
            let n = a.left.min(b.left);
            match (a.value(), b.value()) {
                (true, true) => {
                    inter += n;
                    union += n;
                }
                (true, false) | (false, true) => union += n,
                (false, false) => {}
            }
            a.advance(n);
            b.advance(n);
            remaining -= n;
        }
        Ok((inter, union))
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> Result<usize> {
        Ok(self.overlap(other)?.0)
    }

    pub fn union_area(&self, other: &BinaryMask) -> Result<usize> {
        Ok(self.overlap(other)?.1)
    }

    /// Per-frame IoU; both-empty counts as a perfect match.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        let (inter, union) = self.overlap(other)?;
        Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
    }

    fn combine(&self, other: &BinaryMask, op: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.same_dims(other)?;
        let mut a = RunCursor::new(&self.runs);
        let mut b = RunCursor::new(&other.runs);
        let mut remaining = self.width * self.height;
        let mut builder = RunBuilder::new();
        while remaining > 0 {
            let n = a.left.min(b.left);
            builder.push_run(op(a.value(), b.value()), n);
            a.advance(n);
            b.advance(n);
            remaining -= n;
        }
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            runs: builder.finish(),
        })
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a && b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a && !b)
    }

    /// Shifts by `(dx, dy)`; pixels leaving the lattice are dropped.
    pub fn translate(&self, dx: i64, dy: i64) -> BinaryMask {
        let (w, h) = (self.width as i64, self.height as i64);
        let grid = self.decode();
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            let (sx, sy) = (x as i64 - dx, y as i64 - dy);
            sx >= 0 && sy >= 0 && sx < w && sy < h && grid[(sy * w + sx) as usize]
        })
    }

    /// Area-averaged coverage on a `cells_w x cells_h` grid.
    ///
    /// A pixel belongs to the cell containing its center under a uniform
    /// real-valued partition of the lattice, so non-divisible sizes give cells
    /// of slightly different pixel counts.
    pub fn downsample_to_grid(&self, cells_w: usize, cells_h: usize) -> Result<CellGrid> {
        if cells_w == 0 || cells_h == 0 {
            return Err(Error::dim(format!(
                "downsample target must be positive, got {cells_w}x{cells_h}"
            )));
        }
        if cells_w > self.width || cells_h > self.height {
            return Err(Error::dim(format!(
                "cannot downsample {}x{} to larger grid {cells_w}x{cells_h}",
                self.width, self.height
            )));
        }
        let col_cell: Vec<usize> = (0..self.width)
            .map(|x| (2 * x + 1) * cells_w / (2 * self.width))
            .collect();
        let row_cell: Vec<usize> = (0..self.height)
            .map(|y| (2 * y + 1) * cells_h / (2 * self.height))
            .collect();
        let mut cols_per_cell = vec![0usize; cells_w];
        for &c in &col_cell {
            cols_per_cell[c] += 1;
        }
        let mut rows_per_cell = vec![0usize; cells_h];
        for &r in &row_cell {
            rows_per_cell[r] += 1;
        }
        let mut covered = vec![0usize; cells_w * cells_h];
        for (x, y) in self.pixels() {
            covered[row_cell[y] * cells_w + col_cell[x]] += 1;
        }
        let cell_pixels: Vec<usize> = rows_per_cell
            .iter()
            .flat_map(|&rows| cols_per_cell.iter().map(move |&cols| rows * cols))
            .collect();
        let weights = covered
            .iter()
            .zip(&cell_pixels)
            .map(|(&c, &n)| c as f64 / n as f64)
            .collect();
        Ok(CellGrid {
            width: cells_w,
            height: cells_h,
            weights,
            cell_pixels,
        })
    }

    /// Foreground pixels with a 4-neighbour that is background or off the lattice.
    pub fn boundary(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        let grid = self.decode();
        let fg = |x: isize, y: isize| {
            x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && grid[y as usize * w + x as usize]
        };
        BinaryMask::from_fn(w, h, |x, y| {
            let (xi, yi) = (x as isize, y as isize);
            grid[y * w + x] && !(fg(xi - 1, yi) && fg(xi + 1, yi) && fg(xi, yi - 1) && fg(xi, yi + 1))
        })
    }

    /// Chebyshev dilation: every pixel within `radius` (max-norm) of a foreground pixel.
    pub fn dilate(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        let grid = self.decode();
        // Separable square structuring element: rows, then columns.
        let mut horiz = vec![false; w * h];
        for y in 0..h {
            let mut prefix = vec![0usize; w + 1];
            for x in 0..w {
                prefix[x + 1] = prefix[x] + grid[y * w + x] as usize;
            }
            for x in 0..w {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius + 1).min(w);
                horiz[y * w + x] = prefix[hi] > prefix[lo];
            }
        }
        let mut out = vec![false; w * h];
        for x in 0..w {
            let mut prefix = vec![0usize; h + 1];
            for y in 0..h {
                prefix[y + 1] = prefix[y] + horiz[y * w + x] as usize;
            }
            for y in 0..h {
                let lo = y.saturating_sub(radius);
                let hi = (y + radius + 1).min(h);
                out[y * w + x] = prefix[hi] > prefix[lo];
            }
        }
        BinaryMask::from_fn(w, h, |x, y| out[y * w + x])
    }

    /// Foreground pixels within Chebyshev distance `radius` of the boundary.
    pub fn boundary_mask(&self, radius: usize) -> BinaryMask {
        let band = self.boundary().dilate(radius);
        band.intersection(self)
            .expect("dilated boundary shares the mask's dimensions")
    }
}

/// Fractional per-cell coverage produced by [`BinaryMask::downsample_to_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub width: usize,
    pub height: usize,
    /// Row-major, `weights[cy * width + cx]` in `[0, 1]`.
    pub weights: Vec<f64>,
    /// Number of full-resolution pixels assigned to each cell.
    pub cell_pixels: Vec<usize>,
}

impl CellGrid {
    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.weights[cy * self.width + cx]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ weight · pixels`, which reproduces the mask area.
    pub fn covered_pixels(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.cell_pixels)
            .map(|(w, &n)| w * n as f64)
            .sum()
    }
}
