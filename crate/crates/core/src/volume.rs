//! Correlation volumes over (row, left column, right column), surface normals
//! from monocular depth, depth-bin masks and the deterministic mono-volume
//! aggregation.

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::map::FloatMap;

pub const DEFAULT_BINS: usize = 8;
pub const DEFAULT_BETA: f64 = 10.0;

/// Dense `(rows, cols, cols)` volume; entry `(i, j, k)` relates left column `j`
/// to right column `k` on row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CorrelationVolume {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols * cols {
            return Err(Error::Shape(format!(
                "volume {rows}x{cols}x{cols} needs {} entries, got {}",
                rows * cols * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols * cols);
        for i in 0..rows {
            for j in 0..cols {
                for k in 0..cols {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.cols + j) * self.cols + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.idx(i, j, k);
        self.data[idx] = v;
    }

    /// Scores of left pixel `(i, j)` against every right column.
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let start = self.idx(i, j, 0);
        &self.data[start..start + self.cols]
    }

    pub fn row_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let start = self.idx(i, j, 0);
        &mut self.data[start..start + self.cols]
    }

    /// Scores of right pixel `(i, k)` against every left column.
    pub fn column(&self, i: usize, k: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j, k)).collect()
    }

    /// Swaps the left/right column axes, giving the right view's volume.
    pub fn transposed(&self) -> CorrelationVolume {
        CorrelationVolume::from_fn(self.rows, self.cols, |i, j, k| self.get(i, k, j))
    }

    pub fn scaled(&self, factor: f64) -> CorrelationVolume {
        CorrelationVolume {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn same_shape(&self, other: &CorrelationVolume) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub(crate) fn ensure_same_shape(&self, other: &CorrelationVolume, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: volume {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    pub(crate) fn ensure_matches_map(&self, map: &FloatMap, what: &str) -> Result<()> {
        if map.height() == self.rows && map.width() == self.cols {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: map {}x{} vs volume {}x{}",
                map.width(),
                map.height(),
                self.cols,
                self.rows
            )))
        }
    }
}

/// Unit surface normals `(n_x, n_y, n_z)` with `n_z > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl NormalMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn from_vectors(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "normal map {width}x{height} needs {} vectors, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Anything with a per-pixel descriptor vector that can be correlated.
pub trait Descriptors {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn channels(&self) -> usize;
    /// Row-major, channels contiguous per pixel.
    fn dense(&self) -> Vec<f64>;
}

impl Descriptors for FeatureMap {
    fn width(&self) -> usize {
        FeatureMap::width(self)
    }
    fn height(&self) -> usize {
        FeatureMap::height(self)
    }
    fn channels(&self) -> usize {
        FeatureMap::channels(self)
    }
    fn dense(&self) -> Vec<f64> {
        self.data().iter().map(|v| *v as f64).collect()
    }
}

impl Descriptors for NormalMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        3
    }
    fn dense(&self) -> Vec<f64> {
        self.data.iter().flat_map(|n| n.iter().copied()).collect()
    }
}

/// Full per-row dot-product volume between two descriptor maps.
pub fn build_correlation_volume<D: Descriptors>(left: &D, right: &D) -> Result<CorrelationVolume> {
    if left.width() != right.width()
        || left.height() != right.height()
        || left.channels() != right.channels()
    {
        return Err(Error::Shape(format!(
            "descriptor maps differ: {}x{}x{} vs {}x{}x{}",
            left.width(),
            left.height(),
            left.channels(),
            right.width(),
            right.height(),
            right.channels()
        )));
    }
    let (w, h, c) = (left.width(), left.height(), left.channels());
    let (fl, fr) = (left.dense(), right.dense());
    let mut vol = CorrelationVolume::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let a = &fl[(i * w + j) * c..(i * w + j + 1) * c];
            let out = vol.row_mut(i, j);
            for (k, slot) in out.iter_mut().enumerate() {
                let b = &fr[(i * w + k) * c..(i * w + k + 1) * c];
                *slot = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
    }
    Ok(vol)
}

/// Central difference, one-sided at borders and next to invalid pixels.
fn derivative(get: impl Fn(isize) -> Option<f64>, at: isize) -> f64 {
    match (get(at - 1), get(at), get(at + 1)) {
        (Some(a), _, Some(b)) => (b - a) / 2.0,
        (None, Some(c), Some(b)) => b - c,
        (Some(a), Some(c), None) => c - a,
        _ => 0.0,
    }
}

/// Normals of the depth surface `λM` with `λ = width / 10`.
pub fn compute_normals(m: &FloatMap) -> Result<NormalMap> {
    let (w, h) = (m.width(), m.height());
    if w < 3 || h < 3 {
        return Err(Error::Shape(format!(
            "normal estimation needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let gain = w as f64 / 10.0;
    let sample = |x: isize, y: isize| -> Option<f64> {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            return None;
        }
        let (x, y) = (x as usize, y as usize);
        m.is_valid(x, y).then(|| m.get(x, y))
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = derivative(|t| sample(t, y), x);
            let dy = derivative(|t| sample(x, t), y);
            let n = [-gain * dx, -gain * dy, 1.0];
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            data.push([n[0] / norm, n[1] / norm, n[2] / norm]);
        }
    }
    Ok(NormalMap {
        width: w,
        height: h,
        data,
    })
}

/// Per-pixel depth-bin assignment; bin `n` covers `[n/N, (n+1)/N)` and the top bin
/// also takes `M == 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinMasks {
    width: usize,
    height: usize,
    bins: usize,
    assignment: Vec<Option<usize>>,
}

impl BinMasks {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bin_of(&self, x: usize, y: usize) -> Option<usize> {
        self.assignment[y * self.width + x]
    }

    #[inline]
    pub fn contains(&self, n: usize, x: usize, y: usize) -> bool {
        self.bin_of(x, y) == Some(n)
    }

    /// Masks with every pixel in bin 0 of a single bin.
    pub fn all_ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bins: 1,
            assignment: vec![Some(0); width * height],
        }
    }
}

fn bin_index(v: f64, bins: usize) -> usize {
    let n = bins as f64;
    let mut b = ((v * n).floor().max(0.0) as usize).min(bins - 1);
    // align with the literal interval test n/N <= v < (n+1)/N
    if b + 1 < bins && v >= (b + 1) as f64 / n {
        b += 1;
    } else if b > 0 && v < b as f64 / n {
        b -= 1;
    }
    b
}

pub fn depth_bin_masks(m: &FloatMap, bins: usize) -> Result<BinMasks> {
    if bins == 0 {
        return Err(Error::Parameter("bin count must be at least 1".into()));
    }
    let mut assignment = Vec::with_capacity(m.len());
    for (v, ok) in m.data().iter().zip(m.valid_mask()) {
        if !ok {
            assignment.push(None);
            continue;
        }
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Domain(format!(
                "depth-bin masks need values in [0, 1], got {v}"
            )));
        }
        assignment.push(Some(bin_index(*v, bins)));
    }
    Ok(BinMasks {
        width: m.width(),
        height: m.height(),
        bins,
        assignment,
    })
}

/// Zeroes every entry whose left pixel or right pixel is outside bin `n`.
pub fn mask_volume(
    v: &CorrelationVolume,
    left: &BinMasks,
    right: &BinMasks,
    n: usize,
) -> Result<CorrelationVolume> {
    if n >= left.bins() || n >= right.bins() {
        return Err(Error::Index(format!(
            "bin {n} out of range for {} bins",
            left.bins().min(right.bins())
        )));
    }
    for (masks, side) in [(left, "left"), (right, "right")] {
        if masks.height() != v.rows() || masks.width() != v.cols() {
            return Err(Error::Shape(format!(
                "{side} masks {}x{} vs volume {}x{}",
                masks.width(),
                masks.height(),
                v.cols(),
                v.rows()
            )));
        }
    }
    let mut out = v.clone();
    for i in 0..v.rows() {
        for j in 0..v.cols() {
            let lm = left.contains(n, j, i);
            let row = out.row_mut(i, j);
            for (k, e) in row.iter_mut().enumerate() {
                if !(lm && right.contains(n, k, i)) {
                    *e = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// Mean of the 3x3 spatial neighbourhood taken along constant disparity
/// `j - k`, with replicated edges.
pub fn box_filter_disparity(v: &CorrelationVolume) -> CorrelationVolume {
    let (rows, cols) = (v.rows(), v.cols());
    let clamp = |x: isize, n: usize| x.clamp(0, n as isize - 1) as usize;
    CorrelationVolume::from_fn(rows, cols, |i, j, k| {
        let mut acc = 0.0;
        for di in -1isize..=1 {
            let ii = clamp(i as isize + di, rows);
            for dj in -1isize..=1 {
                let jj = clamp(j as isize + dj, cols);
                let kk = clamp(k as isize + (jj as isize - j as isize), cols);
                acc += v.get(ii, jj, kk);
            }
        }
        acc / 9.0
    })
}

/// Training-free stand-in for the learned mono-volume regularisation: sums the
/// masked volumes, box-filters along disparity and applies the sharpness gain.
/// Returns `(V_D, V_C)`, which coincide for this substitute.
pub fn aggregate_mono_volumes(
    masked: &[CorrelationVolume],
    m_left: &FloatMap,
    m_right: &FloatMap,
    beta: f64,
) -> Result<(CorrelationVolume, CorrelationVolume)> {
    let first = masked
        .first()
        .ok_or_else(|| Error::Parameter("no masked volumes to aggregate".into()))?;
    for v in &masked[1..] {
        first.ensure_same_shape(v, "masked volumes")?;
    }
    first.ensure_matches_map(m_left, "left mono map")?;
    first.ensure_matches_map(m_right, "right mono map")?;

    let mut sum = CorrelationVolume::zeros(first.rows(), first.cols());
    for v in masked {
        for (s, x) in sum.data.iter_mut().zip(&v.data) {
            *s += x;
        }
    }
    let vd = box_filter_disparity(&sum).scaled(beta);
    let vc = vd.clone();
    Ok((vd, vc))
}
