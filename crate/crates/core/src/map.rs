//! Dense single-channel maps and boolean masks.
//!
//! Values are held as `f64` in memory; the on-disk PFM representation is
//! 32-bit. Every map carries a per-pixel validity flag, and invalid pixels
//! never take part in reductions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

/// Per-pixel confidence in `[0, 1]`.
pub type ConfidenceMap = FloatMap;

impl FloatMap {
    /// Builds a map from row-major values. Non-finite values are marked invalid.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        let valid = data.iter().map(|v| v.is_finite()).collect();
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    pub fn with_mask(width: usize, height: usize, data: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let mut map = Self::from_vec(width, height, data)?;
        if valid.len() != width * height {
            return Err(Error::Shape(format!(
                "mask has {} entries for {width}x{height}",
                valid.len()
            )));
        }
        for (v, m) in map.valid.iter_mut().zip(valid) {
            *v = *v && m;
        }
        Ok(map)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
            valid: vec![value.is_finite(); width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        let valid = data.iter().map(|v| v.is_finite()).collect();
        Self {
            width,
            height,
            data,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Writes a value; non-finite values invalidate the pixel.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let idx = y * self.width + x;
        self.data[idx] = value;
        self.valid[idx] = value.is_finite();
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Iterator over `(value)` of valid pixels in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.data
            .iter()
            .zip(&self.valid)
            .filter_map(|(v, ok)| ok.then_some(*v))
    }

    /// Applies `f` to every valid pixel, keeping the validity mask.
    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> FloatMap {
        let mut out = self.clone();
        for (v, ok) in out.data.iter_mut().zip(out.valid.iter_mut()) {
            if *ok {
                *v = f(*v);
                *ok = v.is_finite();
            }
        }
        out
    }

    /// `(min, max)` over valid pixels, or `None` if nothing is valid.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub fn same_shape(&self, other: &FloatMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_shape(&self, other: &FloatMap, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

/// Boolean per-pixel mask (occlusion masks, evaluation regions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "expected {} mask entries for {width}x{height}, got {}",
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

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn not(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    pub fn same_shape_as(&self, map: &FloatMap) -> bool {
        self.width == map.width() && self.height == map.height()
    }
}

impl From<&FloatMap> for Mask {
    /// Validity mask of a float map.
    fn from(map: &FloatMap) -> Self {
        Mask {
            width: map.width(),
            height: map.height(),
            data: map.valid_mask().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_values_are_invalid() {
        let m = FloatMap::from_vec(2, 1, vec![1.0, f64::NAN]).unwrap();
        assert!(m.is_valid(0, 0));
        assert!(!m.is_valid(1, 0));
        assert_eq!(m.count_valid(), 1);
    }

    #[test]
    fn wrong_length_is_shape_error() {
        assert!(matches!(
            FloatMap::from_vec(2, 2, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn valid_range_skips_invalid() {
        let m = FloatMap::with_mask(3, 1, vec![5.0, -1.0, 2.0], vec![true, false, true]).unwrap();
        assert_eq!(m.valid_range(), Some((2.0, 5.0)));
    }
}
