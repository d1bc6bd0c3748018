//! Quarter-resolution resampling and census descriptors.
//!
//! Census bits are encoded as ±1 so that the dot product of two descriptors
//! equals `D - 2 * hamming`, which lets the stereo correlation volume be built
//! with the same dot-product routine as the normal-map volume.

use crate::error::{Error, Result};
use crate::map::FloatMap;

pub const DEFAULT_CENSUS_WINDOW: usize = 5;

/// Averages each 4x4 block. A block with any invalid source pixel is invalid.
pub fn downsample_quarter(map: &FloatMap) -> Result<FloatMap> {
    let (w, h) = (map.width(), map.height());
    if w % 4 != 0 || h % 4 != 0 || w == 0 || h == 0 {
        return Err(Error::Shape(format!(
            "quarter downsampling needs dimensions divisible by 4, got {w}x{h}"
        )));
    }
    let (qw, qh) = (w / 4, h / 4);
    let mut out = FloatMap::filled(qw, qh, 0.0);
    for qy in 0..qh {
        for qx in 0..qw {
            let mut sum = 0.0;
            let mut ok = true;
            for y in qy * 4..qy * 4 + 4 {
                for x in qx * 4..qx * 4 + 4 {
                    ok &= map.is_valid(x, y);
                    sum += map.get(x, y);
                }
            }
            if ok {
                out.set(qx, qy, sum / 16.0);
            } else {
                out.set(qx, qy, 0.0);
                out.invalidate(qx, qy);
            }
        }
    }
    Ok(out)
}

/// Per-pixel descriptors with entries in {-1, +1}; channels are contiguous per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<i8>,
}

impl FeatureMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn descriptor(&self, x: usize, y: usize) -> &[i8] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }
}

/// Window offsets in row-major order, center excluded.
pub fn census_offsets(window: usize) -> Vec<(isize, isize)> {
    let r = (window / 2) as isize;
    let mut offsets = Vec::with_capacity(window * window - 1);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx != 0 || dy != 0 {
                offsets.push((dx, dy));
            }
        }
    }
    offsets
}

/// Census transform with strict `>` comparisons and replicated borders.
pub fn census_features(image: &FloatMap, window: usize) -> Result<FeatureMap> {
    if !matches!(window, 3 | 5 | 7) {
        return Err(Error::Parameter(format!("census window must be 3, 5 or 7, got {window}")));
    }
    let (w, h) = (image.width(), image.height());
    let offsets = census_offsets(window);
    let channels = offsets.len();
    let mut data = Vec::with_capacity(w * h * channels);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for y in 0..h {
        for x in 0..w {
            let center = image.get(x, y);
            for &(dx, dy) in &offsets {
                let nx = clamp(x as isize + dx, w);
                let ny = clamp(y as isize + dy, h);
                data.push(if image.get(nx, ny) > center { 1 } else { -1 });
            }
        }
    }
    Ok(FeatureMap {
        width: w,
        height: h,
        channels,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_block_is_preserved() {
        let m = FloatMap::filled(4, 4, 7.0);
        let q = downsample_quarter(&m).unwrap();
        assert_eq!((q.width(), q.height()), (1, 1));
        assert_eq!(q.get(0, 0), 7.0);
    }

    #[test]
    fn ramp_downsamples_to_block_means() {
        // 4 rows x 8 columns, M(x) = x; block means of x are 1.5 and 5.5
        let m = FloatMap::from_fn(8, 4, |x, _| x as f64);
        let q = downsample_quarter(&m).unwrap();
        assert_eq!(q.data(), &[1.5, 5.5]);
    }

    #[test]
    fn indivisible_dims_are_rejected() {
        let m = FloatMap::filled(3, 4, 0.0);
        assert!(matches!(downsample_quarter(&m), Err(Error::Shape(_))));
    }

    #[test]
    fn invalid_source_pixel_invalidates_block() {
        let mut m = FloatMap::filled(8, 4, 1.0);
        m.invalidate(5, 2);
        let q = downsample_quarter(&m).unwrap();
        assert!(q.is_valid(0, 0));
        assert!(!q.is_valid(1, 0));
    }

    #[test]
    fn constant_image_gives_all_minus_one() {
        let f = census_features(&FloatMap::filled(6, 5, 0.3), 5).unwrap();
        assert_eq!(f.channels(), 24);
        assert!(f.data().iter().all(|v| *v == -1));
    }

    #[test]
    fn bright_pixel_is_seen_by_each_neighbour() {
        let img = FloatMap::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 1.0 } else { 0.0 });
        let f = census_features(&img, 3).unwrap();
        let offsets = census_offsets(3);
        // The bright pixel itself has no brighter neighbour.
        assert!(f.descriptor(2, 2).iter().all(|v| *v == -1));
        for (ch, &(dx, dy)) in offsets.iter().enumerate() {
            // neighbour located at -offset looks at +offset to reach the center
            let nx = (2 - dx) as usize;
            let ny = (2 - dy) as usize;
            let d = f.descriptor(nx, ny);
            for (c, v) in d.iter().enumerate() {
                assert_eq!(*v, if c == ch { 1 } else { -1 }, "pixel ({nx},{ny}) ch {c}");
            }
        }
    }

    #[test]
    fn even_window_is_parameter_error() {
        let img = FloatMap::filled(4, 4, 0.0);
        assert!(matches!(census_features(&img, 4), Err(Error::Parameter(_))));
    }

    #[test]
    fn identical_images_self_correlate_to_d() {
        let img = FloatMap::from_fn(9, 7, |x, y| ((x * 31 + y * 17) % 11) as f64);
        let f = census_features(&img, 5).unwrap();
        for y in 0..7 {
            for x in 0..9 {
                let d = f.descriptor(x, y);
                let dot: i32 = d.iter().map(|v| (*v as i32) * (*v as i32)).sum();
                assert_eq!(dot, 24);
            }
        }
    }

    proptest! {
        #[test]
        fn dot_equals_d_minus_twice_hamming(
            vals in proptest::collection::vec(-10.0f64..10.0, 49),
            a in 0usize..49, b in 0usize..49,
        ) {
            let img = FloatMap::from_vec(7, 7, vals).unwrap();
            let f = census_features(&img, 3).unwrap();
            let (da, db) = (f.descriptor(a % 7, a / 7), f.descriptor(b % 7, b / 7));
            let dot: i32 = da.iter().zip(db).map(|(p, q)| (*p as i32) * (*q as i32)).sum();
            let hamming = da.iter().zip(db).filter(|(p, q)| p != q).count() as i32;
            prop_assert_eq!(dot, 8 - 2 * hamming);
        }

        #[test]
        fn census_is_invariant_to_monotone_rescaling(
            vals in proptest::collection::vec(0.0f64..1.0, 36),
            gain in 0.1f64..20.0, offset in -5.0f64..5.0,
        ) {
            let img = FloatMap::from_vec(6, 6, vals).unwrap();
            let warped = img.map_valid(|v| (gain * v + offset).exp());
            let a = census_features(&img, 5).unwrap();
            let b = census_features(&warped, 5).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
