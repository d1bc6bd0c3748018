//! Deterministic fusion of the truncated stereo volume with the monocular
//! volume, disparity extraction, upsampling and left-right filtering.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::map::FloatMap;
use crate::numeric::{argmax, pairwise_sum, softmax};
use crate::scaling::warp_right_to_left;
use crate::volume::CorrelationVolume;

pub const DEFAULT_W_MONO: f64 = 0.5;

/// Row-wise `(1 - w) softmax(V_S) + w softmax(V_M)`.
pub fn fuse_volumes(v_stereo: &CorrelationVolume, v_mono: &CorrelationVolume, w_mono: f64) -> Result<CorrelationVolume> {
    if !(0.0..=1.0).contains(&w_mono) {
        return Err(Error::Parameter(format!("w_mono must lie in [0, 1], got {w_mono}")));
    }
    v_stereo.ensure_same_shape(v_mono, "fusion")?;
    let mut out = CorrelationVolume::zeros(v_stereo.rows(), v_stereo.cols());
    for i in 0..v_stereo.rows() {
        for j in 0..v_stereo.cols() {
            let ps = softmax(v_stereo.row(i, j));
            let pm = softmax(v_mono.row(i, j));
            for ((o, s), m) in out.row_mut(i, j).iter_mut().zip(ps).zip(pm) {
                *o = (1.0 - w_mono) * s + w_mono * m;
            }
        }
    }
    Ok(out)
}

/// Adds the log-kernel `-(j - k - M̂)² / 2σ²` to every row, concentrating the
/// monocular branch around the scaled monocular disparity. Rows with invalid
/// `M̂` are left untouched.
pub fn anchor_mono_volume(v_mono: &CorrelationVolume, m_hat: &FloatMap, sigma: f64) -> Result<CorrelationVolume> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("anchor width must be positive, got {sigma}")));
    }
    v_mono.ensure_matches_map(m_hat, "anchor")?;
    let mut out = v_mono.clone();
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            if !m_hat.is_valid(j, i) {
                continue;
            }
            let target = m_hat.get(j, i);
            for (k, e) in out.row_mut(i, j).iter_mut().enumerate() {
                let r = j as f64 - k as f64 - target;
                *e -= r * r / (2.0 * sigma * sigma);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExtractMode {
    #[default]
    Wta,
    Softargmax,
}

impl FromStr for ExtractMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wta" => Ok(ExtractMode::Wta),
            "softargmax" => Ok(ExtractMode::Softargmax),
            other => Err(Error::Parameter(format!(
                "unknown extraction mode '{other}' (expected wta or softargmax)"
            ))),
        }
    }
}

impl fmt::Display for ExtractMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtractMode::Wta => "wta",
            ExtractMode::Softargmax => "softargmax",
        })
    }
}

fn is_distribution(row: &[f64]) -> bool {
    row.iter().all(|p| *p >= 0.0) && (pairwise_sum(row) - 1.0).abs() < 1e-9
}

/// `j - argmax_k` (first maximum) or `j - E[k]`. Rows that already form a
/// probability distribution are used as is; anything else goes through softmax.
pub fn extract_disparity(v: &CorrelationVolume, mode: ExtractMode) -> FloatMap {
    FloatMap::from_fn(v.cols(), v.rows(), |j, i| {
        let row = v.row(i, j);
        let k = match mode {
            ExtractMode::Wta => argmax(row) as f64,
            ExtractMode::Softargmax => {
                let p = if is_distribution(row) {
                    row.to_vec()
                } else {
                    softmax(row)
                };
                let terms: Vec<f64> = p.iter().enumerate().map(|(k, pk)| k as f64 * pk).collect();
                pairwise_sum(&terms)
            }
        };
        j as f64 - k
    })
}

fn source_coord(x: usize, n: usize) -> (usize, usize, f64) {
    let s = ((x as f64 + 0.5) / 4.0 - 0.5).clamp(0.0, (n - 1) as f64);
    let x0 = s.floor() as usize;
    let x1 = (x0 + 1).min(n - 1);
    (x0, x1, s - x0 as f64)
}

/// Bilinear 4x upsampling (half-pixel centers, replicated borders) with values
/// multiplied by 4. A pixel is invalid if any of its bilinear taps is.
pub fn upsample_disparity(d: &FloatMap) -> FloatMap {
    let (w, h) = (d.width(), d.height());
    let mut out = FloatMap::filled(w * 4, h * 4, 0.0);
    if w == 0 || h == 0 {
        return out;
    }
    for y in 0..h * 4 {
        let (y0, y1, fy) = source_coord(y, h);
        for x in 0..w * 4 {
            let (x0, x1, fx) = source_coord(x, w);
            let taps = [(x0, y0, (1.0 - fx) * (1.0 - fy)), (x1, y0, fx * (1.0 - fy)), (x0, y1, (1.0 - fx) * fy), (x1, y1, fx * fy)];
            let mut acc = 0.0;
            let mut ok = true;
            for (tx, ty, wgt) in taps {
                if wgt > 0.0 {
                    ok &= d.is_valid(tx, ty);
                    acc += wgt * d.get(tx, ty);
                }
            }
            if ok {
                out.set(x, y, 4.0 * acc);
            } else {
                out.invalidate(x, y);
            }
        }
    }
    out
}

/// Invalidates left pixels whose disparity disagrees with the warped right
/// disparity by more than `tau`, or whose match falls outside the image.
pub fn lr_consistency_filter(d_left: &FloatMap, d_right: &FloatMap, tau: f64) -> Result<FloatMap> {
    let warped = warp_right_to_left(d_left, d_right)?;
    let mut out = d_left.clone();
    for y in 0..out.height() {
        for x in 0..out.width() {
            let consistent = warped.is_valid(x, y) && (d_left.get(x, y) - warped.get(x, y)).abs() <= tau;
            if !consistent {
                out.invalidate(x, y);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::downsample_quarter;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(rows: usize, cols: usize, seed: u64) -> CorrelationVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CorrelationVolume::from_fn(rows, cols, |_, _, _| rng.gen_range(-5.0..5.0))
    }

    #[test]
    fn fusion_endpoints() {
        let s = random_volume(2, 6, 1);
        let m = random_volume(2, 6, 2);
        let f0 = fuse_volumes(&s, &m, 0.0).unwrap();
        let f1 = fuse_volumes(&s, &m, 1.0).unwrap();
        for i in 0..2 {
            for j in 0..6 {
                assert_eq!(f0.row(i, j), softmax(s.row(i, j)).as_slice());
                assert_eq!(f1.row(i, j), softmax(m.row(i, j)).as_slice());
            }
        }
    }

    #[test]
    fn agreeing_one_hot_branches_stay_one_hot() {
        let one_hot = CorrelationVolume::from_fn(1, 8, |_, _, k| if k == 3 { 1000.0 } else { 0.0 });
        for w in [0.0, 0.3, 0.5, 1.0] {
            let f = fuse_volumes(&one_hot, &one_hot, w).unwrap();
            assert!((f.get(0, 4, 3) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_rejects_bad_weight_and_shape() {
        let s = random_volume(2, 6, 1);
        assert!(matches!(fuse_volumes(&s, &s, 1.5), Err(Error::Parameter(_))));
        assert!(matches!(fuse_volumes(&s, &s, -0.1), Err(Error::Parameter(_))));
        assert!(matches!(
            fuse_volumes(&s, &random_volume(2, 5, 1), 0.5),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn extraction_examples() {
        let onehot = CorrelationVolume::from_fn(1, 8, |_, j, k| if j == 5 && k == 2 { 1.0 } else if j == 5 { 0.0 } else { 0.125 });
        assert_eq!(extract_disparity(&onehot, ExtractMode::Wta).get(5, 0), 3.0);
        assert_eq!(extract_disparity(&onehot, ExtractMode::Softargmax).get(5, 0), 3.0);

        let two = CorrelationVolume::from_fn(1, 8, |_, _, k| if k == 1 || k == 3 { 0.5 } else { 0.0 });
        assert_eq!(extract_disparity(&two, ExtractMode::Wta).get(5, 0), 4.0);
        assert_eq!(extract_disparity(&two, ExtractMode::Softargmax).get(5, 0), 3.0);
    }

    #[test]
    fn softargmax_extraction_matches_direct_sum() {
        let raw = random_volume(3, 9, 7);
        let fused = fuse_volumes(&raw, &random_volume(3, 9, 8), 0.4).unwrap();
        let d = extract_disparity(&fused, ExtractMode::Softargmax);
        for i in 0..3 {
            for j in 0..9 {
                let mut e = 0.0;
                for k in 0..9 {
                    e += k as f64 * fused.get(i, j, k);
                }
                assert!((d.get(j, i) - (j as f64 - e)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn raw_logits_are_normalized_before_expectation() {
        let v = CorrelationVolume::from_fn(1, 8, |_, _, k| if k == 2 { 20.0 } else { 0.0 });
        let d = extract_disparity(&v, ExtractMode::Softargmax);
        assert!((d.get(5, 0) - crate::scaling::softargmax_disparity_left(&v).get(5, 0)).abs() < 1e-12);
    }

    #[test]
    fn parse_modes() {
        assert_eq!("wta".parse::<ExtractMode>().unwrap(), ExtractMode::Wta);
        assert_eq!("softargmax".parse::<ExtractMode>().unwrap(), ExtractMode::Softargmax);
        assert!(matches!("mean".parse::<ExtractMode>(), Err(Error::Parameter(_))));
    }

    #[test]
    fn upsample_constant() {
        let d = FloatMap::filled(5, 3, 2.5);
        let u = upsample_disparity(&d);
        assert_eq!((u.width(), u.height()), (20, 12));
        assert!(u.data().iter().all(|v| *v == 10.0));
    }

    #[test]
    fn upsample_two_pixel_row() {
        let d = FloatMap::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let u = upsample_disparity(&d);
        // half-pixel source coordinates clamp to [0, 1]: -0.375, -0.125, 0.125, ..., 1.375
        let expected = [0.0, 0.0, 0.5, 1.5, 2.5, 3.5, 4.0, 4.0];
        for y in 0..4 {
            for x in 0..8 {
                assert!((u.get(x, y) - expected[x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsample_then_downsample_is_consistent_on_linear_maps() {
        let d = FloatMap::from_fn(8, 6, |x, y| 0.3 * x as f64 - 0.2 * y as f64 + 5.0);
        let back = downsample_quarter(&upsample_disparity(&d)).unwrap();
        for y in 1..5 {
            for x in 1..7 {
                assert!((back.get(x, y) / 4.0 - d.get(x, y)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn upsample_propagates_invalid_taps() {
        let mut d = FloatMap::filled(4, 4, 1.0);
        d.invalidate(0, 0);
        let u = upsample_disparity(&d);
        assert!(!u.is_valid(0, 0));
        assert!(!u.is_valid(5, 5));
        assert!(u.is_valid(15, 15));
    }

    #[test]
    fn lr_filter_examples() {
        let d = FloatMap::filled(10, 2, 0.0);
        assert_eq!(lr_consistency_filter(&d, &d, 1.0).unwrap().count_valid(), 20);

        let dl = FloatMap::filled(10, 2, 5.0);
        let dr = FloatMap::filled(10, 2, 0.0);
        assert_eq!(lr_consistency_filter(&dl, &dr, 1.0).unwrap().count_valid(), 0);
    }

    #[test]
    fn anchor_peaks_at_scaled_mono() {
        let flat = CorrelationVolume::zeros(1, 10);
        let m_hat = FloatMap::filled(10, 1, 3.0);
        let a = anchor_mono_volume(&flat, &m_hat, 1.0).unwrap();
        assert_eq!(argmax(a.row(0, 8)), 5);
        assert!((a.get(0, 8, 4) + 0.5).abs() < 1e-12);
        let mut partial = m_hat.clone();
        partial.invalidate(8, 0);
        let b = anchor_mono_volume(&flat, &partial, 1.0).unwrap();
        assert!(b.row(0, 8).iter().all(|v| *v == 0.0));
        assert!(matches!(anchor_mono_volume(&flat, &m_hat, 0.0), Err(Error::Parameter(_))));
    }

    proptest! {
        #[test]
        fn fused_rows_sum_to_one(seed in 0u64..1000, w in 0.0f64..=1.0) {
            let f = fuse_volumes(&random_volume(2, 7, seed), &random_volume(2, 7, seed + 1), w).unwrap();
            for i in 0..2 {
                for j in 0..7 {
                    prop_assert!((f.row(i, j).iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn wta_ignores_monotone_row_transforms(seed in 0u64..1000, gain in 0.1f64..5.0) {
            let v = random_volume(2, 7, seed);
            let t = CorrelationVolume::from_vec(2, 7, v.data().iter().map(|x| (gain * x).exp() + 3.0).collect()).unwrap();
            prop_assert_eq!(extract_disparity(&v, ExtractMode::Wta), extract_disparity(&t, ExtractMode::Wta));
        }
    }
}
