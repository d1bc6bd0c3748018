//! Coarse disparity and confidence from a correlation volume, soft left-right
//! consistency, and the joint weighted least-squares scale/shift that maps
//! normalized monocular inverse depth onto disparity.

use crate::error::{Error, Result};
use crate::map::{ConfidenceMap, FloatMap};
use crate::numeric::{interp_row, pairwise_sum, softmax, softplus};
use crate::volume::CorrelationVolume;

pub const DEFAULT_T_LRC: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleShift {
    pub scale: f64,
    pub shift: f64,
}

impl ScaleShift {
    pub const IDENTITY: ScaleShift = ScaleShift {
        scale: 1.0,
        shift: 0.0,
    };

    pub fn new(scale: f64, shift: f64) -> Self {
        Self { scale, shift }
    }

    #[inline]
    pub fn apply(&self, m: f64) -> f64 {
        self.scale * m + self.shift
    }
}

fn expectation(p: &[f64]) -> f64 {
    let terms: Vec<f64> = p.iter().enumerate().map(|(k, pk)| k as f64 * pk).collect();
    pairwise_sum(&terms)
}

/// `D_L[i, j] = j - E_k[k]` under `softmax_k V[i, j, :]`.
pub fn softargmax_disparity_left(v: &CorrelationVolume) -> FloatMap {
    FloatMap::from_fn(v.cols(), v.rows(), |j, i| {
        j as f64 - expectation(&softmax(v.row(i, j)))
    })
}

/// `D_R[i, k] = E_j[j] - k` under `softmax_j V[i, :, k]`.
pub fn softargmax_disparity_right(v: &CorrelationVolume) -> FloatMap {
    FloatMap::from_fn(v.cols(), v.rows(), |k, i| {
        expectation(&softmax(&v.column(i, k))) - k as f64
    })
}

fn normalized_negentropy(logits: &[f64]) -> f64 {
    let p = softmax(logits);
    let terms: Vec<f64> = p
        .iter()
        .map(|pk| if *pk > 0.0 { pk * pk.log2() } else { 0.0 })
        .collect();
    let c = 1.0 + pairwise_sum(&terms) / (logits.len() as f64).log2();
    c.clamp(0.0, 1.0)
}

fn check_entropy_width(v: &CorrelationVolume) -> Result<()> {
    if v.cols() < 2 {
        return Err(Error::Domain(format!(
            "entropy confidence needs at least 2 candidates, got {}",
            v.cols()
        )));
    }
    Ok(())
}

/// One minus the normalized Shannon entropy of each left pixel's match distribution.
pub fn entropy_confidence_left(v: &CorrelationVolume) -> Result<ConfidenceMap> {
    check_entropy_width(v)?;
    Ok(FloatMap::from_fn(v.cols(), v.rows(), |j, i| {
        normalized_negentropy(v.row(i, j))
    }))
}

/// Right-view counterpart of [`entropy_confidence_left`], softmax over left columns.
pub fn entropy_confidence_right(v: &CorrelationVolume) -> Result<ConfidenceMap> {
    check_entropy_width(v)?;
    Ok(FloatMap::from_fn(v.cols(), v.rows(), |k, i| {
        normalized_negentropy(&v.column(i, k))
    }))
}

fn warp(disp: &FloatMap, source: &FloatMap, sign: f64) -> Result<FloatMap> {
    disp.ensure_same_shape(source, "warp")?;
    let (w, h) = (disp.width(), disp.height());
    let mut out = FloatMap::filled(w, h, 0.0);
    for y in 0..h {
        let row = &source.data()[y * w..(y + 1) * w];
        let ok = &source.valid_mask()[y * w..(y + 1) * w];
        for x in 0..w {
            let sample = disp
                .is_valid(x, y)
                .then(|| interp_row(row, ok, x as f64 + sign * disp.get(x, y)))
                .flatten();
            match sample {
                Some(v) => out.set(x, y, v),
                None => out.invalidate(x, y),
            }
        }
    }
    Ok(out)
}

/// Samples `map_r` at `(i, j - D_L[i, j])` with linear interpolation.
pub fn warp_right_to_left(d_left: &FloatMap, map_r: &FloatMap) -> Result<FloatMap> {
    warp(d_left, map_r, -1.0)
}

/// Samples `map_l` at `(i, k + D_R[i, k])`.
pub fn warp_left_to_right(d_right: &FloatMap, map_l: &FloatMap) -> Result<FloatMap> {
    warp(d_right, map_l, 1.0)
}

fn soft_lrc_from(d: &FloatMap, warped: &FloatMap, t_lrc: f64) -> ConfidenceMap {
    let denom = softplus(t_lrc);
    let mut out = FloatMap::filled(d.width(), d.height(), 0.0);
    for y in 0..d.height() {
        for x in 0..d.width() {
            if d.is_valid(x, y) && warped.is_valid(x, y) {
                let diff = (d.get(x, y) - warped.get(x, y)).abs();
                out.set(x, y, softplus(t_lrc - diff) / denom);
            }
        }
    }
    out
}

/// Smooth left-right consistency of the left view; 0 where the warp falls outside the image.
pub fn soft_lrc(d_left: &FloatMap, d_right: &FloatMap, t_lrc: f64) -> Result<ConfidenceMap> {
    let warped = warp_right_to_left(d_left, d_right)?;
    Ok(soft_lrc_from(d_left, &warped, t_lrc))
}

/// Smooth left-right consistency of the right view.
pub fn soft_lrc_right(d_right: &FloatMap, d_left: &FloatMap, t_lrc: f64) -> Result<ConfidenceMap> {
    let warped = warp_left_to_right(d_right, d_left)?;
    Ok(soft_lrc_from(d_right, &warped, t_lrc))
}

/// One view's share of the joint alignment problem.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentView<'a> {
    pub mono: &'a FloatMap,
    pub disparity: &'a FloatMap,
    pub confidence: &'a ConfidenceMap,
}

impl<'a> AlignmentView<'a> {
    fn check(&self) -> Result<()> {
        self.mono.ensure_same_shape(self.disparity, "mono vs disparity")?;
        self.mono.ensure_same_shape(self.confidence, "mono vs confidence")
    }

    /// `(m, d, w)` for every pixel valid in all three maps with positive weight.
    fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.mono.len()).filter_map(move |n| {
            let ok = self.mono.valid_mask()[n]
                && self.disparity.valid_mask()[n]
                && self.confidence.valid_mask()[n];
            let w = self.confidence.data()[n];
            (ok && w > 0.0).then(|| (self.mono.data()[n], self.disparity.data()[n], w))
        })
    }

    /// Weighted sums `[Σw m², Σw m, Σw, Σw m d, Σw d]`.
    fn moments(&self) -> [f64; 5] {
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (m, d, w) in self.samples() {
            cols[0].push(w * m * m);
            cols[1].push(w * m);
            cols[2].push(w);
            cols[3].push(w * m * d);
            cols[4].push(w * d);
        }
        cols.map(|c| pairwise_sum(&c))
    }

    fn objective(&self, ss: ScaleShift) -> f64 {
        let terms: Vec<f64> = self
            .samples()
            .map(|(m, d, w)| {
                let r = ss.apply(m) - d;
                w * r * r
            })
            .collect();
        pairwise_sum(&terms)
    }
}

/// Weighted squared residual summed over both views.
pub fn scale_shift_objective(left: AlignmentView<'_>, right: AlignmentView<'_>, ss: ScaleShift) -> f64 {
    left.objective(ss) + right.objective(ss)
}

/// Closed-form minimiser of `Σ_views Σ w (s m + t - d)²` through the 2x2 normal equations.
pub fn solve_joint(left: AlignmentView<'_>, right: AlignmentView<'_>) -> Result<ScaleShift> {
    left.check()?;
    right.check()?;
    let (l, r) = (left.moments(), right.moments());
    let [a, b, c, p, q] = [0, 1, 2, 3, 4].map(|n| l[n] + r[n]);
    solve_normal_equations(a, b, c, p, q)
}

/// Solves `[a b; b c] (s, t) = (p, q)`.
pub(crate) fn solve_normal_equations(a: f64, b: f64, c: f64, p: f64, q: f64) -> Result<ScaleShift> {
    let det = a * c - b * b;
    if !(c > 0.0) || !(det > 1e-12 * a * c) || !det.is_finite() {
        return Err(Error::Degenerate(format!(
            "scale/shift normal equations are singular (det {det:e}, weight {c:e})"
        )));
    }
    let s = (c * p - b * q) / det;
    let t = (a * q - b * p) / det;
    Ok(ScaleShift::new(s, t))
}

/// Joint scale/shift for both views. Confidences are used as weights as given;
/// callers fold any occlusion masking into them beforehand.
pub fn solve_scale_shift(
    m_left: &FloatMap,
    m_right: &FloatMap,
    d_left: &FloatMap,
    d_right: &FloatMap,
    c_left: &ConfidenceMap,
    c_right: &ConfidenceMap,
) -> Result<ScaleShift> {
    solve_joint(
        AlignmentView {
            mono: m_left,
            disparity: d_left,
            confidence: c_left,
        },
        AlignmentView {
            mono: m_right,
            disparity: d_right,
            confidence: c_right,
        },
    )
}

pub fn apply_scale_shift(m: &FloatMap, ss: ScaleShift) -> FloatMap {
    m.map_valid(|v| ss.apply(v))
}

/// Elementwise product of two confidence maps; invalid where either is.
pub fn combine_confidence(a: &ConfidenceMap, b: &ConfidenceMap) -> Result<ConfidenceMap> {
    a.ensure_same_shape(b, "confidence product")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    let valid = a
        .valid_mask()
        .iter()
        .zip(b.valid_mask())
        .map(|(x, y)| *x && *y)
        .collect();
    FloatMap::with_mask(a.width(), a.height(), data, valid)
}
