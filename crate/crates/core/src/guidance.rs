//! Mirror-aware truncation of the stereo volume and the volume augmentations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::map::{ConfidenceMap, FloatMap};
use crate::numeric::sigmoid;
use crate::volume::{BinMasks, CorrelationVolume};

pub const DEFAULT_T_M: f64 = 0.98;
pub const DEFAULT_K_SHARP: f64 = 400.0;
pub const DEFAULT_G: f64 = 0.9;

/// Per-pixel truncation strength in `[0, 1]`.
pub type TruncationMask = FloatMap;

fn value_or(map: &FloatMap, x: usize, y: usize, fallback: f64) -> f64 {
    if map.is_valid(x, y) {
        map.get(x, y)
    } else {
        fallback
    }
}

/// `T'_F = σ(k_sharp (T_F - T_m))` with `T_F` the fuzzy OR of "mono is closer
/// than stereo" and "stereo is unsure", both gated by mono reliability `C_M`.
/// Pixels with any invalid input are not truncated.
pub fn fuzzy_truncate_mask(
    m_hat: &FloatMap,
    d_hat: &FloatMap,
    c_mono: &ConfidenceMap,
    c_stereo: &ConfidenceMap,
    t_m: f64,
    k_sharp: f64,
) -> Result<TruncationMask> {
    m_hat.ensure_same_shape(d_hat, "scaled mono vs stereo disparity")?;
    m_hat.ensure_same_shape(c_mono, "scaled mono vs mono confidence")?;
    m_hat.ensure_same_shape(c_stereo, "scaled mono vs stereo confidence")?;
    Ok(FloatMap::from_fn(m_hat.width(), m_hat.height(), |x, y| {
        let ok = m_hat.is_valid(x, y) && d_hat.is_valid(x, y) && c_mono.is_valid(x, y);
        let cm = if ok { c_mono.get(x, y) } else { 0.0 };
        let t_a = if ok {
            cm * sigmoid(m_hat.get(x, y) - d_hat.get(x, y))
        } else {
            0.0
        };
        let t_b = cm * (1.0 - value_or(c_stereo, x, y, 0.0));
        let t_f = t_a + t_b - t_a * t_b;
        sigmoid(k_sharp * (t_f - t_m))
    }))
}

/// `V_T[i,j,k] = (1 - T') + T' (σ(j - M̂ - k)(1 - G) + G)`: hypotheses behind
/// the mono surface (smaller `j - k`) are attenuated towards `G`.
pub fn truncation_volume(mask: &TruncationMask, m_hat: &FloatMap, g: f64) -> Result<CorrelationVolume> {
    mask.ensure_same_shape(m_hat, "truncation mask vs scaled mono")?;
    let cols = mask.width();
    Ok(CorrelationVolume::from_fn(mask.height(), cols, |i, j, k| {
        if !m_hat.is_valid(j, i) || !mask.is_valid(j, i) {
            return 1.0;
        }
        let t = mask.get(j, i);
        let s = sigmoid(j as f64 - m_hat.get(j, i) - k as f64);
        (1.0 - t) + t * (s * (1.0 - g) + g)
    }))
}

pub fn apply_truncation(v_s: &CorrelationVolume, v_t: &CorrelationVolume) -> Result<CorrelationVolume> {
    v_s.ensure_same_shape(v_t, "truncation")?;
    let data = v_s.data().iter().zip(v_t.data()).map(|(a, b)| a * b).collect();
    CorrelationVolume::from_vec(v_s.rows(), v_s.cols(), data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentKind {
    /// Circular shift of the `k` axis by `offset` bins.
    Roll { offset: isize },
    /// Additive `U[0, 1)` noise.
    Noise,
    /// Rows replaced by `a exp(-(j-k)^2 / 2σ²)`; `a = None` uses each row's max.
    Zero { amplitude: Option<f64>, sigma: f64 },
    /// Replace the mono input by normalized ground truth.
    PerfectMono,
}

impl AugmentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentKind::Roll { .. } => "roll",
            AugmentKind::Noise => "noise",
            AugmentKind::Zero { .. } => "zero",
            AugmentKind::PerfectMono => "perfect_mono",
        }
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    /// Parses the bare kind name with default parameters.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "roll" => Ok(AugmentKind::Roll { offset: 0 }),
            "noise" => Ok(AugmentKind::Noise),
            "zero" => Ok(AugmentKind::Zero {
                amplitude: None,
                sigma: 1.0,
            }),
            "perfect_mono" => Ok(AugmentKind::PerfectMono),
            other => Err(Error::Parameter(format!("unknown augmentation kind '{other}'"))),
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    /// Depth bin (of the left mono map) selecting the affected pixels.
    pub bin: usize,
    pub seed: u64,
}

fn noise_stream(seed: u64, i: usize, j: usize, cols: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((i * cols + j) as u64);
    rng
}

/// Applies one augmentation to the rows `(i, j)` whose left pixel lies in
/// `spec.bin`. Output is a pure function of the inputs and the seed.
pub fn augment_volume(v: &CorrelationVolume, masks: &BinMasks, spec: &AugmentSpec) -> Result<CorrelationVolume> {
    if masks.width() != v.cols() || masks.height() != v.rows() {
        return Err(Error::Shape(format!(
            "bin masks are {}x{}, volume expects {}x{}",
            masks.width(),
            masks.height(),
            v.cols(),
            v.rows()
        )));
    }
    if spec.bin >= masks.bins() {
        return Err(Error::Index(format!(
            "augmentation bin {} out of range for {} bins",
            spec.bin,
            masks.bins()
        )));
    }
    if let AugmentKind::Zero { sigma, .. } = spec.kind {
        if !(sigma > 0.0) {
            return Err(Error::Parameter(format!("zeroing width must be positive, got {sigma}")));
        }
    }
    if spec.kind == AugmentKind::PerfectMono {
        return Err(Error::Parameter(
            "perfect_mono replaces the mono input and does not act on volumes".into(),
        ));
    }
    let cols = v.cols();
    let mut out = v.clone();
    for i in 0..v.rows() {
        for j in 0..cols {
            if !masks.contains(spec.bin, j, i) {
                continue;
            }
            let src = v.row(i, j);
            let row = out.row_mut(i, j);
            match spec.kind {
                AugmentKind::Roll { offset } => {
                    let n = cols as isize;
                    for (k, e) in row.iter_mut().enumerate() {
                        *e = src[(k as isize - offset).rem_euclid(n) as usize];
                    }
                }
                AugmentKind::Noise => {
                    let mut rng = noise_stream(spec.seed, i, j, cols);
                    for e in row.iter_mut() {
                        *e += rng.gen::<f64>();
                    }
                }
                AugmentKind::Zero { amplitude, sigma } => {
                    let a = amplitude.unwrap_or_else(|| src.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                    for (k, e) in row.iter_mut().enumerate() {
                        let d = j as f64 - k as f64;
                        *e = a * (-(d * d) / (2.0 * sigma * sigma)).exp();
                    }
                }
                AugmentKind::PerfectMono => unreachable!(),
            }
        }
    }
    Ok(out)
}

/// Ground-truth disparity rescaled to `[0, 1]` over its valid pixels.
pub fn substitute_perfect_mono(gt: &FloatMap) -> Result<FloatMap> {
    let (lo, hi) = gt
        .valid_range()
        .ok_or_else(|| Error::Degenerate("ground truth has no valid pixels".into()))?;
    if !(hi > lo) {
        return Err(Error::Degenerate(format!(
            "ground truth is constant ({lo}); cannot normalize"
        )));
    }
    Ok(gt.map_valid(|v| (v - lo) / (hi - lo)))
}
