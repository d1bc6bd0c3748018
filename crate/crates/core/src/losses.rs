//! Supervision losses and a central finite-difference gradient checker.

use crate::error::{Error, Result};
use crate::map::{ConfidenceMap, FloatMap};
use crate::numeric::{pairwise_sum, softplus};
use crate::volume::compute_normals;

pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_PSI: f64 = 10.0;
pub const BCE_EPS: f64 = 1e-7;

fn joint_valid<'a>(a: &'a FloatMap, b: &'a FloatMap) -> impl Iterator<Item = usize> + 'a {
    (0..a.len()).filter(move |n| a.valid_mask()[*n] && b.valid_mask()[*n])
}

fn mean(terms: &[f64], what: &str) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::UndefinedRegion(format!("{what}: no pixel is valid in both maps")));
    }
    Ok(pairwise_sum(terms) / terms.len() as f64)
}

/// Mean absolute difference over pixels valid in both maps.
pub fn mean_abs_error(pred: &FloatMap, gt: &FloatMap) -> Result<f64> {
    pred.ensure_same_shape(gt, "L1 loss")?;
    let terms: Vec<f64> = joint_valid(pred, gt)
        .map(|n| (pred.data()[n] - gt.data()[n]).abs())
        .collect();
    mean(&terms, "L1 loss")
}

/// `Σ_l γ^(L-l) mean|D^l - gt|` for predictions ordered first to last.
pub fn sequence_loss(predictions: &[FloatMap], gt: &FloatMap, gamma: f64) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Parameter("sequence loss needs at least one prediction".into()));
    }
    let last = predictions.len() - 1;
    let terms = predictions
        .iter()
        .enumerate()
        .map(|(l, p)| Ok(gamma.powi((last - l) as i32) * mean_abs_error(p, gt)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms))
}

/// L1 plus `ψ · mean|1 - n_gt · n_pred|`. Both maps are divided by the largest
/// valid value of either before estimating normals, so a constant offset
/// leaves the normal term unchanged.
pub fn coarse_disparity_loss(d_hat: &FloatMap, gt: &FloatMap, psi: f64) -> Result<f64> {
    let l1 = mean_abs_error(d_hat, gt)?;
    let peak = d_hat
        .valid_values()
        .chain(gt.valid_values())
        .map(f64::abs)
        .fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let n_pred = compute_normals(&d_hat.map_valid(|v| v * scale))?;
    let n_gt = compute_normals(&gt.map_valid(|v| v * scale))?;
    let terms: Vec<f64> = joint_valid(d_hat, gt)
        .map(|n| {
            let (x, y) = (n % gt.width(), n / gt.width());
            let (a, b) = (n_pred.get(x, y), n_gt.get(x, y));
            // 1 - a·b for unit vectors, exact zero when the normals agree
            0.5 * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
        })
        .collect();
    Ok(l1 + psi * mean(&terms, "normal loss")?)
}

/// Plain L1 between the scaled monocular map and ground truth.
pub fn scaled_mono_loss(m_hat: &FloatMap, gt: &FloatMap) -> Result<f64> {
    mean_abs_error(m_hat, gt)
}

/// Soft confidence target `softplus(T - |D̂ - gt|) / softplus(T)`.
pub fn confidence_target(d_hat: f64, gt: f64, t_lrc: f64) -> f64 {
    softplus(t_lrc - (d_hat - gt).abs()) / softplus(t_lrc)
}

/// Binary cross-entropy in nats with the prediction clamped to `[ε, 1-ε]`.
pub fn binary_cross_entropy(pred: f64, target: f64) -> f64 {
    let p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Mean BCE between `Ĉ` and the soft target derived from `|D̂ - gt|`.
pub fn confidence_loss(c_hat: &ConfidenceMap, d_hat: &FloatMap, gt: &FloatMap, t_lrc: f64) -> Result<f64> {
    c_hat.ensure_same_shape(d_hat, "confidence vs disparity")?;
    d_hat.ensure_same_shape(gt, "disparity vs ground truth")?;
    let terms: Vec<f64> = joint_valid(d_hat, gt)
        .filter(|n| c_hat.valid_mask()[*n])
        .map(|n| {
            let target = confidence_target(d_hat.data()[n], gt.data()[n], t_lrc);
            binary_cross_entropy(c_hat.data()[n], target)
        })
        .collect();
    mean(&terms, "confidence loss")
}

/// Sum of the seven partial losses `L_A .. L_G`.
pub fn total_loss(parts: &[f64; 7]) -> f64 {
    pairwise_sum(parts)
}

/// Central-difference gradient of `f` at `point`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, point: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {step}")));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for n in 0..point.len() {
        x[n] = point[n] + step;
        let hi = f(&x);
        x[n] = point[n] - step;
        let lo = f(&x);
        x[n] = point[n];
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::Domain(format!(
                "objective is not finite around coordinate {n} of the check point"
            )));
        }
        grad.push((hi - lo) / (2.0 * step));
    }
    Ok(grad)
}

/// Largest `|g_fd - g_expected| / max(1, |g_expected|)` over all coordinates.
/// Pass zeros as `expected` to test stationarity.
pub fn finite_difference_check(
    f: impl Fn(&[f64]) -> f64,
    point: &[f64],
    expected: &[f64],
    step: f64,
) -> Result<f64> {
    if expected.len() != point.len() {
        return Err(Error::Shape(format!(
            "expected gradient has {} entries for a {}-dimensional point",
            expected.len(),
            point.len()
        )));
    }
    let grad = central_gradient(f, point, step)?;
    Ok(grad
        .iter()
        .zip(expected)
        .map(|(g, e)| (g - e).abs() / e.abs().max(1.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> FloatMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FloatMap::from_fn(w, h, |_, _| rng.gen_range(lo..hi))
    }

    #[test]
    fn sequence_loss_weights() {
        let gt = FloatMap::filled(4, 4, 0.0);
        let a = FloatMap::filled(4, 4, 2.0);
        let b = FloatMap::filled(4, 4, 1.0);
        assert_eq!(sequence_loss(std::slice::from_ref(&a), &gt, 0.9).unwrap(), 2.0);
        assert!((sequence_loss(&[a, b], &gt, 0.9).unwrap() - (0.9 * 2.0 + 1.0)).abs() < 1e-15);
        assert!(matches!(sequence_loss(&[], &gt, 0.9), Err(Error::Parameter(_))));
    }

    #[test]
    fn coarse_loss_examples() {
        let gt = FloatMap::from_fn(8, 8, |x, y| (x as f64 * 0.7 + (y as f64 * 0.3).sin()) + 2.0);
        assert!(coarse_disparity_loss(&gt, &gt, 10.0).unwrap() < 1e-12);
        let shifted = gt.map_valid(|v| v + 5.0);
        let l = coarse_disparity_loss(&shifted, &gt, 10.0).unwrap();
        assert!((l - 5.0).abs() < 1e-12, "{l}");
        let flat = FloatMap::filled(5, 5, 3.0);
        assert_eq!(coarse_disparity_loss(&flat, &flat, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn mono_loss_examples() {
        let m = random_map(6, 4, 3, 0.0, 1.0);
        assert_eq!(scaled_mono_loss(&m, &m).unwrap(), 0.0);
        assert!((scaled_mono_loss(&m.map_valid(|v| v + 2.0), &m).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bce_matched_target() {
        let t = confidence_target(1.0, 0.0, 1.0);
        let h = -(t * t.ln() + (1.0 - t) * (1.0 - t).ln());
        // H(0.5278) = 0.69160 nats
        assert!((h - 0.69160).abs() < 1e-5);
        let c = FloatMap::filled(3, 3, t);
        let d = FloatMap::filled(3, 3, 1.0);
        let gt = FloatMap::filled(3, 3, 0.0);
        assert!((confidence_loss(&c, &d, &gt, 1.0).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let c = FloatMap::filled(3, 3, 1.0);
        let d = FloatMap::filled(3, 3, 4.0);
        let l = confidence_loss(&c, &d, &d, 1.0).unwrap();
        assert!((0.0..=1e-6).contains(&l));
    }

    #[test]
    fn bce_is_minimized_at_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let target = confidence_target(rng.gen_range(-3.0..3.0), 0.0, 1.0);
            let best = (1..1000)
                .map(|n| n as f64 / 1000.0)
                .min_by(|a, b| binary_cross_entropy(*a, target).total_cmp(&binary_cross_entropy(*b, target)))
                .unwrap();
            assert!((best - target).abs() <= 1e-3);
        }
    }

    #[test]
    fn total_loss_sums() {
        assert_eq!(total_loss(&[0.0; 7]), 0.0);
        assert_eq!(total_loss(&[1.0; 7]), 7.0);
    }

    #[test]
    fn finite_difference_examples() {
        let quad = |x: &[f64]| (x[0] - 3.0).powi(2);
        assert!(finite_difference_check(quad, &[3.0], &[0.0], 1e-5).unwrap() < 1e-8);
        let abs = |x: &[f64]| x[0].abs();
        let g = central_gradient(abs, &[1.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-6);
        assert!(matches!(
            central_gradient(|x: &[f64]| x[0].ln(), &[0.0], 1e-5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(central_gradient(quad, &[0.0], 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn empty_overlap_is_undefined() {
        let mut a = FloatMap::filled(2, 1, 1.0);
        a.invalidate(0, 0);
        a.invalidate(1, 0);
        assert!(matches!(
            mean_abs_error(&a, &FloatMap::filled(2, 1, 1.0)),
            Err(Error::UndefinedRegion(_))
        ));
    }
}
