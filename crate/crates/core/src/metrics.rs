//! Disparity and depth error measures and affine alignment protocols.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::map::{FloatMap, Mask};
use crate::numeric::pairwise_sum;
use crate::scaling::{solve_normal_equations, ScaleShift};

pub const RANSAC_ITERATIONS: usize = 500;
pub const RANSAC_THRESHOLD_FRACTION: f64 = 0.05;

fn check_region(pred: &FloatMap, gt: &FloatMap, region: &Mask) -> Result<Vec<usize>> {
    pred.ensure_same_shape(gt, "prediction vs ground truth")?;
    if !region.same_shape_as(gt) {
        return Err(Error::Shape(format!(
            "region is {}x{}, maps are {}x{}",
            region.width(),
            region.height(),
            gt.width(),
            gt.height()
        )));
    }
    let idx: Vec<usize> = (0..gt.len())
        .filter(|n| region.data()[*n] && gt.valid_mask()[*n])
        .collect();
    if idx.is_empty() {
        return Err(Error::UndefinedRegion("evaluation region is empty".into()));
    }
    Ok(idx)
}

/// Percentage of region pixels with `|pred - gt| > τ`. Pixels without a valid
/// prediction count as errors.
pub fn bad_tau(pred: &FloatMap, gt: &FloatMap, region: &Mask, tau: f64) -> Result<f64> {
    let idx = check_region(pred, gt, region)?;
    let bad = idx
        .iter()
        .filter(|n| !pred.valid_mask()[**n] || (pred.data()[**n] - gt.data()[**n]).abs() > tau)
        .count();
    Ok(100.0 * bad as f64 / idx.len() as f64)
}

/// Mean `|pred - gt|` over region pixels that carry a valid prediction.
pub fn avg_error(pred: &FloatMap, gt: &FloatMap, region: &Mask) -> Result<f64> {
    let idx = check_region(pred, gt, region)?;
    let terms: Vec<f64> = idx
        .iter()
        .filter(|n| pred.valid_mask()[**n])
        .map(|n| (pred.data()[*n] - gt.data()[*n]).abs())
        .collect();
    if terms.is_empty() {
        return Err(Error::UndefinedRegion("no valid prediction inside the region".into()));
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regions {
    pub all: Mask,
    pub noc: Mask,
    pub occ: Mask,
}

/// All = valid ground truth; Noc/Occ split it by the occlusion mask.
pub fn region_split(gt: &FloatMap, occlusion: Option<&Mask>) -> Result<Regions> {
    let all = Mask::from(gt);
    let occ_mask = match occlusion {
        Some(m) if m.same_shape_as(gt) => m.clone(),
        Some(m) => {
            return Err(Error::Shape(format!(
                "occlusion mask is {}x{}, ground truth is {}x{}",
                m.width(),
                m.height(),
                gt.width(),
                gt.height()
            )))
        }
        None => Mask::filled(gt.width(), gt.height(), false),
    };
    Ok(Regions {
        noc: all.and(&occ_mask.not()),
        occ: all.and(&occ_mask),
        all,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub absrel_pct: f64,
    pub rmse: f64,
    pub delta105_pct: f64,
}

/// AbsRel (%), RMSE and δ<1.05 (%) over pixels valid in both maps.
pub fn depth_metrics(pred: &FloatMap, gt: &FloatMap) -> Result<DepthMetrics> {
    pred.ensure_same_shape(gt, "depth prediction vs ground truth")?;
    let idx: Vec<usize> = (0..gt.len())
        .filter(|n| gt.valid_mask()[*n] && pred.valid_mask()[*n])
        .collect();
    if idx.is_empty() {
        return Err(Error::UndefinedRegion("no pixel is valid in both depth maps".into()));
    }
    if let Some(n) = idx.iter().find(|n| !(gt.data()[**n] > 0.0)) {
        return Err(Error::Domain(format!(
            "ground-truth depth must be positive, found {} at pixel {n}",
            gt.data()[*n]
        )));
    }
    let count = idx.len() as f64;
    let rel: Vec<f64> = idx
        .iter()
        .map(|n| (pred.data()[*n] - gt.data()[*n]).abs() / gt.data()[*n])
        .collect();
    let sq: Vec<f64> = idx
        .iter()
        .map(|n| (pred.data()[*n] - gt.data()[*n]).powi(2))
        .collect();
    let within = idx
        .iter()
        .filter(|n| {
            let (p, g) = (pred.data()[**n], gt.data()[**n]);
            p > 0.0 && (p / g).max(g / p) < 1.05
        })
        .count();
    Ok(DepthMetrics {
        absrel_pct: 100.0 * pairwise_sum(&rel) / count,
        rmse: (pairwise_sum(&sq) / count).sqrt(),
        delta105_pct: 100.0 * within as f64 / count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignProtocol {
    Lsq,
    Ransac,
}

impl FromStr for AlignProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lsq" => Ok(AlignProtocol::Lsq),
            "ransac" => Ok(AlignProtocol::Ransac),
            other => Err(Error::Parameter(format!("unknown alignment protocol '{other}'"))),
        }
    }
}

impl fmt::Display for AlignProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignProtocol::Lsq => "lsq",
            AlignProtocol::Ransac => "ransac",
        })
    }
}

fn fit_lsq(pairs: &[(f64, f64)]) -> Result<ScaleShift> {
    let col = |f: &dyn Fn(&(f64, f64)) -> f64| pairwise_sum(&pairs.iter().map(f).collect::<Vec<_>>());
    let a = col(&|(p, _)| p * p);
    let b = col(&|(p, _)| *p);
    let c = pairs.len() as f64;
    let p = col(&|(p, g)| p * g);
    let q = col(&|(_, g)| *g);
    solve_normal_equations(a, b, c, p, q)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn fit_ransac(pairs: &[(f64, f64)], seed: u64) -> Result<ScaleShift> {
    let mut gts: Vec<f64> = pairs.iter().map(|(_, g)| *g).collect();
    let threshold = RANSAC_THRESHOLD_FRACTION * median(&mut gts).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, ScaleShift)> = None;
    for _ in 0..RANSAC_ITERATIONS {
        let a = rng.gen_range(0..pairs.len());
        let b = rng.gen_range(0..pairs.len());
        let ((p0, g0), (p1, g1)) = (pairs[a], pairs[b]);
        if p0 == p1 {
            continue;
        }
        let s = (g1 - g0) / (p1 - p0);
        let hyp = ScaleShift::new(s, g0 - s * p0);
        let inliers = pairs
            .iter()
            .filter(|(p, g)| (hyp.apply(*p) - g).abs() <= threshold)
            .count();
        if best.is_none_or(|(n, _)| inliers > n) {
            best = Some((inliers, hyp));
        }
    }
    let (_, hyp) = best.ok_or_else(|| Error::Degenerate("RANSAC drew no non-degenerate sample pair".into()))?;
    let inliers: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|(p, g)| (hyp.apply(*p) - g).abs() <= threshold)
        .collect();
    fit_lsq(&inliers).or(Ok(hyp))
}

/// Fits `gt ≈ s · pred + t` and returns the fit with the aligned prediction.
pub fn align_affine(
    pred: &FloatMap,
    gt: &FloatMap,
    protocol: AlignProtocol,
    seed: u64,
) -> Result<(ScaleShift, FloatMap)> {
    pred.ensure_same_shape(gt, "alignment")?;
    let pairs: Vec<(f64, f64)> = (0..gt.len())
        .filter(|n| gt.valid_mask()[*n] && pred.valid_mask()[*n])
        .map(|n| (pred.data()[n], gt.data()[n]))
        .collect();
    let distinct = pairs.iter().any(|(p, _)| *p != pairs[0].0);
    if pairs.len() < 2 || !distinct {
        return Err(Error::Degenerate(
            "alignment needs at least two distinct valid prediction values".into(),
        ));
    }
    let ss = match protocol {
        AlignProtocol::Lsq => fit_lsq(&pairs)?,
        AlignProtocol::Ransac => fit_ransac(&pairs, seed)?,
    };
    Ok((ss, pred.map_valid(|v| ss.apply(v))))
}
