//! Synthetic rectified stereo fixtures with exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::map::{FloatMap, Mask};
use crate::numeric::interp_row;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self { x, y, width, height }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.x + self.width <= width && self.y + self.height <= height
    }

    pub fn mask(&self, width: usize, height: usize) -> Mask {
        Mask::from_fn(width, height, |x, y| self.contains(x, y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoPair {
    pub left: FloatMap,
    pub right: FloatMap,
    /// Left-view disparity.
    pub gt: FloatMap,
    /// Left pixels without a visible match in the right view.
    pub occlusion: Mask,
}

/// Piecewise-constant disparity: `background` everywhere, `foreground` inside `rect`.
pub fn box_disparity(height: usize, width: usize, background: f64, foreground: f64, rect: Rect) -> FloatMap {
    FloatMap::from_fn(width, height, |x, y| if rect.contains(x, y) { foreground } else { background })
}

/// Forward z-buffer occlusion: a left pixel is occluded when its match leaves
/// the right image or lands on a right pixel claimed by a larger disparity.
pub fn zbuffer_occlusion(disparity: &FloatMap) -> Mask {
    let (w, h) = (disparity.width(), disparity.height());
    let mut occ = Mask::filled(w, h, false);
    for y in 0..h {
        let mut zbuf = vec![f64::NEG_INFINITY; w];
        let target = |x: usize| (x as f64 - disparity.get(x, y)).round();
        for x in 0..w {
            let xr = target(x);
            if xr >= 0.0 && (xr as usize) < w {
                let slot = &mut zbuf[xr as usize];
                *slot = slot.max(disparity.get(x, y));
            }
        }
        for x in 0..w {
            let xr = target(x);
            let visible = xr >= 0.0 && (xr as usize) < w && disparity.get(x, y) >= zbuf[xr as usize] - 1e-9;
            occ.set(x, y, !visible);
        }
    }
    occ
}

/// Random-dot stereogram: the right image is white noise and the left image
/// samples it at `x - d(x)`. Texture left of the right image's border is
/// drawn from the same seeded field.
pub fn make_random_dot_pair(height: usize, width: usize, disparity: &FloatMap, seed: u64) -> Result<StereoPair> {
    if disparity.width() != width || disparity.height() != height {
        return Err(Error::Shape(format!(
            "disparity map is {}x{}, expected {width}x{height}",
            disparity.width(),
            disparity.height()
        )));
    }
    let limit = width as f64 / 2.0;
    if let Some(d) = disparity.valid_values().find(|d| !(*d >= 0.0 && *d < limit)) {
        return Err(Error::Domain(format!("disparity {d} outside [0, {limit})")));
    }
    if disparity.count_valid() != disparity.len() {
        return Err(Error::Domain("fixture disparity must be valid everywhere".into()));
    }
    // Columns -width..width of the texture field.
    let pad = width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field: Vec<f64> = (0..height * (pad + width)).map(|_| rng.gen::<f64>()).collect();
    let ok = vec![true; pad + width];
    let right = FloatMap::from_fn(width, height, |x, y| field[y * (pad + width) + pad + x]);
    let left = FloatMap::from_fn(width, height, |x, y| {
        let row = &field[y * (pad + width)..(y + 1) * (pad + width)];
        interp_row(row, &ok, pad as f64 + x as f64 - disparity.get(x, y)).unwrap_or(0.0)
    });
    Ok(StereoPair {
        left,
        right,
        gt: disparity.clone(),
        occlusion: zbuffer_occlusion(disparity),
    })
}

/// Right-view disparity by forward z-buffering the left disparity; holes
/// (disoccluded pixels) take the smaller disparity of their nearest filled neighbours.
pub fn right_view_disparity(disparity: &FloatMap) -> FloatMap {
    let (w, h) = (disparity.width(), disparity.height());
    let mut out = FloatMap::filled(w, h, 0.0);
    for y in 0..h {
        let mut zbuf: Vec<Option<f64>> = vec![None; w];
        for x in 0..w {
            let d = disparity.get(x, y);
            let xr = (x as f64 - d).round();
            if xr >= 0.0 && (xr as usize) < w {
                let slot = &mut zbuf[xr as usize];
                *slot = Some(slot.map_or(d, |z| z.max(d)));
            }
        }
        for xr in 0..w {
            let v = zbuf[xr].unwrap_or_else(|| {
                let left = zbuf[..xr].iter().rev().flatten().next();
                let right = zbuf[xr + 1..].iter().flatten().next();
                match (left, right) {
                    (Some(a), Some(b)) => a.min(*b),
                    (Some(a), None) | (None, Some(a)) => *a,
                    (None, None) => 0.0,
                }
            });
            out.set(xr, y, v);
        }
    }
    out
}

/// Maps both disparity maps to `[0, 1]` with a shared range, adds seeded
/// uniform noise of amplitude `noise` and clamps back into `[0, 1]`.
pub fn synthetic_mono(gt_left: &FloatMap, gt_right: &FloatMap, noise: f64, seed: u64) -> Result<(FloatMap, FloatMap)> {
    let (lo, hi) = gt_left
        .valid_values()
        .chain(gt_right.valid_values())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Err(Error::Degenerate("ground truth is constant; mono maps would be flat".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut view = |gt: &FloatMap| {
        FloatMap::from_fn(gt.width(), gt.height(), |x, y| {
            let jitter = if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
            ((gt.get(x, y) - lo) / (hi - lo) + jitter).clamp(0.0, 1.0)
        })
    };
    let left = view(gt_left);
    let right = view(gt_right);
    Ok((left, right))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorSpec {
    pub height: usize,
    pub width: usize,
    pub rect: Rect,
    /// Disparity of the mirror surface.
    pub d_mirror: f64,
    /// Disparity at which the reflected content matches.
    pub d_virtual: f64,
    /// Background disparity at the left and right image borders, linear in between.
    pub background: (f64, f64),
    /// Amplitude of the uniform noise added to the mono maps.
    pub mono_noise: f64,
    pub seed: u64,
}

impl MirrorSpec {
    pub fn new(height: usize, width: usize, rect: Rect, d_mirror: f64, d_virtual: f64, seed: u64) -> Self {
        Self {
            height,
            width,
            rect,
            d_mirror,
            d_virtual,
            background: (4.0, 10.0),
            mono_noise: 0.01,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorScene {
    pub left: FloatMap,
    pub right: FloatMap,
    /// Left-view disparity of the physical surfaces (mirror plane inside the rect).
    pub gt: FloatMap,
    pub mono_left: FloatMap,
    pub mono_right: FloatMap,
    pub mirror: Mask,
}

/// A textured background plane, slanted along x, with a fronto-parallel mirror. Through the mirror the
/// images show reflected texture consistent at `d_virtual`, while ground truth
/// and the monocular maps see the mirror plane at `d_mirror`.
pub fn make_mirror_scene(spec: &MirrorSpec) -> Result<MirrorScene> {
    let (h, w) = (spec.height, spec.width);
    if !spec.rect.fits(w, h) {
        return Err(Error::Domain(format!(
            "mirror rect {:?} does not fit a {w}x{h} image",
            spec.rect
        )));
    }
    if !(spec.d_virtual < spec.d_mirror) {
        return Err(Error::Domain(format!(
            "reflected content must lie behind the mirror: d_virtual {} >= d_mirror {}",
            spec.d_virtual, spec.d_mirror
        )));
    }
    let (lo, hi) = spec.background;
    let bg = |x: usize| lo + (hi - lo) * x as f64 / (w.max(2) - 1) as f64;
    let with_rect = |d: f64| FloatMap::from_fn(w, h, |x, y| if spec.rect.contains(x, y) { d } else { bg(x) });
    let pair = make_random_dot_pair(h, w, &with_rect(spec.d_virtual), spec.seed)?;
    let gt = with_rect(spec.d_mirror);
    let gt_right = right_view_disparity(&gt);
    let (mono_left, mono_right) = synthetic_mono(&gt, &gt_right, spec.mono_noise, spec.seed ^ 0x6d6f_6e6f)?;
    Ok(MirrorScene {
        left: pair.left,
        right: pair.right,
        gt,
        mono_left,
        mono_right,
        mirror: spec.rect.mask(w, h),
    })
}
