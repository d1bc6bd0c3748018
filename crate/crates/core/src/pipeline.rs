//! End-to-end orchestration: configuration, the fused stereo/mono pipeline,
//! evaluation and fixture generation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::features::{census_features, downsample_quarter, DEFAULT_CENSUS_WINDOW};
use crate::fusion::{
    anchor_mono_volume, extract_disparity, fuse_volumes, lr_consistency_filter, upsample_disparity, ExtractMode,
    DEFAULT_W_MONO,
};
use crate::guidance::{
    apply_truncation, augment_volume, fuzzy_truncate_mask, truncation_volume, AugmentKind, AugmentSpec,
    TruncationMask, DEFAULT_G, DEFAULT_K_SHARP, DEFAULT_T_M,
};
use crate::io::{read_float_map, read_mask, write_float_map, write_mask, RunReport};
use crate::map::{ConfidenceMap, FloatMap, Mask};
use crate::metrics::{avg_error, bad_tau, depth_metrics, region_split};
use crate::scaling::{
    apply_scale_shift, combine_confidence, entropy_confidence_left, entropy_confidence_right,
    softargmax_disparity_left, softargmax_disparity_right, soft_lrc, soft_lrc_right, solve_scale_shift, ScaleShift,
    DEFAULT_T_LRC,
};
use crate::scenes::{
    box_disparity, make_mirror_scene, make_random_dot_pair, right_view_disparity, synthetic_mono, MirrorSpec, Rect,
};
use crate::volume::{
    aggregate_mono_volumes, box_filter_disparity, build_correlation_volume, compute_normals, depth_bin_masks, mask_volume,
    CorrelationVolume, DEFAULT_BETA, DEFAULT_BINS,
};

/// Which volume an augmentation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentTarget {
    Stereo,
    Mono,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub kind: AugmentKind,
    pub bin: usize,
    pub target: AugmentTarget,
}

/// Numeric tunables of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub n_bins: usize,
    pub t_lrc: f64,
    pub t_m: f64,
    pub k_sharp: f64,
    pub g: f64,
    pub w_mono: f64,
    pub beta: f64,
    pub census_window: usize,
    pub mode: ExtractMode,
    pub lrc_tau: f64,
    pub lr_filter: bool,
    pub truncation: bool,
    /// Width (quarter-resolution px) of the prior that centres the mono branch on `M̂_L`; 0 disables it.
    pub anchor_sigma: f64,
    /// Divisor of the census correlation; `None` uses `sqrt(D)`.
    pub stereo_temperature: Option<f64>,
    /// 3x3 box aggregation of the stereo volume along constant disparity.
    pub stereo_aggregation: bool,
    pub seed: u64,
    pub augment: Option<AugmentConfig>,
    /// Thresholds for the bad-τ metrics.
    pub taus: Vec<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            t_lrc: DEFAULT_T_LRC,
            t_m: DEFAULT_T_M,
            k_sharp: DEFAULT_K_SHARP,
            g: DEFAULT_G,
            w_mono: DEFAULT_W_MONO,
            beta: DEFAULT_BETA,
            census_window: DEFAULT_CENSUS_WINDOW,
            mode: ExtractMode::Wta,
            lrc_tau: 1.0,
            lr_filter: false,
            truncation: true,
            anchor_sigma: 1.0,
            stereo_temperature: None,
            stereo_aggregation: true,
            seed: 0,
            augment: None,
            taus: vec![1.0, 2.0],
        }
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v}")
}

impl Params {
    /// Every tunable as text, for the report.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("n_bins", self.n_bins.to_string());
        put("t_lrc", fmt_real(self.t_lrc));
        put("t_m", fmt_real(self.t_m));
        put("k_sharp", fmt_real(self.k_sharp));
        put("g", fmt_real(self.g));
        put("w_mono", fmt_real(self.w_mono));
        put("beta", fmt_real(self.beta));
        put("census_window", self.census_window.to_string());
        put("mode", self.mode.to_string());
        put("lrc_tau", fmt_real(self.lrc_tau));
        put("lr_filter", self.lr_filter.to_string());
        put("truncation", self.truncation.to_string());
        put("anchor_sigma", fmt_real(self.anchor_sigma));
        put(
            "stereo_temperature",
            self.stereo_temperature.map_or_else(|| "auto".to_string(), fmt_real),
        );
        put("stereo_aggregation", self.stereo_aggregation.to_string());
        put("seed", self.seed.to_string());
        put(
            "taus",
            self.taus.iter().map(|t| fmt_real(*t)).collect::<Vec<_>>().join(","),
        );
        match &self.augment {
            None => put("augment.kind", "none".into()),
            Some(a) => {
                put("augment.kind", a.kind.name().into());
                put("augment.bin", a.bin.to_string());
                put(
                    "augment.target",
                    match a.target {
                        AugmentTarget::Stereo => "stereo".into(),
                        AugmentTarget::Mono => "mono".into(),
                    },
                );
                match a.kind {
                    AugmentKind::Roll { offset } => put("augment.roll", offset.to_string()),
                    AugmentKind::Zero { amplitude, sigma } => {
                        put("augment.amplitude", amplitude.map_or_else(|| "row_max".into(), fmt_real));
                        put("augment.sigma", fmt_real(sigma));
                    }
                    _ => {}
                }
            }
        }
        m
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_bins == 0 {
            return bad("n_bins must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.w_mono) {
            return bad(format!("w_mono must lie in [0, 1], got {}", self.w_mono));
        }
        if !(0.0..=1.0).contains(&self.g) {
            return bad(format!("g must lie in [0, 1], got {}", self.g));
        }
        if !matches!(self.census_window, 3 | 5 | 7) {
            return bad(format!("census_window must be 3, 5 or 7, got {}", self.census_window));
        }
        if !(self.anchor_sigma >= 0.0) {
            return bad(format!("anchor_sigma must be >= 0, got {}", self.anchor_sigma));
        }
        if let Some(t) = self.stereo_temperature {
            if !(t > 0.0) {
                return bad(format!("stereo_temperature must be positive, got {t}"));
            }
        }
        if self.taus.iter().any(|t| !(*t >= 0.0)) {
            return bad("taus must be non-negative".into());
        }
        if let Some(a) = &self.augment {
            if a.bin >= self.n_bins {
                return bad(format!("augment.bin {} out of range for {} bins", a.bin, self.n_bins));
            }
        }
        Ok(())
    }
}

/// Input files plus tunables, as read from a `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
    pub mono_left: Option<PathBuf>,
    pub mono_right: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub occ: Option<PathBuf>,
    pub params: Params,
    base: PathBuf,
    augment_kind: Option<String>,
    augment: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            left: None,
            right: None,
            mono_left: None,
            mono_right: None,
            gt: None,
            occ: None,
            params: Params::default(),
            base: PathBuf::new(),
            augment_kind: None,
            augment: BTreeMap::new(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for key '{key}'"))),
    }
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: impl Into<PathBuf>) -> Result<Config> {
        let mut cfg = Config {
            base: base.into(),
            ..Config::default()
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.finish()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, base)
    }

    /// Applies `key=value` overrides on top of the parsed file.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            // Override paths are taken relative to the working directory.
            let base = std::mem::take(&mut self.base);
            let res = self.set(k.trim(), v.trim());
            self.base = base;
            res?;
        }
        self.finish()
    }

    fn path(&self, v: &str) -> PathBuf {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.params;
        match key {
            "left" => self.left = Some(self.path(v)),
            "right" => self.right = Some(self.path(v)),
            "mono_left" => self.mono_left = Some(self.path(v)),
            "mono_right" => self.mono_right = Some(self.path(v)),
            "gt" => self.gt = Some(self.path(v)),
            "occ" => self.occ = Some(self.path(v)),
            "n_bins" => p.n_bins = parse_value(key, v)?,
            "t_lrc" => p.t_lrc = parse_value(key, v)?,
            "t_m" => p.t_m = parse_value(key, v)?,
            "k_sharp" => p.k_sharp = parse_value(key, v)?,
            "g" => p.g = parse_value(key, v)?,
            "w_mono" => p.w_mono = parse_value(key, v)?,
            "beta" => p.beta = parse_value(key, v)?,
            "census_window" => p.census_window = parse_value(key, v)?,
            "mode" => p.mode = v.parse().map_err(|_| Error::Config(format!("invalid mode '{v}'")))?,
            "lrc_tau" => p.lrc_tau = parse_value(key, v)?,
            "lr_filter" => p.lr_filter = parse_bool(key, v)?,
            "truncation" => p.truncation = parse_bool(key, v)?,
            "anchor_sigma" => p.anchor_sigma = parse_value(key, v)?,
            "stereo_temperature" => {
                p.stereo_temperature = if v == "auto" { None } else { Some(parse_value(key, v)?) }
            }
            "stereo_aggregation" => p.stereo_aggregation = parse_bool(key, v)?,
            "seed" => p.seed = parse_value(key, v)?,
            "taus" => {
                p.taus = v
                    .split(',')
                    .map(|t| parse_value(key, t.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }
            "augment.kind" => self.augment_kind = if v == "none" { None } else { Some(v.to_string()) },
            "augment.bin" | "augment.roll" | "augment.amplitude" | "augment.sigma" | "augment.target" => {
                self.augment.insert(key.to_string(), v.to_string());
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.params.augment = match &self.augment_kind {
            None => None,
            Some(name) => {
                let get = |k: &str| self.augment.get(k).map(String::as_str);
                let base: AugmentKind = name.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
                let kind = match base {
                    AugmentKind::Roll { .. } => AugmentKind::Roll {
                        offset: get("augment.roll").map_or(Ok(0), |v| parse_value("augment.roll", v))?,
                    },
                    AugmentKind::Zero { .. } => AugmentKind::Zero {
                        amplitude: match get("augment.amplitude") {
                            None | Some("row_max") => None,
                            Some(v) => Some(parse_value("augment.amplitude", v)?),
                        },
                        sigma: get("augment.sigma").map_or(Ok(1.0), |v| parse_value("augment.sigma", v))?,
                    },
                    other => other,
                };
                let target = match get("augment.target").unwrap_or("stereo") {
                    "stereo" => AugmentTarget::Stereo,
                    "mono" => AugmentTarget::Mono,
                    other => return Err(Error::Config(format!("invalid augment.target '{other}'"))),
                };
                Some(AugmentConfig {
                    kind,
                    bin: get("augment.bin").map_or(Ok(0), |v| parse_value("augment.bin", v))?,
                    target,
                })
            }
        };
        self.params.validate()
    }

    fn required(&self, slot: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        slot.clone()
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    /// Reads every input named by the configuration.
    pub fn load_inputs(&self) -> Result<Inputs> {
        let left = read_float_map(self.required(&self.left, "left")?)?;
        let right = read_float_map(self.required(&self.right, "right")?)?;
        let perfect = matches!(
            self.params.augment,
            Some(AugmentConfig {
                kind: AugmentKind::PerfectMono,
                ..
            })
        );
        let gt = self.gt.as_ref().map(read_float_map).transpose()?;
        let (mono_left, mono_right) = if perfect && self.mono_left.is_none() {
            let g = gt
                .as_ref()
                .ok_or_else(|| Error::Config("perfect_mono needs 'gt'".into()))?;
            (g.clone(), g.clone())
        } else {
            (
                read_float_map(self.required(&self.mono_left, "mono_left")?)?,
                read_float_map(self.required(&self.mono_right, "mono_right")?)?,
            )
        };
        let occlusion = self.occ.as_ref().map(read_mask).transpose()?;
        Ok(Inputs {
            left,
            right,
            mono_left,
            mono_right,
            gt,
            occlusion,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub left: FloatMap,
    pub right: FloatMap,
    pub mono_left: FloatMap,
    pub mono_right: FloatMap,
    /// Left-view ground-truth disparity at full resolution.
    pub gt: Option<FloatMap>,
    pub occlusion: Option<Mask>,
}

impl Inputs {
    fn check(&self) -> Result<()> {
        let (w, h) = (self.left.width(), self.left.height());
        let named = [
            ("right", &self.right),
            ("mono_left", &self.mono_left),
            ("mono_right", &self.mono_right),
        ];
        for (name, m) in named.into_iter().chain(self.gt.iter().map(|g| ("gt", g))) {
            if m.width() != w || m.height() != h {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, left image is {w}x{h}",
                    m.width(),
                    m.height()
                )));
            }
        }
        if let Some(o) = &self.occlusion {
            if o.width() != w || o.height() != h {
                return Err(Error::Shape(format!(
                    "occlusion mask is {}x{}, left image is {w}x{h}",
                    o.width(),
                    o.height()
                )));
            }
        }
        if w % 4 != 0 || h % 4 != 0 || w < 12 || h < 12 {
            return Err(Error::Shape(format!(
                "image dimensions must be multiples of 4 and at least 12, got {w}x{h}"
            )));
        }
        Ok(())
    }
}

/// Quarter-resolution intermediates kept for inspection.
#[derive(Debug, Clone)]
pub struct Trace {
    pub scale_shift: ScaleShift,
    /// Softargmax disparity of the aggregated mono volume.
    pub mono_disparity: FloatMap,
    pub mono_confidence: ConfidenceMap,
    pub scaled_mono_left: FloatMap,
    pub scaled_mono_right: FloatMap,
    pub mono_lrc: ConfidenceMap,
    pub truncation: Option<TruncationMask>,
    pub disparity_quarter: FloatMap,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub disparity: FloatMap,
    pub report: RunReport,
    pub trace: Trace,
}

struct Stopwatch {
    timings: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(Error::at_stage(name))?;
        self.timings.insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        Ok(out)
    }
}

fn augment_spec(a: &AugmentConfig, seed: u64) -> AugmentSpec {
    AugmentSpec {
        kind: a.kind,
        bin: a.bin,
        seed,
    }
}

/// Runs every stage on in-memory inputs.
pub fn run_on_inputs(inputs: &Inputs, params: &Params) -> Result<PipelineOutput> {
    params.validate()?;
    inputs.check()?;
    let mut sw = Stopwatch {
        timings: BTreeMap::new(),
    };

    let (mono_left, mono_right) = match params.augment {
        Some(AugmentConfig {
            kind: AugmentKind::PerfectMono,
            ..
        }) => sw.stage("perfect_mono", || {
            let gt = inputs
                .gt
                .as_ref()
                .ok_or_else(|| Error::Config("perfect_mono needs ground truth".into()))?;
            synthetic_mono(gt, &right_view_disparity(gt), 0.0, 0)
        })?,
        _ => (inputs.mono_left.clone(), inputs.mono_right.clone()),
    };

    let (il, ir, ml, mr) = sw.stage("downsample", || {
        Ok((
            downsample_quarter(&inputs.left)?,
            downsample_quarter(&inputs.right)?,
            downsample_quarter(&mono_left)?,
            downsample_quarter(&mono_right)?,
        ))
    })?;

    let mut v_s = sw.stage("stereo_volume", || {
        let fl = census_features(&il, params.census_window)?;
        let fr = census_features(&ir, params.census_window)?;
        let temp = params
            .stereo_temperature
            .unwrap_or_else(|| (fl.channels() as f64).sqrt());
        let v = build_correlation_volume(&fl, &fr)?;
        let v = if params.stereo_aggregation { box_filter_disparity(&v) } else { v };
        Ok(v.scaled(1.0 / temp))
    })?;

    let v_m = sw.stage("mono_volume", || {
        build_correlation_volume(&compute_normals(&ml)?, &compute_normals(&mr)?)
    })?;

    let (bins_l, (mut v_dm, v_cm)) = sw.stage("mono_aggregation", || {
        let bl = depth_bin_masks(&ml, params.n_bins)?;
        let br = depth_bin_masks(&mr, params.n_bins)?;
        let masked = (0..params.n_bins)
            .map(|n| mask_volume(&v_m, &bl, &br, n))
            .collect::<Result<Vec<_>>>()?;
        Ok((bl, aggregate_mono_volumes(&masked, &ml, &mr, params.beta)?))
    })?;

    if let Some(a) = params.augment.filter(|a| a.kind != AugmentKind::PerfectMono) {
        sw.stage("augment", || {
            let spec = augment_spec(&a, params.seed);
            match a.target {
                AugmentTarget::Stereo => v_s = augment_volume(&v_s, &bins_l, &spec)?,
                AugmentTarget::Mono => v_dm = augment_volume(&v_dm, &bins_l, &spec)?,
            }
            Ok(())
        })?;
    }

    let (d_l, d_r, c_l, c_r) = sw.stage("coarse_disparity", || {
        Ok((
            softargmax_disparity_left(&v_dm),
            softargmax_disparity_right(&v_dm),
            entropy_confidence_left(&v_cm)?,
            entropy_confidence_right(&v_cm)?,
        ))
    })?;

    let (ss, m_hat_l, m_hat_r, c_m) = sw.stage("scaling", || {
        let w_l = combine_confidence(&c_l, &soft_lrc(&d_l, &d_r, params.t_lrc)?)?;
        let w_r = combine_confidence(&c_r, &soft_lrc_right(&d_r, &d_l, params.t_lrc)?)?;
        let ss = solve_scale_shift(&ml, &mr, &d_l, &d_r, &w_l, &w_r)?;
        let m_hat_l = apply_scale_shift(&ml, ss);
        let m_hat_r = apply_scale_shift(&mr, ss);
        let c_m = soft_lrc(&m_hat_l, &m_hat_r, params.t_lrc)?;
        Ok((ss, m_hat_l, m_hat_r, c_m))
    })?;

    let truncation = if params.truncation {
        Some(sw.stage("truncation", || {
            let mask = fuzzy_truncate_mask(&m_hat_l, &d_l, &c_m, &c_l, params.t_m, params.k_sharp)?;
            v_s = apply_truncation(&v_s, &truncation_volume(&mask, &m_hat_l, params.g)?)?;
            Ok(mask)
        })?)
    } else {
        None
    };

    let fused = sw.stage("fusion", || {
        let guide = if params.anchor_sigma > 0.0 {
            anchor_mono_volume(&v_dm, &m_hat_l, params.anchor_sigma)?
        } else {
            v_dm.clone()
        };
        fuse_volumes(&v_s, &guide, params.w_mono)
    })?;

    let (disparity, quarter) = sw.stage("extract", || {
        let quarter = extract_disparity(&fused, params.mode);
        let mut full = upsample_disparity(&quarter);
        if params.lr_filter {
            let right_q = right_view_from(&fused, params.mode);
            full = lr_consistency_filter(&full, &upsample_disparity(&right_q), params.lrc_tau)?;
        }
        Ok((full, quarter))
    })?;

    let mut report = RunReport::new();
    report.metric("scale", ss.scale).metric("shift", ss.shift);
    if let Some(gt) = &inputs.gt {
        let m = sw.stage("metrics", || disparity_metrics(&disparity, gt, inputs.occlusion.as_ref(), &params.taus))?;
        report.metrics.extend(m);
    }
    report.config = params.echo();
    report.timings = sw.timings;

    Ok(PipelineOutput {
        disparity,
        report,
        trace: Trace {
            scale_shift: ss,
            mono_disparity: d_l,
            mono_confidence: c_l,
            scaled_mono_left: m_hat_l,
            scaled_mono_right: m_hat_r,
            mono_lrc: c_m,
            truncation,
            disparity_quarter: quarter,
        },
    })
}

/// Right-view disparity `D_R[i,k] = j* - k` read from the columns of a fused volume.
fn right_view_from(fused: &CorrelationVolume, mode: ExtractMode) -> FloatMap {
    extract_disparity(&fused.transposed(), mode).map_valid(|d| -d)
}

fn tau_name(tau: f64) -> String {
    format!("bad{tau}")
}

/// bad-τ over All/Noc/Occ for every τ and the average error per region.
/// Regions that are empty (e.g. Occ without occluded pixels) are skipped.
pub fn disparity_metrics(pred: &FloatMap, gt: &FloatMap, occ: Option<&Mask>, taus: &[f64]) -> Result<BTreeMap<String, f64>> {
    let regions = region_split(gt, occ)?;
    let mut out = BTreeMap::new();
    for (name, region) in [("all", &regions.all), ("noc", &regions.noc), ("occ", &regions.occ)] {
        if region.count() == 0 {
            continue;
        }
        for tau in taus {
            out.insert(format!("{}_{name}", tau_name(*tau)), bad_tau(pred, gt, region, *tau)?);
        }
        match avg_error(pred, gt, region) {
            Ok(v) => {
                let key = if name == "all" { "avg_px".to_string() } else { format!("avg_px_{name}") };
                out.insert(key, v);
            }
            Err(Error::UndefinedRegion(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Loads the configured inputs and runs the pipeline.
pub fn run_pipeline(config: &Config) -> Result<(FloatMap, RunReport)> {
    let inputs = config.load_inputs()?;
    let out = run_on_inputs(&inputs, &config.params)?;
    Ok((out.disparity, out.report))
}

/// Metrics of a stored prediction against ground truth. With `depth` the maps
/// are read as depth and AbsRel/RMSE/δ<1.05 are added.
pub fn evaluate(
    pred: impl AsRef<Path>,
    gt: impl AsRef<Path>,
    occ: Option<&Path>,
    taus: &[f64],
    depth: bool,
) -> Result<RunReport> {
    let pred = read_float_map(pred)?;
    let gt = read_float_map(gt)?;
    let occ = occ.map(read_mask).transpose()?;
    pred.ensure_same_shape(&gt, "prediction vs ground truth")?;
    let mut report = RunReport::new();
    if depth {
        let d = depth_metrics(&pred, &gt)?;
        report
            .metric("absrel_pct", d.absrel_pct)
            .metric("rmse", d.rmse)
            .metric("delta105_pct", d.delta105_pct);
    } else {
        report.metrics = disparity_metrics(&pred, &gt, occ.as_ref(), taus)?;
    }
    Ok(report)
}

/// Fixture generators reachable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    RandomDot,
    Mirror,
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_dot" | "random-dot" => Ok(FixtureKind::RandomDot),
            "mirror" => Ok(FixtureKind::Mirror),
            other => Err(Error::Config(format!(
                "unknown fixture kind '{other}' (expected random_dot or mirror)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Random-dot background disparity.
    pub background: f64,
    pub foreground: f64,
    pub rect: Rect,
    /// Mirror-scene background disparity at the left and right borders.
    pub slant: (f64, f64),
    pub d_mirror: f64,
    pub d_virtual: f64,
    pub mono_noise: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            height: 128,
            width: 256,
            seed: 0,
            background: 8.0,
            foreground: 16.0,
            rect: Rect::new(96, 32, 96, 64),
            slant: (4.0, 10.0),
            d_mirror: 12.0,
            d_virtual: 4.0,
            mono_noise: 0.01,
        }
    }
}

impl FixtureParams {
    /// Applies `key=value` settings: h, w, seed, background, foreground,
    /// rect=x,y,width,height, slant=left,right, d_mirror, d_virtual, mono_noise.
    pub fn apply<S: AsRef<str>>(&mut self, settings: &[S]) -> Result<()> {
        for s in settings {
            let s = s.as_ref();
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("fixture parameter '{s}' is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "h" | "height" => self.height = parse_value(k, v)?,
                "w" | "width" => self.width = parse_value(k, v)?,
                "seed" => self.seed = parse_value(k, v)?,
                "background" => self.background = parse_value(k, v)?,
                "foreground" => self.foreground = parse_value(k, v)?,
                "d_mirror" => self.d_mirror = parse_value(k, v)?,
                "d_virtual" => self.d_virtual = parse_value(k, v)?,
                "mono_noise" => self.mono_noise = parse_value(k, v)?,
                "slant" => {
                    let (a, b) = v
                        .split_once(',')
                        .ok_or_else(|| Error::Config(format!("slant needs left,right, got '{v}'")))?;
                    self.slant = (parse_value(k, a.trim())?, parse_value(k, b.trim())?);
                }
                "rect" => {
                    let parts = v
                        .split(',')
                        .map(|p| parse_value::<usize>(k, p.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    if parts.len() != 4 {
                        return Err(Error::Config(format!("rect needs x,y,width,height, got '{v}'")));
                    }
                    self.rect = Rect::new(parts[0], parts[1], parts[2], parts[3]);
                }
                other => return Err(Error::Config(format!("unknown fixture parameter '{other}'"))),
            }
        }
        Ok(())
    }
}

/// All maps of a fixture, ready to be fed to the pipeline.
pub fn build_fixture(kind: FixtureKind, p: &FixtureParams) -> Result<(Inputs, Option<Mask>)> {
    match kind {
        FixtureKind::RandomDot => {
            if !p.rect.fits(p.width, p.height) {
                return Err(Error::Domain(format!("box {:?} does not fit the image", p.rect)));
            }
            let d = box_disparity(p.height, p.width, p.background, p.foreground, p.rect);
            let pair = make_random_dot_pair(p.height, p.width, &d, p.seed)?;
            let (ml, mr) = synthetic_mono(&pair.gt, &right_view_disparity(&pair.gt), p.mono_noise, p.seed ^ 0x6d6f_6e6f)?;
            let occ = pair.occlusion.clone();
            Ok((
                Inputs {
                    left: pair.left,
                    right: pair.right,
                    mono_left: ml,
                    mono_right: mr,
                    gt: Some(pair.gt),
                    occlusion: Some(pair.occlusion),
                },
                Some(occ),
            ))
        }
        FixtureKind::Mirror => {
            let spec = MirrorSpec {
                background: p.slant,
                mono_noise: p.mono_noise,
                ..MirrorSpec::new(p.height, p.width, p.rect, p.d_mirror, p.d_virtual, p.seed)
            };
            let s = make_mirror_scene(&spec)?;
            Ok((
                Inputs {
                    left: s.left,
                    right: s.right,
                    mono_left: s.mono_left,
                    mono_right: s.mono_right,
                    gt: Some(s.gt),
                    occlusion: None,
                },
                Some(s.mirror),
            ))
        }
    }
}

/// Tunables that a fixture's `run.cfg` sets on top of the defaults, as
/// `key = value` lines. The mirror scene runs with a lower truncation
/// threshold and gain; the random-dot scene uses the widest census window.
pub fn fixture_settings(kind: FixtureKind) -> String {
    match kind {
        FixtureKind::RandomDot => "census_window = 7\n".into(),
        FixtureKind::Mirror => "t_m = 0.7\ng = 0.5\n".into(),
    }
}

/// Writes a fixture bundle (`left.pfm`, `right.pfm`, `mono_left.pfm`,
/// `mono_right.pfm`, `gt.pfm`, a region mask and `run.cfg`) into `out_dir`.
pub fn gen_fixture(kind: FixtureKind, params: &FixtureParams, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (inputs, region) = build_fixture(kind, params)?;
    write_float_map(&inputs.left, dir.join("left.pfm"))?;
    write_float_map(&inputs.right, dir.join("right.pfm"))?;
    write_float_map(&inputs.mono_left, dir.join("mono_left.pfm"))?;
    write_float_map(&inputs.mono_right, dir.join("mono_right.pfm"))?;
    if let Some(gt) = &inputs.gt {
        write_float_map(gt, dir.join("gt.pfm"))?;
    }
    let mut cfg = String::from("left = left.pfm\nright = right.pfm\nmono_left = mono_left.pfm\nmono_right = mono_right.pfm\ngt = gt.pfm\n");
    cfg.push_str(&fixture_settings(kind));
    match (kind, region) {
        (FixtureKind::RandomDot, Some(occ)) => {
            write_mask(&occ, dir.join("occ.pgm"))?;
            cfg.push_str("occ = occ.pgm\n");
        }
        (FixtureKind::Mirror, Some(mirror)) => write_mask(&mirror, dir.join("mirror.pgm"))?,
        _ => {}
    }
    cfg.push_str(&format!("seed = {}\n", params.seed));
    let path = dir.join("run.cfg");
    std::fs::write(&path, cfg).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_file() {
        let c = Config::parse("# nothing\n\n", "/tmp").unwrap();
        assert_eq!(c.params, Params::default());
    }

    #[test]
    fn keys_and_paths() {
        let c = Config::parse("left = a.pfm\nright=/abs/b.pfm\nw_mono = 0.25 # comment\nmode = softargmax\n", "/base").unwrap();
        assert_eq!(c.left.as_deref(), Some(Path::new("/base/a.pfm")));
        assert_eq!(c.right.as_deref(), Some(Path::new("/abs/b.pfm")));
        assert_eq!(c.params.w_mono, 0.25);
        assert_eq!(c.params.mode, ExtractMode::Softargmax);
    }

    #[test]
    fn unknown_key_and_bad_values_are_config_errors() {
        assert!(matches!(Config::parse("colour = red", ""), Err(Error::Config(_))));
        assert!(matches!(Config::parse("w_mono = 2", ""), Err(Error::Config(_))));
        assert!(matches!(Config::parse("n_bins = x", ""), Err(Error::Config(_))));
        assert!(matches!(Config::parse("just words", ""), Err(Error::Config(_))));
        assert!(matches!(Config::parse("augment.kind = flip", ""), Err(Error::Config(_))));
    }

    #[test]
    fn augment_keys() {
        let c = Config::parse("augment.kind = roll\naugment.roll = -2\naugment.bin = 3\n", "").unwrap();
        assert_eq!(
            c.params.augment,
            Some(AugmentConfig {
                kind: AugmentKind::Roll { offset: -2 },
                bin: 3,
                target: AugmentTarget::Stereo
            })
        );
        let mut c = Config::parse("augment.kind = zero\n", "").unwrap();
        c.apply_overrides(&["augment.sigma=2", "augment.target=mono"]).unwrap();
        let a = c.params.augment.unwrap();
        assert_eq!(a.kind, AugmentKind::Zero { amplitude: None, sigma: 2.0 });
        assert_eq!(a.target, AugmentTarget::Mono);
    }

    #[test]
    fn overrides_win() {
        let mut c = Config::parse("g = 0.5", "").unwrap();
        c.apply_overrides(&["g=0.7", "truncation=off"]).unwrap();
        assert_eq!(c.params.g, 0.7);
        assert!(!c.params.truncation);
        assert!(matches!(c.apply_overrides(&["g"]), Err(Error::Config(_))));
    }

    #[test]
    fn echo_lists_every_tunable() {
        let e = Params::default().echo();
        for k in ["n_bins", "t_lrc", "t_m", "k_sharp", "g", "w_mono", "beta", "census_window", "mode", "lrc_tau", "seed"] {
            assert!(e.contains_key(k), "{k}");
        }
    }

    #[test]
    fn mismatched_dims_fail_before_compute() {
        let m = FloatMap::filled(16, 16, 0.5);
        let inputs = Inputs {
            left: m.clone(),
            right: FloatMap::filled(20, 16, 0.5),
            mono_left: m.clone(),
            mono_right: m,
            gt: None,
            occlusion: None,
        };
        let err = run_on_inputs(&inputs, &Params::default()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn stage_errors_carry_labels() {
        // constant mono maps make the scale/shift system singular
        let (inputs, _) = build_fixture(
            FixtureKind::RandomDot,
            &FixtureParams {
                height: 32,
                width: 64,
                rect: Rect::new(16, 8, 16, 8),
                ..FixtureParams::default()
            },
        )
        .unwrap();
        let flat = Inputs {
            mono_left: FloatMap::filled(64, 32, 0.5),
            mono_right: FloatMap::filled(64, 32, 0.5),
            ..inputs
        };
        let err = run_on_inputs(&flat, &Params::default()).unwrap_err();
        match &err {
            Error::Stage { stage, source } => {
                assert_eq!(*stage, "scaling");
                assert!(matches!(**source, Error::Degenerate(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fixture_kind_names() {
        assert_eq!("mirror".parse::<FixtureKind>().unwrap(), FixtureKind::Mirror);
        assert!(matches!("cube".parse::<FixtureKind>(), Err(Error::Config(_))));
    }
}
