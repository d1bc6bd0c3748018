//! File formats: grayscale PFM for float maps, binary PGM for masks and a
//! JSON run report.
//!
//! PFM payloads store invalid pixels as NaN. Rows are stored bottom-to-top and
//! the sign of the scale field selects the byte order (negative = little endian).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};
use crate::map::{FloatMap, Mask};

fn read_header_line(reader: &mut impl BufRead, path: &Path, what: &str) -> Result<String> {
    let mut line = String::new();
    let n = reader
        .read_line(&mut line)
        .map_err(|e| Error::io(path, e))?;
    if n == 0 {
        return Err(Error::Format(format!("missing {what} line")));
    }
    Ok(line.trim().to_string())
}

fn parse_dims(line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let mut next = |name: &str| -> Result<usize> {
        parts
            .next()
            .ok_or_else(|| Error::Format(format!("missing {name} in `{line}`")))?
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("bad {name} in `{line}`")))
    };
    let w = next("width")?;
    let h = next("height")?;
    Ok((w, h))
}

pub fn read_float_map(path: impl AsRef<Path>) -> Result<FloatMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let magic = read_header_line(&mut reader, path, "magic")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::Format("color PFM (PF) is not supported".into())),
        other => return Err(Error::Format(format!("bad PFM magic `{other}`"))),
    }
    let (width, height) = parse_dims(&read_header_line(&mut reader, path, "dimensions")?)?;
    let scale_line = read_header_line(&mut reader, path, "scale")?;
    let scale: f64 = scale_line
        .parse()
        .map_err(|_| Error::Format(format!("bad PFM scale `{scale_line}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("PFM scale must be nonzero, got {scale_line}")));
    }
    let little_endian = scale < 0.0;

    let mut bytes = vec![0u8; width * height * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| Error::io(path, e))?;

    let mut data = vec![0.0f64; width * height];
    for (n, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, x) = (n / width, n % width);
        let y = height - 1 - file_row;
        data[y * width + x] = v as f64;
    }
    FloatMap::from_vec(width, height, data)
}

/// Serialized PFM bytes for `map`, native byte order.
pub fn encode_float_map(map: &FloatMap) -> Result<Vec<u8>> {
    let (w, h) = (map.width(), map.height());
    if w == 0 || h == 0 {
        return Err(Error::Shape(format!("cannot write a {w}x{h} map")));
    }
    let scale = if cfg!(target_endian = "little") { "-1" } else { "1" };
    let mut out = format!("Pf\n{w} {h}\n{scale}\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let v = if map.is_valid(x, y) {
                map.get(x, y) as f32
            } else {
                f32::NAN
            };
            out.extend_from_slice(&v.to_ne_bytes());
        }
    }
    Ok(out)
}

pub fn write_float_map(map: &FloatMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_float_map(map)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a binary (P5) PGM; any nonzero sample is `true`.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    // Header tokens may be separated by arbitrary whitespace and comments.
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;

    if tokens[0] != "P5" {
        return Err(Error::Format(format!("bad PGM magic `{}`", tokens[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field `{s}`")))
    };
    let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let raster = bytes.get(pos..pos + w * h).ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated PGM raster"),
        )
    })?;
    Mask::new(w, h, raster.iter().map(|b| *b != 0).collect())
}

pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let body: Vec<u8> = mask.data().iter().map(|b| if *b { 255 } else { 0 }).collect();
    write!(w, "P5\n{} {}\n255\n", mask.width(), mask.height())
        .and_then(|_| w.write_all(&body))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Metrics, configuration echo and stage timings of one invocation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub metrics: BTreeMap<String, f64>,
    pub config: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.metrics.insert(name.into(), value);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty() && self.config.is_empty() && self.timings.is_empty()
    }

    /// Report as a JSON value. Keys are sorted; reals carry 9 significant digits.
    pub fn to_json(&self) -> Result<Value> {
        fn reals(map: &BTreeMap<String, f64>, section: &str) -> Result<Map<String, Value>> {
            map.iter()
                .map(|(k, v)| Ok((k.clone(), Value::Number(real_9(*v, section, k)?))))
                .collect()
        }
        let mut root = Map::new();
        if !self.metrics.is_empty() {
            root.insert("metrics".into(), Value::Object(reals(&self.metrics, "metrics")?));
        }
        if !self.config.is_empty() {
            let cfg = self
                .config
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect();
            root.insert("config".into(), Value::Object(cfg));
        }
        if !self.timings.is_empty() {
            root.insert("timings".into(), Value::Object(reals(&self.timings, "timings")?));
        }
        Ok(Value::Object(root))
    }

    pub fn to_json_string(&self) -> Result<String> {
        let value = self.to_json()?;
        serde_json::to_string_pretty(&value).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<RunReport> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        let mut report = RunReport::new();
        let section = |name: &str| value.get(name).and_then(Value::as_object);
        if let Some(m) = section("metrics") {
            for (k, v) in m {
                let x = v
                    .as_f64()
                    .ok_or_else(|| Error::Serialization(format!("metric `{k}` is not a number")))?;
                report.metrics.insert(k.clone(), x);
            }
        }
        if let Some(m) = section("config") {
            for (k, v) in m {
                report
                    .config
                    .insert(k.clone(), v.as_str().unwrap_or_default().to_string());
            }
        }
        if let Some(m) = section("timings") {
            for (k, v) in m {
                report.timings.insert(k.clone(), v.as_f64().unwrap_or(0.0));
            }
        }
        Ok(report)
    }
}

/// Rounds to 9 significant digits; the shortest decimal of the rounded value is emitted.
fn real_9(v: f64, section: &str, key: &str) -> Result<Number> {
    if !v.is_finite() {
        return Err(Error::Serialization(format!(
            "{section}.{key} is {v}; JSON cannot encode non-finite reals"
        )));
    }
    let rounded: f64 = format!("{v:.8e}")
        .parse()
        .map_err(|_| Error::Serialization(format!("cannot round {v}")))?;
    Number::from_f64(rounded).ok_or_else(|| Error::Serialization(format!("cannot encode {v}")))
}

pub fn write_report(report: &RunReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = report.to_json_string()?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
