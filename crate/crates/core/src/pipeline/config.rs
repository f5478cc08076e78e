//! Flat `key = value` configuration.
//!
//! One setting per line, `#` starts a comment. Keys are grouped by stage
//! with a dotted prefix (`dsi.nz`, `fill.kernel`, ...). Relative paths in a
//! file are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::emvs::{DepthSampling, DsiConfig, MaximaConfig};
use crate::error::{Error, Result};
use crate::fusion::{FillConfig, WeightKernel};
use crate::segmentation::{Connectivity, GrowConfig};
use crate::synth::SynthParams;

/// Ground truth for planar error evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Distance of the fronto-parallel ground-truth plane from the reference
    /// camera, meters. Without it no errors are computed.
    pub plane_depth: Option<f64>,
    pub kernels: Vec<WeightKernel>,
    /// Window length for `eval`, seconds.
    pub segment_len: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            plane_depth: None,
            kernels: WeightKernel::ALL.to_vec(),
            segment_len: 1.0,
        }
    }
}

/// Stage parameters of one reference-view reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParams {
    pub dsi: DsiConfig,
    pub maxima: MaximaConfig,
    /// Window of the median filter applied to the semi-dense depths; 1
    /// disables it.
    pub median: usize,
    /// Isolated-point removal: a semi-dense pixel needs `min_neighbours`
    /// other points within `outlier_radius` pixels. 0 neighbours disables.
    pub outlier_radius: usize,
    pub min_neighbours: usize,
    pub grow: GrowConfig,
    pub fill: FillConfig,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            dsi: DsiConfig::default(),
            maxima: MaximaConfig::default(),
            median: 15,
            outlier_radius: 2,
            min_neighbours: 8,
            grow: GrowConfig::default(),
            fill: FillConfig::default(),
        }
    }
}

impl MapParams {
    pub fn validate(&self) -> Result<()> {
        self.dsi.validate().map_err(as_config)?;
        self.maxima.validate()?;
        if self.median == 0 || self.median.is_multiple_of(2) {
            return Err(Error::Config(format!("maxima.median must be odd and >= 1, got {}", self.median)));
        }
        self.grow.validate()?;
        self.fill.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub sequence: Option<String>,
    pub width: usize,
    pub height: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub t_ref: f64,
    pub out: PathBuf,
    pub map: MapParams,
    pub eval: EvalConfig,
    /// Whether `dsi.nx` / `dsi.ny` were set explicitly; otherwise they follow
    /// the image size.
    grid_set: (bool, bool),
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: PathBuf::from("."),
            sequence: None,
            width: 240,
            height: 180,
            t_start: 0.0,
            t_end: 1.0,
            t_ref: 0.5,
            out: PathBuf::from("out"),
            map: MapParams::default(),
            eval: EvalConfig::default(),
            grid_set: (false, false),
        }
    }
}

/// Every key accepted by [`PipelineConfig::set`].
pub const PIPELINE_KEYS: &[&str] = &[
    "dataset",
    "sequence",
    "width",
    "height",
    "t_start",
    "t_end",
    "t_ref",
    "out",
    "dsi.nx",
    "dsi.ny",
    "dsi.nz",
    "dsi.z_min",
    "dsi.z_max",
    "dsi.sampling",
    "maxima.kernel",
    "maxima.c",
    "maxima.median",
    "maxima.outlier_radius",
    "maxima.min_neighbours",
    "grow.threshold",
    "grow.connectivity",
    "grow.min_region_size",
    "fill.contour_fraction",
    "fill.interior_fraction",
    "fill.ring_width",
    "fill.kernel",
    "fill.sigma",
    "eval.plane_depth",
    "eval.kernels",
    "eval.segment_len",
];

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

/// Splits `key = value` / `key=value`.
pub fn split_assignment(s: &str) -> Result<(&str, &str)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got {s:?}")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(Error::Config(format!("missing key in {s:?}")));
    }
    Ok((k, v))
}

/// Parses a config text into `(line, key, value)` triples.
fn assignments(text: &str, source: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_assignment(line).map_err(|e| Error::Config(format!("{source}:{}: {e}", i + 1)))?;
        out.push((i + 1, k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let m = &mut self.map;
        match key {
            "dataset" => self.dataset = PathBuf::from(raw),
            "sequence" => self.sequence = Some(raw.to_owned()),
            "width" => self.width = value(key, raw)?,
            "height" => self.height = value(key, raw)?,
            "t_start" => self.t_start = value(key, raw)?,
            "t_end" => self.t_end = value(key, raw)?,
            "t_ref" => self.t_ref = value(key, raw)?,
            "out" => self.out = PathBuf::from(raw),
            "dsi.nx" => {
                m.dsi.nx = value(key, raw)?;
                self.grid_set.0 = true;
            }
            "dsi.ny" => {
                m.dsi.ny = value(key, raw)?;
                self.grid_set.1 = true;
            }
            "dsi.nz" => m.dsi.nz = value(key, raw)?,
            "dsi.z_min" => m.dsi.z_min = value(key, raw)?,
            "dsi.z_max" => m.dsi.z_max = value(key, raw)?,
            "dsi.sampling" => m.dsi.sampling = raw.parse::<DepthSampling>()?,
            "maxima.kernel" => m.maxima.kernel = value(key, raw)?,
            "maxima.c" => m.maxima.c = value(key, raw)?,
            "maxima.median" => m.median = value(key, raw)?,
            "maxima.outlier_radius" => m.outlier_radius = value(key, raw)?,
            "maxima.min_neighbours" => m.min_neighbours = value(key, raw)?,
            "grow.threshold" => m.grow.threshold = value(key, raw)?,
            "grow.connectivity" => m.grow.connectivity = Connectivity::try_from(value::<u32>(key, raw)?)?,
            "grow.min_region_size" => m.grow.min_region_size = value(key, raw)?,
            "fill.contour_fraction" => m.fill.contour_fraction = value(key, raw)?,
            "fill.interior_fraction" => m.fill.interior_fraction = value(key, raw)?,
            "fill.ring_width" => m.fill.ring_width = value(key, raw)?,
            "fill.kernel" => m.fill.kernel = raw.parse()?,
            "fill.sigma" => m.fill.sigma = value(key, raw)?,
            "eval.plane_depth" => {
                self.eval.plane_depth = match raw {
                    "" | "none" => None,
                    _ => Some(value(key, raw)?),
                }
            }
            "eval.kernels" => {
                self.eval.kernels = raw
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "eval.segment_len" => self.eval.segment_len = value(key, raw)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        if key == "width" && !self.grid_set.0 {
            m.dsi.nx = self.width;
        }
        if key == "height" && !self.grid_set.1 {
            m.dsi.ny = self.height;
        }
        Ok(())
    }

    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (line, k, v) in assignments(text, &base.display().to_string())? {
            cfg.set(&k, &v)
                .map_err(|e| Error::Config(format!("line {line}: {}", e.to_string().trim_start_matches("invalid config: "))))?;
        }
        cfg.dataset = base.join(&cfg.dataset);
        cfg.out = base.join(&cfg.out);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!("image size {}x{} is empty", self.width, self.height)));
        }
        if self.width > u16::MAX as usize + 1 || self.height > u16::MAX as usize + 1 {
            return Err(Error::Config(format!("image size {}x{} too large", self.width, self.height)));
        }
        if !(self.t_start < self.t_end) {
            return Err(Error::Config(format!(
                "t_start ({}) must be before t_end ({})",
                self.t_start, self.t_end
            )));
        }
        if !(self.t_start < self.t_ref && self.t_ref <= self.t_end) {
            return Err(Error::Config(format!(
                "t_ref ({}) must lie in ({}, {}]",
                self.t_ref, self.t_start, self.t_end
            )));
        }
        if let Some(d) = self.eval.plane_depth {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("eval.plane_depth must be > 0, got {d}")));
            }
        }
        if !(self.eval.segment_len > 0.0 && self.eval.segment_len.is_finite()) {
            return Err(Error::Config(format!(
                "eval.segment_len must be > 0, got {}",
                self.eval.segment_len
            )));
        }
        self.map.validate()
    }

    /// Sequence name for reports: explicit, else the dataset directory name.
    pub fn sequence_name(&self) -> String {
        if let Some(s) = &self.sequence {
            return s.clone();
        }
        std::fs::canonicalize(&self.dataset)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "sequence".into())
    }
}

/// Every key accepted by [`set_synth_param`].
pub const SYNTH_KEYS: &[&str] = &[
    "width",
    "height",
    "fx",
    "fy",
    "cx",
    "cy",
    "k1",
    "k2",
    "p1",
    "p2",
    "k3",
    "depth",
    "duration",
    "speed",
    "contrast",
    "sim_rate",
    "image_rate",
    "pose_rate",
    "seed",
    "blobs",
    "blob_radius_min",
    "blob_radius_max",
    "low",
    "high",
    "jitter",
];

pub fn set_synth_param(p: &mut SynthParams, key: &str, raw: &str) -> Result<()> {
    let d = &mut p.distortion;
    match key {
        "width" => p.width = value(key, raw)?,
        "height" => p.height = value(key, raw)?,
        "fx" => p.fx = value(key, raw)?,
        "fy" => p.fy = value(key, raw)?,
        "cx" => p.cx = value(key, raw)?,
        "cy" => p.cy = value(key, raw)?,
        "k1" => d.k1 = value(key, raw)?,
        "k2" => d.k2 = value(key, raw)?,
        "p1" => d.p1 = value(key, raw)?,
        "p2" => d.p2 = value(key, raw)?,
        "k3" => d.k3 = value(key, raw)?,
        "depth" => p.depth = value(key, raw)?,
        "duration" => p.duration = value(key, raw)?,
        "speed" => p.speed = value(key, raw)?,
        "contrast" => p.contrast = value(key, raw)?,
        "sim_rate" => p.sim_rate = value(key, raw)?,
        "image_rate" => p.image_rate = value(key, raw)?,
        "pose_rate" => p.pose_rate = value(key, raw)?,
        "seed" => p.seed = value(key, raw)?,
        "blobs" => p.blobs = value(key, raw)?,
        "blob_radius_min" => p.blob_radius.0 = value(key, raw)?,
        "blob_radius_max" => p.blob_radius.1 = value(key, raw)?,
        "low" => p.low = value(key, raw)?,
        "high" => p.high = value(key, raw)?,
        "jitter" => p.jitter = value(key, raw)?,
        other => return Err(Error::Config(format!("unknown synth key {other:?}"))),
    }
    Ok(())
}

/// Parses a synth parameter file in the same flat format.
pub fn parse_synth_params(text: &str, source: &str) -> Result<SynthParams> {
    let mut p = SynthParams::default();
    for (line, k, v) in assignments(text, source)? {
        set_synth_param(&mut p, &k, &v).map_err(|e| Error::Config(format!("{source}:{line}: {e}")))?;
    }
    Ok(p)
}

pub fn validate_synth_params(p: &SynthParams) -> Result<()> {
    if p.width == 0 || p.height == 0 || p.width > u16::MAX as usize + 1 || p.height > u16::MAX as usize + 1 {
        return Err(Error::Config(format!("image size {}x{} is invalid", p.width, p.height)));
    }
    let positive = [
        ("depth", p.depth),
        ("contrast", p.contrast),
        ("sim_rate", p.sim_rate),
        ("image_rate", p.image_rate),
        ("pose_rate", p.pose_rate),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be > 0, got {v}")));
        }
    }
    if !(p.duration >= 0.0 && p.duration.is_finite()) {
        return Err(Error::Config(format!("duration must be >= 0, got {}", p.duration)));
    }
    if !(p.jitter >= 0.0) {
        return Err(Error::Config(format!("jitter must be >= 0, got {}", p.jitter)));
    }
    if !(0.0 < p.blob_radius.0 && p.blob_radius.0 < p.blob_radius.1) {
        return Err(Error::Config(format!(
            "blob radius range ({}, {}) is empty",
            p.blob_radius.0, p.blob_radius.1
        )));
    }
    p.camera().map(|_| ()).map_err(as_config)
}
