//! Scenario configuration files (TOML).
//!
//! ```toml
//! [ambient]
//! n = 3
//!
//! [[mobius.word]]
//! type = "sphere"
//! params = { center = [0.0, 0.0, 3.0], radius = 2.0 }
//!
//! [surface]
//! kind = "catenoid"
//! params = { scale = 1.0 }
//! domain = { lo = [-3.141592653589793, -0.9], hi = [3.141592653589793, 0.9] }
//!
//! [sweep]
//! radii = [1.80, 1.82, 1.84]
//! r_max = 1.9
//!
//! [quadrature]
//! tol = 1e-7
//! max_depth = 14
//!
//! [checks]
//! volume_identity = true
//! ```
//!
//! Word entries are applied right-to-left (the last entry acts first), the
//! same order as [`MobiusMap::new`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use toml::{Spanned, Table, Value};

use crate::geom::{orthonormal_frame, Hyperplane, Isometry, Sphere, VecN};
use crate::mobius::{make_phi_a, make_sigma_a, MobiusError, MobiusMap, Reflection};
use crate::quadrature::{QuadOptions, DEFAULT_MAX_DEPTH, DEFAULT_TOL};
use crate::surfaces::{self, ParamBox, ParametricPatch};

/// Largest accepted ambient dimension.
pub const MAX_DIM: usize = 16;
/// Largest accepted generated radius count.
pub const MAX_RADII: usize = 10_000;
/// Deepest accepted quadrature subdivision.
pub const MAX_DEPTH_LIMIT: u32 = 30;

/// A configuration problem, located by field path and (when known) line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.field.is_empty()) {
            (Some(l), false) => write!(f, "line {l}: {}: {}", self.field, self.message),
            (Some(l), true) => write!(f, "line {l}: {}", self.message),
            (None, false) => write!(f, "{}: {}", self.field, self.message),
            (None, true) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            field: field.into(),
            message: message.into(),
        }
    }

    fn at(mut self, line: Option<usize>) -> Self {
        if self.line.is_none() {
            self.line = line;
        }
        self
    }
}

// --- raw (serde) layer ---------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    ambient: Spanned<RawAmbient>,
    mobius: Option<Spanned<RawMobius>>,
    surface: Option<Spanned<RawSurface>>,
    sweep: Option<Spanned<RawSweep>>,
    quadrature: Option<Spanned<RawQuadrature>>,
    checks: Option<Spanned<RawChecks>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAmbient {
    n: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMobius {
    word: Vec<Spanned<RawWord>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWord {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    params: Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWordDoc {
    word: Vec<Spanned<RawWord>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSurface {
    kind: String,
    #[serde(default)]
    params: Table,
    domain: Option<RawDomain>,
    #[serde(default)]
    mirrors: Vec<RawPlane>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlane {
    normal: Vec<f64>,
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    radii: Option<Vec<f64>>,
    r_lo: Option<f64>,
    r_hi: Option<f64>,
    count: Option<i64>,
    spacing: Option<String>,
    r_max: Option<f64>,
    rho_nodes: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    tol: Option<f64>,
    max_depth: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    #[serde(default)]
    volume_identity: bool,
    #[serde(default)]
    weighted_identity: bool,
    #[serde(default)]
    flux: bool,
    #[serde(default)]
    coarea: bool,
    #[serde(default)]
    gradient: bool,
    #[serde(default, rename = "divW")]
    div_w: bool,
    #[serde(default)]
    prescribed_point: bool,
}

// --- validated layer -----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WordSpec {
    Sphere { center: Vec<f64>, radius: f64 },
    Plane { normal: Vec<f64>, offset: f64 },
    NamedSigmaA { a: Vec<f64> },
    NamedPhiA { a: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    /// Flat `k`-disk through `point` spanned by `span`; parameter box
    /// `[-extent, extent]^k` unless a domain is given.
    FlatDisk { point: Vec<f64>, span: Vec<Vec<f64>>, extent: f64 },
    Catenoid { scale: f64 },
    Helicoid { pitch: f64 },
    Enneper,
    ComplexParabola,
    RoundSphere { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    #[serde(flatten)]
    pub kind: SurfaceKind,
    pub domain: Option<(Vec<f64>, Vec<f64>)>,
    /// Mirror planes applied to the image, first entry first.
    pub mirrors: Vec<PlaneSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub radii: Vec<f64>,
    pub r_max: f64,
    pub rho_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChecksSpec {
    pub volume_identity: bool,
    pub weighted_identity: bool,
    pub flux: bool,
    pub coarea: bool,
    pub gradient: bool,
    #[serde(rename = "divW")]
    pub div_w: bool,
    pub prescribed_point: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub n: usize,
    pub word: Vec<WordSpec>,
    pub surface: Option<SurfaceSpec>,
    pub sweep: Option<SweepSpec>,
    pub tol: f64,
    pub max_depth: u32,
    pub checks: ChecksSpec,
    /// Line of each `[[mobius.word]]` entry, for diagnostics.
    #[serde(skip)]
    word_lines: Vec<usize>,
    #[serde(skip)]
    sweep_line: Option<usize>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn get_number(table: &Table, key: &str, path: &str) -> Result<Option<f64>, ConfigError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Float(x)) => Ok(Some(*x)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(other) => Err(ConfigError::new(
            format!("{path}.{key}"),
            format!("expected a number, found {}", other.type_str()),
        )),
    }
}

fn require_number(table: &Table, key: &str, path: &str) -> Result<f64, ConfigError> {
    let x = get_number(table, key, path)?.ok_or_else(|| ConfigError::new(format!("{path}.{key}"), "missing"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::new(format!("{path}.{key}"), "must be finite"))
    }
}

fn value_to_vec(v: &Value, field: &str) -> Result<Vec<f64>, ConfigError> {
    let Value::Array(items) = v else {
        return Err(ConfigError::new(field, format!("expected an array of numbers, found {}", v.type_str())));
    };
    items
        .iter()
        .map(|item| match item {
            Value::Float(x) if x.is_finite() => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            Value::Float(_) => Err(ConfigError::new(field, "entries must be finite")),
            other => Err(ConfigError::new(field, format!("expected numbers, found {}", other.type_str()))),
        })
        .collect()
}

fn require_vector(table: &Table, key: &str, path: &str, n: usize) -> Result<Vec<f64>, ConfigError> {
    let field = format!("{path}.{key}");
    let v = table.get(key).ok_or_else(|| ConfigError::new(&field, "missing"))?;
    let xs = value_to_vec(v, &field)?;
    if xs.len() != n {
        return Err(ConfigError::new(field, format!("expected {n} components, found {}", xs.len())));
    }
    Ok(xs)
}

fn reject_unknown(table: &Table, allowed: &[&str], path: &str, what: &str) -> Result<(), ConfigError> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            let expected = if allowed.is_empty() {
                "none".to_string()
            } else {
                allowed.join(", ")
            };
            return Err(ConfigError::new(
                format!("{path}.{key}"),
                format!("unknown parameter for {what} (expected: {expected})"),
            ));
        }
    }
    Ok(())
}

fn check_finite(xs: &[f64], field: &str) -> Result<(), ConfigError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ConfigError::new(field, "entries must be finite"))
    }
}

fn parse_word_entry(raw: &RawWord, path: &str, n: usize) -> Result<WordSpec, ConfigError> {
    let params = &raw.params;
    let ppath = format!("{path}.params");
    match raw.kind.as_str() {
        "sphere" => {
            reject_unknown(params, &["center", "radius"], &ppath, "a sphere")?;
            let center = require_vector(params, "center", &ppath, n)?;
            let radius = require_number(params, "radius", &ppath)?;
            if !(radius > 0.0) {
                return Err(ConfigError::new(format!("{ppath}.radius"), "must be positive"));
            }
            Ok(WordSpec::Sphere { center, radius })
        }
        "plane" => {
            reject_unknown(params, &["normal", "offset"], &ppath, "a plane")?;
            let normal = require_vector(params, "normal", &ppath, n)?;
            if normal.iter().all(|x| *x == 0.0) {
                return Err(ConfigError::new(format!("{ppath}.normal"), "must be nonzero"));
            }
            let offset = require_number(params, "offset", &ppath)?;
            Ok(WordSpec::Plane { normal, offset })
        }
        "named_sigma_a" | "named_phi_a" => {
            reject_unknown(params, &["a"], &ppath, "a named map")?;
            let a = require_vector(params, "a", &ppath, n)?;
            let norm2: f64 = a.iter().map(|x| x * x).sum();
            if raw.kind == "named_sigma_a" {
                if !(norm2 > 0.0 && norm2 < 1.0) {
                    return Err(ConfigError::new(format!("{ppath}.a"), "need 0 < |a| < 1"));
                }
                Ok(WordSpec::NamedSigmaA { a })
            } else {
                if !(norm2 < 1.0) {
                    return Err(ConfigError::new(format!("{ppath}.a"), "need |a| < 1"));
                }
                Ok(WordSpec::NamedPhiA { a })
            }
        }
        other => Err(ConfigError::new(
            format!("{path}.type"),
            format!("unknown reflection type `{other}` (expected sphere, plane, named_sigma_a, named_phi_a)"),
        )),
    }
}

fn parse_words(src: &str, words: &[Spanned<RawWord>], base: &str, n: usize) -> Result<(Vec<WordSpec>, Vec<usize>), ConfigError> {
    if words.is_empty() {
        return Err(ConfigError::new(base, "the word must contain at least one reflection"));
    }
    let mut specs = Vec::with_capacity(words.len());
    let mut lines = Vec::with_capacity(words.len());
    for (i, w) in words.iter().enumerate() {
        let line = line_of(src, w.span().start);
        specs.push(parse_word_entry(w.get_ref(), &format!("{base}[{i}]"), n).map_err(|e| e.at(Some(line)))?);
        lines.push(line);
    }
    Ok((specs, lines))
}

fn parse_surface(raw: &RawSurface, n: usize) -> Result<SurfaceSpec, ConfigError> {
    let p = &raw.params;
    let path = "surface.params";
    let kind = match raw.kind.as_str() {
        "flat_disk" => {
            reject_unknown(p, &["point", "span", "extent"], path, "flat_disk")?;
            let point = require_vector(p, "point", path, n)?;
            let span_val = p.get("span").ok_or_else(|| ConfigError::new("surface.params.span", "missing"))?;
            let Value::Array(rows) = span_val else {
                return Err(ConfigError::new("surface.params.span", "expected an array of vectors"));
            };
            if rows.is_empty() || rows.len() > n {
                return Err(ConfigError::new(
                    "surface.params.span",
                    format!("need between 1 and {n} spanning vectors, found {}", rows.len()),
                ));
            }
            let span = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let field = format!("surface.params.span[{i}]");
                    let v = value_to_vec(r, &field)?;
                    if v.len() != n {
                        return Err(ConfigError::new(field, format!("expected {n} components, found {}", v.len())));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let extent = get_number(p, "extent", path)?.unwrap_or(1.0);
            if !(extent > 0.0 && extent.is_finite()) {
                return Err(ConfigError::new("surface.params.extent", "must be positive"));
            }
            SurfaceKind::FlatDisk { point, span, extent }
        }
        "catenoid" => {
            reject_unknown(p, &["scale"], path, "catenoid")?;
            let scale = get_number(p, "scale", path)?.unwrap_or(1.0);
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(ConfigError::new("surface.params.scale", "must be positive"));
            }
            SurfaceKind::Catenoid { scale }
        }
        "helicoid" => {
            reject_unknown(p, &["pitch"], path, "helicoid")?;
            let pitch = get_number(p, "pitch", path)?.unwrap_or(1.0);
            if !(pitch > 0.0 && pitch.is_finite()) {
                return Err(ConfigError::new("surface.params.pitch", "must be positive"));
            }
            SurfaceKind::Helicoid { pitch }
        }
        "enneper" => {
            reject_unknown(p, &[], path, "enneper")?;
            SurfaceKind::Enneper
        }
        "complex_parabola" => {
            reject_unknown(p, &[], path, "complex_parabola")?;
            SurfaceKind::ComplexParabola
        }
        "round_sphere" => {
            reject_unknown(p, &["radius"], path, "round_sphere")?;
            let radius = require_number(p, "radius", path)?;
            if !(radius > 0.0) {
                return Err(ConfigError::new("surface.params.radius", "must be positive"));
            }
            SurfaceKind::RoundSphere { radius }
        }
        other => {
            return Err(ConfigError::new(
                "surface.kind",
                format!(
                    "unknown surface `{other}` (expected flat_disk, catenoid, helicoid, enneper, complex_parabola, round_sphere)"
                ),
            ))
        }
    };
    let expected_n = match &kind {
        SurfaceKind::FlatDisk { .. } => n,
        SurfaceKind::ComplexParabola => 4,
        _ => 3,
    };
    if expected_n != n {
        return Err(ConfigError::new(
            "surface.kind",
            format!("`{}` lives in R^{expected_n} but ambient.n = {n}", raw.kind),
        ));
    }
    let k = match &kind {
        SurfaceKind::FlatDisk { span, .. } => span.len(),
        _ => 2,
    };
    let domain = match &raw.domain {
        Some(d) => {
            check_finite(&d.lo, "surface.domain.lo")?;
            check_finite(&d.hi, "surface.domain.hi")?;
            if d.lo.len() != k || d.hi.len() != k {
                return Err(ConfigError::new("surface.domain", format!("lo and hi need {k} entries")));
            }
            if d.lo.iter().zip(&d.hi).any(|(l, h)| !(l < h)) {
                return Err(ConfigError::new("surface.domain", "need lo < hi on every axis"));
            }
            Some((d.lo.clone(), d.hi.clone()))
        }
        None if matches!(kind, SurfaceKind::FlatDisk { .. }) => None,
        None => return Err(ConfigError::new("surface.domain", format!("required for `{}`", raw.kind))),
    };
    let mirrors = raw
        .mirrors
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let field = format!("surface.mirrors[{i}]");
            check_finite(&m.normal, &field)?;
            if m.normal.len() != n || m.normal.iter().all(|x| *x == 0.0) || !m.offset.is_finite() {
                return Err(ConfigError::new(field, format!("need a nonzero normal with {n} components and a finite offset")));
            }
            Ok(PlaneSpec {
                normal: m.normal.clone(),
                offset: m.offset,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SurfaceSpec { kind, domain, mirrors })
}

fn parse_sweep(raw: &RawSweep) -> Result<SweepSpec, ConfigError> {
    let radii = match (&raw.radii, raw.r_lo, raw.r_hi, raw.count) {
        (Some(r), None, None, None) if raw.spacing.is_none() => r.clone(),
        (None, Some(lo), Some(hi), Some(count)) => {
            if count < 1 || count as usize > MAX_RADII {
                return Err(ConfigError::new("sweep.count", format!("need 1 ≤ count ≤ {MAX_RADII}")));
            }
            if !(lo > 0.0 && lo.is_finite() && hi.is_finite() && (lo < hi || (count == 1 && lo <= hi))) {
                return Err(ConfigError::new("sweep", "need 0 < r_lo < r_hi"));
            }
            let count = count as usize;
            let spacing = raw.spacing.as_deref().unwrap_or("linear");
            (0..count)
                .map(|i| {
                    let t = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
                    match spacing {
                        "linear" => Ok(lo + t * (hi - lo)),
                        "log" => Ok(lo * (hi / lo).powf(t)),
                        other => Err(ConfigError::new(
                            "sweep.spacing",
                            format!("unknown spacing `{other}` (expected linear or log)"),
                        )),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        _ => {
            return Err(ConfigError::new(
                "sweep",
                "give either `radii` or all of `r_lo`, `r_hi`, `count` (with optional `spacing`)",
            ))
        }
    };
    if radii.is_empty() {
        return Err(ConfigError::new("sweep.radii", "the radius grid is empty"));
    }
    if radii.len() > MAX_RADII {
        return Err(ConfigError::new("sweep.radii", format!("at most {MAX_RADII} radii")));
    }
    check_finite(&radii, "sweep.radii")?;
    if radii[0] <= 0.0 {
        return Err(ConfigError::new("sweep.radii", "radii must be positive"));
    }
    if radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ConfigError::new("sweep.radii", "radii must be strictly increasing"));
    }
    let largest = *radii.last().expect("non-empty");
    let r_max = raw.r_max.unwrap_or(largest);
    if !(r_max.is_finite() && r_max >= largest) {
        return Err(ConfigError::new("sweep.r_max", format!("must be at least the largest radius {largest}")));
    }
    let rho_nodes = raw.rho_nodes.unwrap_or(crate::monotonicity::DEFAULT_RHO_NODES as i64);
    if !(1..=32).contains(&rho_nodes) {
        return Err(ConfigError::new("sweep.rho_nodes", "need 1 ≤ rho_nodes ≤ 32"));
    }
    Ok(SweepSpec {
        radii,
        r_max,
        rho_nodes: rho_nodes as usize,
    })
}

fn parse_dimension(raw: &RawAmbient) -> Result<usize, ConfigError> {
    if raw.n < 2 || raw.n as usize > MAX_DIM {
        return Err(ConfigError::new("ambient.n", format!("need 2 ≤ n ≤ {MAX_DIM}")));
    }
    Ok(raw.n as usize)
}

fn toml_error(src: &str, e: toml::de::Error) -> ConfigError {
    ConfigError {
        line: e.span().map(|sp| line_of(src, sp.start)),
        field: String::new(),
        message: e.message().trim().to_string(),
    }
}

impl Config {
    /// Parses and validates a configuration document.
    pub fn parse(src: &str) -> Result<Config, ConfigError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| toml_error(src, e))?;
        let n_line = line_of(src, raw.ambient.span().start);
        let n = parse_dimension(raw.ambient.get_ref()).map_err(|e| e.at(Some(n_line)))?;
        let (word, word_lines) = match &raw.mobius {
            Some(m) => parse_words(src, &m.get_ref().word, "mobius.word", n)
                .map_err(|e| e.at(Some(line_of(src, m.span().start))))?,
            None => (Vec::new(), Vec::new()),
        };
        let surface = match &raw.surface {
            Some(s) => Some(parse_surface(s.get_ref(), n).map_err(|e| e.at(Some(line_of(src, s.span().start))))?),
            None => None,
        };
        let sweep_line = raw.sweep.as_ref().map(|s| line_of(src, s.span().start));
        let sweep = match &raw.sweep {
            Some(s) => Some(parse_sweep(s.get_ref()).map_err(|e| e.at(sweep_line))?),
            None => None,
        };
        let (mut tol, mut max_depth) = (DEFAULT_TOL, DEFAULT_MAX_DEPTH);
        if let Some(q) = &raw.quadrature {
            let line = Some(line_of(src, q.span().start));
            if let Some(t) = q.get_ref().tol {
                tol = t;
            }
            if let Some(d) = q.get_ref().max_depth {
                if d < 1 || d > MAX_DEPTH_LIMIT as i64 {
                    return Err(ConfigError::new("quadrature.max_depth", format!("need 1 ≤ max_depth ≤ {MAX_DEPTH_LIMIT}")).at(line));
                }
                max_depth = d as u32;
            }
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(ConfigError::new("quadrature.tol", "must be positive").at(line));
            }
        }
        let c = raw.checks.as_ref().map(|c| c.get_ref());
        let checks = c
            .map(|c| ChecksSpec {
                volume_identity: c.volume_identity,
                weighted_identity: c.weighted_identity,
                flux: c.flux,
                coarea: c.coarea,
                gradient: c.gradient,
                div_w: c.div_w,
                prescribed_point: c.prescribed_point,
            })
            .unwrap_or_default();
        Ok(Config {
            n,
            word,
            surface,
            sweep,
            tol,
            max_depth,
            checks,
            word_lines,
            sweep_line,
        })
    }

    pub fn quad_options(&self) -> QuadOptions {
        QuadOptions {
            tol: self.tol,
            max_depth: self.max_depth,
        }
    }

    pub fn with_overrides(mut self, tol: Option<f64>, max_depth: Option<u32>) -> Result<Config, ConfigError> {
        if let Some(t) = tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError::new("--tol", "must be positive"));
            }
            self.tol = t;
        }
        if let Some(d) = max_depth {
            if d < 1 || d > MAX_DEPTH_LIMIT {
                return Err(ConfigError::new("--max-depth", format!("need 1 ≤ max-depth ≤ {MAX_DEPTH_LIMIT}")));
            }
            self.max_depth = d;
        }
        Ok(self)
    }

    pub fn sweep_line(&self) -> Option<usize> {
        self.sweep_line
    }

    /// The Möbius map of the configured word.
    pub fn build_map(&self) -> Result<MobiusMap, BuildError> {
        if self.word.is_empty() {
            return Err(BuildError::Config(ConfigError::new("mobius.word", "missing")));
        }
        let mut reflections = Vec::new();
        for (i, w) in self.word.iter().enumerate() {
            let line = self.word_lines.get(i).copied();
            let field = format!("mobius.word[{i}]");
            match w {
                WordSpec::Sphere { center, radius } => reflections.push(Reflection::InSphere(
                    Sphere::new(VecN::from_slice(center), *radius)
                        .map_err(|e| BuildError::Config(ConfigError::new(&field, e.to_string()).at(line)))?,
                )),
                WordSpec::Plane { normal, offset } => reflections.push(Reflection::InHyperplane(
                    Hyperplane::new(VecN::from_slice(normal), *offset)
                        .map_err(|e| BuildError::Config(ConfigError::new(&field, e.to_string()).at(line)))?,
                )),
                WordSpec::NamedSigmaA { a } => reflections.extend(make_sigma_a(&VecN::from_slice(a))?.word().iter().cloned()),
                WordSpec::NamedPhiA { a } => reflections.extend(make_phi_a(&VecN::from_slice(a))?.word().iter().cloned()),
            }
        }
        Ok(MobiusMap::new(reflections)?)
    }

    /// The single sphere of a one-reflection word, if that is what it is.
    pub fn bare_sphere(&self) -> Option<(VecN, f64)> {
        match self.word.as_slice() {
            [WordSpec::Sphere { center, radius }] => Some((VecN::from_slice(center), *radius)),
            _ => None,
        }
    }

    pub fn build_patch(&self) -> Result<ParametricPatch, BuildError> {
        let spec = self
            .surface
            .as_ref()
            .ok_or_else(|| BuildError::Config(ConfigError::new("surface", "missing")))?;
        let domain = match &spec.domain {
            Some((lo, hi)) => Some(ParamBox::new(lo.clone(), hi.clone())?),
            None => None,
        };
        let need_domain = || domain.clone().ok_or_else(|| BuildError::Config(ConfigError::new("surface.domain", "missing")));
        let mut patch = match &spec.kind {
            SurfaceKind::FlatDisk { point, span, extent } => {
                let vecs: Vec<VecN> = span.iter().map(|v| VecN::from_slice(v)).collect();
                let frame = orthonormal_frame(&vecs, 1e-10).map_err(|e| {
                    BuildError::Config(ConfigError::new("surface.params.span", format!("spanning vectors are degenerate: {e}")))
                })?;
                let p = surfaces::flat_disk(VecN::from_slice(point), frame, *extent)?;
                match &domain {
                    Some(d) => p.with_domain(d.clone())?,
                    None => p,
                }
            }
            SurfaceKind::Catenoid { scale } => {
                let d = need_domain()?;
                surfaces::catenoid(*scale, d.lo[1], d.hi[1])?.with_domain(d)?
            }
            SurfaceKind::Helicoid { pitch } => surfaces::helicoid(*pitch, need_domain()?)?,
            SurfaceKind::Enneper => surfaces::enneper(need_domain()?)?,
            SurfaceKind::ComplexParabola => surfaces::complex_parabola(need_domain()?)?,
            SurfaceKind::RoundSphere { radius } => surfaces::round_sphere(*radius, need_domain()?)?,
        };
        for m in &spec.mirrors {
            let plane = Hyperplane::new(VecN::from_slice(&m.normal), m.offset)
                .map_err(|e| BuildError::Config(ConfigError::new("surface.mirrors", e.to_string())))?;
            patch = patch.transformed(Isometry::mirror(&plane))?;
        }
        Ok(patch)
    }
}

/// Failure while turning a validated config into math objects.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("{0}")]
    Config(ConfigError),
    #[error(transparent)]
    Mobius(#[from] MobiusError),
    #[error(transparent)]
    Surface(#[from] surfaces::SurfaceError),
}

/// Parses a stand-alone word document: `[[word]]` entries with `type` and
/// `params`, in dimension `n`.
pub fn parse_mobius_word(src: &str, n: usize) -> Result<MobiusMap, BuildError> {
    if !(2..=MAX_DIM).contains(&n) {
        return Err(BuildError::Config(ConfigError::new("n", format!("need 2 ≤ n ≤ {MAX_DIM}"))));
    }
    let raw: RawWordDoc = toml::from_str(src).map_err(|e| BuildError::Config(toml_error(src, e)))?;
    let (word, word_lines) = parse_words(src, &raw.word, "word", n).map_err(BuildError::Config)?;
    let cfg = Config {
        n,
        word,
        surface: None,
        sweep: None,
        tol: DEFAULT_TOL,
        max_depth: DEFAULT_MAX_DEPTH,
        checks: ChecksSpec::default(),
        word_lines,
        sweep_line: None,
    };
    cfg.build_map()
}

/// Flattened `key = value` view of the config, for report echoes.
pub fn echo(config: &Config) -> BTreeMap<String, serde_json::Value> {
    match serde_json::to_value(config) {
        Ok(serde_json::Value::Object(map)) => map.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CATENOID: &str = r#"
[ambient]
n = 3

[[mobius.word]]
type = "sphere"
params = { center = [0, 0, 3], radius = 2 }

[surface]
kind = "catenoid"
params = { scale = 1.0 }
domain = { lo = [-3.141592653589793, -0.9], hi = [3.141592653589793, 0.9] }

[sweep]
radii = [1.8, 1.84, 1.88]
r_max = 1.9

[checks]
volume_identity = true
divW = true
"#;

    #[test]
    fn parses_catenoid_config() {
        let cfg = Config::parse(CATENOID).unwrap();
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.word.len(), 1);
        assert!(cfg.checks.volume_identity && cfg.checks.div_w && !cfg.checks.flux);
        assert_eq!(cfg.sweep.as_ref().unwrap().radii, vec![1.8, 1.84, 1.88]);
        assert_eq!(cfg.tol, DEFAULT_TOL);
        let patch = cfg.build_patch().unwrap();
        assert!(patch.periodic()[0]);
        let (b, r) = cfg.bare_sphere().unwrap();
        assert_eq!((b.as_slice(), r), ([0.0, 0.0, 3.0].as_slice(), 2.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = CATENOID.replace("[checks]", "[checks]\nbogus = true");
        let err = Config::parse(&bad).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let bad = CATENOID.replace("scale = 1.0", "scale = 1.0, twist = 2");
        let err = Config::parse(&bad).unwrap_err();
        assert_eq!(err.field, "surface.params.twist");
        assert_eq!(err.line, Some(9));
    }

    #[test]
    fn word_diagnostics_point_at_entry() {
        let bad = CATENOID.replace("radius = 2 }", "radius = -2 }");
        let err = Config::parse(&bad).unwrap_err();
        assert_eq!(err.field, "mobius.word[0].params.radius");
        assert_eq!(err.line, Some(5));
        let bad = CATENOID.replace("\"sphere\"", "\"circle\"");
        assert!(Config::parse(&bad).unwrap_err().message.contains("circle"));
    }

    #[test]
    fn sweep_forms() {
        let lin = CATENOID.replace("radii = [1.8, 1.84, 1.88]", "r_lo = 1.0\nr_hi = 1.5\ncount = 6");
        let cfg = Config::parse(&lin).unwrap();
        let radii = &cfg.sweep.unwrap().radii;
        assert_eq!(radii.len(), 6);
        assert!((radii[1] - 1.1).abs() < 1e-15);
        let log = CATENOID.replace("radii = [1.8, 1.84, 1.88]", "r_lo = 1.0\nr_hi = 4.0\ncount = 3\nspacing = \"log\"");
        let log = log.replace("r_max = 1.9", "");
        let radii = Config::parse(&log).unwrap().sweep.unwrap().radii;
        assert!((radii[1] - 2.0).abs() < 1e-15);
        let empty = CATENOID.replace("radii = [1.8, 1.84, 1.88]", "radii = []");
        assert_eq!(Config::parse(&empty).unwrap_err().field, "sweep.radii");
        let both = CATENOID.replace("radii = [1.8, 1.84, 1.88]", "radii = [1.8]\nr_lo = 1.0");
        assert_eq!(Config::parse(&both).unwrap_err().field, "sweep");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let bad = CATENOID.replace("center = [0, 0, 3]", "center = [0, 3]");
        let err = Config::parse(&bad).unwrap_err();
        assert!(err.message.contains("3 components"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = Config::parse("[ambient\nn = 3").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn standalone_word_documents() {
        let src = "[[word]]\ntype = \"plane\"\nparams = { normal = [1, 0, 0], offset = 0 }\n\n[[word]]\ntype = \"sphere\"\nparams = { center = [2, 0, 0], radius = 1 }\n";
        let map = parse_mobius_word(src, 3).unwrap();
        let dec = map.decomposition().unwrap();
        assert!(dec.b.dist(&VecN::from([2.0, 0.0, 0.0])) < 1e-9);
        assert!(parse_mobius_word("[[word]]\ntype = \"named_phi_a\"\nparams = { a = [0.3, 0.1, 0] }\n", 3).is_ok());
        assert!(parse_mobius_word("word = 3", 3).is_err());
    }

    #[test]
    fn config_echo_round_trips() {
        let cfg = Config::parse(CATENOID).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: Config = serde_json::from_str(&json).unwrap();
        assert_eq!(back.word, cfg.word);
        assert_eq!(back.surface, cfg.surface);
        assert!(echo(&cfg).contains_key("surface"));
    }
}
