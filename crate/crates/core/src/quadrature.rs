//! Adaptive integration over patch regions cut out by a smooth region
//! function, 1-D composite Gauss quadrature, and level-curve line integrals.
//!
//! Region integrals subdivide the parameter box dyadically. Cells that the
//! sampled region function shows to be entirely inside are integrated with a
//! tensor Gauss rule. Cells the boundary may cross are integrated line by
//! line: along one axis, the crossings of each threshold are located by
//! bracketed root finding and only the inside sub-intervals are integrated.
//! Every cell estimate is compared with the sum over its `2^k` children; the
//! absolute difference of accepted cells is the reported error estimate.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::VecN;
use crate::surfaces::{ParametricPatch, SurfaceError, SurfaceSample};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_DEPTH: u32 = 14;
/// Depth of the uniform initial split (`2^(k·ROOT_DEPTH)` root cells).
const ROOT_DEPTH: u32 = 3;
/// Samples per axis when locating crossings along a line.
const LINE_SAMPLES: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("tolerance not met at max depth (estimate {:.3e})", .0.error_estimate)]
    TolNotMet(QuadratureResult),
    #[error("integrand is not finite at parameter point {param:?}")]
    NonFiniteIntegrand { param: Vec<f64> },
    #[error("level {level} is not regular: |grad f| = {grad:.3e} at parameter point {param:?}")]
    NonRegularLevel { level: f64, grad: f64, param: Vec<f64> },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

impl QuadError {
    /// Accepts a `TolNotMet` result as a flagged success.
    pub fn accept_partial(r: Result<QuadratureResult, QuadError>) -> Result<QuadratureResult, QuadError> {
        match r {
            Err(QuadError::TolNotMet(res)) => Ok(res),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub cells_used: u64,
    pub depth_hit: bool,
}

impl QuadratureResult {
    pub fn exact(value: f64) -> Self {
        QuadratureResult {
            value,
            error_estimate: 0.0,
            cells_used: 0,
            depth_hit: false,
        }
    }

    /// `self · factor` with the error scaled by `|factor|`.
    pub fn scaled(self, factor: f64) -> Self {
        QuadratureResult {
            value: self.value * factor,
            error_estimate: self.error_estimate * factor.abs(),
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            tol: DEFAULT_TOL,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

pub type RegionFn = Arc<dyn Fn(&VecN) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionKind {
    /// `{f < s}`
    Sublevel(f64),
    /// `{s_lo <= f < s_hi}`
    Band(f64, f64),
    Whole,
}

/// A region of the patch described through the weight `f` on its image.
/// Non-finite values of `f` count as outside.
#[derive(Clone)]
pub struct RegionSpec {
    pub region_fn: RegionFn,
    pub kind: RegionKind,
}

impl std::fmt::Debug for RegionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegionSpec").field("kind", &self.kind).finish_non_exhaustive()
    }
}

impl RegionSpec {
    pub fn sublevel(region_fn: RegionFn, s: f64) -> Self {
        RegionSpec {
            region_fn,
            kind: RegionKind::Sublevel(s),
        }
    }

    pub fn band(region_fn: RegionFn, s_lo: f64, s_hi: f64) -> Self {
        RegionSpec {
            region_fn,
            kind: RegionKind::Band(s_lo, s_hi),
        }
    }

    pub fn whole() -> Self {
        RegionSpec {
            region_fn: Arc::new(|_| 0.0),
            kind: RegionKind::Whole,
        }
    }

    fn validate(&self) -> Result<(), QuadError> {
        match self.kind {
            RegionKind::Sublevel(s) if !(s > 0.0 && s.is_finite()) => {
                Err(QuadError::InvalidRegion(format!("sublevel needs s > 0, got {s}")))
            }
            RegionKind::Band(lo, hi) if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                Err(QuadError::InvalidRegion(format!("band needs s_lo < s_hi, got [{lo}, {hi})")))
            }
            _ => Ok(()),
        }
    }

    fn levels(&self) -> &'static [usize] {
        match self.kind {
            RegionKind::Sublevel(_) => &[0],
            RegionKind::Band(..) => &[0, 1],
            RegionKind::Whole => &[],
        }
    }

    fn level(&self, i: usize) -> f64 {
        match (self.kind, i) {
            (RegionKind::Sublevel(s), _) => s,
            (RegionKind::Band(lo, _), 0) => lo,
            (RegionKind::Band(_, hi), _) => hi,
            (RegionKind::Whole, _) => f64::NAN,
        }
    }

    pub fn contains_value(&self, f: f64) -> bool {
        if !f.is_finite() {
            return matches!(self.kind, RegionKind::Whole);
        }
        match self.kind {
            RegionKind::Sublevel(s) => f < s,
            RegionKind::Band(lo, hi) => f >= lo && f < hi,
            RegionKind::Whole => true,
        }
    }

    /// Whether every value in `[lo, hi]` is inside (`Some(true)`), outside
    /// (`Some(false)`), or the interval is mixed (`None`).
    fn classify_range(&self, lo: f64, hi: f64) -> Option<bool> {
        match self.kind {
            RegionKind::Whole => Some(true),
            RegionKind::Sublevel(s) => {
                if hi < s {
                    Some(true)
                } else if lo >= s {
                    Some(false)
                } else {
                    None
                }
            }
            RegionKind::Band(a, b) => {
                if lo >= a && hi < b {
                    Some(true)
                } else if hi < a || lo >= b {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }
}

// --- Gauss–Legendre ------------------------------------------------------

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a Gauss rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn gauss4() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(4))
}

/// Neumaier-compensated sum, in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

// --- root finding --------------------------------------------------------

/// Root of `g` in `[a, b]` given a sign change (Illinois regula falsi with a
/// bisection fallback when a value is not finite).
fn bracketed_root(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64) -> f64 {
    let mut side = 0i8;
    let tol = 4.0 * f64::EPSILON * (a.abs().max(b.abs()) + f64::MIN_POSITIVE);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let c = if ga.is_finite() && gb.is_finite() && ga != gb {
            let c = (a * gb - b * ga) / (gb - ga);
            if c > a.min(b) && c < a.max(b) {
                c
            } else {
                0.5 * (a + b)
            }
        } else {
            0.5 * (a + b)
        };
        let gc = g(c);
        if gc == 0.0 {
            return c;
        }
        if (gc > 0.0) == (gb > 0.0) {
            b = c;
            gb = gc;
            if side == -1 && ga.is_finite() {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            ga = gc;
            if side == 1 && gb.is_finite() {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

// --- region integration --------------------------------------------------

struct Integrator<'a, G> {
    patch: &'a ParametricPatch,
    integrand: &'a G,
    region: &'a RegionSpec,
    opts: QuadOptions,
    domain_volume: f64,
}

#[derive(Clone, Copy, Default)]
struct Partial {
    value: f64,
    error: f64,
    cells: u64,
    depth_hit: bool,
}

enum CellClass {
    Inside,
    Outside,
    Straddle { inner_axis: usize },
}

#[derive(Clone)]
struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Cell {
    fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    fn children(&self) -> Vec<Cell> {
        let k = self.lo.len();
        (0..1usize << k)
            .map(|mask| {
                let mut lo = self.lo.clone();
                let mut hi = self.hi.clone();
                for ax in 0..k {
                    let mid = 0.5 * (self.lo[ax] + self.hi[ax]);
                    if mask >> ax & 1 == 0 {
                        hi[ax] = mid;
                    } else {
                        lo[ax] = mid;
                    }
                }
                Cell { lo, hi }
            })
            .collect()
    }
}

/// Enumerates the points of the tensor product of per-axis node lists.
fn tensor_points(axes: &[Vec<(f64, f64)>], mut visit: impl FnMut(&[f64], f64) -> Result<(), QuadError>) -> Result<(), QuadError> {
    let k = axes.len();
    if k == 0 {
        return visit(&[], 1.0);
    }
    let mut idx = vec![0usize; k];
    let mut point = vec![0.0; k];
    loop {
        let mut w = 1.0;
        for ax in 0..k {
            let (x, wx) = axes[ax][idx[ax]];
            point[ax] = x;
            w *= wx;
        }
        visit(&point, w)?;
        let mut ax = 0;
        loop {
            idx[ax] += 1;
            if idx[ax] < axes[ax].len() {
                break;
            }
            idx[ax] = 0;
            ax += 1;
            if ax == k {
                return Ok(());
            }
        }
    }
}

fn gauss_nodes(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss4();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    x.iter().zip(w).map(|(xi, wi)| (mid + half * xi, half * wi)).collect()
}

impl<G> Integrator<'_, G>
where
    G: Fn(&SurfaceSample) -> f64 + Sync,
{
    fn region_value(&self, p: &[f64]) -> f64 {
        (self.region.region_fn)(&self.patch.eval(p))
    }

    fn weighted_integrand(&self, p: &[f64]) -> Result<f64, QuadError> {
        let s = self.patch.sample(p)?;
        let g = (self.integrand)(&s);
        if !g.is_finite() {
            return Err(QuadError::NonFiniteIntegrand { param: p.to_vec() });
        }
        Ok(g * s.area_element)
    }

    fn classify(&self, cell: &Cell) -> CellClass {
        if matches!(self.region.kind, RegionKind::Whole) {
            return CellClass::Inside;
        }
        let k = cell.lo.len();
        let count = 3usize.pow(k as u32);
        let mut vals = Vec::with_capacity(count);
        let mut p = vec![0.0; k];
        for flat in 0..count {
            let mut rem = flat;
            for ax in 0..k {
                let t = (rem % 3) as f64 * 0.5;
                rem /= 3;
                p[ax] = cell.lo[ax] + t * (cell.hi[ax] - cell.lo[ax]);
            }
            vals.push(self.region_value(&p));
        }
        let finite = vals.iter().filter(|v| v.is_finite()).count();
        // slope per axis across the lattice, used for the inner-axis choice
        let mut axis_jump = vec![0.0_f64; k];
        let mut stride = 1;
        for jump in axis_jump.iter_mut() {
            for flat in 0..count {
                if (flat / stride) % 3 < 2 {
                    let d = (vals[flat + stride] - vals[flat]).abs();
                    if d.is_finite() {
                        *jump = jump.max(d);
                    }
                }
            }
            stride *= 3;
        }
        let inner_axis = axis_jump
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0;
        if finite == 0 {
            return CellClass::Outside;
        }
        if finite < count {
            return CellClass::Straddle { inner_axis };
        }
        let margin: f64 = axis_jump.iter().sum::<f64>();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min) - margin;
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) + margin;
        match self.region.classify_range(lo, hi) {
            Some(true) => CellClass::Inside,
            Some(false) => CellClass::Outside,
            None => CellClass::Straddle { inner_axis },
        }
    }

    fn tensor_rule(&self, cell: &Cell) -> Result<f64, QuadError> {
        let axes: Vec<Vec<(f64, f64)>> = (0..cell.lo.len()).map(|ax| gauss_nodes(cell.lo[ax], cell.hi[ax])).collect();
        let mut terms = Vec::with_capacity(4usize.pow(cell.lo.len() as u32));
        tensor_points(&axes, |p, w| {
            terms.push(w * self.weighted_integrand(p)?);
            Ok(())
        })?;
        Ok(compensated_sum(terms))
    }

    /// Inside sub-intervals of `[lo, hi]` along `axis` through `base`.
    fn inside_intervals(&self, base: &[f64], axis: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![lo, hi];
        self.line_crossings(base, axis, lo, hi, &mut cuts);
        cuts.sort_by(|a, b| a.total_cmp(b));
        let mut p = base.to_vec();
        let mut out: Vec<(f64, f64)> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= 0.0 {
                continue;
            }
            p[axis] = 0.5 * (a + b);
            if self.region.contains_value(self.region_value(&p)) {
                match out.last_mut() {
                    Some((_, end)) if *end == a => *end = b,
                    _ => out.push((a, b)),
                }
            }
        }
        out
    }

    /// Crossings of the region thresholds along `axis` through `base`.
    fn line_crossings(&self, base: &[f64], axis: usize, lo: f64, hi: f64, cuts: &mut Vec<f64>) {
        let at = |t: f64| {
            let mut p = base.to_vec();
            p[axis] = t;
            self.region_value(&p)
        };
        let ts: Vec<f64> = (0..LINE_SAMPLES)
            .map(|i| lo + (hi - lo) * i as f64 / (LINE_SAMPLES - 1) as f64)
            .collect();
        let fs: Vec<f64> = ts.iter().map(|&t| at(t)).collect();
        for &li in self.region.levels() {
            let level = self.region.level(li);
            let shifted = |v: f64| if v.is_finite() { v - level } else { f64::INFINITY };
            for i in 0..LINE_SAMPLES - 1 {
                let (ga, gb) = (shifted(fs[i]), shifted(fs[i + 1]));
                if (ga < 0.0) != (gb < 0.0) {
                    cuts.push(bracketed_root(|t| shifted(at(t)), ts[i], ts[i + 1], ga, gb));
                }
            }
        }
    }

    fn cut_rule(&self, cell: &Cell, inner_axis: usize) -> Result<f64, QuadError> {
        let k = cell.lo.len();
        let outer_axes: Vec<usize> = (0..k).filter(|&ax| ax != inner_axis).collect();
        let outer: Vec<Vec<(f64, f64)>> = if let [ax] = outer_axes[..] {
            // the inside length along the inner axis has kinks where the
            // boundary meets the two cell faces normal to the inner axis
            let mut breaks = vec![cell.lo[ax], cell.hi[ax]];
            for face in [cell.lo[inner_axis], cell.hi[inner_axis]] {
                let mut base = cell.lo.clone();
                base[inner_axis] = face;
                self.line_crossings(&base, ax, cell.lo[ax], cell.hi[ax], &mut breaks);
            }
            breaks.sort_by(|a, b| a.total_cmp(b));
            vec![breaks
                .windows(2)
                .filter(|w| w[1] > w[0])
                .flat_map(|w| gauss_nodes(w[0], w[1]))
                .collect()]
        } else {
            outer_axes.iter().map(|&ax| gauss_nodes(cell.lo[ax], cell.hi[ax])).collect()
        };
        let mut terms = Vec::new();
        let mut base = vec![0.0; k];
        tensor_points(&outer, |q, w| {
            for (j, &ax) in outer_axes.iter().enumerate() {
                base[ax] = q[j];
            }
            for (a, b) in self.inside_intervals(&base, inner_axis, cell.lo[inner_axis], cell.hi[inner_axis]) {
                let mut p = base.clone();
                for (t, wt) in gauss_nodes(a, b) {
                    p[inner_axis] = t;
                    terms.push(w * wt * self.weighted_integrand(&p)?);
                }
            }
            Ok(())
        })?;
        Ok(compensated_sum(terms))
    }

    fn estimate(&self, cell: &Cell) -> Result<(f64, bool), QuadError> {
        match self.classify(cell) {
            CellClass::Outside => Ok((0.0, true)),
            CellClass::Inside => Ok((self.tensor_rule(cell)?, false)),
            CellClass::Straddle { inner_axis } => Ok((self.cut_rule(cell, inner_axis)?, false)),
        }
    }

    fn refine(&self, cell: &Cell, coarse: f64, coarse_outside: bool, depth: u32) -> Result<Partial, QuadError> {
        let children = cell.children();
        let mut ests = Vec::with_capacity(children.len());
        for c in &children {
            ests.push(self.estimate(c)?);
        }
        if coarse_outside && ests.iter().all(|(_, out)| *out) {
            return Ok(Partial {
                cells: 1,
                ..Partial::default()
            });
        }
        let fine = compensated_sum(ests.iter().map(|(v, _)| *v));
        let err = (fine - coarse).abs();
        let local_tol = self.opts.tol * cell.volume() / self.domain_volume;
        if err <= local_tol || depth + 1 >= self.opts.max_depth {
            return Ok(Partial {
                value: fine,
                error: err,
                cells: children.len() as u64,
                depth_hit: err > local_tol,
            });
        }
        let mut parts = Vec::with_capacity(children.len());
        for (c, (v, out)) in children.iter().zip(ests) {
            parts.push(self.refine(c, v, out, depth + 1)?);
        }
        Ok(Partial {
            value: compensated_sum(parts.iter().map(|p| p.value)),
            error: compensated_sum(parts.iter().map(|p| p.error)),
            cells: parts.iter().map(|p| p.cells).sum(),
            depth_hit: parts.iter().any(|p| p.depth_hit),
        })
    }
}

fn root_cells(domain_lo: &[f64], domain_hi: &[f64], depth: u32) -> Vec<Cell> {
    let mut cells = vec![Cell {
        lo: domain_lo.to_vec(),
        hi: domain_hi.to_vec(),
    }];
    for _ in 0..depth {
        cells = cells.iter().flat_map(Cell::children).collect();
    }
    cells
}

/// Integrates `integrand · dA` over the part of `patch` selected by `region`.
///
/// Returns `TolNotMet` (carrying the result) when the depth limit was hit
/// and the error estimate exceeds `opts.tol`.
pub fn integrate_region<G>(
    patch: &ParametricPatch,
    integrand: G,
    region: &RegionSpec,
    opts: QuadOptions,
) -> Result<QuadratureResult, QuadError>
where
    G: Fn(&SurfaceSample) -> f64 + Sync,
{
    region.validate()?;
    if !(opts.tol > 0.0) {
        return Err(QuadError::InvalidRegion(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let dom = patch.domain();
    let integrator = Integrator {
        patch,
        integrand: &integrand,
        region,
        opts,
        domain_volume: dom.volume(),
    };
    let root_depth = ROOT_DEPTH.min(opts.max_depth.saturating_sub(1));
    let roots = root_cells(&dom.lo, &dom.hi, root_depth);
    let parts: Vec<Result<Partial, QuadError>> = roots
        .par_iter()
        .map(|cell| {
            let (v, out) = integrator.estimate(cell)?;
            integrator.refine(cell, v, out, root_depth)
        })
        .collect();
    let mut ok = Vec::with_capacity(parts.len());
    for p in parts {
        ok.push(p?);
    }
    let result = QuadratureResult {
        value: compensated_sum(ok.iter().map(|p| p.value)),
        error_estimate: compensated_sum(ok.iter().map(|p| p.error)),
        cells_used: ok.iter().map(|p| p.cells).sum(),
        depth_hit: ok.iter().any(|p| p.depth_hit),
    };
    if result.depth_hit && result.error_estimate > opts.tol {
        return Err(QuadError::TolNotMet(result));
    }
    Ok(result)
}

// --- radial (1-D) integration --------------------------------------------

const MAX_PANELS: usize = 256;

fn composite_gauss(
    inner: &mut impl FnMut(f64) -> Result<(f64, f64), QuadError>,
    lo: f64,
    hi: f64,
    panels: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> Result<(f64, f64), QuadError> {
    let width = (hi - lo) / panels as f64;
    let mut terms = Vec::with_capacity(panels * rule.0.len());
    let mut inner_err = 0.0;
    for p in 0..panels {
        let a = lo + width * p as f64;
        let mid = a + 0.5 * width;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let (v, e) = inner(mid + 0.5 * width * x)?;
            if !v.is_finite() {
                return Err(QuadError::NonFiniteIntegrand {
                    param: vec![mid + 0.5 * width * x],
                });
            }
            let wt = 0.5 * width * w;
            terms.push(wt * v);
            inner_err += wt.abs() * e;
        }
    }
    Ok((compensated_sum(terms), inner_err))
}

/// Composite Gauss rule with `nodes` points per panel; panels are doubled
/// until two successive values agree to `tol`. The inner function returns
/// a value and its own error estimate, which is propagated.
pub fn radial_integral_with_errors(
    mut inner: impl FnMut(f64) -> Result<(f64, f64), QuadError>,
    r_lo: f64,
    r_hi: f64,
    nodes: usize,
    tol: f64,
) -> Result<QuadratureResult, QuadError> {
    if !(r_lo < r_hi) {
        return Err(QuadError::InvalidRegion(format!("radial integral needs r_lo < r_hi, got [{r_lo}, {r_hi}]")));
    }
    let rule = gauss_legendre(nodes.max(1));
    let (mut prev, _) = composite_gauss(&mut inner, r_lo, r_hi, 1, &rule)?;
    let mut panels = 2;
    loop {
        let (cur, inner_err) = composite_gauss(&mut inner, r_lo, r_hi, panels, &rule)?;
        let diff = (cur - prev).abs();
        let result = QuadratureResult {
            value: cur,
            error_estimate: diff + inner_err,
            cells_used: panels as u64,
            depth_hit: false,
        };
        if diff <= tol {
            return Ok(result);
        }
        if panels >= MAX_PANELS {
            return Err(QuadError::TolNotMet(QuadratureResult {
                depth_hit: true,
                ..result
            }));
        }
        prev = cur;
        panels *= 2;
    }
}

pub fn radial_integral(
    mut inner: impl FnMut(f64) -> f64,
    r_lo: f64,
    r_hi: f64,
    nodes: usize,
    tol: f64,
) -> Result<QuadratureResult, QuadError> {
    radial_integral_with_errors(|r| Ok((inner(r), 0.0)), r_lo, r_hi, nodes, tol)
}

// --- level curves (k = 2) ------------------------------------------------

const CURVE_START_GRID: usize = 64;
const CURVE_MAX_GRID: usize = 2048;
/// Smallest `|∇^Σ f|` accepted on a contour.
pub const REGULAR_GRAD_MIN: f64 = 1e-8;

struct CurveWork<'a> {
    patch: &'a ParametricPatch,
    f: &'a RegionFn,
    level: f64,
}

impl CurveWork<'_> {
    fn value(&self, p: &[f64; 2]) -> f64 {
        let v = (self.f)(&self.patch.eval(p));
        if v.is_finite() {
            v - self.level
        } else {
            f64::INFINITY
        }
    }

    /// Parameter-space gradient of `f ∘ eval` by central differences.
    fn param_gradient(&self, p: &[f64; 2], h: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for ax in 0..2 {
            let mut q = *p;
            q[ax] = p[ax] + h[ax];
            let plus = self.value(&q);
            q[ax] = p[ax] - h[ax];
            let minus = self.value(&q);
            g[ax] = (plus - minus) / (2.0 * h[ax]);
        }
        g
    }

    fn surface_gradient_norm(&self, p: &[f64; 2], grad: [f64; 2]) -> f64 {
        let j = self.patch.jac(p);
        let (a, b, d) = (j[0].norm_sq(), j[0].dot(&j[1]), j[1].norm_sq());
        let det = a * d - b * b;
        // gᵀ G⁻¹ g with G = JᵀJ
        let q = (d * grad[0] * grad[0] - 2.0 * b * grad[0] * grad[1] + a * grad[1] * grad[1]) / det;
        q.max(0.0).sqrt()
    }

    fn edge_root(&self, a: [f64; 2], b: [f64; 2], fa: f64, fb: f64) -> [f64; 2] {
        let t = bracketed_root(
            |t| self.value(&[a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]),
            0.0,
            1.0,
            fa,
            fb,
        );
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Contour segments of a `grid × grid` marching-squares pass.
    fn segments(&self, grid: usize) -> Vec<([f64; 2], [f64; 2])> {
        let dom = self.patch.domain();
        let (du, dv) = (dom.extent(0) / grid as f64, dom.extent(1) / grid as f64);
        let at = |i: usize, j: usize| [dom.lo[0] + du * i as f64, dom.lo[1] + dv * j as f64];
        let rows: Vec<Vec<f64>> = (0..=grid)
            .into_par_iter()
            .map(|i| (0..=grid).map(|j| self.value(&at(i, j))).collect())
            .collect();
        let cells: Vec<Vec<([f64; 2], [f64; 2])>> = (0..grid)
            .into_par_iter()
            .map(|i| {
                let mut segs = Vec::new();
                for j in 0..grid {
                    let corners = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                    let vals = [rows[i][j], rows[i + 1][j], rows[i + 1][j + 1], rows[i][j + 1]];
                    let neg: Vec<bool> = vals.iter().map(|v| *v < 0.0).collect();
                    if neg.iter().all(|x| *x) || neg.iter().all(|x| !*x) {
                        continue;
                    }
                    let mut cross = Vec::with_capacity(4);
                    for e in 0..4 {
                        let (a, b) = (e, (e + 1) % 4);
                        if neg[a] != neg[b] {
                            cross.push(self.edge_root(corners[a], corners[b], vals[a], vals[b]));
                        }
                    }
                    if cross.len() == 2 {
                        segs.push((cross[0], cross[1]));
                    } else if cross.len() == 4 {
                        // saddle cell: pair crossings according to the center sign
                        let center = [0.5 * (corners[0][0] + corners[2][0]), 0.5 * (corners[0][1] + corners[2][1])];
                        let center_neg = self.value(&center) < 0.0;
                        if center_neg == neg[0] {
                            segs.push((cross[0], cross[1]));
                            segs.push((cross[2], cross[3]));
                        } else {
                            segs.push((cross[3], cross[0]));
                            segs.push((cross[1], cross[2]));
                        }
                    }
                }
                segs
            })
            .collect();
        cells.into_iter().flatten().collect()
    }

    fn integrate<G>(&self, grid: usize, integrand: &G) -> Result<f64, QuadError>
    where
        G: Fn(&SurfaceSample) -> f64 + Sync,
    {
        let dom = self.patch.domain();
        let h = [1e-6 * dom.extent(0), 1e-6 * dom.extent(1)];
        let segs = self.segments(grid);
        let (gx, gw) = gauss4();
        let per_seg: Vec<Result<f64, QuadError>> = segs
            .par_iter()
            .map(|(p0, p1)| {
                // project the chord midpoint onto the contour
                let mut m = [0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])];
                let mut grad = self.param_gradient(&m, h);
                let chord = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
                for _ in 0..3 {
                    let g2 = grad[0] * grad[0] + grad[1] * grad[1];
                    if !(g2 > 0.0) {
                        break;
                    }
                    let v = self.value(&m);
                    let step = [v * grad[0] / g2, v * grad[1] / g2];
                    if (step[0] * step[0] + step[1] * step[1]).sqrt() > chord {
                        break;
                    }
                    m = [m[0] - step[0], m[1] - step[1]];
                    grad = self.param_gradient(&m, h);
                }
                let sg = self.surface_gradient_norm(&m, grad);
                if !(sg > REGULAR_GRAD_MIN) {
                    return Err(QuadError::NonRegularLevel {
                        level: self.level,
                        grad: sg,
                        param: m.to_vec(),
                    });
                }
                // quadratic through p0 (t=0), m (t=1/2), p1 (t=1)
                let curve = |t: f64| -> ([f64; 2], [f64; 2]) {
                    let (l0, l1, l2) = ((1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0));
                    let (d0, d1, d2) = (4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0);
                    let pos = [
                        l0 * p0[0] + l1 * m[0] + l2 * p1[0],
                        l0 * p0[1] + l1 * m[1] + l2 * p1[1],
                    ];
                    let vel = [
                        d0 * p0[0] + d1 * m[0] + d2 * p1[0],
                        d0 * p0[1] + d1 * m[1] + d2 * p1[1],
                    ];
                    (pos, vel)
                };
                let mut terms = [0.0; 4];
                for (slot, (x, w)) in terms.iter_mut().zip(gx.iter().zip(gw)) {
                    let t = 0.5 * (1.0 + x);
                    let (pos, vel) = curve(t);
                    let s = self.patch.sample(&pos)?;
                    let j = self.patch.jac(&pos);
                    let speed = j[0].scale(vel[0]).axpy(vel[1], &j[1]).norm();
                    let g = integrand(&s);
                    if !g.is_finite() {
                        return Err(QuadError::NonFiniteIntegrand { param: pos.to_vec() });
                    }
                    *slot = 0.5 * w * g * speed;
                }
                Ok(compensated_sum(terms))
            })
            .collect();
        let mut vals = Vec::with_capacity(per_seg.len());
        for v in per_seg {
            vals.push(v?);
        }
        Ok(compensated_sum(vals))
    }
}

/// Line integral of `integrand` over the image of the contour
/// `{f ∘ eval = level}` with respect to image arc length (`k = 2`).
///
/// The contour is extracted by marching squares with crossings refined by
/// root finding; each segment is replaced by the quadratic through its end
/// points and its contour-projected midpoint. The grid is doubled until two
/// successive values agree to `tol`.
pub fn level_curve_integral<G>(
    patch: &ParametricPatch,
    f: &RegionFn,
    level: f64,
    integrand: G,
    tol: f64,
) -> Result<QuadratureResult, QuadError>
where
    G: Fn(&SurfaceSample) -> f64 + Sync,
{
    if patch.k() != 2 {
        return Err(QuadError::InvalidRegion(format!(
            "level-curve integrals need a 2-dimensional patch, got k = {}",
            patch.k()
        )));
    }
    let work = CurveWork { patch, f, level };
    let mut grid = CURVE_START_GRID;
    let mut prev = work.integrate(grid, &integrand)?;
    loop {
        grid *= 2;
        let cur = work.integrate(grid, &integrand)?;
        let diff = (cur - prev).abs();
        let result = QuadratureResult {
            value: cur,
            error_estimate: diff,
            cells_used: (grid * grid) as u64,
            depth_hit: false,
        };
        if diff <= tol {
            return Ok(result);
        }
        if grid >= CURVE_MAX_GRID {
            return Err(QuadError::TolNotMet(QuadratureResult {
                depth_hit: true,
                ..result
            }));
        }
        prev = cur;
    }
}
