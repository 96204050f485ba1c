//! The weight `f`, the monotone quantities `J, I, Q_A, Q_I`, the two
//! monotonicity identities, and the pointwise machinery behind them.
//!
//! Throughout, `c = φ(0)` is the moving center and `d = φ(∞) − φ(a)` the
//! direction vector (`c = a`, `d = b` for a bare reflection).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{unit_ball_volume, GeomError, VecN};
use crate::mobius::{ball_image, BallImage, Decomposition, MobiusError, MobiusMap};
use crate::quadrature::{
    integrate_region, level_curve_integral, radial_integral_with_errors, QuadError, QuadOptions, QuadratureResult,
    RegionFn, RegionSpec,
};
use crate::surfaces::{max_mean_curvature_on_grid, ParametricPatch, SurfaceError, SurfaceSample};

/// Relative agreement required between the two closed forms of `f`.
pub const F_CROSSCHECK_REL: f64 = 1e-10;
/// Largest admissible `r_max / |b|`.
pub const R_MAX_FRACTION: f64 = 0.99;
pub const MINIMALITY_TOL: f64 = 1e-6;
const MINIMALITY_GRID: usize = 10;
const MINIMALITY_STEP: f64 = 1e-3;
/// Samples per boundary edge in the coverage test.
const COVERAGE_SAMPLES: usize = 400;
/// Largest distance from the surface to a prescribed point.
pub const POINT_ON_SURFACE_TOL: f64 = 1e-8;
pub const DEFAULT_RHO_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonoError {
    #[error("point {x:?} is outside the half-space 2|b|² − R² − 2⟨b,x⟩ > 0")]
    OutsideHalfSpace { x: Vec<f64> },
    #[error("point {x:?} is outside the domain of f (|φ⁻¹(x)| ≥ |b|)")]
    OutsideDomain { x: Vec<f64> },
    #[error("closed forms of f disagree at {x:?}: {closed} vs {reflected}")]
    CrossCheckFailed { x: Vec<f64>, closed: f64, reflected: f64 },
    #[error("invalid radius {r}: need 0 < r ≤ r_max = {r_max}")]
    InvalidRadius { r: f64, r_max: f64 },
    #[error("r_max = {r_max} must satisfy 0 < r_max ≤ {R_MAX_FRACTION}·|b| = {limit}")]
    DegenerateRadius { r_max: f64, limit: f64 },
    #[error("surface is not minimal: max |H| = {max_h:.3e} on the check grid")]
    NotMinimal { max_h: f64 },
    #[error("surface boundary enters φ(B_r_max) at parameter {param:?} (f = {f}, s(r_max) = {s_max})")]
    CoverageViolated { param: Vec<f64>, f: f64, s_max: f64 },
    #[error("map has no isometric-sphere decomposition")]
    NoDecomposition,
    #[error("dimension mismatch: map acts on R^{map} but the surface lies in R^{surface}")]
    DimensionMismatch { map: usize, surface: usize },
    #[error("point is not on the surface (distance {distance:.3e})")]
    PointNotOnSurface { distance: f64 },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Mobius(#[from] MobiusError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

// --- weight and level/radius correspondence ------------------------------

fn half_space_margin(x: &VecN, b: &VecN, radius: f64) -> f64 {
    2.0 * b.norm_sq() - radius * radius - 2.0 * b.dot(x)
}

/// `f(x) = |b|²|x − a|² / (2|b|² − R² − 2⟨b,x⟩)`, cross-checked against
/// `R²|σ(x)|² / (|b|² − |σ(x)|²)`.
pub fn f_reflection(x: &VecN, b: &VecN, radius: f64) -> Result<f64, MonoError> {
    let margin = half_space_margin(x, b, radius);
    if !(margin > 0.0) {
        return Err(MonoError::OutsideHalfSpace { x: x.as_slice().to_vec() });
    }
    let b2 = b.norm_sq();
    let a = crate::mobius::reflection_center_image(b, radius);
    let closed = b2 * x.dist_sq(&a) / margin;
    let xb = x - b;
    let sx = b.axpy(radius * radius / xb.norm_sq(), &xb);
    let sx2 = sx.norm_sq();
    let reflected = radius * radius * sx2 / (b2 - sx2);
    // σ(x) loses absolute accuracy ~ ε|b| near x = a, where both forms vanish
    let floor = 1e3 * f64::EPSILON * radius * radius * b.norm() * sx2.sqrt() / (b2 - sx2).abs();
    if (closed - reflected).abs() > F_CROSSCHECK_REL * closed.abs().max(reflected.abs()) + floor {
        return Err(MonoError::CrossCheckFailed {
            x: x.as_slice().to_vec(),
            closed,
            reflected,
        });
    }
    Ok(closed)
}

/// `f(x) = R²|φ⁻¹(x)|² / (|b|² − |φ⁻¹(x)|²)`, evaluated as `f_reflection(ψ⁻¹x)`.
pub fn f_mobius(x: &VecN, dec: &Decomposition) -> Result<f64, MonoError> {
    let y = dec.psi.apply_inverse(x);
    f_reflection(&y, &dec.b, dec.radius).map_err(|e| match e {
        MonoError::OutsideHalfSpace { .. } => MonoError::OutsideDomain { x: x.as_slice().to_vec() },
        other => other,
    })
}

/// `s = R²r²/(|b|² − r²)`
pub fn s_of_r(r: f64, b_norm: f64, radius: f64) -> f64 {
    radius * radius * r * r / (b_norm * b_norm - r * r)
}

/// Inverse of [`s_of_r`]: `r² = s|b|²/(R² + s)`.
pub fn r_of_s(s: f64, b_norm: f64, radius: f64) -> f64 {
    (s * b_norm * b_norm / (radius * radius + s)).sqrt()
}

fn level_f(k: usize, t: f64) -> f64 {
    if k == 2 {
        -0.5 * t.ln()
    } else {
        t.powf(-((k as f64) - 2.0) / 2.0) / ((k as f64) - 2.0)
    }
}

/// `|(x−c)^⊤|²/|x−c|²`, with the value 1 at `x = c`.
pub fn tangential_ratio(sample: &SurfaceSample, c: &VecN) -> f64 {
    let v = &sample.position - c;
    let n2 = v.norm_sq();
    if n2 == 0.0 {
        1.0
    } else {
        sample.frame.tangential_norm_sq(&v) / n2
    }
}

/// `|(x−c)^⊥|²/|x−c|²`, with the value 0 at `x = c`.
pub fn normal_ratio(sample: &SurfaceSample, c: &VecN) -> f64 {
    let v = &sample.position - c;
    let n2 = v.norm_sq();
    if n2 == 0.0 {
        0.0
    } else {
        sample.frame.normal_norm_sq(&v) / n2
    }
}

// --- scenarios -----------------------------------------------------------

#[derive(Debug, Clone)]
pub enum ScenarioKind {
    /// `φ = σ`, the reflection in `S(b, R)`.
    Reflection,
    Mobius(MobiusMap),
}

/// A minimal patch together with a Möbius map and the largest radius at
/// which the identities are evaluated.
#[derive(Debug, Clone)]
pub struct Scenario {
    kind: ScenarioKind,
    dec: Decomposition,
    patch: ParametricPatch,
    r_max: f64,
    center: VecN,
    /// `ψ(0)`
    psi_origin: VecN,
    /// `min_Σ f` over the patch.
    min_weight: f64,
}

impl Scenario {
    pub fn reflection(b: VecN, radius: f64, patch: ParametricPatch, r_max: f64) -> Result<Self, MonoError> {
        let dec = Decomposition::of_reflection(b, radius)?;
        Self::build(ScenarioKind::Reflection, dec, patch, r_max)
    }

    pub fn mobius(map: MobiusMap, patch: ParametricPatch, r_max: f64) -> Result<Self, MonoError> {
        let dec = map.decomposition().cloned().ok_or(MonoError::NoDecomposition)?;
        Self::build(ScenarioKind::Mobius(map), dec, patch, r_max)
    }

    /// Skips the minimality and coverage checks (for oracle tests on
    /// non-minimal patches).
    pub fn unchecked(dec: Decomposition, patch: ParametricPatch, r_max: f64) -> Result<Self, MonoError> {
        Self::assemble(ScenarioKind::Reflection, dec, patch, r_max)
    }

    fn assemble(kind: ScenarioKind, dec: Decomposition, patch: ParametricPatch, r_max: f64) -> Result<Self, MonoError> {
        if dec.dim() != patch.n() {
            return Err(MonoError::DimensionMismatch {
                map: dec.dim(),
                surface: patch.n(),
            });
        }
        let limit = R_MAX_FRACTION * dec.b.norm();
        if !(r_max > 0.0 && r_max <= limit) {
            return Err(MonoError::DegenerateRadius { r_max, limit });
        }
        let mut scn = Scenario {
            kind,
            center: dec.phi_of_origin(),
            psi_origin: dec.psi.apply(&VecN::zeros(dec.dim())),
            dec,
            patch,
            r_max,
            min_weight: f64::NAN,
        };
        scn.min_weight = scn.locate_min_weight();
        Ok(scn)
    }

    /// Grid search followed by a compass search with step halving.
    fn locate_min_weight(&self) -> f64 {
        let k = self.patch.k();
        let dom = self.patch.domain();
        let m: usize = if k <= 2 { 201 } else { 21 };
        let mut best = (f64::INFINITY, vec![0.0; k]);
        for flat in 0..m.pow(k as u32) {
            let mut rem = flat;
            let q: Vec<f64> = (0..k)
                .map(|ax| {
                    let t = (rem % m) as f64 / (m - 1) as f64;
                    rem /= m;
                    dom.lo[ax] + t * dom.extent(ax)
                })
                .collect();
            let f = self.weight(&self.patch.eval(&q));
            if f < best.0 {
                best = (f, q);
            }
        }
        let (mut fbest, mut q) = best;
        if !fbest.is_finite() {
            return fbest;
        }
        let mut step = dom.max_extent() / (m - 1) as f64;
        while step > 1e-13 * dom.max_extent() {
            let mut improved = false;
            for ax in 0..k {
                for sign in [-1.0, 1.0] {
                    let mut cand = q.clone();
                    cand[ax] = (cand[ax] + sign * step).clamp(dom.lo[ax], dom.hi[ax]);
                    let f = self.weight(&self.patch.eval(&cand));
                    if f < fbest {
                        fbest = f;
                        q = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        fbest
    }

    /// Smallest `r` with `Σ ∩ φ(B_r)` non-empty (0 when `c ∈ Σ`).
    pub fn onset_radius(&self) -> f64 {
        if self.min_weight <= 0.0 {
            0.0
        } else if self.min_weight.is_finite() {
            self.r_of_s(self.min_weight)
        } else {
            f64::INFINITY
        }
    }

    fn build(kind: ScenarioKind, dec: Decomposition, patch: ParametricPatch, r_max: f64) -> Result<Self, MonoError> {
        let scn = Self::assemble(kind, dec, patch, r_max)?;
        let max_h = max_mean_curvature_on_grid(&scn.patch, MINIMALITY_GRID, MINIMALITY_STEP)?;
        if !(max_h <= MINIMALITY_TOL) {
            return Err(MonoError::NotMinimal { max_h });
        }
        scn.check_coverage()?;
        Ok(scn)
    }

    /// The closure of `Σ ∩ φ(B_r_max)` must stay away from the patch
    /// boundary: `f > s(r_max)` on every non-periodic edge.
    fn check_coverage(&self) -> Result<(), MonoError> {
        let s_max = self.s_of_r(self.r_max);
        let dom = self.patch.domain();
        let k = self.patch.k();
        let per_axis = if k <= 2 {
            COVERAGE_SAMPLES
        } else {
            (COVERAGE_SAMPLES as f64).powf(1.0 / (k - 1) as f64).ceil() as usize
        };
        for axis in 0..k {
            if self.patch.periodic()[axis] {
                continue;
            }
            for face in [dom.lo[axis], dom.hi[axis]] {
                let others: Vec<usize> = (0..k).filter(|&i| i != axis).collect();
                let count = per_axis.pow(others.len() as u32);
                for flat in 0..count {
                    let mut p = vec![0.0; k];
                    p[axis] = face;
                    let mut rem = flat;
                    for &o in &others {
                        let t = (rem % per_axis) as f64 / (per_axis - 1).max(1) as f64;
                        rem /= per_axis;
                        p[o] = dom.lo[o] + t * dom.extent(o);
                    }
                    let f = self.weight(&self.patch.eval(&p));
                    if !(f > s_max) {
                        return Err(MonoError::CoverageViolated { param: p, f, s_max });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &ScenarioKind {
        &self.kind
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.dec
    }

    pub fn patch(&self) -> &ParametricPatch {
        &self.patch
    }

    pub fn k(&self) -> usize {
        self.patch.k()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn b_norm(&self) -> f64 {
        self.dec.b.norm()
    }

    pub fn radius(&self) -> f64 {
        self.dec.radius
    }

    /// `c = φ(0)`
    pub fn center(&self) -> &VecN {
        &self.center
    }

    /// `d = φ(∞) − φ(a)`
    pub fn direction(&self) -> &VecN {
        &self.dec.direction
    }

    pub fn s_of_r(&self, r: f64) -> f64 {
        s_of_r(r, self.b_norm(), self.dec.radius)
    }

    pub fn r_of_s(&self, s: f64) -> f64 {
        r_of_s(s, self.b_norm(), self.dec.radius)
    }

    /// `f(x) = |b|²|x−c|²/(2|b|² − R² − 2⟨d, x − ψ(0)⟩)`, `+∞` outside the
    /// domain of `f`.
    pub fn weight(&self, x: &VecN) -> f64 {
        let b2 = self.dec.b.norm_sq();
        let mut proj = 0.0;
        let mut dist2 = 0.0;
        for i in 0..x.dim() {
            proj += self.dec.direction[i] * (x[i] - self.psi_origin[i]);
            let dc = x[i] - self.center[i];
            dist2 += dc * dc;
        }
        let margin = 2.0 * b2 - self.dec.radius * self.dec.radius - 2.0 * proj;
        if margin > 0.0 {
            b2 * dist2 / margin
        } else {
            f64::INFINITY
        }
    }

    pub fn region_fn(&self) -> RegionFn {
        let scn = self.clone();
        Arc::new(move |x: &VecN| scn.weight(x))
    }

    /// `φ(B_r)` as a region, through its closed-form ball image.
    pub fn ball_region(&self, r: f64) -> RegionSpec {
        match ball_image(&self.dec, r) {
            BallImage::Ball(ball) => {
                let inv = 1.0 / (ball.radius * ball.radius);
                RegionSpec::sublevel(Arc::new(move |x: &VecN| x.dist_sq(&ball.center) * inv), 1.0)
            }
            BallImage::Exterior(ball) => {
                let r2 = ball.radius * ball.radius;
                RegionSpec::sublevel(Arc::new(move |x: &VecN| r2 / x.dist_sq(&ball.center)), 1.0)
            }
            BallImage::HalfSpace(h) => RegionSpec::sublevel(
                Arc::new(move |x: &VecN| 1.0 + h.unit_normal.dot(x) - h.offset),
                1.0,
            ),
        }
    }

    fn check_radius(&self, r: f64) -> Result<(), MonoError> {
        if r > 0.0 && r <= self.r_max {
            Ok(())
        } else {
            Err(MonoError::InvalidRadius { r, r_max: self.r_max })
        }
    }

    fn check_level(&self, s: f64) -> Result<(), MonoError> {
        let s_max = self.s_of_r(self.r_max);
        if s > 0.0 && s <= s_max {
            Ok(())
        } else {
            Err(MonoError::InvalidRadius {
                r: self.r_of_s(s.max(0.0)),
                r_max: self.r_max,
            })
        }
    }

    /// `((|b|² − r²)/r²)^{k/2}`
    pub fn j_prefactor(&self, r: f64) -> f64 {
        let b2 = self.dec.b.norm_sq();
        ((b2 - r * r) / (r * r)).powf(self.k() as f64 / 2.0)
    }
}

// --- gradient, W, flux integrands ----------------------------------------

/// `∇^Σ f = (2s/|x−c|²)((x−c)^⊤ + s·d^⊤/|b|²)` with `s = f(x)`.
pub fn surface_gradient_f(scn: &Scenario, sample: &SurfaceSample) -> Result<VecN, MonoError> {
    let x = &sample.position;
    let s = scn.weight(x);
    if !s.is_finite() {
        return Err(MonoError::OutsideHalfSpace { x: x.as_slice().to_vec() });
    }
    let v = x - scn.center();
    let n2 = v.norm_sq();
    if n2 == 0.0 {
        return Ok(VecN::zeros(x.dim()));
    }
    let b2 = scn.decomposition().b.norm_sq();
    let vt = sample.frame.tangential(&v);
    let dt = sample.frame.tangential(scn.direction());
    Ok(vt.axpy(s / b2, &dt).scale(2.0 * s / n2))
}

/// Finite-difference oracle for [`surface_gradient_f`]: central differences
/// of `f ∘ eval` with one Richardson step, pushed forward by `J G⁻¹`.
pub fn surface_gradient_f_fd(scn: &Scenario, param: &[f64], h: f64) -> Result<VecN, MonoError> {
    let patch = scn.patch();
    let k = patch.k();
    let fval = |p: &[f64]| scn.weight(&patch.eval(p));
    let central = |step: f64| -> Vec<f64> {
        (0..k)
            .map(|i| {
                let mut q = param.to_vec();
                q[i] = param[i] + step;
                let plus = fval(&q);
                q[i] = param[i] - step;
                let minus = fval(&q);
                (plus - minus) / (2.0 * step)
            })
            .collect()
    };
    let (g1, g2) = (central(h), central(0.5 * h));
    let grad_u: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
    if grad_u.iter().any(|g| !g.is_finite()) {
        return Err(MonoError::OutsideHalfSpace {
            x: patch.eval(param).as_slice().to_vec(),
        });
    }
    let jac = patch.jac(param);
    let n = patch.n();
    let jm = DMatrix::from_fn(n, k, |r, c| jac[c][r]);
    let gram = jm.transpose() * &jm;
    let coeffs = gram
        .lu()
        .solve(&DVector::from_vec(grad_u))
        .ok_or(MonoError::Geom(GeomError::Degenerate))?;
    Ok(VecN::from_dvector(&(jm * coeffs)))
}

/// `W(x) = (1/k) f^{−k/2}(x−c) − F(f)·d/|b|²` with `F(t) = t^{−(k−2)/2}/(k−2)`
/// for `k ≥ 3` and `F(t) = −½ log t` for `k = 2`.
pub fn w_field(scn: &Scenario, x: &VecN) -> Result<VecN, MonoError> {
    let k = scn.k();
    if k < 2 {
        return Err(MonoError::Unsupported("W is defined for k ≥ 2".into()));
    }
    let f = scn.weight(x);
    if !f.is_finite() {
        return Err(MonoError::OutsideHalfSpace { x: x.as_slice().to_vec() });
    }
    let b2 = scn.decomposition().b.norm_sq();
    let v = x - scn.center();
    Ok(v
        .scale(f.powf(-(k as f64) / 2.0) / k as f64)
        .axpy(-level_f(k, f) / b2, scn.direction()))
}

/// `div_Σ W = f^{−k/2}|(x−c)^⊥|²/|x−c|² + f^{−(k−4)/2}|d^⊤|²/(|b|⁴|x−c|²)`
pub fn div_w_closed_form(scn: &Scenario, sample: &SurfaceSample) -> Result<f64, MonoError> {
    let x = &sample.position;
    let f = scn.weight(x);
    if !f.is_finite() {
        return Err(MonoError::OutsideHalfSpace { x: x.as_slice().to_vec() });
    }
    let k = scn.k() as f64;
    let b2 = scn.decomposition().b.norm_sq();
    let v = x - scn.center();
    let n2 = v.norm_sq();
    Ok(f.powf(-k / 2.0) * sample.frame.normal_norm_sq(&v) / n2
        + f.powf(-(k - 4.0) / 2.0) * sample.frame.tangential_norm_sq(scn.direction()) / (b2 * b2 * n2))
}

/// Returns `(closed_form, fd_value)`; the finite-difference value sums
/// tangential components of directional derivatives of `W` along the frame.
pub fn div_w_check(scn: &Scenario, sample: &SurfaceSample) -> Result<(f64, f64), MonoError> {
    let closed = div_w_closed_form(scn, sample)?;
    let x = &sample.position;
    let h = 1e-3 * x.dist(scn.center()).min(1.0);
    let div_at = |step: f64| -> Result<f64, MonoError> {
        let mut acc = 0.0;
        for e in sample.frame.vectors() {
            let plus = w_field(scn, &x.axpy(step, e))?;
            let minus = w_field(scn, &x.axpy(-step, e))?;
            acc += (&plus - &minus).dot(e) / (2.0 * step);
        }
        Ok(acc)
    };
    let (d1, d2) = (div_at(h)?, div_at(0.5 * h)?);
    Ok((closed, (4.0 * d2 - d1) / 3.0))
}

/// `X_s = x − c − (s/|b|²)·d`
pub fn x_s_field(scn: &Scenario, x: &VecN, s: f64) -> VecN {
    let b2 = scn.decomposition().b.norm_sq();
    (x - scn.center()).axpy(-s / b2, scn.direction())
}

/// Both sides of `⟨X_s, ∇^Σf⟩ = (2s/|x−c|²)(|(x−c)^⊤|² − s²|d^⊤|²/|b|⁴)`
/// at a sample, with `s = f(x)`.
pub fn flux_pointwise_check(scn: &Scenario, sample: &SurfaceSample) -> Result<(f64, f64), MonoError> {
    let x = &sample.position;
    let s = scn.weight(x);
    let grad = surface_gradient_f(scn, sample)?;
    let lhs = x_s_field(scn, x, s).dot(&grad);
    let v = x - scn.center();
    let b2 = scn.decomposition().b.norm_sq();
    let rhs = 2.0 * s / v.norm_sq()
        * (sample.frame.tangential_norm_sq(&v) - s * s * sample.frame.tangential_norm_sq(scn.direction()) / (b2 * b2));
    Ok((lhs, rhs))
}

// --- check records -------------------------------------------------------

/// Two sides of an identity with their quadrature error estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_err: f64,
    pub rhs_err: f64,
    pub residual: f64,
    pub budget: f64,
    pub pass: bool,
    /// Some quadrature stopped at its depth or panel limit.
    pub tol_not_met: bool,
}

/// `budget = 3·(lhs_err + rhs_err) + 1e-12·|lhs|`
pub fn error_budget(lhs: f64, lhs_err: f64, rhs_err: f64) -> f64 {
    3.0 * (lhs_err + rhs_err) + 1e-12 * lhs.abs()
}

impl CheckOutcome {
    pub fn new(lhs: f64, lhs_err: f64, rhs: f64, rhs_err: f64) -> Self {
        let residual = lhs - rhs;
        let budget = error_budget(lhs, lhs_err, rhs_err);
        CheckOutcome {
            lhs,
            rhs,
            lhs_err,
            rhs_err,
            residual,
            budget,
            pass: residual.abs() <= budget,
            tol_not_met: false,
        }
    }

    fn flagged(mut self, tol_not_met: bool) -> Self {
        self.tol_not_met = tol_not_met;
        self
    }
}

fn lenient(r: Result<QuadratureResult, QuadError>) -> Result<QuadratureResult, MonoError> {
    Ok(QuadError::accept_partial(r)?)
}

// --- monotone quantities -------------------------------------------------

/// `|Σ ∩ φ(B_r)|` and `∫_{Σ∩φ(B_r)} |(x−c)^⊤|²/|x−c|²` without the prefactor.
fn ball_integrals(scn: &Scenario, r: f64, opts: QuadOptions, tangential: bool) -> Result<QuadratureResult, MonoError> {
    scn.check_radius(r)?;
    let region = scn.ball_region(r);
    let c = scn.center().clone();
    if tangential {
        lenient(integrate_region(scn.patch(), |s| tangential_ratio(s, &c), &region, opts))
    } else {
        lenient(integrate_region(scn.patch(), |_| 1.0, &region, opts))
    }
}

/// `J(r) = ((|b|² − r²)/r²)^{k/2} |Σ ∩ φ(B_r)|`
pub fn j_of_r(scn: &Scenario, r: f64, opts: QuadOptions) -> Result<QuadratureResult, MonoError> {
    Ok(ball_integrals(scn, r, opts, false)?.scaled(scn.j_prefactor(r)))
}

/// `I(r) = ((|b|² − r²)/r²)^{k/2} ∫_{Σ∩φ(B_r)} |(x−c)^⊤|²/|x−c|²`
pub fn i_of_r(scn: &Scenario, r: f64, opts: QuadOptions) -> Result<QuadratureResult, MonoError> {
    Ok(ball_integrals(scn, r, opts, true)?.scaled(scn.j_prefactor(r)))
}

/// `Q_A(s) = s^{−k/2}|Σ ∩ E_s|`, `E_s = {f < s}`
pub fn q_a(scn: &Scenario, s: f64, opts: QuadOptions) -> Result<QuadratureResult, MonoError> {
    scn.check_level(s)?;
    let region = RegionSpec::sublevel(scn.region_fn(), s);
    let area = lenient(integrate_region(scn.patch(), |_| 1.0, &region, opts))?;
    Ok(area.scaled(s.powf(-(scn.k() as f64) / 2.0)))
}

/// `Q_I(s) = s^{−k/2}∫_{Σ∩E_s} |(x−c)^⊤|²/|x−c|²`
pub fn q_i(scn: &Scenario, s: f64, opts: QuadOptions) -> Result<QuadratureResult, MonoError> {
    scn.check_level(s)?;
    let region = RegionSpec::sublevel(scn.region_fn(), s);
    let c = scn.center().clone();
    let val = lenient(integrate_region(scn.patch(), |smp| tangential_ratio(smp, &c), &region, opts))?;
    Ok(val.scaled(s.powf(-(scn.k() as f64) / 2.0)))
}

fn check_pair(scn: &Scenario, r_lo: f64, r_hi: f64) -> Result<(), MonoError> {
    scn.check_radius(r_lo)?;
    scn.check_radius(r_hi)?;
    if r_lo < r_hi {
        Ok(())
    } else {
        Err(MonoError::InvalidRadius { r: r_lo, r_max: r_hi })
    }
}

fn volume_rhs(scn: &Scenario, r_lo: f64, r_hi: f64, opts: QuadOptions) -> Result<QuadratureResult, MonoError> {
    let k = scn.k() as f64;
    let b2 = scn.decomposition().b.norm_sq();
    let b4 = b2 * b2;
    let c = scn.center().clone();
    let d = scn.direction().clone();
    let region = RegionSpec::band(scn.region_fn(), scn.s_of_r(r_lo), scn.s_of_r(r_hi));
    let integrand = |smp: &SurfaceSample| {
        let f = scn.weight(&smp.position);
        let v = &smp.position - &c;
        let n2 = v.norm_sq();
        if n2 == 0.0 {
            return 0.0;
        }
        f.powf(-k / 2.0) * (b4 * smp.frame.normal_norm_sq(&v) + f * f * smp.frame.tangential_norm_sq(&d)) / (b4 * n2)
    };
    let band = lenient(integrate_region(scn.patch(), integrand, &region, opts))?;
    Ok(band.scaled(scn.radius().powf(k)))
}

/// `J(r_hi) − J(r_lo)` against
/// `R^k ∫_band f^{−k/2}(|b|⁴|(x−c)^⊥|² + f²|d^⊤|²)/(|b|⁴|x−c|²)`.
pub fn volume_identity_residual(scn: &Scenario, r_lo: f64, r_hi: f64, opts: QuadOptions) -> Result<CheckOutcome, MonoError> {
    check_pair(scn, r_lo, r_hi)?;
    let j_lo = j_of_r(scn, r_lo, opts)?;
    let j_hi = j_of_r(scn, r_hi, opts)?;
    volume_identity_from(scn, r_lo, r_hi, &j_lo, &j_hi, opts)
}

fn volume_identity_from(
    scn: &Scenario,
    r_lo: f64,
    r_hi: f64,
    j_lo: &QuadratureResult,
    j_hi: &QuadratureResult,
    opts: QuadOptions,
) -> Result<CheckOutcome, MonoError> {
    let rhs = volume_rhs(scn, r_lo, r_hi, opts)?;
    let lhs = j_hi.value - j_lo.value;
    let lhs_err = j_hi.error_estimate + j_lo.error_estimate;
    Ok(CheckOutcome::new(lhs, lhs_err, rhs.value, rhs.error_estimate).flagged(j_lo.depth_hit || j_hi.depth_hit || rhs.depth_hit))
}

fn weighted_rhs(
    scn: &Scenario,
    r_lo: f64,
    r_hi: f64,
    rho_nodes: usize,
    opts: QuadOptions,
) -> Result<QuadratureResult, MonoError> {
    let k = scn.k();
    let kf = k as f64;
    let b2 = scn.decomposition().b.norm_sq();
    let b4 = b2 * b2;
    let c = scn.center().clone();
    let d = scn.direction().clone();
    let region = RegionSpec::band(scn.region_fn(), scn.s_of_r(r_lo), scn.s_of_r(r_hi));
    let band_integrand = |smp: &SurfaceSample| {
        let f = scn.weight(&smp.position);
        let n2 = smp.position.dist_sq(&c);
        if n2 == 0.0 {
            return 0.0;
        }
        f.powf(-(kf - 4.0) / 2.0) * smp.frame.tangential_norm_sq(&d) / (b4 * n2)
    };
    let band = lenient(integrate_region(scn.patch(), band_integrand, &region, opts))?.scaled(scn.radius().powf(kf));

    let mut depth_hit = band.depth_hit;
    // below the onset radius the inner region is empty; past it the inner
    // integral grows like a power of (ρ − onset), smoothed by ρ = ρ₀ + L u²
    let onset = scn.onset_radius();
    let radial = if onset >= r_hi {
        QuadratureResult::exact(0.0)
    } else {
        let (rho0, substitute) = if onset > r_lo { (onset, true) } else { (r_lo, false) };
        let len = r_hi - rho0;
        let mut failure: Option<QuadError> = None;
        let res = radial_integral_with_errors(
            |t| {
                let (rho, jac) = if substitute { (rho0 + len * t * t, 2.0 * len * t) } else { (t, 1.0) };
                let weight = jac * (b2 - rho * rho).powf((kf - 2.0) / 2.0) / rho.powi(k as i32 + 1);
                if weight == 0.0 {
                    return Ok((0.0, 0.0));
                }
                let region = scn.ball_region(rho);
                match QuadError::accept_partial(integrate_region(scn.patch(), |smp| normal_ratio(smp, &c), &region, opts)) {
                    Ok(q) => {
                        depth_hit |= q.depth_hit;
                        Ok((weight * q.value, weight * q.error_estimate))
                    }
                    Err(e) => {
                        failure.get_or_insert(e.clone());
                        Err(e)
                    }
                }
            },
            if substitute { 0.0 } else { r_lo },
            if substitute { 1.0 } else { r_hi },
            rho_nodes,
            opts.tol,
        );
        if let Some(e) = failure {
            return Err(e.into());
        }
        lenient(res)?
    }
    .scaled(kf * b2);
    Ok(QuadratureResult {
        value: band.value + radial.value,
        error_estimate: band.error_estimate + radial.error_estimate,
        cells_used: band.cells_used + radial.cells_used,
        depth_hit: depth_hit || radial.depth_hit,
    })
}

/// `I(r_hi) − I(r_lo)` against the band term plus
/// `k|b|² ∫ (|b|² − ρ²)^{(k−2)/2}/ρ^{k+1} · ∫_{Σ∩φ(B_ρ)} |(x−c)^⊥|²/|x−c|² dρ`.
pub fn weighted_identity_residual(
    scn: &Scenario,
    r_lo: f64,
    r_hi: f64,
    rho_nodes: usize,
    opts: QuadOptions,
) -> Result<CheckOutcome, MonoError> {
    check_pair(scn, r_lo, r_hi)?;
    let i_lo = i_of_r(scn, r_lo, opts)?;
    let i_hi = i_of_r(scn, r_hi, opts)?;
    weighted_identity_from(scn, r_lo, r_hi, &i_lo, &i_hi, rho_nodes, opts)
}

fn weighted_identity_from(
    scn: &Scenario,
    r_lo: f64,
    r_hi: f64,
    i_lo: &QuadratureResult,
    i_hi: &QuadratureResult,
    rho_nodes: usize,
    opts: QuadOptions,
) -> Result<CheckOutcome, MonoError> {
    let rhs = weighted_rhs(scn, r_lo, r_hi, rho_nodes, opts)?;
    let lhs = i_hi.value - i_lo.value;
    let lhs_err = i_hi.error_estimate + i_lo.error_estimate;
    Ok(CheckOutcome::new(lhs, lhs_err, rhs.value, rhs.error_estimate).flagged(i_lo.depth_hit || i_hi.depth_hit || rhs.depth_hit))
}

// --- flux and coarea -----------------------------------------------------

fn require_surface(scn: &Scenario) -> Result<(), MonoError> {
    if scn.k() == 2 {
        Ok(())
    } else {
        Err(MonoError::Unsupported(format!(
            "level-set checks need k = 2, got k = {}",
            scn.k()
        )))
    }
}

/// `∫_{Σ∩∂E_s} ⟨X_s, ∇^Σf⟩/|∇^Σf|` (lhs) against `k·|Σ ∩ E_s|` (rhs).
pub fn flux_identity_check(scn: &Scenario, s: f64, opts: QuadOptions) -> Result<CheckOutcome, MonoError> {
    require_surface(scn)?;
    scn.check_level(s)?;
    let boundary = lenient(level_curve_integral(
        scn.patch(),
        &scn.region_fn(),
        s,
        |smp| {
            let grad = surface_gradient_f(scn, smp).unwrap_or_else(|_| VecN::zeros(smp.position.dim()));
            let g = grad.norm();
            if g == 0.0 {
                return f64::NAN;
            }
            x_s_field(scn, &smp.position, s).dot(&grad) / g
        },
        opts.tol,
    ))?;
    let area = lenient(integrate_region(
        scn.patch(),
        |_| 1.0,
        &RegionSpec::sublevel(scn.region_fn(), s),
        opts,
    ))?
    .scaled(scn.k() as f64);
    Ok(CheckOutcome::new(boundary.value, boundary.error_estimate, area.value, area.error_estimate)
        .flagged(boundary.depth_hit || area.depth_hit))
}

/// Coarea with `g ≡ 1`: `∫_{s_lo ≤ f ≤ s_hi} |∇^Σf|` (lhs) against
/// `∫_{s_lo}^{s_hi} |Σ ∩ {f = τ}| dτ` (rhs).
pub fn coarea_check(scn: &Scenario, s_lo: f64, s_hi: f64, opts: QuadOptions) -> Result<CheckOutcome, MonoError> {
    require_surface(scn)?;
    scn.check_level(s_lo)?;
    scn.check_level(s_hi)?;
    let band = lenient(integrate_region(
        scn.patch(),
        |smp| surface_gradient_f(scn, smp).map(|g| g.norm()).unwrap_or(f64::NAN),
        &RegionSpec::band(scn.region_fn(), s_lo, s_hi),
        opts,
    ))?;
    let f = scn.region_fn();
    let mut failure = None;
    let lengths = radial_integral_with_errors(
        |tau| match QuadError::accept_partial(level_curve_integral(scn.patch(), &f, tau, |_| 1.0, opts.tol)) {
            Ok(q) => Ok((q.value, q.error_estimate)),
            Err(e) => {
                failure.get_or_insert(e.clone());
                Err(e)
            }
        },
        s_lo,
        s_hi,
        DEFAULT_RHO_NODES,
        opts.tol,
    );
    if let Some(e) = failure {
        return Err(e.into());
    }
    let lengths = lenient(lengths)?;
    Ok(CheckOutcome::new(band.value, band.error_estimate, lengths.value, lengths.error_estimate)
        .flagged(band.depth_hit || lengths.depth_hit))
}

// --- prescribed point ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrescribedPointResult {
    /// `|Σ ∩ B₁|`
    pub area: f64,
    pub area_err: f64,
    /// `ω_k (1 − |a|²)^{k/2}`
    pub bound: f64,
    pub slack: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Smallest distance from the patch image to `p`: grid search refined by
/// Gauss–Newton. Returns the distance and the parameter point.
pub fn distance_to_point(patch: &ParametricPatch, p: &VecN) -> (f64, Vec<f64>) {
    let k = patch.k();
    let dom = patch.domain();
    let m: usize = if k <= 2 { 60 } else { 12 };
    let mut best = (f64::INFINITY, vec![0.0; k]);
    for flat in 0..m.pow(k as u32) {
        let mut rem = flat;
        let q: Vec<f64> = (0..k)
            .map(|ax| {
                let t = (rem % m) as f64 / (m - 1) as f64;
                rem /= m;
                dom.lo[ax] + t * dom.extent(ax)
            })
            .collect();
        let d = patch.eval(&q).dist(p);
        if d < best.0 {
            best = (d, q);
        }
    }
    let (mut dist, mut q) = best;
    for _ in 0..50 {
        let x = patch.eval(&q);
        let jac = patch.jac(&q);
        let jm = DMatrix::from_fn(patch.n(), k, |r, c| jac[c][r]);
        let resid = (p - &x).to_dvector();
        let Some(step) = (jm.transpose() * &jm).lu().solve(&(jm.transpose() * resid)) else {
            break;
        };
        let cand: Vec<f64> = q
            .iter()
            .enumerate()
            .map(|(i, v)| (v + step[i]).clamp(dom.lo[i], dom.hi[i]))
            .collect();
        let d = patch.eval(&cand).dist(p);
        if !(d < dist) {
            break;
        }
        dist = d;
        q = cand;
    }
    (dist, q)
}

/// `|Σ ∩ B₁| ≥ ω_k(1 − |a|²)^{k/2}` for a minimal `Σ` through `a`.
pub fn prescribed_point_bound(patch: &ParametricPatch, a: &VecN, opts: QuadOptions) -> Result<PrescribedPointResult, MonoError> {
    let a2 = a.norm_sq();
    if !(a2 < 1.0) {
        return Err(MonoError::Mobius(MobiusError::InvalidPrescribedPoint(format!(
            "|a| = {} is not inside the unit ball",
            a2.sqrt()
        ))));
    }
    let (distance, _) = distance_to_point(patch, a);
    if distance > POINT_ON_SURFACE_TOL {
        return Err(MonoError::PointNotOnSurface { distance });
    }
    let k = patch.k();
    let region = RegionSpec::sublevel(Arc::new(|x: &VecN| x.norm_sq()), 1.0);
    let area = lenient(integrate_region(patch, |_| 1.0, &region, opts))?;
    let bound = unit_ball_volume(k) * (1.0 - a2).powf(k as f64 / 2.0);
    let slack = area.value - bound;
    let budget = error_budget(area.value, area.error_estimate, 0.0);
    Ok(PrescribedPointResult {
        area: area.value,
        area_err: area.error_estimate,
        bound,
        slack,
        budget,
        pass: slack >= -budget,
    })
}

// --- sweep ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub r_lo: f64,
    pub r_hi: f64,
    pub volume: CheckOutcome,
    pub weighted: CheckOutcome,
    /// `J(r_hi) − J(r_lo) ≥ −(budget_lo + budget_hi)`
    pub monotone: bool,
}

/// Sup norms of `(x−c)^⊥` and `d^⊤` over patch samples inside `φ(B_r_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualityDiagnostics {
    pub max_normal_offset: f64,
    pub max_tangential_direction: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub radii: Vec<f64>,
    pub s: Vec<f64>,
    pub j: Vec<QuadratureResult>,
    pub i: Vec<QuadratureResult>,
    pub q_a: Vec<QuadratureResult>,
    pub q_i: Vec<QuadratureResult>,
    pub pairs: Vec<PairResult>,
    /// `J` constant within budget across the grid.
    pub constant_j: bool,
    pub equality: EqualityDiagnostics,
    pub pass: bool,
}

impl MonotonicityReport {
    pub fn tol_not_met(&self) -> bool {
        self.j.iter().chain(&self.i).chain(&self.q_a).chain(&self.q_i).any(|q| q.depth_hit)
            || self.pairs.iter().any(|p| p.volume.tol_not_met || p.weighted.tol_not_met)
    }
}

pub fn equality_diagnostics(scn: &Scenario, r: f64) -> Result<EqualityDiagnostics, MonoError> {
    let patch = scn.patch();
    let k = patch.k();
    let dom = patch.domain();
    let m: usize = if k <= 2 { 41 } else { 11 };
    let s_max = scn.s_of_r(r);
    let mut out = EqualityDiagnostics {
        max_normal_offset: 0.0,
        max_tangential_direction: 0.0,
        samples: 0,
    };
    for flat in 0..m.pow(k as u32) {
        let mut rem = flat;
        let q: Vec<f64> = (0..k)
            .map(|ax| {
                let t = ((rem % m) as f64 + 0.5) / m as f64;
                rem /= m;
                dom.lo[ax] + t * dom.extent(ax)
            })
            .collect();
        let smp = patch.sample(&q)?;
        if !(scn.weight(&smp.position) < s_max) {
            continue;
        }
        let v = &smp.position - scn.center();
        out.max_normal_offset = out.max_normal_offset.max(smp.frame.normal_norm_sq(&v).sqrt());
        out.max_tangential_direction = out
            .max_tangential_direction
            .max(smp.frame.tangential_norm_sq(scn.direction()).sqrt());
        out.samples += 1;
    }
    Ok(out)
}

fn radius_budget(q: &QuadratureResult) -> f64 {
    error_budget(q.value, q.error_estimate, 0.0)
}

/// Evaluates `J, I, Q_A, Q_I` on the grid and both identities on every
/// adjacent radius pair.
pub fn monotone_sweep(scn: &Scenario, radii: &[f64], rho_nodes: usize, opts: QuadOptions) -> Result<MonotonicityReport, MonoError> {
    if radii.is_empty() {
        return Err(MonoError::Unsupported("empty radius grid".into()));
    }
    for w in radii.windows(2) {
        if !(w[0] < w[1]) {
            return Err(MonoError::Unsupported(format!(
                "radius grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    for &r in radii {
        scn.check_radius(r)?;
    }
    let per_radius: Vec<Result<[QuadratureResult; 4], MonoError>> = radii
        .par_iter()
        .map(|&r| {
            let s = scn.s_of_r(r);
            Ok([j_of_r(scn, r, opts)?, i_of_r(scn, r, opts)?, q_a(scn, s, opts)?, q_i(scn, s, opts)?])
        })
        .collect();
    let mut cols: [Vec<QuadratureResult>; 4] = Default::default();
    for row in per_radius {
        for (col, q) in cols.iter_mut().zip(row?) {
            col.push(q);
        }
    }
    let [j, i, q_a_col, q_i_col] = cols;
    let pairs: Vec<Result<PairResult, MonoError>> = (1..radii.len())
        .into_par_iter()
        .map(|p| {
            let (r_lo, r_hi) = (radii[p - 1], radii[p]);
            let volume = volume_identity_from(scn, r_lo, r_hi, &j[p - 1], &j[p], opts)?;
            let weighted = weighted_identity_from(scn, r_lo, r_hi, &i[p - 1], &i[p], rho_nodes, opts)?;
            let monotone = j[p].value - j[p - 1].value >= -(radius_budget(&j[p - 1]) + radius_budget(&j[p]));
            Ok(PairResult {
                r_lo,
                r_hi,
                volume,
                weighted,
                monotone,
            })
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let constant_j = j
        .windows(2)
        .all(|w| (w[1].value - w[0].value).abs() <= radius_budget(&w[0]) + radius_budget(&w[1]));
    let equality = equality_diagnostics(scn, *radii.last().expect("non-empty grid"))?;
    let pass = pairs.iter().all(|p| p.volume.pass && p.weighted.pass && p.monotone);
    Ok(MonotonicityReport {
        s: radii.iter().map(|&r| scn.s_of_r(r)).collect(),
        radii: radii.to_vec(),
        j,
        i,
        q_a: q_a_col,
        q_i: q_i_col,
        pairs,
        constant_j,
        equality,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{orthonormal_frame, Hyperplane, Isometry, Sphere};
    use crate::mobius::{make_sigma_a, Reflection};
    use crate::surfaces::{catenoid, flat_disk};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v3(x: f64, y: f64, z: f64) -> VecN {
        VecN::from([x, y, z])
    }

    fn disk_scenario() -> Scenario {
        // plane x₁ = 1.5 through a = (1.5,0,0), orthogonal to b = (2,0,0)
        let frame = orthonormal_frame(&[VecN::unit(3, 1), VecN::unit(3, 2)], 1e-12).unwrap();
        let patch = flat_disk(v3(1.5, 0.0, 0.0), frame, 0.6).unwrap();
        Scenario::reflection(v3(2.0, 0.0, 0.0), 1.0, patch, 1.5).unwrap()
    }

    fn catenoid_scenario() -> Scenario {
        let patch = catenoid(1.0, -0.9, 0.9).unwrap();
        Scenario::reflection(v3(0.0, 0.0, 3.0), 2.0, patch, 1.9).unwrap()
    }

    #[test]
    fn f_reflection_examples() {
        let b = v3(2.0, 0.0, 0.0);
        assert!(f_reflection(&v3(1.5, 0.0, 0.0), &b, 1.0).unwrap().abs() < 1e-15);
        assert!((f_reflection(&v3(1.0, 0.0, 0.0), &b, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((f_reflection(&v3(1.5, 0.3, 0.0), &b, 1.0).unwrap() - 0.36).abs() < 1e-14);
        assert!(matches!(
            f_reflection(&v3(3.0, 0.0, 0.0), &b, 1.0),
            Err(MonoError::OutsideHalfSpace { .. })
        ));
    }

    #[test]
    fn f_mobius_examples() {
        let map = MobiusMap::new(vec![
            Reflection::InHyperplane(Hyperplane::new(v3(1.0, 0.0, 0.0), 0.0).unwrap()),
            Reflection::InSphere(Sphere::new(v3(2.0, 0.0, 0.0), 1.0).unwrap()),
        ])
        .unwrap();
        let dec = map.decomposition().unwrap();
        assert!(f_mobius(&dec.phi_of_origin(), dec).unwrap().abs() < 1e-12);
        assert!((f_mobius(&v3(-1.0, 0.0, 0.0), dec).unwrap() - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn s_of_r_examples() {
        assert!((s_of_r(1.0, 2.0, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        // σ_a with |a| = 0.5: b = a* = (2,0,0), R = √3
        let s = s_of_r(0.5, 2.0, 3f64.sqrt());
        assert!((s - 0.2).abs() < 1e-14);
        assert!((s - 0.75 * 0.25 / (1.0 - 0.25 * 0.25)).abs() < 1e-14);
        assert!((r_of_s(s_of_r(0.7, 2.0, 1.0), 2.0, 1.0) - 0.7).abs() < 1e-14);
    }

    #[test]
    fn gradient_examples() {
        let scn = disk_scenario();
        let smp = scn.patch().sample(&[0.3, 0.0]).unwrap();
        assert!(smp.position.dist(&v3(1.5, 0.3, 0.0)) < 1e-15);
        let g = surface_gradient_f(&scn, &smp).unwrap();
        assert!(g.dist(&v3(0.0, 2.4, 0.0)) < 1e-12, "{g:?}");
        let at_a = scn.patch().sample(&[0.0, 0.0]).unwrap();
        assert_eq!(surface_gradient_f(&scn, &at_a).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences_on_catenoid() {
        let scn = catenoid_scenario();
        for p in [[0.3, 0.2], [-2.0, 0.7], [1.1, -0.5], [2.9, 0.0]] {
            let smp = scn.patch().sample(&p).unwrap();
            let closed = surface_gradient_f(&scn, &smp).unwrap();
            let fd = surface_gradient_f_fd(&scn, &p, 1e-3).unwrap();
            assert!(closed.dist(&fd) <= 1e-6 * closed.norm(), "{closed:?} vs {fd:?}");
        }
    }

    #[test]
    fn div_w_matches_finite_differences() {
        let scn = catenoid_scenario();
        for p in [[0.3, 0.2], [-2.0, 0.7], [1.1, -0.5]] {
            let smp = scn.patch().sample(&p).unwrap();
            let (closed, fd) = div_w_check(&scn, &smp).unwrap();
            assert!((closed - fd).abs() <= 1e-5 * closed.abs(), "{closed} vs {fd}");
        }
        let disk = disk_scenario();
        for p in [[0.3, 0.2], [-0.4, 0.1]] {
            let smp = disk.patch().sample(&p).unwrap();
            let (closed, fd) = div_w_check(&disk, &smp).unwrap();
            assert!(closed.abs() < 1e-14);
            assert!(fd.abs() < 1e-6, "{fd}");
        }
    }

    #[test]
    fn k2_w_uses_log_branch() {
        let scn = disk_scenario();
        let x = v3(1.5, 0.3, 0.1);
        let f = scn.weight(&x);
        let w = w_field(&scn, &x).unwrap();
        let expected = (&x - scn.center()).scale(0.5 / f).axpy(0.5 * f.ln() / 4.0, &v3(2.0, 0.0, 0.0));
        assert!(w.dist(&expected) < 1e-14);
    }

    #[test]
    fn flux_pointwise_identity() {
        let scn = catenoid_scenario();
        for p in [[0.3, 0.2], [-2.0, 0.7], [1.1, -0.5]] {
            let smp = scn.patch().sample(&p).unwrap();
            let (lhs, rhs) = flux_pointwise_check(&scn, &smp).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn disk_equality_case() {
        let scn = disk_scenario();
        let opts = QuadOptions::default();
        for r in [0.3, 0.8, 1.4] {
            let j = j_of_r(&scn, r, opts).unwrap();
            let i = i_of_r(&scn, r, opts).unwrap();
            assert!((j.value - PI / 4.0).abs() < 1e-6, "J({r}) = {}", j.value);
            assert!((i.value - j.value).abs() < 1e-9);
        }
        let vol = volume_identity_residual(&scn, 0.3, 0.8, opts).unwrap();
        assert!(vol.pass && vol.rhs.abs() < 1e-15, "{vol:?}");
        let wt = weighted_identity_residual(&scn, 0.3, 0.8, DEFAULT_RHO_NODES, opts).unwrap();
        assert!(wt.pass && wt.rhs.abs() < 1e-15, "{wt:?}");
    }

    #[test]
    fn disk_flux() {
        let scn = disk_scenario();
        let chk = flux_identity_check(&scn, 1.0 / 3.0, QuadOptions::default()).unwrap();
        assert!(chk.pass, "{chk:?}");
        assert!((chk.rhs - 2.0 * PI / 12.0).abs() < 1e-6);
    }

    #[test]
    fn scenario_validation() {
        let patch = catenoid(1.0, -0.9, 0.9).unwrap();
        assert!(matches!(
            Scenario::reflection(v3(0.0, 0.0, 3.0), 2.0, patch.clone(), 2.98),
            Err(MonoError::DegenerateRadius { .. })
        ));
        // a short catenoid's rim cuts through φ(B_r_max)
        let tall = catenoid(1.0, -0.3, 0.3).unwrap();
        assert!(matches!(
            Scenario::reflection(v3(0.0, 0.0, 3.0), 2.0, tall, 1.9),
            Err(MonoError::CoverageViolated { .. })
        ));
        let sphere = crate::surfaces::round_sphere(1.0, crate::surfaces::ParamBox::new(vec![-PI, -1.0], vec![PI, 1.0]).unwrap()).unwrap();
        assert!(matches!(
            Scenario::reflection(v3(0.0, 0.0, 3.0), 2.0, sphere, 1.0),
            Err(MonoError::NotMinimal { .. })
        ));
    }

    #[test]
    fn prescribed_point_examples() {
        let frame = orthonormal_frame(&[VecN::unit(3, 1), VecN::unit(3, 2)], 1e-12).unwrap();
        let plane = flat_disk(v3(0.5, 0.0, 0.0), frame, 1.0).unwrap();
        let res = prescribed_point_bound(&plane, &v3(0.5, 0.0, 0.0), QuadOptions::default()).unwrap();
        assert!((res.area - 0.75 * PI).abs() < 1e-6);
        assert!(res.pass && res.slack.abs() <= res.budget.max(1e-9));
        assert!(matches!(
            prescribed_point_bound(&plane, &v3(0.4, 0.0, 0.0), QuadOptions::default()),
            Err(MonoError::PointNotOnSurface { .. })
        ));
        let frame = orthonormal_frame(&[VecN::unit(3, 0), VecN::unit(3, 1)], 1e-12).unwrap();
        let origin_plane = flat_disk(VecN::zeros(3), frame, 1.0).unwrap();
        let res = prescribed_point_bound(&origin_plane, &VecN::zeros(3), QuadOptions::default()).unwrap();
        assert!((res.bound - PI).abs() < 1e-15);
    }

    #[test]
    fn sigma_a_scaling_relation() {
        let a = v3(0.5, 0.0, 0.0);
        let map = make_sigma_a(&a).unwrap();
        let frame = orthonormal_frame(&[v3(0.3, 1.0, 0.0), v3(0.2, 0.0, 1.0)], 1e-12).unwrap();
        let patch = flat_disk(a.clone(), frame, 1.2).unwrap();
        let scn = Scenario::mobius(map, patch, 1.0).unwrap();
        let opts = QuadOptions::default();
        let r3 = 3f64.sqrt();
        for r in [0.4, 0.7, 1.0] {
            let j = j_of_r(&scn, r, opts).unwrap();
            let qa = q_a(&scn, scn.s_of_r(r), opts).unwrap();
            let diff = j.value - r3.powi(2) * qa.value;
            assert!(diff.abs() <= 3.0 * (j.error_estimate + 3.0 * qa.error_estimate) + 1e-12, "r={r}: {diff:e}");
        }
        let j_lo = j_of_r(&scn, 0.3, opts).unwrap().value;
        let j_hi = j_of_r(&scn, 0.8, opts).unwrap().value;
        assert!(j_lo < j_hi);
    }

    #[test]
    fn mirrored_weight_is_equivariant() {
        let mirror_plane = Hyperplane::new(v3(1.0, 0.0, 0.0), 0.0).unwrap();
        let map = MobiusMap::new(vec![
            Reflection::InHyperplane(mirror_plane.clone()),
            Reflection::InSphere(Sphere::new(v3(0.0, 0.0, 3.0), 2.0).unwrap()),
        ])
        .unwrap();
        let patch = catenoid(1.0, -0.9, 0.9).unwrap();
        let mirrored = patch.transformed(Isometry::mirror(&mirror_plane)).unwrap();
        let scn = Scenario::mobius(map, mirrored, 1.9).unwrap();
        let base = catenoid_scenario();
        for p in [[0.3, 0.2], [-2.0, 0.7]] {
            let x = base.patch().eval(&p);
            let y = scn.patch().eval(&p);
            assert!((base.weight(&x) - scn.weight(&y)).abs() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn f_forms_agree(bx in -3.0..3.0f64, by in -3.0..3.0f64, bz in 0.5..3.0f64,
                         rr in 0.2..2.0f64, x in prop::array::uniform3(-3.0..3.0f64)) {
            let b = v3(bx, by, bz);
            let x = VecN::from(x);
            if half_space_margin(&x, &b, rr) > 1e-3 {
                prop_assert!(f_reflection(&x, &b, rr).is_ok());
            }
        }

        #[test]
        fn s_of_r_round_trip_and_monotone(r in 0.01..1.9f64, dr in 1e-6..0.05f64, bn in 2.0..4.0f64, rr in 0.3..3.0f64) {
            let s = s_of_r(r, bn, rr);
            prop_assert!((r_of_s(s, bn, rr) - r).abs() <= 1e-12 * r.max(1.0));
            prop_assert!(s_of_r(r + dr, bn, rr) > s);
        }

        #[test]
        fn level_sets_match_ball_spheres(theta in 0.0..PI, phi in 0.0..(2.0 * PI), r in 0.1..1.9f64) {
            // points with |σ(x)| = r satisfy f(x) = s(r)
            let b = v3(0.0, 0.0, 2.0);
            let rr = 1.3;
            let y = v3(r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos());
            let yb = &y - &b;
            let x = b.axpy(rr * rr / yb.norm_sq(), &yb);
            let f = f_reflection(&x, &b, rr).unwrap();
            let s = s_of_r(r, 2.0, rr);
            prop_assert!((f - s).abs() <= 1e-10 * s);
        }
    }
}
