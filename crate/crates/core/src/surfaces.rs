//! Analytic parametric patches, their first-order samples, and a
//! finite-difference mean-curvature check.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geom::{orthonormal_frame, Frame, GeomError, Isometry, VecN};

/// Smallest singular value allowed for a patch Jacobian.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurfaceError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("invalid surface parameter: {0}")]
    InvalidParameter(String),
    #[error("parameter point {0:?} lies outside the patch domain")]
    OutsideDomain(Vec<f64>),
    #[error("finite-difference step too large: extrapolation disagreement {0:.3e}")]
    StepTooLarge(f64),
}

/// Axis-aligned box in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SurfaceError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(SurfaceError::InvalidParameter("domain bounds must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(SurfaceError::InvalidParameter("domain needs finite lo < hi on every axis".into()));
        }
        Ok(ParamBox { lo, hi })
    }

    pub fn square(half: f64, k: usize) -> Self {
        ParamBox {
            lo: vec![-half; k],
            hi: vec![half; k],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn max_extent(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i)).fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.extent(i)).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *x >= *l && *x <= *h)
    }
}

type EvalFn = dyn Fn(&[f64]) -> VecN + Send + Sync;

/// The mapping behind a patch.
#[derive(Clone)]
pub enum SurfaceMap {
    /// `point + Σ u_i frame_i`
    FlatDisk { point: VecN, frame: Frame },
    /// `(c cosh(v/c) cos u, c cosh(v/c) sin u, v)`
    Catenoid { scale: f64 },
    /// `(v cos u, v sin u, pitch · u)`
    Helicoid { pitch: f64 },
    /// `(u − u³/3 + uv², v − v³/3 + vu², u² − v²)`
    Enneper,
    /// `(x, y, x² − y², 2xy)` in `R⁴`
    ComplexParabola,
    /// Round sphere `(ρ cos v cos u, ρ cos v sin u, ρ sin v)`; not minimal.
    RoundSphere { radius: f64 },
    /// `iso ∘ inner`
    Transformed { iso: Isometry, inner: Box<SurfaceMap> },
    /// User-supplied map; Jacobian by central differences.
    Custom { n: usize, eval: Arc<EvalFn> },
}

impl fmt::Debug for SurfaceMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceMap::FlatDisk { point, frame } => f
                .debug_struct("FlatDisk")
                .field("point", point)
                .field("frame", frame)
                .finish(),
            SurfaceMap::Catenoid { scale } => f.debug_struct("Catenoid").field("scale", scale).finish(),
            SurfaceMap::Helicoid { pitch } => f.debug_struct("Helicoid").field("pitch", pitch).finish(),
            SurfaceMap::Enneper => f.write_str("Enneper"),
            SurfaceMap::ComplexParabola => f.write_str("ComplexParabola"),
            SurfaceMap::RoundSphere { radius } => f.debug_struct("RoundSphere").field("radius", radius).finish(),
            SurfaceMap::Transformed { iso, inner } => f
                .debug_struct("Transformed")
                .field("iso", iso)
                .field("inner", inner)
                .finish(),
            SurfaceMap::Custom { n, .. } => f.debug_struct("Custom").field("n", n).finish_non_exhaustive(),
        }
    }
}

impl SurfaceMap {
    fn ambient_dim(&self) -> usize {
        match self {
            SurfaceMap::FlatDisk { point, .. } => point.dim(),
            SurfaceMap::Catenoid { .. }
            | SurfaceMap::Helicoid { .. }
            | SurfaceMap::Enneper
            | SurfaceMap::RoundSphere { .. } => 3,
            SurfaceMap::ComplexParabola => 4,
            SurfaceMap::Transformed { iso, .. } => iso.dim(),
            SurfaceMap::Custom { n, .. } => *n,
        }
    }

    fn eval(&self, p: &[f64]) -> VecN {
        match self {
            SurfaceMap::FlatDisk { point, frame } => {
                let mut x = point.clone();
                for (u, e) in p.iter().zip(frame.vectors()) {
                    x = x.axpy(*u, e);
                }
                x
            }
            SurfaceMap::Catenoid { scale } => {
                let (u, v) = (p[0], p[1]);
                let r = scale * (v / scale).cosh();
                VecN::from([r * u.cos(), r * u.sin(), v])
            }
            SurfaceMap::Helicoid { pitch } => {
                let (u, v) = (p[0], p[1]);
                VecN::from([v * u.cos(), v * u.sin(), pitch * u])
            }
            SurfaceMap::Enneper => {
                let (u, v) = (p[0], p[1]);
                VecN::from([u - u * u * u / 3.0 + u * v * v, v - v * v * v / 3.0 + v * u * u, u * u - v * v])
            }
            SurfaceMap::ComplexParabola => {
                let (x, y) = (p[0], p[1]);
                VecN::from([x, y, x * x - y * y, 2.0 * x * y])
            }
            SurfaceMap::RoundSphere { radius } => {
                let (u, v) = (p[0], p[1]);
                VecN::from([radius * v.cos() * u.cos(), radius * v.cos() * u.sin(), radius * v.sin()])
            }
            SurfaceMap::Transformed { iso, inner } => iso.apply(&inner.eval(p)),
            SurfaceMap::Custom { eval, .. } => eval(p),
        }
    }

    /// Jacobian columns `∂x/∂u_i`, or `None` for maps without a closed form.
    fn analytic_jac(&self, p: &[f64]) -> Option<Vec<VecN>> {
        Some(match self {
            SurfaceMap::FlatDisk { frame, .. } => frame.vectors().to_vec(),
            SurfaceMap::Catenoid { scale } => {
                let (u, v) = (p[0], p[1]);
                let (ch, sh) = ((v / scale).cosh(), (v / scale).sinh());
                vec![
                    VecN::from([-scale * ch * u.sin(), scale * ch * u.cos(), 0.0]),
                    VecN::from([sh * u.cos(), sh * u.sin(), 1.0]),
                ]
            }
            SurfaceMap::Helicoid { pitch } => {
                let (u, v) = (p[0], p[1]);
                vec![
                    VecN::from([-v * u.sin(), v * u.cos(), *pitch]),
                    VecN::from([u.cos(), u.sin(), 0.0]),
                ]
            }
            SurfaceMap::Enneper => {
                let (u, v) = (p[0], p[1]);
                vec![
                    VecN::from([1.0 - u * u + v * v, 2.0 * u * v, 2.0 * u]),
                    VecN::from([2.0 * u * v, 1.0 - v * v + u * u, -2.0 * v]),
                ]
            }
            SurfaceMap::ComplexParabola => {
                let (x, y) = (p[0], p[1]);
                vec![VecN::from([1.0, 0.0, 2.0 * x, 2.0 * y]), VecN::from([0.0, 1.0, -2.0 * y, 2.0 * x])]
            }
            SurfaceMap::RoundSphere { radius } => {
                let (u, v) = (p[0], p[1]);
                vec![
                    VecN::from([-radius * v.cos() * u.sin(), radius * v.cos() * u.cos(), 0.0]),
                    VecN::from([-radius * v.sin() * u.cos(), -radius * v.sin() * u.sin(), radius * v.cos()]),
                ]
            }
            SurfaceMap::Transformed { iso, inner } => {
                inner.analytic_jac(p)?.iter().map(|c| iso.apply_linear(c)).collect()
            }
            SurfaceMap::Custom { .. } => return None,
        })
    }
}

/// An immersed `k`-dimensional patch in `R^n`.
#[derive(Debug, Clone)]
pub struct ParametricPatch {
    k: usize,
    n: usize,
    domain: ParamBox,
    /// Axes along which the domain closes up on itself (no boundary there).
    periodic: Vec<bool>,
    map: SurfaceMap,
    fd_step: f64,
}

/// Position, orthonormal tangent frame and area element at a parameter point.
#[derive(Debug, Clone)]
pub struct SurfaceSample {
    pub param: Vec<f64>,
    pub position: VecN,
    pub frame: Frame,
    pub area_element: f64,
}

impl ParametricPatch {
    fn with_map(k: usize, domain: ParamBox, map: SurfaceMap) -> Result<Self, SurfaceError> {
        if domain.dim() != k {
            return Err(SurfaceError::InvalidParameter(format!(
                "domain has {} axes but the surface is {k}-dimensional",
                domain.dim()
            )));
        }
        let n = map.ambient_dim();
        let fd_step = 1e-5 * domain.max_extent();
        Ok(ParametricPatch {
            k,
            n,
            periodic: vec![false; k],
            domain,
            map,
            fd_step,
        })
    }

    /// User patch with central-difference Jacobian (step `1e-5 · extent`).
    pub fn custom(
        k: usize,
        n: usize,
        domain: ParamBox,
        eval: impl Fn(&[f64]) -> VecN + Send + Sync + 'static,
    ) -> Result<Self, SurfaceError> {
        Self::with_map(k, domain, SurfaceMap::Custom { n, eval: Arc::new(eval) })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &ParamBox {
        &self.domain
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn map(&self) -> &SurfaceMap {
        &self.map
    }

    pub fn with_domain(&self, domain: ParamBox) -> Result<Self, SurfaceError> {
        let mut p = Self::with_map(self.k, domain, self.map.clone())?;
        p.periodic = self.periodic.clone();
        p.refresh_periodicity();
        Ok(p)
    }

    /// Applies a Euclidean isometry to the image.
    pub fn transformed(&self, iso: Isometry) -> Result<Self, SurfaceError> {
        if iso.dim() != self.n {
            return Err(GeomError::DimensionMismatch {
                expected: self.n,
                got: iso.dim(),
            }
            .into());
        }
        let mut p = Self::with_map(
            self.k,
            self.domain.clone(),
            SurfaceMap::Transformed {
                iso,
                inner: Box::new(self.map.clone()),
            },
        )?;
        p.periodic = self.periodic.clone();
        Ok(p)
    }

    fn refresh_periodicity(&mut self) {
        let periodic_u = matches!(self.base_map(), SurfaceMap::Catenoid { .. } | SurfaceMap::RoundSphere { .. });
        if periodic_u {
            self.periodic[0] = (self.domain.extent(0) - 2.0 * PI).abs() < 1e-9;
        }
    }

    fn base_map(&self) -> &SurfaceMap {
        let mut m = &self.map;
        while let SurfaceMap::Transformed { inner, .. } = m {
            m = inner;
        }
        m
    }

    pub fn eval(&self, p: &[f64]) -> VecN {
        self.map.eval(p)
    }

    pub fn jac(&self, p: &[f64]) -> Vec<VecN> {
        if let Some(j) = self.map.analytic_jac(p) {
            return j;
        }
        let h = self.fd_step;
        let mut q = p.to_vec();
        (0..self.k)
            .map(|i| {
                q[i] = p[i] + h;
                let plus = self.eval(&q);
                q[i] = p[i] - h;
                let minus = self.eval(&q);
                q[i] = p[i];
                (&plus - &minus).scale(0.5 / h)
            })
            .collect()
    }

    pub fn sample(&self, param: &[f64]) -> Result<SurfaceSample, SurfaceError> {
        let jac = self.jac(param);
        let area_element = gram_determinant(&jac).max(0.0).sqrt();
        let frame = orthonormal_frame(&jac, RANK_TOL)?;
        Ok(SurfaceSample {
            param: param.to_vec(),
            position: self.eval(param),
            frame,
            area_element,
        })
    }
}

pub fn sample(patch: &ParametricPatch, param: &[f64]) -> Result<SurfaceSample, SurfaceError> {
    if !patch.domain().contains(param) {
        return Err(SurfaceError::OutsideDomain(param.to_vec()));
    }
    patch.sample(param)
}

/// `det(JᵀJ)`
fn gram_determinant(cols: &[VecN]) -> f64 {
    let k = cols.len();
    match k {
        1 => cols[0].norm_sq(),
        2 => {
            let (a, b, d) = (cols[0].norm_sq(), cols[0].dot(&cols[1]), cols[1].norm_sq());
            a * d - b * b
        }
        _ => {
            let g = DMatrix::from_fn(k, k, |i, j| cols[i].dot(&cols[j]));
            g.determinant()
        }
    }
}

// --- catalog -------------------------------------------------------------

pub fn flat_disk(point: VecN, frame: Frame, extent: f64) -> Result<ParametricPatch, SurfaceError> {
    if !(extent > 0.0) {
        return Err(SurfaceError::InvalidParameter(format!("extent must be positive, got {extent}")));
    }
    if frame.ambient_dim() != point.dim() {
        return Err(GeomError::DimensionMismatch {
            expected: point.dim(),
            got: frame.ambient_dim(),
        }
        .into());
    }
    let k = frame.k();
    ParametricPatch::with_map(k, ParamBox::square(extent, k), SurfaceMap::FlatDisk { point, frame })
}

/// Catenoid over `u ∈ [−π, π]`, `v ∈ [v_lo, v_hi]`; periodic in `u`.
pub fn catenoid(scale: f64, v_lo: f64, v_hi: f64) -> Result<ParametricPatch, SurfaceError> {
    if !(scale > 0.0) {
        return Err(SurfaceError::InvalidParameter(format!("catenoid scale must be positive, got {scale}")));
    }
    let domain = ParamBox::new(vec![-PI, v_lo], vec![PI, v_hi])?;
    let mut p = ParametricPatch::with_map(2, domain, SurfaceMap::Catenoid { scale })?;
    p.periodic[0] = true;
    Ok(p)
}

pub fn helicoid(pitch: f64, domain: ParamBox) -> Result<ParametricPatch, SurfaceError> {
    if !(pitch != 0.0 && pitch.is_finite()) {
        return Err(SurfaceError::InvalidParameter("helicoid pitch must be nonzero".into()));
    }
    ParametricPatch::with_map(2, domain, SurfaceMap::Helicoid { pitch })
}

pub fn enneper(domain: ParamBox) -> Result<ParametricPatch, SurfaceError> {
    ParametricPatch::with_map(2, domain, SurfaceMap::Enneper)
}

pub fn complex_parabola(domain: ParamBox) -> Result<ParametricPatch, SurfaceError> {
    ParametricPatch::with_map(2, domain, SurfaceMap::ComplexParabola)
}

/// Latitude–longitude patch of a round sphere; a non-minimal control.
pub fn round_sphere(radius: f64, domain: ParamBox) -> Result<ParametricPatch, SurfaceError> {
    if !(radius > 0.0) {
        return Err(SurfaceError::InvalidParameter(format!("sphere radius must be positive, got {radius}")));
    }
    let mut p = ParametricPatch::with_map(2, domain, SurfaceMap::RoundSphere { radius })?;
    p.refresh_periodicity();
    Ok(p)
}

// --- mean curvature ------------------------------------------------------

fn mean_curvature_vector(patch: &ParametricPatch, param: &[f64], h: f64, frame: &Frame, ginv: &DMatrix<f64>) -> VecN {
    let k = patch.k();
    let x0 = patch.eval(param);
    let mut q = param.to_vec();
    let mut hv = VecN::zeros(patch.n());
    for i in 0..k {
        for j in i..k {
            let second = if i == j {
                q[i] = param[i] + h;
                let p = patch.eval(&q);
                q[i] = param[i] - h;
                let m = patch.eval(&q);
                q[i] = param[i];
                (&(&p + &m) - &x0.scale(2.0)).scale(1.0 / (h * h))
            } else {
                let mut corner = |si: f64, sj: f64| {
                    q[i] = param[i] + si * h;
                    q[j] = param[j] + sj * h;
                    let x = patch.eval(&q);
                    q[i] = param[i];
                    q[j] = param[j];
                    x
                };
                let pp = corner(1.0, 1.0);
                let pm = corner(1.0, -1.0);
                let mp = corner(-1.0, 1.0);
                let mm = corner(-1.0, -1.0);
                (&(&pp - &pm) - &(&mp - &mm)).scale(1.0 / (4.0 * h * h))
            };
            let normal = &second - &frame.tangential(&second);
            let w = if i == j { ginv[(i, i)] } else { 2.0 * ginv[(i, j)] };
            hv = hv.axpy(w, &normal);
        }
    }
    hv
}

/// `|H|` from second differences projected to the normal space and traced
/// with the inverse first fundamental form; Richardson-extrapolated over
/// steps `h` and `h/2`.
pub fn mean_curvature_norm(patch: &ParametricPatch, param: &[f64], h: f64) -> Result<f64, SurfaceError> {
    let dom = patch.domain();
    for (i, x) in param.iter().enumerate() {
        let margin = 2.0 * h;
        let wraps = patch.periodic()[i];
        if !wraps && (*x - margin < dom.lo[i] || *x + margin > dom.hi[i]) {
            return Err(SurfaceError::OutsideDomain(param.to_vec()));
        }
    }
    let jac = patch.jac(param);
    let frame = orthonormal_frame(&jac, RANK_TOL)?;
    let k = patch.k();
    let g = DMatrix::from_fn(k, k, |i, j| jac[i].dot(&jac[j]));
    let ginv = g
        .try_inverse()
        .ok_or(SurfaceError::Geom(GeomError::RankDeficient { sigma_min: 0.0, tol: RANK_TOL }))?;
    let coarse = mean_curvature_vector(patch, param, h, &frame, &ginv);
    let fine = mean_curvature_vector(patch, param, 0.5 * h, &frame, &ginv);
    let disagreement = coarse.dist(&fine);
    if disagreement > 1e-4 {
        return Err(SurfaceError::StepTooLarge(disagreement));
    }
    let extrapolated = (&fine.scale(4.0) - &coarse).scale(1.0 / 3.0);
    Ok(extrapolated.norm())
}

/// Max `|H|` over an `m × m` grid of interior points (`k = 2`).
pub fn max_mean_curvature_on_grid(patch: &ParametricPatch, m: usize, h: f64) -> Result<f64, SurfaceError> {
    let dom = patch.domain();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let p: Vec<f64> = [i, j]
                .iter()
                .enumerate()
                .take(patch.k())
                .map(|(ax, &t)| dom.lo[ax] + dom.extent(ax) * (t as f64 + 0.5) / m as f64)
                .collect();
            // keep a margin away from the box for the stencil
            let p: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(ax, x)| x.clamp(dom.lo[ax] + 3.0 * h, dom.hi[ax] - 3.0 * h))
                .collect();
            worst = worst.max(mean_curvature_norm(patch, &p, h)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_x1(c: f64, extent: f64) -> ParametricPatch {
        let frame = orthonormal_frame(&[VecN::unit(3, 1), VecN::unit(3, 2)], 1e-12).unwrap();
        flat_disk(VecN::from([c, 0.0, 0.0]), frame, extent).unwrap()
    }

    #[test]
    fn flat_disk_is_isometric() {
        let d = disk_x1(1.5, 1.0);
        assert_eq!(d.eval(&[0.25, -0.5]), VecN::from([1.5, 0.25, -0.5]));
        let s = sample(&d, &[0.3, 0.1]).unwrap();
        assert!((s.area_element - 1.0).abs() < 1e-15);
        assert!(mean_curvature_norm(&d, &[0.1, 0.2], 1e-3).unwrap() <= 1e-8);
    }

    #[test]
    fn catenoid_first_fundamental_form() {
        let c = catenoid(1.0, -1.5, 1.5).unwrap();
        let s = sample(&c, &[0.0, 0.0]).unwrap();
        assert!(s.position.dist(&VecN::from([1.0, 0.0, 0.0])) < 1e-15);
        assert!((s.area_element - 1.0).abs() < 1e-15);
        let s = sample(&c, &[0.0, 1.0]).unwrap();
        let want = 1f64.cosh().powi(2);
        assert!((s.area_element - want).abs() < 1e-10 * want);
        assert!((want - 2.381).abs() < 1e-3);
    }

    #[test]
    fn helicoid_area_element_closed_form() {
        let h = helicoid(0.7, ParamBox::new(vec![-2.0, -1.0], vec![2.0, 1.0]).unwrap()).unwrap();
        for (u, v) in [(0.3, 0.2), (-1.1, 0.9), (1.9, -0.4)] {
            let s = sample(&h, &[u, v]).unwrap();
            let want = (v * v + 0.49f64).sqrt();
            assert!((s.area_element - want).abs() < 1e-10 * want);
        }
    }

    #[test]
    fn catalog_examples_are_minimal() {
        let e = enneper(ParamBox::square(1.0, 2)).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), VecN::zeros(3));
        assert!(mean_curvature_norm(&e, &[0.0, 0.0], 1e-3).unwrap() <= 1e-6);
        let p = complex_parabola(ParamBox::square(2.0, 2)).unwrap();
        assert_eq!(p.eval(&[1.0, 0.0]), VecN::from([1.0, 0.0, 1.0, 0.0]));
        assert!(mean_curvature_norm(&p, &[1.0, 0.0], 1e-3).unwrap() <= 1e-6);
    }

    #[test]
    fn catalog_grids_are_minimal() {
        let patches = vec![
            disk_x1(1.5, 0.6),
            catenoid(1.0, -0.9, 0.9).unwrap(),
            catenoid(0.7, -1.0, 1.0).unwrap(),
            helicoid(0.5, ParamBox::new(vec![-3.0, -1.0], vec![3.0, 1.0]).unwrap()).unwrap(),
            enneper(ParamBox::square(1.2, 2)).unwrap(),
            complex_parabola(ParamBox::square(1.0, 2)).unwrap(),
        ];
        for p in &patches {
            let worst = max_mean_curvature_on_grid(p, 10, 1e-3).unwrap();
            assert!(worst <= 1e-6, "{:?}: |H| = {worst:e}", p.map());
        }
    }

    #[test]
    fn round_sphere_is_a_negative_control() {
        let rho = 1.7;
        let s = round_sphere(rho, ParamBox::new(vec![-PI, -1.2], vec![PI, 1.2]).unwrap()).unwrap();
        let h = mean_curvature_norm(&s, &[0.4, 0.3], 1e-3).unwrap();
        assert!(((h - 2.0 / rho) / (2.0 / rho)).abs() < 1e-4);
    }

    #[test]
    fn custom_patch_uses_finite_differences() {
        let c = ParametricPatch::custom(2, 3, ParamBox::square(1.0, 2), |p| {
            VecN::from([p[0], p[1], p[0] * p[0] - p[1] * p[1]])
        })
        .unwrap();
        let jac = c.jac(&[0.5, 0.25]);
        assert!(jac[0].dist(&VecN::from([1.0, 0.0, 1.0])) < 1e-9);
        assert!(jac[1].dist(&VecN::from([0.0, 1.0, -0.5])) < 1e-9);
        // z = x² − y² is balanced at the origin only
        assert!(mean_curvature_norm(&c, &[0.0, 0.0], 1e-3).unwrap() < 1e-6);
        assert!(mean_curvature_norm(&c, &[0.5, 0.0], 1e-3).unwrap() > 0.1);
        let bowl = ParametricPatch::custom(2, 3, ParamBox::square(1.0, 2), |p| {
            VecN::from([p[0], p[1], p[0] * p[0] + p[1] * p[1]])
        })
        .unwrap();
        assert!((mean_curvature_norm(&bowl, &[0.0, 0.0], 1e-3).unwrap() - 4.0).abs() < 1e-4);
    }

    #[test]
    fn sample_outside_domain_and_degenerate_points() {
        let d = disk_x1(0.0, 1.0);
        assert!(matches!(sample(&d, &[2.0, 0.0]), Err(SurfaceError::OutsideDomain(_))));
        let h = helicoid(1.0, ParamBox::square(1.0, 2)).unwrap();
        // the helicoid is regular at v = 0 when pitch != 0
        assert!(sample(&h, &[0.0, 0.0]).is_ok());
        let cone = ParametricPatch::custom(2, 3, ParamBox::square(1.0, 2), |p| {
            VecN::from([p[1] * p[0].cos(), p[1] * p[0].sin(), p[1]])
        })
        .unwrap();
        assert!(matches!(sample(&cone, &[0.0, 0.0]), Err(SurfaceError::Geom(GeomError::RankDeficient { .. }))));
    }

    #[test]
    fn transformed_patch_matches_isometry() {
        let c = catenoid(1.0, -0.9, 0.9).unwrap();
        let m = Isometry::mirror(&crate::geom::Hyperplane::new(VecN::unit(3, 0), 0.0).unwrap());
        let t = c.transformed(m.clone()).unwrap();
        let p = [0.4, -0.3];
        assert!(t.eval(&p).dist(&m.apply(&c.eval(&p))) < 1e-15);
        assert!((sample(&t, &p).unwrap().area_element - sample(&c, &p).unwrap().area_element).abs() < 1e-14);
        assert!(t.periodic()[0]);
    }
}
