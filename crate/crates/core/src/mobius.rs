//! Möbius transformations of `R^n ∪ {∞}` stored as words of reflections.
//!
//! A [`MobiusMap`] is evaluated right-to-left: the last reflection of the word
//! acts first. When the map moves `∞` and its pole is not the origin, the map
//! factors as `ψ ∘ σ` with `σ` the reflection in the isometric sphere
//! `S(b, R)`, `b = φ⁻¹(∞)`, and `ψ` a Euclidean isometry. That factorization
//! is computed numerically from probe points and cached at construction.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geom::{
    nearest_orthogonal, Ball, ExtendedPoint, GeomError, HalfSpace, Hyperplane, Isometry, Sphere,
    VecN,
};

/// Relative threshold for treating `r = |b|` in ball images.
pub const DEGENERATE_RADIUS_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MobiusError {
    #[error("a Möbius word must contain at least one reflection")]
    EmptyWord,
    #[error("dimension mismatch in Möbius word: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("orbit hits the pole of reflection #{index} of the word")]
    PoleEncountered { index: usize },
    #[error("map fixes infinity (Euclidean similarity); no isometric sphere")]
    FixesInfinity,
    #[error("origin is the pole of the map (b = φ⁻¹(∞) = 0)")]
    OriginIsPole,
    #[error("decomposition validation failed: {0}")]
    ValidationFailed(String),
    #[error("invalid prescribed point: {0}")]
    InvalidPrescribedPoint(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reflection {
    InSphere(Sphere),
    InHyperplane(Hyperplane),
}

impl Reflection {
    pub fn dim(&self) -> usize {
        match self {
            Reflection::InSphere(s) => s.center.dim(),
            Reflection::InHyperplane(h) => h.unit_normal.dim(),
        }
    }

    /// Local metric scaling at a finite point; `None` at the pole.
    fn factor_at(&self, x: &VecN) -> Option<f64> {
        match self {
            Reflection::InSphere(s) => {
                let d2 = x.dist_sq(&s.center);
                if d2 == 0.0 {
                    None
                } else {
                    Some(s.radius * s.radius / d2)
                }
            }
            Reflection::InHyperplane(_) => Some(1.0),
        }
    }
}

/// Applies one reflection, tracking `∞` exactly.
pub fn reflect(refl: &Reflection, x: &ExtendedPoint) -> ExtendedPoint {
    match (refl, x) {
        (Reflection::InSphere(s), ExtendedPoint::Infinity) => ExtendedPoint::Finite(s.center.clone()),
        (Reflection::InSphere(s), ExtendedPoint::Finite(p)) => {
            let d = p - &s.center;
            let d2 = d.norm_sq();
            if d2 == 0.0 {
                return ExtendedPoint::Infinity;
            }
            let y = s.center.axpy(s.radius * s.radius / d2, &d);
            if y.is_finite() {
                ExtendedPoint::Finite(y)
            } else {
                ExtendedPoint::Infinity
            }
        }
        (Reflection::InHyperplane(_), ExtendedPoint::Infinity) => ExtendedPoint::Infinity,
        (Reflection::InHyperplane(h), ExtendedPoint::Finite(p)) => {
            let dist = h.signed_distance(p);
            ExtendedPoint::Finite(p.axpy(-2.0 * dist, &h.unit_normal))
        }
    }
}

/// The factorization `φ = ψ ∘ σ` through the isometric sphere `S(b, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// `φ⁻¹(∞)`
    pub b: VecN,
    /// Radius of the isometric sphere.
    pub radius: f64,
    pub psi: Isometry,
    /// `σ(0)`
    pub a: VecN,
    /// `φ(∞) − φ(a) = ψ(b) − ψ(0)`
    pub direction: VecN,
}

impl Decomposition {
    /// Decomposition of a bare sphere reflection (`ψ` = identity).
    pub fn of_reflection(b: VecN, radius: f64) -> Result<Self, MobiusError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeomError::Invalid(format!("radius must be positive, got {radius}")).into());
        }
        if !(b.norm() > 0.0) {
            return Err(MobiusError::OriginIsPole);
        }
        let n = b.dim();
        Ok(Decomposition {
            a: reflection_center_image(&b, radius),
            direction: b.clone(),
            b,
            radius,
            psi: Isometry::identity(n),
        })
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }

    pub fn sigma(&self) -> Reflection {
        Reflection::InSphere(Sphere {
            center: self.b.clone(),
            radius: self.radius,
        })
    }

    /// `φ(0) = ψ(a)`
    pub fn phi_of_origin(&self) -> VecN {
        self.psi.apply(&self.a)
    }

    /// Evaluates `ψ(σ(x))`.
    pub fn apply(&self, x: &ExtendedPoint) -> ExtendedPoint {
        match reflect(&self.sigma(), x) {
            ExtendedPoint::Finite(y) => ExtendedPoint::Finite(self.psi.apply(&y)),
            ExtendedPoint::Infinity => ExtendedPoint::Infinity,
        }
    }

    /// Evaluates `σ(ψ⁻¹(y)) = φ⁻¹(y)`.
    pub fn apply_inverse(&self, y: &ExtendedPoint) -> ExtendedPoint {
        match y {
            ExtendedPoint::Finite(p) => reflect(&self.sigma(), &ExtendedPoint::Finite(self.psi.apply_inverse(p))),
            ExtendedPoint::Infinity => ExtendedPoint::Finite(self.b.clone()),
        }
    }
}

/// `σ(0) = ((|b|² − R²)/|b|²) b` for the reflection in `S(b, R)`.
pub fn reflection_center_image(b: &VecN, radius: f64) -> VecN {
    let b2 = b.norm_sq();
    b.scale((b2 - radius * radius) / b2)
}

/// A finite composition of reflections, applied right-to-left.
#[derive(Debug, Clone, PartialEq)]
pub struct MobiusMap {
    word: Vec<Reflection>,
    decomposition: Option<Decomposition>,
}

impl MobiusMap {
    /// Builds the map and caches its isometric-sphere decomposition when
    /// one exists.
    pub fn new(word: Vec<Reflection>) -> Result<Self, MobiusError> {
        let n = match word.first() {
            Some(r) => r.dim(),
            None => return Err(MobiusError::EmptyWord),
        };
        if let Some(bad) = word.iter().find(|r| r.dim() != n) {
            return Err(MobiusError::DimensionMismatch {
                expected: n,
                got: bad.dim(),
            });
        }
        let mut map = MobiusMap {
            word,
            decomposition: None,
        };
        map.decomposition = match compute_decomposition(&map) {
            Ok(d) => Some(d),
            Err(MobiusError::FixesInfinity) | Err(MobiusError::OriginIsPole) => None,
            Err(e) => return Err(e),
        };
        Ok(map)
    }

    pub fn word(&self) -> &[Reflection] {
        &self.word
    }

    pub fn dim(&self) -> usize {
        self.word[0].dim()
    }

    pub fn decomposition(&self) -> Option<&Decomposition> {
        self.decomposition.as_ref()
    }

    pub fn apply(&self, x: &ExtendedPoint) -> ExtendedPoint {
        self.word.iter().rev().fold(x.clone(), |p, r| reflect(r, &p))
    }

    pub fn apply_finite(&self, x: &VecN) -> ExtendedPoint {
        self.apply(&ExtendedPoint::Finite(x.clone()))
    }

    /// Reversed word; each reflection is its own inverse.
    pub fn inverse(&self) -> MobiusMap {
        let word: Vec<Reflection> = self.word.iter().rev().cloned().collect();
        let decomposition = self.decomposition.as_ref().and_then(|_| compute_decomposition_raw(&word).ok());
        MobiusMap { word, decomposition }
    }

    /// Product of the per-reflection scale factors along the orbit of `x`.
    pub fn conformal_factor(&self, x: &VecN) -> Result<f64, MobiusError> {
        let mut p = ExtendedPoint::Finite(x.clone());
        let mut factor = 1.0;
        for (index, r) in self.word.iter().enumerate().rev() {
            let cur = match &p {
                ExtendedPoint::Finite(c) => c,
                ExtendedPoint::Infinity => return Err(MobiusError::PoleEncountered { index }),
            };
            factor *= r.factor_at(cur).ok_or(MobiusError::PoleEncountered { index })?;
            p = reflect(r, &p);
        }
        Ok(factor)
    }
}

pub fn apply(map: &MobiusMap, x: &ExtendedPoint) -> ExtendedPoint {
    map.apply(x)
}

pub fn inverse(map: &MobiusMap) -> MobiusMap {
    map.inverse()
}

pub fn conformal_factor(map: &MobiusMap, x: &VecN) -> Result<f64, MobiusError> {
    map.conformal_factor(x)
}

/// Returns the cached decomposition, or the reason none exists.
pub fn isometric_decomposition(map: &MobiusMap) -> Result<Decomposition, MobiusError> {
    match &map.decomposition {
        Some(d) => Ok(d.clone()),
        None => compute_decomposition(map),
    }
}

/// Radical inverse in base `p`.
fn radical_inverse(mut i: u64, p: u64) -> f64 {
    let inv = 1.0 / p as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % p) as f64;
        i /= p;
        f *= inv;
    }
    r
}

const HALTON_PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Deterministic Halton probe points in the cube `[-2|b|, 2|b|]^n`,
/// skipping a `|b|·1e-3` neighborhood of `b`.
fn probe_points(b: &VecN, count: usize) -> Vec<VecN> {
    let n = b.dim();
    let scale = b.norm();
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let mut p = VecN::zeros(n);
        for j in 0..n {
            p[j] = (radical_inverse(i, HALTON_PRIMES[j % 8]) * 4.0 - 2.0) * scale;
        }
        i += 1;
        if p.dist(b) > 1e-3 * scale {
            out.push(p);
        }
    }
    out
}

fn compute_decomposition(map: &MobiusMap) -> Result<Decomposition, MobiusError> {
    compute_decomposition_raw(&map.word)
}

fn compute_decomposition_raw(word: &[Reflection]) -> Result<Decomposition, MobiusError> {
    let eval = |x: &ExtendedPoint| word.iter().rev().fold(x.clone(), |p, r| reflect(r, &p));
    let eval_inv = |x: &ExtendedPoint| word.iter().fold(x.clone(), |p, r| reflect(r, &p));
    let factor = |x: &VecN| -> Option<f64> {
        let mut p = ExtendedPoint::Finite(x.clone());
        let mut f = 1.0;
        for r in word.iter().rev() {
            f *= r.factor_at(p.finite()?)?;
            p = reflect(r, &p);
        }
        Some(f)
    };

    let b = match eval_inv(&ExtendedPoint::Infinity) {
        ExtendedPoint::Infinity => return Err(MobiusError::FixesInfinity),
        ExtendedPoint::Finite(b) => b,
    };
    let bnorm = b.norm();
    if !(bnorm > 1e-12) {
        return Err(MobiusError::OriginIsPole);
    }
    let n = b.dim();

    // R² = λ(x)|x − b|² at every probe; take the median and check the spread.
    let probes = probe_points(&b, 32);
    let mut r2s: Vec<f64> = probes
        .iter()
        .filter_map(|x| factor(x).map(|l| l * x.dist_sq(&b)))
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    if r2s.len() < 8 {
        return Err(MobiusError::ValidationFailed(
            "too few usable probe points for the isometric radius".into(),
        ));
    }
    r2s.sort_by(|x, y| x.total_cmp(y));
    let r2 = r2s[r2s.len() / 2];
    let spread = (r2s[r2s.len() - 1] - r2s[0]) / r2;
    if spread > 1e-8 {
        return Err(MobiusError::ValidationFailed(format!(
            "isometric radius inconsistent across probes (relative spread {spread:.3e})"
        )));
    }
    let radius = r2.sqrt();
    let sigma = Reflection::InSphere(Sphere {
        center: b.clone(),
        radius,
    });
    let psi_raw = |y: &VecN| -> Result<VecN, MobiusError> {
        match eval(&reflect(&sigma, &ExtendedPoint::Finite(y.clone()))) {
            ExtendedPoint::Finite(z) => Ok(z),
            ExtendedPoint::Infinity => Err(MobiusError::ValidationFailed(
                "ψ = φ∘σ sent a finite probe to infinity".into(),
            )),
        }
    };

    let t = psi_raw(&VecN::zeros(n))?;
    let step = 0.5 * bnorm;
    let mut lin = DMatrix::zeros(n, n);
    for i in 0..n {
        let e = VecN::unit(n, i);
        let plus = psi_raw(&e.scale(step))?;
        let minus = psi_raw(&e.scale(-step))?;
        let col = (&plus - &minus).scale(0.5 / step);
        for r in 0..n {
            lin[(r, i)] = col[r];
        }
    }
    let raw_defect = crate::geom::orthogonality_defect(&lin);
    if raw_defect > 1e-8 {
        return Err(MobiusError::ValidationFailed(format!(
            "ψ = φ∘σ is not an isometry (orthogonality defect {raw_defect:.3e})"
        )));
    }
    let psi = Isometry::new(nearest_orthogonal(&lin), t)?;

    // φ = ψ∘σ pointwise on the probe set.
    for x in &probes {
        let lhs = eval(&ExtendedPoint::Finite(x.clone()));
        let rhs = match reflect(&sigma, &ExtendedPoint::Finite(x.clone())) {
            ExtendedPoint::Finite(y) => ExtendedPoint::Finite(psi.apply(&y)),
            ExtendedPoint::Infinity => ExtendedPoint::Infinity,
        };
        match (lhs, rhs) {
            (ExtendedPoint::Finite(l), ExtendedPoint::Finite(r)) => {
                let scale = 1.0 + x.norm() + l.norm();
                if l.dist(&r) > 1e-8 * scale {
                    return Err(MobiusError::ValidationFailed(format!(
                        "φ and ψ∘σ differ by {:.3e} at a probe",
                        l.dist(&r)
                    )));
                }
            }
            (ExtendedPoint::Infinity, ExtendedPoint::Infinity) => {}
            _ => {
                return Err(MobiusError::ValidationFailed(
                    "φ and ψ∘σ disagree about infinity".into(),
                ))
            }
        }
    }

    let a = reflection_center_image(&b, radius);
    let direction = psi.apply_linear(&b);
    Ok(Decomposition {
        b,
        radius,
        psi,
        a,
        direction,
    })
}

/// Boundary of `σ(B_r)` for the reflection in `S(b, R)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BallImageBoundary {
    Sphere(Sphere),
    Hyperplane(Hyperplane),
}

/// Closed form for `σ(S_r)`: a sphere when `r ≠ |b|`, otherwise the plane
/// `2|b|² − R² − 2<b, x> = 0`.
pub fn ball_image_reflection(b: &VecN, radius: f64, r: f64) -> BallImageBoundary {
    let b2 = b.norm_sq();
    let r2 = r * r;
    if (r - b2.sqrt()).abs() <= DEGENERATE_RADIUS_REL * b2.sqrt() {
        let bn = b2.sqrt();
        return BallImageBoundary::Hyperplane(Hyperplane {
            unit_normal: b.scale(1.0 / bn),
            offset: (2.0 * b2 - radius * radius) / (2.0 * bn),
        });
    }
    let denom = b2 - r2;
    BallImageBoundary::Sphere(Sphere {
        center: b.scale((b2 - radius * radius - r2) / denom),
        radius: radius * radius * r / denom.abs(),
    })
}

/// Image `φ(B_r)` of the open origin-centered ball.
///
/// For `r > |b|` the ball contains the pole, so the image is the exterior of
/// the returned ball.
#[derive(Debug, Clone, PartialEq)]
pub enum BallImage {
    Ball(Ball),
    HalfSpace(HalfSpace),
    Exterior(Ball),
}

pub fn ball_image(dec: &Decomposition, r: f64) -> BallImage {
    let bnorm = dec.b.norm();
    match ball_image_reflection(&dec.b, dec.radius, r) {
        BallImageBoundary::Sphere(s) => {
            let ball = Ball {
                center: dec.psi.apply(&s.center),
                radius: s.radius,
            };
            if r < bnorm {
                BallImage::Ball(ball)
            } else {
                BallImage::Exterior(ball)
            }
        }
        BallImageBoundary::Hyperplane(h) => {
            let normal = dec.psi.apply_linear(&h.unit_normal);
            let offset = h.offset + normal.dot(&dec.psi.translation);
            BallImage::HalfSpace(HalfSpace {
                unit_normal: normal,
                offset,
            })
        }
    }
}

/// Reflection in `S(a*, sqrt(|a*|² − 1))`, `a* = a/|a|²`; sends `0` to `a`.
pub fn make_sigma_a(a: &VecN) -> Result<MobiusMap, MobiusError> {
    let a2 = a.norm_sq();
    if !(a2 < 1.0) {
        return Err(MobiusError::InvalidPrescribedPoint(format!("|a| = {} is not < 1", a2.sqrt())));
    }
    if !(a2 > 0.0) {
        return Err(MobiusError::InvalidPrescribedPoint("σ_a needs a ≠ 0".into()));
    }
    let star = a.scale(1.0 / a2);
    let radius = (star.norm_sq() - 1.0).sqrt();
    MobiusMap::new(vec![Reflection::InSphere(Sphere::new(star, radius)?)])
}

/// Closed form `φ_a(x) = (|x−a|² a − (1−|a|²)(x−a)) / (1 − 2<a,x> + |a|²|x|²)`.
pub fn phi_a_closed_form(a: &VecN, x: &ExtendedPoint) -> ExtendedPoint {
    let a2 = a.norm_sq();
    match x {
        ExtendedPoint::Infinity => {
            if a2 == 0.0 {
                ExtendedPoint::Infinity
            } else {
                ExtendedPoint::Finite(a.scale(1.0 / a2))
            }
        }
        ExtendedPoint::Finite(x) => {
            let denom = 1.0 - 2.0 * a.dot(x) + a2 * x.norm_sq();
            if denom == 0.0 {
                return ExtendedPoint::Infinity;
            }
            let xa = x - a;
            let num = a.scale(xa.norm_sq()).axpy(-(1.0 - a2), &xa);
            ExtendedPoint::Finite(num.scale(1.0 / denom))
        }
    }
}

/// `φ_a` as the word `J ∘ T_a ∘ D_λ ∘ J ∘ T_a ∘ N`, with `N(x) = −x`,
/// `T_a(y) = y + a`, `J` the unit inversion and `D_λ(y) = (1 − |a|²) y`.
pub fn make_phi_a(a: &VecN) -> Result<MobiusMap, MobiusError> {
    let n = a.dim();
    let a2 = a.norm_sq();
    if !(a2 < 1.0) {
        return Err(MobiusError::InvalidPrescribedPoint(format!("|a| = {} is not < 1", a2.sqrt())));
    }
    let unit_inversion = || Reflection::InSphere(Sphere {
        center: VecN::zeros(n),
        radius: 1.0,
    });
    let translate = |word: &mut Vec<Reflection>| {
        let len = a2.sqrt();
        if len > 0.0 {
            let u = a.scale(1.0 / len);
            word.push(Reflection::InHyperplane(Hyperplane {
                unit_normal: u.clone(),
                offset: 0.5 * len,
            }));
            word.push(Reflection::InHyperplane(Hyperplane {
                unit_normal: u,
                offset: 0.0,
            }));
        }
    };
    // Listed left to right; the rightmost entry acts first.
    let mut word = vec![unit_inversion()];
    translate(&mut word);
    word.push(Reflection::InSphere(Sphere {
        center: VecN::zeros(n),
        radius: (1.0 - a2).sqrt(),
    }));
    word.push(unit_inversion());
    word.push(unit_inversion());
    translate(&mut word);
    for i in 0..n {
        word.push(Reflection::InHyperplane(Hyperplane {
            unit_normal: VecN::unit(n, i),
            offset: 0.0,
        }));
    }
    let map = MobiusMap::new(word)?;

    let scale = 1.0 + a2.sqrt().recip().min(1e6);
    for x in probe_points(&VecN::unit(n, 0), 24) {
        let x = x.scale(0.5);
        let (w, c) = (map.apply_finite(&x), phi_a_closed_form(a, &ExtendedPoint::Finite(x.clone())));
        let ok = match (&w, &c) {
            (ExtendedPoint::Finite(p), ExtendedPoint::Finite(q)) => p.dist(q) <= 1e-9 * (scale + q.norm()),
            (ExtendedPoint::Infinity, ExtendedPoint::Infinity) => true,
            _ => false,
        };
        if !ok {
            return Err(MobiusError::ValidationFailed(
                "φ_a word and closed form disagree".into(),
            ));
        }
    }
    Ok(map)
}
