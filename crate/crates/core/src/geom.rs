//! Dimension-generic Euclidean primitives.
//!
//! Points, spheres, hyperplanes, balls and half-spaces live in `R^n` with `n`
//! chosen at runtime. Vectors are stored inline for `n <= 8`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// Default tolerance for algebraic checks.
pub const ALGEBRAIC_TOL: f64 = 1e-10;
/// Default tolerance for arithmetic identities.
pub const ARITHMETIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("columns are rank deficient (smallest singular value {sigma_min:.3e} <= {tol:.3e})")]
    RankDeficient { sigma_min: f64, tol: f64 },
    #[error("point set is degenerate for a sphere fit (lies near a hyperplane)")]
    Degenerate,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid geometry: {0}")]
    Invalid(String),
}

/// A point or vector of `R^n`.
#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VecN(SmallVec<[f64; 8]>);

impl VecN {
    pub fn zeros(n: usize) -> Self {
        VecN(smallvec::smallvec![0.0; n])
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        VecN(SmallVec::from_slice(xs))
    }

    /// The `i`-th standard basis vector of `R^n`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &VecN) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &VecN) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &VecN) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn scale(&self, s: f64) -> VecN {
        VecN(self.0.iter().map(|x| x * s).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &VecN) -> VecN {
        VecN(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + s * b).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Self {
        VecN::from_slice(v.as_slice())
    }
}

impl fmt::Debug for VecN {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<Vec<f64>> for VecN {
    fn from(v: Vec<f64>) -> Self {
        VecN(SmallVec::from_vec(v))
    }
}

impl<const N: usize> From<[f64; N]> for VecN {
    fn from(v: [f64; N]) -> Self {
        VecN::from_slice(&v)
    }
}

impl Index<usize> for VecN {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for VecN {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add<&VecN> for &VecN {
    type Output = VecN;
    fn add(self, rhs: &VecN) -> VecN {
        VecN(self.0.iter().zip(rhs.0.iter()).map(|(a, b)| a + b).collect())
    }
}

impl Sub<&VecN> for &VecN {
    type Output = VecN;
    fn sub(self, rhs: &VecN) -> VecN {
        VecN(self.0.iter().zip(rhs.0.iter()).map(|(a, b)| a - b).collect())
    }
}

impl Add for VecN {
    type Output = VecN;
    fn add(self, rhs: VecN) -> VecN {
        &self + &rhs
    }
}

impl Sub for VecN {
    type Output = VecN;
    fn sub(self, rhs: VecN) -> VecN {
        &self - &rhs
    }
}

impl AddAssign<&VecN> for VecN {
    fn add_assign(&mut self, rhs: &VecN) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a += b;
        }
    }
}

impl SubAssign<&VecN> for VecN {
    fn sub_assign(&mut self, rhs: &VecN) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a -= b;
        }
    }
}

impl Mul<f64> for &VecN {
    type Output = VecN;
    fn mul(self, s: f64) -> VecN {
        self.scale(s)
    }
}

impl Mul<f64> for VecN {
    type Output = VecN;
    fn mul(self, s: f64) -> VecN {
        self.scale(s)
    }
}

impl Neg for &VecN {
    type Output = VecN;
    fn neg(self) -> VecN {
        self.scale(-1.0)
    }
}

impl Neg for VecN {
    type Output = VecN;
    fn neg(self) -> VecN {
        self.scale(-1.0)
    }
}

/// A point of the one-point compactification `R^n ∪ {∞}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtendedPoint {
    Finite(VecN),
    Infinity,
}

impl ExtendedPoint {
    pub fn finite(&self) -> Option<&VecN> {
        match self {
            ExtendedPoint::Finite(x) => Some(x),
            ExtendedPoint::Infinity => None,
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, ExtendedPoint::Infinity)
    }
}

impl From<VecN> for ExtendedPoint {
    fn from(v: VecN) -> Self {
        ExtendedPoint::Finite(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: VecN,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: VecN, radius: f64) -> Result<Self, GeomError> {
        if !(radius > 0.0 && radius.is_finite()) || !center.is_finite() {
            return Err(GeomError::Invalid(format!(
                "sphere radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Sphere { center, radius })
    }
}

/// The hyperplane `{x : <unit_normal, x> = offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub unit_normal: VecN,
    pub offset: f64,
}

impl Hyperplane {
    /// Builds a hyperplane from any nonzero normal, normalizing it and
    /// rescaling the offset accordingly.
    pub fn new(normal: VecN, offset: f64) -> Result<Self, GeomError> {
        let len = normal.norm();
        if !(len > 0.0 && len.is_finite()) || !offset.is_finite() {
            return Err(GeomError::Invalid("hyperplane normal must be nonzero and finite".into()));
        }
        Ok(Hyperplane {
            unit_normal: normal.scale(1.0 / len),
            offset: offset / len,
        })
    }

    pub fn signed_distance(&self, x: &VecN) -> f64 {
        self.unit_normal.dot(x) - self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: VecN,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, x: &VecN) -> bool {
        x.dist_sq(&self.center) < self.radius * self.radius
    }

    /// True when `self` lies inside `other` (closed containment).
    pub fn is_inside(&self, other: &Ball) -> bool {
        self.center.dist(&other.center) + self.radius <= other.radius
    }
}

/// The open half-space `{x : <unit_normal, x> < offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub unit_normal: VecN,
    pub offset: f64,
}

impl HalfSpace {
    pub fn contains(&self, x: &VecN) -> bool {
        self.unit_normal.dot(x) < self.offset
    }
}

/// A Euclidean isometry `x ↦ linear_part · x + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    pub linear_part: DMatrix<f64>,
    pub translation: VecN,
}

impl Isometry {
    pub fn identity(n: usize) -> Self {
        Isometry {
            linear_part: DMatrix::identity(n, n),
            translation: VecN::zeros(n),
        }
    }

    /// Validates orthogonality of `linear_part` to `1e-12` (scaled by `n`).
    pub fn new(linear_part: DMatrix<f64>, translation: VecN) -> Result<Self, GeomError> {
        let n = translation.dim();
        if linear_part.nrows() != n || linear_part.ncols() != n {
            return Err(GeomError::DimensionMismatch {
                expected: n,
                got: linear_part.nrows(),
            });
        }
        let defect = orthogonality_defect(&linear_part);
        if defect > ARITHMETIC_TOL * n as f64 {
            return Err(GeomError::Invalid(format!(
                "linear part is not orthogonal (defect {defect:.3e})"
            )));
        }
        Ok(Isometry {
            linear_part,
            translation,
        })
    }

    pub fn dim(&self) -> usize {
        self.translation.dim()
    }

    pub fn apply_linear(&self, v: &VecN) -> VecN {
        let n = self.dim();
        let mut out = VecN::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.linear_part[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn apply(&self, x: &VecN) -> VecN {
        let mut y = self.apply_linear(x);
        y += &self.translation;
        y
    }

    pub fn apply_inverse(&self, y: &VecN) -> VecN {
        let n = self.dim();
        let shifted = y - &self.translation;
        let mut out = VecN::zeros(n);
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += self.linear_part[(i, j)] * shifted[i];
            }
            out[j] = acc;
        }
        out
    }

    pub fn inverse(&self) -> Isometry {
        let lt = self.linear_part.transpose();
        let t = VecN::from_dvector(&(-(&lt * self.translation.to_dvector())));
        Isometry {
            linear_part: lt,
            translation: t,
        }
    }

    /// Mirror reflection in a hyperplane, as an isometry.
    pub fn mirror(plane: &Hyperplane) -> Isometry {
        let n = plane.unit_normal.dim();
        let u = plane.unit_normal.to_dvector();
        let linear = DMatrix::identity(n, n) - (&u * u.transpose()) * 2.0;
        Isometry {
            linear_part: linear,
            translation: plane.unit_normal.scale(2.0 * plane.offset),
        }
    }
}

/// `max |AᵀA - I|` entrywise.
pub fn orthogonality_defect(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    let ata = a.transpose() * a;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((ata[(i, j)] - target).abs());
        }
    }
    worst
}

/// Nearest orthogonal matrix (polar factor) of a square matrix.
pub fn nearest_orthogonal(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let vt = svd.v_t.expect("svd computed with v_t");
    u * vt
}

/// An orthonormal basis of a `k`-dimensional subspace of `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    vectors: Vec<VecN>,
}

impl Frame {
    pub fn vectors(&self) -> &[VecN] {
        &self.vectors
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.first().map_or(0, VecN::dim)
    }

    /// Tangential part of `x`.
    pub fn tangential(&self, x: &VecN) -> VecN {
        let mut t = VecN::zeros(x.dim());
        for v in &self.vectors {
            t = t.axpy(v.dot(x), v);
        }
        t
    }

    /// `|x^⊤|²` without forming the projection.
    pub fn tangential_norm_sq(&self, x: &VecN) -> f64 {
        self.vectors.iter().map(|v| v.dot(x).powi(2)).sum()
    }

    /// `|x^⊥|²`, computed as `|x|² - |x^⊤|²` clamped at zero.
    pub fn normal_norm_sq(&self, x: &VecN) -> f64 {
        let nn = x.norm_sq() - self.tangential_norm_sq(x);
        if nn > 1e-13 * x.norm_sq() {
            nn
        } else {
            // cancellation regime: recompute explicitly
            (x - &self.tangential(x)).norm_sq()
        }
    }
}

/// Largest/smallest singular values of a set of columns via its Gram matrix.
fn smallest_singular_value(columns: &[VecN]) -> f64 {
    let k = columns.len();
    let mut gram = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let g = columns[i].dot(&columns[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let min_eig = match k {
        0 => return 0.0,
        1 => gram[(0, 0)],
        2 => {
            let (a, b, d) = (gram[(0, 0)], gram[(0, 1)], gram[(1, 1)]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            let hi = mean + rad;
            // det / hi avoids cancellation in mean - rad
            if hi > 0.0 {
                (a * d - b * b) / hi
            } else {
                0.0
            }
        }
        _ => gram.symmetric_eigenvalues().min(),
    };
    min_eig.max(0.0).sqrt()
}

/// Orthonormalizes `columns` with twice-iterated modified Gram–Schmidt.
///
/// The first frame vector is oriented so its first nonzero coordinate is
/// nonnegative.
pub fn orthonormal_frame(columns: &[VecN], tol: f64) -> Result<Frame, GeomError> {
    if columns.is_empty() {
        return Err(GeomError::RankDeficient { sigma_min: 0.0, tol });
    }
    let n = columns[0].dim();
    if let Some(bad) = columns.iter().find(|c| c.dim() != n) {
        return Err(GeomError::DimensionMismatch {
            expected: n,
            got: bad.dim(),
        });
    }
    let sigma_min = smallest_singular_value(columns);
    if !(sigma_min > tol) {
        return Err(GeomError::RankDeficient { sigma_min, tol });
    }
    let mut vectors: Vec<VecN> = Vec::with_capacity(columns.len());
    for c in columns {
        let mut w = c.clone();
        for _pass in 0..2 {
            for q in &vectors {
                let p = q.dot(&w);
                w = w.axpy(-p, q);
            }
        }
        let len = w.norm();
        if !(len > 0.0) {
            return Err(GeomError::RankDeficient { sigma_min, tol });
        }
        vectors.push(w.scale(1.0 / len));
    }
    let first_nz = vectors[0].iter().copied().find(|x| x.abs() > 1e-14);
    if first_nz.is_some_and(|c| c < 0.0) {
        vectors[0] = -&vectors[0];
    }
    Ok(Frame { vectors })
}

/// Splits `x` into its tangential and normal parts relative to `frame`.
pub fn project(x: &VecN, frame: &Frame) -> (VecN, VecN) {
    let t = frame.tangential(x);
    let nrm = x - &t;
    (t, nrm)
}

/// Least-squares sphere through `points` and the max radial residual.
///
/// Uses the algebraic fit `|p|² = 2<c,p> + (r² - |c|²)` solved by SVD.
pub fn fit_sphere(points: &[VecN]) -> Result<(Sphere, f64), GeomError> {
    let m = points.len();
    if m == 0 {
        return Err(GeomError::Degenerate);
    }
    let n = points[0].dim();
    if m < n + 2 {
        return Err(GeomError::Degenerate);
    }
    // Center the data for conditioning.
    let mut centroid = VecN::zeros(n);
    for p in points {
        centroid += p;
    }
    centroid = centroid.scale(1.0 / m as f64);
    let scale = points
        .iter()
        .map(|p| p.dist(&centroid))
        .fold(0.0_f64, f64::max);
    if !(scale > 0.0) {
        return Err(GeomError::Degenerate);
    }
    let mut a = DMatrix::zeros(m, n + 1);
    let mut rhs = DVector::zeros(m);
    for (i, p) in points.iter().enumerate() {
        let q = (p - &centroid).scale(1.0 / scale);
        for j in 0..n {
            a[(i, j)] = 2.0 * q[j];
        }
        a[(i, n)] = 1.0;
        rhs[i] = q.norm_sq();
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(GeomError::Degenerate);
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|_| GeomError::Degenerate)?;
    let c_local = VecN::from_slice(&sol.as_slice()[..n]);
    let r2 = sol[n] + c_local.norm_sq();
    if !(r2 > 0.0) {
        return Err(GeomError::Degenerate);
    }
    let center = centroid.axpy(scale, &c_local);
    let radius = r2.sqrt() * scale;
    let residual = points
        .iter()
        .map(|p| (p.dist(&center) - radius).abs())
        .fold(0.0_f64, f64::max);
    Ok((Sphere { center, radius }, residual))
}

/// Volume of the unit ball in `R^k`.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / k as f64 * unit_ball_volume(k - 2),
    }
}
