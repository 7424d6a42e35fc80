//! Radii, rigid frames and membership-testable regions.
//!
//! The sphere pair `E(r; rho)`, `F(r; rho)` consists of two thin shells: `E`
//! hugs the unit sphere centred at `-e_d` near the origin, with window
//! `|x_i| < r_i`; `F` hugs the unit sphere centred at the origin near
//! `-e_d`, with the reciprocal window `|y_i| < rho / r_i`. The paraboloid
//! pair is the analogous construction for `P = {x_d = |x'|^2}`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Hits, Stream};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;

/// The three admissibility conditions on `(r, rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// `rho <= r_i <= 1`
    Small,
    /// `r_i <= r_{i+1}`
    Increasing,
    /// `r_1 >= rho^{1/2} r_{d-1}`
    Nondegenerate,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::Small => "smallness (rho <= r_i <= 1)",
            Condition::Increasing => "monotonicity (r_i <= r_{i+1})",
            Condition::Nondegenerate => "nondegeneracy (r_1 >= rho^(1/2) r_{d-1})",
        };
        f.write_str(s)
    }
}

/// Window radii `r_1..r_{d-1}` and thickness `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    r: Vec<f64>,
    rho: f64,
    violation: Option<Condition>,
}

impl Radii {
    /// Admissible radii only; the error names the first violated condition.
    pub fn new(r: Vec<f64>, rho: f64) -> Result<Self> {
        let rd = Self::relaxed(r, rho)?;
        match rd.violation {
            None => Ok(rd),
            Some(condition) => Err(Error::Inadmissible {
                condition,
                detail: rd.violation_detail(condition),
            }),
        }
    }

    /// Any finite positive radii. Violated conditions are recorded, not
    /// rejected; used for degeneracy probes and paraboloid pairs.
    pub fn relaxed(r: Vec<f64>, rho: f64) -> Result<Self> {
        if r.is_empty() || r.len() + 1 > MAX_DIM {
            return Err(Error::Validation(format!(
                "need 1..={} window radii, got {}",
                MAX_DIM - 1,
                r.len()
            )));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Validation(format!("rho must be finite and positive, got {rho}")));
        }
        if let Some(bad) = r.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Validation(format!("radii must be finite and positive, got {bad}")));
        }
        let violation = first_violation(&r, rho);
        Ok(Self { r, rho, violation })
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.r.len() + 1
    }

    pub fn is_admissible(&self) -> bool {
        self.violation.is_none()
    }

    pub fn violation(&self) -> Option<Condition> {
        self.violation
    }

    /// Reciprocal window `rho / r_i` of the `F` set.
    pub fn dual(&self) -> Vec<f64> {
        self.r.iter().map(|r| self.rho / r).collect()
    }

    /// Radii with every entry (and rho) multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::relaxed(self.r.iter().map(|r| c * r).collect(), c * self.rho)
    }

    /// Same windows, different thickness.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::relaxed(self.r.clone(), rho)
    }

    /// Split index `k` with `r_k <= rho^{1/2} <= r_{k+1}`: the number of
    /// radii not exceeding `rho^{1/2}`.
    pub fn split_index(&self) -> usize {
        let s = self.rho.sqrt();
        self.r.iter().filter(|r| **r <= s).count()
    }

    fn violation_detail(&self, c: Condition) -> String {
        match c {
            Condition::Small => format!("rho = {}, r = {:?}", self.rho, self.r),
            Condition::Increasing => format!("r = {:?} is not nondecreasing", self.r),
            Condition::Nondegenerate => {
                let lhs = self.r[0];
                let rhs = self.rho.sqrt() * self.r[self.r.len() - 1];
                format!("r_1 = {lhs} < rho^(1/2) r_(d-1) = {rhs}")
            }
        }
    }
}

fn first_violation(r: &[f64], rho: f64) -> Option<Condition> {
    if r.iter().any(|&v| v < rho || v > 1.0) {
        return Some(Condition::Small);
    }
    if r.windows(2).any(|w| w[0] > w[1]) {
        return Some(Condition::Increasing);
    }
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    let max = r.iter().copied().fold(0.0, f64::max);
    if min < rho.sqrt() * max {
        return Some(Condition::Nondegenerate);
    }
    None
}

/// Check `(r, rho)` for dimension `d` and all three conditions.
pub fn validate_radii(r: &[f64], rho: f64, d: usize) -> Result<Radii> {
    if d < 2 {
        return Err(Error::Validation(format!("dimension must be at least 2, got {d}")));
    }
    if r.len() != d - 1 {
        return Err(Error::Shape { expected: d - 1, got: r.len() });
    }
    Radii::new(r.to_vec(), rho)
}

/// Rigid motion `x -> R x + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

const ORTHO_TOL: f64 = 1e-12;
const REORTHO_DRIFT: f64 = 1e-10;

impl Frame {
    pub fn identity(d: usize) -> Self {
        Self {
            rotation: DMatrix::identity(d, d),
            translation: DVector::zeros(d),
        }
    }

    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let d = rotation.nrows();
        if rotation.ncols() != d || translation.len() != d {
            return Err(Error::Shape { expected: d, got: translation.len() });
        }
        let drift = orthogonality_drift(&rotation);
        if drift > ORTHO_TOL {
            return Err(Error::Validation(format!("rotation is not orthogonal (drift {drift:e})")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn translation_only(t: &[f64]) -> Self {
        let d = t.len();
        Self {
            rotation: DMatrix::identity(d, d),
            translation: DVector::from_column_slice(t),
        }
    }

    /// Haar-random rotation with a translation drawn from `[-spread, spread]^d`.
    pub fn random(d: usize, spread: f64, stream: &mut Stream) -> Self {
        let g = DMatrix::from_fn(d, d, |_, _| stream.normal());
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let t = DVector::from_fn(d, |_, _| stream.uniform_in(-spread, spread));
        Self { rotation: orthonormalize(&q), translation: t }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Frame) -> Frame {
        let mut rotation = &self.rotation * &inner.rotation;
        if orthogonality_drift(&rotation) > REORTHO_DRIFT {
            rotation = orthonormalize(&rotation);
        }
        let translation = &self.rotation * &inner.translation + &self.translation;
        Frame { rotation, translation }
    }

    pub fn inverse(&self) -> Frame {
        let rt = self.rotation.transpose();
        let translation = -(&rt * &self.translation);
        Frame { rotation: rt, translation }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = self.translation[i];
            for (j, xj) in x.iter().enumerate().take(d) {
                acc += self.rotation[(i, j)] * xj;
            }
            *o = acc;
        }
    }

    /// `R^T (x - t)`.
    pub fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.rotation[(j, i)] * (x[j] - self.translation[j]);
            }
            *o = acc;
        }
    }

    pub fn is_identity(&self) -> bool {
        let d = self.dim();
        self.translation.iter().all(|t| *t == 0.0) && self.rotation == DMatrix::identity(d, d)
    }
}

fn orthogonality_drift(q: &DMatrix<f64>) -> f64 {
    let d = q.nrows();
    (q.transpose() * q - DMatrix::identity(d, d)).amax()
}

/// Nearest orthogonal matrix via modified Gram-Schmidt on the columns.
fn orthonormalize(q: &DMatrix<f64>) -> DMatrix<f64> {
    let d = q.nrows();
    let mut out = q.clone();
    for j in 0..d {
        for k in 0..j {
            let proj = out.column(j).dot(&out.column(k));
            let ck = out.column(k).clone_owned();
            out.column_mut(j).axpy(-proj, &ck, 1.0);
        }
        let n = out.column(j).norm();
        out.column_mut(j).unscale_mut(n);
    }
    out
}

/// Rotation in the plane spanned by unit vectors `a` and `b` taking `a` to
/// `b` and fixing their orthogonal complement. Requires `a != -b`.
pub fn rotation_between(a: &[f64], b: &[f64]) -> Result<DMatrix<f64>> {
    let d = a.len();
    let a = DVector::from_column_slice(a).normalize();
    let b = DVector::from_column_slice(b).normalize();
    let c = a.dot(&b);
    if c <= -1.0 + 1e-12 {
        return Err(Error::Domain("rotation between antipodal vectors is not unique".into()));
    }
    let k = &b * a.transpose() - &a * b.transpose();
    let r = DMatrix::identity(d, d) + &k + (&k * &k) / (1.0 + c);
    Ok(orthonormalize(&r))
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| !(h > l))
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn intersect(&self, other: &BBox) -> BBox {
        BBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect(),
        }
    }

    /// Minkowski difference `self - other = {a - b}`.
    pub fn minus(&self, other: &BBox) -> BBox {
        BBox {
            lo: self.lo.iter().zip(&other.hi).map(|(a, b)| a - b).collect(),
            hi: self.hi.iter().zip(&other.lo).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    #[inline]
    pub fn sample_into(&self, stream: &mut Stream, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = stream.uniform_in(self.lo[i], self.hi[i]);
        }
    }
}

/// Centres of a paraboloid pair; `x0 - y0` must lie on `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParabParams {
    pub radii: Radii,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
}

/// A membership-testable subset of `R^d` with a bounding box.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    SphereE(Radii),
    SphereF(Radii),
    ParabE(ParabParams),
    ParabF(ParabParams),
    Box(BBox),
    Ball { center: Vec<f64>, radius: f64 },
    /// `frame(base)`: `x` is a member iff `frame^{-1}(x)` is in `base`.
    Framed(Box<Region>, Frame),
    Intersection(Vec<Region>),
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::SphereE(rd) | Region::SphereF(rd) => rd.dim(),
            Region::ParabE(p) | Region::ParabF(p) => p.radii.dim(),
            Region::Box(b) => b.dim(),
            Region::Ball { center, .. } => center.len(),
            Region::Framed(_, f) => f.dim(),
            Region::Intersection(parts) => parts.first().map_or(0, Region::dim),
        }
    }

    pub fn framed(self, frame: Frame) -> Region {
        Region::Framed(Box::new(self), frame)
    }

    pub fn intersect(self, other: Region) -> Region {
        match self {
            Region::Intersection(mut parts) => {
                parts.push(other);
                Region::Intersection(parts)
            }
            r => Region::Intersection(vec![r, other]),
        }
    }

    /// Pure, deterministic membership with strict defining inequalities.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::SphereE(rd) => {
                let d = rd.dim();
                if x[d - 1] <= -1.0 {
                    return false;
                }
                if rd.r.iter().zip(x).any(|(r, v)| v.abs() >= *r) {
                    return false;
                }
                let mut s = 0.0;
                for v in &x[..d - 1] {
                    s += v * v;
                }
                let z = x[d - 1] + 1.0;
                ((s + z * z).sqrt() - 1.0).abs() < rd.rho
            }
            Region::SphereF(rd) => {
                let d = rd.dim();
                if x[d - 1] >= 0.0 {
                    return false;
                }
                if rd.r.iter().zip(x).any(|(r, v)| v.abs() >= rd.rho / r) {
                    return false;
                }
                (norm(&x[..d]) - 1.0).abs() < rd.rho
            }
            Region::ParabE(p) => {
                let d = p.radii.dim();
                let mut q = 0.0;
                for i in 0..d - 1 {
                    if (x[i] - p.x0[i]).abs() >= p.radii.r[i] {
                        return false;
                    }
                    let u = x[i] - p.y0[i];
                    q += u * u;
                }
                (x[d - 1] - p.y0[d - 1] - q).abs() < p.radii.rho
            }
            Region::ParabF(p) => {
                let d = p.radii.dim();
                let rho = p.radii.rho;
                let mut q = 0.0;
                for i in 0..d - 1 {
                    if (x[i] - p.y0[i]).abs() >= rho / p.radii.r[i] {
                        return false;
                    }
                    let u = x[i] - p.x0[i];
                    q += u * u;
                }
                (x[d - 1] - p.x0[d - 1] + q).abs() < rho
            }
            Region::Box(b) => x.iter().zip(b.lo.iter().zip(&b.hi)).all(|(v, (l, h))| v > l && v < h),
            Region::Ball { center, radius } => {
                let s: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                s.sqrt() < *radius
            }
            Region::Framed(base, frame) => {
                let mut buf = [0.0; MAX_DIM];
                let d = frame.dim();
                frame.apply_inverse_into(x, &mut buf[..d]);
                base.contains(&buf[..d])
            }
            Region::Intersection(parts) => parts.iter().all(|p| p.contains(x)),
        }
    }

    /// Finite axis-aligned box containing the region.
    pub fn bounding_box(&self) -> BBox {
        match self {
            Region::SphereE(rd) => {
                let d = rd.dim();
                let rho = rd.rho;
                let r2: f64 = rd.r.iter().map(|r| r * r).sum();
                let mut lo: Vec<f64> = rd.r.iter().map(|r| -r).collect();
                let mut hi = rd.r.clone();
                lo.push(((1.0 - rho).max(0.0).powi(2) - r2).max(0.0).sqrt() - 1.0);
                hi.push(rho);
                debug_assert_eq!(lo.len(), d);
                BBox { lo, hi }
            }
            Region::SphereF(rd) => {
                let rho = rd.rho;
                let w = rd.dual();
                let w2: f64 = w.iter().map(|v| v * v).sum();
                let mut lo: Vec<f64> = w.iter().map(|v| -v).collect();
                let mut hi = w;
                lo.push(-(1.0 + rho));
                hi.push(-((1.0 - rho).max(0.0).powi(2) - w2).max(0.0).sqrt());
                BBox { lo, hi }
            }
            Region::ParabE(p) => {
                let d = p.radii.dim();
                let (mut lo, mut hi) = (Vec::with_capacity(d), Vec::with_capacity(d));
                let (mut qmin, mut qmax) = (0.0, 0.0);
                for i in 0..d - 1 {
                    let (a, b) = (p.x0[i] - p.radii.r[i], p.x0[i] + p.radii.r[i]);
                    lo.push(a);
                    hi.push(b);
                    let (smin, smax) = square_range(a - p.y0[i], b - p.y0[i]);
                    qmin += smin;
                    qmax += smax;
                }
                lo.push(p.y0[d - 1] + qmin - p.radii.rho);
                hi.push(p.y0[d - 1] + qmax + p.radii.rho);
                BBox { lo, hi }
            }
            Region::ParabF(p) => {
                let d = p.radii.dim();
                let rho = p.radii.rho;
                let (mut lo, mut hi) = (Vec::with_capacity(d), Vec::with_capacity(d));
                let (mut qmin, mut qmax) = (0.0, 0.0);
                for i in 0..d - 1 {
                    let w = rho / p.radii.r[i];
                    let (a, b) = (p.y0[i] - w, p.y0[i] + w);
                    lo.push(a);
                    hi.push(b);
                    let (smin, smax) = square_range(a - p.x0[i], b - p.x0[i]);
                    qmin += smin;
                    qmax += smax;
                }
                lo.push(p.x0[d - 1] - qmax - rho);
                hi.push(p.x0[d - 1] - qmin + rho);
                BBox { lo, hi }
            }
            Region::Box(b) => b.clone(),
            Region::Ball { center, radius } => BBox {
                lo: center.iter().map(|c| c - radius).collect(),
                hi: center.iter().map(|c| c + radius).collect(),
            },
            Region::Framed(base, frame) => {
                let b = base.bounding_box();
                let d = b.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                let mut corner = vec![0.0; d];
                let mut image = vec![0.0; d];
                for mask in 0..(1usize << d) {
                    for (i, c) in corner.iter_mut().enumerate() {
                        *c = if mask >> i & 1 == 1 { b.hi[i] } else { b.lo[i] };
                    }
                    frame.apply_into(&corner, &mut image);
                    for i in 0..d {
                        lo[i] = lo[i].min(image[i]);
                        hi[i] = hi[i].max(image[i]);
                    }
                }
                BBox { lo, hi }
            }
            Region::Intersection(parts) => {
                let mut it = parts.iter().map(Region::bounding_box);
                let first = it.next().expect("intersection of no regions");
                it.fold(first, |acc, b| acc.intersect(&b))
            }
        }
    }

    /// Rejection-sample a member point from the bounding box.
    pub fn sample_member(&self, stream: &mut Stream, max_tries: usize) -> Option<Vec<f64>> {
        let b = self.bounding_box();
        if b.is_empty() {
            return None;
        }
        let mut x = vec![0.0; b.dim()];
        for _ in 0..max_tries {
            b.sample_into(stream, &mut x);
            if self.contains(&x) {
                return Some(x);
            }
        }
        None
    }
}

fn square_range(a: f64, b: f64) -> (f64, f64) {
    let max = (a * a).max(b * b);
    let min = if a <= 0.0 && b >= 0.0 { 0.0 } else { (a * a).min(b * b) };
    (min, max)
}

/// `(R E(r; rho) + t, R F(r; rho) + t)` for any valid (possibly relaxed) radii.
pub fn make_sphere_pair(rd: &Radii, frame: &Frame) -> Result<(Region, Region)> {
    if frame.dim() != rd.dim() {
        return Err(Error::Shape { expected: rd.dim(), got: frame.dim() });
    }
    Ok((
        Region::SphereE(rd.clone()).framed(frame.clone()),
        Region::SphereF(rd.clone()).framed(frame.clone()),
    ))
}

/// Tolerance for `x0 - y0` lying on the paraboloid.
pub const PARAB_TOL: f64 = 1e-9;

/// `(E_P(x0, y0, r, rho), F_P(x0, y0, r, rho))`; any positive radii.
pub fn make_parab_pair(rd: &Radii, x0: &[f64], y0: &[f64]) -> Result<(Region, Region)> {
    let d = rd.dim();
    if x0.len() != d || y0.len() != d {
        return Err(Error::Shape { expected: d, got: x0.len().min(y0.len()) });
    }
    let q: f64 = (0..d - 1).map(|i| (x0[i] - y0[i]).powi(2)).sum();
    let off = (x0[d - 1] - y0[d - 1] - q).abs();
    if off > PARAB_TOL {
        return Err(Error::Precondition(format!("x0 - y0 is {off:e} off the paraboloid")));
    }
    let p = ParabParams { radii: rd.clone(), x0: x0.to_vec(), y0: y0.to_vec() };
    Ok((Region::ParabE(p.clone()), Region::ParabF(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecialKind {
    /// `r_i = rho`
    Ball,
    /// `r_i = rho^{1/2}`
    Knapp,
}

pub fn special_radii(kind: SpecialKind, rho: f64, d: usize) -> Result<Radii> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(2..=MAX_DIM).contains(&d) {
        return Err(Error::Validation(format!("unsupported dimension {d}")));
    }
    let r = match kind {
        SpecialKind::Ball => rho,
        SpecialKind::Knapp => rho.sqrt(),
    };
    Radii::new(vec![r; d - 1], rho)
}

pub fn special_pair(kind: SpecialKind, rho: f64, d: usize, frame: &Frame) -> Result<(Region, Region)> {
    make_sphere_pair(&special_radii(kind, rho, d)?, frame)
}

/// Hit-or-miss estimate of a Lebesgue measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

/// Unbiased hit-or-miss measure over the bounding box.
pub fn measure(region: &Region, n: usize, seed: u64) -> Result<MeasureEstimate> {
    if n == 0 {
        return Err(Error::Parameter("measure needs at least one sample".into()));
    }
    let b = region.bounding_box();
    let vol = b.volume();
    if vol == 0.0 {
        return Ok(MeasureEstimate { value: 0.0, std_error: 0.0, n_samples: n as u64, seed });
    }
    let d = b.dim();
    let hits: Hits = rng::run_blocks(seed, rng::label("measure"), n, |s, count| {
        let mut x = [0.0; MAX_DIM];
        let mut h = Hits::default();
        for _ in 0..count {
            b.sample_into(s, &mut x[..d]);
            h.n += 1;
            if region.contains(&x[..d]) {
                h.hits += 1;
            }
        }
        h
    });
    let p = hits.hits as f64 / hits.n as f64;
    Ok(MeasureEstimate {
        value: vol * p,
        std_error: vol * (p * (1.0 - p) / hits.n as f64).sqrt(),
        n_samples: hits.n,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Text records: one line per region, nested regions in braces, every real
// printed with 17 significant digits.

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(",")
}

impl Region {
    pub fn to_record(&self) -> String {
        let d = self.dim();
        match self {
            Region::SphereE(rd) | Region::SphereF(rd) => {
                let kind = if matches!(self, Region::SphereE(_)) { "sphere_e" } else { "sphere_f" };
                format!("{kind} d={d} rho={} r={}", fmt_real(rd.rho), fmt_list(&rd.r))
            }
            Region::ParabE(p) | Region::ParabF(p) => {
                let kind = if matches!(self, Region::ParabE(_)) { "parab_e" } else { "parab_f" };
                format!(
                    "{kind} d={d} rho={} r={} x0={} y0={}",
                    fmt_real(p.radii.rho),
                    fmt_list(&p.radii.r),
                    fmt_list(&p.x0),
                    fmt_list(&p.y0)
                )
            }
            Region::Box(b) => format!("box d={d} lo={} hi={}", fmt_list(&b.lo), fmt_list(&b.hi)),
            Region::Ball { center, radius } => {
                format!("ball d={d} center={} radius={}", fmt_list(center), fmt_real(*radius))
            }
            Region::Framed(base, f) => {
                let rot: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| f.rotation[(i, j)]).collect();
                format!(
                    "framed d={d} rotation={} translation={} {{ {} }}",
                    fmt_list(&rot),
                    fmt_list(f.translation.as_slice()),
                    base.to_record()
                )
            }
            Region::Intersection(parts) => {
                let inner: Vec<String> = parts.iter().map(|p| format!("{{ {} }}", p.to_record())).collect();
                format!("intersection d={d} {}", inner.join(" "))
            }
        }
    }

    pub fn from_record(s: &str) -> Result<Region> {
        let tokens = tokenize(s);
        let mut pos = 0;
        let r = parse_region(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Parse(format!("trailing input after token {pos}")));
        }
        Ok(r)
    }
}

fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '{' | '}' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
        .collect()
}

fn parse_nested(tokens: &[String], pos: &mut usize, kind: &str) -> Result<Region> {
    if tokens.get(*pos).map(String::as_str) != Some("{") {
        return Err(Error::Parse(format!("{kind}: expected '{{'")));
    }
    *pos += 1;
    let r = parse_region(tokens, pos)?;
    if tokens.get(*pos).map(String::as_str) != Some("}") {
        return Err(Error::Parse(format!("{kind}: expected '}}'")));
    }
    *pos += 1;
    Ok(r)
}

fn parse_region(tokens: &[String], pos: &mut usize) -> Result<Region> {
    let kind = tokens.get(*pos).ok_or_else(|| Error::Parse("unexpected end of record".into()))?.clone();
    *pos += 1;
    let mut fields = std::collections::BTreeMap::new();
    while let Some(t) = tokens.get(*pos) {
        match t.split_once('=') {
            Some((k, v)) => {
                fields.insert(k.to_string(), v.to_string());
                *pos += 1;
            }
            None => break,
        }
    }
    let field = |k: &str| fields.get(k).ok_or_else(|| Error::Parse(format!("{kind}: missing field {k}")));
    let d: usize = field("d")?.parse().map_err(|e| Error::Parse(format!("d: {e}")))?;
    let region = match kind.as_str() {
        "sphere_e" | "sphere_f" => {
            let rd = Radii::relaxed(parse_list(field("r")?)?, field("rho")?.parse().map_err(|e| Error::Parse(format!("rho: {e}")))?)?;
            if kind == "sphere_e" { Region::SphereE(rd) } else { Region::SphereF(rd) }
        }
        "parab_e" | "parab_f" => {
            let rd = Radii::relaxed(parse_list(field("r")?)?, field("rho")?.parse().map_err(|e| Error::Parse(format!("rho: {e}")))?)?;
            let (e, f) = make_parab_pair(&rd, &parse_list(field("x0")?)?, &parse_list(field("y0")?)?)?;
            if kind == "parab_e" { e } else { f }
        }
        "box" => Region::Box(BBox { lo: parse_list(field("lo")?)?, hi: parse_list(field("hi")?)? }),
        "ball" => Region::Ball {
            center: parse_list(field("center")?)?,
            radius: field("radius")?.parse().map_err(|e| Error::Parse(format!("radius: {e}")))?,
        },
        "framed" => {
            let rot = parse_list(field("rotation")?)?;
            let t = parse_list(field("translation")?)?;
            if rot.len() != d * d {
                return Err(Error::Shape { expected: d * d, got: rot.len() });
            }
            let frame = Frame::new(DMatrix::from_row_slice(d, d, &rot), DVector::from_vec(t))?;
            parse_nested(tokens, pos, &kind)?.framed(frame)
        }
        "intersection" => {
            let mut parts = Vec::new();
            while tokens.get(*pos).map(String::as_str) == Some("{") {
                parts.push(parse_nested(tokens, pos, &kind)?);
            }
            if parts.is_empty() {
                return Err(Error::Parse("intersection: no parts".into()));
            }
            Region::Intersection(parts)
        }
        other => return Err(Error::Parse(format!("unknown region kind {other:?}"))),
    };
    if region.dim() != d {
        return Err(Error::Shape { expected: d, got: region.dim() });
    }
    Ok(region)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_e_by_hand(x: &[f64], r: &[f64], rho: f64) -> bool {
        let d = x.len();
        let s: f64 = x[..d - 1].iter().map(|v| v * v).sum::<f64>() + (x[d - 1] + 1.0).powi(2);
        r.iter().zip(x).all(|(r, v)| v.abs() < *r) && (s.sqrt() - 1.0).abs() < rho && x[d - 1] > -1.0
    }

    #[test]
    fn validate_examples() {
        let rd = validate_radii(&[0.1, 0.2], 0.05, 3).unwrap();
        assert!(rd.is_admissible());
        match validate_radii(&[0.05, 0.5], 0.04, 3) {
            Err(Error::Inadmissible { condition, .. }) => assert_eq!(condition, Condition::Nondegenerate),
            other => panic!("{other:?}"),
        }
        assert!(matches!(validate_radii(&[0.1], 0.05, 3), Err(Error::Shape { expected: 2, got: 1 })));
        assert!(matches!(validate_radii(&[0.1, f64::NAN], 0.05, 3), Err(Error::Validation(_))));
        assert!(matches!(validate_radii(&[0.1, -0.2], 0.05, 3), Err(Error::Validation(_))));
        match validate_radii(&[0.2, 0.1], 0.01, 3) {
            Err(Error::Inadmissible { condition, .. }) => assert_eq!(condition, Condition::Increasing),
            other => panic!("{other:?}"),
        }
        match validate_radii(&[0.01, 0.1], 0.05, 3) {
            Err(Error::Inadmissible { condition, .. }) => assert_eq!(condition, Condition::Small),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relaxed_records_violation() {
        let rho: f64 = 1.0 / 64.0;
        let rd = Radii::relaxed(vec![rho.powf(0.9), rho.powf(0.1)], rho).unwrap();
        assert_eq!(rd.violation(), Some(Condition::Nondegenerate));
        assert!(!rd.is_admissible());
        assert_eq!(rd.split_index(), 1);
    }

    #[test]
    fn pole_points() {
        let rd = Radii::new(vec![0.1, 0.2], 0.05).unwrap();
        let (e, f) = make_sphere_pair(&rd, &Frame::identity(3)).unwrap();
        assert!(e.contains(&[0.0, 0.0, 0.0]));
        assert!(f.contains(&[0.0, 0.0, -1.0]));
        assert!(!e.contains(&[0.0, 0.0, -1.0]));
    }

    #[test]
    fn d2_point_membership_by_hand() {
        // |sqrt(0.04 + 0.98^2) - 1| ~ 2e-4 < 1/16
        let rd = Radii::new(vec![0.25], 1.0 / 16.0).unwrap();
        let x = [0.2, -0.02];
        assert!(in_e_by_hand(&x, rd.r(), rd.rho()));
        assert!(Region::SphereE(rd).contains(&x));
    }

    #[test]
    fn parab_examples() {
        let rd = Radii::relaxed(vec![1.0, 1.0], 0.1).unwrap();
        let (e, f) = make_parab_pair(&rd, &[0.0; 3], &[0.0; 3]).unwrap();
        assert!(e.contains(&[0.0; 3]) && f.contains(&[0.0; 3]));
        assert!(e.contains(&[0.5, 0.5, 0.45]));
        assert!(matches!(
            make_parab_pair(&rd, &[0.0, 0.0, 1.0], &[0.0; 3]),
            Err(Error::Precondition(_))
        ));
        let (e2, _) = make_parab_pair(&rd, &[1.0, 0.0, 1.0], &[0.0; 3]).unwrap();
        assert!(e2.contains(&[1.0, 0.0, 1.0]));
    }

    #[test]
    fn degenerate_radii_sphere_vs_paraboloid() {
        let rho: f64 = 0.01;
        let r = vec![rho.powf(0.9), rho.powf(0.1)];
        assert!(validate_radii(&r, rho, 3).is_err());
        let rd = Radii::relaxed(r, rho).unwrap();
        assert!(make_parab_pair(&rd, &[0.0; 3], &[0.0; 3]).is_ok());
    }

    #[test]
    fn special_pairs() {
        let b = special_radii(SpecialKind::Ball, 0.1, 3).unwrap();
        assert_eq!(b.r(), &[0.1, 0.1]);
        let k = special_radii(SpecialKind::Knapp, 0.04, 3).unwrap();
        assert!((k.r()[0] - 0.2).abs() < 1e-15 && k.is_admissible());
        assert!(special_radii(SpecialKind::Ball, 1.0, 3).is_err());
        assert!(special_radii(SpecialKind::Knapp, 0.0, 3).is_err());
        for i in 1..100 {
            let rho = i as f64 / 100.0;
            for d in 2..=4 {
                assert!(special_radii(SpecialKind::Ball, rho, d).unwrap().is_admissible());
                assert!(special_radii(SpecialKind::Knapp, rho, d).unwrap().is_admissible());
            }
        }
    }

    #[test]
    fn knapp_contains_shrunk_box() {
        let rho: f64 = 0.01;
        let (e, _) = special_pair(SpecialKind::Knapp, rho, 3, &Frame::identity(3)).unwrap();
        let mut s = Stream::new(3, 0, 0);
        let h = rho.sqrt() / 4.0;
        for _ in 0..10_000 {
            let x = [s.uniform_in(-h, h), s.uniform_in(-h, h), s.uniform_in(-rho / 4.0, rho / 4.0)];
            assert!(e.contains(&x), "{x:?}");
        }
    }

    #[test]
    fn box_measure_is_exact() {
        let b = Region::Box(BBox { lo: vec![0.0; 3], hi: vec![1.0; 3] });
        let m = measure(&b, 10_000, 1).unwrap();
        assert_eq!(m.value, 1.0);
        assert_eq!(m.std_error, 0.0);
        let empty = Region::Box(BBox { lo: vec![0.0; 2], hi: vec![0.0, 1.0] });
        assert_eq!(measure(&empty, 10, 1).unwrap().value, 0.0);
        assert!(measure(&b, 0, 1).is_err());
    }

    #[test]
    fn members_lie_in_bounding_box() {
        let rd = Radii::new(vec![0.1, 0.3], 0.02).unwrap();
        let mut s = Stream::new(5, 0, 0);
        let frame = Frame::random(3, 0.5, &mut s);
        let (pe, pf) = make_parab_pair(&Radii::relaxed(vec![0.3, 0.2], 0.05).unwrap(), &[0.1, 0.0, 0.01], &[0.0; 3]).unwrap();
        let regions = [
            Region::SphereE(rd.clone()),
            Region::SphereF(rd.clone()),
            Region::SphereE(rd.clone()).framed(frame.clone()),
            Region::SphereF(rd).framed(frame),
            pe,
            pf,
        ];
        for reg in &regions {
            let b = reg.bounding_box();
            let mut x = vec![0.0; 3];
            // sample a slightly enlarged box so the membership test is exercised near the edges
            let big = BBox {
                lo: b.lo.iter().zip(&b.hi).map(|(l, h)| l - 0.1 * (h - l)).collect(),
                hi: b.lo.iter().zip(&b.hi).map(|(l, h)| h + 0.1 * (h - l)).collect(),
            };
            let mut found = 0;
            for _ in 0..200_000 {
                big.sample_into(&mut s, &mut x);
                if reg.contains(&x) {
                    found += 1;
                    assert!(b.contains(&x), "{x:?} outside {b:?}");
                }
                if found >= 10_000 {
                    break;
                }
            }
            assert!(found > 1000, "too few members found: {found}");
        }
    }

    #[test]
    fn frame_compose_inverse() {
        let mut s = Stream::new(1, 2, 3);
        let a = Frame::random(3, 1.0, &mut s);
        let b = Frame::random(3, 1.0, &mut s);
        let x = [0.3, -0.2, 0.7];
        let ab = a.compose(&b).apply(&x);
        let step = a.apply(&b.apply(&x));
        for i in 0..3 {
            assert!((ab[i] - step[i]).abs() < 1e-14);
        }
        let back = a.inverse().apply(&a.apply(&x));
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-14);
        }
        assert!(Frame::new(DMatrix::from_element(3, 3, 1.0), DVector::zeros(3)).is_err());
    }

    #[test]
    fn rotation_between_maps_and_fixes() {
        let a = [0.3, 0.1, (1.0f64 - 0.1).sqrt()];
        let e = [0.0, 0.0, 1.0];
        let r = rotation_between(&a, &e).unwrap();
        let ra = &r * DVector::from_column_slice(&a);
        assert!((ra - DVector::from_column_slice(&e)).amax() < 1e-14);
        // a vector perpendicular to both is fixed
        let n = [0.1, -0.3, 0.0];
        let rn = &r * DVector::from_column_slice(&n);
        assert!((rn - DVector::from_column_slice(&n)).amax() < 1e-14);
    }

    #[test]
    fn record_roundtrip_examples() {
        let rd = Radii::new(vec![0.1, 0.2], 0.05).unwrap();
        let mut s = Stream::new(9, 9, 9);
        let (e, f) = make_sphere_pair(&rd, &Frame::random(3, 1.0, &mut s)).unwrap();
        let both = e.clone().intersect(Region::Ball { center: vec![0.0; 3], radius: 2.0 });
        for reg in [e, f, both] {
            let rec = reg.to_record();
            assert_eq!(Region::from_record(&rec).unwrap(), reg, "{rec}");
        }
        assert!(Region::from_record("sphere_e d=3 rho=0.1").is_err());
        assert!(Region::from_record("pyramid d=3").is_err());
    }
}
