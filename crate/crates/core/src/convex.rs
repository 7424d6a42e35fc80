//! Balanced convex approximation of point clouds.
//!
//! A cloud of `n` points with common weight `w` stands for a set `A` of
//! measure `n w`. Bodies are centred ellipsoids `A(B)`, which are balanced
//! by construction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Moments, Stream};
use crate::surface::Estimate;

/// Volume of the unit ball in `R^k`.
pub fn unit_ball_volume(k: usize) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / k as f64 * unit_ball_volume(k - 2),
    }
}

/// Equal-weight sample of a set in `R^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec<f64>>,
    weight: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, weight: f64) -> Result<Self> {
        let k = points.first().map(Vec::len).ok_or_else(|| Error::Validation("empty cloud".into()))?;
        if k == 0 {
            return Err(Error::Validation("zero-dimensional cloud".into()));
        }
        if let Some(p) = points.iter().find(|p| p.len() != k) {
            return Err(Error::Shape { expected: k, got: p.len() });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("cloud contains non-finite coordinates".into()));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Validation(format!("cloud weight must be positive, got {weight}")));
        }
        Ok(Self { points, weight })
    }

    /// One point per row, comma separated; `#` starts a comment line.
    pub fn from_csv(text: &str, weight: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("row {i}: {e}")))?;
            let p: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            points.push(p.map_err(|e| Error::Parse(format!("row {i}: {e}")))?);
        }
        Self::new(points, weight)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `|A| = n w`.
    pub fn measure(&self) -> f64 {
        self.weight * self.points.len() as f64
    }

    pub fn negated(&self) -> Self {
        Self {
            points: self.points.iter().map(|p| p.iter().map(|v| -v).collect()).collect(),
            weight: self.weight,
        }
    }
}

/// The ellipsoid `A(B)` for a symmetric positive-definite `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidBody {
    shape: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl EllipsoidBody {
    pub fn new(shape: DMatrix<f64>) -> Result<Self> {
        let k = shape.nrows();
        if shape.ncols() != k || k == 0 {
            return Err(Error::Shape { expected: k, got: shape.ncols() });
        }
        let sym = (&shape + shape.transpose()) * 0.5;
        if (&sym - &shape).amax() > 1e-9 * shape.amax().max(1e-300) {
            return Err(Error::Validation("shape matrix is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(sym.clone());
        if eig.eigenvalues.iter().any(|l| *l <= 0.0) {
            return Err(Error::Validation("shape matrix is not positive definite".into()));
        }
        let inv = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
            * eig.eigenvectors.transpose();
        Ok(Self { shape: sym, inv })
    }

    pub fn ball(k: usize, radius: f64) -> Result<Self> {
        Self::new(DMatrix::identity(k, k) * radius)
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    /// `|A^{-1} x|`; the body is `{gauge <= 1}`.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        let k = self.dim();
        let mut s = 0.0;
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..k {
                acc += self.inv[(i, j)] * x[j];
            }
            s += acc * acc;
        }
        s.sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.gauge(x) <= 1.0
    }

    pub fn volume(&self) -> f64 {
        self.shape.determinant().abs() * unit_ball_volume(self.dim())
    }

    /// Semi-axis lengths (ascending) and the matching unit axes as columns.
    pub fn axes(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.shape.clone());
        let mut idx: Vec<usize> = (0..self.dim()).collect();
        idx.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        let lens = idx.iter().map(|i| eig.eigenvalues[*i]).collect();
        let mut q = DMatrix::zeros(self.dim(), self.dim());
        for (c, i) in idx.iter().enumerate() {
            q.set_column(c, &eig.eigenvectors.column(*i));
        }
        (lens, q)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { shape: &self.shape * c, inv: &self.inv / c }
    }

    /// Rows of the shape matrix, comma separated, one row per line.
    pub fn to_rows(&self) -> String {
        self.shape
            .row_iter()
            .map(|r| r.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub const MVEE_TOL: f64 = 1e-6;
pub const MVEE_MAX_ITER: usize = 10_000;
/// Regularization used for clouds concentrated on a proper subspace.
pub const DEGENERATE_DELTA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub body: EllipsoidBody,
    /// The cloud spans a proper subspace; the body was regularized.
    pub degenerate: bool,
    /// Points kept after peeling.
    pub kept: usize,
    pub iterations: usize,
}

/// Minimum-volume centred ellipsoid containing `points` and their negatives,
/// by the multiplicative-weights iteration with away steps.
fn centred_mvee(points: &[&Vec<f64>]) -> (DMatrix<f64>, bool, usize) {
    let k = points[0].len();
    let n = points.len();
    let flat: Vec<f64> = points.iter().flat_map(|p| p.iter().copied()).collect();
    let scale = points.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    if scale == 0.0 {
        return (DMatrix::identity(k, k) * DEGENERATE_DELTA, true, 0);
    }
    // A point and its negative contribute the same outer product, so the
    // symmetrized design is the plain one.
    let mut u = vec![1.0 / n as f64; n];
    let mut m = DMatrix::zeros(k, k);
    for p in flat.chunks_exact(k) {
        let v = DVector::from_column_slice(p);
        m.ger(1.0 / n as f64, &v, &v, 1.0);
    }
    let rank = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .filter(|l| **l > 1e-12 * scale * scale)
        .count();
    let degenerate = rank < k;
    let reg = if degenerate { DEGENERATE_DELTA * scale * scale } else { 0.0 };
    let mut kappa = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let minv = (&m + DMatrix::identity(k, k) * reg)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::identity(k, k) / (reg + 1e-300));
        let (mut jmax, mut kmax) = (0, f64::NEG_INFINITY);
        let (mut jmin, mut kmin) = (usize::MAX, f64::INFINITY);
        for (i, p) in flat.chunks_exact(k).enumerate() {
            let mut q = 0.0;
            for r in 0..k {
                let mut acc = 0.0;
                for c in 0..k {
                    acc += minv[(r, c)] * p[c];
                }
                q += acc * p[r];
            }
            kappa[i] = q;
            if q > kmax {
                (jmax, kmax) = (i, q);
            }
            if u[i] > 0.0 && q < kmin {
                (jmin, kmin) = (i, q);
            }
        }
        let kf = k as f64;
        if kmax <= kf * (1.0 + MVEE_TOL) || iterations >= MVEE_MAX_ITER || degenerate {
            // {x : x^T M^{-1} x <= kmax} contains every point
            let q = (&m + DMatrix::identity(k, k) * reg) * kmax;
            let eig = SymmetricEigen::new(q);
            let sqrt = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(DEGENERATE_DELTA * scale * scale).sqrt()))
                * eig.eigenvectors.transpose();
            return (sqrt, degenerate, iterations);
        }
        let (j, step) = if kmax - kf >= kf - kmin || jmin == usize::MAX {
            (jmax, (kmax / kf - 1.0) / (kmax - 1.0))
        } else {
            // away step, clipped so the weight stays nonnegative
            // (for kappa < 1 the objective increases all the way to the bound)
            let bound = -u[jmin] / (1.0 - u[jmin]);
            let raw = (kmin / kf - 1.0) / (kmin - 1.0);
            (jmin, if raw >= 0.0 { bound } else { raw.max(bound) })
        };
        u.iter_mut().for_each(|w| *w *= 1.0 - step);
        u[j] += step;
        if u[j] < 0.0 {
            u[j] = 0.0;
        }
        let v = DVector::from_column_slice(&flat[j * k..(j + 1) * k]);
        m *= 1.0 - step;
        m.ger(step, &v, &v, 1.0);
        iterations += 1;
    }
}

/// Balanced ellipsoid containing at least `coverage` of the cloud: the
/// centred MVEE of the symmetrized cloud, peeling the outermost points in
/// batches until only the required fraction remains.
pub fn john_balanced_fit(cloud: &PointCloud, coverage: f64) -> Result<FitReport> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::Parameter(format!("coverage must lie in (0, 1], got {coverage}")));
    }
    let n = cloud.len();
    let target = ((coverage * n as f64).ceil() as usize).clamp(1, n);
    let mut kept: Vec<&Vec<f64>> = cloud.points.iter().collect();
    let mut total_iter = 0;
    loop {
        let (shape, degenerate, it) = centred_mvee(&kept);
        total_iter += it;
        let body = EllipsoidBody::new(shape)?;
        if kept.len() <= target {
            return Ok(FitReport { body, degenerate, kept: kept.len(), iterations: total_iter });
        }
        let excess = kept.len() - target;
        let batch = excess.div_ceil(2).max(1);
        let mut order: Vec<(f64, usize)> = kept.iter().enumerate().map(|(i, p)| (body.gauge(p), i)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut drop = vec![false; kept.len()];
        order.iter().take(batch).for_each(|(_, i)| drop[*i] = true);
        kept = kept.into_iter().zip(drop).filter(|(_, d)| !d).map(|(p, _)| p).collect();
    }
}

/// Default `eta = 1 / (2 (d - 1))`, for clouds in `R^{d-1}`.
pub fn default_eta(d: usize) -> f64 {
    1.0 / (2.0 * (d as f64 - 1.0))
}

/// Fraction `|A ∩ (V \ V')| / |A|`.
pub fn escaped_fraction(cloud: &PointCloud, v: &EllipsoidBody, v_prime: Option<&EllipsoidBody>) -> f64 {
    let n = cloud.len() as f64;
    cloud
        .points
        .iter()
        .filter(|p| v.contains(p) && !v_prime.is_some_and(|w| w.contains(p)))
        .count() as f64
        / n
}

/// `|A ∩ (V \ V')| / ((|A| / |V|)^eta |A|)`; `None` for `V' = {0}`.
pub fn removal_ratio(cloud: &PointCloud, v: &EllipsoidBody, v_prime: Option<&EllipsoidBody>, eta: f64) -> f64 {
    escaped_fraction(cloud, v, v_prime) / (cloud.measure() / v.volume()).powf(eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub eta: f64,
    /// Violation threshold: `V'` is bad iff the escaped fraction is below
    /// `c_stop (|A| / |V|)^eta`.
    pub c_stop: f64,
    /// Coverage of the starting body.
    pub coverage: f64,
    pub max_iter: usize,
}

impl RefineConfig {
    pub fn new(eta: f64, c_stop: f64) -> Self {
        Self { eta, c_stop, coverage: 1.0, max_iter: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport {
    pub body: EllipsoidBody,
    pub iterations: usize,
    /// `|V|` after each step, starting with the initial fit.
    pub volume_trace: Vec<f64>,
    /// Stopped because `|V|` dropped below `|A|`.
    pub forced_stop: bool,
    /// Description of the searched `V'` family.
    pub candidate_family: String,
}

/// Per-axis exponents `j` of the rescaling grid `2^{-j/4}`, `j = 0..=12`.
/// The grid is thinned in high dimension to keep the search bounded.
fn rescaling_grid(k: usize) -> Vec<Vec<f64>> {
    let mut stride: usize = 1;
    while (12 / stride + 1).pow(k as u32) > 50_000 && stride < 12 {
        stride += 1;
    }
    let js: Vec<usize> = (0..=12).step_by(stride).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let f: Vec<f64> = idx.iter().map(|i| 2f64.powf(-(js[*i] as f64) / 4.0)).collect();
        if f.iter().product::<f64>() <= 0.5 + 1e-12 {
            out.push(f);
        }
        let mut p = 0;
        loop {
            if p == k {
                return out;
            }
            idx[p] += 1;
            if idx[p] < js.len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

/// Stopping-time search for a body no half-volume balanced sub-body can
/// replace without losing a `(|A|/|V|)^eta` share of the cloud.
pub fn stopping_time_refine(cloud: &PointCloud, cfg: &RefineConfig) -> Result<RefineReport> {
    let k = cloud.dim();
    if !(cfg.eta > 0.0 && cfg.eta < 1.0 / k as f64) {
        return Err(Error::Parameter(format!("eta must lie in (0, 1/{k}), got {}", cfg.eta)));
    }
    let mut body = john_balanced_fit(cloud, cfg.coverage)?.body;
    let grid = rescaling_grid(k);
    let family = format!("principal-axis rescalings 2^(-j/4), {} candidates of volume <= |V|/2", grid.len());
    let mut trace = vec![body.volume()];
    let meas = cloud.measure();
    for it in 0..=cfg.max_iter {
        let vol = body.volume();
        if vol < meas {
            return Ok(RefineReport { body, iterations: it, volume_trace: trace, forced_stop: true, candidate_family: family });
        }
        if it == cfg.max_iter {
            break;
        }
        let (lens, q) = body.axes();
        // principal coordinates scaled to the unit ball
        let inside: Vec<Vec<f64>> = cloud
            .points
            .iter()
            .filter_map(|p| {
                let y = q.transpose() * DVector::from_column_slice(p);
                let z: Vec<f64> = y.iter().zip(&lens).map(|(y, l)| y / l).collect();
                (z.iter().map(|v| v * v).sum::<f64>() <= 1.0).then_some(z)
            })
            .collect();
        let threshold = cfg.c_stop * (meas / vol).powf(cfg.eta);
        let n = cloud.len() as f64;
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for f in &grid {
            let kept_inside = inside
                .iter()
                .filter(|z| z.iter().zip(f).map(|(z, f)| (z / f) * (z / f)).sum::<f64>() <= 1.0)
                .count();
            let escaped = (inside.len() - kept_inside) as f64 / n;
            if escaped < threshold {
                let fv: f64 = f.iter().product();
                if best.is_none_or(|(b, _)| fv < b) {
                    best = Some((fv, f));
                }
            }
        }
        let Some((_, f)) = best else {
            return Ok(RefineReport { body, iterations: it, volume_trace: trace, forced_stop: false, candidate_family: family });
        };
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(k, lens.iter().zip(f).map(|(l, f)| l * f)));
        body = EllipsoidBody::new(&q * diag * q.transpose())?;
        trace.push(body.volume());
    }
    Err(Error::NonTermination { iterations: cfg.max_iter, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub pass: bool,
    pub worst_ratio: f64,
    pub trials: usize,
    pub c_check: f64,
}

/// Random balanced `V' = A R diag(lambda) (B)` inside `V` with
/// `prod lambda <= 1/2`; passes iff the worst removal ratio is at least
/// `c_check`.
pub fn removal_stability_check(
    cloud: &PointCloud,
    v: &EllipsoidBody,
    eta: f64,
    trials: usize,
    stream: &mut Stream,
    c_check: f64,
) -> Result<StabilityReport> {
    let k = v.dim();
    if cloud.dim() != k {
        return Err(Error::Shape { expected: k, got: cloud.dim() });
    }
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let g = DMatrix::from_fn(k, k, |_, _| stream.normal());
        let r = g.qr().q();
        let mut lambda: Vec<f64> = (0..k).map(|_| stream.uniform_in(0.05, 1.0)).collect();
        let prod: f64 = lambda.iter().product();
        if prod > 0.5 {
            let j = stream.index(k);
            lambda[j] *= 0.5 / prod;
        }
        let m = v.shape() * &r * DMatrix::from_diagonal(&DVector::from_vec(lambda));
        // m m^T is the squared shape of V'
        let eig = SymmetricEigen::new(&m * m.transpose());
        let shape = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
            * eig.eigenvectors.transpose();
        let vp = EllipsoidBody::new(shape)?;
        worst = worst.min(removal_ratio(cloud, v, Some(&vp), eta));
    }
    Ok(StabilityReport { pass: worst >= c_check, worst_ratio: worst, trials, c_check })
}

/// Monte Carlo `∫_{A^{k}} |det(u_1..u_k)| du`, tuples drawn with replacement.
pub fn det_integral(cloud: &PointCloud, n: usize, seed: u64) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let k = cloud.dim();
    let scale = cloud.measure().powi(k as i32);
    let m: Moments = rng::run_blocks(seed, rng::label("det_integral"), n, |s, count| {
        let mut m = Moments::default();
        let mut mat = DMatrix::zeros(k, k);
        for _ in 0..count {
            for c in 0..k {
                let p = &cloud.points[s.index(cloud.len())];
                for r in 0..k {
                    mat[(r, c)] = p[r];
                }
            }
            m.push(scale * mat.determinant().abs());
        }
        m
    });
    Ok(Estimate {
        value: m.mean(),
        std_error: m.std_error(),
        n_samples: m.n,
        seed,
        method: crate::surface::Method::Mc,
    })
}

/// `|V| |A|^{d-1} (|A| / |V|)^{eta (d-1)}` with `d - 1` the cloud dimension.
pub fn det_lower_bound(cloud_measure: f64, v_volume: f64, eta: f64, k: usize) -> f64 {
    v_volume * cloud_measure.powi(k as i32) * (cloud_measure / v_volume).powf(eta * k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistProduct {
    pub product: f64,
    pub det: f64,
    pub rel_discrepancy: f64,
}

/// `prod_i dist(u_i, span(u_1..u_{i-1}))` next to `|det(u)|`.
pub fn dist_product_identity(us: &[Vec<f64>]) -> Result<DistProduct> {
    let k = us.len();
    if let Some(u) = us.iter().find(|u| u.len() != k) {
        return Err(Error::Shape { expected: k, got: u.len() });
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut product = 1.0;
    for u in us {
        let mut r = DVector::from_column_slice(u);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = r.dot(b);
                r.axpy(-c, b, 1.0);
            }
        }
        let dist = r.norm();
        product *= dist;
        if dist > 0.0 {
            basis.push(r / dist);
        }
    }
    let det = DMatrix::from_fn(k, k, |r, c| us[c][r]).determinant().abs();
    let denom = det.max(product);
    let rel = if denom == 0.0 { 0.0 } else { (product - det).abs() / denom };
    Ok(DistProduct { product, det, rel_discrepancy: rel })
}

/// Test cloud: `n` uniform points in a randomly rotated box with side
/// half-lengths log-uniform in `[0.02, 0.5]`, weighted to the box volume.
pub fn random_cloud(k: usize, n: usize, stream: &mut Stream) -> Result<PointCloud> {
    if k == 0 || n == 0 {
        return Err(Error::Parameter("cloud needs positive dimension and size".into()));
    }
    let half: Vec<f64> = (0..k).map(|_| (stream.uniform_in(0.02f64.ln(), 0.5f64.ln())).exp()).collect();
    let q = DMatrix::from_fn(k, k, |_, _| stream.normal()).qr().q();
    let points = (0..n)
        .map(|_| {
            let u = DVector::from_iterator(k, half.iter().map(|h| stream.uniform_in(-h, *h)));
            (&q * u).as_slice().to_vec()
        })
        .collect();
    let vol: f64 = half.iter().map(|h| 2.0 * h).product();
    PointCloud::new(points, vol / n as f64)
}

/// Uniform sample from an ellipsoid body.
pub fn sample_in_body(body: &EllipsoidBody, stream: &mut Stream) -> Vec<f64> {
    let k = body.dim();
    let mut dir = vec![0.0; k];
    crate::surface::sphere_sample_into(stream, &mut dir);
    let r = stream.uniform().powf(1.0 / k as f64);
    let x = body.shape() * DVector::from_vec(dir) * r;
    x.as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_box(a: f64, b: f64, n: usize, seed: u64) -> PointCloud {
        let mut s = Stream::new(seed, 0, 0);
        let pts = (0..n).map(|_| vec![s.uniform_in(-a, a), s.uniform_in(-b, b)]).collect();
        PointCloud::new(pts, 4.0 * a * b / n as f64).unwrap()
    }

    #[test]
    fn ball_volumes() {
        use std::f64::consts::PI;
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cross_cloud_fit() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let cloud = PointCloud::new(pts.clone(), 1.0).unwrap();
        let fit = john_balanced_fit(&cloud, 1.0).unwrap();
        for p in &pts {
            assert!(fit.body.gauge(p) <= 1.0 + 1e-12);
        }
        assert!(fit.body.volume() <= std::f64::consts::PI * 2.0 + 1e-9);
    }

    #[test]
    fn box_fit_axes_near_exact_mvee() {
        // the MVEE of [-a, a] x [-b, b] has semi-axes (a sqrt 2, b sqrt 2)
        let (a, b) = (0.8, 0.2);
        let fit = john_balanced_fit(&uniform_box(a, b, 4000, 1), 1.0).unwrap();
        let (lens, _) = fit.body.axes();
        let want = [b * 2f64.sqrt(), a * 2f64.sqrt()];
        for (l, w) in lens.iter().zip(want) {
            assert!(*l <= 2.0 * w && *l >= 0.5 * w, "{lens:?}");
        }
    }

    #[test]
    fn fit_is_negation_invariant() {
        let cloud = uniform_box(0.5, 0.3, 500, 2);
        let a = john_balanced_fit(&cloud, 1.0).unwrap().body;
        let b = john_balanced_fit(&cloud.negated(), 1.0).unwrap().body;
        assert!((a.shape() - b.shape()).amax() < 1e-12);
        let mut s = Stream::new(3, 3, 3);
        for _ in 0..1000 {
            let x = [s.uniform_in(-1.0, 1.0), s.uniform_in(-1.0, 1.0)];
            assert_eq!(a.contains(&x), a.contains(&[-x[0], -x[1]]));
        }
    }

    #[test]
    fn coverage_is_met() {
        let cloud = uniform_box(1.0, 1.0, 1000, 4);
        for cov in [0.5, 0.8, 0.95] {
            let fit = john_balanced_fit(&cloud, cov).unwrap();
            let inside = cloud.points().iter().filter(|p| fit.body.gauge(p) <= 1.0 + 1e-9).count();
            assert!(inside as f64 >= cov * 1000.0, "{cov}: {inside}");
        }
        assert!(john_balanced_fit(&cloud, 0.0).is_err());
    }

    #[test]
    fn origin_cloud_is_degenerate() {
        let cloud = PointCloud::new(vec![vec![0.0, 0.0]; 5], 1.0).unwrap();
        let fit = john_balanced_fit(&cloud, 1.0).unwrap();
        assert!(fit.degenerate);
        assert!((fit.body.shape() - DMatrix::identity(2, 2) * DEGENERATE_DELTA).amax() == 0.0);
        let line = PointCloud::new((0..10).map(|i| vec![i as f64 * 0.1, 0.0]).collect(), 1.0).unwrap();
        let fit = john_balanced_fit(&line, 1.0).unwrap();
        assert!(fit.degenerate);
        assert!(line.points().iter().all(|p| fit.body.gauge(p) <= 1.0 + 1e-9));
    }

    #[test]
    fn uniform_ellipse_cloud_stops_immediately() {
        let body = EllipsoidBody::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2])).unwrap();
        let mut s = Stream::new(5, 5, 5);
        let n = 4000;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| sample_in_body(&body, &mut s)).collect();
        let cloud = PointCloud::new(pts, body.volume() / n as f64).unwrap();
        let rep = stopping_time_refine(&cloud, &RefineConfig::new(default_eta(3), 0.25)).unwrap();
        assert!(rep.iterations <= 1, "{rep:?}");
    }

    #[test]
    fn symmetric_clusters_stay_together() {
        let mut s = Stream::new(6, 6, 6);
        let mut pts = Vec::new();
        for sign in [1.0, -1.0] {
            for _ in 0..500 {
                pts.push(vec![sign * 0.6 + s.uniform_in(-0.05, 0.05), sign * 0.3 + s.uniform_in(-0.05, 0.05)]);
            }
        }
        let cloud = PointCloud::new(pts, 0.02 / 1000.0).unwrap();
        let rep = stopping_time_refine(&cloud, &RefineConfig::new(default_eta(3), 0.25)).unwrap();
        let inside = |sign: f64| cloud.points().iter().filter(|p| p[0] * sign > 0.0 && rep.body.contains(p)).count();
        assert!(inside(1.0) > 0 && inside(-1.0) > 0);
        assert!((inside(1.0) as i64 - inside(-1.0) as i64).abs() < 100);
    }

    #[test]
    fn refine_volume_trace_decreases() {
        for seed in 0..10 {
            let cloud = uniform_box(1.0, 0.05, 1000, seed);
            let rep = stopping_time_refine(&cloud, &RefineConfig::new(default_eta(3), 0.25)).unwrap();
            assert!(rep.volume_trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(rep.iterations <= 64);
        }
    }

    #[test]
    fn removal_ratio_examples() {
        let body = EllipsoidBody::ball(2, 1.0).unwrap();
        let mut s = Stream::new(7, 7, 7);
        let n = 20_000;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| sample_in_body(&body, &mut s)).collect();
        let cloud = PointCloud::new(pts, body.volume() / n as f64).unwrap();
        let eta = default_eta(3);
        // nothing removed
        assert!((removal_ratio(&cloud, &body, None, eta) - 1.0).abs() < 1e-9);
        // half volume
        let half = body.scaled(2f64.powf(-0.5));
        let r = removal_ratio(&cloud, &body, Some(&half), eta);
        assert!((r - 0.5).abs() < 0.02, "{r}");
    }

    #[test]
    fn det_integral_examples() {
        let mut s = Stream::new(8, 8, 8);
        let n = 20_000;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![s.uniform_in(-1.0, 1.0)]).collect();
        let cloud = PointCloud::new(pts, 2.0 / n as f64).unwrap();
        let est = det_integral(&cloud, 100_000, 1).unwrap();
        assert!((est.value - 1.0).abs() < 3.0 * est.std_error + 0.01, "{est:?}");
        let line: Vec<Vec<f64>> = (0..100).map(|i| vec![0.01 * i as f64, -0.02 * i as f64, 0.03 * i as f64]).collect();
        let est = det_integral(&PointCloud::new(line, 0.01).unwrap(), 10_000, 2).unwrap();
        assert!(est.value.abs() < 1e-12);
    }

    #[test]
    fn dist_product_matches_det() {
        let p = dist_product_identity(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!((p.product, p.det), (6.0, 6.0));
        let p = dist_product_identity(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(p.product.abs() < 1e-15 && p.det.abs() < 1e-15);
        let mut s = Stream::new(9, 9, 9);
        for k in [2, 3] {
            for _ in 0..1000 {
                let us: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| s.normal()).collect()).collect();
                assert!(dist_product_identity(&us).unwrap().rel_discrepancy <= 1e-9);
            }
        }
    }

    #[test]
    fn csv_cloud() {
        let c = PointCloud::from_csv("# pts\n0.1, 0.2\n-0.3,0.4\n", 0.5).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.measure(), 1.0);
        assert!(PointCloud::from_csv("0.1,x\n", 1.0).is_err());
        assert!(PointCloud::from_csv("0.1,0.2\n0.3\n", 1.0).is_err());
    }
}
