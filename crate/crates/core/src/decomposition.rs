//! Partition of `E(r; rho)` into affine images `B_{i,j} E(lambda r; lambda rho)`,
//! the paired `F` pieces and pigeonhole selection.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Frame, Radii, Region, MAX_DIM};
use crate::rng::{self, Accumulator};
use crate::surface::{self, Estimate, FormOptions};

/// Smallest `lambda` tried by [`select_lambda`].
pub const LAMBDA_FLOOR_EXP: i32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub meas_e: f64,
    pub meas_f: f64,
}

/// Largest dyadic `lambda = 2^{-m} < 1` with `lambda^d |E(r; rho)| <= target_e`
/// and `lambda |F(r; rho)| <= target_f`.
pub fn select_lambda(target_e: f64, target_f: f64, rd: &Radii, n: usize, seed: u64) -> Result<LambdaChoice> {
    if !(target_e > 0.0 && target_f > 0.0) {
        return Err(Error::Parameter(format!("targets must be positive, got {target_e}, {target_f}")));
    }
    let d = rd.dim();
    let (e, f) = geometry::make_sphere_pair(rd, &Frame::identity(d))?;
    let me = geometry::measure(&e, n, rng::derive_seed(seed, 1))?.value;
    let mf = geometry::measure(&f, n, rng::derive_seed(seed, 2))?.value;
    lambda_for(target_e, target_f, me, mf, d)
}

/// [`select_lambda`] with the pair measures already known.
pub fn lambda_for(target_e: f64, target_f: f64, meas_e: f64, meas_f: f64, d: usize) -> Result<LambdaChoice> {
    for m in 1..=LAMBDA_FLOOR_EXP {
        let lambda = 2f64.powi(-m);
        if lambda.powi(d as i32) * meas_e <= target_e && lambda * meas_f <= target_f {
            return Ok(LambdaChoice { lambda, meas_e, meas_f });
        }
    }
    Err(Error::Parameter(format!(
        "no dyadic lambda >= 2^-{LAMBDA_FLOOR_EXP} meets targets ({target_e}, {target_f}) for measures ({meas_e}, {meas_f})"
    )))
}

fn dyadic_exponent(lambda: f64) -> Option<i32> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return None;
    }
    let m = -lambda.log2().round() as i32;
    (2f64.powi(-m) == lambda).then_some(m)
}

/// One piece `B_{i,j}`: `x -> R_j (x + e_d) - e_d + lambda rho i e_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub i: i64,
    pub j: usize,
    /// `x^j`, with `x^j + e_d` on the unit sphere.
    pub net_point: Vec<f64>,
    pub map: Frame,
}

impl AffinePiece {
    /// `B_{i,j} E(lambda r; c lambda rho)`.
    pub fn e_region(&self, rd: &Radii, lambda: f64, c: f64) -> Result<Region> {
        Ok(Region::SphereE(scaled(rd, lambda, c)?).framed(self.map.clone()))
    }

    /// `B_{i,j} F(lambda r; c lambda rho)`.
    pub fn f_region(&self, rd: &Radii, lambda: f64, c: f64) -> Result<Region> {
        Ok(Region::SphereF(scaled(rd, lambda, c)?).framed(self.map.clone()))
    }
}

fn scaled(rd: &Radii, lambda: f64, c: f64) -> Result<Radii> {
    Radii::relaxed(rd.r().iter().map(|r| lambda * r).collect(), c * lambda * rd.rho())
}

/// Net points on a graph-coordinate grid of pitch `lambda r_i` with centres
/// `-r_i + (m + 1/2) lambda r_i`, radial shifts `i = -1/lambda ..= 1/lambda`.
/// `R_j` is the rotation in `span(e_d, x^j + e_d)` taking `x^j + e_d` to `e_d`.
pub fn partition(rd: &Radii, lambda: f64) -> Result<Vec<AffinePiece>> {
    let m = dyadic_exponent(lambda)
        .filter(|m| *m >= 1)
        .ok_or_else(|| Error::Parameter(format!("lambda must be dyadic in (0, 1), got {lambda}")))?;
    let d = rd.dim();
    let k = d - 1;
    let per_axis = (2.0 / lambda).ceil() as usize;
    let shifts = 1i64 << m;
    let mut ed = vec![0.0; d];
    ed[d - 1] = 1.0;
    let mut nets = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        let c: Vec<f64> = (0..k).map(|a| -rd.r()[a] + (idx[a] as f64 + 0.5) * lambda * rd.r()[a]).collect();
        nets.push(c);
        let mut p = 0;
        loop {
            if p == k {
                break;
            }
            idx[p] += 1;
            if idx[p] < per_axis {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
        if p == k {
            break;
        }
    }
    let mut pieces = Vec::with_capacity(nets.len() * (2 * shifts as usize + 1));
    for (j, c) in nets.iter().enumerate() {
        let c2: f64 = c.iter().map(|v| v * v).sum();
        if c2 >= 1.0 {
            return Err(Error::Domain("net point leaves the unit sphere chart".into()));
        }
        let mut p = c.clone();
        p.push((1.0 - c2).sqrt());
        let rot = geometry::rotation_between(&p, &ed)?;
        let mut net_point = p.clone();
        net_point[d - 1] -= 1.0;
        for i in -shifts..=shifts {
            let e = DVector::from_column_slice(&ed);
            let mut t = &rot * &e - &e;
            t[d - 1] += lambda * rd.rho() * i as f64;
            pieces.push(AffinePiece { i, j, net_point: net_point.clone(), map: Frame::new(rot.clone(), t)? });
        }
    }
    Ok(pieces)
}

/// `(2/lambda + 1) * ceil(2/lambda)^{d-1}`.
pub fn piece_bound(lambda: f64, d: usize) -> usize {
    let a = (2.0 / lambda).ceil() as usize;
    (a + 1) * a.pow(d as u32 - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub samples: u64,
    pub covered: u64,
    pub max_multiplicity: u32,
}

#[derive(Default)]
struct CoverAcc(u64, u64, u32);

impl Accumulator for CoverAcc {
    fn merge(self, o: Self) -> Self {
        CoverAcc(self.0 + o.0, self.1 + o.1, self.2.max(o.2))
    }
}

/// Sample `E(r; rho)` and count points lying in some `B_{i,j} E(lambda r; lambda rho)`.
pub fn coverage(rd: &Radii, lambda: f64, pieces: &[AffinePiece], n: usize, seed: u64) -> Result<CoverageReport> {
    let e = Region::SphereE(rd.clone());
    let regions: Vec<Region> = pieces.iter().map(|p| p.e_region(rd, lambda, 1.0)).collect::<Result<_>>()?;
    let boxes: Vec<_> = regions.iter().map(Region::bounding_box).collect();
    let bbox = e.bounding_box();
    let d = rd.dim();
    let acc: CoverAcc = rng::run_blocks(seed, rng::label("coverage"), n, |s, count| {
        let mut acc = CoverAcc::default();
        let mut x = [0.0; MAX_DIM];
        for _ in 0..count {
            loop {
                bbox.sample_into(s, &mut x[..d]);
                if e.contains(&x[..d]) {
                    break;
                }
            }
            let mult = regions
                .iter()
                .zip(&boxes)
                .filter(|(r, b)| b.contains(&x[..d]) && r.contains(&x[..d]))
                .count() as u32;
            acc.0 += 1;
            acc.1 += (mult > 0) as u64;
            acc.2 = acc.2.max(mult);
        }
        acc
    });
    Ok(CoverageReport { samples: acc.0, covered: acc.1, max_multiplicity: acc.2 })
}

/// Fraction of sampled points of the pieces `B_{i,j} E(lambda r; lambda rho)`
/// lying in `E(c r; c rho)`; edge pieces overhang `|x_i| < r_i` by up to
/// `lambda r_i / 2`.
pub fn piece_containment(rd: &Radii, lambda: f64, pieces: &[AffinePiece], c: f64, n: usize, seed: u64) -> Result<f64> {
    let big = Region::SphereE(Radii::relaxed(rd.r().iter().map(|r| c * r).collect(), c * rd.rho())?);
    let regions: Vec<Region> = pieces.iter().map(|p| p.e_region(rd, lambda, 1.0)).collect::<Result<_>>()?;
    let hits: Vec<(u64, u64)> = rng::map_tasks(&regions, |i, r| {
        let mut s = rng::Stream::new(seed, rng::label("piece_containment"), i as u64);
        let mut h = (0, 0);
        for _ in 0..(n / regions.len()).max(1) {
            if let Some(x) = r.sample_member(&mut s, 100_000) {
                h.0 += 1;
                h.1 += big.contains(&x) as u64;
            }
        }
        h
    });
    let (tot, ok) = hits.iter().fold((0, 0), |a, h| (a.0 + h.0, a.1 + h.1));
    Ok(if tot == 0 { 0.0 } else { ok as f64 / tot as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    /// `T(E(lambda r; lambda rho), F(r; rho))`.
    pub t_full: Estimate,
    /// `T(E(lambda r; lambda rho), F(r; rho) ∩ F(lambda r; C lambda rho))`.
    pub t_small: Estimate,
    pub pass: bool,
}

/// Both forms share their seed, so for `lambda = 1` the estimates coincide.
pub fn compatibility_check(rd: &Radii, lambda: f64, c_big: f64, n: usize, seed: u64) -> Result<CompatReport> {
    dyadic_exponent(lambda).ok_or_else(|| Error::Parameter(format!("lambda must be dyadic in (0, 1], got {lambda}")))?;
    if !(c_big > 0.0) {
        return Err(Error::Parameter(format!("C must be positive, got {c_big}")));
    }
    let e = Region::SphereE(scaled(rd, lambda, 1.0)?);
    let f = Region::SphereF(rd.clone());
    let f_small = f.clone().intersect(Region::SphereF(scaled(rd, lambda, c_big)?));
    let opts = FormOptions::new(n, seed).side(surface::Side::E);
    let t_full = surface::bilinear_form_with(&e, &f, &opts)?;
    let t_small = surface::bilinear_form_with(&e, &f_small, &opts)?;
    let se = (t_full.std_error.powi(2) + t_small.std_error.powi(2)).sqrt();
    Ok(CompatReport { t_full, t_small, pass: (t_full.value - t_small.value).abs() <= 3.0 * se })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta2Report {
    /// `max |delta_2| / (lambda rho)` over solved samples.
    pub max_ratio: f64,
    pub solved: u64,
    pub skipped: u64,
}

#[derive(Default)]
struct D2Acc(f64, u64, u64);

impl Accumulator for D2Acc {
    fn merge(self, o: Self) -> Self {
        D2Acc(self.0.max(o.0), self.1 + o.1, self.2 + o.2)
    }
}

/// For `x` in `E(lambda r; lambda rho)` and `y'` with `|y_i| < rho / r_i`,
/// solve `|x - y| = 1` for `y_d < 0` and record
/// `delta_2 = y_d + sqrt(1 - |y'|^2)`. Samples without a solution, or whose
/// `y` leaves `F(r; c rho)`, are skipped.
pub fn delta2_bound_check(rd: &Radii, lambda: f64, c: f64, n: usize, seed: u64) -> Result<Delta2Report> {
    let d = rd.dim();
    let e = Region::SphereE(scaled(rd, lambda, 1.0)?);
    let f = Region::SphereF(Radii::relaxed(rd.r().to_vec(), c * rd.rho())?);
    let bbox = e.bounding_box();
    let w: Vec<f64> = rd.dual();
    let scale = lambda * rd.rho();
    let acc: D2Acc = rng::run_blocks(seed, rng::label("delta2"), n, |s, count| {
        let mut acc = D2Acc::default();
        let mut x = [0.0; MAX_DIM];
        let mut y = [0.0; MAX_DIM];
        for _ in 0..count {
            loop {
                bbox.sample_into(s, &mut x[..d]);
                if e.contains(&x[..d]) {
                    break;
                }
            }
            let (mut dx2, mut y2) = (0.0, 0.0);
            for i in 0..d - 1 {
                y[i] = s.uniform_in(-w[i], w[i]);
                dx2 += (x[i] - y[i]).powi(2);
                y2 += y[i] * y[i];
            }
            if dx2 >= 1.0 || y2 >= 1.0 {
                acc.2 += 1;
                continue;
            }
            y[d - 1] = x[d - 1] - (1.0 - dx2).sqrt();
            if !f.contains(&y[..d]) {
                acc.2 += 1;
                continue;
            }
            let delta = y[d - 1] + (1.0 - y2).sqrt();
            acc.0 = acc.0.max(delta.abs() / scale);
            acc.1 += 1;
        }
        acc
    });
    Ok(Delta2Report { max_ratio: acc.0, solved: acc.1, skipped: acc.2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PigeonholeReport {
    pub best: usize,
    pub best_t: Estimate,
    pub total: Estimate,
    pub per_piece: Vec<Estimate>,
}

impl PigeonholeReport {
    /// `best >= total / count - 3 * (combined std error)`.
    pub fn holds(&self) -> bool {
        let n = self.per_piece.len() as f64;
        let se = (self.best_t.std_error.powi(2) + (self.total.std_error / n).powi(2)).sqrt();
        self.best_t.value >= self.total.value / n - 3.0 * se
    }

    /// Partition report: `i,j,net point,piece T,se`.
    pub fn to_csv(&self, pieces: &[AffinePiece]) -> String {
        let mut out = String::from("i,j,net_point,piece_t,se\n");
        for (p, t) in pieces.iter().zip(&self.per_piece) {
            let net: Vec<String> = p.net_point.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&format!("{},{},{},{:e},{:e}\n", p.i, p.j, net.join(";"), t.value, t.std_error));
        }
        out
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
}

/// `T(E ∩ B E(lambda r; C lambda rho), F ∩ B F(lambda r; C lambda rho))` per
/// piece, and the best one.
#[allow(clippy::too_many_arguments)]
pub fn pigeonhole_best(
    e: &Region,
    f: &Region,
    rd: &Radii,
    lambda: f64,
    c: f64,
    pieces: &[AffinePiece],
    n: usize,
    seed: u64,
) -> Result<PigeonholeReport> {
    if pieces.is_empty() {
        return Err(Error::Parameter("no pieces".into()));
    }
    let total = surface::bilinear_form_with(e, f, &FormOptions::new(n, seed))?;
    let per_piece: Vec<Result<Estimate>> = rng::map_tasks(pieces, |idx, p| {
        let pe = e.clone().intersect(p.e_region(rd, lambda, c)?);
        let pf = f.clone().intersect(p.f_region(rd, lambda, c)?);
        surface::bilinear_form_with(&pe, &pf, &FormOptions::new(n, rng::derive_seed(seed, idx as u64 + 1)))
    });
    let per_piece: Vec<Estimate> = per_piece.into_iter().collect::<Result<_>>()?;
    let values: Vec<f64> = per_piece.iter().map(|t| t.value).collect();
    if values.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("every piece has zero incidence".into()));
    }
    let best = argmax(&values).expect("nonempty");
    Ok(PigeonholeReport { best, best_t: per_piece[best], total, per_piece })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rd2() -> Radii {
        Radii::new(vec![0.25], 2f64.powi(-6)).unwrap()
    }

    #[test]
    fn lambda_selection() {
        let c = lambda_for(1.0, 2.0, 1.0, 2.0, 2).unwrap();
        assert_eq!(c.lambda, 0.5);
        let c = lambda_for(1.0 / 8.0, 2.0, 1.0, 2.0, 3).unwrap();
        assert_eq!(c.lambda, 0.5);
        let c = lambda_for(1.0, 2.0 / 8.0, 1.0, 2.0, 2).unwrap();
        assert_eq!(c.lambda, 0.125);
        assert!(lambda_for(1e-300, 1.0, 1.0, 1.0, 2).is_err());
        assert!(select_lambda(0.0, 1.0, &rd2(), 100, 1).is_err());
    }

    #[test]
    fn partition_shape() {
        let rd = rd2();
        assert!(partition(&rd, 0.3).is_err());
        assert!(partition(&rd, 1.0).is_err());
        let pieces = partition(&rd, 0.5).unwrap();
        assert!(pieces.len() <= piece_bound(0.5, 2));
        for p in &pieces {
            assert!(p.map.rotation().determinant() > 0.0);
            let mut q = p.net_point.clone();
            q[1] += 1.0;
            let image = p.map.rotation() * DVector::from_column_slice(&q);
            assert!((image[1] - 1.0).abs() < 1e-12 && image[0].abs() < 1e-12);
        }
        // central piece contains the origin
        let central = pieces.iter().filter(|p| p.i == 0).min_by(|a, b| a.net_point[0].abs().total_cmp(&b.net_point[0].abs())).unwrap();
        assert!(central.e_region(&rd, 0.5, 1.0).unwrap().contains(&[0.0, 0.0]));
    }

    #[test]
    fn partition_covers() {
        let rd = rd2();
        let pieces = partition(&rd, 0.5).unwrap();
        let c = coverage(&rd, 0.5, &pieces, 10_000, 3).unwrap();
        assert_eq!(c.covered, c.samples);
        let rd3 = Radii::new(vec![0.1, 0.2], 2f64.powi(-6)).unwrap();
        let p3 = partition(&rd3, 0.5).unwrap();
        let c3 = coverage(&rd3, 0.5, &p3, 5_000, 3).unwrap();
        assert_eq!(c3.covered, c3.samples);
    }

    #[test]
    fn trivial_lambda_compatibility() {
        let r = compatibility_check(&rd2(), 1.0, 8.0, 20_000, 4).unwrap();
        assert_eq!(r.t_full, r.t_small);
        assert!(r.pass);
    }

    #[test]
    fn argmax_invariant_under_scaling() {
        let v = [0.3, 2.0, 1.5, 2.0];
        assert_eq!(argmax(&v), Some(1));
        let w: Vec<f64> = v.iter().map(|x| x * 7.5).collect();
        assert_eq!(argmax(&w), argmax(&v));
    }

    #[test]
    fn single_piece_is_the_total() {
        let rd = rd2();
        let (e, f) = geometry::make_sphere_pair(&rd, &Frame::identity(2)).unwrap();
        let whole = AffinePiece { i: 0, j: 0, net_point: vec![0.0, 0.0], map: Frame::identity(2) };
        // lambda = 1, C = 1: the piece is the pair itself
        let rep = pigeonhole_best(&e, &f, &rd, 1.0, 1.0, &[whole], 20_000, 5).unwrap();
        assert_eq!(rep.best, 0);
        assert!(rep.best_t.agrees_with(&rep.total, 3.0));
        assert!(rep.holds());
    }
}
