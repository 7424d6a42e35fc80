use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convex::{self, EllipsoidBody, PointCloud, RefineConfig};
use crate::error::{Error, Result};
use crate::geometry::{self, BBox, Frame, Region};
use crate::maps;
use crate::rng::{self, Moments, Stream};
use crate::surface::{Estimate, Method, QexReport, GRAPH_S_MAX};

/// Sampling budget of a tower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerConfig {
    /// Candidate base points drawn from `E`.
    pub candidates: usize,
    /// Pilot draws per candidate when scoring its level-1 fiber.
    pub pilot: usize,
    /// `widths[0]`: accepted points of `Omega_1`; `widths[i]`, `i >= 1`:
    /// proposals per parent when extending to level `i + 1`.
    pub widths: Vec<usize>,
    /// Proposal budget for level 1, as a multiple of `widths[0]`.
    pub max_tries_factor: usize,
}

impl Default for TowerConfig {
    fn default() -> Self {
        Self { candidates: 32, pilot: 2000, widths: vec![600, 24, 4], max_tries_factor: 400 }
    }
}

/// Acceptance statistics of one tuple's child fiber.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FiberStat {
    pub volume: f64,
    pub tries: u32,
    pub hits: u32,
}

impl FiberStat {
    /// Estimated Lebesgue measure of the fiber.
    pub fn measure(&self) -> f64 {
        if self.tries == 0 { 0.0 } else { self.volume * self.hits as f64 / self.tries as f64 }
    }
}

/// One level of the tower: tuples `(t_1, ..., t_i)` flattened, each with
/// its parent index and the statistics of its own child fiber.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Level {
    pub tuples: Vec<Vec<f64>>,
    pub parent: Vec<usize>,
    pub children: Vec<Vec<usize>>,
    pub fiber: Vec<FiberStat>,
}

/// Sampled refinement tower over a pair `(E, F)`.
///
/// Steps are `w(t) = Q (t, sqrt(1 - |t|^2))` with `Q` the pole rotation, and
/// level `i` points are `x_0 + sum_j (-1)^j w(t_j)`: in `F` for odd `i`, in
/// `E` for even `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTower {
    pub e: Region,
    pub f: Region,
    pub pole: DMatrix<f64>,
    pub x0: Vec<f64>,
    /// Level-1 fiber of `x_0`.
    pub base: FiberStat,
    pub levels: Vec<Level>,
    /// Mean fiber measure feeding each level: `|Omega_1|`, then averages
    /// over parents.
    pub densities: Vec<f64>,
}

impl ChainTower {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `|Omega_1|` estimate.
    pub fn omega1_measure(&self) -> f64 {
        self.base.measure()
    }

    pub fn omega1(&self) -> &[Vec<f64>] {
        &self.levels[0].tuples
    }

    /// Points of level `i` (1-based) for every stored tuple, recomputed.
    pub fn level_points(&self, i: usize) -> Vec<Vec<f64>> {
        let k = self.dim() - 1;
        self.levels[i - 1].tuples.iter().map(|t| self.chain_point(&t[..i * k])).collect()
    }

    /// `x_0 + sum_j (-1)^j w(t_j)` for a flattened tuple.
    pub fn chain_point(&self, tuple: &[f64]) -> Vec<f64> {
        let k = self.dim() - 1;
        let mut p = self.x0.clone();
        for (j, t) in tuple.chunks(k).enumerate() {
            let w = step(&self.pole, t);
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            p.iter_mut().zip(&w).for_each(|(p, w)| *p += sign * w);
        }
        p
    }

    /// Re-evaluate alternating membership of every stored prefix with plain
    /// region membership. Returns `(checked, passed)`.
    pub fn verify_alternating(&self) -> (usize, usize) {
        let k = self.dim() - 1;
        let (mut checked, mut passed) = (0, 0);
        for (li, level) in self.levels.iter().enumerate() {
            for t in &level.tuples {
                let mut ok = true;
                for i in 1..=li + 1 {
                    let p = self.chain_point(&t[..i * k]);
                    let region = if i % 2 == 1 { &self.f } else { &self.e };
                    ok &= region.contains(&p);
                }
                checked += 1;
                passed += ok as usize;
            }
        }
        (checked, passed)
    }
}

fn step(pole: &DMatrix<f64>, t: &[f64]) -> Vec<f64> {
    let k = t.len();
    let g = (1.0 - t.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let mut local = DVector::zeros(k + 1);
    local.rows_mut(0, k).copy_from_slice(t);
    local[k] = g;
    (pole * local).as_slice().to_vec()
}

/// Parameter box of `{t : p + sign w(t) in region}`, clipped to the graph
/// chart.
fn fiber_box(local_box: &BBox, pole: &DMatrix<f64>, p: &[f64], sign: f64) -> BBox {
    let k = p.len() - 1;
    let q = pole.transpose() * DVector::from_column_slice(p);
    let mut lo = Vec::with_capacity(k);
    let mut hi = Vec::with_capacity(k);
    for i in 0..k {
        let (a, b) = (sign * (local_box.lo[i] - q[i]), sign * (local_box.hi[i] - q[i]));
        lo.push(a.min(b).max(-GRAPH_S_MAX));
        hi.push(a.max(b).min(GRAPH_S_MAX));
    }
    BBox { lo, hi }
}

fn in_chart(t: &[f64]) -> bool {
    t.iter().map(|v| v * v).sum::<f64>() < GRAPH_S_MAX * GRAPH_S_MAX
}

struct Chart {
    pole: DMatrix<f64>,
    e_local: BBox,
    f_local: BBox,
}

impl Chart {
    fn new(e: &Region, f: &Region) -> Result<Self> {
        let d = e.dim();
        let (eb, fb) = (e.bounding_box(), f.bounding_box());
        if eb.is_empty() || fb.is_empty() {
            return Err(Error::Sampling("empty bounding box".into()));
        }
        let u: Vec<f64> = eb.center().iter().zip(fb.center()).map(|(a, b)| a - b).collect();
        let mut ed = vec![0.0; d];
        ed[d - 1] = 1.0;
        let pole = if u.iter().map(|v| v * v).sum::<f64>() == 0.0 {
            DMatrix::identity(d, d)
        } else {
            geometry::rotation_between(&ed, &u).unwrap_or_else(|_| {
                // antipodal: flip the last two axes
                let mut m = DMatrix::identity(d, d);
                m[(d - 1, d - 1)] = -1.0;
                m[(0, 0)] = -1.0;
                m
            })
        };
        let back = Frame::new(pole.transpose(), DVector::zeros(d))?;
        Ok(Self {
            e_local: e.clone().framed(back.clone()).bounding_box(),
            f_local: f.clone().framed(back).bounding_box(),
            pole,
        })
    }

    /// Level `i` (1-based) target region and its local box; sign of the step.
    fn target<'a>(&'a self, i: usize, e: &'a Region, f: &'a Region) -> (&'a Region, &'a BBox, f64) {
        if i % 2 == 1 { (f, &self.f_local, -1.0) } else { (e, &self.e_local, 1.0) }
    }
}

/// Propose in the fiber box of `p`; returns the accepted `t` if any.
fn propose(stream: &mut Stream, b: &BBox, pole: &DMatrix<f64>, p: &[f64], sign: f64, region: &Region) -> Option<Vec<f64>> {
    let k = b.dim();
    let mut t = vec![0.0; k];
    b.sample_into(stream, &mut t);
    if !in_chart(&t) {
        return None;
    }
    let w = step(pole, &t);
    let q: Vec<f64> = p.iter().zip(&w).map(|(p, w)| p + sign * w).collect();
    region.contains(&q).then_some(t)
}

/// Greedy sampled tower: the base point is the best of `cfg.candidates`
/// points of `E` by empirical `T chi_F`, then levels are grown by rejection
/// sampling in the fiber boxes.
pub fn build_tower(e: &Region, f: &Region, cfg: &TowerConfig, seed: u64) -> Result<ChainTower> {
    let d = e.dim();
    if f.dim() != d {
        return Err(Error::Shape { expected: d, got: f.dim() });
    }
    if cfg.widths.is_empty() || cfg.widths[0] == 0 || cfg.candidates == 0 || cfg.pilot == 0 {
        return Err(Error::Parameter("tower needs positive candidates, pilot and level-1 width".into()));
    }
    let chart = Chart::new(e, f)?;
    let mut stream = Stream::new(seed, rng::label("tower_candidates"), 0);
    let mut cands = Vec::new();
    for _ in 0..cfg.candidates {
        if let Some(x) = e.sample_member(&mut stream, 100_000) {
            cands.push(x);
        }
    }
    if cands.is_empty() {
        return Err(Error::Sampling("no point of E found for the tower base".into()));
    }
    let (f_reg, f_box, sign1) = chart.target(1, e, f);
    let scores: Vec<FiberStat> = rng::map_tasks(&cands, |i, x| {
        let mut s = Stream::new(seed, rng::label("tower_pilot"), i as u64);
        let b = fiber_box(f_box, &chart.pole, x, sign1);
        let mut st = FiberStat { volume: b.volume(), tries: 0, hits: 0 };
        if b.is_empty() {
            return st;
        }
        for _ in 0..cfg.pilot {
            st.tries += 1;
            st.hits += propose(&mut s, &b, &chart.pole, x, sign1, f_reg).is_some() as u32;
        }
        st
    });
    let (best, score) = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.measure().total_cmp(&b.1.measure()).then(b.0.cmp(&a.0)))
        .expect("nonempty");
    if score.measure() <= 0.0 {
        return Err(Error::Sampling(format!(
            "none of {} base candidates has positive empirical T chi_F ({} pilot draws each)",
            cands.len(),
            cfg.pilot
        )));
    }
    let x0 = cands[best].clone();

    // level 1
    let mut stream = Stream::new(seed, rng::label("tower_level"), 1);
    let b1 = fiber_box(f_box, &chart.pole, &x0, sign1);
    let mut base = FiberStat { volume: b1.volume(), tries: 0, hits: 0 };
    let mut level = Level::default();
    let budget = cfg.widths[0] * cfg.max_tries_factor;
    while level.tuples.len() < cfg.widths[0] && (base.tries as usize) < budget {
        base.tries += 1;
        if let Some(t) = propose(&mut stream, &b1, &chart.pole, &x0, sign1, f_reg) {
            base.hits += 1;
            level.tuples.push(t);
            level.parent.push(0);
        }
    }
    let k = d - 1;
    let mut tower = ChainTower {
        e: e.clone(),
        f: f.clone(),
        pole: chart.pole.clone(),
        x0,
        base,
        densities: vec![base.measure()],
        levels: vec![],
    };
    let n1 = level.tuples.len();
    level.children = vec![Vec::new(); n1];
    level.fiber = vec![FiberStat::default(); n1];
    tower.levels.push(level);

    for li in 1..cfg.widths.len() {
        let tries = cfg.widths[li];
        let (reg, lbox, sign) = chart.target(li + 1, e, f);
        let mut stream = Stream::new(seed, rng::label("tower_level"), li as u64 + 1);
        let mut next = Level::default();
        let mut dens = Moments::default();
        let parents = tower.levels[li - 1].tuples.clone();
        for (pi, pt) in parents.iter().enumerate() {
            let p = tower.chain_point(pt);
            let b = fiber_box(lbox, &chart.pole, &p, sign);
            let mut st = FiberStat { volume: b.volume(), tries: 0, hits: 0 };
            if !b.is_empty() {
                for _ in 0..tries {
                    st.tries += 1;
                    if let Some(t) = propose(&mut stream, &b, &chart.pole, &p, sign, reg) {
                        st.hits += 1;
                        let mut tuple = pt.clone();
                        tuple.extend(t);
                        tower.levels[li - 1].children[pi].push(next.tuples.len());
                        next.tuples.push(tuple);
                        next.parent.push(pi);
                    }
                }
            }
            dens.push(st.measure());
            tower.levels[li - 1].fiber[pi] = st;
        }
        tower.densities.push(if dens.n == 0 { 0.0 } else { dens.mean() });
        let n = next.tuples.len();
        next.children = vec![Vec::new(); n];
        next.fiber = vec![FiberStat::default(); n];
        tower.levels.push(next);
    }
    debug_assert!(tower.levels.iter().all(|l| l.tuples.iter().all(|t| t.len() % k == 0)));
    Ok(tower)
}

fn mc_estimate(m: &Moments, seed: u64) -> Estimate {
    Estimate {
        value: if m.n == 0 { 0.0 } else { m.mean() },
        std_error: if m.n < 2 { 0.0 } else { m.std_error() },
        n_samples: m.n,
        seed,
        method: Method::Mc,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflationReport {
    /// `∫_{Omega_1} ∫_{F(s)^{d-1}} |det(F_s(t_1), ..., F_s(t_{d-1}))|`.
    pub det_integral: Estimate,
    pub alpha_beta_d: f64,
    /// `|E|^{d-1}`.
    pub meas_e_pow: f64,
    /// `c_ub eps^{-(d+1)} beta^d alpha`.
    pub upper: f64,
    /// `|E|^{d-1} >= c_infl * det_integral`.
    pub lower_pass: bool,
    /// `det_integral >= c_infl_ab * alpha beta^d`.
    pub ab_pass: bool,
    /// `|E|^{d-1} <= upper`.
    pub upper_pass: bool,
    /// The integral vanished, so the lower comparison carries no content.
    pub vacuous: bool,
}

impl InflationReport {
    pub fn pass(&self) -> bool {
        self.lower_pass && (self.vacuous || self.ab_pass) && self.upper_pass
    }
}

/// Monte Carlo inflation integral over the stored tower, with the columns
/// `t_j` drawn from the stored children of `s`.
pub fn inflation_lower_bound_check(
    tower: &ChainTower,
    report: &QexReport,
    n: usize,
    seed: u64,
    c_infl: f64,
    c_infl_ab: f64,
    c_ub: f64,
) -> Result<InflationReport> {
    let d = tower.dim();
    let k = d - 1;
    if n == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let l1 = &tower.levels[0];
    let l2 = tower.levels.get(1).ok_or_else(|| Error::Parameter("tower needs two levels".into()))?;
    let omega = tower.omega1_measure();
    let m: Moments = if l1.tuples.is_empty() {
        Moments::default()
    } else {
        rng::run_blocks(seed, rng::label("inflation"), n, |s, count| {
            let mut m = Moments::default();
            for _ in 0..count {
                let si = s.index(l1.tuples.len());
                let kids = &l1.children[si];
                if kids.is_empty() {
                    m.push(0.0);
                    continue;
                }
                let sv = &l1.tuples[si];
                let ts: Vec<Vec<f64>> = (0..k).map(|_| l2.tuples[kids[s.index(kids.len())]][k..].to_vec()).collect();
                let det = maps::inflation_det(sv, &ts).map(f64::abs).unwrap_or(0.0);
                m.push(omega * l1.fiber[si].measure().powi(k as i32) * det);
            }
            m
        })
    };
    let det_integral = mc_estimate(&m, seed);
    let (alpha, beta, eps) = (report.alpha, report.beta, report.ratio);
    let alpha_beta_d = alpha * beta.powi(d as i32);
    let meas_e_pow = report.meas_e.value.powi(k as i32);
    let upper = c_ub * eps.powi(-(d as i32 + 1)) * beta.powi(d as i32) * alpha;
    Ok(InflationReport {
        det_integral,
        alpha_beta_d,
        meas_e_pow,
        upper,
        lower_pass: meas_e_pow >= c_infl * det_integral.value,
        ab_pass: det_integral.value >= c_infl_ab * alpha_beta_d,
        upper_pass: meas_e_pow <= upper,
        vacuous: det_integral.value == 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentReport {
    pub tau: Vec<f64>,
    pub body: EllipsoidBody,
    pub alpha_hat: f64,
    /// `|V| / alpha_hat`.
    pub vol_ratio: f64,
    pub degenerate: bool,
    pub forced_stop: bool,
    pub iterations: usize,
}

/// Map `Omega_1` through `F_tau`, `tau` the pullback of the centroid of
/// `F_0(Omega_1)`, and fit a balanced ellipsoid by stopping-time refinement.
pub fn ellipsoid_containment(tower: &ChainTower, eta: f64, c_stop: f64) -> Result<ContainmentReport> {
    let k = tower.dim() - 1;
    let omega = tower.omega1();
    if omega.is_empty() {
        return Err(Error::Degenerate("Omega_1 is empty".into()));
    }
    let zero = vec![0.0; k];
    let mut centroid = vec![0.0; k];
    for s in omega {
        let w = maps::f_map(&zero, s)?;
        centroid.iter_mut().zip(&w).for_each(|(c, w)| *c += w / omega.len() as f64);
    }
    let tau = maps::f_inverse(&zero, &centroid)?;
    let points: std::result::Result<Vec<Vec<f64>>, _> = omega.iter().map(|s| maps::f_map(&tau, s)).collect();
    let alpha_hat = tower.omega1_measure();
    let cloud = PointCloud::new(points?, alpha_hat / omega.len() as f64)?;
    let small = omega.len() <= k;
    let (body, degenerate, forced_stop, iterations) = if small {
        let fit = convex::john_balanced_fit(&cloud, 1.0)?;
        (fit.body, true, false, 0)
    } else {
        let fit = convex::john_balanced_fit(&cloud, 1.0)?;
        if fit.degenerate {
            (fit.body, true, false, 0)
        } else {
            let rep = convex::stopping_time_refine(&cloud, &RefineConfig::new(eta, c_stop))?;
            (rep.body, false, rep.forced_stop, rep.iterations)
        }
    };
    Ok(ContainmentReport { tau, vol_ratio: body.volume() / alpha_hat, body, alpha_hat, degenerate, forced_stop, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicingReport {
    /// `|det A|^{-1} ∫_{Omega_2} |A (DF_tau(s))^{-1} F_s(t)|`.
    pub integral: Estimate,
    pub meas_e: f64,
    /// `|E| / integral`.
    pub margin: f64,
    pub pass: bool,
    pub vacuous: bool,
}

/// Monte Carlo slicing integral over the stored `Omega_2`.
pub fn slicing_lower_bound_check(
    tower: &ChainTower,
    a: &DMatrix<f64>,
    meas_e: f64,
    n: usize,
    seed: u64,
    c_slice: f64,
) -> Result<SlicingReport> {
    let k = tower.dim() - 1;
    if a.nrows() != k || a.ncols() != k {
        return Err(Error::Shape { expected: k, got: a.nrows() });
    }
    if n == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let det = a.determinant().abs();
    if det == 0.0 {
        return Err(Error::Degenerate("singular A".into()));
    }
    let l1 = &tower.levels[0];
    let l2 = tower.levels.get(1).ok_or_else(|| Error::Parameter("tower needs two levels".into()))?;
    let omega = tower.omega1_measure();
    let m: Moments = if l2.tuples.is_empty() {
        Moments::default()
    } else {
        rng::run_blocks(seed, rng::label("slicing"), n, |s, count| {
            let mut m = Moments::default();
            for _ in 0..count {
                let si = s.index(l1.tuples.len());
                let kids = &l1.children[si];
                if kids.is_empty() {
                    m.push(0.0);
                    continue;
                }
                let t = &l2.tuples[kids[s.index(kids.len())]][k..];
                let v = maps::slicing_norm(&l1.tuples[si], t, a).unwrap_or(0.0);
                m.push(omega * l1.fiber[si].measure() * v / det);
            }
            m
        })
    };
    let integral = mc_estimate(&m, seed);
    let vacuous = integral.value == 0.0;
    Ok(SlicingReport {
        integral,
        meas_e,
        margin: if vacuous { f64::INFINITY } else { meas_e / integral.value },
        pass: meas_e >= c_slice * integral.value,
        vacuous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{special_pair, Radii, SpecialKind};
    use crate::surface::qex_report;

    fn knapp_tower(seed: u64) -> ChainTower {
        let (e, f) = special_pair(SpecialKind::Knapp, 2f64.powi(-6), 3, &Frame::identity(3)).unwrap();
        build_tower(&e, &f, &TowerConfig::default(), seed).unwrap()
    }

    #[test]
    fn alternating_membership_is_exact() {
        let t = knapp_tower(1);
        assert_eq!(t.levels.len(), 3);
        assert!(t.levels.iter().all(|l| !l.tuples.is_empty()));
        let (checked, passed) = t.verify_alternating();
        assert!(checked > 0);
        assert_eq!(checked, passed);
    }

    #[test]
    fn tower_is_deterministic() {
        let a = knapp_tower(4);
        let b = knapp_tower(4);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_incidence_fails_cleanly() {
        let e = Region::Ball { center: vec![0.0, 0.0], radius: 0.05 };
        let f = Region::Ball { center: vec![0.0, 5.0], radius: 0.05 };
        let cfg = TowerConfig { candidates: 4, pilot: 100, ..TowerConfig::default() };
        assert!(matches!(build_tower(&e, &f, &cfg, 1), Err(Error::Sampling(_))));
    }

    #[test]
    fn single_point_columns_are_vacuous() {
        let (e, f) = special_pair(SpecialKind::Knapp, 2f64.powi(-6), 3, &Frame::identity(3)).unwrap();
        let cfg = TowerConfig { widths: vec![1, 1, 1], ..TowerConfig::default() };
        let t = build_tower(&e, &f, &cfg, 2).unwrap();
        let rep = qex_report(&e, &f, 50_000, 2).unwrap();
        let inf = inflation_lower_bound_check(&t, &rep, 2000, 3, 0.05, 0.05, 20.0).unwrap();
        assert_eq!(inf.det_integral.value, 0.0);
        assert!(inf.vacuous);
    }

    #[test]
    fn slicing_scales_homogeneously() {
        let t = knapp_tower(5);
        let a = DMatrix::from_row_slice(2, 2, &[0.2, 0.01, 0.01, 0.1]);
        let r1 = slicing_lower_bound_check(&t, &a, 1.0, 4000, 7, 0.05).unwrap();
        let r2 = slicing_lower_bound_check(&t, &(2.0 * &a), 1.0, 4000, 7, 0.05).unwrap();
        // |A w| doubles, |det A| grows by 2^{d-1}
        assert!((r2.integral.value / r1.integral.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_point_cloud_is_flagged() {
        let mut t = knapp_tower(6);
        t.levels[0].tuples.truncate(1);
        let c = ellipsoid_containment(&t, 0.25, 0.25).unwrap();
        assert!(c.degenerate);
    }

    #[test]
    fn knapp_axes_near_sqrt_rho() {
        let rho = 2f64.powi(-6);
        let t = knapp_tower(7);
        let c = ellipsoid_containment(&t, 0.25, 0.25).unwrap();
        let (lens, _) = c.body.axes();
        for l in lens {
            let q = l / rho.sqrt();
            assert!((0.25..=4.0).contains(&q), "axis {l} vs {}", rho.sqrt());
        }
        let _ = Radii::new(vec![rho.sqrt(); 2], rho).unwrap();
    }
}
