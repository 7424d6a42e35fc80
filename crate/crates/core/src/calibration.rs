//! Measurement procedures behind the pinned constants.
//!
//! Every implicit constant is stored as the value its procedure measured
//! when it was pinned. A check derived from a constant uses the threshold
//! of [`threshold`]: half the pinned value for lower bounds, one and a half
//! times it for upper bounds.

use serde::Serialize;

use crate::config::{Constants, DRIFT_TOLERANCE};
use crate::convex::{self, RefineConfig};
use crate::decomposition;
use crate::error::{Error, Result};
use crate::geometry::{self, BBox, Frame, Radii, Region, SpecialKind};
use crate::lab::{self, Family, PairSurface};
use crate::rng::{self, Stream};
use crate::surface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    /// The measured quantity is a minimum; checks require at least half.
    Lower,
    /// The measured quantity is a maximum; checks allow one and a half.
    Upper,
    /// A scale factor; re-measurements must stay within the drift band.
    Centre,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Suite {
    Fast,
    Full,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(Error::Parameter(format!("unknown suite `{other}`"))),
        }
    }
}

/// A measured constant.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub bound: Bound,
    /// Smallest suite that re-measures it.
    pub suite: Suite,
    pub what: &'static str,
}

pub const KEYS: &[Key] = &[
    Key { name: "c0_d2", bound: Bound::Lower, suite: Suite::Fast, what: "min T/rho^2, ball and Knapp, rho = 2^-3..2^-7" },
    Key { name: "c0_d3", bound: Bound::Lower, suite: Suite::Fast, what: "min T/rho^3, ball and Knapp, rho = 2^-3..2^-7" },
    Key { name: "c_up_d2", bound: Bound::Upper, suite: Suite::Full, what: "max ratio over generated d=2 pairs" },
    Key { name: "c_up_d3", bound: Bound::Upper, suite: Suite::Full, what: "max ratio over generated d=3 pairs" },
    Key { name: "c_taylor", bound: Bound::Upper, suite: Suite::Fast, what: "max reduction remainder / rho, all case splits" },
    Key { name: "c_check", bound: Bound::Lower, suite: Suite::Fast, what: "min removal ratio after refinement, random clouds" },
    Key { name: "c_det", bound: Bound::Lower, suite: Suite::Fast, what: "min det integral / det lower bound, random clouds" },
    Key { name: "c_alpha", bound: Bound::Lower, suite: Suite::Full, what: "min |Omega_1| / alpha over tower pairs" },
    Key { name: "c_infl", bound: Bound::Lower, suite: Suite::Full, what: "min |E|^(d-1) / inflation integral" },
    Key { name: "c_infl_ab", bound: Bound::Lower, suite: Suite::Full, what: "min inflation integral / (alpha beta^d)" },
    Key { name: "c_ub", bound: Bound::Upper, suite: Suite::Full, what: "max |E|^(d-1) eps^(d+1) / (alpha beta^d)" },
    Key { name: "c_vol", bound: Bound::Upper, suite: Suite::Full, what: "max |V| / |Omega_1| after refinement" },
    Key { name: "c_slice", bound: Bound::Lower, suite: Suite::Full, what: "min |E| / slicing integral with A = V" },
    Key { name: "rho_scale_c", bound: Bound::Centre, suite: Suite::Full, what: "median rho / (alpha beta)^(1/(d-1))" },
    Key { name: "c_delta2", bound: Bound::Upper, suite: Suite::Fast, what: "max |delta_2| / (lambda rho), lambda = 1..1/8" },
    Key { name: "c_recover", bound: Bound::Lower, suite: Suite::Full, what: "min of T, E and F intersection ratios on self-recovery" },
];

/// Parameters that are chosen, not measured.
pub const PARAMETERS: &[&str] =
    &["c_stop", "c_big", "c_piece", "slice_upper", "slice_floor", "decay_gamma", "rho_scale_c_prime"];

pub fn key(name: &str) -> Result<&'static Key> {
    KEYS.iter().find(|k| k.name == name).ok_or_else(|| Error::Config(format!("`{name}` is not a measured constant")))
}

/// Threshold a check derives from a pinned constant.
pub fn threshold(consts: &Constants, name: &str) -> Result<f64> {
    let p = consts.get(name)?;
    Ok(match key(name).map(|k| k.bound).unwrap_or(Bound::Centre) {
        Bound::Lower => (1.0 - DRIFT_TOLERANCE) * p,
        Bound::Upper => (1.0 + DRIFT_TOLERANCE) * p,
        Bound::Centre => p,
    })
}

/// Whether a fresh measurement is consistent with the pinned value.
pub fn consistent(bound: Bound, measured: f64, pinned: f64) -> bool {
    match bound {
        Bound::Lower => measured >= (1.0 - DRIFT_TOLERANCE) * pinned,
        Bound::Upper => measured <= (1.0 + DRIFT_TOLERANCE) * pinned,
        Bound::Centre => crate::config::within_drift(measured, pinned),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub name: &'static str,
    pub bound: Bound,
    pub measured: f64,
    pub pinned: f64,
    pub pass: bool,
}

pub const MEASUREMENT_CSV_HEADER: &str = "key,bound,pinned,measured,pass";

impl Measurement {
    pub fn csv_row(&self) -> String {
        format!("{},{:?},{},{},{}", self.name, self.bound, self.pinned, self.measured, self.pass)
    }
}

pub fn rho_ladder() -> Vec<f64> {
    (3..=7).map(|j| 2f64.powi(-j)).collect()
}

/// Ball and Knapp radii over the ladder.
pub fn family_cases(d: usize) -> Result<Vec<Radii>> {
    let mut v = Family::Ball.cases(&rho_ladder(), d)?;
    v.extend(Family::Knapp.cases(&rho_ladder(), d)?);
    Ok(v)
}

fn min_max(v: impl IntoIterator<Item = f64>, max: bool) -> f64 {
    let init = if max { f64::NEG_INFINITY } else { f64::INFINITY };
    v.into_iter().fold(init, |a, b| if max { a.max(b) } else { a.min(b) })
}

fn c0(d: usize, seed: u64) -> Result<f64> {
    let cases = family_cases(d)?;
    let rows = rng::map_tasks(&cases, |i, rd| {
        surface::rho_d_lower_check(rd, 200_000, lab::record_seed(seed, i), 0.0).map(|c| c.t.value / c.rho_d)
    });
    Ok(min_max(rows.into_iter().collect::<Result<Vec<_>>>()?, false))
}

/// Degenerate radii `(rho^a, rho^b)` in `d = 3`.
pub fn degenerate_cases(a: f64, b: f64) -> Result<Vec<Radii>> {
    (4..=8).map(|j| 2f64.powi(-j)).map(|rho| Radii::relaxed(vec![rho.powf(a), rho.powf(b)], rho)).collect()
}

/// Pairs of random boxes `E`, `F` with unit-scale separation.
pub fn random_box_pairs(d: usize, count: usize, seed: u64) -> Vec<(Region, Region)> {
    let mut s = Stream::new(seed, rng::label("random_boxes"), d as u64);
    (0..count)
        .map(|_| {
            let make = |c: Vec<f64>, s: &mut Stream| {
                let h: Vec<f64> = (0..d).map(|_| s.uniform_in(0.01f64.ln(), 0.3f64.ln()).exp()).collect();
                Region::Box(BBox { lo: c.iter().zip(&h).map(|(c, h)| c - h).collect(), hi: c.iter().zip(&h).map(|(c, h)| c + h).collect() })
            };
            let e = make(vec![0.0; d], &mut s);
            let u = surface::sphere_sample(d, &mut s);
            (e, make(u, &mut s))
        })
        .collect()
}

/// Every pair the upper-bound sweep covers in dimension `d`.
pub fn upper_bound_pairs(d: usize, seed: u64) -> Result<Vec<(Region, Region)>> {
    let mut pairs = Vec::new();
    let mut radii = family_cases(d)?;
    radii.extend(lab::admissible_grid(d, 2f64.powi(-6), 3));
    if d == 3 {
        radii.extend(degenerate_cases(0.9, 0.1)?);
    }
    for rd in &radii {
        pairs.push(PairSurface::Sphere.pair(rd)?);
    }
    pairs.extend(random_box_pairs(d, 8, seed));
    Ok(pairs)
}

/// Ratio of every upper-bound pair, errors kept.
pub fn upper_bound_ratios(d: usize, n: usize, seed: u64) -> Result<Vec<Result<f64>>> {
    let pairs = upper_bound_pairs(d, seed)?;
    Ok(rng::map_tasks(&pairs, |i, (e, f)| surface::qex_report(e, f, n, lab::record_seed(seed, i)).map(|q| q.ratio)))
}

fn c_up(d: usize, seed: u64) -> Result<f64> {
    let r = upper_bound_ratios(d, 1_000_000, seed)?;
    Ok(min_max(r.into_iter().filter_map(|r| r.ok()), true))
}

/// Thin, thick and mixed configurations for the reduction remainder.
pub fn taylor_cases() -> Result<Vec<Radii>> {
    let rho = 2f64.powi(-8);
    Ok(vec![
        Radii::new(vec![2f64.powi(-5)], rho)?,
        Radii::new(vec![0.125], rho)?,
        Radii::new(vec![2f64.powi(-5); 2], rho)?,
        Radii::new(vec![0.0625, 0.125], rho)?,
        Radii::new(vec![2f64.powi(-5), 0.125], rho)?,
        Radii::new(vec![0.125; 2], rho)?,
    ])
}

fn c_taylor(seed: u64) -> Result<f64> {
    let mut m = f64::NEG_INFINITY;
    for (i, rd) in taylor_cases()?.iter().enumerate() {
        m = m.max(lab::taylor_reduction_check(rd, 20_000, lab::record_seed(seed, i), f64::INFINITY)?.max_ratio);
    }
    Ok(m)
}

/// Per-cloud refinement outcome on the random-cloud suite.
#[derive(Debug, Clone, Copy)]
pub struct CloudOutcome {
    pub k: usize,
    pub iterations: usize,
    pub stability: f64,
    pub det_ratio: f64,
}

/// Refinement, stability and determinant ratios on `count` random clouds of
/// each dimension `1..=3`.
pub fn cloud_suite(count: usize, c_stop: f64, seed: u64) -> Result<Vec<CloudOutcome>> {
    let mut out = Vec::new();
    for k in 1..=3usize {
        let eta = convex::default_eta(k + 1);
        for i in 0..count as u64 {
            let mut s = Stream::new(seed, rng::label("cloud_suite"), (k as u64) << 32 | i);
            let cloud = convex::random_cloud(k, 400, &mut s)?;
            let rep = convex::stopping_time_refine(&cloud, &RefineConfig::new(eta, c_stop))?;
            let st = convex::removal_stability_check(&cloud, &rep.body, eta, 50, &mut s, 0.0)?;
            let di = convex::det_integral(&cloud, 20_000, rng::derive_seed(seed, i))?;
            let lb = convex::det_lower_bound(cloud.measure(), rep.body.volume(), eta, k);
            out.push(CloudOutcome { k, iterations: rep.iterations, stability: st.worst_ratio, det_ratio: di.value / lb });
        }
    }
    Ok(out)
}

/// The pairs the tower constants are measured on.
pub fn tower_pairs() -> Vec<(SpecialKind, f64, usize)> {
    vec![
        (SpecialKind::Ball, 2f64.powi(-5), 2),
        (SpecialKind::Knapp, 2f64.powi(-6), 2),
        (SpecialKind::Ball, 2f64.powi(-4), 3),
        (SpecialKind::Knapp, 2f64.powi(-6), 3),
    ]
}

/// Tower quantities of one pair.
#[derive(Debug, Clone, Copy)]
pub struct TowerOutcome {
    pub alpha_ratio: f64,
    pub infl: f64,
    pub infl_ab: f64,
    pub ub: f64,
    pub vol: f64,
    pub slice: f64,
    pub rho_scale: f64,
}

pub fn tower_outcome(kind: SpecialKind, rho: f64, d: usize, c_stop: f64, seed: u64) -> Result<TowerOutcome> {
    let (e, f) = geometry::special_pair(kind, rho, d, &Frame::identity(d))?;
    let q = surface::qex_report(&e, &f, 400_000, seed)?;
    let t = lab::build_tower(&e, &f, &lab::TowerConfig::default(), rng::derive_seed(seed, 1))?;
    let inf = lab::inflation_lower_bound_check(&t, &q, 20_000, rng::derive_seed(seed, 2), 0.0, 0.0, 1.0)?;
    let cont = lab::ellipsoid_containment(&t, convex::default_eta(d), c_stop)?;
    let sl = lab::slicing_lower_bound_check(&t, cont.body.shape(), q.meas_e.value, 20_000, rng::derive_seed(seed, 3), 0.0)?;
    let scale = lab::rho_scale(q.alpha, q.beta, d, q.ratio, 1.0, 0.0)?;
    Ok(TowerOutcome {
        alpha_ratio: t.densities[0] / q.alpha,
        infl: inf.meas_e_pow / inf.det_integral.value,
        infl_ab: inf.det_integral.value / inf.alpha_beta_d,
        ub: inf.meas_e_pow / inf.upper,
        vol: cont.vol_ratio,
        slice: sl.margin,
        rho_scale: rho / scale,
    })
}

/// Lambdas and radii for the `delta_2` bound.
pub fn delta2_cases() -> Result<Vec<(Radii, f64)>> {
    let rho = 2f64.powi(-6);
    let mut v = Vec::new();
    for rd in [Radii::new(vec![0.25], rho)?, geometry::special_radii(SpecialKind::Knapp, rho, 3)?] {
        for j in 0..4 {
            v.push((rd.clone(), 2f64.powi(-j)));
        }
    }
    Ok(v)
}

fn c_delta2(consts: &Constants, seed: u64) -> Result<f64> {
    let c = consts.get("c_piece")?;
    let mut m = f64::NEG_INFINITY;
    for (i, (rd, lam)) in delta2_cases()?.iter().enumerate() {
        m = m.max(decomposition::delta2_bound_check(rd, *lam, c, 200_000, lab::record_seed(seed, i))?.max_ratio);
    }
    Ok(m)
}

/// Self-recovery pair: `d = 3`, `r = (0.15, 0.25)`, `rho = 2^-6`, placed by
/// the identity or by a random frame.
pub fn recovery_pair(random_frame: bool, seed: u64) -> Result<(Radii, Frame, Region, Region)> {
    let rd = Radii::new(vec![0.15, 0.25], 2f64.powi(-6))?;
    let frame = if random_frame {
        Frame::random(3, 1.0, &mut Stream::new(seed, rng::label("recovery_frame"), 0))
    } else {
        Frame::identity(3)
    };
    let (e, f) = geometry::make_sphere_pair(&rd, &frame)?;
    Ok((rd, frame, e, f))
}

fn c_recover(consts: &Constants, seed: u64) -> Result<f64> {
    let mut m = f64::INFINITY;
    for random in [false, true] {
        let (_, _, e, f) = recovery_pair(random, seed)?;
        let rep = lab::recovery_compare(&e, &f, 200_000, rng::derive_seed(seed, random as u64), consts);
        if let Some((stage, msg)) = rep.failed {
            return Err(Error::Degenerate(format!("recovery failed at {stage:?}: {msg}")));
        }
        m = m.min(rep.t_ratio).min(rep.e_cover).min(rep.f_cover);
    }
    Ok(m)
}

/// Measure every key of `suite` (and of cheaper suites).
pub fn measure(suite: Suite, consts: &Constants, seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let want = |k: &str| key(k).map(|k| k.suite <= suite).unwrap_or(false);
    let mut out = Vec::new();
    out.push(("c0_d2", c0(2, rng::derive_seed(seed, 2))?));
    out.push(("c0_d3", c0(3, rng::derive_seed(seed, 3))?));
    if want("c_up_d2") {
        out.push(("c_up_d2", c_up(2, rng::derive_seed(seed, 12))?));
        out.push(("c_up_d3", c_up(3, rng::derive_seed(seed, 13))?));
    }
    out.push(("c_taylor", c_taylor(rng::derive_seed(seed, 20))?));
    let clouds = cloud_suite(100, consts.get("c_stop")?, rng::derive_seed(seed, 21))?;
    out.push(("c_check", min_max(clouds.iter().map(|c| c.stability), false)));
    out.push(("c_det", min_max(clouds.iter().map(|c| c.det_ratio), false)));
    if want("c_alpha") {
        let c_stop = consts.get("c_stop")?;
        let pairs = tower_pairs();
        let tw: Vec<TowerOutcome> = pairs
            .iter()
            .enumerate()
            .map(|(i, (k, rho, d))| tower_outcome(*k, *rho, *d, c_stop, lab::record_seed(rng::derive_seed(seed, 30), i)))
            .collect::<Result<_>>()?;
        let col = |f: fn(&TowerOutcome) -> f64| tw.iter().map(f).collect::<Vec<f64>>();
        out.push(("c_alpha", min_max(col(|t| t.alpha_ratio), false)));
        out.push(("c_infl", min_max(col(|t| t.infl), false)));
        out.push(("c_infl_ab", min_max(col(|t| t.infl_ab), false)));
        out.push(("c_ub", min_max(col(|t| t.ub), true)));
        out.push(("c_vol", min_max(col(|t| t.vol), true)));
        out.push(("c_slice", min_max(col(|t| t.slice), false)));
        out.push(("rho_scale_c", lab::median(&col(|t| t.rho_scale))));
    }
    out.push(("c_delta2", c_delta2(consts, rng::derive_seed(seed, 40))?));
    if want("c_recover") {
        out.push(("c_recover", c_recover(consts, rng::derive_seed(seed, 50))?));
    }
    Ok(out)
}

/// Compare fresh measurements with the pinned table.
pub fn check(measured: &[(&'static str, f64)], consts: &Constants) -> Result<Vec<Measurement>> {
    measured
        .iter()
        .map(|(name, m)| {
            let k = key(name)?;
            let pinned = consts.get(name)?;
            Ok(Measurement { name: k.name, bound: k.bound, measured: *m, pinned, pass: consistent(k.bound, *m, pinned) })
        })
        .collect()
}

/// The table with the measured keys replaced.
pub fn repin(consts: &Constants, measured: &[(&'static str, f64)]) -> Constants {
    let mut out = consts.clone();
    for (k, v) in measured {
        out.set(k, *v);
    }
    out
}
