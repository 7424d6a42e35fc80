//! Experiment drivers: sweeps, proof-mechanism checks, refinement towers,
//! degeneracy probes and the constructive comparison pipeline.

mod inclusion;
mod recover;
mod slices;
mod tower;

pub use inclusion::{
    reduction_lhs, taylor_reduction_check, verify_inclusion, InclusionCase, InclusionReport, TaylorReport,
};
pub use recover::{admissible_readoff, recovery_compare, RecoveryStage, RecoveryReport};
pub use slices::{disjointness_demo, slice_membership, DecayRow, DecayTable, SliceSet, DECAY_CSV_HEADER};
pub use tower::{
    build_tower, ellipsoid_containment, inflation_lower_bound_check, slicing_lower_bound_check, ChainTower,
    ContainmentReport, InflationReport, SlicingReport, TowerConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Frame, Radii, Region};
use crate::rng;
use crate::surface::{self, FormOptions, Kernel, QexReport};

/// Which surface a pair is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSurface {
    Sphere,
    Paraboloid,
}

impl PairSurface {
    pub fn kernel(self) -> Kernel {
        match self {
            PairSurface::Sphere => Kernel::Sphere,
            PairSurface::Paraboloid => Kernel::Paraboloid,
        }
    }

    /// The unframed pair: sphere pair at the origin, paraboloid pair with
    /// both centres at the origin.
    pub fn pair(self, rd: &Radii) -> Result<(Region, Region)> {
        let d = rd.dim();
        match self {
            PairSurface::Sphere => geometry::make_sphere_pair(rd, &Frame::identity(d)),
            PairSurface::Paraboloid => geometry::make_parab_pair(rd, &vec![0.0; d], &vec![0.0; d]),
        }
    }
}

/// Radii families indexed by `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// `r_i = rho`.
    Ball,
    /// `r_i = rho^{1/2}`.
    Knapp,
    /// `r_i = rho^{a_i}`, admissible or not.
    Power(Vec<f64>),
}

impl Family {
    pub fn radii(&self, rho: f64, d: usize) -> Result<Radii> {
        match self {
            Family::Ball => geometry::special_radii(geometry::SpecialKind::Ball, rho, d),
            Family::Knapp => geometry::special_radii(geometry::SpecialKind::Knapp, rho, d),
            Family::Power(a) => {
                if a.len() != d - 1 {
                    return Err(Error::Shape { expected: d - 1, got: a.len() });
                }
                Radii::relaxed(a.iter().map(|a| rho.powf(*a)).collect(), rho)
            }
        }
    }

    pub fn cases(&self, rhos: &[f64], d: usize) -> Result<Vec<Radii>> {
        rhos.iter().map(|rho| self.radii(*rho, d)).collect()
    }
}

/// Dyadic grid `r_i = 2^{-j_i}` of admissible radii at a fixed `rho`,
/// `j_i` ranging over `1..=levels` and `rho <= r_i`.
pub fn admissible_grid(d: usize, rho: f64, levels: u32) -> Vec<Radii> {
    let k = d - 1;
    let mut out = Vec::new();
    let mut idx = vec![1u32; k];
    loop {
        let r: Vec<f64> = idx.iter().map(|j| 2f64.powi(-(*j as i32))).collect();
        if let Ok(rd) = Radii::new(r, rho) {
            out.push(rd);
        }
        let mut p = 0;
        loop {
            if p == k {
                return out;
            }
            idx[p] += 1;
            if idx[p] <= levels {
                break;
            }
            idx[p] = 1;
            p += 1;
        }
    }
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub radii: Radii,
    pub surface: PairSurface,
    pub seed: u64,
    pub n: usize,
    pub outcome: std::result::Result<QexReport, Error>,
}

impl SweepRecord {
    pub fn csv_header(d: usize) -> String {
        let mut cols = vec!["d".to_string()];
        cols.extend((1..d).map(|i| format!("r_{i}")));
        cols.extend(["rho", "admissible", "measE", "measF", "t", "se", "ratio", "alpha", "beta", "seed"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let d = self.radii.dim();
        let mut cols = vec![d.to_string()];
        cols.extend(self.radii.r().iter().map(|r| format!("{r:e}")));
        cols.push(format!("{:e}", self.radii.rho()));
        cols.push(self.radii.is_admissible().to_string());
        match &self.outcome {
            Ok(q) => {
                for v in [q.meas_e.value, q.meas_f.value, q.t_value.value, q.t_value.std_error, q.ratio, q.alpha, q.beta] {
                    cols.push(format!("{v:e}"));
                }
            }
            Err(_) => cols.extend(std::iter::repeat_n("nan".to_string(), 7)),
        }
        cols.push(self.seed.to_string());
        cols.join(",")
    }

    pub fn ratio(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|q| q.ratio)
    }
}

/// Seed of record `index` of a sweep started from `seed`.
pub fn record_seed(seed: u64, index: usize) -> u64 {
    rng::derive_seed(seed, index as u64)
}

/// Estimate the qex report of one unframed pair.
pub fn pair_report(rd: &Radii, surface: PairSurface, n: usize, seed: u64) -> Result<QexReport> {
    let (e, f) = surface.pair(rd)?;
    surface::qex_report_with(&e, &f, &FormOptions::new(n, seed).kernel(surface.kernel()))
}

/// One record per radii tuple; estimator failures stay in their record.
pub fn sweep(cases: &[Radii], surface: PairSurface, n: usize, seed: u64) -> Vec<SweepRecord> {
    rng::map_tasks(cases, |i, rd| {
        let s = record_seed(seed, i);
        SweepRecord { radii: rd.clone(), surface, seed: s, n, outcome: pair_report(rd, surface, n, s) }
    })
}

/// `C eps^{-C'} (alpha beta)^{1/(d-1)}`.
pub fn rho_scale(alpha: f64, beta: f64, d: usize, eps_hat: f64, c: f64, c_prime: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::Parameter(format!("dimension must be at least 2, got {d}")));
    }
    if !(alpha > 0.0 && beta > 0.0 && eps_hat > 0.0 && c > 0.0) {
        return Err(Error::Domain(format!("rho_scale needs positive inputs (alpha {alpha}, beta {beta}, eps {eps_hat})")));
    }
    Ok(c * eps_hat.powf(-c_prime) * (alpha * beta).powf(1.0 / (d as f64 - 1.0)))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) }
}

/// `max / min` of a positive sequence.
pub fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}
