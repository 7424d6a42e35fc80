use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Radii, Region, MAX_DIM};
use crate::rng::{self, Accumulator, Stream};

/// Which branch of the inclusion argument a radii tuple falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InclusionCase {
    /// `r_{d-1} <= rho^{1/2}`.
    AllThin,
    /// `r_1 >= rho^{1/2}`.
    AllThick,
    /// `r_k <= rho^{1/2} <= r_{k+1}`.
    Mixed { k: usize },
}

impl InclusionCase {
    pub fn of(rd: &Radii) -> Self {
        let k = rd.split_index();
        if k == rd.dim() - 1 {
            InclusionCase::AllThin
        } else if k == 0 {
            InclusionCase::AllThick
        } else {
            InclusionCase::Mixed { k }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub case: InclusionCase,
    pub samples: u64,
    pub passed: u64,
    pub pass_fraction: f64,
}

/// Consecutive box misses tolerated before sampling of `E(cr; c rho)` is
/// declared to have failed.
pub const MAX_MISSES: u64 = 1_000_000;

#[derive(Default)]
struct InclusionAcc {
    n: u64,
    passed: u64,
    stalled: bool,
}

impl Accumulator for InclusionAcc {
    fn merge(self, o: Self) -> Self {
        Self { n: self.n + o.n, passed: self.passed + o.passed, stalled: self.stalled || o.stalled }
    }
}

fn check_small(rd: &Radii) -> Result<()> {
    let rho = rd.rho();
    if !rd.is_admissible() {
        return Err(Error::Precondition(format!("radii must be admissible ({:?})", rd.violation())));
    }
    if rho > 2f64.powi(-6) {
        return Err(Error::Precondition(format!("rho = {rho} exceeds 2^-6")));
    }
    for r in rd.r() {
        if *r > 0.125 {
            return Err(Error::Precondition(format!("r_i = {r} exceeds 2^-3")));
        }
        if rho > r / 8.0 {
            return Err(Error::Precondition(format!("rho = {rho} exceeds r_i / 8 = {}", r / 8.0)));
        }
    }
    Ok(())
}

/// Draw `x` in `E(cr; c rho)` and `s` with `|s_i - x_i| < c rho / r_i`, and
/// count how often `x - (s, sqrt(1 - |s|^2))` lands in `F(r; rho)`.
pub fn verify_inclusion(rd: &Radii, c: f64, n: usize, seed: u64) -> Result<InclusionReport> {
    check_small(rd)?;
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Parameter(format!("c must lie in (0, 1], got {c}")));
    }
    if n == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let d = rd.dim();
    let inner = Region::SphereE(Radii::relaxed(rd.r().iter().map(|r| c * r).collect(), c * rd.rho())?);
    let f = Region::SphereF(rd.clone());
    let bbox = inner.bounding_box();
    let widths: Vec<f64> = rd.r().iter().map(|r| c * rd.rho() / r).collect();
    let acc: InclusionAcc = rng::run_blocks(seed, rng::label("verify_inclusion"), n, |s: &mut Stream, count| {
        let mut acc = InclusionAcc::default();
        let mut x = [0.0; MAX_DIM];
        let mut y = [0.0; MAX_DIM];
        for _ in 0..count {
            let mut misses = 0;
            loop {
                bbox.sample_into(s, &mut x[..d]);
                if inner.contains(&x[..d]) {
                    break;
                }
                misses += 1;
                if misses >= MAX_MISSES {
                    acc.stalled = true;
                    return acc;
                }
            }
            let mut s2 = 0.0;
            for i in 0..d - 1 {
                let si = x[i] + s.uniform_in(-widths[i], widths[i]);
                s2 += si * si;
                y[i] = x[i] - si;
            }
            y[d - 1] = x[d - 1] - (1.0 - s2).sqrt();
            acc.n += 1;
            if f.contains(&y[..d]) {
                acc.passed += 1;
            }
        }
        acc
    });
    if acc.stalled {
        return Err(Error::Sampling(format!(
            "no point of E(c r; c rho) found in {MAX_MISSES} consecutive box draws (c = {c})"
        )));
    }
    Ok(InclusionReport {
        case: InclusionCase::of(rd),
        samples: acc.n,
        passed: acc.passed,
        pass_fraction: acc.passed as f64 / acc.n as f64,
    })
}

/// `|sqrt(1-|y|^2) + sqrt(1-|t|^2) - sqrt(1-|y|^2-|t|^2) - 1|`.
pub fn reduction_lhs(y: &[f64], t: &[f64]) -> Result<f64> {
    let y2: f64 = y.iter().map(|v| v * v).sum();
    let t2: f64 = t.iter().map(|v| v * v).sum();
    if y2 + t2 >= 1.0 {
        return Err(Error::Domain(format!("|y|^2 + |t|^2 = {} must be below 1", y2 + t2)));
    }
    // grouped so the value is exactly zero when either argument vanishes
    Ok((((1.0 - y2).sqrt() - (1.0 - y2 - t2).sqrt()) + ((1.0 - t2).sqrt() - 1.0)).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub max_ratio: f64,
    pub samples: u64,
    /// Split index `k`: `t` has `k` coordinates, `y` the remaining ones.
    pub k: usize,
    /// `r_1 >= rho^{3/4}`.
    pub thick_branch: bool,
    /// `r_{d-1} <= rho^{1/4}`.
    pub thin_branch: bool,
    pub c_taylor: f64,
    pub pass: bool,
}

#[derive(Default)]
struct MaxAcc(f64, u64);

impl Accumulator for MaxAcc {
    fn merge(self, o: Self) -> Self {
        MaxAcc(self.0.max(o.0), self.1 + o.1)
    }
}

/// Sample `t` with `|t_i| < rho / r_i` (`i <= k`) and `y` with
/// `|y_i| < r_i` (`i > k`) and return `max LHS / rho`.
pub fn taylor_reduction_check(rd: &Radii, n: usize, seed: u64, c_taylor: f64) -> Result<TaylorReport> {
    if n == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let d = rd.dim();
    let k = rd.split_index();
    let rho = rd.rho();
    let r = rd.r();
    let acc: MaxAcc = rng::run_blocks(seed, rng::label("taylor_reduction"), n, |s, count| {
        let mut acc = MaxAcc::default();
        let mut t = [0.0; MAX_DIM];
        let mut y = [0.0; MAX_DIM];
        for _ in 0..count {
            for i in 0..k {
                t[i] = s.uniform_in(-rho / r[i], rho / r[i]);
            }
            for i in k..d - 1 {
                y[i - k] = s.uniform_in(-r[i], r[i]);
            }
            if let Ok(v) = reduction_lhs(&y[..d - 1 - k], &t[..k]) {
                acc.0 = acc.0.max(v / rho);
                acc.1 += 1;
            }
        }
        acc
    });
    Ok(TaylorReport {
        max_ratio: acc.0,
        samples: acc.1,
        k,
        thick_branch: r[0] >= rho.powf(0.75),
        thin_branch: r[d - 2] <= rho.powf(0.25),
        c_taylor,
        pass: acc.0 <= c_taylor,
    })
}
