use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Radii;
use crate::lab::{log_slope, pair_report, record_seed, PairSurface};
use crate::rng::{self, Accumulator, Stream};

/// Slice set `E~(s~)` described by its membership inequalities.
///
/// With `x_I` the first `k` coordinates and `s_II` the coordinates of `s~`
/// past `k`, members satisfy
/// `floor rho/r_i < |x_i| < upper rho/r_i` (`i <= k`),
/// `|x_i - s_i (sqrt(1-|x_I|^2) - 1)| < upper rho/r_i` (`i > k`) and
/// `|x_d - sqrt(1-|s_II|^2) (sqrt(1-|x_I|^2) - 1)| < upper rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSet {
    pub radii: Radii,
    /// `(s_2, ..., s_{d-1})`.
    pub s_tilde: Vec<f64>,
    /// Split index, clamped to `1..=d-2`.
    pub k: usize,
    pub upper: f64,
    pub floor: f64,
}

impl SliceSet {
    pub fn new(rd: &Radii, s_tilde: &[f64], upper: f64, floor: f64) -> Result<Self> {
        let d = rd.dim();
        if d < 3 {
            return Err(Error::Parameter("slice sets need d >= 3".into()));
        }
        if s_tilde.len() != d - 2 {
            return Err(Error::Shape { expected: d - 2, got: s_tilde.len() });
        }
        if !(upper > 0.0 && floor >= 0.0 && floor < upper) {
            return Err(Error::Parameter(format!("need 0 <= floor < upper, got {floor}, {upper}")));
        }
        let k = rd.split_index().clamp(1, d - 2);
        Ok(Self { radii: rd.clone(), s_tilde: s_tilde.to_vec(), k, upper, floor })
    }

    fn s(&self, i: usize) -> f64 {
        // s~ holds s_2.. (0-based index 1..)
        self.s_tilde[i - 1]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d = self.radii.dim();
        let (r, rho, k) = (self.radii.r(), self.radii.rho(), self.k);
        let mut xi2 = 0.0;
        for i in 0..k {
            let a = x[i].abs();
            if a >= self.upper * rho / r[i] || a <= self.floor * rho / r[i] {
                return false;
            }
            xi2 += x[i] * x[i];
        }
        if xi2 >= 1.0 {
            return false;
        }
        let bend = (1.0 - xi2).sqrt() - 1.0;
        let mut s2 = 0.0;
        for i in k..d - 1 {
            let si = self.s(i);
            s2 += si * si;
            if (x[i] - si * bend).abs() >= self.upper * rho / r[i] {
                return false;
            }
        }
        (x[d - 1] - (1.0 - s2).sqrt() * bend).abs() < self.upper * rho
    }

    /// `(t, sqrt(1-|t|^2)) - (s, sqrt(1-|s|^2))` with `s = (s_1, s~)` and
    /// `t` drawn from the fiber box: `2 floor rho/r_i <= |t_i - s_i| < rho/r_i`
    /// for `i <= k`, `|t_i - s_i sqrt(1-|t_I|^2)| < rho/(2 r_i)` otherwise.
    pub fn generate(&self, s1: f64, stream: &mut Stream) -> Vec<f64> {
        let d = self.radii.dim();
        let (r, rho, k) = (self.radii.r(), self.radii.rho(), self.k);
        let mut s = vec![s1];
        s.extend(&self.s_tilde);
        let mut t = vec![0.0; d - 1];
        let mut ti2 = 0.0;
        for i in 0..k {
            let w = rho / r[i];
            let lo = (2.0 * self.floor * w).min(w);
            let m = stream.uniform_in(lo, w);
            t[i] = s[i] + if stream.uniform() < 0.5 { -m } else { m };
            ti2 += t[i] * t[i];
        }
        for i in k..d - 1 {
            let w = 0.5 * rho / r[i];
            t[i] = s[i] * (1.0 - ti2).sqrt() + stream.uniform_in(-w, w);
        }
        let gt = (1.0 - t.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let gs = (1.0 - s.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut x: Vec<f64> = t.iter().zip(&s).map(|(t, s)| t - s).collect();
        x.push(gt - gs);
        x
    }
}

/// Membership of `x` in the slice set of `s~`.
pub fn slice_membership(x: &[f64], rd: &Radii, s_tilde: &[f64], upper: f64, floor: f64) -> Result<bool> {
    if x.len() != rd.dim() {
        return Err(Error::Shape { expected: rd.dim(), got: x.len() });
    }
    Ok(SliceSet::new(rd, s_tilde, upper, floor)?.contains(x))
}

pub const DECAY_CSV_HEADER: &str = "rho,ratio,overlap,fit_exponent";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub rho: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// Mean fraction of one slice's samples lying in another slice; NaN on
    /// the paraboloid, where the sphere slices do not apply.
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub surface: PairSurface,
    pub a: f64,
    pub b: f64,
    pub rows: Vec<DecayRow>,
    /// Slope of `log ratio` against `log rho`.
    pub fit_exponent: f64,
}

impl DecayTable {
    /// `ratio(rho) / ratio(rho / 2)` for consecutive rows.
    pub fn halving_factors(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[0].ratio / w[1].ratio).collect()
    }

    pub fn ratio_spread(&self) -> f64 {
        crate::lab::spread(&self.rows.iter().map(|r| r.ratio).collect::<Vec<_>>())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(DECAY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.rho, r.ratio, r.overlap, self.fit_exponent));
        }
        out
    }
}

#[derive(Default)]
struct OverlapAcc(u64, u64);

impl Accumulator for OverlapAcc {
    fn merge(self, o: Self) -> Self {
        OverlapAcc(self.0 + o.0, self.1 + o.1)
    }
}

/// Empirical overlap of `n_slices` slice sets with `s_2` spread evenly over
/// `(-r_2, r_2)` (`d = 3`).
pub fn slice_overlap(rd: &Radii, n_slices: usize, n: usize, seed: u64, upper: f64, floor: f64) -> Result<f64> {
    if rd.dim() != 3 {
        return Err(Error::Parameter("slice overlap is defined for d = 3".into()));
    }
    if n_slices < 2 {
        return Err(Error::Parameter("need at least two slices".into()));
    }
    let r = rd.r();
    let slices: Vec<SliceSet> = (0..n_slices)
        .map(|j| {
            let s2 = -r[1] + (j as f64 + 0.5) * 2.0 * r[1] / n_slices as f64;
            SliceSet::new(rd, &[s2], upper, floor)
        })
        .collect::<Result<_>>()?;
    let acc: OverlapAcc = rng::run_blocks(seed, rng::label("slice_overlap"), n, |s, count| {
        let mut acc = OverlapAcc::default();
        for _ in 0..count {
            let j = s.index(n_slices);
            let s1 = s.uniform_in(-r[0], r[0]);
            let x = slices[j].generate(s1, s);
            for (l, other) in slices.iter().enumerate() {
                if l != j {
                    acc.1 += 1;
                    acc.0 += other.contains(&x) as u64;
                }
            }
        }
        acc
    });
    Ok(acc.0 as f64 / acc.1 as f64)
}

/// Ratio decay table for `r = (rho^a, rho^b)` in `d = 3`.
#[allow(clippy::too_many_arguments)]
pub fn disjointness_demo(
    rhos: &[f64],
    a: f64,
    b: f64,
    surface: PairSurface,
    n: usize,
    seed: u64,
    upper: f64,
    floor: f64,
) -> Result<DecayTable> {
    if rhos.len() < 2 {
        return Err(Error::Parameter("need at least two rho values".into()));
    }
    let cases: Vec<Radii> = rhos.iter().map(|rho| Radii::relaxed(vec![rho.powf(a), rho.powf(b)], *rho)).collect::<Result<_>>()?;
    let rows: Vec<Result<DecayRow>> = cases
        .iter()
        .enumerate()
        .map(|(i, rd)| {
            let s = record_seed(seed, i);
            let q = pair_report(rd, surface, n, s)?;
            let overlap = match surface {
                PairSurface::Sphere => slice_overlap(rd, 4, (n / 10).max(1000), rng::derive_seed(s, 3), upper, floor)?,
                PairSurface::Paraboloid => f64::NAN,
            };
            Ok(DecayRow { rho: rd.rho(), ratio: q.ratio, ratio_se: q.ratio * q.ratio_rel_error(3), overlap })
        })
        .collect();
    let rows: Vec<DecayRow> = rows.into_iter().collect::<Result<_>>()?;
    let fit_exponent = log_slope(
        &rows.iter().map(|r| r.rho).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.ratio).collect::<Vec<_>>(),
    );
    Ok(DecayTable { surface, a, b, rows, fit_exponent })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degenerate(rho: f64) -> Radii {
        Radii::relaxed(vec![rho.powf(0.9), rho.powf(0.1)], rho).unwrap()
    }

    #[test]
    fn origin_fails_floor() {
        let rd = degenerate(2f64.powi(-6));
        assert!(!slice_membership(&[0.0; 3], &rd, &[0.1], 4.0, 0.25).unwrap());
    }

    #[test]
    fn generated_points_are_members_for_any_s1() {
        let rd = degenerate(2f64.powi(-6));
        let set = SliceSet::new(&rd, &[0.3], 4.0, 0.25).unwrap();
        assert_eq!(set.k, 1);
        let mut s = Stream::new(1, 2, 3);
        let r1 = rd.r()[0];
        for i in 0..2000 {
            let s1 = -r1 + 2.0 * r1 * (i % 10) as f64 / 10.0;
            let x = set.generate(s1, &mut s);
            assert!(set.contains(&x), "{x:?}");
        }
    }

    #[test]
    fn degenerate_slices_separate() {
        let o_hi = slice_overlap(&degenerate(2f64.powi(-4)), 4, 20_000, 1, 4.0, 0.25).unwrap();
        let o_lo = slice_overlap(&degenerate(2f64.powi(-10)), 4, 20_000, 1, 4.0, 0.25).unwrap();
        assert!(o_lo < o_hi, "{o_hi} -> {o_lo}");
        let rho = 2f64.powi(-8);
        let knapp = Radii::relaxed(vec![rho.sqrt(); 2], rho).unwrap();
        let o_k = slice_overlap(&knapp, 4, 20_000, 1, 4.0, 0.25).unwrap();
        assert!(o_k > o_lo);
    }

    #[test]
    fn shape_errors() {
        let rd = degenerate(0.1);
        assert!(slice_membership(&[0.0; 2], &rd, &[0.0], 4.0, 0.25).is_err());
        assert!(SliceSet::new(&rd, &[0.0, 0.0], 4.0, 0.25).is_err());
        let d2 = Radii::relaxed(vec![0.3], 0.1).unwrap();
        assert!(SliceSet::new(&d2, &[], 4.0, 0.25).is_err());
    }
}
