//! Sphere sampling, the averaging operator at a point and the bilinear form
//! `T(E, F) = <T chi_E, chi_F>`.
//!
//! Every estimator here integrates the incidence form
//!
//! ```text
//! I(E, F) = ∫ chi_E(x) ∫ chi_F(x + w) dmu(w) dx
//! ```
//!
//! where `mu` is surface measure on the sphere, or `t -> -(t, |t|^2)` pushed
//! forward from Lebesgue measure for the paraboloid. For the sphere this is
//! `T(E, F)` because `sigma` is symmetric. Only displacements in
//! `D = box(F) - box(E)` contribute, which is what the proposals exploit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, BBox, MeasureEstimate, Radii, Region, MAX_DIM};
use crate::rng::{self, Moments, Stream};

/// Surface area of `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

/// Uniform point on `S^{d-1}`.
pub fn sphere_sample(d: usize, stream: &mut Stream) -> Vec<f64> {
    let mut out = vec![0.0; d];
    sphere_sample_into(stream, &mut out);
    out
}

#[inline]
pub fn sphere_sample_into(stream: &mut Stream, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for o in out.iter_mut() {
            *o = stream.normal();
            s += *o * *o;
        }
        if s > 1e-300 {
            let inv = 1.0 / s.sqrt();
            out.iter_mut().for_each(|o| *o *= inv);
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc,
    GraphQuadrature,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::GraphQuadrature => "graph_quadrature",
        }
    }
}

/// A Monte Carlo or quadrature value with its error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub method: Method,
}

impl Estimate {
    fn from_moments(m: &Moments, seed: u64) -> Self {
        Self {
            value: m.mean(),
            std_error: m.std_error(),
            n_samples: m.n,
            seed,
            method: Method::Mc,
        }
    }

    /// `|a - b| <= k * sqrt(se_a^2 + se_b^2)`
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.std_error.hypot(other.std_error)
    }

    /// CSV row `method,d,params,value,std_error,n,seed`.
    pub fn csv_row(&self, d: usize, params: &str) -> String {
        format!(
            "{},{},{},{:.16e},{:.16e},{},{}",
            self.method.as_str(),
            d,
            params,
            self.value,
            self.std_error,
            self.n_samples,
            self.seed
        )
    }
}

pub const ESTIMATE_CSV_HEADER: &str = "method,d,params,value,std_error,n,seed";

/// How to evaluate `T chi_E(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointMode {
    Mc { n: usize, seed: u64 },
    /// Midpoint tensor grid of the given pitch over both hemispheres.
    Graph { step: f64 },
}

/// Radius of the graph-coordinate disc used by the quadrature.
pub const GRAPH_S_MAX: f64 = 0.9;

/// `T chi_E(x) = sigma({w : x - w in E})`.
pub fn t_indicator_at(x: &[f64], e: &Region, mode: PointMode) -> Result<Estimate> {
    let d = e.dim();
    if x.len() != d {
        return Err(Error::Shape { expected: d, got: x.len() });
    }
    match mode {
        PointMode::Mc { n, seed } => {
            if n == 0 {
                return Err(Error::Parameter("need at least one sample".into()));
            }
            let area = sphere_area(d);
            let m: Moments = rng::run_blocks(seed, rng::label("t_indicator_at"), n, |s, count| {
                let mut w = [0.0; MAX_DIM];
                let mut p = [0.0; MAX_DIM];
                let mut m = Moments::default();
                for _ in 0..count {
                    sphere_sample_into(s, &mut w[..d]);
                    for i in 0..d {
                        p[i] = x[i] - w[i];
                    }
                    m.push(if e.contains(&p[..d]) { area } else { 0.0 });
                }
                m
            });
            Ok(Estimate::from_moments(&m, seed))
        }
        PointMode::Graph { step } => {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Parameter(format!("quadrature step must be positive, got {step}")));
            }
            let fine = graph_sum(x, e, step);
            let coarse = graph_sum(x, e, 2.0 * step);
            let cells = (2.0 * GRAPH_S_MAX / step).ceil() as u64;
            Ok(Estimate {
                value: fine,
                std_error: (fine - coarse).abs(),
                n_samples: 2 * cells.pow(d as u32 - 1),
                seed: 0,
                method: Method::GraphQuadrature,
            })
        }
    }
}

fn graph_sum(x: &[f64], e: &Region, step: f64) -> f64 {
    let d = x.len();
    let k = d - 1;
    let cells = (2.0 * GRAPH_S_MAX / step).ceil() as usize;
    let start = -0.5 * cells as f64 * step;
    let cell_vol = step.powi(k as i32);
    let mut idx = vec![0usize; k];
    let mut p = [0.0; MAX_DIM];
    let mut total = 0.0;
    loop {
        let mut s2 = 0.0;
        for i in 0..k {
            let s = start + (idx[i] as f64 + 0.5) * step;
            p[i] = x[i] - s;
            s2 += s * s;
        }
        if s2 <= GRAPH_S_MAX * GRAPH_S_MAX {
            let g = (1.0 - s2).sqrt();
            for sign in [1.0, -1.0] {
                p[k] = x[k] - sign * g;
                if e.contains(&p[..d]) {
                    total += cell_vol / g;
                }
            }
        }
        let mut j = 0;
        loop {
            if j == k {
                return total;
            }
            idx[j] += 1;
            if idx[j] < cells {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Which set the outer point is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Decided by a fixed-size pilot run.
    Auto,
    E,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    /// Smallest effective area among the applicable proposals.
    Auto,
    Uniform,
    Cap,
    GraphBox,
}

/// The measure integrated against in the incidence form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Sphere,
    Paraboloid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormOptions {
    pub n: usize,
    pub seed: u64,
    pub side: Side,
    pub proposal: ProposalKind,
    pub kernel: Kernel,
}

impl FormOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, side: Side::Auto, proposal: ProposalKind::Auto, kernel: Kernel::Sphere }
    }

    pub fn side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn proposal(mut self, proposal: ProposalKind) -> Self {
        self.proposal = proposal;
        self
    }

    pub fn kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }
}

/// Importance proposal for the displacement `w`; `draw` returns `1/q(w)`,
/// or zero when the draw cannot contribute.
#[derive(Debug, Clone)]
enum Proposal {
    Uniform { area: f64 },
    Cap { rot: DMatrix<f64>, cos_theta: f64, area: f64 },
    GraphBox { axis: usize, sign: f64, lo: Vec<f64>, hi: Vec<f64>, vol: f64, min_abs: f64 },
    ParabBox { lo: Vec<f64>, hi: Vec<f64>, vol: f64, t2_max: f64 },
}

impl Proposal {
    /// Upper bound of the weight, the figure of merit for choosing.
    fn effective_area(&self) -> f64 {
        match self {
            Proposal::Uniform { area } | Proposal::Cap { area, .. } => *area,
            Proposal::GraphBox { vol, min_abs, .. } => vol / min_abs,
            Proposal::ParabBox { vol, .. } => *vol,
        }
    }

    #[inline]
    fn draw(&self, s: &mut Stream, w: &mut [f64]) -> f64 {
        let d = w.len();
        match self {
            Proposal::Uniform { area } => {
                sphere_sample_into(s, w);
                *area
            }
            Proposal::Cap { rot, cos_theta, area } => {
                let mut v = [0.0; 3];
                if d == 2 {
                    let theta = cos_theta.acos();
                    let phi = s.uniform_in(-theta, theta);
                    v[0] = phi.sin();
                    v[1] = phi.cos();
                } else {
                    let z = s.uniform_in(*cos_theta, 1.0);
                    let phi = s.uniform_in(0.0, std::f64::consts::TAU);
                    let rr = (1.0 - z * z).max(0.0).sqrt();
                    v[0] = rr * phi.cos();
                    v[1] = rr * phi.sin();
                    v[2] = z;
                }
                for i in 0..d {
                    w[i] = (0..d).map(|j| rot[(i, j)] * v[j]).sum();
                }
                *area
            }
            Proposal::GraphBox { axis, sign, lo, hi, vol, min_abs } => {
                let mut s2 = 0.0;
                let mut j = 0;
                for i in 0..d {
                    if i == *axis {
                        continue;
                    }
                    w[i] = s.uniform_in(lo[j], hi[j]);
                    s2 += w[i] * w[i];
                    j += 1;
                }
                if s2 >= 1.0 - min_abs * min_abs {
                    w[*axis] = f64::NAN;
                    return 0.0;
                }
                let g = (1.0 - s2).sqrt();
                w[*axis] = sign * g;
                vol / g
            }
            Proposal::ParabBox { lo, hi, vol, t2_max } => {
                let mut t2 = 0.0;
                for i in 0..d - 1 {
                    let t = s.uniform_in(lo[i], hi[i]);
                    w[i] = -t;
                    t2 += t * t;
                }
                if t2 > *t2_max {
                    return 0.0;
                }
                w[d - 1] = -t2;
                *vol
            }
        }
    }
}

fn build_proposal(kind: ProposalKind, kernel: Kernel, disp: &BBox) -> Result<Proposal> {
    let d = disp.dim();
    if kernel == Kernel::Paraboloid {
        // w = -(t, |t|^2) in disp: t in -disp', |t|^2 <= -disp_d.lo
        let t2_max = -disp.lo[d - 1];
        let tb = t2_max.max(0.0).sqrt();
        let lo: Vec<f64> = (0..d - 1).map(|i| (-disp.hi[i]).max(-tb)).collect();
        let hi: Vec<f64> = (0..d - 1).map(|i| (-disp.lo[i]).min(tb)).collect();
        let vol = BBox { lo: lo.clone(), hi: hi.clone() }.volume();
        return Ok(Proposal::ParabBox { lo, hi, vol, t2_max });
    }
    let uniform = Proposal::Uniform { area: sphere_area(d) };
    let cap = cap_proposal(disp);
    let graph = graph_box_proposal(disp);
    Ok(match kind {
        ProposalKind::Uniform => uniform,
        ProposalKind::Cap => cap.ok_or_else(|| Error::Parameter("no cap proposal for this pair".into()))?,
        ProposalKind::GraphBox => graph.ok_or_else(|| Error::Parameter("no graph-box proposal for this pair".into()))?,
        ProposalKind::Auto => [Some(uniform), cap, graph]
            .into_iter()
            .flatten()
            .min_by(|a, b| a.effective_area().total_cmp(&b.effective_area()))
            .expect("uniform proposal always present"),
    })
}

/// Cap around the direction of the centre of `disp` containing all of it.
fn cap_proposal(disp: &BBox) -> Option<Proposal> {
    use std::f64::consts::PI;
    let d = disp.dim();
    if d > 3 {
        return None;
    }
    let c = disp.center();
    let h = disp.half_widths();
    let nc = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nc == 0.0 {
        return None;
    }
    let u: Vec<f64> = c.iter().map(|v| v / nc).collect();
    let cos_theta = nc - h.iter().zip(&u).map(|(h, u)| h * u.abs()).sum::<f64>();
    if cos_theta <= -1.0 + 1e-12 {
        return None;
    }
    let cos_theta = cos_theta.min(1.0);
    let area = if d == 2 { 2.0 * cos_theta.acos() } else { 2.0 * PI * (1.0 - cos_theta) };
    let mut pole = vec![0.0; d];
    pole[d - 1] = 1.0;
    let rot = geometry::rotation_between(&pole, &u).unwrap_or_else(|_| -DMatrix::identity(d, d));
    Some(Proposal::Cap { rot, cos_theta, area })
}

/// Graph coordinates over the axis where `disp` stays farthest from zero.
fn graph_box_proposal(disp: &BBox) -> Option<Proposal> {
    let d = disp.dim();
    let (axis, min_abs) = (0..d)
        .filter(|&k| disp.lo[k] > 0.0 || disp.hi[k] < 0.0)
        .map(|k| (k, disp.lo[k].abs().min(disp.hi[k].abs())))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if min_abs >= 1.0 {
        return None;
    }
    let sign = if disp.lo[axis] > 0.0 { 1.0 } else { -1.0 };
    let smax = (1.0 - min_abs * min_abs).sqrt();
    let mut lo = Vec::with_capacity(d - 1);
    let mut hi = Vec::with_capacity(d - 1);
    for i in (0..d).filter(|&i| i != axis) {
        lo.push(disp.lo[i].max(-smax));
        hi.push(disp.hi[i].min(smax));
    }
    let vol = BBox { lo: lo.clone(), hi: hi.clone() }.volume();
    if vol == 0.0 {
        return None;
    }
    Some(Proposal::GraphBox { axis, sign, lo, hi, vol, min_abs })
}

fn run_side(e: &Region, f: &Region, side: Side, prop: &Proposal, n: usize, seed: u64, label: u64) -> Moments {
    let (outer, inner, sign) = match side {
        Side::F => (f, e, -1.0),
        _ => (e, f, 1.0),
    };
    let b = outer.bounding_box();
    let vol = b.volume();
    let d = b.dim();
    rng::run_blocks(seed, label, n, |s, count| {
        let mut p = [0.0; MAX_DIM];
        let mut w = [0.0; MAX_DIM];
        let mut q = [0.0; MAX_DIM];
        let mut m = Moments::default();
        for _ in 0..count {
            b.sample_into(s, &mut p[..d]);
            if !outer.contains(&p[..d]) {
                m.push(0.0);
                continue;
            }
            let weight = prop.draw(s, &mut w[..d]);
            if weight == 0.0 {
                m.push(0.0);
                continue;
            }
            for i in 0..d {
                q[i] = p[i] + sign * w[i];
            }
            m.push(if inner.contains(&q[..d]) { vol * weight } else { 0.0 });
        }
        m
    })
}

/// Pilot sample size used by [`Side::Auto`].
pub const PILOT_SAMPLES: usize = 8192;

/// `T(E, F)` with configurable side, proposal and kernel.
pub fn bilinear_form_with(e: &Region, f: &Region, opts: &FormOptions) -> Result<Estimate> {
    if opts.n == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let d = e.dim();
    if f.dim() != d {
        return Err(Error::Shape { expected: d, got: f.dim() });
    }
    let (eb, fb) = (e.bounding_box(), f.bounding_box());
    let zero = || Estimate { value: 0.0, std_error: 0.0, n_samples: opts.n as u64, seed: opts.seed, method: Method::Mc };
    if eb.is_empty() || fb.is_empty() {
        return Ok(zero());
    }
    let disp = fb.minus(&eb);
    if opts.kernel == Kernel::Sphere && !box_meets_sphere(&disp) {
        return Ok(zero());
    }
    let prop = build_proposal(opts.proposal, opts.kernel, &disp)?;
    let side = match opts.side {
        Side::Auto => {
            let lab = rng::label("form_pilot");
            let pe = run_side(e, f, Side::E, &prop, PILOT_SAMPLES, opts.seed, lab);
            let pf = run_side(e, f, Side::F, &prop, PILOT_SAMPLES, opts.seed, lab);
            if pf.n > 0 && (pe.sum == 0.0 || pf.std_error() < pe.std_error()) && pf.sum > 0.0 {
                Side::F
            } else {
                Side::E
            }
        }
        s => s,
    };
    let m = run_side(e, f, side, &prop, opts.n, opts.seed, rng::label("form"));
    Ok(Estimate::from_moments(&m, opts.seed))
}

fn box_meets_sphere(b: &BBox) -> bool {
    let mut near = 0.0;
    let mut far = 0.0;
    for (l, h) in b.lo.iter().zip(&b.hi) {
        let c = if *l > 0.0 { *l } else if *h < 0.0 { -h } else { 0.0 };
        near += c * c;
        far += l.abs().max(h.abs()).powi(2);
    }
    near <= 1.0 && far >= 1.0
}

/// Plain estimator: `y` uniform in the bounding box of `F`, `w` uniform on
/// the sphere, averaging `vol * sigma_total * chi_F(y) chi_E(y - w)`.
pub fn bilinear_form(e: &Region, f: &Region, n: usize, seed: u64) -> Result<Estimate> {
    bilinear_form_with(e, f, &FormOptions::new(n, seed).side(Side::F).proposal(ProposalKind::Uniform))
}

/// Adjoint estimator: `x` uniform in the bounding box of `E`, uniform `w`,
/// averaging `vol * sigma_total * chi_E(x) chi_F(x + w)`.
pub fn bilinear_form_adjoint(e: &Region, f: &Region, n: usize, seed: u64) -> Result<Estimate> {
    bilinear_form_with(e, f, &FormOptions::new(n, seed).side(Side::E).proposal(ProposalKind::Uniform))
}

/// Scale-free summary of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QexReport {
    pub t_value: Estimate,
    pub meas_e: MeasureEstimate,
    pub meas_f: MeasureEstimate,
    pub ratio: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl QexReport {
    pub fn exponent(d: usize) -> f64 {
        d as f64 / (d as f64 + 1.0)
    }

    pub fn from_parts(t_value: Estimate, meas_e: MeasureEstimate, meas_f: MeasureEstimate, d: usize) -> Result<Self> {
        let t = t_value.value;
        if meas_e.value <= 0.0 || meas_f.value <= 0.0 || t <= 0.0 {
            return Err(Error::Degenerate(format!(
                "|E| = {}, |F| = {}, T = {}",
                meas_e.value, meas_f.value, t
            )));
        }
        let p = Self::exponent(d);
        Ok(Self {
            t_value,
            meas_e,
            meas_f,
            ratio: t / (meas_e.value.powf(p) * meas_f.value.powf(p)),
            alpha: t / meas_e.value,
            beta: t / meas_f.value,
        })
    }

    /// Relative standard error of the ratio, first order in all three inputs.
    pub fn ratio_rel_error(&self, d: usize) -> f64 {
        let p = Self::exponent(d);
        let rt = self.t_value.std_error / self.t_value.value;
        let re = self.meas_e.std_error / self.meas_e.value;
        let rf = self.meas_f.std_error / self.meas_f.value;
        (rt * rt + p * p * (re * re + rf * rf)).sqrt()
    }
}

/// Estimate `|E|`, `|F|` and `T(E, F)` with `n` samples each.
pub fn qex_report(e: &Region, f: &Region, n: usize, seed: u64) -> Result<QexReport> {
    qex_report_with(e, f, &FormOptions::new(n, seed))
}

pub fn qex_report_with(e: &Region, f: &Region, opts: &FormOptions) -> Result<QexReport> {
    let me = geometry::measure(e, opts.n, rng::derive_seed(opts.seed, 1))?;
    let mf = geometry::measure(f, opts.n, rng::derive_seed(opts.seed, 2))?;
    let t = bilinear_form_with(e, f, opts)?;
    QexReport::from_parts(t, me, mf, e.dim())
}

/// Outcome of the `T >= c0 rho^d` check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerCheck {
    pub t: Estimate,
    pub rho_d: f64,
    pub c0: f64,
    pub pass: bool,
}

/// `T(E(r; rho), F(r; rho)) >= c0 rho^d` for the unframed pair.
pub fn rho_d_lower_check(rd: &Radii, n: usize, seed: u64, c0: f64) -> Result<LowerCheck> {
    let d = rd.dim();
    let (e, f) = geometry::make_sphere_pair(rd, &geometry::Frame::identity(d))?;
    let t = bilinear_form_with(&e, &f, &FormOptions::new(n, seed))?;
    let rho_d = rd.rho().powi(d as i32);
    Ok(LowerCheck { t, rho_d, c0, pass: t.value >= c0 * rho_d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_sphere_pair, Frame, Radii};

    #[test]
    fn areas() {
        use std::f64::consts::PI;
        assert_eq!(sphere_area(2), 2.0 * PI);
        assert_eq!(sphere_area(3), 4.0 * PI);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_samples_are_unit_and_centred() {
        let mut s = Stream::new(1, 1, 1);
        let mut mean = [0.0; 2];
        let n = 100_000;
        for _ in 0..n {
            let w = sphere_sample(2, &mut s);
            assert!((w[0].hypot(w[1]) - 1.0).abs() < 1e-14);
            mean[0] += w[0] / n as f64;
            mean[1] += w[1] / n as f64;
        }
        assert!(mean[0].hypot(mean[1]) <= 0.02);
    }

    #[test]
    fn cap_area_law_d3() {
        let mut s = Stream::new(2, 2, 2);
        let n = 200_000;
        for h in [0.05, 0.3, 1.0] {
            let hits = (0..n).filter(|_| sphere_sample(3, &mut s)[2] > 1.0 - h).count();
            let p = h / 2.0;
            let frac = hits as f64 / n as f64;
            assert!((frac - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "h={h} frac={frac}");
        }
    }

    #[test]
    fn sphere_sampling_is_seeded() {
        let a = sphere_sample(4, &mut Stream::new(5, 6, 7));
        let b = sphere_sample(4, &mut Stream::new(5, 6, 7));
        assert_eq!(a, b);
    }

    #[test]
    fn empty_fibre_at_origin() {
        let e = Region::Ball { center: vec![0.0, 0.0], radius: 0.1 };
        let est = t_indicator_at(&[0.0, 0.0], &e, PointMode::Mc { n: 10_000, seed: 1 }).unwrap();
        assert_eq!(est.value, 0.0);
        let est = t_indicator_at(&[0.0, 0.0], &e, PointMode::Graph { step: 0.01 }).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn graph_rejects_bad_step() {
        let e = Region::Ball { center: vec![0.0, 0.0], radius: 0.1 };
        assert!(matches!(t_indicator_at(&[0.0, 0.0], &e, PointMode::Graph { step: 0.0 }), Err(Error::Parameter(_))));
    }

    #[test]
    fn cap_arclength_d2() {
        // 4 asin(0.05), computed independently
        let exact = 0.200_083_427_223_080_06;
        let e = Region::Ball { center: vec![0.0, -1.0], radius: 0.1 };
        let g = t_indicator_at(&[0.0, 0.0], &e, PointMode::Graph { step: 1e-5 }).unwrap();
        assert!((g.value - exact).abs() < 1e-4, "{g:?}");
        let m = t_indicator_at(&[0.0, 0.0], &e, PointMode::Mc { n: 400_000, seed: 3 }).unwrap();
        assert!((m.value - exact).abs() < 3.0 * m.std_error, "{m:?}");
    }

    #[test]
    fn far_apart_pairs_have_no_incidence() {
        let e = Region::Ball { center: vec![0.0, 0.0], radius: 0.1 };
        let f = Region::Ball { center: vec![5.0, 0.0], radius: 0.1 };
        assert_eq!(bilinear_form(&e, &f, 1000, 1).unwrap().value, 0.0);
        assert_eq!(bilinear_form(&e, &e, 1000, 1).unwrap().value, 0.0);
        assert!(bilinear_form(&e, &f, 0, 1).is_err());
    }

    #[test]
    fn proposals_agree_on_basic_pair() {
        let rd = Radii::new(vec![0.25], 1.0 / 16.0).unwrap();
        let (e, f) = make_sphere_pair(&rd, &Frame::identity(2)).unwrap();
        let oracle = 0.028_116_5;
        for side in [Side::E, Side::F] {
            for prop in [ProposalKind::Uniform, ProposalKind::Cap, ProposalKind::GraphBox] {
                let est = bilinear_form_with(&e, &f, &FormOptions::new(200_000, 9).side(side).proposal(prop)).unwrap();
                assert!((est.value - oracle).abs() < 3.5 * est.std_error, "{side:?} {prop:?} {est:?}");
            }
        }
    }

    #[test]
    fn report_identities() {
        let rd = Radii::new(vec![0.2, 0.3], 0.05).unwrap();
        let (e, f) = make_sphere_pair(&rd, &Frame::identity(3)).unwrap();
        let r = qex_report(&e, &f, 50_000, 4).unwrap();
        let t = r.t_value.value;
        assert!((r.alpha * r.meas_e.value - t).abs() <= 1e-12 * t);
        assert!((r.beta * r.meas_f.value - t).abs() <= 1e-12 * t);
        assert_eq!(QexReport::exponent(2), 2.0 / 3.0);
        assert_eq!(QexReport::exponent(3), 0.75);
    }

    #[test]
    fn degenerate_report() {
        let e = Region::Ball { center: vec![0.0, 0.0], radius: 0.1 };
        assert!(matches!(qex_report(&e, &e, 1000, 1), Err(Error::Degenerate(_))));
    }
}
