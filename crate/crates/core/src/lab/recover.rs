use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Constants;
use crate::convex;
use crate::error::{Error, Result};
use crate::geometry::{self, Frame, Radii, Region};
use crate::lab::{build_tower, ellipsoid_containment, rho_scale, TowerConfig};
use crate::rng;
use crate::surface::{self, FormOptions, QexReport};

/// Pipeline stages, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryStage {
    Report,
    Tower,
    Ellipsoid,
    Readoff,
    Compare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub qex: Option<QexReport>,
    pub radii: Option<Radii>,
    pub frame: Option<Frame>,
    /// `T(E~ ∩ E, F~ ∩ F) / T(E, F)`.
    pub t_ratio: f64,
    /// `|E~| / |E|` and `|F~| / |F|`.
    pub e_size: f64,
    pub f_size: f64,
    /// `|E~ ∩ E| / |E|` and `|F~ ∩ F| / |F|`.
    pub e_cover: f64,
    pub f_cover: f64,
    /// `eps^{(d+1)/(d-1)}` with `eps` the measured ratio.
    pub threshold: f64,
    pub failed: Option<(RecoveryStage, String)>,
}

impl RecoveryReport {
    fn empty() -> Self {
        Self {
            qex: None,
            radii: None,
            frame: None,
            t_ratio: f64::NAN,
            e_size: f64::NAN,
            f_size: f64::NAN,
            e_cover: f64::NAN,
            f_cover: f64::NAN,
            threshold: f64::NAN,
            failed: None,
        }
    }

    fn fail(mut self, stage: RecoveryStage, e: Error) -> Self {
        self.failed = Some((stage, e.to_string()));
        self
    }
}

/// Sort radii increasingly, cap them at 1 and `rho` at `r_1`, then enlarge
/// `r_1` and `rho` together until `r_1 >= rho^{1/2} r_{d-1}`.
pub fn admissible_readoff(r: &[f64], rho: f64) -> Result<Radii> {
    let mut r: Vec<f64> = r.iter().map(|v| v.min(1.0)).collect();
    r.sort_by(f64::total_cmp);
    let mut rho = rho.min(r[0]);
    let k = r.len();
    for _ in 0..8 {
        if r[0] >= rho.sqrt() * r[k - 1] {
            break;
        }
        let lambda = rho * r[k - 1] * r[k - 1] / (r[0] * r[0]);
        r[0] = (r[0] * lambda).min(1.0);
        rho = (rho * lambda).min(r[0]);
        let r0 = r[0];
        r.iter_mut().for_each(|v| *v = v.max(r0));
    }
    Radii::new(r, rho)
}

/// Constructive comparison: tower, ellipsoid fit of `F_tau(Omega_1)`, radii
/// read off as `rho / (semi-axes)`, and the basic pair placed at the
/// centroid of the sampled `E` points.
pub fn recovery_compare(e: &Region, f: &Region, n: usize, seed: u64, consts: &Constants) -> RecoveryReport {
    let mut out = RecoveryReport::empty();
    let d = e.dim();
    let k = d - 1;
    let qex = match surface::qex_report(e, f, n, seed) {
        Ok(q) => q,
        Err(err) => return out.fail(RecoveryStage::Report, err),
    };
    out.qex = Some(qex);
    out.threshold = qex.ratio.powf((d as f64 + 1.0) / (d as f64 - 1.0));
    let tower = match build_tower(e, f, &TowerConfig::default(), rng::derive_seed(seed, 10)) {
        Ok(t) => t,
        Err(err) => return out.fail(RecoveryStage::Tower, err),
    };
    let c_stop = consts.get("c_stop").unwrap_or(0.25);
    let cont = match ellipsoid_containment(&tower, convex::default_eta(d), c_stop) {
        Ok(c) => c,
        Err(err) => return out.fail(RecoveryStage::Ellipsoid, err),
    };

    let readoff = || -> Result<(Radii, Frame)> {
        let (c, cp) = (consts.get("rho_scale_c")?, consts.get("rho_scale_c_prime")?);
        let rho = rho_scale(qex.alpha, qex.beta, d, qex.ratio, c, cp)?;
        let (lens, axes) = cont.body.axes();
        // largest semi-axis gives the smallest radius
        let order: Vec<usize> = (0..k).rev().collect();
        let radii = admissible_readoff(&order.iter().map(|i| rho / lens[*i]).collect::<Vec<_>>(), rho)?;
        let pole = &tower.pole;
        let tg = (1.0 - cont.tau.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut tl = DVector::zeros(d);
        tl.rows_mut(0, k).copy_from_slice(&cont.tau);
        tl[k] = tg;
        let v = (pole * tl).normalize();
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d);
        for i in &order {
            let mut a = DVector::zeros(d);
            a.rows_mut(0, k).copy_from(&axes.column(*i));
            let mut b = pole * a;
            b -= &v * v.dot(&b);
            for c in &cols {
                b -= c * c.dot(&b);
            }
            cols.push(b.normalize());
        }
        cols.push(v);
        let mut rot = DMatrix::from_columns(&cols);
        if rot.determinant() < 0.0 {
            rot.column_mut(0).neg_mut();
        }
        let pts = tower.level_points(2);
        let centre: Vec<f64> = if pts.is_empty() {
            tower.x0.clone()
        } else {
            (0..d).map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / pts.len() as f64).collect()
        };
        Ok((radii, Frame::new(rot, DVector::from_vec(centre))?))
    };
    let (radii, frame) = match readoff() {
        Ok(x) => x,
        Err(err) => return out.fail(RecoveryStage::Readoff, err),
    };
    out.radii = Some(radii.clone());
    out.frame = Some(frame.clone());

    let compare = || -> Result<[f64; 5]> {
        let (et, ft) = geometry::make_sphere_pair(&radii, &frame)?;
        let ei = et.clone().intersect(e.clone());
        let fi = ft.clone().intersect(f.clone());
        let t = surface::bilinear_form_with(&ei, &fi, &FormOptions::new(n, rng::derive_seed(seed, 11)))?;
        let m = |r: &Region, key: u64| geometry::measure(r, n, rng::derive_seed(seed, key)).map(|m| m.value);
        let (me, mf) = (qex.meas_e.value, qex.meas_f.value);
        Ok([t.value / qex.t_value.value, m(&et, 12)? / me, m(&ft, 13)? / mf, m(&ei, 14)? / me, m(&fi, 15)? / mf])
    };
    match compare() {
        Ok([t, es, fs, ec, fc]) => {
            out.t_ratio = t;
            out.e_size = es;
            out.f_size = fs;
            out.e_cover = ec;
            out.f_cover = fc;
            out
        }
        Err(err) => out.fail(RecoveryStage::Compare, err),
    }
}
