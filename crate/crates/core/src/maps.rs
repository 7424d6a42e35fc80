//! Graph maps over the upper hemisphere.
//!
//! With `g(s) = sqrt(1 - |s|^2)`, the hemisphere is `{(s, g(s))}` and
//! `F_s(t) = t / g(t) - s / g(s)`. Note `grad g(t) = -t / g(t)`, so
//! `F_s = -(grad g - grad g(s))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Arguments must satisfy `|s| <= 1 - DOMAIN_MARGIN`.
pub const DOMAIN_MARGIN: f64 = 1e-9;

fn check_ball(s: &[f64], name: &str) -> Result<f64> {
    let n2: f64 = s.iter().map(|v| v * v).sum();
    if !n2.is_finite() || n2.sqrt() > 1.0 - DOMAIN_MARGIN {
        return Err(Error::Domain(format!("|{name}| = {} is not inside the unit ball", n2.sqrt())));
    }
    Ok(n2)
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape { expected: a.len(), got: b.len() });
    }
    Ok(())
}

/// `g(s) = sqrt(1 - |s|^2)`.
pub fn g(s: &[f64]) -> Result<f64> {
    Ok((1.0 - check_ball(s, "s")?).sqrt())
}

/// Which graph the maps are taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    /// `g(s) = sqrt(1 - |s|^2)`
    Sphere,
    /// `g(s) = |s|^2`, where `F_s(t) = t - s`.
    Paraboloid,
}

/// `F_s(t) = t / sqrt(1 - |t|^2) - s / sqrt(1 - |s|^2)`.
pub fn f_map(s: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    f_map_on(Surface::Sphere, s, t)
}

pub fn f_map_on(surface: Surface, s: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    check_same_len(s, t)?;
    match surface {
        Surface::Sphere => {
            let gs = g(s)?;
            let gt = g(t)?;
            Ok(t.iter().zip(s).map(|(t, s)| t / gt - s / gs).collect())
        }
        Surface::Paraboloid => Ok(t.iter().zip(s).map(|(t, s)| t - s).collect()),
    }
}

/// `D_t F_s(t) = g(t)^{-1} (I + t t^T / g(t)^2)`; independent of `s`.
pub fn f_map_jacobian(s: &[f64], t: &[f64]) -> Result<DMatrix<f64>> {
    check_same_len(s, t)?;
    check_ball(s, "s")?;
    let gt = g(t)?;
    let k = t.len();
    let tv = DVector::from_column_slice(t);
    Ok((DMatrix::identity(k, k) + &tv * tv.transpose() / (gt * gt)) / gt)
}

/// `D^2 g(s) = -g(s)^{-1} (I + s s^T / g(s)^2)`.
pub fn hessian_g(s: &[f64]) -> Result<DMatrix<f64>> {
    let gs = g(s)?;
    let k = s.len();
    let sv = DVector::from_column_slice(s);
    Ok(-(DMatrix::identity(k, k) + &sv * sv.transpose() / (gs * gs)) / gs)
}

/// `det(F_s(t_1), ..., F_s(t_{d-1}))` with the images as columns.
pub fn inflation_det(s: &[f64], ts: &[Vec<f64>]) -> Result<f64> {
    let k = s.len();
    if ts.len() != k {
        return Err(Error::Shape { expected: k, got: ts.len() });
    }
    let mut m = DMatrix::zeros(k, k);
    for (j, t) in ts.iter().enumerate() {
        let col = f_map(s, t)?;
        m.set_column(j, &DVector::from_vec(col));
    }
    Ok(m.determinant())
}

/// `Phi(s, t) = (t - s, g(t) - g(s))`.
pub fn phi(s: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    check_same_len(s, t)?;
    let gs = g(s)?;
    let gt = g(t)?;
    let mut out: Vec<f64> = t.iter().zip(s).map(|(t, s)| t - s).collect();
    out.push(gt - gs);
    Ok(out)
}

/// Blocks `[Psi(s, t)]_j = Phi(s, t_j)`, concatenated.
pub fn psi_natural(s: &[f64], ts: &[Vec<f64>]) -> Result<Vec<f64>> {
    if ts.len() != s.len() {
        return Err(Error::Shape { expected: s.len(), got: ts.len() });
    }
    let mut out = Vec::with_capacity(ts.len() * (s.len() + 1));
    for t in ts {
        out.extend(phi(s, t)?);
    }
    Ok(out)
}

/// Sign relating `det D psi_natural` (inputs ordered `s, t_1, .., t_{d-1}`,
/// outputs block by block) to [`inflation_det`].
pub fn psi_natural_det_sign(d: usize) -> f64 {
    // Adding every t_j column group to the s group leaves -F_s(t_j)^T in the
    // last row of block j; moving those k rows to the top takes
    // k^2 (k + 1) / 2 transpositions and det(-F^T) contributes (-1)^k.
    let k = d - 1;
    if (k + k * k * (k + 1) / 2) % 2 == 0 { 1.0 } else { -1.0 }
}

/// `|<A (D^2 g(s))^{-1} F_s(t), nu>|`, the Jacobian of the slice map.
pub fn slicing_integrand(s: &[f64], t: &[f64], a: &DMatrix<f64>, nu: &[f64]) -> Result<f64> {
    let k = s.len();
    if a.nrows() != k || a.ncols() != k || nu.len() != k {
        return Err(Error::Shape { expected: k, got: nu.len() });
    }
    let h = hessian_g(s)?;
    let fs = DVector::from_vec(f_map(s, t)?);
    let hinv = h.try_inverse().ok_or_else(|| Error::Degenerate("singular Hessian".into()))?;
    let w = a * hinv * fs;
    Ok(w.dot(&DVector::from_column_slice(nu)).abs())
}

/// `|A (D^2 g(s))^{-1} F_s(t)|`, the direction-averaged form.
pub fn slicing_norm(s: &[f64], t: &[f64], a: &DMatrix<f64>) -> Result<f64> {
    let h = hessian_g(s)?;
    let fs = DVector::from_vec(f_map(s, t)?);
    let hinv = h.try_inverse().ok_or_else(|| Error::Degenerate("singular Hessian".into()))?;
    Ok((a * hinv * fs).norm())
}

/// `Psi(r, u) = (u, g(u + s) - g(s))` at `s = s(r)`.
pub fn psi_slice(s: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_same_len(s, u)?;
    let t: Vec<f64> = s.iter().zip(u).map(|(s, u)| s + u).collect();
    let gs = g(s)?;
    let gt = g(&t)?;
    let mut out = u.to_vec();
    out.push(gt - gs);
    Ok(out)
}

pub const NEWTON_MAX_ITER: usize = 30;
pub const NEWTON_TOL: f64 = 1e-12;

/// `F_tau^{-1}(w)` by Newton's method started at `w`.
pub fn f_inverse(tau: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_same_len(tau, w)?;
    let gtau = g(tau)?;
    // F_tau(s) = w  <=>  s / g(s) = w + tau / g(tau) =: v
    let v: Vec<f64> = w.iter().zip(tau).map(|(w, t)| w + t / gtau).collect();
    let mut s = w.to_vec();
    let n2: f64 = s.iter().map(|x| x * x).sum();
    if n2.sqrt() > 0.5 {
        // stay well inside the ball
        s.iter_mut().for_each(|x| *x *= 0.5 / n2.sqrt());
    }
    for _ in 0..NEWTON_MAX_ITER {
        let gs = g(&s)?;
        let res: Vec<f64> = s.iter().zip(&v).map(|(s, v)| s / gs - v).collect();
        let rn = res.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if rn <= NEWTON_TOL {
            return Ok(s);
        }
        let j = f_map_jacobian(tau, &s)?;
        let step = j
            .lu()
            .solve(&DVector::from_vec(res))
            .ok_or_else(|| Error::Degenerate("singular Jacobian in Newton step".into()))?;
        // damp so the iterate stays in the ball
        let mut lambda = 1.0;
        loop {
            let cand: Vec<f64> = s.iter().zip(step.iter()).map(|(s, d)| s - lambda * d).collect();
            if cand.iter().map(|x| x * x).sum::<f64>().sqrt() < 1.0 - DOMAIN_MARGIN {
                s = cand;
                break;
            }
            lambda *= 0.5;
        }
    }
    let gs = g(&s)?;
    let rn = s.iter().zip(&v).map(|(s, v)| (s / gs - v).abs()).fold(0.0, f64::max);
    if rn <= NEWTON_TOL {
        Ok(s)
    } else {
        Err(Error::NonTermination { iterations: NEWTON_MAX_ITER, trace: vec![rn] })
    }
}

/// `s^nu(a, r) = F_tau^{-1}(A (r nu + a))`.
pub fn slice_point(tau: &[f64], a_mat: &DMatrix<f64>, nu: &[f64], a: &[f64], r: f64) -> Result<Vec<f64>> {
    let k = tau.len();
    if nu.len() != k || a.len() != k {
        return Err(Error::Shape { expected: k, got: nu.len().min(a.len()) });
    }
    let x = DVector::from_iterator(k, nu.iter().zip(a).map(|(n, a)| r * n + a));
    let w = a_mat * x;
    f_inverse(tau, w.as_slice())
}

/// Solutions of `|w - x_i| = 1` for all `i`, with `x_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub count: usize,
    pub points: Vec<Vec<f64>>,
    /// Coincident or otherwise non-generic centres: the solution set may be
    /// infinite and `count` is not reported.
    pub degenerate: bool,
}

pub const INTERSECTION_TOL: f64 = 1e-9;

/// Intersect the unit sphere with its translates by `xs` (`d - 1` points,
/// `d` in `{2, 3}`).
pub fn sphere_intersection_count(xs: &[Vec<f64>]) -> Result<Intersection> {
    let d = xs.len() + 1;
    if !(d == 2 || d == 3) {
        return Err(Error::Validation(format!("intersection counting needs d in {{2, 3}}, got {d}")));
    }
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::Shape { expected: d, got: x.len() });
    }
    let degenerate = || Intersection { count: 0, points: vec![], degenerate: true };
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = INTERSECTION_TOL;
    if xs.iter().any(|x| norm(x) < tol) {
        return Ok(degenerate());
    }
    // Each translate gives the plane w . x_i = |x_i|^2 / 2.
    let (p0, dir) = if d == 2 {
        let x = &xs[0];
        let n = norm(x);
        let u = [x[0] / n, x[1] / n];
        (vec![0.5 * x[0], 0.5 * x[1]], vec![-u[1], u[0]])
    } else {
        let (a, b) = (&xs[0], &xs[1]);
        if norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]]) < tol {
            return Ok(degenerate());
        }
        let n = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let nn = norm(&n);
        if nn < tol * norm(a) * norm(b) {
            // parallel planes: empty or a whole circle
            return Ok(degenerate());
        }
        // point on both planes, in span(a, b)
        let (ca, cb) = (0.5 * norm(a).powi(2), 0.5 * norm(b).powi(2));
        let m = DMatrix::from_row_slice(2, 2, &[dot(a, a), dot(a, b), dot(a, b), dot(b, b)]);
        let sol = m
            .lu()
            .solve(&DVector::from_row_slice(&[ca, cb]))
            .ok_or_else(|| Error::Degenerate("collinear centres".into()))?;
        let p0: Vec<f64> = (0..3).map(|i| sol[0] * a[i] + sol[1] * b[i]).collect();
        (p0, n.iter().map(|v| v / nn).collect())
    };
    // |p0 + s dir|^2 = 1 with p0 . dir = 0
    let h2 = 1.0 - dot(&p0, &p0);
    let points: Vec<Vec<f64>> = if h2 < -tol {
        vec![]
    } else if h2.abs() <= tol {
        vec![p0]
    } else {
        let h = h2.sqrt();
        [h, -h]
            .iter()
            .map(|s| p0.iter().zip(&dir).map(|(p, u)| p + s * u).collect())
            .collect()
    };
    Ok(Intersection { count: points.len(), points, degenerate: false })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn rand_in_ball(s: &mut Stream, k: usize, r: f64) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..k).map(|_| s.uniform_in(-r, r)).collect();
            if v.iter().map(|x| x * x).sum::<f64>().sqrt() < r {
                return v;
            }
        }
    }

    #[test]
    fn f_map_examples() {
        let s = [0.3, -0.2];
        assert_eq!(f_map(&s, &s).unwrap(), vec![0.0, 0.0]);
        let t = [0.1, 0.4];
        let g = (1.0f64 - 0.17).sqrt();
        let v = f_map(&[0.0, 0.0], &t).unwrap();
        assert!((v[0] - 0.1 / g).abs() < 1e-16 && (v[1] - 0.4 / g).abs() < 1e-16);
        // independent high-precision evaluation
        let v = f_map(&[0.1, 0.0], &[0.0, 0.2]).unwrap();
        assert!((v[0] + 0.100_503_781_525_921_3).abs() < 1e-15, "{v:?}");
        assert!((v[1] - 0.204_124_145_231_931_5).abs() < 1e-15, "{v:?}");
        assert!(matches!(f_map(&[1.0, 0.0], &t), Err(Error::Domain(_))));
        assert!(matches!(f_map(&s, &[0.9, 0.9]), Err(Error::Domain(_))));
        assert_eq!(f_map_on(Surface::Paraboloid, &s, &t).unwrap(), vec![t[0] - s[0], t[1] - s[1]]);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut st = Stream::new(1, 2, 3);
        let h = 1e-5;
        for _ in 0..100 {
            let s = rand_in_ball(&mut st, 2, 0.5);
            let t = rand_in_ball(&mut st, 2, 0.5);
            let j = f_map_jacobian(&s, &t).unwrap();
            for c in 0..2 {
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[c] += h;
                tm[c] -= h;
                let fp = f_map(&s, &tp).unwrap();
                let fm = f_map(&s, &tm).unwrap();
                for r in 0..2 {
                    let fd = (fp[r] - fm[r]) / (2.0 * h);
                    assert!((fd - j[(r, c)]).abs() <= 1e-7, "{fd} vs {}", j[(r, c)]);
                }
            }
        }
        let j0 = f_map_jacobian(&[0.2, 0.1], &[0.0, 0.0]).unwrap();
        assert_eq!(j0, DMatrix::identity(2, 2));
    }

    #[test]
    fn jacobian_det_near_one() {
        let mut st = Stream::new(4, 4, 4);
        for _ in 0..1000 {
            let s = rand_in_ball(&mut st, 2, 0.1);
            let t = rand_in_ball(&mut st, 2, 0.1);
            let det = f_map_jacobian(&s, &t).unwrap().determinant();
            assert!((0.9..=1.2).contains(&det), "{det}");
        }
    }

    #[test]
    fn hessian_matches_differences_and_jacobian() {
        assert_eq!(hessian_g(&[0.0, 0.0]).unwrap(), -DMatrix::identity(2, 2));
        let mut st = Stream::new(5, 5, 5);
        let h = 1e-5;
        for _ in 0..100 {
            let s = rand_in_ball(&mut st, 2, 0.5);
            let hs = hessian_g(&s).unwrap();
            for c in 0..2 {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp[c] += h;
                sm[c] -= h;
                // grad g(s) = -s / g(s)
                let gp: Vec<f64> = sp.iter().map(|v| -v / g(&sp).unwrap()).collect();
                let gm: Vec<f64> = sm.iter().map(|v| -v / g(&sm).unwrap()).collect();
                for r in 0..2 {
                    let fd = (gp[r] - gm[r]) / (2.0 * h);
                    assert!((fd - hs[(r, c)]).abs() <= 1e-7);
                }
            }
            let j = f_map_jacobian(&[0.0, 0.0], &s).unwrap();
            assert!((j + &hs).amax() < 1e-14);
        }
    }

    #[test]
    fn inflation_det_zeroes_and_sign() {
        let s = vec![0.05, -0.02];
        let t1 = vec![0.1, 0.03];
        let t2 = vec![-0.04, 0.08];
        assert_eq!(inflation_det(&s, &[t1.clone(), t1.clone()]).unwrap(), 0.0);
        assert_eq!(inflation_det(&s, &[s.clone(), t2.clone()]).unwrap(), 0.0);
        let a = inflation_det(&s, &[t1.clone(), t2.clone()]).unwrap();
        let b = inflation_det(&s, &[t2, t1]).unwrap();
        assert!(a != 0.0 && (a + b).abs() < 1e-18);
    }

    fn fd_jacobian_det(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> f64 {
        let n = x.len();
        let mut m = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            for r in 0..n {
                m[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        m.determinant()
    }

    #[test]
    fn psi_natural_jacobian_is_inflation_det() {
        let mut st = Stream::new(6, 6, 6);
        for d in [2usize, 3] {
            let k = d - 1;
            for _ in 0..20 {
                let s = rand_in_ball(&mut st, k, 0.3);
                let ts: Vec<Vec<f64>> = (0..k).map(|_| rand_in_ball(&mut st, k, 0.3)).collect();
                let mut x = s.clone();
                ts.iter().for_each(|t| x.extend(t));
                let det_fd = fd_jacobian_det(
                    |x| {
                        let ts: Vec<Vec<f64>> = x[k..].chunks(k).map(|c| c.to_vec()).collect();
                        psi_natural(&x[..k], &ts).unwrap()
                    },
                    &x,
                    1e-6,
                );
                let det = psi_natural_det_sign(d) * inflation_det(&s, &ts).unwrap();
                assert!((det_fd - det).abs() <= 1e-6, "d={d}: {det_fd} vs {det}");
            }
        }
    }

    #[test]
    fn psi_blocks_are_phi() {
        let s = vec![0.1, 0.2];
        let ts = vec![vec![0.0, 0.3], vec![-0.2, 0.1]];
        let p = psi_natural(&s, &ts).unwrap();
        assert_eq!(&p[0..3], phi(&s, &ts[0]).unwrap().as_slice());
        assert_eq!(&p[3..6], phi(&s, &ts[1]).unwrap().as_slice());
        let z = psi_natural(&s, &[s.clone(), s.clone()]).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        let t = [0.3, 0.4];
        let p0 = phi(&[0.0, 0.0], &t).unwrap();
        assert_eq!(p0, vec![0.3, 0.4, (1.0f64 - 0.25).sqrt() - 1.0]);
    }

    #[test]
    fn slicing_integrand_cases() {
        let a = DMatrix::identity(1, 1);
        assert_eq!(slicing_integrand(&[0.2], &[0.2], &a, &[1.0]).unwrap(), 0.0);
        let (s, t): (f64, f64) = (0.3, -0.1);
        let v = slicing_integrand(&[s], &[t], &a, &[1.0]).unwrap();
        let f = t / (1.0 - t * t).sqrt() - s / (1.0 - s * s).sqrt();
        assert!((v - f.abs() * (1.0 - s * s).powf(1.5)).abs() < 1e-15);
    }

    #[test]
    fn slicing_integrand_is_slice_map_jacobian() {
        // d = 3: with s(r) = F_tau^{-1}(A (r nu + a)), det D_{(r,u)} Psi(r, u)
        // has absolute value equal to the integrand at (s(r), s(r) + u).
        let tau = vec![0.05, -0.03];
        let a_mat = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1]);
        let nu = vec![0.6, 0.8];
        let a = vec![0.8 * 0.1, -0.6 * 0.1];
        let (r0, u0) = (0.15, vec![0.04, -0.07]);
        let map = |x: &[f64]| {
            let s = slice_point(&tau, &a_mat, &nu, &a, x[0]).unwrap();
            psi_slice(&s, &x[1..]).unwrap()
        };
        let mut x = vec![r0];
        x.extend(&u0);
        let det_fd = fd_jacobian_det(map, &x, 1e-6);
        let s = slice_point(&tau, &a_mat, &nu, &a, r0).unwrap();
        let t: Vec<f64> = s.iter().zip(&u0).map(|(s, u)| s + u).collect();
        // the slice Jacobian carries F_tau's derivative at s, which the
        // integrand replaces by -D^2 g(s): they agree exactly
        let integrand = slicing_integrand(&s, &t, &a_mat, &nu).unwrap();
        assert!((det_fd.abs() - integrand).abs() < 1e-8, "{det_fd} vs {integrand}");
    }

    #[test]
    fn slicing_average_over_directions() {
        let mut st = Stream::new(8, 8, 8);
        let a_mat = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let (s, t) = (vec![0.1, 0.05], vec![-0.2, 0.15]);
        let full = slicing_norm(&s, &t, &a_mat).unwrap();
        let n = 64;
        let mut avg = 0.0;
        for _ in 0..n {
            let th = st.uniform_in(0.0, std::f64::consts::TAU);
            avg += slicing_integrand(&s, &t, &a_mat, &[th.cos(), th.sin()]).unwrap() / n as f64;
        }
        // mean of |<u, nu>| over the circle is 2 / pi; 64 draws keep the
        // average above half of it
        assert!(avg >= 0.5 * (2.0 / std::f64::consts::PI) * full, "{avg} vs {full}");
    }

    #[test]
    fn newton_inverse_matches_closed_form() {
        let mut st = Stream::new(9, 9, 9);
        for k in [1usize, 2, 3] {
            for _ in 0..200 {
                let tau = rand_in_ball(&mut st, k, 0.3);
                let w = rand_in_ball(&mut st, k, 0.5);
                let s = f_inverse(&tau, &w).unwrap();
                let gt = g(&tau).unwrap();
                let v: Vec<f64> = w.iter().zip(&tau).map(|(w, t)| w + t / gt).collect();
                let nv = (1.0 + v.iter().map(|x| x * x).sum::<f64>()).sqrt();
                for i in 0..k {
                    assert!((s[i] - v[i] / nv).abs() < 1e-12);
                }
                let back = f_map(&tau, &s).unwrap();
                for i in 0..k {
                    assert!((back[i] - w[i]).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn circle_intersections() {
        let r = sphere_intersection_count(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(r.count, 2);
        for p in &r.points {
            assert!((p[0] - 0.5).abs() < 1e-15 && (p[1].abs() - 0.75f64.sqrt()).abs() < 1e-15);
        }
        assert_eq!(sphere_intersection_count(&[vec![2.0, 0.0]]).unwrap().count, 1);
        assert_eq!(sphere_intersection_count(&[vec![2.5, 0.0]]).unwrap().count, 0);
        assert!(sphere_intersection_count(&[vec![0.0, 0.0]]).unwrap().degenerate);
        assert!(sphere_intersection_count(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap().degenerate);
        assert!(sphere_intersection_count(&[vec![1.0, 0.0, 0.0], vec![0.5, 0.0, 0.0]]).unwrap().degenerate);
    }

    #[test]
    fn sphere_triples_have_at_most_two_points() {
        let mut st = Stream::new(10, 10, 10);
        let mut seen_two = 0;
        for _ in 0..1000 {
            let xs: Vec<Vec<f64>> = (0..2)
                .map(|_| {
                    let mut v = crate::surface::sphere_sample(3, &mut st);
                    let r = st.uniform_in(0.1, 1.9);
                    v.iter_mut().for_each(|x| *x *= r);
                    v
                })
                .collect();
            let res = sphere_intersection_count(&xs).unwrap();
            assert!(!res.degenerate);
            assert!(res.count <= 2);
            seen_two += usize::from(res.count == 2);
            for p in &res.points {
                let r0 = dot(p, p).sqrt();
                assert!((r0 - 1.0).abs() < 1e-9);
                for x in &xs {
                    let q: Vec<f64> = p.iter().zip(x).map(|(a, b)| a - b).collect();
                    assert!((dot(&q, &q).sqrt() - 1.0).abs() < 1e-9);
                }
            }
        }
        assert!(seen_two > 0);
    }
}
