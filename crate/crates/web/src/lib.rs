//! WebAssembly bindings for the static demo in `www/`. Each export wraps a
//! plain function that also runs natively, so the logic is testable
//! without a browser.

use qex::config::Constants;
use qex::geometry::{Radii, Region};
use qex::lab::{self, Family, PairSurface};
use wasm_bindgen::prelude::*;

fn surface(name: &str) -> Result<PairSurface, String> {
    match name {
        "sphere" => Ok(PairSurface::Sphere),
        "parab" => Ok(PairSurface::Paraboloid),
        other => Err(format!("unknown surface `{other}`")),
    }
}

fn rho_ladder(k_min: u32, k_max: u32) -> Result<Vec<f64>, String> {
    if k_min > k_max || k_max > 20 {
        return Err("need 0 <= k_min <= k_max <= 20".into());
    }
    Ok((k_min..=k_max).map(|k| 2f64.powi(-(k as i32))).collect())
}

/// Membership of one set of a planar pair on a pixel grid.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct MembershipGrid {
    width: usize,
    height: usize,
    bounds: [f64; 4],
    cells: Vec<u8>,
    admissible: bool,
}

#[wasm_bindgen]
impl MembershipGrid {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// `[x_lo, x_hi, y_lo, y_hi]`.
    #[wasm_bindgen(getter)]
    pub fn bounds(&self) -> Vec<f64> {
        self.bounds.to_vec()
    }

    /// Row-major, top row first; 1 for members.
    #[wasm_bindgen(getter)]
    pub fn cells(&self) -> Vec<u8> {
        self.cells.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn admissible(&self) -> bool {
        self.admissible
    }
}

/// Rasterise `E` (`which = "E"`) or `F` of the planar pair `(r, rho)` over
/// its bounding box padded by a quarter on each side.
pub fn membership_grid(r: f64, rho: f64, which: &str, width: usize, height: usize) -> Result<MembershipGrid, String> {
    if width == 0 || height == 0 || width * height > 1 << 20 {
        return Err("grid must have between 1 and 2^20 cells".into());
    }
    let rd = Radii::relaxed(vec![r], rho).map_err(|e| e.to_string())?;
    let (e, f) = PairSurface::Sphere.pair(&rd).map_err(|e| e.to_string())?;
    let region: Region = match which {
        "E" => e,
        "F" => f,
        other => return Err(format!("unknown set `{other}`")),
    };
    let bb = region.bounding_box();
    let pad = |lo: f64, hi: f64| {
        let m = 0.25 * (hi - lo);
        (lo - m, hi + m)
    };
    let (x0, x1) = pad(bb.lo[0], bb.hi[0]);
    let (y0, y1) = pad(bb.lo[1], bb.hi[1]);
    let mut cells = vec![0u8; width * height];
    for j in 0..height {
        let y = y1 - (j as f64 + 0.5) / height as f64 * (y1 - y0);
        for i in 0..width {
            let x = x0 + (i as f64 + 0.5) / width as f64 * (x1 - x0);
            cells[j * width + i] = region.contains(&[x, y]) as u8;
        }
    }
    Ok(MembershipGrid { width, height, bounds: [x0, x1, y0, y1], cells, admissible: rd.is_admissible() })
}

/// `(rho, ratio, ratio_se)` triples along a family, `rho = 2^-k_min..2^-k_max`.
pub fn ratio_series(d: usize, family: &str, a: &[f64], k_min: u32, k_max: u32, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    let fam = match family {
        "ball" => Family::Ball,
        "knapp" => Family::Knapp,
        "power" => Family::Power(a.to_vec()),
        other => return Err(format!("unknown family `{other}`")),
    };
    let cases = fam.cases(&rho_ladder(k_min, k_max)?, d).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * cases.len());
    for rec in lab::sweep(&cases, PairSurface::Sphere, n, seed) {
        let (ratio, se) = match &rec.outcome {
            Ok(q) => (q.ratio, q.ratio * q.ratio_rel_error(d)),
            Err(_) => (f64::NAN, f64::NAN),
        };
        out.extend([rec.radii.rho(), ratio, se]);
    }
    Ok(out)
}

/// Decay table for `r = (rho^a, rho^b)` in `d = 3`: `(rho, ratio, overlap)`
/// triples followed by the fitted exponent.
pub fn probe_series(a: f64, b: f64, surface_name: &str, k_min: u32, k_max: u32, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    let consts = Constants::builtin();
    let get = |k: &str| consts.get(k).map_err(|e| e.to_string());
    let table = lab::disjointness_demo(
        &rho_ladder(k_min, k_max)?,
        a,
        b,
        surface(surface_name)?,
        n,
        seed,
        get("slice_upper")?,
        get("slice_floor")?,
    )
    .map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = table.rows.iter().flat_map(|r| [r.rho, r.ratio, r.overlap]).collect();
    out.push(table.fit_exponent);
    Ok(out)
}

#[wasm_bindgen]
pub fn pair_membership_grid(r: f64, rho: f64, which: &str, width: usize, height: usize) -> Result<MembershipGrid, String> {
    membership_grid(r, rho, which, width, height)
}

#[wasm_bindgen]
pub fn ratio_curve(d: usize, family: &str, a: Vec<f64>, k_min: u32, k_max: u32, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    ratio_series(d, family, &a, k_min, k_max, n, seed)
}

#[wasm_bindgen]
pub fn degeneracy_probe(a: f64, b: f64, surface: &str, k_min: u32, k_max: u32, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    probe_series(a, b, surface, k_min, k_max, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_mark_members_inside_the_box() {
        let g = membership_grid(0.25, 0.0625, "E", 64, 48).unwrap();
        assert_eq!(g.cells.len(), 64 * 48);
        assert!(g.admissible);
        let hits = g.cells.iter().filter(|c| **c == 1).count();
        assert!(hits > 0 && hits < g.cells.len());
        let f = membership_grid(0.25, 0.0625, "F", 64, 48).unwrap();
        assert!(f.bounds[3] < 0.0);
        assert!(membership_grid(0.25, 0.0625, "G", 4, 4).is_err());
    }

    #[test]
    fn ratio_series_is_flat_for_balls() {
        let v = ratio_series(2, "ball", &[], 3, 6, 20_000, 1).unwrap();
        assert_eq!(v.len(), 12);
        let ratios: Vec<f64> = v.chunks(3).map(|c| c[1]).collect();
        assert!(lab::spread(&ratios) < 2.0, "{ratios:?}");
        assert_eq!(v, ratio_series(2, "ball", &[], 3, 6, 20_000, 1).unwrap());
    }

    #[test]
    fn probe_returns_rows_and_exponent() {
        let v = probe_series(0.9, 0.1, "parab", 4, 6, 20_000, 2).unwrap();
        assert_eq!(v.len(), 3 * 3 + 1);
        assert!(v[3 * 3].is_finite());
        assert!(probe_series(0.9, 0.1, "torus", 4, 6, 1000, 2).is_err());
        assert!(rho_ladder(5, 4).is_err());
    }
}
