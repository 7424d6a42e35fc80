use std::path::PathBuf;

use qex::calibration::{self, threshold, Suite};
use qex::config::Constants;
use qex::convex;
use qex::decomposition;
use qex::geometry::{self, Frame, Radii, SpecialKind};
use qex::lab::{self, Family, PairSurface, SweepRecord};
use qex::rng::{self, Stream};
use qex::surface::{self, FormOptions};

use crate::output::Run;
use crate::settings::{List, Real, RunFile, Section};
use crate::{Cli, Command, Failure};

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = RunFile::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => {
            let text = file.run_value("seed").or_else(|| std::env::var("QEX_SEED").ok());
            match text {
                Some(t) => t.trim().parse().map_err(|_| Failure::Usage(format!("seed must be an unsigned integer, got `{t}`")))?,
                None => 0,
            }
        }
    };
    let workers = match cli.workers.or(file.run_value("workers").and_then(|w| w.parse().ok())) {
        Some(0) => return Err(Failure::Usage("--workers must be positive".into())),
        Some(w) => {
            rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| Failure::Usage(e.to_string()))?;
            w
        }
        None => rayon::current_num_threads(),
    };
    let out = cli.out.clone().or(file.run_value("out").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("qex-out"));
    let consts = file.constants(cli.constants.as_deref())?;
    let ctx = Ctx { file, consts, seed, workers, out };
    match cli.command {
        Command::Ratio(a) => ratio(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Probe(a) => probe(&ctx, a),
        Command::Verify(a) => verify(&ctx, a),
        Command::Decompose(a) => decompose(&ctx, a),
        Command::Tower(a) => tower(&ctx, a),
    }
}

struct Ctx {
    file: RunFile,
    consts: Constants,
    seed: u64,
    workers: usize,
    out: PathBuf,
}

impl Ctx {
    fn start(&self, command: &'static str) -> (Run, Section) {
        (Run::new(self.out.clone(), command, self.seed, self.workers), self.file.section(command))
    }

    fn threshold(&self, key: &str) -> Result<f64, Failure> {
        Ok(threshold(&self.consts, key)?)
    }
}

fn surface_of(name: &str) -> Result<PairSurface, Failure> {
    match name {
        "sphere" => Ok(PairSurface::Sphere),
        "parab" | "paraboloid" => Ok(PairSurface::Paraboloid),
        other => Err(Failure::Usage(format!("unknown surface `{other}` (sphere, parab)"))),
    }
}

/// Radii from `--r`, with `d` defaulting to `len + 1`.
fn radii_args(sec: &Section, run: &mut Run, d: Option<usize>, r: Option<List>, rho: Option<Real>, relaxed: bool) -> Result<Radii, Failure> {
    let r = sec.pick(&mut run.resolved, "r", r, None)?;
    let d: usize = sec.pick(&mut run.resolved, "d", d, Some(&(r.0.len() + 1).to_string()))?;
    if r.0.len() + 1 != d {
        return Err(Failure::Usage(format!("d = {d} needs {} radii, got {}", d - 1, r.0.len())));
    }
    let rho = sec.pick(&mut run.resolved, "rho", rho, None)?;
    Ok(if relaxed { Radii::relaxed(r.0, rho.0)? } else { Radii::new(r.0, rho.0)? })
}

fn ratio(ctx: &Ctx, a: crate::RatioArgs) -> Result<(), Failure> {
    let (mut run, sec) = ctx.start("ratio");
    let relaxed = sec.pick(&mut run.resolved, "relaxed", a.relaxed.then_some(true), Some("false"))?;
    let rd = radii_args(&sec, &mut run, a.d, a.r, a.rho, relaxed)?;
    let n = sec.pick(&mut run.resolved, "n", a.n, Some("1e6"))?.0;
    let frame: String = sec.pick(&mut run.resolved, "frame", a.frame, Some("identity"))?;
    let surface = surface_of(&sec.pick::<String>(&mut run.resolved, "surface", a.surface, Some("sphere"))?)?;
    let d = rd.dim();
    let (e, f) = match (surface, frame.as_str()) {
        (_, "identity") => surface.pair(&rd)?,
        (PairSurface::Sphere, "random") => {
            let fr = Frame::random(d, 1.0, &mut Stream::new(ctx.seed, rng::label("cli_frame"), 0));
            geometry::make_sphere_pair(&rd, &fr)?
        }
        (PairSurface::Paraboloid, "random") => return Err(Failure::Usage("paraboloid pairs are unframed".into())),
        (_, other) => return Err(Failure::Usage(format!("unknown frame `{other}` (identity, random)"))),
    };
    let q = surface::qex_report_with(&e, &f, &FormOptions::new(n, ctx.seed).kernel(surface.kernel()))?;
    let rec = SweepRecord { radii: rd, surface, seed: ctx.seed, n, outcome: Ok(q) };
    let csv = format!("{}\n{}\n", SweepRecord::csv_header(d), rec.csv_row());
    print!("{csv}");
    run.write("ratio.csv", &csv)?;
    run.finish(&ctx.consts, "ok")
}

fn sweep(ctx: &Ctx, a: crate::SweepArgs) -> Result<(), Failure> {
    let (mut run, sec) = ctx.start("sweep");
    let d: usize = sec.pick(&mut run.resolved, "d", a.d, Some("2"))?;
    let family: String = sec.pick(&mut run.resolved, "family", a.family, Some("ball"))?;
    let rhos = sec.pick(&mut run.resolved, "rho_list", a.rho_list, Some("2^-3..2^-7"))?.0;
    let n = sec.pick(&mut run.resolved, "n", a.n, Some("1e5"))?.0;
    let surface = surface_of(&sec.pick::<String>(&mut run.resolved, "surface", a.surface, Some("sphere"))?)?;
    let cases: Vec<Radii> = match family.as_str() {
        "ball" => Family::Ball.cases(&rhos, d)?,
        "knapp" => Family::Knapp.cases(&rhos, d)?,
        "power" => Family::Power(sec.pick(&mut run.resolved, "a", a.a, None)?.0).cases(&rhos, d)?,
        "grid" => {
            let levels: u32 = sec.pick(&mut run.resolved, "levels", a.levels, Some("3"))?;
            rhos.iter().flat_map(|rho| lab::admissible_grid(d, *rho, levels)).collect()
        }
        other => return Err(Failure::Usage(format!("unknown family `{other}` (ball, knapp, grid, power)"))),
    };
    if cases.is_empty() {
        return Err(Failure::Usage("the sweep has no cases".into()));
    }
    let mut records = lab::sweep(&cases, surface, n, ctx.seed);
    records.sort_by(|x, y| {
        x.radii.rho().total_cmp(&y.radii.rho()).reverse().then_with(|| {
            x.radii.r().iter().zip(y.radii.r()).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut csv = SweepRecord::csv_header(d);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let path = run.write("sweep.csv", &csv)?;
    let failed = records.iter().filter(|r| r.outcome.is_err()).count();
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio()).collect();
    println!("{} records -> {}", records.len(), path.display());
    if !ratios.is_empty() {
        println!("ratio range {:.4} .. {:.4} (spread {:.3})", ratios.iter().copied().fold(f64::INFINITY, f64::min), ratios.iter().copied().fold(0.0, f64::max), lab::spread(&ratios));
    }
    run.finish(&ctx.consts, if failed == 0 { "ok" } else { "partial" })?;
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} records failed", records.len())));
    }
    Ok(())
}

fn probe(ctx: &Ctx, a: crate::ProbeArgs) -> Result<(), Failure> {
    let (mut run, sec) = ctx.start("probe");
    let d: usize = sec.pick(&mut run.resolved, "d", a.d, Some("3"))?;
    if d != 3 {
        return Err(Failure::Usage(format!("the degeneracy probe runs in d = 3, got {d}")));
    }
    let pa = sec.pick(&mut run.resolved, "a", a.a, Some("0.9"))?.0;
    let pb = sec.pick(&mut run.resolved, "b", a.b, Some("0.1"))?.0;
    let rhos = sec.pick(&mut run.resolved, "rho_list", a.rho_list, Some("2^-4..2^-8"))?.0;
    let n = sec.pick(&mut run.resolved, "n", a.n, Some("4e5"))?.0;
    let surface = surface_of(&sec.pick::<String>(&mut run.resolved, "surface", a.surface, Some("sphere"))?)?;
    let (up, fl) = (ctx.consts.get("slice_upper")?, ctx.consts.get("slice_floor")?);
    let table = lab::disjointness_demo(&rhos, pa, pb, surface, n, ctx.seed, up, fl)?;
    let csv = table.to_csv();
    print!("{csv}");
    run.write("probe.csv", &csv)?;
    let hs: Vec<String> = table.halving_factors().iter().map(|h| format!("{h:.3}")).collect();
    eprintln!("halving factors [{}], ratio spread {:.3}", hs.join(", "), table.ratio_spread());
    run.finish(&ctx.consts, "ok")
}

fn verify(ctx: &Ctx, a: crate::VerifyArgs) -> Result<(), Failure> {
    let (mut run, sec) = ctx.start("verify");
    let suite: Suite = sec.pick::<String>(&mut run.resolved, "suite", a.suite, Some("fast"))?.parse()?;
    let repin = sec.pick(&mut run.resolved, "repin", a.repin.then_some(true), Some("false"))?;
    let measured = calibration::measure(suite, &ctx.consts, ctx.seed)?;
    let report = calibration::check(&measured, &ctx.consts)?;
    let mut csv = String::from(calibration::MEASUREMENT_CSV_HEADER);
    csv.push('\n');
    for m in &report {
        csv.push_str(&m.csv_row());
        csv.push('\n');
        let drift = m.measured / m.pinned - 1.0;
        println!("{:<12} {:>6} pinned {:>10.4e} measured {:>10.4e} drift {:>+7.1}% {}", m.name, format!("{:?}", m.bound), m.pinned, m.measured, 100.0 * drift, if m.pass { "ok" } else { "FAIL" });
    }
    run.write("verify.csv", &csv)?;
    let failed: Vec<&str> = report.iter().filter(|m| !m.pass).map(|m| m.name).collect();
    if repin {
        let table = calibration::repin(&ctx.consts, &measured);
        let path = run.write("constants.toml", &table.to_toml())?;
        println!("repinned table -> {}", path.display());
        return run.finish(&table, "repinned");
    }
    run.finish(&ctx.consts, if failed.is_empty() { "ok" } else { "failed" })?;
    if !failed.is_empty() {
        return Err(Failure::Check(format!("constants out of band: {}", failed.join(", "))));
    }
    Ok(())
}

fn decompose(ctx: &Ctx, a: crate::DecomposeArgs) -> Result<(), Failure> {
    let (mut run, sec) = ctx.start("decompose");
    let rd = radii_args(&sec, &mut run, a.d, a.r, a.rho, false)?;
    let lambda = sec.pick(&mut run.resolved, "lambda", a.lambda, Some("0.5"))?.0;
    let c_piece = ctx.consts.get("c_piece")?.to_string();
    let c = sec.pick(&mut run.resolved, "c", a.c, Some(&c_piece))?.0;
    let n = sec.pick(&mut run.resolved, "n", a.n, Some("2e5"))?.0;
    let d = rd.dim();
    let pieces = decomposition::partition(&rd, lambda)?;
    let cov = decomposition::coverage(&rd, lambda, &pieces, 10_000, rng::derive_seed(ctx.seed, 1))?;
    let (e, f) = geometry::make_sphere_pair(&rd, &Frame::identity(d))?;
    let ph = decomposition::pigeonhole_best(&e, &f, &rd, lambda, c, &pieces, n, ctx.seed)?;
    let path = run.write("decompose.csv", &ph.to_csv(&pieces))?;
    println!("{} pieces (bound {}) -> {}", pieces.len(), decomposition::piece_bound(lambda, d), path.display());
    println!("coverage {}/{}, max multiplicity {}", cov.covered, cov.samples, cov.max_multiplicity);
    println!("best piece {} T {:.4e}; total T {:.4e}, total/count {:.4e}", ph.best, ph.best_t.value, ph.total.value, ph.total.value / pieces.len() as f64);
    let ok = cov.covered == cov.samples && ph.holds();
    run.finish(&ctx.consts, if ok { "ok" } else { "failed" })?;
    if !ok {
        return Err(Failure::Check("coverage incomplete or pigeonhole bound violated".into()));
    }
    Ok(())
}

fn tower(ctx: &Ctx, a: crate::TowerArgs) -> Result<(), Failure> {
    let (mut run, sec) = ctx.start("tower");
    let n = sec.pick(&mut run.resolved, "n", a.n, Some("2e4"))?.0;
    let rho = sec.pick(&mut run.resolved, "rho", a.rho, Some("2^-6"))?.0;
    let rd = match a.r.is_some() || sec.has("r") {
        true => radii_args(&sec, &mut run, a.d, a.r, Some(Real(rho)), false)?,
        false => {
            let d: usize = sec.pick(&mut run.resolved, "d", a.d, Some("3"))?;
            let kind = match sec.pick::<String>(&mut run.resolved, "kind", a.kind, Some("knapp"))?.as_str() {
                "ball" => SpecialKind::Ball,
                "knapp" => SpecialKind::Knapp,
                other => return Err(Failure::Usage(format!("unknown kind `{other}` (ball, knapp)"))),
            };
            geometry::special_radii(kind, rho, d)?
        }
    };
    let d = rd.dim();
    let (e, f) = geometry::make_sphere_pair(&rd, &Frame::identity(d))?;
    let q = surface::qex_report(&e, &f, 20 * n, ctx.seed)?;
    let t = lab::build_tower(&e, &f, &lab::TowerConfig::default(), rng::derive_seed(ctx.seed, 1))?;
    let (checked, passed) = t.verify_alternating();
    let inf = lab::inflation_lower_bound_check(
        &t,
        &q,
        n,
        rng::derive_seed(ctx.seed, 2),
        ctx.threshold("c_infl")?,
        ctx.threshold("c_infl_ab")?,
        ctx.threshold("c_ub")?,
    )?;
    let cont = lab::ellipsoid_containment(&t, convex::default_eta(d), ctx.consts.get("c_stop")?)?;
    let sl = lab::slicing_lower_bound_check(&t, cont.body.shape(), q.meas_e.value, n, rng::derive_seed(ctx.seed, 3), ctx.threshold("c_slice")?)?;
    let (c_alpha, c_vol) = (ctx.threshold("c_alpha")?, ctx.threshold("c_vol")?);
    let alpha_ratio = t.densities[0] / q.alpha;

    let mut rows: Vec<(String, f64, f64, bool)> = Vec::new();
    for (i, l) in t.levels.iter().enumerate() {
        rows.push((format!("level_{}_size", i + 1), l.tuples.len() as f64, f64::NAN, true));
    }
    rows.push(("alternating_checked".into(), checked as f64, f64::NAN, checked == passed));
    rows.push(("omega1_over_alpha".into(), alpha_ratio, c_alpha, alpha_ratio >= c_alpha));
    let lower = if inf.vacuous { f64::NAN } else { inf.meas_e_pow / inf.det_integral.value };
    rows.push(("meas_e_pow_over_det_integral".into(), lower, ctx.threshold("c_infl")?, inf.lower_pass));
    rows.push(("det_integral_over_alpha_beta_d".into(), inf.det_integral.value / inf.alpha_beta_d, ctx.threshold("c_infl_ab")?, inf.vacuous || inf.ab_pass));
    let c_ub = ctx.threshold("c_ub")?;
    rows.push(("meas_e_pow_over_upper".into(), c_ub * inf.meas_e_pow / inf.upper, c_ub, inf.upper_pass));
    rows.push(("ellipsoid_volume_over_omega1".into(), cont.vol_ratio, c_vol, cont.degenerate || cont.vol_ratio <= c_vol));
    rows.push(("meas_e_over_slicing_integral".into(), sl.margin, ctx.threshold("c_slice")?, sl.pass));
    let mut csv = String::from("quantity,value,threshold,pass\n");
    for (k, v, th, ok) in &rows {
        csv.push_str(&format!("{k},{v:e},{th:e},{ok}\n"));
    }
    print!("{csv}");
    run.write("tower.csv", &csv)?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.3).map(|r| r.0.as_str()).collect();
    run.finish(&ctx.consts, if failed.is_empty() { "ok" } else { "failed" })?;
    if !failed.is_empty() {
        return Err(Failure::Check(failed.join(", ")));
    }
    Ok(())
}
