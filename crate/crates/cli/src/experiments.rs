use std::collections::BTreeMap;
use std::error::Error;
use std::time::Instant;

use emlab_core::capacity::{cdc_sweep, BoundarySample};
use emlab_core::geometry::{build_domain, dist, DomainSpec, GridDomain, Point, Shape};
use emlab_core::growth::{log_grid, q_alpha, verify_growth_lemmas, GrowthFunction, LemmaOptions};
use emlab_core::measure::{decay_profile, far_field_decay, nonuniqueness_gap, normal_ray_poles, pole_unknown, represent_solution};
use emlab_core::norms::{
    average_drift_constant, campanato_from_table, field_points, holder_seminorm, holder_suite, norm_equivalence_report,
    oscillation_table, NormReport, PointSet, Witness,
};
use emlab_core::operator::{assemble, DiscreteOperator};

use crate::config::{DataKind, ExperimentConfig, ExperimentId};
use crate::report::{num, opt, Bound, CheckRow, RunReport, Table};
use crate::CliError;

type Run = Result<(), Box<dyn Error>>;
type Tol = BTreeMap<String, f64>;

/// Runs the configured experiment. Module failures become failing `error` rows, so a
/// report is returned for every valid configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let id = cfg.validate()?;
    let tol = cfg.tolerances()?;
    let mut rep = RunReport::new(cfg);
    let start = Instant::now();
    let run = match id {
        ExperimentId::Wellposed => wellposed,
        ExperimentId::Illposed => illposed,
        ExperimentId::NormEquivalence => norm_equivalence,
        ExperimentId::CdcSweep => cdc,
        ExperimentId::MeasureDecay => measure_decay,
        ExperimentId::GrowthSuite => growth_suite,
        ExperimentId::CampanatoEquivalence => campanato_equivalence,
    };
    if let Err(e) = run(cfg, &tol, &mut rep) {
        rep.rows.push(CheckRow::error(id.as_str(), e.to_string()));
    }
    rep.wall_time = start.elapsed().as_secs_f64();
    rep.pass = rep.all_pass();
    Ok(rep)
}

fn domain_of(cfg: &ExperimentConfig) -> Result<GridDomain, Box<dyn Error>> {
    let id = cfg.id()?;
    let spec = cfg.domain.clone().or_else(|| id.default_domain()).ok_or("experiment needs a domain")?;
    Ok(build_domain(&spec)?)
}

fn operator<'a>(cfg: &ExperimentConfig, d: &'a GridDomain) -> Result<DiscreteOperator<'a>, Box<dyn Error>> {
    Ok(assemble(d, &cfg.coefficient.clone().unwrap_or_default())?)
}

fn phi_of(cfg: &ExperimentConfig) -> GrowthFunction {
    cfg.phi.clone().unwrap_or_else(|| cfg.id().map(|id| id.default_phi()).unwrap_or(GrowthFunction::Power { a: 0.5 }))
}

/// `alpha` parameter, else the exponent of a power `phi`, else `fallback`.
fn alpha_of(cfg: &ExperimentConfig, fallback: f64) -> f64 {
    cfg.params.alpha.unwrap_or(match phi_of(cfg) {
        GrowthFunction::Power { a } => a,
        _ => fallback,
    })
}

fn tol(t: &Tol, k: &str) -> f64 {
    t[k]
}

fn pt(p: &Point) -> String {
    format!("{} {} {}", p[0], p[1], p[2])
}

fn witness(w: &Witness) -> (String, String) {
    match w {
        Witness::None => (String::new(), String::new()),
        Witness::Pair { a, b, .. } => (pt(a), pt(b)),
        Witness::Ball { x, r } => (pt(x), num(*r)),
    }
}

fn boundary_box(d: &GridDomain) -> (Point, Point, Point) {
    let c = d.face_centroids();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut mean = [0.0; 3];
    for p in c {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
            mean[k] += p[k] / c.len() as f64;
        }
    }
    (lo, hi, mean)
}

/// Face centroid nearest `p`, or nearest the center of the lowest boundary face.
fn boundary_point(d: &GridDomain, p: Option<Point>) -> Point {
    let target = p.unwrap_or_else(|| {
        let (lo, hi, _) = boundary_box(d);
        let dim = d.dim();
        let mut t = [0.0; 3];
        for k in 0..dim {
            t[k] = 0.5 * (lo[k] + hi[k]);
        }
        t[dim - 1] = lo[dim - 1];
        t
    });
    d.face_centroid(d.nearest_face(&target))
}

/// Face centroid nearest the extreme point of the boundary along `±e_0`.
fn extreme_point(d: &GridDomain, sign: f64) -> Point {
    let (lo, hi, mean) = boundary_box(d);
    let t = [if sign > 0.0 { hi[0] } else { lo[0] }, mean[1], mean[2]];
    d.face_centroid(d.nearest_face(&t))
}

fn power_datum(d: &GridDomain, y0: &Point, alpha: f64) -> Vec<f64> {
    d.face_centroids().iter().map(|y| dist(y, y0).powf(alpha)).collect()
}

fn holder_table(rows: &[(&str, &NormReport)]) -> Table {
    let mut t = Table::new("holder", &["set", "value", "method", "pairs", "witness_a", "witness_b"]);
    for (set, r) in rows {
        let (a, b) = witness(&r.witness);
        t.push(vec![set.to_string(), num(r.value), format!("{:?}", r.method).to_lowercase(), r.pairs.to_string(), a, b]);
    }
    t
}

fn wellposed(cfg: &ExperimentConfig, t: &Tol, rep: &mut RunReport) -> Run {
    let d = domain_of(cfg)?;
    let op = operator(cfg, &d)?;
    let alpha = alpha_of(cfg, 0.4);
    let phi = cfg.phi.clone().unwrap_or(GrowthFunction::Power { a: alpha });
    let y0 = boundary_point(&d, cfg.params.anchor);
    let f = power_datum(&d, &y0, alpha);
    let sol = op.solve_dirichlet(&f)?;
    rep.rows.push(CheckRow::new("solve_residual", sol.stats.residual, Bound::Info, "operator::solve_dirichlet"));

    let n = d.n_unknowns();
    let k = cfg.params.trace_poles.unwrap_or(8).clamp(1, n);
    let poles: Vec<usize> = (0..k).map(|i| i * n / k).collect();
    let represented = represent_solution(&op, &f, None, &poles)?;
    let trace_err = poles.iter().zip(&represented).map(|(&p, v)| (sol.field.cells[p] - v).abs()).fold(0.0, f64::max);
    rep.rows.push(CheckRow::new("trace_recovery", trace_err, Bound::AtMost { value: tol(t, "trace") }, "measure::represent_solution"));

    let plan = cfg.plan();
    let nf = holder_seminorm(d.face_centroids(), &f, &phi, plan);
    let (pts, vals) = field_points(&d, &sol.field, PointSet::Closure);
    let nu = holder_seminorm(&pts, &vals, &phi, plan);
    rep.rows.push(CheckRow::new("holder_f", nf.value, Bound::Info, "norms::holder_seminorm"));
    rep.rows.push(CheckRow::new("holder_u", nu.value, Bound::Info, "norms::holder_seminorm"));
    rep.rows.push(CheckRow::new(
        "lower_bound_slack",
        nu.value - nf.value,
        Bound::AtLeast { value: tol(t, "lower_bound_slack") },
        "norms::holder_seminorm",
    ));
    rep.rows.push(CheckRow::new(
        "holder_ratio",
        nu.value / nf.value,
        Bound::AtMost { value: tol(t, "ratio_max") },
        "norms::holder_seminorm",
    ));
    rep.tables.push(holder_table(&[("boundary", &nf), ("closure", &nu)]));

    let mut ray = Table::new("trace_ray", &["t", "u"]);
    for p in normal_ray_poles(&d, &y0, 0.5)? {
        ray.push(vec![num(dist(&d.cell_center(p), &y0)), num(sol.field.cells[p])]);
    }
    rep.plots.push(ray);
    Ok(())
}

fn reference_radius(cfg: &ExperimentConfig, d: &GridDomain) -> f64 {
    if let Some(DomainSpec { shape: Shape::ExteriorOfBall(p), .. }) = &cfg.domain {
        return p.radius;
    }
    if cfg.domain.is_none() {
        return 1.0;
    }
    let (_, _, c) = boundary_box(d);
    let f = d.face_centroids();
    f.iter().map(|y| dist(y, &c)).sum::<f64>() / f.len() as f64
}

fn illposed(cfg: &ExperimentConfig, t: &Tol, rep: &mut RunReport) -> Run {
    let d = domain_of(cfg)?;
    let op = operator(cfg, &d)?;
    let alpha = alpha_of(cfg, 0.4);
    let x0 = cfg.params.x0.map(|p| d.face_centroid(d.nearest_face(&p))).unwrap_or_else(|| extreme_point(&d, 1.0));
    let y0 = cfg.params.anchor.map(|p| d.face_centroid(d.nearest_face(&p))).unwrap_or_else(|| extreme_point(&d, -1.0));
    let f = match cfg.params.data.unwrap_or_default() {
        DataKind::Power => power_datum(&d, &y0, alpha),
        DataKind::Constant => vec![1.0; d.faces.len()],
    };
    let gap = nonuniqueness_gap(&op, &f, &x0, &y0)?;
    rep.rows.push(CheckRow::new("identity_residual", gap.max_abs, Bound::AtMost { value: tol(t, "identity") }, "measure::nonuniqueness_gap"));

    let (_, _, center) = boundary_box(&d);
    let probe_r = cfg.params.probe_radius.unwrap_or(2.0 * reference_radius(cfg, &d));
    let probe = (0..d.n_unknowns())
        .min_by(|&a, &b| {
            let da = (dist(&d.cell_center(a), &center) - probe_r).abs();
            let db = (dist(&d.cell_center(b), &center) - probe_r).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .ok_or(CliError::Config("empty domain".into()))?;
    let diff = gap.difference[probe].abs();
    if gap.delta_f == 0.0 {
        rep.rows.push(
            CheckRow::new("separation", gap.separation, Bound::AtMost { value: tol(t, "identity") }, "measure::nonuniqueness_gap")
                .with_note("solutions coincide"),
        );
    } else {
        let need = tol(t, "separation_factor") * gap.delta_f.abs();
        rep.rows.push(
            CheckRow::new("separation", diff, Bound::AtLeast { value: need }, "measure::nonuniqueness_gap")
                .with_note(format!("solutions differ at |X - c| = {}", num(dist(&d.cell_center(probe), &center)))),
        );
    }
    rep.rows.push(CheckRow::new("mass_at_probe", gap.mass[probe], Bound::Info, "measure::mass_field"));
    rep.rows.push(CheckRow::new("max_deficit", gap.max_deficit, Bound::Info, "measure::mass_field"));

    let mut table = Table::new("gap_profile", &["radius", "mass", "difference", "gap"]);
    let mut plot = Table::new("mass_profile", &["radius", "mass"]);
    let dir = 1.0 / 3f64.sqrt();
    let mut last = usize::MAX;
    let h = d.h();
    let mut s = 0.0;
    loop {
        let p = [center[0] + s * dir, center[1] + s * dir, center[2] + s * dir];
        s += h;
        let Ok(u) = pole_unknown(&d, &p) else {
            if s > probe_r * 64.0 {
                break;
            }
            continue;
        };
        if u == last {
            continue;
        }
        last = u;
        let r = dist(&d.cell_center(u), &center);
        table.push(vec![num(r), num(gap.mass[u]), num(gap.difference[u]), num(gap.gap.cells[u])]);
        plot.push(vec![num(r), num(gap.mass[u])]);
    }
    rep.tables.push(table);
    rep.plots.push(plot);
    Ok(())
}

fn norm_equivalence(cfg: &ExperimentConfig, t: &Tol, rep: &mut RunReport) -> Run {
    let d = domain_of(cfg)?;
    let op = operator(cfg, &d)?;
    let phi = phi_of(cfg);
    let suite = holder_suite(&d, alpha_of(cfg, 0.5));
    let eq = norm_equivalence_report(&op, &phi, &suite, cfg.plan())?;
    let bound = Bound::Within { lo: tol(t, "ratio_min"), hi: tol(t, "ratio_max") };
    rep.rows.push(
        CheckRow::new("cad_surrogate", if eq.cad_surrogate { 1.0 } else { 0.0 }, Bound::AtLeast { value: 1.0 }, "norms::cad_spot_check")
            .with_note(eq.cad_note.clone()),
    );
    let mut table = Table::new("equivalence", &["label", "holder_u", "carleson", "cc_ratio", "holder_f", "campanato", "hc_ratio", "flagged"]);
    let mut plot = Table::new("ratios", &["datum", "cc_ratio", "hc_ratio"]);
    for (i, r) in eq.rows.iter().enumerate() {
        let na = |v: Option<f64>| v.unwrap_or(f64::NAN);
        rep.rows.push(CheckRow::new(format!("carleson_ratio[{}]", r.label), na(r.cc_ratio), bound, "norms::norm_equivalence_report"));
        rep.rows.push(CheckRow::new(format!("campanato_ratio[{}]", r.label), na(r.hc_ratio), bound, "norms::norm_equivalence_report"));
        table.push(vec![
            r.label.clone(),
            num(r.holder_u),
            num(r.carleson),
            opt(r.cc_ratio),
            num(r.holder_f),
            num(r.campanato),
            opt(r.hc_ratio),
            r.flagged.to_string(),
        ]);
        plot.push(vec![i.to_string(), opt(r.cc_ratio), opt(r.hc_ratio)]);
    }
    rep.tables.push(table);
    rep.plots.push(plot);
    Ok(())
}

fn cdc(cfg: &ExperimentConfig, t: &Tol, rep: &mut RunReport) -> Run {
    let d = domain_of(cfg)?;
    let sample = cfg.params.sample.unwrap_or(BoundarySample::Stride(97)).faces(d.faces.len());
    let scales = cfg.scales.clone().unwrap_or_else(|| ExperimentId::CdcSweep.default_scales());
    let sweep = cdc_sweep(&d, &sample, &scales)?;
    rep.rows.push(CheckRow::new("inf_ratio", sweep.inf_ratio, Bound::AtLeast { value: tol(t, "inf_ratio_min") }, "capacity::cdc_sweep"));
    let mut table = Table::new("cdc_table", &["x_id", "r", "cap_num", "cap_den", "ratio"]);
    for r in &sweep.rows {
        table.push(vec![r.x_id.to_string(), num(r.r), num(r.cap_num), num(r.cap_den), num(r.ratio)]);
    }
    let mut plot = Table::new("cdc_by_scale", &["r", "min_ratio"]);
    let mut radii: Vec<f64> = sweep.rows.iter().map(|r| r.r).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    for r in radii {
        let m = sweep.rows.iter().filter(|row| row.r == r).map(|row| row.ratio).fold(f64::INFINITY, f64::min);
        plot.push(vec![num(r), num(m)]);
    }
    rep.tables.push(table);
    rep.plots.push(plot);
    Ok(())
}

fn measure_decay(cfg: &ExperimentConfig, t: &Tol, rep: &mut RunReport) -> Run {
    let d = domain_of(cfg)?;
    let op = operator(cfg, &d)?;
    if d.is_exterior() {
        let a = cfg.params.base.map(|p| d.face_centroid(d.nearest_face(&p))).unwrap_or_else(|| extreme_point(&d, 1.0));
        let r = cfg.params.radius.unwrap_or_else(|| d.boundary_diameter() + d.h());
        let (_, _, c) = boundary_box(&d);
        let radii = cfg.params.pole_radii.clone().unwrap_or_else(|| vec![2.0, 3.0, 4.0, 6.0]);
        let s = 1.0 / 3f64.sqrt();
        let poles: Vec<Point> = radii.iter().map(|t| [c[0] + t * s, c[1] + t * s, c[2] + t * s]).collect();
        let far = far_field_decay(&op, &a, r, &poles)?;
        let (e, w) = (tol(t, "far_exponent"), tol(t, "far_exponent_tol"));
        rep.rows.push(CheckRow::new(
            "far_field_exponent",
            far.exponent.unwrap_or(f64::NAN),
            Bound::Within { lo: e - w, hi: e + w },
            "measure::far_field_decay",
        ));
        rep.rows.push(CheckRow::new("far_field_r2", far.r2.unwrap_or(f64::NAN), Bound::Info, "measure::far_field_decay"));
        let mut table = Table::new("far_field", &["distance", "center_distance", "mass", "far"]);
        let mut plot = Table::new("far_field", &["center_distance", "mass"]);
        for row in &far.rows {
            table.push(vec![num(row.distance), num(row.center_distance), num(row.mass), row.far.to_string()]);
            plot.push(vec![num(row.center_distance), num(row.mass)]);
        }
        rep.tables.push(table);
        rep.plots.push(plot);
        return Ok(());
    }
    let base = boundary_point(&d, cfg.params.base);
    let scales = cfg.scales.clone().unwrap_or_else(|| ExperimentId::MeasureDecay.default_scales());
    let decay = decay_profile(&op, &base, &scales, cfg.phi.as_ref())?;
    rep.rows.push(CheckRow::new(
        "decay_exponent",
        decay.exponent.unwrap_or(f64::NAN),
        Bound::Within { lo: tol(t, "exponent_min"), hi: tol(t, "exponent_max") },
        "measure::decay_profile",
    ));
    rep.rows.push(CheckRow::new("decay_constant", decay.constant.unwrap_or(f64::NAN), Bound::Info, "measure::decay_profile"));
    if let Some(c) = decay.phi_constant {
        rep.rows.push(CheckRow::new("phi_constant", c, Bound::Info, "measure::decay_profile"));
    }
    let mut table = Table::new("decay", &["scale", "pole_distance", "mass", "bound"]);
    for r in &decay.rows {
        table.push(vec![num(r.scale), num(r.pole_distance), num(r.mass), num(r.bound)]);
    }
    let mut fits = Table::new("decay_fits", &["scale", "exponent", "constant", "r2"]);
    for f in &decay.fits {
        fits.push(vec![num(f.scale), num(f.exponent), num(f.constant), num(f.r2)]);
    }
    for (k, s) in decay.fits.iter().map(|f| f.scale).enumerate() {
        let mut plot = Table::new(format!("decay_scale{k}"), &["pole_distance", "mass"]);
        for r in decay.rows.iter().filter(|r| r.scale == s) {
            plot.push(vec![num(r.pole_distance), num(r.mass)]);
        }
        rep.plots.push(plot);
    }
    rep.tables.push(table);
    rep.tables.push(fits);
    Ok(())
}

fn growth_suite(cfg: &ExperimentConfig, t: &Tol, rep: &mut RunReport) -> Run {
    let phi = phi_of(cfg);
    let alpha = cfg.params.alpha.unwrap_or(0.5);
    let beta = cfg.params.beta.unwrap_or(0.5);
    let g = cfg.params.grid.clone().unwrap_or(crate::config::GridSpec { lo: 1e-4, hi: 1e4, n: 200 });
    if !(g.lo > 0.0 && g.hi > g.lo && g.n >= 1) {
        return Err(Box::new(CliError::Config("grid needs 0 < lo < hi and n >= 1".into())));
    }
    let grid = log_grid(g.lo, g.hi, g.n);
    let pairs = log_grid((g.lo * 10.0).min(g.hi), (g.hi / 10.0).max(g.lo), cfg.params.pair_points.unwrap_or(25).max(1));
    let slack_min = tol(t, "slack_min");
    let opts = LemmaOptions { tolerance: (-slack_min).max(0.0), ..LemmaOptions::default() };
    let lemmas = verify_growth_lemmas(&phi, alpha, beta, &grid, &pairs, opts)?;
    let mut table = Table::new("growth_checks", &["check_id", "worst_t", "slack", "pass", "evaluated"]);
    for r in &lemmas.rows {
        rep.rows.push(CheckRow::new(r.check_id.clone(), r.slack, Bound::AtLeast { value: slack_min }, "growth::verify_growth_lemmas"));
        table.push(vec![r.check_id.clone(), num(r.worst_t), num(r.slack), r.pass.to_string(), r.evaluated.to_string()]);
    }
    rep.rows.push(CheckRow::new("q_alpha_at_1", q_alpha(&phi, alpha, 1.0)?, Bound::Info, "growth::q_alpha"));
    let mut plot = Table::new("q_alpha", &["t", "phi", "q_alpha"]);
    for &s in &grid {
        plot.push(vec![num(s), num(phi.eval(s)), num(q_alpha(&phi, alpha, s)?)]);
    }
    rep.tables.push(table);
    rep.plots.push(plot);
    Ok(())
}

fn campanato_equivalence(cfg: &ExperimentConfig, t: &Tol, rep: &mut RunReport) -> Run {
    let d = domain_of(cfg)?;
    let phi = phi_of(cfg);
    let p = cfg.params.p.unwrap_or(1.0);
    if !(p >= 1.0) {
        return Err(Box::new(CliError::Config("p must be at least 1".into())));
    }
    let bound = Bound::Within { lo: tol(t, "ratio_min"), hi: tol(t, "ratio_max") };
    let mut table = Table::new("campanato", &["label", "holder_f", "campanato", "ratio", "drift_constant"]);
    for e in holder_suite(&d, alpha_of(cfg, 0.5)) {
        let hf = holder_seminorm(d.face_centroids(), &e.data, &phi, cfg.plan()).value;
        let osc = oscillation_table(&d, &e.data, p);
        let camp = campanato_from_table(&d, &osc, &phi).value;
        let via_osc = osc.scales.iter().map(|&r| osc.osc(r) / phi.eval(r)).fold(0.0, f64::max);
        let drift = average_drift_constant(&d, &e.data, p);
        let ratio = if hf > 0.0 { camp / hf } else { f64::NAN };
        rep.rows.push(CheckRow::new(format!("campanato_ratio[{}]", e.label), ratio, bound, "norms::campanato_norm"));
        rep.rows.push(CheckRow::new(
            format!("oscillation_identity[{}]", e.label),
            (camp - via_osc).abs(),
            Bound::AtMost { value: 1e-9 },
            "norms::oscillation",
        ));
        table.push(vec![e.label.clone(), num(hf), num(camp), num(ratio), num(drift)]);
        let mut plot = Table::new(format!("osc_{}", e.label), &["r", "osc"]);
        for &r in &osc.scales {
            plot.push(vec![num(r), num(osc.osc(r))]);
        }
        rep.plots.push(plot);
    }
    rep.tables.push(table);
    Ok(())
}
