//! Acceptance run: one line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::time::Instant;

use emlab_core::capacity::{cdc_ratio, cdc_sweep, potential_measure_check, reference_ball_capacity, BoundarySample};
use emlab_core::geometry::{build_domain, dist, whitney_decompose, DomainSpec, GridDomain, Point};
use emlab_core::growth::{log_grid, q_alpha, verify_growth_lemmas, GrowthFunction, LemmaOptions};
use emlab_core::measure::{decay_profile, elliptic_measure_row, far_field_decay, measure_row_at, nonuniqueness_gap, represent_solution};
use emlab_core::norms::{field_points, holder_seminorm, PointSet, SamplingPlan};
use emlab_core::norms::{campanato_norm, holder_suite, norm_equivalence_report};
use emlab_core::operator::{assemble, estimate_boundary_holder, CoefficientField};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cube(h: f64) -> GridDomain {
    build_domain(&DomainSpec::unit_cube(h)).unwrap()
}

fn exterior() -> GridDomain {
    build_domain(&DomainSpec::exterior_of_ball(1.0, 8.0, 1.0 / 6.0)).unwrap()
}

/// Unknown whose center lies closest to the sphere `|X| = radius`.
fn unknown_near_radius(d: &GridDomain, radius: f64) -> usize {
    (0..d.n_unknowns()).min_by(|&a, &b| {
        let ra = (dist(&d.cell_center(a), &[0.0; 3]) - radius).abs();
        let rb = (dist(&d.cell_center(b), &[0.0; 3]) - radius).abs();
        ra.total_cmp(&rb).then(a.cmp(&b))
    })
    .unwrap()
}

fn growth_suite() -> Outcome {
    let t = Instant::now();
    let phi = GrowthFunction::power(0.3).unwrap();
    let grid = log_grid(1e-4, 1e4, 200);
    let pairs = log_grid(1e-3, 1e3, 25);
    let opts = LemmaOptions { tolerance: 1e-9, ..LemmaOptions::default() };
    let rep = verify_growth_lemmas(&phi, 0.5, 0.5, &grid, &pairs, opts).unwrap();
    let q = q_alpha(&phi, 0.5, 1.0).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let worst = rep.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let checks_ok = rep.rows.iter().all(|r| r.slack >= -1e-9 && r.evaluated > 0);
    let pass = checks_ok && (q - 5.0).abs() <= 1e-6 && elapsed < 2.0;
    outcome(pass, format!("{} checks, min slack {worst:.3e}, Q(1) = {q:.9}, {elapsed:.2} s", rep.rows.len()))
}

fn capacity_oracle() -> Outcome {
    let t = Instant::now();
    let exact = 8.0 * PI;
    let c24 = reference_ball_capacity(&[0.0; 3], 1.0, 1.0 / 24.0).unwrap();
    let c48 = reference_ball_capacity(&[0.0; 3], 1.0, 1.0 / 48.0).unwrap();
    let (e24, e48) = ((c24 / exact - 1.0).abs(), (c48 / exact - 1.0).abs());
    let scaled: Vec<f64> =
        [0.25, 0.5, 1.0].iter().map(|&r| reference_ball_capacity(&[0.0; 3], r, 1.0 / 24.0).unwrap() / r).collect();
    let mean = scaled.iter().sum::<f64>() / 3.0;
    let spread = scaled.iter().map(|s| (s / mean - 1.0).abs()).fold(0.0, f64::max);
    let elapsed = t.elapsed().as_secs_f64();
    let pass = e24 <= 0.05 && e48 < e24 && spread <= 0.1 && elapsed < 60.0;
    outcome(
        pass,
        format!("h=1/24 {c24:.4} ({:.2}%), h=1/48 {c48:.4} ({:.2}%), Cap/r spread {:.1}%, {elapsed:.1} s", 100.0 * e24, 100.0 * e48, 100.0 * spread),
    )
}

fn mass_dichotomy(ext: &GridDomain) -> Outcome {
    let d = cube(1.0 / 16.0);
    let op = assemble(&d, &CoefficientField::identity()).unwrap();
    let n = d.n_unknowns();
    let mut worst: f64 = 0.0;
    for p in (0..n).step_by(n / 12) {
        let row = measure_row_at(&op, p).unwrap();
        worst = worst.max((row.total_mass - 1.0).abs());
    }
    let eop = assemble(ext, &CoefficientField::identity()).unwrap();
    let pole = unknown_near_radius(ext, 2.0);
    let x = ext.cell_center(pole);
    let row = elliptic_measure_row(&eop, &x).unwrap();
    let pass = worst <= 1e-8 && (row.total_mass / 0.5 - 1.0).abs() <= 0.05;
    outcome(pass, format!("cube max |mass - 1| {worst:.2e}; exterior mass {:.4} at |X| = {:.4}", row.total_mass, dist(&x, &[0.0; 3])))
}

fn duality() -> Outcome {
    let d = cube(1.0 / 8.0);
    let op = assemble(&d, &CoefficientField::identity()).unwrap();
    let y0 = d.face_centroid(d.nearest_face(&[0.5, 0.5, 0.0]));
    let c = d.face_centroids();
    let data: [Vec<f64>; 3] = [
        vec![1.0; c.len()],
        c.iter().map(|y| y[0] + 2.0 * y[1] - y[2]).collect(),
        c.iter().map(|y| dist(y, &y0).powf(0.4)).collect(),
    ];
    let all: Vec<usize> = (0..d.n_unknowns()).collect();
    let mut worst: f64 = 0.0;
    for f in &data {
        let rep = represent_solution(&op, f, None, &all).unwrap();
        let sol = op.solve_dirichlet(f).unwrap();
        worst = rep.iter().zip(&sol.field.cells).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    outcome(worst <= 1e-8, format!("max |represented - solved| {worst:.2e} over 3 data"))
}

fn nonuniqueness(ext: &GridDomain) -> Outcome {
    let op = assemble(ext, &CoefficientField::identity()).unwrap();
    let x0 = ext.face_centroid(ext.nearest_face(&[1.0, 0.0, 0.0]));
    let y0 = ext.face_centroid(ext.nearest_face(&[-1.0, 0.0, 0.0]));
    let f: Vec<f64> = ext.face_centroids().iter().map(|y| dist(y, &y0).powf(0.4)).collect();
    let gap = nonuniqueness_gap(&op, &f, &x0, &y0).unwrap();
    let pole = unknown_near_radius(ext, 2.0);
    let diff = gap.difference[pole].abs();
    let need = 0.4 * gap.delta_f.abs();
    let pass = gap.max_abs <= 1e-9 && diff >= need;
    outcome(pass, format!("identity residual {:.2e}; difference {diff:.4} vs 0.4|Δf| = {need:.4}", gap.max_abs))
}

fn wellposedness() -> Outcome {
    let phi = GrowthFunction::power(0.4).unwrap();
    let mut ratios = Vec::new();
    let mut min_slack = f64::INFINITY;
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let d = cube(h);
        let op = assemble(&d, &CoefficientField::identity()).unwrap();
        let y0 = d.face_centroid(d.nearest_face(&[0.5, 0.5, 0.0]));
        let f: Vec<f64> = d.face_centroids().iter().map(|y| dist(y, &y0).powf(0.4)).collect();
        let sol = op.solve_dirichlet(&f).unwrap();
        let nf = holder_seminorm(d.face_centroids(), &f, &phi, SamplingPlan::Exact).value;
        let (pts, vals) = field_points(&d, &sol.field, PointSet::Closure);
        let nu = holder_seminorm(&pts, &vals, &phi, SamplingPlan::Exact).value;
        min_slack = min_slack.min(nu - nf);
        ratios.push(nu / nf);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let variation = hi / lo - 1.0;
    let pass = min_slack >= -1e-6 && hi <= 50.0 && variation <= 0.2;
    outcome(pass, format!("‖u‖/‖f‖ = {ratios:.4?}, variation {:.1}%, min slack {min_slack:.3e}", 100.0 * variation))
}

fn boundary_holder() -> Outcome {
    let h = 1.0 / 128.0;
    let d = build_domain(&DomainSpec::l_shape(h)).unwrap();
    let op = assemble(&d, &CoefficientField::identity()).unwrap();
    let f: Vec<f64> = d.face_centroids().iter().map(|c| if c[0].abs().max(c[1].abs()) > 1.0 - h { 1.0 } else { 0.0 }).collect();
    let s = op.solve_dirichlet(&f).unwrap();
    let scales: Vec<f64> = (0..6).map(|k| 0.25 / 2f64.powi(k)).filter(|&r| r >= 4.0 * h).collect();
    let corner = estimate_boundary_holder(&d, &s.field, &[0.0; 3], &scales).unwrap();
    let (ce, cr2) = (corner.exponent.unwrap_or(f64::NAN), corner.r2.unwrap_or(0.0));

    let q = build_domain(&DomainSpec::unit_square(1.0 / 64.0)).unwrap();
    let qop = assemble(&q, &CoefficientField::identity()).unwrap();
    let g: Vec<f64> = q.faces.iter().map(|f| if f.axis == 1 && f.side == 1 { 1.0 } else { 0.0 }).collect();
    let qs = qop.solve_dirichlet(&g).unwrap();
    let flat = estimate_boundary_holder(&q, &qs.field, &[0.5, 0.0, 0.0], &[1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0]).unwrap();
    let fe = flat.exponent.unwrap_or(f64::NAN);
    let pass = (ce - 2.0 / 3.0).abs() <= 0.05 && cr2 >= 0.95 && (fe - 1.0).abs() <= 0.1;
    outcome(pass, format!("corner exponent {ce:.4} (R² {cr2:.4}), flat exponent {fe:.4}"))
}

fn decay(ext: &GridDomain) -> Outcome {
    let d = cube(1.0 / 32.0);
    let op = assemble(&d, &CoefficientField::identity()).unwrap();
    let rep = decay_profile(&op, &[0.5, 0.5, 0.0], &[0.25, 0.125], None).unwrap();
    let e = rep.exponent.unwrap_or(f64::NAN);
    let eop = assemble(ext, &CoefficientField::identity()).unwrap();
    let h = ext.h();
    let a = ext.face_centroid(ext.nearest_face(&[1.0, 0.0, 0.0]));
    let poles: Vec<Point> = [2.0, 3.0, 4.0, 6.0].iter().map(|t: &f64| [t / 3f64.sqrt(); 3]).collect();
    let far = far_field_decay(&eop, &a, 2.0 + h, &poles).unwrap();
    let fe = far.exponent.unwrap_or(f64::NAN);
    let pass = (0.8..=1.2).contains(&e) && (fe + 1.0).abs() <= 0.1;
    outcome(pass, format!("cube face exponent {e:.4}; far-field exponent {fe:.4}"))
}

fn norm_equivalences() -> Outcome {
    let phi = GrowthFunction::power(0.5).unwrap();
    let mut cc = Vec::new();
    let mut hc = Vec::new();
    let mut cad = true;
    for coeff in [CoefficientField::identity(), CoefficientField::checkerboard(4.0, 0.25)] {
        let mut per_h = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let d = cube(h);
            let op = assemble(&d, &coeff).unwrap();
            let rep = norm_equivalence_report(&op, &phi, &holder_suite(&d, 0.5), SamplingPlan::Exact).unwrap();
            cad &= rep.cad_surrogate;
            per_h.push(rep.rows);
        }
        cc.push(per_h);
    }
    let mut ball = Vec::new();
    for h in [1.0 / 8.0, 1.0 / 16.0] {
        let d = build_domain(&DomainSpec::ball(vec![0.0; 3], 1.0, h)).unwrap();
        let row: Vec<f64> = holder_suite(&d, 0.5)
            .iter()
            .map(|e| campanato_norm(&d, &e.data, &phi, 1.0).value / holder_seminorm(d.face_centroids(), &e.data, &phi, SamplingPlan::Exact).value)
            .collect();
        ball.push(row);
    }
    // cc[coeff][h][datum]
    let mut cc_range = (f64::INFINITY, 0.0f64);
    let mut hc_range = (f64::INFINITY, 0.0f64);
    let mut drift: f64 = 0.0;
    let mut defined = true;
    for per_h in &cc {
        for rows in per_h {
            for r in rows {
                match (r.cc_ratio, r.hc_ratio) {
                    (Some(a), Some(b)) => {
                        cc_range = (cc_range.0.min(a), cc_range.1.max(a));
                        hc.push(b);
                    }
                    _ => defined = false,
                }
            }
        }
        for (a, b) in per_h[0].iter().zip(&per_h[1]) {
            for (x, y) in [(a.cc_ratio, b.cc_ratio), (a.hc_ratio, b.hc_ratio)] {
                if let (Some(x), Some(y)) = (x, y) {
                    drift = drift.max((y / x - 1.0).abs());
                }
            }
        }
    }
    hc.extend(ball.iter().flatten());
    for v in &hc {
        hc_range = (hc_range.0.min(*v), hc_range.1.max(*v));
    }
    for (x, y) in ball[0].iter().zip(&ball[1]) {
        drift = drift.max((y / x - 1.0).abs());
    }
    let pass = defined
        && cad
        && cc_range.0 >= 1.0 / 50.0
        && cc_range.1 <= 50.0
        && hc_range.0 >= 1.0 / 20.0
        && hc_range.1 <= 20.0
        && drift <= 0.3;
    outcome(
        pass,
        format!(
            "Carleson/Hölder [{:.3}, {:.3}], Campanato/Hölder [{:.3}, {:.3}], max drift {:.1}%",
            cc_range.0,
            cc_range.1,
            hc_range.0,
            hc_range.1,
            100.0 * drift
        ),
    )
}

fn cdc_contrast() -> Outcome {
    let d = cube(1.0 / 16.0);
    let sample = BoundarySample::Stride(97).faces(d.faces.len());
    let sweep = cdc_sweep(&d, &sample, &[0.5, 1.0]).unwrap();
    let mut needle = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let n = build_domain(&DomainSpec::box_minus_needle(h)).unwrap();
        let x = n.face_centroid(n.nearest_face(&[0.0; 3]));
        needle.push(cdc_ratio(&n, &x, 0.5).unwrap().ratio);
    }
    let decreasing = needle.windows(2).all(|w| w[1] < w[0]);
    let pass = sweep.inf_ratio >= 0.1 && decreasing;
    outcome(pass, format!("cube inf ratio {:.4} over {} rows; needle ratios {needle:.4?}", sweep.inf_ratio, sweep.rows.len()))
}

fn whitney() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, spec) in [("cube", DomainSpec::unit_cube(1.0 / 16.0)), ("L-shape", DomainSpec::l_shape(1.0 / 32.0))] {
        let d = build_domain(&spec).unwrap();
        let wd = whitney_decompose(&d);
        let chk = wd.verify(&d);
        pass &= chk.violations == 0 && chk.checked == wd.cubes.len();
        parts.push(format!("{name}: {} cubes, {} violations", chk.checked, chk.violations));
    }
    outcome(pass, parts.join("; "))
}

fn potential_measure() -> Outcome {
    let mut slacks = Vec::new();
    for h in [1.0 / 32.0, 1.0 / 64.0] {
        let d = cube(h);
        let op = assemble(&d, &CoefficientField::identity()).unwrap();
        slacks.push(potential_measure_check(&op, &[0.5, 0.5, 0.0], 0.25, None).unwrap().min_slack);
    }
    let violation = |s: f64| (-s).max(0.0);
    let pass = slacks[0] >= -0.05 && violation(slacks[1]) <= violation(slacks[0]);
    outcome(pass, format!("min slack {:.4} (h=1/32), {:.4} (h=1/64)", slacks[0], slacks[1]))
}

fn main() {
    let ext = exterior();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("growth suite", Box::new(growth_suite)),
        ("capacity oracle", Box::new(capacity_oracle)),
        ("measure mass dichotomy", Box::new(|| mass_dichotomy(&ext))),
        ("duality", Box::new(duality)),
        ("non-uniqueness", Box::new(|| nonuniqueness(&ext))),
        ("well-posedness bounds", Box::new(wellposedness)),
        ("boundary Hölder oracle", Box::new(boundary_holder)),
        ("decay", Box::new(|| decay(&ext))),
        ("norm equivalences", Box::new(norm_equivalences)),
        ("CDC contrast", Box::new(cdc_contrast)),
        ("Whitney", Box::new(whitney)),
        ("potential/measure comparison", Box::new(potential_measure)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<30} {} | {} [{:.1} s]",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
