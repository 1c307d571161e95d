//! Discrete elliptic measure and the solutions it represents.
//!
//! For the assembled system `M u = B f` the value at a pole `X` is
//! `u(X) = e_X^T M^{-1} B f`, so one transposed solve `M^T g = e_X` yields every
//! face weight `B_f g(owner(f))` at once.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fit::power_fit;
use crate::geometry::{dist, GeometryError, GridDomain, Point};
use crate::growth::GrowthFunction;
use crate::operator::{sparse, DiscreteField, DiscreteOperator, OperatorError, SolveStats, SolverOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("negative weight {weight:e} on face {face} (pole {pole:?}); the scheme is not monotone")]
    NegativeWeight { face: usize, weight: f64, pole: Point },
    #[error("anchor {point:?} is not a boundary face centroid")]
    AnchorNotOnBoundary { point: Point },
    #[error("operation needs a truncated exterior domain")]
    NotExteriorDomain,
    #[error("anchors coincide")]
    CoincidentAnchors,
    #[error("scale out of range: {0}")]
    ScaleOutOfRange(String),
    #[error("local domain is empty")]
    EmptyLocalDomain,
    #[error("cone holds {cells} cells, at least 3 needed")]
    EmptyCone { cells: usize },
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// Weights below this are an error; weights in `[-NEGATIVE_TOL, 0)` are clipped.
pub const NEGATIVE_TOL: f64 = 1e-12;

/// Residual target used for rows and identities that are asserted to `1e-8` or better.
pub const TIGHT_TOL: f64 = 1e-12;

fn tight(op: &DiscreteOperator) -> SolverOptions {
    SolverOptions { tol: op.solver.tol.min(TIGHT_TOL), ..op.solver }
}

/// Unknown of the interior cell containing `x`.
pub fn pole_unknown(domain: &GridDomain, x: &Point) -> Result<usize> {
    match domain.lattice.locate(x) {
        Some(i) if domain.interior[i] => Ok(domain.unknown_of[i] as usize),
        _ => Err(GeometryError::NotInterior { point: *x }.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticMeasureRow {
    /// Cell center the row belongs to.
    pub pole: Point,
    pub pole_unknown: usize,
    pub weights: Vec<f64>,
    pub total_mass: f64,
    /// Weights in `[-1e-12, 0)` set to zero.
    pub clipped: usize,
    pub stats: SolveStats,
}

impl EllipticMeasureRow {
    /// `sum f * weight`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Measure of the faces selected by `set`.
    pub fn measure_of(&self, set: impl Fn(usize) -> bool) -> f64 {
        self.weights.iter().enumerate().filter(|(i, _)| set(*i)).map(|(_, w)| w).sum()
    }

    pub fn to_csv(&self, domain: &GridDomain) -> String {
        let mut s = String::from("face_id,x,y,z,weight\n");
        for (i, (c, w)) in domain.face_centroids().iter().zip(&self.weights).enumerate() {
            let _ = writeln!(s, "{i},{},{},{},{w:e}", c[0], c[1], c[2]);
        }
        s
    }
}

/// Elliptic measure with pole at the cell containing `x`.
pub fn elliptic_measure_row(op: &DiscreteOperator, x: &Point) -> Result<EllipticMeasureRow> {
    let u = pole_unknown(op.domain, x)?;
    measure_row_at(op, u)
}

pub fn measure_row_at(op: &DiscreteOperator, pole: usize) -> Result<EllipticMeasureRow> {
    let n = op.n_unknowns();
    let mut e = vec![0.0; n];
    e[pole] = 1.0;
    let mut g = vec![0.0; n];
    let stats = op.solve_transposed_with(&e, &mut g, &tight(op))?;
    let mut weights: Vec<f64> =
        op.face_coupling.iter().zip(&op.face_owner).map(|(b, &o)| b * g[o as usize]).collect();
    let pole_point = op.domain.cell_center(pole);
    let mut clipped = 0;
    for (face, w) in weights.iter_mut().enumerate() {
        if *w < -NEGATIVE_TOL {
            return Err(MeasureError::NegativeWeight { face, weight: *w, pole: pole_point });
        }
        if *w < 0.0 {
            *w = 0.0;
            clipped += 1;
        }
    }
    let total_mass = weights.iter().sum();
    Ok(EllipticMeasureRow { pole: pole_point, pole_unknown: pole, weights, total_mass, clipped, stats })
}

fn anchor_value(domain: &GridDomain, f: &[f64], anchor: Option<&Point>) -> Result<Option<f64>> {
    match anchor {
        None => Ok(None),
        Some(y) => {
            let face = domain.find_face(y).map_err(|_| MeasureError::AnchorNotOnBoundary { point: *y })?;
            Ok(Some(f[face]))
        }
    }
}

/// Value of the represented solution from a precomputed row.
pub fn represent_with_row(row: &EllipticMeasureRow, f: &[f64], anchor: Option<f64>) -> f64 {
    match anchor {
        None => row.integrate(f),
        Some(c) => c + row.weights.iter().zip(f).map(|(w, v)| w * (v - c)).sum::<f64>(),
    }
}

/// `sum f dω^X` at each pole, or `f(y0) + sum (f - f(y0)) dω^X` with an anchor.
pub fn represent_solution(op: &DiscreteOperator, f: &[f64], anchor: Option<&Point>, poles: &[usize]) -> Result<Vec<f64>> {
    check_len(op, f)?;
    let c = anchor_value(op.domain, f, anchor)?;
    poles.iter().map(|&p| Ok(represent_with_row(&measure_row_at(op, p)?, f, c))).collect()
}

/// The represented solution on every cell, with `f` on the faces.
pub fn represent_field(op: &DiscreteOperator, f: &[f64], anchor: Option<&Point>) -> Result<DiscreteField> {
    let all: Vec<usize> = (0..op.n_unknowns()).collect();
    let cells = represent_solution(op, f, anchor, &all)?;
    Ok(DiscreteField { cells, faces: f.to_vec() })
}

fn check_len(op: &DiscreteOperator, f: &[f64]) -> Result<()> {
    if f.len() != op.n_faces() {
        return Err(OperatorError::DataLength { got: f.len(), expected: op.n_faces() }.into());
    }
    Ok(())
}

/// Total mass `ω^X(∂Ω)` at every unknown (one forward solve).
pub fn mass_field(op: &DiscreteOperator) -> Result<Vec<f64>> {
    Ok(op.solve_dirichlet_with(&vec![1.0; op.n_faces()], &tight(op))?.field.cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `G(X)`; zero on faces.
    pub gap: DiscreteField,
    pub max_abs: f64,
    /// `1e-9 (1 + |f(x0) - f(y0)|)`.
    pub bound: f64,
    pub delta_f: f64,
    /// `u(·; x0) - u(·; y0)` on cells.
    pub difference: Vec<f64>,
    /// `ω^X(∂Ω)` on cells.
    pub mass: Vec<f64>,
    /// `max |u(·; x0) - u(·; y0)|`.
    pub separation: f64,
    /// `max (1 - ω^X(∂Ω))`.
    pub max_deficit: f64,
}

impl GapReport {
    pub fn identity_holds(&self) -> bool {
        self.max_abs <= self.bound
    }

    /// `separation >= 0.9 |Δf| max deficit`, and the solutions genuinely differ.
    pub fn solutions_differ(&self) -> bool {
        self.separation > 0.0 && self.separation >= 0.9 * self.delta_f.abs() * self.max_deficit
    }
}

/// Residual of `u(X;x0) - u(X;y0) = (f(x0) - f(y0)) (1 - ω^X(∂Ω))` on an exterior domain,
/// where `u(·;z) = f(z) + sum (f - f(z)) dω`.
pub fn nonuniqueness_gap(op: &DiscreteOperator, f: &[f64], x0: &Point, y0: &Point) -> Result<GapReport> {
    let domain = op.domain;
    if !domain.boundary_bounded || domain.bounded {
        return Err(MeasureError::NotExteriorDomain);
    }
    check_len(op, f)?;
    let fx = anchor_value(domain, f, Some(x0))?.unwrap();
    let fy = anchor_value(domain, f, Some(y0))?.unwrap();
    if dist(x0, y0) == 0.0 {
        return Err(MeasureError::CoincidentAnchors);
    }
    let opts = tight(op);
    let anchored = |c: f64| -> Result<Vec<f64>> {
        let shifted: Vec<f64> = f.iter().map(|v| v - c).collect();
        let s = op.solve_dirichlet_with(&shifted, &opts)?;
        Ok(s.field.cells.into_iter().map(|v| v + c).collect())
    };
    let ux = anchored(fx)?;
    let uy = anchored(fy)?;
    let mass = mass_field(op)?;
    let delta_f = fx - fy;
    let difference: Vec<f64> = ux.iter().zip(&uy).map(|(a, b)| a - b).collect();
    let cells: Vec<f64> = difference.iter().zip(&mass).map(|(d, m)| d - delta_f * (1.0 - m)).collect();
    let max_abs = cells.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let separation = difference.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let max_deficit = mass.iter().fold(0.0_f64, |a, m| a.max(1.0 - m));
    Ok(GapReport {
        gap: DiscreteField { cells, faces: vec![0.0; f.len()] },
        max_abs,
        bound: 1e-9 * (1.0 + delta_f.abs()),
        delta_f,
        difference,
        mass,
        separation,
        max_deficit,
    })
}

/// Nearest face centroid to a boundary point `x`, which must lie within `h` of it.
pub fn snap_to_face(domain: &GridDomain, x: &Point) -> Result<Point> {
    if domain.faces.is_empty() {
        return Err(GeometryError::NotABoundaryPoint { point: *x }.into());
    }
    let c = domain.face_centroid(domain.nearest_face(x));
    if dist(&c, x) > domain.h() {
        return Err(GeometryError::NotABoundaryPoint { point: *x }.into());
    }
    Ok(c)
}

/// Unknowns on the inward normal ray through the face nearest the boundary point `x`,
/// nearest first, within distance `t_max` of `x`.
pub fn normal_ray_poles(domain: &GridDomain, x: &Point, t_max: f64) -> Result<Vec<usize>> {
    let face = domain.find_face(&snap_to_face(domain, x)?)?;
    let fc = domain.faces[face];
    let (axis, side) = (fc.axis as usize, fc.side);
    let lat = &domain.lattice;
    let mut out = Vec::new();
    let mut cell = fc.cell as usize;
    loop {
        let c = lat.center(cell);
        if !domain.interior[cell] || dist(&c, x) >= t_max {
            break;
        }
        out.push(domain.unknown_of[cell] as usize);
        match lat.neighbor(cell, axis, -side) {
            Some(nb) => cell = nb,
            None => break,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub scale: f64,
    pub pole_distance: f64,
    /// `ω^X(∂Ω \ Δ(x, 4r))`.
    pub mass: f64,
    /// Fitted `C (|X-x|/r)^exponent`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub scale: f64,
    pub exponent: f64,
    /// `max mass / (t/r)^exponent`.
    pub constant: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Face centroid the profile is taken at.
    pub base: Point,
    pub rows: Vec<DecayRow>,
    pub fits: Vec<ScaleFit>,
    /// Mean of the per-scale exponents.
    pub exponent: Option<f64>,
    /// Largest per-scale constant.
    pub constant: Option<f64>,
    /// Worst `sum φ(|y-x|) dω^X / φ(δ(X))` over the poles, when `φ` is given.
    pub phi_constant: Option<f64>,
}

impl DecayReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scale,pole_distance,mass,bound\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:e},{:e}", r.scale, r.pole_distance, r.mass, r.bound);
        }
        s
    }
}

/// Decay of `ω^X(∂Ω \ Δ(x,4r))` as the pole approaches `x` along the inward normal.
/// `x` snaps to the nearest face centroid; poles sit at distances `t` with `h <= t < r`.
pub fn decay_profile(op: &DiscreteOperator, x: &Point, scales: &[f64], phi: Option<&GrowthFunction>) -> Result<DecayReport> {
    let domain = op.domain;
    let h = domain.h();
    let x = &snap_to_face(domain, x)?;
    let centroids = domain.face_centroids();
    let opts = tight(op);
    let mut rows = Vec::new();
    let mut phi_constant: Option<f64> = None;
    let phi_solution = match phi {
        Some(p) => {
            let data: Vec<f64> = centroids.iter().map(|c| p.eval(dist(c, x))).collect();
            Some(op.solve_dirichlet_with(&data, &opts)?.field.cells)
        }
        None => None,
    };
    let delta = domain.cell_boundary_distance();
    for &r in scales {
        let far: Vec<f64> = centroids.iter().map(|c| if dist(c, x) >= 4.0 * r { 1.0 } else { 0.0 }).collect();
        if !far.iter().any(|&v| v > 0.0) {
            return Err(MeasureError::ScaleOutOfRange(format!("no boundary outside Δ(x, 4r) for r = {r}")));
        }
        let poles: Vec<usize> = normal_ray_poles(domain, x, r)?
            .into_iter()
            .filter(|&p| dist(&domain.cell_center(p), x) >= h)
            .collect();
        if poles.len() < 2 {
            return Err(MeasureError::ScaleOutOfRange(format!("r = {r} resolves fewer than two poles at h = {h}")));
        }
        let w = op.solve_dirichlet_with(&far, &opts)?.field.cells;
        for &p in &poles {
            let t = dist(&domain.cell_center(p), x);
            rows.push(DecayRow { scale: r, pole_distance: t, mass: w[p], bound: 0.0 });
            if let (Some(u), Some(ph)) = (&phi_solution, phi) {
                let c = u[p] / ph.eval(delta[p]);
                phi_constant = Some(phi_constant.map_or(c, |m| m.max(c)));
            }
        }
    }
    let mut fits = Vec::new();
    for &r in scales {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|row| row.scale == r).map(|row| (row.pole_distance / r, row.mass)).unzip();
        if let Some(f) = power_fit(&xs, &ys) {
            let constant = xs.iter().zip(&ys).map(|(s, m)| m / s.powf(f.slope)).fold(0.0, f64::max);
            for row in rows.iter_mut().filter(|row| row.scale == r) {
                row.bound = constant * (row.pole_distance / r).powf(f.slope);
            }
            fits.push(ScaleFit { scale: r, exponent: f.slope, constant, r2: f.r2 });
        }
    }
    let exponent = (!fits.is_empty()).then(|| fits.iter().map(|f| f.exponent).sum::<f64>() / fits.len() as f64);
    let constant = fits.iter().map(|f| f.constant).reduce(f64::max);
    Ok(DecayReport { base: *x, rows, fits, exponent, constant, phi_constant })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldRow {
    pub pole: Point,
    /// `|X - a|`.
    pub distance: f64,
    /// Distance from the centroid of `∂Ω`.
    pub center_distance: f64,
    /// `ω^X(∂Ω ∩ B(a, r))`.
    pub mass: f64,
    /// Pole lies outside `B(a, 2r)`.
    pub far: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldReport {
    pub rows: Vec<FarFieldRow>,
    /// Exponent of the mass against the distance from the boundary centroid.
    pub exponent: Option<f64>,
    pub constant: Option<f64>,
    pub r2: Option<f64>,
    /// Exponent and worst constant against `|X - a| / r`, expected `1 - n`.
    pub lemma_exponent: Option<f64>,
    pub lemma_constant: Option<f64>,
}

/// Far-field decay of `ω^X(∂Ω ∩ B(a, r))` on an exterior domain.
pub fn far_field_decay(op: &DiscreteOperator, a: &Point, r: f64, poles: &[Point]) -> Result<FarFieldReport> {
    let domain = op.domain;
    if !domain.is_exterior() {
        return Err(MeasureError::NotExteriorDomain);
    }
    if !(r > 0.0) {
        return Err(MeasureError::ScaleOutOfRange(format!("r = {r}")));
    }
    let centroids = domain.face_centroids();
    let data: Vec<f64> = centroids.iter().map(|c| if dist(c, a) < r { 1.0 } else { 0.0 }).collect();
    let w = op.solve_dirichlet_with(&data, &tight(op))?.field.cells;
    let mut center = [0.0; 3];
    for c in centroids {
        for k in 0..3 {
            center[k] += c[k] / centroids.len() as f64;
        }
    }
    let mut rows = Vec::with_capacity(poles.len());
    for p in poles {
        let u = pole_unknown(domain, p)?;
        let x = domain.cell_center(u);
        let d = dist(&x, a);
        rows.push(FarFieldRow { pole: x, distance: d, center_distance: dist(&x, &center), mass: w[u], far: d >= 2.0 * r });
    }
    let ys: Vec<f64> = rows.iter().map(|r| r.mass).collect();
    let cx: Vec<f64> = rows.iter().map(|r| r.center_distance).collect();
    let fit = power_fit(&cx, &ys);
    let exponent = fit.map(|f| f.slope);
    let constant = exponent.map(|e| cx.iter().zip(&ys).map(|(x, m)| m / x.powf(e)).fold(0.0, f64::max));
    let lx: Vec<f64> = rows.iter().map(|row| row.distance / r).collect();
    let lemma_exponent = power_fit(&lx, &ys).map(|f| f.slope);
    let n = domain.dim() as f64 - 1.0;
    let lemma_constant = Some(lx.iter().zip(&ys).map(|(x, m)| m / x.powf(1.0 - n)).fold(0.0, f64::max)).filter(|_| !rows.is_empty());
    Ok(FarFieldReport { rows, exponent, constant, r2: fit.map(|f| f.r2), lemma_exponent, lemma_constant })
}

/// `ω^X_{Ω∩B(x,r)}(Ω̄ ∩ ∂B(x,r))` on the cells whose centers lie in `B(x, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMeasure {
    /// Unknowns of the local domain.
    pub cells: Vec<u32>,
    pub values: Vec<f64>,
    pub stats: SolveStats,
}

impl LocalMeasure {
    pub fn value_at(&self, unknown: usize) -> Option<f64> {
        self.cells.binary_search(&(unknown as u32)).ok().map(|i| self.values[i])
    }
}

/// Solves on `Ω ∩ B(x, r)` with data 1 where the local domain meets the rest of `Ω`
/// and 0 on `∂Ω`.
pub fn local_sphere_measure(op: &DiscreteOperator, x: &Point, r: f64) -> Result<LocalMeasure> {
    let domain = op.domain;
    let keep: Vec<bool> = (0..op.n_unknowns()).map(|u| dist(&domain.cell_center(u), x) < r).collect();
    if !keep.iter().any(|&k| k) {
        return Err(MeasureError::EmptyLocalDomain);
    }
    let (sub, cells, cut) = op.matrix.restrict(&keep);
    let rhs: Vec<f64> = cut.iter().map(|c| -c.iter().map(|(_, v)| v).sum::<f64>()).collect();
    let mut values = vec![0.0; sub.n];
    let stats = sparse::solve(&sub, &rhs, &mut values, op.symmetric, &tight(op))?;
    Ok(LocalMeasure { cells, values, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdRow {
    pub pole: Point,
    pub distance: f64,
    /// `ω^X(∂Ω \ B(x, r))`.
    pub global: f64,
    /// Local sphere measure; `None` outside `B(x, r)`.
    pub local: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdReport {
    pub alpha: f64,
    pub rows: Vec<EmdRow>,
    pub m_global: f64,
    pub m_local: f64,
    /// Fitted exponents over the poles inside `B(x, r)`.
    pub fitted_alpha_global: Option<f64>,
    pub fitted_alpha_local: Option<f64>,
    /// `min (local - global)` over poles inside `B(x, r)`.
    pub consistency: f64,
}

/// GEMD and LEMD constants at `(x, r)` for exponent `alpha` over the given poles.
/// The global set holds the faces whose owning cell lies outside `B(x, r)`.
pub fn emd_constants(op: &DiscreteOperator, x: &Point, r: f64, poles: &[usize], alpha: f64) -> Result<EmdReport> {
    let domain = op.domain;
    if !(r > 0.0 && r < domain.boundary_diameter()) {
        return Err(MeasureError::ScaleOutOfRange(format!("need 0 < r < diam(∂Ω), got {r}")));
    }
    let data: Vec<f64> = op
        .face_owner
        .iter()
        .map(|&o| if dist(&domain.cell_center(o as usize), x) >= r { 1.0 } else { 0.0 })
        .collect();
    let global = op.solve_dirichlet_with(&data, &tight(op))?.field.cells;
    let local = local_sphere_measure(op, x, r)?;
    let mut rows = Vec::with_capacity(poles.len());
    let (mut mg, mut ml, mut consistency) = (0.0_f64, 0.0_f64, f64::INFINITY);
    for &p in poles {
        let c = domain.cell_center(p);
        let t = dist(&c, x);
        let scale = (r / t).powf(alpha);
        let l = local.value_at(p);
        mg = mg.max(global[p] * scale);
        if let Some(v) = l {
            ml = ml.max(v * scale);
            consistency = consistency.min(v - global[p]);
        }
        rows.push(EmdRow { pole: c, distance: t, global: global[p], local: l });
    }
    let inside: Vec<&EmdRow> = rows.iter().filter(|row| row.local.is_some()).collect();
    let xs: Vec<f64> = inside.iter().map(|row| row.distance / r).collect();
    let fg = power_fit(&xs, &inside.iter().map(|row| row.global).collect::<Vec<_>>()).map(|f| f.slope);
    let fl = power_fit(&xs, &inside.iter().map(|row| row.local.unwrap()).collect::<Vec<_>>()).map(|f| f.slope);
    Ok(EmdReport { alpha, rows, m_global: mg, m_local: ml, fitted_alpha_global: fg, fitted_alpha_local: fl, consistency })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NontangentialTrace {
    /// `u` at the cone cell nearest `y`.
    pub value: f64,
    pub nearest_distance: f64,
    /// Oscillation of `u` over the cone cells with `|X - y|` in `[rho, 2 rho)`.
    pub ring_oscillation: f64,
    pub ring: (f64, f64),
    pub cone_cells: usize,
}

/// Trace of `u` at the face centroid `y` through `{X : |X - y| < θ δ(X)}`.
pub fn nontangential_trace(domain: &GridDomain, u: &DiscreteField, y: &Point, theta: f64) -> Result<NontangentialTrace> {
    if !(theta > 1.0) {
        return Err(MeasureError::ScaleOutOfRange(format!("theta = {theta} must exceed 1")));
    }
    domain.find_face(y)?;
    let delta = domain.cell_boundary_distance();
    let mut cone: Vec<(f64, f64)> = (0..domain.n_unknowns())
        .filter_map(|c| {
            let d = dist(&domain.cell_center(c), y);
            (d < theta * delta[c]).then_some((d, u.cells[c]))
        })
        .collect();
    if cone.len() < 3 {
        return Err(MeasureError::EmptyCone { cells: cone.len() });
    }
    cone.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (d0, value) = cone[0];
    let rho = 2f64.powf(d0.log2().floor());
    let ring = (rho, 2.0 * rho);
    let (lo, hi) = cone
        .iter()
        .filter(|c| c.0 >= ring.0 && c.0 < ring.1)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, c| (a.0.min(c.1), a.1.max(c.1)));
    Ok(NontangentialTrace { value, nearest_distance: d0, ring_oscillation: hi - lo, ring, cone_cells: cone.len() })
}
