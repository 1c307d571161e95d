//! Condenser capacity `Cap(K, D)` in three dimensions, the capacity density ratio and
//! the comparison between capacitary potentials and local elliptic measure.
//!
//! A condenser lives on its own lattice. The unknowns are the cells of `D \ K`; a face
//! toward a `K` cell carries the value 1 and a face leaving `D` the value 0. The energy of
//! the discrete minimizer equals the flux it sends out of `K`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryError, GridDomain, Lattice, Point};
use crate::measure::{local_sphere_measure, snap_to_face, MeasureError};
use crate::operator::{assemble, Coefficient, CoefficientField, DiscreteField, DiscreteOperator, OperatorError, SolveStats, SolverOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CapacityError {
    #[error("K is not compactly inside D: {0}")]
    KNotInsideD(String),
    #[error("capacity is implemented for d = 3, got d = {0}")]
    DimUnsupported(usize),
    #[error("scale out of range: {0}")]
    ScaleOutOfRange(String),
    #[error("local domain is empty")]
    EmptyLocalDomain,
    #[error("pole {0:?} is not in the local domain")]
    PoleOutsideBall(Point),
    #[error("bad boundary sample {0:?}; expected \"all_faces\" or \"stride:k\"")]
    BadSample(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub type Result<T> = std::result::Result<T, CapacityError>;

/// Solver settings used for capacity problems.
pub fn capacity_solver() -> SolverOptions {
    SolverOptions { tol: 1e-10, max_iter: None, omega: 1.85 }
}

/// Minimizer and energy of a condenser problem.
#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub value: f64,
    /// Minimizer on the cells of `D \ K`, with its face values.
    pub potential: DiscreteField,
    pub lattice: Lattice,
    k: Vec<bool>,
    unknown_of: Vec<u32>,
    pub stats: Option<SolveStats>,
}

impl CapacityResult {
    /// Potential at a lattice cell: 1 on `K`, 0 outside `D`.
    pub fn value_at_cell(&self, idx: usize) -> f64 {
        if self.k[idx] {
            1.0
        } else {
            match self.unknown_of[idx] {
                u32::MAX => 0.0,
                u => self.potential.cells[u as usize],
            }
        }
    }

    /// Potential at the cell whose center is nearest `p` (0 off the lattice).
    pub fn value_at(&self, p: &Point) -> f64 {
        self.lattice.nearest_cell(p).map_or(0.0, |i| self.value_at_cell(i))
    }
}

/// Energy depends on the symmetric part of `A` only.
fn energy_coefficient(coeff: Option<&CoefficientField>) -> CoefficientField {
    match coeff {
        None => CoefficientField::identity(),
        Some(c) => match c.family {
            Coefficient::Rotation { .. } => CoefficientField { family: Coefficient::Identity, lambda: c.lambda },
            _ => c.clone(),
        },
    }
}

/// Capacity of the cell set `k` relative to `d` on `lattice`.
pub fn condenser_capacity(lattice: &Lattice, k: &[bool], d: &[bool], coeff: Option<&CoefficientField>) -> Result<CapacityResult> {
    condenser_capacity_with(lattice, k, d, coeff, &capacity_solver())
}

pub fn condenser_capacity_with(
    lattice: &Lattice,
    k: &[bool],
    d: &[bool],
    coeff: Option<&CoefficientField>,
    solver: &SolverOptions,
) -> Result<CapacityResult> {
    if lattice.dim != 3 {
        return Err(CapacityError::DimUnsupported(lattice.dim));
    }
    assert!(k.len() == lattice.len() && d.len() == lattice.len(), "masks must cover the lattice");
    for (i, &inside) in k.iter().enumerate() {
        if !inside {
            continue;
        }
        let touches_outside = (0..3).any(|axis| {
            [-1i8, 1].iter().any(|&side| lattice.neighbor(i, axis, side).map_or(true, |nb| !d[nb]))
        });
        if !d[i] || touches_outside {
            return Err(CapacityError::KNotInsideD(format!("cell {:?}", lattice.center(i))));
        }
    }
    let mask: Vec<bool> = d.iter().zip(k).map(|(&a, &b)| a && !b).collect();
    if !k.iter().any(|&b| b) {
        let n = mask.iter().filter(|&&m| m).count();
        let mut unknown_of = vec![u32::MAX; lattice.len()];
        let mut next = 0;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                unknown_of[i] = next;
                next += 1;
            }
        }
        return Ok(CapacityResult {
            value: 0.0,
            potential: DiscreteField { cells: vec![0.0; n], faces: Vec::new() },
            lattice: lattice.clone(),
            k: k.to_vec(),
            unknown_of,
            stats: None,
        });
    }
    let domain = GridDomain::from_mask(lattice.clone(), mask, None, "condenser")?;
    let op = assemble(&domain, &energy_coefficient(coeff))?.with_solver(*solver);
    let data: Vec<f64> = domain
        .faces
        .iter()
        .map(|f| match lattice.neighbor(f.cell as usize, f.axis as usize, f.side) {
            Some(nb) if k[nb] => 1.0,
            _ => 0.0,
        })
        .collect();
    let sol = op.solve_dirichlet(&data)?;
    let h3 = lattice.h.powi(3);
    let value = data
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 1.0)
        .map(|(i, _)| h3 * op.face_coupling[i] * (1.0 - sol.field.cells[op.face_owner[i] as usize]))
        .sum();
    Ok(CapacityResult {
        value,
        potential: sol.field,
        lattice: lattice.clone(),
        k: k.to_vec(),
        unknown_of: domain.unknown_of.clone(),
        stats: Some(sol.stats),
    })
}

/// Lattice of spacing `h` covering `B(x, 2r)` plus one cell, with vertices on `anchor + h Z^3`.
pub fn condenser_lattice(x: &Point, r: f64, h: f64, anchor: &Point) -> Lattice {
    let mut origin = [0.0; 3];
    let mut dims = [1usize; 3];
    for k in 0..3 {
        let lo = ((x[k] - 2.0 * r - anchor[k]) / h).floor() - 1.0;
        let hi = ((x[k] + 2.0 * r - anchor[k]) / h).ceil() + 1.0;
        origin[k] = anchor[k] + lo * h;
        dims[k] = (hi - lo) as usize;
    }
    Lattice::new(3, dims, h, origin)
}

/// Masks of `B̄(x, r)` and `B(x, 2r)` by cell-center test. Offsets are measured in
/// lattice units, snapped to the half lattice when `x` lies on it, so that the masks
/// depend only on the position of `x` relative to the cells.
fn ball_masks(lat: &Lattice, x: &Point, r: f64) -> (Vec<bool>, Vec<bool>) {
    let h = lat.h;
    let mut s = [0.0; 3];
    for k in 0..3 {
        let t = (x[k] - lat.origin[k]) / h;
        let t2 = (2.0 * t).round();
        s[k] = if (2.0 * t - t2).abs() < 1e-9 { 0.5 * t2 } else { t };
    }
    let (r1, r2) = ((r / h).powi(2), (2.0 * r / h).powi(2));
    (0..lat.len())
        .map(|i| {
            let c = lat.coords(i);
            let d2: f64 = (0..3).map(|k| (c[k] as f64 + 0.5 - s[k]).powi(2)).sum();
            (d2 <= r1, d2 < r2)
        })
        .unzip()
}

fn cache() -> &'static Mutex<HashMap<[u64; 5], f64>> {
    static CACHE: OnceLock<Mutex<HashMap<[u64; 5], f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `Cap(B̄(x,r), B(x,2r))` at grid spacing `h`, on a lattice placed relative to `x`.
pub fn reference_ball_capacity(x: &Point, r: f64, h: f64) -> Result<f64> {
    if !(r > 0.0 && h > 0.0 && r >= 2.0 * h) {
        return Err(CapacityError::ScaleOutOfRange(format!("r = {r} at h = {h}")));
    }
    let anchor = [x[0] - 0.5 * h, x[1] - 0.5 * h, x[2] - 0.5 * h];
    aligned_ball_capacity(x, r, h, &anchor)
}

/// Cached by `r`, `h` and the offset of `x` within its lattice cell.
fn aligned_ball_capacity(x: &Point, r: f64, h: f64, anchor: &Point) -> Result<f64> {
    let mut key = [r.to_bits(), h.to_bits(), 0, 0, 0];
    for j in 0..3 {
        let off = ((x[j] - anchor[j]) / h).rem_euclid(1.0);
        key[2 + j] = (off * 1e6).round() as u64;
    }
    if let Some(&v) = cache().lock().unwrap().get(&key) {
        return Ok(v);
    }
    let v = ball_capacity_on(x, r, h, anchor)?;
    cache().lock().unwrap().insert(key, v);
    Ok(v)
}

fn ball_capacity_on(x: &Point, r: f64, h: f64, anchor: &Point) -> Result<f64> {
    let lat = condenser_lattice(x, r, h, anchor);
    let (k, d) = ball_masks(&lat, x, r);
    Ok(condenser_capacity(&lat, &k, &d, None)?.value)
}

/// Whether the point lies in `Ω`; outside the lattice only truncated domains continue.
fn in_domain(domain: &GridDomain, p: &Point) -> bool {
    match domain.lattice.locate(p) {
        Some(i) => domain.interior[i],
        None => domain.truncation.is_some(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdcRow {
    pub x_id: usize,
    pub x: Point,
    pub r: f64,
    pub cap_num: f64,
    pub cap_den: f64,
    pub ratio: f64,
}

fn check_scale(domain: &GridDomain, r: f64) -> Result<()> {
    let h = domain.h();
    if domain.dim() != 3 {
        return Err(CapacityError::DimUnsupported(domain.dim()));
    }
    if !(r >= 8.0 * h * (1.0 - 1e-12) && r < domain.boundary_diameter()) {
        return Err(CapacityError::ScaleOutOfRange(format!("need 8h <= r < diam(∂Ω), got r = {r}, h = {h}")));
    }
    Ok(())
}

/// `Cap(B̄(x,r) \ Ω, B(x,2r)) / Cap(B̄(x,r), B(x,2r))` on a lattice sharing the domain's cell centers.
pub fn cdc_ratio(domain: &GridDomain, x: &Point, r: f64) -> Result<CdcRow> {
    check_scale(domain, r)?;
    let x = snap_to_face(domain, x)?;
    let x_id = domain.find_face(&x)?;
    cdc_row(domain, x_id, r)
}

fn cdc_row(domain: &GridDomain, x_id: usize, r: f64) -> Result<CdcRow> {
    let h = domain.h();
    let x = domain.face_centroid(x_id);
    let anchor = domain.lattice.origin;
    let lat = condenser_lattice(&x, r, h, &anchor);
    let (ball, d) = ball_masks(&lat, &x, r);
    let k: Vec<bool> = (0..lat.len()).map(|i| ball[i] && !in_domain(domain, &lat.center(i))).collect();
    let cap_num = condenser_capacity(&lat, &k, &d, None)?.value;
    let cap_den = aligned_ball_capacity(&x, r, h, &anchor)?;
    Ok(CdcRow { x_id, x, r, cap_num, cap_den, ratio: cap_num / cap_den })
}

/// Which boundary faces a sweep visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySample {
    AllFaces,
    Stride(usize),
}

impl BoundarySample {
    pub fn faces(&self, n: usize) -> Vec<usize> {
        match *self {
            BoundarySample::AllFaces => (0..n).collect(),
            BoundarySample::Stride(k) => (0..n).step_by(k.max(1)).collect(),
        }
    }
}

impl FromStr for BoundarySample {
    type Err = CapacityError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all_faces" {
            return Ok(BoundarySample::AllFaces);
        }
        s.strip_prefix("stride:")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k > 0)
            .map(BoundarySample::Stride)
            .ok_or_else(|| CapacityError::BadSample(s.into()))
    }
}

impl std::fmt::Display for BoundarySample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundarySample::AllFaces => write!(f, "all_faces"),
            BoundarySample::Stride(k) => write!(f, "stride:{k}"),
        }
    }
}

impl Serialize for BoundarySample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BoundarySample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdcReport {
    pub h: f64,
    pub rows: Vec<CdcRow>,
    pub inf_ratio: f64,
    /// Row attaining `inf_ratio` (first on ties).
    pub inf_row: usize,
}

impl CdcReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x_id,r,cap_num,cap_den,ratio\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.12e},{:.12e},{:.12e}", r.x_id, r.r, r.cap_num, r.cap_den, r.ratio);
        }
        s
    }
}

/// CDC ratios over the sampled faces and scales, in face-major order.
pub fn cdc_sweep(domain: &GridDomain, sample: &[usize], scales: &[f64]) -> Result<CdcReport> {
    for &r in scales {
        check_scale(domain, r)?;
    }
    let mut rows = Vec::with_capacity(sample.len() * scales.len());
    for &f in sample {
        for &r in scales {
            rows.push(cdc_row(domain, f, r)?);
        }
    }
    let (inf_row, inf_ratio) =
        rows.iter().enumerate().fold((0, f64::INFINITY), |best, (i, r)| if r.ratio < best.1 { (i, r.ratio) } else { best });
    Ok(CdcReport { h: domain.h(), rows, inf_ratio, inf_row })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpRow {
    pub pole: Point,
    /// Capacitary potential of `B̄(a,r) \ Ω` in `B(a,2r)`.
    pub potential: f64,
    /// Local measure `ω_{Ω∩B(a,r)}^X(∂B(a,r) ∩ Ω̄)`.
    pub local_measure: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpReport {
    pub rows: Vec<CpRow>,
    /// `min (v - (1 - w))` over the poles.
    pub min_slack: f64,
    pub witness: usize,
    /// `B̄(a,r) \ Ω` has no cells, so `v` vanishes.
    pub degenerate: bool,
}

/// Checks `v(X) >= 1 - w(X)` on the given poles (unknowns of `op`), all inside `B(a, r)`.
/// `None` uses every cell of `Ω ∩ B(a, r)`.
pub fn potential_measure_check(op: &DiscreteOperator, a: &Point, r: f64, poles: Option<&[usize]>) -> Result<CpReport> {
    let domain = op.domain;
    if domain.dim() != 3 {
        return Err(CapacityError::DimUnsupported(domain.dim()));
    }
    let local = match local_sphere_measure(op, a, r) {
        Err(MeasureError::EmptyLocalDomain) => return Err(CapacityError::EmptyLocalDomain),
        other => other?,
    };
    let h = domain.h();
    let lat = condenser_lattice(a, r, h, &domain.lattice.origin);
    let (ball, d) = ball_masks(&lat, a, r);
    let k: Vec<bool> = (0..lat.len()).map(|i| ball[i] && !in_domain(domain, &lat.center(i))).collect();
    let degenerate = !k.iter().any(|&b| b);
    let cap = condenser_capacity(&lat, &k, &d, None)?;
    let all: Vec<usize> = local.cells.iter().map(|&c| c as usize).collect();
    let poles = poles.unwrap_or(&all);
    let mut rows = Vec::with_capacity(poles.len());
    for &p in poles {
        let x = domain.cell_center(p);
        let w = local.value_at(p).ok_or(CapacityError::PoleOutsideBall(x))?;
        let v = cap.value_at(&x);
        rows.push(CpRow { pole: x, potential: v, local_measure: w, slack: v - (1.0 - w) });
    }
    let (witness, min_slack) =
        rows.iter().enumerate().fold((0, f64::INFINITY), |best, (i, r)| if r.slack < best.1 { (i, r.slack) } else { best });
    Ok(CpReport { rows, min_slack, witness, degenerate })
}
