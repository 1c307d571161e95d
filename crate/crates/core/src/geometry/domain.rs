use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::lattice::{box_box_distance, dist, dist2, point_box_nearest, Face, Lattice, Point};
use super::GeometryError;

type Result<T> = std::result::Result<T, GeometryError>;

/// Domain description as read from configuration files. `params` may be omitted for
/// the shape's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SpecRepr")]
pub struct DomainSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "snake_case")]
pub enum Shape {
    Box(BoxParams),
    Ball(BallParams),
    LShape(LShapeParams),
    BoxMinusBall(BoxMinusBallParams),
    ExteriorOfBall(ExteriorParams),
    BoxMinusNeedle(NeedleParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxParams {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for BoxParams {
    fn default() -> Self {
        BoxParams { lower: vec![0.0; 3], upper: vec![1.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BallParams {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Default for BallParams {
    fn default() -> Self {
        BallParams { center: vec![0.0; 3], radius: 1.0 }
    }
}

/// `(-s, s)^2` with the quadrant `[0, s) x (-s, 0]` removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LShapeParams {
    pub half_width: f64,
}

impl Default for LShapeParams {
    fn default() -> Self {
        LShapeParams { half_width: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxMinusBallParams {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Default for BoxMinusBallParams {
    fn default() -> Self {
        BoxMinusBallParams { lower: vec![-1.0; 3], upper: vec![1.0; 3], center: vec![0.0; 3], radius: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExteriorParams {
    pub center: Vec<f64>,
    pub radius: f64,
    pub r_out: f64,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeKind {
    Box,
    Ball,
    LShape,
    BoxMinusBall,
    ExteriorOfBall,
    BoxMinusNeedle,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecRepr {
    Full {
        #[serde(flatten)]
        shape: Shape,
        h: f64,
    },
    Bare(BareSpec),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BareSpec {
    shape: ShapeKind,
    h: f64,
}

impl From<SpecRepr> for DomainSpec {
    fn from(r: SpecRepr) -> Self {
        match r {
            SpecRepr::Full { shape, h } => DomainSpec { shape, h },
            SpecRepr::Bare(BareSpec { shape, h }) => {
                let shape = match shape {
                    ShapeKind::Box => Shape::Box(BoxParams::default()),
                    ShapeKind::Ball => Shape::Ball(BallParams::default()),
                    ShapeKind::LShape => Shape::LShape(LShapeParams::default()),
                    ShapeKind::BoxMinusBall => Shape::BoxMinusBall(BoxMinusBallParams::default()),
                    ShapeKind::ExteriorOfBall => Shape::ExteriorOfBall(ExteriorParams::default()),
                    ShapeKind::BoxMinusNeedle => Shape::BoxMinusNeedle(NeedleParams::default()),
                };
                DomainSpec { shape, h }
            }
        }
    }
}

impl Default for ExteriorParams {
    fn default() -> Self {
        ExteriorParams { center: vec![0.0; 3], radius: 1.0, r_out: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeedleParams {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Cells whose centers are within this distance of the spine are removed; defaults to `0.75 h`.
    pub thickness: Option<f64>,
}

impl Default for NeedleParams {
    fn default() -> Self {
        NeedleParams {
            lower: vec![-1.0; 3],
            upper: vec![1.0; 3],
            start: vec![0.0, 0.0, -0.5],
            end: vec![0.0, 0.0, 0.5],
            thickness: None,
        }
    }
}

impl DomainSpec {
    pub fn unit_cube(h: f64) -> Self {
        DomainSpec { shape: Shape::Box(BoxParams::default()), h }
    }

    pub fn unit_square(h: f64) -> Self {
        DomainSpec { shape: Shape::Box(BoxParams { lower: vec![0.0; 2], upper: vec![1.0; 2] }), h }
    }

    pub fn ball(center: Vec<f64>, radius: f64, h: f64) -> Self {
        DomainSpec { shape: Shape::Ball(BallParams { center, radius }), h }
    }

    pub fn l_shape(h: f64) -> Self {
        DomainSpec { shape: Shape::LShape(LShapeParams::default()), h }
    }

    pub fn exterior_of_ball(radius: f64, r_out: f64, h: f64) -> Self {
        DomainSpec { shape: Shape::ExteriorOfBall(ExteriorParams { center: vec![0.0; 3], radius, r_out }), h }
    }

    pub fn box_minus_needle(h: f64) -> Self {
        DomainSpec { shape: Shape::BoxMinusNeedle(NeedleParams::default()), h }
    }
}

/// Outer truncation of an exterior domain: the lattice box around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub center: Point,
    pub r_out: f64,
}

/// Cell-union open set on a lattice with its boundary faces.
#[derive(Debug)]
pub struct GridDomain {
    pub lattice: Lattice,
    pub interior: Vec<bool>,
    /// Unknown number of each lattice cell, `u32::MAX` outside.
    pub unknown_of: Vec<u32>,
    /// Lattice index of each unknown.
    pub cells: Vec<u32>,
    /// Faces of the boundary proper.
    pub faces: Vec<Face>,
    /// Faces on the outer truncation box, kept apart from the boundary.
    pub shell: Vec<Face>,
    pub truncation: Option<Truncation>,
    pub bounded: bool,
    pub boundary_bounded: bool,
    pub label: String,
    centroids: Vec<Point>,
    face_lookup: HashMap<[i64; 3], u32>,
    index: FaceIndex,
    diam: OnceLock<f64>,
    cell_delta: OnceLock<Vec<f64>>,
}

fn axis_count(lo: f64, hi: f64, h: f64) -> Result<usize> {
    let n = (hi - lo) / h;
    let r = n.round();
    if !(h > 0.0) || !n.is_finite() || r < 1.0 || (n - r).abs() > 1e-9 * n.max(1.0) {
        return Err(GeometryError::SpecParse(format!(
            "spacing {h} does not divide the extent [{lo}, {hi}]"
        )));
    }
    Ok(r as usize)
}

fn lattice_over(lower: &[f64], upper: &[f64], h: f64) -> Result<Lattice> {
    let dim = lower.len();
    if !(dim == 2 || dim == 3) || upper.len() != dim {
        return Err(GeometryError::SpecParse(format!("bounds must have 2 or 3 matching coordinates, got {dim}")));
    }
    let mut dims = [1usize; 3];
    let mut origin = [0.0; 3];
    for k in 0..dim {
        dims[k] = axis_count(lower[k], upper[k], h)?;
        origin[k] = lower[k];
    }
    Ok(Lattice::new(dim, dims, h, origin))
}

fn to_point(v: &[f64], dim: usize) -> Result<Point> {
    if v.len() != dim {
        return Err(GeometryError::SpecParse(format!("expected {dim} coordinates, got {}", v.len())));
    }
    let mut p = [0.0; 3];
    p[..dim].copy_from_slice(v);
    Ok(p)
}

fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let mut ab = [0.0; 3];
    let mut ap = [0.0; 3];
    for k in 0..3 {
        ab[k] = b[k] - a[k];
        ap[k] = p[k] - a[k];
    }
    let l2 = ab.iter().map(|x| x * x).sum::<f64>();
    let t = if l2 > 0.0 { (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / l2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    dist(p, &q)
}

/// Builds the grid domain described by `spec`.
pub fn build_domain(spec: &DomainSpec) -> Result<GridDomain> {
    let h = spec.h;
    if !(h.is_finite() && h > 0.0) {
        return Err(GeometryError::SpecParse(format!("grid spacing {h} must be positive")));
    }
    match &spec.shape {
        Shape::Box(p) => {
            let lat = lattice_over(&p.lower, &p.upper, h)?;
            let mask = vec![true; lat.len()];
            GridDomain::from_mask(lat, mask, None, "box")
        }
        Shape::Ball(p) => {
            let dim = p.center.len();
            let c = to_point(&p.center, dim)?;
            let lower: Vec<f64> = p.center.iter().map(|x| x - p.radius).collect();
            let upper: Vec<f64> = p.center.iter().map(|x| x + p.radius).collect();
            let lat = lattice_over(&lower, &upper, h)?;
            let mask = (0..lat.len()).map(|i| dist(&lat.center(i), &c) < p.radius).collect();
            GridDomain::from_mask(lat, mask, None, "ball")
        }
        Shape::LShape(p) => {
            let s = p.half_width;
            let lat = lattice_over(&[-s, -s], &[s, s], h)?;
            let mask = (0..lat.len())
                .map(|i| {
                    let x = lat.center(i);
                    !(x[0] > 0.0 && x[1] < 0.0)
                })
                .collect();
            GridDomain::from_mask(lat, mask, None, "l_shape")
        }
        Shape::BoxMinusBall(p) => {
            let lat = lattice_over(&p.lower, &p.upper, h)?;
            let c = to_point(&p.center, lat.dim)?;
            let mask = (0..lat.len()).map(|i| dist(&lat.center(i), &c) >= p.radius).collect();
            GridDomain::from_mask(lat, mask, None, "box_minus_ball")
        }
        Shape::ExteriorOfBall(p) => {
            let dim = p.center.len();
            let c = to_point(&p.center, dim)?;
            if !(p.r_out > p.radius && p.radius > 0.0) {
                return Err(GeometryError::SpecParse("need 0 < radius < r_out".into()));
            }
            let lower: Vec<f64> = p.center.iter().map(|x| x - p.r_out).collect();
            let upper: Vec<f64> = p.center.iter().map(|x| x + p.r_out).collect();
            let lat = lattice_over(&lower, &upper, h)?;
            let mask = (0..lat.len()).map(|i| dist(&lat.center(i), &c) > p.radius).collect();
            GridDomain::from_mask(lat, mask, Some(Truncation { center: c, r_out: p.r_out }), "exterior_of_ball")
        }
        Shape::BoxMinusNeedle(p) => {
            let lat = lattice_over(&p.lower, &p.upper, h)?;
            if lat.dim != 3 {
                return Err(GeometryError::SpecParse("box_minus_needle is three-dimensional".into()));
            }
            let a = to_point(&p.start, 3)?;
            let b = to_point(&p.end, 3)?;
            let thick = p.thickness.unwrap_or(0.75 * h);
            let mask = (0..lat.len()).map(|i| segment_distance(&lat.center(i), &a, &b) > thick).collect();
            GridDomain::from_mask(lat, mask, None, "box_minus_needle")
        }
    }
}

impl GridDomain {
    /// Builds faces and lookups for a cell mask. With a truncation, faces on
    /// the lattice boundary form the shell instead of the boundary.
    pub fn from_mask(lattice: Lattice, interior: Vec<bool>, truncation: Option<Truncation>, label: &str) -> Result<Self> {
        assert_eq!(interior.len(), lattice.len());
        let mut unknown_of = vec![u32::MAX; lattice.len()];
        let mut cells = Vec::new();
        for (i, &inside) in interior.iter().enumerate() {
            if inside {
                unknown_of[i] = cells.len() as u32;
                cells.push(i as u32);
            }
        }
        if cells.is_empty() {
            return Err(GeometryError::EmptyInterior);
        }
        let mut faces = Vec::new();
        let mut shell = Vec::new();
        for &c in &cells {
            for axis in 0..lattice.dim {
                for side in [-1i8, 1] {
                    match lattice.neighbor(c as usize, axis, side) {
                        Some(n) if interior[n] => {}
                        Some(_) => faces.push(Face { cell: c, axis: axis as u8, side }),
                        None => {
                            let f = Face { cell: c, axis: axis as u8, side };
                            if truncation.is_some() {
                                shell.push(f);
                            } else {
                                faces.push(f);
                            }
                        }
                    }
                }
            }
        }
        if faces.is_empty() {
            return Err(GeometryError::SpecParse("domain has no boundary faces".into()));
        }
        let centroids: Vec<Point> = faces.iter().map(|f| f.centroid(&lattice)).collect();
        let mut face_lookup = HashMap::with_capacity(faces.len());
        for (i, c) in centroids.iter().enumerate() {
            face_lookup.insert(lattice.doubled(c).expect("centroid on half lattice"), i as u32);
        }
        let index = FaceIndex::new(&lattice, &faces);
        Ok(GridDomain {
            lattice,
            interior,
            unknown_of,
            cells,
            faces,
            shell,
            bounded: truncation.is_none(),
            boundary_bounded: true,
            truncation,
            label: label.to_string(),
            centroids,
            face_lookup,
            index,
            diam: OnceLock::new(),
            cell_delta: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim
    }

    pub fn h(&self) -> f64 {
        self.lattice.h
    }

    pub fn n_unknowns(&self) -> usize {
        self.cells.len()
    }

    pub fn is_exterior(&self) -> bool {
        self.truncation.is_some()
    }

    /// Center of the cell behind unknown `u`.
    pub fn cell_center(&self, u: usize) -> Point {
        self.lattice.center(self.cells[u] as usize)
    }

    pub fn face_centroid(&self, f: usize) -> Point {
        self.centroids[f]
    }

    pub fn face_centroids(&self) -> &[Point] {
        &self.centroids
    }

    pub fn face_area(&self) -> f64 {
        self.lattice.h.powi(self.dim() as i32 - 1)
    }

    pub fn cell_volume(&self) -> f64 {
        self.lattice.h.powi(self.dim() as i32)
    }

    pub fn surface_area(&self) -> f64 {
        self.faces.len() as f64 * self.face_area()
    }

    pub fn face_index(&self) -> &FaceIndex {
        &self.index
    }

    /// Face whose centroid is `x`.
    pub fn find_face(&self, x: &Point) -> Result<usize> {
        self.lattice
            .doubled(x)
            .and_then(|d| self.face_lookup.get(&d).copied())
            .map(|f| f as usize)
            .ok_or(GeometryError::NotABoundaryPoint { point: *x })
    }

    /// Face centroid nearest to `x`.
    pub fn nearest_face(&self, x: &Point) -> usize {
        let mut best = (f64::INFINITY, 0usize);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = dist2(c, x);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Unknown whose cell center is `p` (within rounding).
    pub fn find_cell(&self, p: &Point) -> Result<usize> {
        let idx = self.lattice.locate(p).ok_or(GeometryError::NotInterior { point: *p })?;
        let c = self.lattice.center(idx);
        if dist(&c, p) > 1e-6 * self.h() || !self.interior[idx] {
            return Err(GeometryError::NotInterior { point: *p });
        }
        Ok(self.unknown_of[idx] as usize)
    }

    /// Interior unknown whose cell center is nearest to `p`.
    pub fn nearest_unknown(&self, p: &Point) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (u, &c) in self.cells.iter().enumerate() {
            let d = dist2(&self.lattice.center(c as usize), p);
            if best.map_or(true, |b| d < b.0) {
                best = Some((d, u));
            }
        }
        best.map(|b| b.1)
    }

    /// Whether `p` lies in the closed cell of an interior lattice cell.
    pub fn contains(&self, p: &Point) -> bool {
        self.lattice.locate(p).is_some_and(|i| self.interior[i])
    }

    /// Diameter of the set of boundary face centroids.
    pub fn boundary_diameter(&self) -> f64 {
        *self.diam.get_or_init(|| {
            let mut best = 0.0_f64;
            for (i, a) in self.centroids.iter().enumerate() {
                for b in &self.centroids[i + 1..] {
                    best = best.max(dist2(a, b));
                }
            }
            best.sqrt()
        })
    }

    /// Exact distance from `p` to the polyhedral boundary and the nearest boundary point.
    pub fn boundary_distance(&self, p: &Point) -> (f64, Point) {
        self.index.nearest(&self.lattice, &self.faces, p)
    }

    /// Exact boundary distance of every unknown's cell center, computed once.
    pub fn cell_boundary_distance(&self) -> &[f64] {
        self.cell_delta.get_or_init(|| {
            (0..self.n_unknowns()).map(|u| self.boundary_distance(&self.cell_center(u)).0).collect()
        })
    }

    /// Distance from `p` to the truncation shell (infinite without one).
    pub fn shell_distance(&self, p: &Point) -> f64 {
        match self.truncation {
            None => f64::INFINITY,
            Some(_) => {
                let lo = self.lattice.origin;
                let hi = self.lattice.upper();
                (0..self.dim()).map(|k| (p[k] - lo[k]).min(hi[k] - p[k])).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Bucket grid over boundary faces for range and nearest queries.
#[derive(Debug)]
pub struct FaceIndex {
    bucket_cells: usize,
    nb: [usize; 3],
    lat: Lattice,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl FaceIndex {
    fn new(lat: &Lattice, faces: &[Face]) -> Self {
        let bucket_cells = 4;
        let mut nb = [1usize; 3];
        for k in 0..lat.dim {
            nb[k] = lat.dims[k].div_ceil(bucket_cells);
        }
        let nbt = nb[0] * nb[1] * nb[2];
        let bucket_of = |f: &Face| {
            let c = lat.coords(f.cell as usize);
            let b = [c[0] / bucket_cells, c[1] / bucket_cells, c[2] / bucket_cells];
            b[0] + nb[0] * (b[1] + nb[1] * b[2])
        };
        let mut counts = vec![0u32; nbt + 1];
        for f in faces {
            counts[bucket_of(f) + 1] += 1;
        }
        for i in 0..nbt {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; faces.len()];
        for (i, f) in faces.iter().enumerate() {
            let b = bucket_of(f);
            items[fill[b] as usize] = i as u32;
            fill[b] += 1;
        }
        FaceIndex { bucket_cells, nb, lat: lat.clone(), starts: counts, items }
    }

    fn bucket_box(&self, b: [usize; 3]) -> (Point, Point) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        let w = self.bucket_cells as f64 * self.lat.h;
        for k in 0..self.lat.dim {
            lo[k] = self.lat.origin[k] + b[k] as f64 * w;
            hi[k] = lo[k] + w;
        }
        (lo, hi)
    }

    fn bucket_range(&self, lo: &Point, hi: &Point) -> ([usize; 3], [usize; 3]) {
        let w = self.bucket_cells as f64 * self.lat.h;
        let mut a = [0usize; 3];
        let mut b = [0usize; 3];
        for k in 0..self.lat.dim {
            let x0 = ((lo[k] - self.lat.origin[k]) / w).floor() - 1.0;
            let x1 = ((hi[k] - self.lat.origin[k]) / w).floor() + 1.0;
            a[k] = x0.clamp(0.0, (self.nb[k] - 1) as f64) as usize;
            b[k] = x1.clamp(0.0, (self.nb[k] - 1) as f64) as usize;
        }
        (a, b)
    }

    /// Visits faces whose bucket may intersect the box `[lo - r, hi + r]`; the visitor
    /// returns `false` to stop early.
    pub fn visit_near_box(&self, lo: &Point, hi: &Point, r: f64, mut visit: impl FnMut(usize) -> bool) {
        let mut elo = *lo;
        let mut ehi = *hi;
        for k in 0..self.lat.dim {
            elo[k] -= r;
            ehi[k] += r;
        }
        let (a, b) = self.bucket_range(&elo, &ehi);
        for z in a[2]..=b[2] {
            for y in a[1]..=b[1] {
                for x in a[0]..=b[0] {
                    let bi = x + self.nb[0] * (y + self.nb[1] * z);
                    let (s, e) = (self.starts[bi] as usize, self.starts[bi + 1] as usize);
                    if s == e {
                        continue;
                    }
                    let (blo, bhi) = self.bucket_box([x, y, z]);
                    if box_box_distance(&blo, &bhi, lo, hi) > r {
                        continue;
                    }
                    for &f in &self.items[s..e] {
                        if !visit(f as usize) {
                            return;
                        }
                    }
                }
            }
        }
    }

    /// Exact distance from `p` to the union of face squares.
    pub fn nearest(&self, lat: &Lattice, faces: &[Face], p: &Point) -> (f64, Point) {
        let mut r = 2.0 * self.bucket_cells as f64 * lat.h;
        loop {
            let mut best = (f64::INFINITY, *p);
            self.visit_near_box(p, p, r, |f| {
                let (lo, hi) = faces[f].bounds(lat);
                let (d, q) = point_box_nearest(p, &lo, &hi);
                if d < best.0 {
                    best = (d, q);
                }
                true
            });
            if best.0 <= r {
                return best;
            }
            let span = (0..lat.dim).map(|k| lat.dims[k] as f64 * lat.h).fold(0.0, f64::max);
            if r > 4.0 * span {
                return best;
            }
            r *= 2.0;
        }
    }

    /// Exact distance from the closed box `[lo, hi]` to the face squares, or `None`
    /// when every face is at distance at least `cap`.
    pub fn box_distance_below(&self, lat: &Lattice, faces: &[Face], lo: &Point, hi: &Point, cap: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        self.visit_near_box(lo, hi, cap, |f| {
            let (flo, fhi) = faces[f].bounds(lat);
            let d = box_box_distance(lo, hi, &flo, &fhi);
            if d < cap && best.map_or(true, |b| d < b) {
                best = Some(d);
            }
            true
        });
        best
    }

    /// Whether some face square lies at distance `< cap` from the box.
    pub fn any_within(&self, lat: &Lattice, faces: &[Face], lo: &Point, hi: &Point, cap: f64) -> bool {
        let mut found = false;
        self.visit_near_box(lo, hi, cap, |f| {
            let (flo, fhi) = faces[f].bounds(lat);
            if box_box_distance(lo, hi, &flo, &fhi) < cap {
                found = true;
                return false;
            }
            true
        });
        found
    }
}

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(q0) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Distance from every interior cell center to the nearest boundary-face centroid,
/// indexed by unknown.
pub fn distance_field(domain: &GridDomain) -> Vec<f64> {
    let lat = &domain.lattice;
    let dim = lat.dim;
    let mut dd = [1usize; 3];
    for k in 0..dim {
        dd[k] = 2 * lat.dims[k] + 1;
    }
    let total = dd[0] * dd[1] * dd[2];
    let mut g = vec![f64::INFINITY; total];
    let idx = |c: [usize; 3]| c[0] + dd[0] * (c[1] + dd[1] * c[2]);
    for c in domain.face_centroids() {
        let d = lat.doubled(c).expect("face centroid on half lattice");
        g[idx([d[0] as usize, d[1] as usize, d[2] as usize])] = 0.0;
    }
    let maxn = dd.iter().copied().max().unwrap();
    let mut line = vec![0.0; maxn];
    let mut out = vec![0.0; maxn];
    let mut v = vec![0usize; maxn];
    let mut z = vec![0.0; maxn + 1];
    for axis in 0..dim {
        let n = dd[axis];
        let stride = match axis {
            0 => 1,
            1 => dd[0],
            _ => dd[0] * dd[1],
        };
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in 0..dd[o2] {
            for a in 0..dd[o1] {
                let mut c = [0usize; 3];
                c[o1] = a;
                c[o2] = b;
                let base = idx(c);
                for i in 0..n {
                    line[i] = g[base + i * stride];
                }
                edt_1d(&line[..n], &mut out[..n], &mut v, &mut z);
                for i in 0..n {
                    g[base + i * stride] = out[i];
                }
            }
        }
    }
    domain
        .cells
        .iter()
        .map(|&cell| {
            let c = lat.coords(cell as usize);
            let mut dc = [0usize; 3];
            for k in 0..dim {
                dc[k] = 2 * c[k] + 1;
            }
            g[idx(dc)].sqrt() * 0.5 * lat.h
        })
        .collect()
}

/// `sigma(Delta(x, r))`: face count with centroid closer than `r` to `x`, times the face area.
pub fn surface_ball_measure(domain: &GridDomain, x: &Point, r: f64) -> Result<f64> {
    domain.find_face(x)?;
    if !(r > 0.0) {
        return Err(GeometryError::ScaleOutOfRange(format!("radius {r} must be positive")));
    }
    let r2 = r * r;
    let count = domain.face_centroids().iter().filter(|c| dist2(c, x) < r2).count();
    Ok(count as f64 * domain.face_area())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdrReport {
    pub c1: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub worst_face: usize,
    pub worst_r: f64,
    pub evaluated: usize,
}

/// Upper and lower Ahlfors-David ratios over the sample faces and admissible scales.
pub fn check_adr(domain: &GridDomain, scales: &[f64], sample: &[usize]) -> AdrReport {
    let h = domain.h();
    let diam = domain.boundary_diameter();
    let n = domain.dim() as i32 - 1;
    let scales: Vec<f64> = scales.iter().copied().filter(|&r| r >= 4.0 * h && r < diam).collect();
    let mut rep = AdrReport {
        c1: 1.0,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        worst_face: 0,
        worst_r: 0.0,
        evaluated: 0,
    };
    let cents = domain.face_centroids();
    let mut d2: Vec<f64> = Vec::with_capacity(cents.len());
    for &f in sample {
        let x = cents[f];
        d2.clear();
        d2.extend(cents.iter().map(|c| dist2(c, &x)));
        d2.sort_by(f64::total_cmp);
        for &r in &scales {
            let count = d2.partition_point(|&d| d < r * r);
            let ratio = count as f64 * domain.face_area() / r.powi(n);
            rep.evaluated += 1;
            rep.min_ratio = rep.min_ratio.min(ratio);
            rep.max_ratio = rep.max_ratio.max(ratio);
            let c = ratio.max(1.0 / ratio);
            if c > rep.c1 {
                rep.c1 = c;
                rep.worst_face = f;
                rep.worst_r = r;
            }
        }
    }
    rep
}

/// Writes the lattice and mask: 32-byte header (dims as three little-endian u32 with
/// `nz = 0` in two dimensions, `h` as f64, origin as three f32), then one byte per cell.
pub fn write_mask(domain: &GridDomain, mut w: impl Write) -> std::io::Result<()> {
    let lat = &domain.lattice;
    let nz = if lat.dim == 2 { 0 } else { lat.dims[2] as u32 };
    w.write_all(&(lat.dims[0] as u32).to_le_bytes())?;
    w.write_all(&(lat.dims[1] as u32).to_le_bytes())?;
    w.write_all(&nz.to_le_bytes())?;
    w.write_all(&lat.h.to_le_bytes())?;
    for k in 0..3 {
        w.write_all(&(lat.origin[k] as f32).to_le_bytes())?;
    }
    let bytes: Vec<u8> = domain.interior.iter().map(|&b| b as u8).collect();
    w.write_all(&bytes)
}

pub fn read_mask(mut r: impl Read) -> std::io::Result<(Lattice, Vec<bool>)> {
    let mut hdr = [0u8; 32];
    r.read_exact(&mut hdr)?;
    let u = |i: usize| u32::from_le_bytes(hdr[i..i + 4].try_into().unwrap()) as usize;
    let (nx, ny, nz) = (u(0), u(4), u(8));
    let h = f64::from_le_bytes(hdr[12..20].try_into().unwrap());
    let mut origin = [0.0; 3];
    for (k, o) in origin.iter_mut().enumerate() {
        *o = f32::from_le_bytes(hdr[20 + 4 * k..24 + 4 * k].try_into().unwrap()) as f64;
    }
    let dim = if nz == 0 { 2 } else { 3 };
    let lat = Lattice::new(dim, [nx, ny, nz.max(1)], h, origin);
    let mut body = vec![0u8; lat.len()];
    r.read_exact(&mut body)?;
    Ok((lat, body.into_iter().map(|b| b != 0).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_distance(domain: &GridDomain, u: usize) -> f64 {
        let p = domain.cell_center(u);
        domain.face_centroids().iter().map(|c| dist(c, &p)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn unit_cube_counts() {
        let d = build_domain(&DomainSpec::unit_cube(1.0 / 16.0)).unwrap();
        assert_eq!(d.n_unknowns(), 16 * 16 * 16);
        assert_eq!(d.faces.len(), 6 * 16 * 16);
        assert!((d.surface_area() - 6.0).abs() < 1e-12);
        assert!(d.shell.is_empty());
        assert!(d.bounded);
    }

    #[test]
    fn exterior_shell_is_separate() {
        let d = build_domain(&DomainSpec::exterior_of_ball(1.0, 2.0, 0.25)).unwrap();
        assert!(d.is_exterior());
        assert!(!d.bounded && d.boundary_bounded);
        for c in d.face_centroids() {
            let r = dist(c, &[0.0; 3]);
            assert!(r < 1.5, "boundary face far from the ball: {r}");
        }
        assert_eq!(d.shell.len(), 6 * 16 * 16);
    }

    #[test]
    fn needle_faces_match_brute_force_scan() {
        let d = build_domain(&DomainSpec::box_minus_needle(0.125)).unwrap();
        let lat = &d.lattice;
        let removed = d.interior.iter().filter(|&&b| !b).count();
        assert_eq!(removed, 4 * 8);
        let mut expected = 0;
        for i in 0..lat.len() {
            if !d.interior[i] {
                continue;
            }
            let c = lat.coords(i);
            for axis in 0..3 {
                for s in [-1i64, 1] {
                    let mut n = [c[0] as i64, c[1] as i64, c[2] as i64];
                    n[axis] += s;
                    match lat.index_signed(n) {
                        Some(j) if d.interior[j] => {}
                        _ => expected += 1,
                    }
                }
            }
        }
        assert_eq!(d.faces.len(), expected);
        assert_eq!(expected, 6 * 16 * 16 + 8 * 8 + 2 * 4);
    }

    #[test]
    fn distance_field_matches_brute_force_on_16_cube() {
        let d = build_domain(&DomainSpec::unit_cube(1.0 / 16.0)).unwrap();
        let df = distance_field(&d);
        for u in 0..d.n_unknowns() {
            assert!((df[u] - brute_distance(&d, u)).abs() < 1e-12);
            assert!(df[u] > 0.0);
        }
        let center = d.find_cell(&[15.0 / 32.0, 15.0 / 32.0, 15.0 / 32.0]).unwrap();
        assert!((df[center] - 0.5).abs() <= d.h());
    }

    #[test]
    fn distance_field_on_shapes() {
        for spec in [
            DomainSpec::l_shape(1.0 / 8.0),
            DomainSpec::box_minus_needle(1.0 / 8.0),
            DomainSpec::exterior_of_ball(1.0, 2.0, 0.25),
            DomainSpec::ball(vec![0.0, 0.0, 0.0], 1.0, 0.125),
        ] {
            let d = build_domain(&spec).unwrap();
            let df = distance_field(&d);
            for u in (0..d.n_unknowns()).step_by(7) {
                assert!((df[u] - brute_distance(&d, u)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_adjacent_distance() {
        let d = build_domain(&DomainSpec::unit_cube(1.0 / 8.0)).unwrap();
        let df = distance_field(&d);
        let u = d.find_cell(&[1.0 / 16.0, 0.5 - 1.0 / 16.0, 0.5 - 1.0 / 16.0]).unwrap();
        assert!((df[u] - d.h() / 2.0).abs() <= d.h() / 4.0);
    }

    #[test]
    fn surface_ball_flat_face() {
        let d = build_domain(&DomainSpec::unit_cube(1.0 / 32.0)).unwrap();
        let x = [0.5 - 1.0 / 64.0, 0.5 - 1.0 / 64.0, 0.0];
        let s = surface_ball_measure(&d, &x, 0.25).unwrap();
        let disc = std::f64::consts::PI * 0.0625;
        assert!((s / disc - 1.0).abs() < 0.15);
        let all = surface_ball_measure(&d, &x, d.boundary_diameter() + 1e-9).unwrap();
        assert!((all - 6.0).abs() < 1e-12);
        assert!(matches!(
            surface_ball_measure(&d, &[0.5, 0.5, 0.5], 0.1),
            Err(GeometryError::NotABoundaryPoint { .. })
        ));
        let mut prev = 0.0;
        for k in 1..40 {
            let v = surface_ball_measure(&d, &x, k as f64 * 0.05).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn adr_cube_and_ball() {
        for h in [1.0 / 8.0, 1.0 / 16.0] {
            let d = build_domain(&DomainSpec::unit_cube(h)).unwrap();
            let sample: Vec<usize> = (0..d.faces.len()).step_by(5).collect();
            let rep = check_adr(&d, &[0.5, 0.7, 1.0, 1.5], &sample);
            assert!(rep.c1 <= 10.0, "{rep:?}");
        }
        let d = build_domain(&DomainSpec::ball(vec![0.0; 3], 1.0, 1.0 / 8.0)).unwrap();
        let sample: Vec<usize> = (0..d.faces.len()).step_by(3).collect();
        let rep = check_adr(&d, &[0.5, 1.0, 1.5], &sample);
        assert!(rep.c1 <= 10.0, "{rep:?}");
    }

    #[test]
    fn adr_fails_along_needle() {
        let mut lower = Vec::new();
        for h in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
            let d = build_domain(&DomainSpec::box_minus_needle(h)).unwrap();
            let x = d.face_centroids()[d.nearest_face(&[0.0, 0.0, 0.0])];
            let f = d.find_face(&x).unwrap();
            let rep = check_adr(&d, &[0.25], &[f]);
            lower.push(rep.min_ratio);
        }
        assert!(lower[1] < lower[0] && lower[2] < lower[1], "{lower:?}");
    }

    #[test]
    fn nearest_boundary_point_is_exact() {
        let d = build_domain(&DomainSpec::l_shape(1.0 / 8.0)).unwrap();
        let (dd, q) = d.boundary_distance(&[0.1, -0.1 + 0.2, 0.0]);
        assert!((dd - 0.1).abs() < 1e-12, "{dd}");
        assert!((q[0] - 0.1).abs() < 1e-12 && q[1].abs() < 1e-12);
        let faces = &d.faces;
        for u in (0..d.n_unknowns()).step_by(5) {
            let p = d.cell_center(u);
            let brute = faces
                .iter()
                .map(|f| {
                    let (lo, hi) = f.bounds(&d.lattice);
                    point_box_nearest(&p, &lo, &hi).0
                })
                .fold(f64::INFINITY, f64::min);
            assert!((d.boundary_distance(&p).0 - brute).abs() < 1e-14);
        }
    }

    #[test]
    fn spec_errors() {
        let bad = DomainSpec { shape: Shape::Box(BoxParams { lower: vec![0.0; 3], upper: vec![1.0; 3] }), h: 0.3 };
        assert!(matches!(build_domain(&bad), Err(GeometryError::SpecParse(_))));
        let empty = DomainSpec {
            shape: Shape::BoxMinusBall(BoxMinusBallParams {
                lower: vec![0.0; 3],
                upper: vec![1.0; 3],
                center: vec![0.5; 3],
                radius: 5.0,
            }),
            h: 0.25,
        };
        assert!(matches!(build_domain(&empty), Err(GeometryError::EmptyInterior)));
    }

    #[test]
    fn spec_json_shape() {
        let s: DomainSpec = serde_json::from_str(
            r#"{"shape":"box_minus_needle","h":0.03125,"params":{"thickness":0.02}}"#,
        )
        .unwrap();
        assert_eq!(s.h, 0.03125);
        match s.shape {
            Shape::BoxMinusNeedle(p) => {
                assert_eq!(p.thickness, Some(0.02));
                assert_eq!(p.start, vec![0.0, 0.0, -0.5]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let back = serde_json::to_string(&DomainSpec::unit_cube(0.5)).unwrap();
        let again: DomainSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(again, DomainSpec::unit_cube(0.5));
        let bare: DomainSpec = serde_json::from_str(r#"{"shape":"box","h":0.5}"#).unwrap();
        assert_eq!(bare, DomainSpec::unit_cube(0.5));
        assert!(serde_json::from_str::<DomainSpec>(r#"{"shape":"ball","h":0.5,"params":{"radius":"x"}}"#).is_err());
        assert!(serde_json::from_str::<DomainSpec>(r#"{"shape":"cone","h":0.5}"#).is_err());
    }

    #[test]
    fn mask_roundtrip() {
        let d = build_domain(&DomainSpec::l_shape(0.25)).unwrap();
        let mut buf = Vec::new();
        write_mask(&d, &mut buf).unwrap();
        assert_eq!(buf.len(), 32 + d.lattice.len());
        let (lat, mask) = read_mask(&buf[..]).unwrap();
        assert_eq!(lat, d.lattice);
        assert_eq!(mask, d.interior);
    }
}
