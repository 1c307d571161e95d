use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::domain::GridDomain;
use super::lattice::{dist, Point};
use super::whitney::{Focus, WhitneyDecomposition, WhitneyOptions};
use super::{GeometryError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corkscrew {
    pub point: Point,
    /// Radius of the inscribed ball `B(point, c0 r)` inside `B(x, r)` and the domain, over `r`.
    pub c0: f64,
    pub delta: f64,
    /// Set when `r <= 2h`, below the lattice resolution.
    pub degenerate: bool,
}

/// Interior cell center `X` in `B(x, r)` maximizing the radius of a ball around `X`
/// that stays in both `B(x, r)` and the domain (and inside the truncation shell).
/// Ties go to the smallest lattice index.
pub fn find_corkscrew(domain: &GridDomain, x: &Point, r: f64) -> Result<Corkscrew> {
    if !(r > 0.0) {
        return Err(GeometryError::ScaleOutOfRange(format!("radius {r} must be positive")));
    }
    let lat = &domain.lattice;
    let dim = lat.dim;
    let delta = domain.cell_boundary_distance();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for k in 0..dim {
        let a = ((x[k] - r - lat.origin[k]) / lat.h).floor().max(0.0) as usize;
        let b = ((x[k] + r - lat.origin[k]) / lat.h).ceil().max(0.0) as usize;
        lo[k] = a.min(lat.dims[k]);
        hi[k] = b.min(lat.dims[k]);
    }
    if dim == 2 {
        lo[2] = 0;
        hi[2] = 1;
    }
    let mut best: Option<(f64, usize)> = None;
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            for xx in lo[0]..hi[0] {
                let cell = lat.index([xx, y, z]);
                if !domain.interior[cell] {
                    continue;
                }
                let c = lat.center(cell);
                let gap = r - dist(&c, x);
                if gap <= 0.0 {
                    continue;
                }
                let u = domain.unknown_of[cell] as usize;
                let v = delta[u].min(gap).min(domain.shell_distance(&c));
                let better = match best {
                    None => true,
                    Some((bv, bc)) => v > bv || (v == bv && cell < bc),
                };
                if better {
                    best = Some((v, cell));
                }
            }
        }
    }
    let (v, cell) = best.ok_or(GeometryError::NoInteriorPoint)?;
    let u = domain.unknown_of[cell] as usize;
    Ok(Corkscrew { point: lat.center(cell), c0: v / r, delta: delta[u], degenerate: r <= 2.0 * lat.h })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainBall {
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackChain {
    pub balls: Vec<ChainBall>,
    /// `|X - Y| / min(delta(X), delta(Y))`.
    pub pi: f64,
    /// Largest of `diam/dist` and `dist/diam` over the balls.
    pub c2: f64,
}

impl HarnackChain {
    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }
}

const INFLATE: f64 = 0.6;
const LIFT_STEP: f64 = 0.5;
const MAX_LIFT: usize = 200;
/// Focus cubes may shrink to `delta / FOCUS_DEPTH`, small enough to contain the focus center.
const FOCUS_DEPTH: f64 = 16.0;

/// Whitney decomposition refined along lift paths of a fixed set of point pairs,
/// so chains can be extracted for all of them from one build.
pub struct HarnackProbe<'a> {
    domain: &'a GridDomain,
    whitney: WhitneyDecomposition,
    adjacency: Vec<Vec<u32>>,
}

fn lift_path(domain: &GridDomain, x: &Point, target: f64) -> Vec<(Point, f64)> {
    let dim = domain.dim();
    let mut z = *x;
    let (mut d, mut p) = domain.boundary_distance(&z);
    let mut path = vec![(z, d)];
    for _ in 0..MAX_LIFT {
        if d >= target {
            break;
        }
        let mut n = [0.0; 3];
        for k in 0..dim {
            n[k] = (z[k] - p[k]) / d;
        }
        let mut next = z;
        for k in 0..dim {
            next[k] += LIFT_STEP * d * n[k];
        }
        let (nd, np) = domain.boundary_distance(&next);
        if nd <= d * 1.01 || !domain.contains(&next) {
            break;
        }
        z = next;
        d = nd;
        p = np;
        path.push((z, d));
    }
    path
}

/// Thin refinement tubes along consecutive path points. Every point of a segment keeps
/// at least half the smaller endpoint distance, so cubes of the chosen side cover it.
fn focus_along(path: &[(Point, f64)], out: &mut Vec<Focus>) {
    if let [(c, d)] = path {
        out.push(Focus::point(*c, d / FOCUS_DEPTH, d / FOCUS_DEPTH));
    }
    for w in path.windows(2) {
        let d = 0.5 * w[0].1.min(w[1].1);
        let side = d / FOCUS_DEPTH;
        out.push(Focus::segment(w[0].0, w[1].0, side, side));
    }
}

/// Tube along the straight segment `a -> b`, or nothing if it leaves the domain.
fn bridge(domain: &GridDomain, a: &Point, b: &Point, out: &mut Vec<Focus>) {
    let len = dist(a, b);
    let floor = domain.h() / 16.0;
    let mut t = 0.0;
    let mut path = Vec::new();
    loop {
        let s = (t / len.max(f64::MIN_POSITIVE)).min(1.0);
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = a[k] + (b[k] - a[k]) * s;
        }
        let (d, _) = domain.boundary_distance(&p);
        if !domain.contains(&p) || d < floor {
            return;
        }
        path.push((p, d));
        if s >= 1.0 {
            break;
        }
        t += LIFT_STEP * d;
    }
    focus_along(&path, out);
}

impl<'a> HarnackProbe<'a> {
    pub fn for_pairs(domain: &'a GridDomain, pairs: &[(Point, Point)]) -> Result<Self> {
        let base = WhitneyOptions::for_domain(domain);
        let target = 8.0 * (domain.dim() as f64).sqrt() * base.min_side * 1.05;
        let mut focus = Vec::new();
        for (x, y) in pairs {
            for p in [x, y] {
                check_interior(domain, p)?;
            }
            let px = lift_path(domain, x, target);
            let py = lift_path(domain, y, target);
            focus_along(&px, &mut focus);
            focus_along(&py, &mut focus);
            bridge(domain, &px.last().unwrap().0, &py.last().unwrap().0, &mut focus);
        }
        let whitney = WhitneyDecomposition::build(domain, &WhitneyOptions { focus, ..base });
        let adjacency = (0..whitney.cubes.len())
            .map(|i| whitney.neighbors(i).into_iter().map(|j| j as u32).collect())
            .collect();
        Ok(HarnackProbe { domain, whitney, adjacency })
    }

    pub fn whitney(&self) -> &WhitneyDecomposition {
        &self.whitney
    }

    pub fn chain(&self, x: &Point, y: &Point) -> Result<HarnackChain> {
        let domain = self.domain;
        let dx = check_interior(domain, x)?;
        let dy = check_interior(domain, y)?;
        let pi = dist(x, y) / dx.min(dy);
        let point_ball = |c: &Point, d: f64| ChainBall { center: *c, radius: 0.6 * d };
        let balls = if x == y {
            vec![point_ball(x, dx)]
        } else if pi <= 1.0 {
            vec![point_ball(x, dx), point_ball(y, dy)]
        } else {
            self.cube_path(x, y)?
        };
        let c2 = balls
            .iter()
            .map(|b| {
                let gap = domain.boundary_distance(&b.center).0 - b.radius;
                let diam = 2.0 * b.radius;
                (diam / gap).max(gap / diam)
            })
            .fold(0.0, f64::max);
        Ok(HarnackChain { balls, pi, c2 })
    }

    fn cube_path(&self, x: &Point, y: &Point) -> Result<Vec<ChainBall>> {
        let wd = &self.whitney;
        let lat = &self.domain.lattice;
        let locate = |p: &Point| wd.locate(&lat.origin, lat.h, p).ok_or(GeometryError::Disconnected);
        let start = locate(x)?;
        let goal = locate(y)?;
        let n = wd.cubes.len();
        let mut prev = vec![usize::MAX; n];
        prev[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            if i == goal {
                break;
            }
            for &j in &self.adjacency[i] {
                let j = j as usize;
                if prev[j] == usize::MAX {
                    prev[j] = i;
                    queue.push_back(j);
                }
            }
        }
        if prev[goal] == usize::MAX {
            return Err(GeometryError::Disconnected);
        }
        let mut order = vec![goal];
        while *order.last().unwrap() != start {
            order.push(prev[*order.last().unwrap()]);
        }
        order.reverse();
        let dim = wd.dim;
        Ok(order
            .into_iter()
            .map(|i| {
                let q = &wd.cubes[i];
                ChainBall { center: q.center(dim), radius: INFLATE * q.diam(dim) }
            })
            .collect())
    }
}

fn check_interior(domain: &GridDomain, p: &Point) -> Result<f64> {
    let (d, _) = domain.boundary_distance(p);
    if !domain.contains(p) || !(d > 0.0) {
        return Err(GeometryError::NotInterior { point: *p });
    }
    Ok(d)
}

/// Harnack chain from `x` to `y` through inflated Whitney cubes.
pub fn find_harnack_chain(domain: &GridDomain, x: &Point, y: &Point) -> Result<HarnackChain> {
    HarnackProbe::for_pairs(domain, &[(*x, *y)])?.chain(x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrotPath {
    /// Boundary point first, then cell centers ending at the target.
    pub points: Vec<Point>,
    /// `min delta(Z) / length(y -> Z)` over the path vertices after `y`.
    pub lambda: f64,
    pub length: f64,
}

#[derive(PartialEq)]
struct Label(f64, usize);

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

struct CarrotGraph<'a> {
    domain: &'a GridDomain,
    moves: Vec<([i64; 3], f64)>,
}

impl<'a> CarrotGraph<'a> {
    fn new(domain: &'a GridDomain) -> Self {
        let dim = domain.dim();
        let h = domain.h();
        let mut moves = Vec::new();
        let zr: &[i64] = if dim == 3 { &[-1, 0, 1] } else { &[0] };
        for &dz in zr {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let len = h * ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                    moves.push(([dx, dy, dz], len));
                }
            }
        }
        CarrotGraph { domain, moves }
    }

    /// Diagonal moves need every cell of the spanned block inside, so the segment stays in the closure.
    fn step(&self, cell: usize, m: &[i64; 3]) -> Option<usize> {
        let lat = &self.domain.lattice;
        let c = lat.coords(cell);
        let t = [c[0] as i64 + m[0], c[1] as i64 + m[1], c[2] as i64 + m[2]];
        let target = lat.index_signed(t)?;
        if !self.domain.interior[target] {
            return None;
        }
        let nz = m.iter().filter(|&&v| v != 0).count();
        if nz > 1 {
            for mask in 1..7u8 {
                let mut q = [c[0] as i64, c[1] as i64, c[2] as i64];
                let mut partial = false;
                for k in 0..3 {
                    if m[k] != 0 && mask & (1 << k) != 0 {
                        q[k] += m[k];
                        partial = true;
                    }
                }
                if !partial || q == t {
                    continue;
                }
                match lat.index_signed(q) {
                    Some(i) if self.domain.interior[i] => {}
                    _ => return None,
                }
            }
        }
        Some(target)
    }

    /// Shortest admissible lengths from the face's owning cell with `delta >= lambda * length`.
    fn search(&self, face: usize, goal: usize, lambda: f64) -> Option<(Vec<usize>, f64)> {
        let domain = self.domain;
        let lat = &domain.lattice;
        let delta = domain.cell_boundary_distance();
        let n = lat.len();
        let mut best = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let first = domain.faces[face].cell as usize;
        let l0 = 0.5 * lat.h;
        let admissible = |cell: usize, len: f64| delta[domain.unknown_of[cell] as usize] >= lambda * len;
        if !admissible(first, l0) {
            return None;
        }
        best[first] = l0;
        prev[first] = first;
        let mut heap = BinaryHeap::from([Label(l0, first)]);
        while let Some(Label(len, cell)) = heap.pop() {
            if len > best[cell] {
                continue;
            }
            if cell == goal {
                break;
            }
            for (m, step) in &self.moves {
                let Some(next) = self.step(cell, m) else { continue };
                let nl = len + step;
                if nl < best[next] && admissible(next, nl) {
                    best[next] = nl;
                    prev[next] = cell;
                    heap.push(Label(nl, next));
                }
            }
        }
        if !best[goal].is_finite() {
            return None;
        }
        let mut path = vec![goal];
        while *path.last().unwrap() != first {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        Some((path, best[goal]))
    }
}

/// Grid path from boundary point `y` to the cell center `x` maximizing the carrot constant,
/// found by bisection on the constant over constrained shortest-path reachability.
pub fn find_carrot_path(domain: &GridDomain, y: &Point, x: &Point) -> Result<CarrotPath> {
    let face = domain.find_face(y)?;
    let u = domain.find_cell(x)?;
    let goal = domain.cells[u] as usize;
    let graph = CarrotGraph::new(domain);
    let mut found = graph.search(face, goal, 0.0).ok_or(GeometryError::Unreachable)?;
    if let Some(p) = graph.search(face, goal, 1.0) {
        found = p;
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            match graph.search(face, goal, mid) {
                Some(p) => {
                    found = p;
                    lo = mid;
                }
                None => hi = mid,
            }
        }
    }
    let (cells, length) = found;
    let lat = &domain.lattice;
    let delta = domain.cell_boundary_distance();
    let mut points = vec![*y];
    let mut run = 0.0;
    let mut lambda = f64::INFINITY;
    let mut last = *y;
    for &c in &cells {
        let p = lat.center(c);
        run += dist(&last, &p);
        lambda = lambda.min(delta[domain.unknown_of[c] as usize] / run);
        points.push(p);
        last = p;
    }
    Ok(CarrotPath { points, lambda, length })
}
