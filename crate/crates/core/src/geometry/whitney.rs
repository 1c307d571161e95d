use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::domain::GridDomain;
use super::lattice::{box_box_distance, Point};

/// Dyadic cube anchored at the lattice origin: side `h * 2^level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCube {
    pub level: i32,
    pub index: [i64; 3],
    pub corner: Point,
    pub side: f64,
}

impl WhitneyCube {
    pub fn diam(&self, dim: usize) -> f64 {
        self.side * (dim as f64).sqrt()
    }

    pub fn center(&self, dim: usize) -> Point {
        let mut c = self.corner;
        for x in c.iter_mut().take(dim) {
            *x += 0.5 * self.side;
        }
        c
    }

    /// Closed box of the concentric cube scaled by `factor`.
    pub fn scaled_bounds(&self, dim: usize, factor: f64) -> (Point, Point) {
        let c = self.center(dim);
        let half = 0.5 * factor * self.side;
        let mut lo = c;
        let mut hi = c;
        for k in 0..dim {
            lo[k] -= half;
            hi[k] += half;
        }
        (lo, hi)
    }

    pub fn contains(&self, dim: usize, p: &Point) -> bool {
        (0..dim).all(|k| p[k] >= self.corner[k] && p[k] <= self.corner[k] + self.side)
    }
}

/// Extra refinement along a segment: cubes within `radius` of it may split down to `min_side`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Focus {
    pub a: Point,
    pub b: Point,
    pub radius: f64,
    pub min_side: f64,
}

impl Focus {
    pub fn point(center: Point, radius: f64, min_side: f64) -> Self {
        Focus { a: center, b: center, radius, min_side }
    }

    pub fn segment(a: Point, b: Point, radius: f64, min_side: f64) -> Self {
        Focus { a, b, radius, min_side }
    }

    /// Conservative test: the segment meets the cube grown by `radius` on every side.
    fn meets(&self, q: &WhitneyCube, dim: usize) -> bool {
        let (mut lo, mut hi) = q.scaled_bounds(dim, 1.0);
        for k in 0..dim {
            lo[k] -= self.radius;
            hi[k] += self.radius;
        }
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..dim {
            let d = self.b[k] - self.a[k];
            if d.abs() < 1e-300 {
                if self.a[k] < lo[k] || self.a[k] > hi[k] {
                    return false;
                }
                continue;
            }
            let (mut u, mut v) = ((lo[k] - self.a[k]) / d, (hi[k] - self.a[k]) / d);
            if u > v {
                std::mem::swap(&mut u, &mut v);
            }
            t0 = t0.max(u);
            t1 = t1.min(v);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitneyOptions {
    /// Smallest side used away from focus regions; must not exceed `h`.
    pub min_side: f64,
    pub focus: Vec<Focus>,
}

impl WhitneyOptions {
    pub fn for_domain(domain: &GridDomain) -> Self {
        WhitneyOptions { min_side: 0.5 * domain.h(), focus: Vec::new() }
    }
}

/// Maximal dyadic cubes `Q` inside the cell union with `4 diam(Q) <= dist(4Q, boundary)`.
/// Interior regions too close to the boundary for the finest admissible side form
/// `residual`; cubes and residual together tile the interior cells.
#[derive(Debug, Clone)]
pub struct WhitneyDecomposition {
    pub dim: usize,
    pub cubes: Vec<WhitneyCube>,
    pub residual: Vec<WhitneyCube>,
    lookup: HashMap<(i32, [i64; 3]), usize>,
    levels: Vec<i32>,
}

/// Summed-area table of the interior mask.
struct CellCounter {
    dims: [usize; 3],
    sums: Vec<u32>,
}

impl CellCounter {
    fn new(domain: &GridDomain) -> Self {
        let lat = &domain.lattice;
        let d = [lat.dims[0] + 1, lat.dims[1] + 1, lat.dims[2] + 1];
        let mut sums = vec![0u32; d[0] * d[1] * d[2]];
        let id = |x: usize, y: usize, z: usize| x + d[0] * (y + d[1] * z);
        for z in 1..d[2] {
            for y in 1..d[1] {
                for x in 1..d[0] {
                    let cell = lat.index([x - 1, y - 1, z - 1]) as usize;
                    let v = domain.interior[cell] as u32;
                    sums[id(x, y, z)] = v + sums[id(x - 1, y, z)] + sums[id(x, y - 1, z)] + sums[id(x, y, z - 1)]
                        - sums[id(x - 1, y - 1, z)]
                        - sums[id(x - 1, y, z - 1)]
                        - sums[id(x, y - 1, z - 1)]
                        + sums[id(x - 1, y - 1, z - 1)];
                }
            }
        }
        CellCounter { dims: d, sums }
    }

    /// Interior cells in the half-open block `[a, b)` (already clipped).
    fn count(&self, a: [usize; 3], b: [usize; 3]) -> u64 {
        let d = self.dims;
        let s = |x: usize, y: usize, z: usize| self.sums[x + d[0] * (y + d[1] * z)] as i64;
        let v = s(b[0], b[1], b[2]) - s(a[0], b[1], b[2]) - s(b[0], a[1], b[2]) - s(b[0], b[1], a[2])
            + s(a[0], a[1], b[2])
            + s(a[0], b[1], a[2])
            + s(b[0], a[1], a[2])
            - s(a[0], a[1], a[2]);
        v as u64
    }
}

enum Content {
    Empty,
    Partial,
    Full,
}

fn exp2(level: i32) -> f64 {
    2f64.powi(level)
}

impl WhitneyDecomposition {
    pub fn build(domain: &GridDomain, opts: &WhitneyOptions) -> Self {
        let lat = &domain.lattice;
        let dim = lat.dim;
        let h = lat.h;
        assert!(opts.min_side <= h * (1.0 + 1e-12), "minimum side must not exceed the cell size");
        let counter = CellCounter::new(domain);
        let max_dim = lat.dims.iter().take(dim).copied().max().unwrap();
        let mut top = 0i32;
        while (1usize << top) < max_dim {
            top += 1;
        }
        let content = |level: i32, idx: [i64; 3]| -> Content {
            if level >= 0 {
                let w = 1i64 << level;
                let mut a = [0usize; 3];
                let mut b = [1usize; 3];
                let mut inside = true;
                for k in 0..dim {
                    let lo = idx[k] * w;
                    let hi = lo + w;
                    if lo >= lat.dims[k] as i64 || hi <= 0 {
                        return Content::Empty;
                    }
                    if lo < 0 || hi > lat.dims[k] as i64 {
                        inside = false;
                    }
                    a[k] = lo.max(0) as usize;
                    b[k] = hi.min(lat.dims[k] as i64) as usize;
                }
                let n = counter.count(a, b);
                let full = (w as u64).pow(dim as u32);
                if n == 0 {
                    Content::Empty
                } else if inside && n == full {
                    Content::Full
                } else {
                    Content::Partial
                }
            } else {
                let per = 1i64 << (-level);
                let mut c = [0i64; 3];
                for k in 0..dim {
                    c[k] = idx[k].div_euclid(per);
                }
                match lat.index_signed(c) {
                    Some(i) if domain.interior[i] => Content::Full,
                    _ => Content::Empty,
                }
            }
        };
        let make = |level: i32, idx: [i64; 3]| {
            let side = h * exp2(level);
            let mut corner = [0.0; 3];
            for k in 0..dim {
                corner[k] = lat.origin[k] + idx[k] as f64 * side;
            }
            WhitneyCube { level, index: idx, corner, side }
        };
        let mut cubes = Vec::new();
        let mut residual = Vec::new();
        let all: Rc<Vec<u32>> = Rc::new((0..opts.focus.len() as u32).collect());
        let mut stack = vec![(top, [0i64; 3], all)];
        let n_children = 1usize << dim;
        while let Some((level, idx, near)) = stack.pop() {
            let cube = make(level, idx);
            let c = content(level, idx);
            if let Content::Empty = c {
                continue;
            }
            if let Content::Full = c {
                if satisfies_whitney(domain, &cube) {
                    cubes.push(cube);
                    continue;
                }
            }
            let side = cube.side;
            let near: Rc<Vec<u32>> = if near.is_empty() {
                near
            } else {
                Rc::new(near.iter().copied().filter(|&f| opts.focus[f as usize].meets(&cube, dim)).collect())
            };
            let may_split = side > opts.min_side * (1.0 + 1e-12)
                || near.iter().any(|&f| side > opts.focus[f as usize].min_side * (1.0 + 1e-12));
            if may_split {
                for child in (0..n_children).rev() {
                    let mut ci = [0i64; 3];
                    for k in 0..dim {
                        ci[k] = 2 * idx[k] + ((child >> k) & 1) as i64;
                    }
                    stack.push((level - 1, ci, Rc::clone(&near)));
                }
            } else {
                residual.push(cube);
            }
        }
        let mut lookup = HashMap::with_capacity(cubes.len());
        let mut levels: Vec<i32> = Vec::new();
        for (i, q) in cubes.iter().enumerate() {
            lookup.insert((q.level, q.index), i);
            if !levels.contains(&q.level) {
                levels.push(q.level);
            }
        }
        levels.sort_unstable();
        WhitneyDecomposition { dim, cubes, residual, lookup, levels }
    }

    /// Index of a cube containing `p`.
    pub fn locate(&self, origin: &Point, h: f64, p: &Point) -> Option<usize> {
        for &level in &self.levels {
            let side = h * exp2(level);
            let mut idx = [0i64; 3];
            for k in 0..self.dim {
                idx[k] = ((p[k] - origin[k]) / side).floor() as i64;
            }
            if let Some(&i) = self.lookup.get(&(level, idx)) {
                if self.cubes[i].contains(self.dim, p) {
                    return Some(i);
                }
            }
        }
        None
    }

    /// Cubes touching cube `i` (closed boxes intersect). Maximal cubes that touch
    /// differ by at most two levels.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let q = &self.cubes[i];
        let mut out = Vec::new();
        let fine = *self.levels.first().unwrap_or(&q.level);
        let unit = |l: i32| 1i64 << (l - fine);
        let a: Vec<i64> = (0..self.dim).map(|k| q.index[k] * unit(q.level)).collect();
        let b: Vec<i64> = (0..self.dim).map(|k| a[k] + unit(q.level)).collect();
        for &level in &self.levels {
            if (level - q.level).abs() > 2 {
                continue;
            }
            let s = unit(level);
            let mut lo = [0i64; 3];
            let mut hi = [0i64; 3];
            for k in 0..self.dim {
                lo[k] = (a[k] + s - 1).div_euclid(s) - 1;
                hi[k] = b[k].div_euclid(s);
            }
            let z_range = if self.dim == 3 { lo[2]..=hi[2] } else { 0..=0 };
            for z in z_range {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let key = (level, [x, y, z]);
                        if let Some(&j) = self.lookup.get(&key) {
                            if j != i {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Checks the four-sided distance inequality on every cube against a
    /// brute-force scan over all boundary faces.
    pub fn verify(&self, domain: &GridDomain) -> WhitneyCheck {
        let lat = &domain.lattice;
        let bounds: Vec<(Point, Point)> = domain.faces.iter().map(|f| f.bounds(lat)).collect();
        let dist_to = |lo: &Point, hi: &Point| {
            bounds.iter().map(|(a, b)| box_box_distance(lo, hi, a, b)).fold(f64::INFINITY, f64::min)
        };
        let mut rep = WhitneyCheck { checked: 0, violations: 0, max_upper_ratio: 0.0, min_lower_ratio: f64::INFINITY };
        for q in &self.cubes {
            let diam = q.diam(self.dim);
            let (lo4, hi4) = q.scaled_bounds(self.dim, 4.0);
            let (lo1, hi1) = q.scaled_bounds(self.dim, 1.0);
            let d4 = dist_to(&lo4, &hi4);
            let d1 = dist_to(&lo1, &hi1);
            rep.checked += 1;
            let ok = 4.0 * diam <= d4 && d4 <= d1 && d1 <= 40.0 * diam;
            if !ok {
                rep.violations += 1;
            }
            rep.max_upper_ratio = rep.max_upper_ratio.max(d1 / diam);
            rep.min_lower_ratio = rep.min_lower_ratio.min(d4 / diam);
        }
        rep
    }

    /// Total volume of cubes and residual pieces.
    pub fn covered_volume(&self) -> (f64, f64) {
        let v = |qs: &[WhitneyCube]| qs.iter().map(|q| q.side.powi(self.dim as i32)).sum::<f64>();
        (v(&self.cubes), v(&self.residual))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCheck {
    pub checked: usize,
    pub violations: usize,
    pub max_upper_ratio: f64,
    pub min_lower_ratio: f64,
}

fn satisfies_whitney(domain: &GridDomain, q: &WhitneyCube) -> bool {
    let dim = domain.dim();
    let (lo, hi) = q.scaled_bounds(dim, 4.0);
    let need = 4.0 * q.diam(dim);
    !domain.face_index().any_within(&domain.lattice, &domain.faces, &lo, &hi, need)
}

/// Default decomposition with sub-cell side `h/2`.
pub fn whitney_decompose(domain: &GridDomain) -> WhitneyDecomposition {
    WhitneyDecomposition::build(domain, &WhitneyOptions::for_domain(domain))
}
