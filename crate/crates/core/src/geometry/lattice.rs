use serde::{Deserialize, Serialize};

/// Points always carry three coordinates; the unused one is 0 in two dimensions.
pub type Point = [f64; 3];

pub fn dist(a: &Point, b: &Point) -> f64 {
    dist2(a, b).sqrt()
}

pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Regular cell lattice. Index order is x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub dim: usize,
    pub dims: [usize; 3],
    pub h: f64,
    pub origin: Point,
}

impl Lattice {
    pub fn new(dim: usize, dims: [usize; 3], h: f64, origin: Point) -> Self {
        let mut dims = dims;
        if dim == 2 {
            dims[2] = 1;
        }
        Lattice { dim, dims, h, origin }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Signed integer coordinates to an index, if inside.
    #[inline]
    pub fn index_signed(&self, c: [i64; 3]) -> Option<usize> {
        for k in 0..3 {
            if c[k] < 0 || c[k] >= self.dims[k] as i64 {
                return None;
            }
        }
        Some(self.index([c[0] as usize, c[1] as usize, c[2] as usize]))
    }

    #[inline]
    pub fn center(&self, idx: usize) -> Point {
        let c = self.coords(idx);
        let mut p = [0.0; 3];
        for k in 0..self.dim {
            p[k] = self.origin[k] + (c[k] as f64 + 0.5) * self.h;
        }
        p
    }

    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, side: i8) -> Option<usize> {
        let c = self.coords(idx);
        if side < 0 {
            if c[axis] == 0 {
                return None;
            }
            Some(idx - self.stride(axis))
        } else {
            if c[axis] + 1 >= self.dims[axis] {
                return None;
            }
            Some(idx + self.stride(axis))
        }
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    /// Cell whose closed box contains `p` (ties go to the upper cell).
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let mut c = [0i64; 3];
        for k in 0..self.dim {
            c[k] = ((p[k] - self.origin[k]) / self.h).floor() as i64;
        }
        self.index_signed(c)
    }

    /// Cell whose center is nearest to `p`, if `p` lies within the lattice box.
    pub fn nearest_cell(&self, p: &Point) -> Option<usize> {
        let mut c = [0i64; 3];
        for k in 0..self.dim {
            let x = (p[k] - self.origin[k]) / self.h - 0.5;
            c[k] = x.round() as i64;
            c[k] = c[k].clamp(0, self.dims[k] as i64 - 1);
            let lo = self.origin[k];
            let hi = lo + self.dims[k] as f64 * self.h;
            if p[k] < lo - 1e-12 || p[k] > hi + 1e-12 {
                return None;
            }
        }
        self.index_signed(c)
    }

    pub fn upper(&self) -> Point {
        let mut p = [0.0; 3];
        for k in 0..self.dim {
            p[k] = self.origin[k] + self.dims[k] as f64 * self.h;
        }
        p
    }

    /// Doubled integer coordinates (units of `h/2` from the origin) of a point.
    pub fn doubled(&self, p: &Point) -> Option<[i64; 3]> {
        let mut c = [0i64; 3];
        for k in 0..self.dim {
            let x = 2.0 * (p[k] - self.origin[k]) / self.h;
            let r = x.round();
            if (x - r).abs() > 1e-6 {
                return None;
            }
            c[k] = r as i64;
        }
        Some(c)
    }
}

/// Boundary face of an interior cell: the side `side` (±1) along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    pub cell: u32,
    pub axis: u8,
    pub side: i8,
}

impl Face {
    pub fn centroid(&self, lat: &Lattice) -> Point {
        let mut p = lat.center(self.cell as usize);
        p[self.axis as usize] += 0.5 * self.side as f64 * lat.h;
        p
    }

    /// Outward unit normal (pointing away from the owning cell).
    pub fn normal(&self) -> Point {
        let mut n = [0.0; 3];
        n[self.axis as usize] = self.side as f64;
        n
    }

    /// Closed face square as an axis-aligned (degenerate) box.
    pub fn bounds(&self, lat: &Lattice) -> (Point, Point) {
        let c = self.centroid(lat);
        let mut lo = c;
        let mut hi = c;
        for k in 0..lat.dim {
            if k != self.axis as usize {
                lo[k] -= 0.5 * lat.h;
                hi[k] += 0.5 * lat.h;
            }
        }
        (lo, hi)
    }
}

/// Euclidean distance between two closed axis-aligned boxes.
#[inline]
pub fn box_box_distance(alo: &Point, ahi: &Point, blo: &Point, bhi: &Point) -> f64 {
    let mut s = 0.0;
    for k in 0..3 {
        let g = (blo[k] - ahi[k]).max(alo[k] - bhi[k]).max(0.0);
        s += g * g;
    }
    s.sqrt()
}

/// Distance from a point to a closed box and the nearest point of the box.
#[inline]
pub fn point_box_nearest(p: &Point, lo: &Point, hi: &Point) -> (f64, Point) {
    let mut q = [0.0; 3];
    for k in 0..3 {
        q[k] = p[k].clamp(lo[k], hi[k]);
    }
    (dist(p, &q), q)
}
