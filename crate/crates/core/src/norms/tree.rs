use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::{dist, Point};
use crate::growth::GrowthFunction;

const LEAF: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    lo: Point,
    hi: Point,
    vmin: f64,
    vmax: f64,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Kd-tree over points carrying values, with value ranges per node.
#[derive(Debug, Clone)]
pub struct ValueTree {
    nodes: Vec<Node>,
    /// Point indices in tree order.
    pub order: Vec<usize>,
    points: Vec<Point>,
    values: Vec<f64>,
}

impl ValueTree {
    pub fn new(points: &[Point], values: &[f64]) -> Self {
        let mut t = ValueTree { nodes: Vec::new(), order: (0..points.len()).collect(), points: points.to_vec(), values: values.to_vec() };
        if !points.is_empty() {
            t.build(0, points.len());
        }
        t
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
            vmin = vmin.min(self.values[i]);
            vmax = vmax.max(self.values[i]);
        }
        let id = self.nodes.len();
        self.nodes.push(Node { lo, hi, vmin, vmax, start, end, children: None });
        if end - start > LEAF {
            let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
            let mid = (start + end) / 2;
            let pts = &self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
            let l = self.build(start, mid);
            let r = self.build(mid, end);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    fn box_distance(a: &Node, b: &Node) -> f64 {
        let mut s = 0.0;
        for k in 0..3 {
            let g = (a.lo[k] - b.hi[k]).max(b.lo[k] - a.hi[k]).max(0.0);
            s += g * g;
        }
        s.sqrt()
    }

    /// Indices of points with `lo <= |p - c| < hi`.
    pub fn annulus(&self, c: &Point, lo: f64, hi: f64, out: &mut Vec<usize>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let mut near = 0.0;
            let mut far = 0.0;
            for k in 0..3 {
                let g = (node.lo[k] - c[k]).max(c[k] - node.hi[k]).max(0.0);
                near += g * g;
                let f = (c[k] - node.lo[k]).abs().max((node.hi[k] - c[k]).abs());
                far += f * f;
            }
            if near.sqrt() >= hi || far.sqrt() < lo {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d = dist(&self.points[i], c);
                        if d >= lo && d < hi {
                            out.push(i);
                        }
                    }
                }
            }
        }
    }

    /// Exact `max |v_i - v_j| / phi(|p_i - p_j|)` over distinct points by best-first
    /// branch and bound, seeded with a known lower bound. Returns the value, the pair and
    /// the number of pairs evaluated explicitly.
    pub fn max_ratio(&self, phi: &GrowthFunction, seed: (f64, usize, usize)) -> (f64, usize, usize, u64) {
        let (mut best, mut bi, mut bj) = seed;
        let mut pairs = 0u64;
        if self.nodes.is_empty() {
            return (best, bi, bj, pairs);
        }
        let mut heap = BinaryHeap::new();
        heap.push(Cand { ub: f64::INFINITY, a: 0, b: 0 });
        while let Some(Cand { ub, a, b }) = heap.pop() {
            if ub <= best {
                break;
            }
            let (na, nb) = (&self.nodes[a], &self.nodes[b]);
            match (na.children, nb.children) {
                (None, None) => {
                    let dmin = if a == b { 0.0 } else { Self::box_distance(na, nb) };
                    let floor = if dmin > 0.0 { phi.eval(dmin) } else { 0.0 };
                    for (ii, &i) in self.order[na.start..na.end].iter().enumerate() {
                        let from = if a == b { na.start + ii + 1 } else { nb.start };
                        for &j in &self.order[from..nb.end] {
                            let dv = (self.values[i] - self.values[j]).abs();
                            if dv == 0.0 || dv <= best * floor {
                                continue;
                            }
                            let d = dist(&self.points[i], &self.points[j]);
                            if d == 0.0 {
                                continue;
                            }
                            pairs += 1;
                            let q = dv / phi.eval(d);
                            if q > best || (q == best && (i.min(j), i.max(j)) < (bi.min(bj), bi.max(bj))) {
                                best = q;
                                bi = i.min(j);
                                bj = i.max(j);
                            }
                        }
                    }
                }
                _ => {
                    let split_a = match (na.children, nb.children) {
                        (Some(_), None) => true,
                        (None, Some(_)) => false,
                        _ => na.end - na.start >= nb.end - nb.start,
                    };
                    if a == b {
                        let (l, r) = na.children.unwrap();
                        for (x, y) in [(l, l), (r, r), (l, r)] {
                            self.push(&mut heap, phi, x, y, best);
                        }
                    } else if split_a {
                        let (l, r) = na.children.unwrap();
                        self.push(&mut heap, phi, l, b, best);
                        self.push(&mut heap, phi, r, b, best);
                    } else {
                        let (l, r) = nb.children.unwrap();
                        self.push(&mut heap, phi, a, l, best);
                        self.push(&mut heap, phi, a, r, best);
                    }
                }
            }
        }
        (best, bi, bj, pairs)
    }

    fn push(&self, heap: &mut BinaryHeap<Cand>, phi: &GrowthFunction, a: usize, b: usize, best: f64) {
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        let dv = (na.vmax - nb.vmin).max(nb.vmax - na.vmin);
        if dv <= 0.0 {
            return;
        }
        let dmin = if a == b { 0.0 } else { Self::box_distance(na, nb) };
        let ub = if dmin > 0.0 { dv / phi.eval(dmin) } else { f64::INFINITY };
        if ub > best {
            heap.push(Cand { ub, a, b });
        }
    }
}

struct Cand {
    ub: f64,
    a: usize,
    b: usize,
}

impl PartialEq for Cand {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cand {
    fn cmp(&self, o: &Self) -> Ordering {
        self.ub.total_cmp(&o.ub).then(o.a.cmp(&self.a)).then(o.b.cmp(&self.b))
    }
}
