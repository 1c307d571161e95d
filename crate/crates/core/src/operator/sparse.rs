use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::OperatorError;

/// Compressed sparse rows with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<u32>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
    diag_pos: Vec<u32>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0u32);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut last: Option<u32> = None;
            for (c, v) in r {
                if last == Some(c) {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col.len() as u32);
        }
        Self::with_diag(n, row_ptr, col, val)
    }

    fn with_diag(n: usize, row_ptr: Vec<u32>, col: Vec<u32>, val: Vec<f64>) -> Self {
        let mut diag_pos = vec![u32::MAX; n];
        for i in 0..n {
            for p in row_ptr[i]..row_ptr[i + 1] {
                if col[p as usize] as usize == i {
                    diag_pos[i] = p;
                }
            }
        }
        CsrMatrix { n, row_ptr, col, val, diag_pos }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let a = self.row_ptr[i] as usize;
        let b = self.row_ptr[i + 1] as usize;
        (&self.col[a..b], &self.val[a..b])
    }

    pub fn diag(&self, i: usize) -> f64 {
        match self.diag_pos[i] {
            u32::MAX => 0.0,
            p => self.val[p as usize],
        }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let (c, v) = self.row(i);
            let mut s = 0.0;
            for k in 0..c.len() {
                s += v[k] * x[c[k] as usize];
            }
            *yi = s;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0u32; self.n + 1];
        for &c in &self.col {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col = vec![0u32; self.nnz()];
        let mut val = vec![0.0; self.nnz()];
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for k in 0..c.len() {
                let dst = &mut next[c[k] as usize];
                col[*dst as usize] = i as u32;
                val[*dst as usize] = v[k];
                *dst += 1;
            }
        }
        Self::with_diag(self.n, counts, col, val)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let t = self.transpose();
        t.col == self.col && t.val.iter().zip(&self.val).all(|(a, b)| (a - b).abs() <= tol * a.abs().max(b.abs()))
    }

    /// Rows and columns kept by `keep`, renumbered in order. Entries in removed
    /// columns are returned per kept row as `(old column, value)`.
    pub fn restrict(&self, keep: &[bool]) -> (CsrMatrix, Vec<u32>, Vec<Vec<(u32, f64)>>) {
        let mut new_of = vec![u32::MAX; self.n];
        let mut old = Vec::new();
        for i in 0..self.n {
            if keep[i] {
                new_of[i] = old.len() as u32;
                old.push(i as u32);
            }
        }
        let mut rows = Vec::with_capacity(old.len());
        let mut cut = Vec::with_capacity(old.len());
        for &i in &old {
            let (c, v) = self.row(i as usize);
            let mut r = Vec::with_capacity(c.len());
            let mut x = Vec::new();
            for k in 0..c.len() {
                match new_of[c[k] as usize] {
                    u32::MAX => x.push((c[k], v[k])),
                    j => r.push((j, v[k])),
                }
            }
            rows.push(r);
            cut.push(x);
        }
        (CsrMatrix::from_rows(rows), old, cut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual target `|b - Mx| / |b|`.
    pub tol: f64,
    /// Iteration cap; default `50 sqrt(n) + 1000`.
    pub max_iter: Option<usize>,
    /// SSOR relaxation factor.
    pub omega: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: None, omega: 1.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: f64,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Cg,
    Bicgstab,
}

struct Ssor<'a> {
    a: &'a CsrMatrix,
    omega: f64,
    inv_diag: Vec<f64>,
}

impl<'a> Ssor<'a> {
    fn new(a: &'a CsrMatrix, omega: f64) -> Self {
        let inv_diag = (0..a.n).map(|i| 1.0 / a.diag(i)).collect();
        Ssor { a, omega, inv_diag }
    }

    /// `z = M^{-1} r` for `M = (D/w + L) (D/w)^{-1} (D/w + U) w / (2 - w)`.
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let a = self.a;
        let w = self.omega;
        for i in 0..a.n {
            let (c, v) = a.row(i);
            let mut s = r[i];
            for k in 0..c.len() {
                let j = c[k] as usize;
                if j >= i {
                    break;
                }
                s -= v[k] * z[j];
            }
            z[i] = s * w * self.inv_diag[i];
        }
        let scale = (2.0 - w) / w;
        for i in 0..a.n {
            z[i] *= scale / (w * self.inv_diag[i]);
        }
        for i in (0..a.n).rev() {
            let (c, v) = a.row(i);
            let mut s = z[i];
            for k in (0..c.len()).rev() {
                let j = c[k] as usize;
                if j <= i {
                    break;
                }
                s -= v[k] * z[j];
            }
            z[i] = s * w * self.inv_diag[i];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    a.mul(x, r);
    for i in 0..r.len() {
        r[i] = b[i] - r[i];
    }
    norm(r)
}

fn cap(n: usize, opts: &SolverOptions) -> usize {
    opts.max_iter.unwrap_or(50 * (n as f64).sqrt() as usize + 1000)
}

/// Solves `A x = b` starting from `x`. Symmetric systems use SSOR-preconditioned CG,
/// others SSOR-preconditioned BiCGSTAB.
pub fn solve(a: &CsrMatrix, b: &[f64], x: &mut [f64], symmetric: bool, opts: &SolverOptions) -> Result<SolveStats, OperatorError> {
    let t0 = Instant::now();
    let bn = norm(b);
    let method = if symmetric { SolveMethod::Cg } else { SolveMethod::Bicgstab };
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0, wall_time: t0.elapsed().as_secs_f64(), method });
    }
    let (iterations, rel) = if symmetric { pcg(a, b, x, bn, opts)? } else { bicgstab(a, b, x, bn, opts)? };
    Ok(SolveStats { iterations, residual: rel, wall_time: t0.elapsed().as_secs_f64(), method })
}

fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], bn: f64, opts: &SolverOptions) -> Result<(usize, f64), OperatorError> {
    let n = a.n;
    let pre = Ssor::new(a, opts.omega);
    let mut r = vec![0.0; n];
    let rel = residual(a, b, x, &mut r) / bn;
    if rel <= opts.tol {
        return Ok((0, rel));
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let max = cap(n, opts);
    let mut it = 0;
    while it < max {
        it += 1;
        a.mul(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let est = norm(&r) / bn;
        if est <= opts.tol {
            let rel = residual(a, b, x, &mut r) / bn;
            if rel <= opts.tol {
                return Ok((it, rel));
            }
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = residual(a, b, x, &mut r) / bn;
    if rel <= opts.tol {
        return Ok((it, rel));
    }
    Err(OperatorError::NoConvergence { iterations: it, residual: rel })
}

fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], bn: f64, opts: &SolverOptions) -> Result<(usize, f64), OperatorError> {
    let n = a.n;
    let pre = Ssor::new(a, opts.omega);
    let mut r = vec![0.0; n];
    let rel = residual(a, b, x, &mut r) / bn;
    if rel <= opts.tol {
        return Ok((0, rel));
    }
    let max = cap(n, opts);
    let mut it = 0;
    // Restart on breakdown with a fresh shadow residual.
    'outer: while it < max {
        let r0 = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut w = 1.0;
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut ph = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut sh = vec![0.0; n];
        let mut t = vec![0.0; n];
        while it < max {
            it += 1;
            let rho_new = dot(&r0, &r);
            if rho_new.abs() < 1e-300 || w == 0.0 {
                residual(a, b, x, &mut r);
                continue 'outer;
            }
            let beta = (rho_new / rho) * (alpha / w);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - w * v[i]);
            }
            pre.apply(&p, &mut ph);
            a.mul(&ph, &mut v);
            let r0v = dot(&r0, &v);
            if r0v.abs() < 1e-300 {
                residual(a, b, x, &mut r);
                continue 'outer;
            }
            alpha = rho / r0v;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) / bn <= opts.tol {
                for i in 0..n {
                    x[i] += alpha * ph[i];
                }
                let rel = residual(a, b, x, &mut r) / bn;
                if rel <= opts.tol {
                    return Ok((it, rel));
                }
                continue 'outer;
            }
            pre.apply(&s, &mut sh);
            a.mul(&sh, &mut t);
            let tt = dot(&t, &t);
            w = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * ph[i] + w * sh[i];
                r[i] = s[i] - w * t[i];
            }
            let est = norm(&r) / bn;
            if est <= opts.tol {
                let rel = residual(a, b, x, &mut r) / bn;
                if rel <= opts.tol {
                    return Ok((it, rel));
                }
                continue 'outer;
            }
        }
    }
    let rel = residual(a, b, x, &mut r) / bn;
    if rel <= opts.tol {
        return Ok((it, rel));
    }
    Err(OperatorError::NoConvergence { iterations: it, residual: rel })
}
