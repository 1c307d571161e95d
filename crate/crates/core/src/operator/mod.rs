//! Cell-centered finite volumes for `-div(A grad u) = 0` with Dirichlet face data.

pub mod coeff;
pub mod holder;
pub mod sparse;

use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryError, GridDomain};

pub use coeff::{Coefficient, CoefficientField};
pub use holder::{estimate_boundary_holder, estimate_interior_holder, BoundaryHolderFit, InteriorHolderFit};
pub use sparse::{CsrMatrix, SolveMethod, SolveStats, SolverOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("ellipticity violation: {0}")]
    Ellipticity(String),
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("boundary data has {got} entries, expected {expected}")]
    DataLength { got: usize, expected: usize },
    #[error("boundary data does not vanish near the base point: {0}")]
    NonvanishingData(String),
    #[error("scale out of range: {0}")]
    ScaleOutOfRange(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, OperatorError>;

/// Treatment of the outer truncation box of an exterior domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShellCondition {
    /// Robin condition matched to the decay `|X - c|^(2-d)` of the fundamental solution.
    #[default]
    Radiating,
    /// Zero Dirichlet data on the shell.
    Absorbing,
}

/// Values on interior cells (by unknown) and on boundary faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    pub cells: Vec<f64>,
    pub faces: Vec<f64>,
}

impl DiscreteField {
    pub fn is_finite(&self) -> bool {
        self.cells.iter().chain(&self.faces).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub field: DiscreteField,
    pub stats: SolveStats,
}

/// Assembled system `M u = B f`: `M` acts on unknowns, `B` couples each boundary face
/// to its owning cell. Rows of `[M | -B]` sum to zero away from the shell.
#[derive(Debug)]
pub struct DiscreteOperator<'a> {
    pub domain: &'a GridDomain,
    pub coeff: CoefficientField,
    pub shell: ShellCondition,
    pub matrix: CsrMatrix,
    /// `B` entry of each boundary face.
    pub face_coupling: Vec<f64>,
    /// Unknown owning each boundary face.
    pub face_owner: Vec<u32>,
    pub symmetric: bool,
    pub solver: SolverOptions,
    transpose: std::sync::OnceLock<CsrMatrix>,
}

pub fn assemble<'a>(domain: &'a GridDomain, coeff: &CoefficientField) -> Result<DiscreteOperator<'a>> {
    assemble_with(domain, coeff, ShellCondition::default())
}

pub fn assemble_with<'a>(domain: &'a GridDomain, coeff: &CoefficientField, shell: ShellCondition) -> Result<DiscreteOperator<'a>> {
    coeff.check_ellipticity(domain)?;
    let lat = &domain.lattice;
    let dim = lat.dim;
    let h = lat.h;
    let h2 = h * h;
    let n = domain.n_unknowns();
    let face_pos: std::collections::HashMap<(u32, u8, i8), usize> =
        domain.faces.iter().enumerate().map(|(i, f)| ((f.cell, f.axis, f.side), i)).collect();
    let mut face_coupling = vec![0.0; domain.faces.len()];
    let mut face_owner = vec![0u32; domain.faces.len()];
    let mut rows = Vec::with_capacity(n);
    for u in 0..n {
        let cell = domain.cells[u] as usize;
        let x = lat.center(cell);
        let b = coeff.drift(&x);
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(2 * dim + 1);
        let mut diag = 0.0;
        for axis in 0..dim {
            let a_here = coeff.axis_conductivity(&x, axis);
            for side in [-1i8, 1] {
                let conv = side as f64 * b[axis] / (2.0 * h);
                match lat.neighbor(cell, axis, side) {
                    Some(nb) if domain.interior[nb] => {
                        let a_there = coeff.axis_conductivity(&lat.center(nb), axis);
                        let af = 2.0 * a_here * a_there / (a_here + a_there);
                        diag += af / h2;
                        row.push((domain.unknown_of[nb], -(af / h2 + conv)));
                    }
                    Some(_) => {
                        let kappa = a_here / h2 + conv;
                        let f = face_pos[&(cell as u32, axis as u8, side)];
                        diag += a_here / h2 + kappa;
                        face_coupling[f] = 2.0 * kappa;
                        face_owner[f] = u as u32;
                    }
                    None if domain.truncation.is_none() => {
                        let kappa = a_here / h2 + conv;
                        let f = face_pos[&(cell as u32, axis as u8, side)];
                        diag += a_here / h2 + kappa;
                        face_coupling[f] = 2.0 * kappa;
                        face_owner[f] = u as u32;
                    }
                    None => {
                        let kappa = a_here / h2 + conv;
                        // Ghost value `gamma * u`.
                        let gamma = match shell {
                            ShellCondition::Absorbing => -1.0,
                            ShellCondition::Radiating => {
                                let t = domain.truncation.as_ref().unwrap();
                                let mut xf = x;
                                xf[axis] += 0.5 * side as f64 * h;
                                let mut r2 = 0.0;
                                for k in 0..dim {
                                    r2 += (xf[k] - t.center[k]).powi(2);
                                }
                                let g = (dim as f64 - 2.0) * side as f64 * (xf[axis] - t.center[axis]) / r2;
                                (1.0 - 0.5 * h * g) / (1.0 + 0.5 * h * g)
                            }
                        };
                        diag += a_here / h2 - kappa * gamma;
                    }
                }
            }
        }
        row.push((u as u32, diag));
        rows.push(row);
    }
    let matrix = CsrMatrix::from_rows(rows);
    Ok(DiscreteOperator {
        domain,
        coeff: coeff.clone(),
        shell,
        matrix,
        face_coupling,
        face_owner,
        symmetric: coeff.is_symmetric(),
        solver: SolverOptions::default(),
        transpose: std::sync::OnceLock::new(),
    })
}

impl<'a> DiscreteOperator<'a> {
    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn n_unknowns(&self) -> usize {
        self.matrix.n
    }

    pub fn n_faces(&self) -> usize {
        self.face_coupling.len()
    }

    pub fn transposed(&self) -> &CsrMatrix {
        self.transpose.get_or_init(|| self.matrix.transpose())
    }

    /// `B f`.
    pub fn boundary_rhs(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let mut b = vec![0.0; self.n_unknowns()];
        for (i, &v) in f.iter().enumerate() {
            b[self.face_owner[i] as usize] += self.face_coupling[i] * v;
        }
        Ok(b)
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_faces() {
            return Err(OperatorError::DataLength { got: f.len(), expected: self.n_faces() });
        }
        Ok(())
    }

    pub fn solve_rhs(&self, b: &[f64], x: &mut [f64]) -> Result<SolveStats> {
        self.solve_rhs_with(b, x, &self.solver)
    }

    pub fn solve_rhs_with(&self, b: &[f64], x: &mut [f64], opts: &SolverOptions) -> Result<SolveStats> {
        sparse::solve(&self.matrix, b, x, self.symmetric, opts)
    }

    /// Solves `M^T g = b`.
    pub fn solve_transposed(&self, b: &[f64], x: &mut [f64]) -> Result<SolveStats> {
        self.solve_transposed_with(b, x, &self.solver)
    }

    pub fn solve_transposed_with(&self, b: &[f64], x: &mut [f64], opts: &SolverOptions) -> Result<SolveStats> {
        if self.symmetric {
            sparse::solve(&self.matrix, b, x, true, opts)
        } else {
            sparse::solve(self.transposed(), b, x, false, opts)
        }
    }

    /// Solution with boundary data `f` (one value per boundary face, shell data zero).
    pub fn solve_dirichlet(&self, f: &[f64]) -> Result<Solution> {
        self.solve_dirichlet_with(f, &self.solver)
    }

    pub fn solve_dirichlet_with(&self, f: &[f64], opts: &SolverOptions) -> Result<Solution> {
        let b = self.boundary_rhs(f)?;
        let start = if self.domain.truncation.is_none() && !f.is_empty() {
            f.iter().sum::<f64>() / f.len() as f64
        } else {
            0.0
        };
        let mut x = vec![start; self.n_unknowns()];
        let stats = self.solve_rhs_with(&b, &mut x, opts)?;
        Ok(Solution { field: DiscreteField { cells: x, faces: f.to_vec() }, stats })
    }

    /// Largest `|row sum of [M | -B]|` relative to the diagonal over rows without shell faces.
    pub fn row_sum_defect(&self) -> f64 {
        let mut sums: Vec<f64> = (0..self.n_unknowns()).map(|i| self.matrix.row(i).1.iter().sum()).collect();
        for (f, &c) in self.face_coupling.iter().enumerate() {
            sums[self.face_owner[f] as usize] -= c;
        }
        let on_shell = self.shell_rows();
        sums.iter()
            .enumerate()
            .filter(|(i, _)| !on_shell[*i])
            .map(|(i, s)| s.abs() / self.matrix.diag(i))
            .fold(0.0, f64::max)
    }

    fn shell_rows(&self) -> Vec<bool> {
        let mut on = vec![false; self.n_unknowns()];
        for f in &self.domain.shell {
            on[self.domain.unknown_of[f.cell as usize] as usize] = true;
        }
        on
    }

    /// Whether off-diagonals are non-positive, couplings non-negative and rows weakly dominant.
    pub fn is_monotone(&self) -> bool {
        let m = &self.matrix;
        let mut ok = self.face_coupling.iter().all(|&c| c >= 0.0);
        for i in 0..m.n {
            let (c, v) = m.row(i);
            let mut off = 0.0;
            for k in 0..c.len() {
                if c[k] as usize != i {
                    ok &= v[k] <= 0.0;
                    off -= v[k];
                }
            }
            ok &= m.diag(i) >= off * (1.0 - 1e-12);
        }
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, DomainSpec};
    use proptest::prelude::*;

    fn cube(h: f64) -> GridDomain {
        build_domain(&DomainSpec::unit_cube(h)).unwrap()
    }

    #[test]
    fn identity_stencil() {
        let d = cube(0.25);
        let op = assemble(&d, &CoefficientField::identity()).unwrap();
        let h2 = 0.0625;
        let u = d.find_cell(&[0.375, 0.375, 0.375]).unwrap();
        let (c, v) = op.matrix.row(u);
        assert_eq!(c.len(), 7);
        for k in 0..7 {
            if c[k] as usize == u {
                assert!((v[k] - 6.0 / h2).abs() < 1e-9);
            } else {
                assert!((v[k] + 1.0 / h2).abs() < 1e-9);
            }
        }
        assert!(op.symmetric && op.matrix.is_symmetric(1e-14));
        assert!(op.row_sum_defect() < 1e-14);
        assert!(op.is_monotone());
    }

    #[test]
    fn checkerboard_harmonic_conductance() {
        let d = cube(0.125);
        let op = assemble(&d, &CoefficientField::checkerboard(10.0, 0.25)).unwrap();
        let a = d.find_cell(&[0.1875, 0.0625, 0.0625]).unwrap();
        let b = d.find_cell(&[0.3125, 0.0625, 0.0625]).unwrap();
        let (c, v) = op.matrix.row(a);
        let k = c.iter().position(|&j| j as usize == b).unwrap();
        let expect = 2.0 * 10.0 / 11.0 / (0.125 * 0.125);
        assert!((v[k] + expect).abs() < 1e-9, "{} vs {}", v[k], expect);
        assert!(op.row_sum_defect() < 1e-14);
    }

    #[test]
    fn constants_and_linears_are_reproduced() {
        let d = cube(1.0 / 8.0);
        let op = assemble(&d, &CoefficientField::identity()).unwrap();
        let f = vec![3.25; d.faces.len()];
        let s = op.solve_dirichlet(&f).unwrap();
        assert!(s.field.cells.iter().all(|&v| v == 3.25));
        let f: Vec<f64> = d.face_centroids().iter().map(|c| c[0]).collect();
        let s = op.with_solver(SolverOptions { tol: 1e-13, ..Default::default() }).solve_dirichlet(&f).unwrap();
        for u in 0..d.n_unknowns() {
            assert!((s.field.cells[u] - d.cell_center(u)[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_face_indicator_is_between_bounds() {
        let d = cube(1.0 / 8.0);
        let op = assemble(&d, &CoefficientField::identity()).unwrap();
        let f: Vec<f64> = d.faces.iter().map(|f| if f.axis == 2 && f.side == -1 { 1.0 } else { 0.0 }).collect();
        let s = op.solve_dirichlet(&f).unwrap();
        assert!(s.field.cells.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(s.stats.residual <= 1e-10);
    }

    #[test]
    fn rotation_is_monotone_and_solvable() {
        let d = build_domain(&DomainSpec::unit_square(1.0 / 32.0)).unwrap();
        let op = assemble(&d, &CoefficientField::rotation(2.0, None)).unwrap();
        assert!(!op.symmetric);
        assert!(op.is_monotone());
        assert!(op.row_sum_defect() < 1e-12);
        let f: Vec<f64> = d.face_centroids().iter().map(|c| (3.0 * c[0]).sin() + c[1]).collect();
        let s = op.solve_dirichlet(&f).unwrap();
        let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
        assert!(s.field.cells.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
        assert_eq!(s.stats.method, SolveMethod::Bicgstab);
    }

    #[test]
    fn exterior_shell_absorbs() {
        let d = build_domain(&DomainSpec::exterior_of_ball(1.0, 4.0, 0.5)).unwrap();
        for shell in [ShellCondition::Radiating, ShellCondition::Absorbing] {
            let op = assemble_with(&d, &CoefficientField::identity(), shell).unwrap();
            assert!(op.is_monotone());
            let s = op.solve_dirichlet(&vec![1.0; d.faces.len()]).unwrap();
            assert!(s.field.cells.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn length_mismatch() {
        let d = cube(0.25);
        let op = assemble(&d, &CoefficientField::identity()).unwrap();
        assert!(matches!(op.solve_dirichlet(&[1.0]), Err(OperatorError::DataLength { .. })));
    }

    #[test]
    fn deterministic_bits() {
        let d = build_domain(&DomainSpec::l_shape(1.0 / 16.0)).unwrap();
        let op = assemble(&d, &CoefficientField::checkerboard(10.0, 0.25)).unwrap();
        let f: Vec<f64> = d.face_centroids().iter().map(|c| c[0] * c[1]).collect();
        let a = op.solve_dirichlet(&f).unwrap().field;
        let b = op.solve_dirichlet(&f).unwrap().field;
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn maximum_principle(kappa in 0.05f64..20.0, amp in 0.0f64..3.0, seed in 0u64..1000, family in 0usize..3) {
            let d = build_domain(&DomainSpec::l_shape(1.0 / 8.0)).unwrap();
            let coeff = match family {
                0 => CoefficientField::checkerboard(kappa, 0.25),
                1 => CoefficientField::diagonal(amp),
                _ => CoefficientField::rotation(amp, None),
            };
            let op = assemble(&d, &coeff).unwrap();
            let f: Vec<f64> = (0..d.faces.len()).map(|i| (((i as u64 + 1) * (seed + 7)) % 13) as f64 - 6.0).collect();
            let s = op.solve_dirichlet(&f).unwrap();
            let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.field.cells.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
            prop_assert!(op.row_sum_defect() < 1e-12);
        }
    }
}
