use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{GridDomain, Point};

use super::OperatorError;

fn default_cell() -> f64 {
    0.25
}

/// Built-in coefficient families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Coefficient {
    Identity,
    /// `a_k(X) = 1 + amplitude * (1 + sin(2 pi (k+1) X_k)) / 2`.
    Diagonal { amplitude: f64 },
    /// Scalar `kappa` on odd checkerboard blocks of side `cell`, 1 elsewhere.
    Checkerboard {
        kappa: f64,
        #[serde(default = "default_cell")]
        cell: f64,
    },
    /// `I + skew * psi(X) J` with `J` the planar rotation generator in the first two axes
    /// and `psi(X) = sin(pi X_0) sin(pi X_1)`.
    Rotation { skew: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    #[serde(flatten)]
    pub family: Coefficient,
    /// Ellipticity bound. Missing means the family's natural bound.
    #[serde(default)]
    pub lambda: Option<f64>,
}

pub type Matrix3 = [[f64; 3]; 3];

impl Default for CoefficientField {
    fn default() -> Self {
        Self::identity()
    }
}

impl CoefficientField {
    pub fn identity() -> Self {
        CoefficientField { family: Coefficient::Identity, lambda: None }
    }

    pub fn checkerboard(kappa: f64, cell: f64) -> Self {
        CoefficientField { family: Coefficient::Checkerboard { kappa, cell }, lambda: None }
    }

    pub fn diagonal(amplitude: f64) -> Self {
        CoefficientField { family: Coefficient::Diagonal { amplitude }, lambda: None }
    }

    pub fn rotation(skew: f64, lambda: Option<f64>) -> Self {
        CoefficientField { family: Coefficient::Rotation { skew }, lambda }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self.family, Coefficient::Rotation { skew } if skew != 0.0)
    }

    pub fn label(&self) -> String {
        match &self.family {
            Coefficient::Identity => "identity".into(),
            Coefficient::Diagonal { amplitude } => format!("diagonal(amplitude={amplitude})"),
            Coefficient::Checkerboard { kappa, cell } => format!("checkerboard(kappa={kappa},cell={cell})"),
            Coefficient::Rotation { skew } => format!("rotation(skew={skew})"),
        }
    }

    /// Diagonal of the symmetric part at `x`.
    pub fn axis_conductivity(&self, x: &Point, axis: usize) -> f64 {
        match &self.family {
            Coefficient::Identity | Coefficient::Rotation { .. } => 1.0,
            Coefficient::Diagonal { amplitude } => {
                1.0 + amplitude * 0.5 * (1.0 + (2.0 * PI * (axis as f64 + 1.0) * x[axis]).sin())
            }
            Coefficient::Checkerboard { kappa, cell } => {
                let s: i64 = x.iter().map(|v| (v / cell).floor() as i64).sum();
                if s.rem_euclid(2) == 1 {
                    *kappa
                } else {
                    1.0
                }
            }
        }
    }

    /// Skew amplitude field and its gradient.
    fn psi(x: &Point) -> (f64, [f64; 2]) {
        let (s0, c0) = (PI * x[0]).sin_cos();
        let (s1, c1) = (PI * x[1]).sin_cos();
        (s0 * s1, [PI * c0 * s1, PI * s0 * c1])
    }

    /// Divergence-free drift `b` with `div(A grad u) = div(sym grad u) + b . grad u`.
    pub fn drift(&self, x: &Point) -> [f64; 3] {
        match self.family {
            Coefficient::Rotation { skew } => {
                let (_, g) = Self::psi(x);
                [-skew * g[1], skew * g[0], 0.0]
            }
            _ => [0.0; 3],
        }
    }

    pub fn matrix(&self, x: &Point, dim: usize) -> Matrix3 {
        let mut a = [[0.0; 3]; 3];
        for (k, row) in a.iter_mut().enumerate().take(dim) {
            row[k] = self.axis_conductivity(x, k);
        }
        if let Coefficient::Rotation { skew } = self.family {
            let (p, _) = Self::psi(x);
            a[0][1] += skew * p;
            a[1][0] -= skew * p;
        }
        a
    }

    fn natural_lambda(&self) -> f64 {
        match self.family {
            Coefficient::Identity => 1.0,
            Coefficient::Diagonal { amplitude } => (1.0 + amplitude.max(0.0)).max(1.0 / (1.0 + amplitude.min(0.0))),
            Coefficient::Checkerboard { kappa, .. } => kappa.max(1.0 / kappa),
            Coefficient::Rotation { skew } => (1.0 + skew * skew).sqrt(),
        }
    }

    /// Ellipticity bound in force.
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| self.natural_lambda())
    }

    /// Checks `A xi . xi >= 1/L |xi|^2` and `|A xi . eta| <= L` at every sampled cell center,
    /// then monotonicity of the discrete drift.
    pub fn check_ellipticity(&self, domain: &GridDomain) -> Result<(), OperatorError> {
        match self.family {
            Coefficient::Diagonal { amplitude } if amplitude <= -1.0 => {
                return Err(OperatorError::Ellipticity(format!("diagonal amplitude {amplitude} <= -1")));
            }
            Coefficient::Checkerboard { kappa, cell } if !(kappa > 0.0 && cell > 0.0) => {
                return Err(OperatorError::Ellipticity(format!("checkerboard needs kappa, cell > 0, got {kappa}, {cell}")));
            }
            _ => {}
        }
        let lam = self.lambda();
        if !(lam >= 1.0) {
            return Err(OperatorError::Ellipticity(format!("lambda {lam} < 1")));
        }
        let dim = domain.dim();
        let h = domain.h();
        let n = domain.n_unknowns();
        let stride = (n / 4096).max(1);
        for u in (0..n).step_by(stride) {
            let x = domain.cell_center(u);
            let a = self.matrix(&x, dim);
            let (lo, hi) = ellipticity_bounds(&a, dim);
            if lo < 1.0 / lam * (1.0 - 1e-12) || hi > lam * (1.0 + 1e-12) {
                return Err(OperatorError::Ellipticity(format!(
                    "at {x:?}: coercivity {lo:.4}, bound {hi:.4}, lambda {lam}"
                )));
            }
        }
        for u in 0..n {
            let x = domain.cell_center(u);
            let b = self.drift(&x);
            for k in 0..dim {
                let a = self.axis_conductivity(&x, k);
                if b[k].abs() * h > 2.0 * a {
                    return Err(OperatorError::Ellipticity(format!(
                        "drift {:.3} too strong for a monotone stencil at h = {h}",
                        b[k]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Smallest eigenvalue of the symmetric part and the spectral norm of `a`.
pub fn ellipticity_bounds(a: &Matrix3, dim: usize) -> (f64, f64) {
    let mut s = [[0.0; 3]; 3];
    let mut ata = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            s[i][j] = 0.5 * (a[i][j] + a[j][i]);
            ata[i][j] = (0..dim).map(|k| a[k][i] * a[k][j]).sum();
        }
    }
    let es = sym_eigenvalues(s, dim);
    let ea = sym_eigenvalues(ata, dim);
    let lo = es.iter().take(dim).copied().fold(f64::INFINITY, f64::min);
    let hi = ea.iter().take(dim).copied().fold(0.0, f64::max).sqrt();
    (lo, hi)
}

/// Cyclic Jacobi eigenvalues of a small symmetric matrix.
fn sym_eigenvalues(mut m: Matrix3, dim: usize) -> [f64; 3] {
    for _ in 0..50 {
        let mut off = 0.0;
        for p in 0..dim {
            for q in p + 1..dim {
                off += m[p][q] * m[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..dim {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    [m[0][0], m[1][1], m[2][2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, DomainSpec};

    #[test]
    fn eigen_bounds() {
        let a = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let (lo, hi) = ellipticity_bounds(&a, 3);
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 5.0).abs() < 1e-12);
        let r = [[1.0, 0.5, 0.0], [-0.5, 1.0, 0.0], [0.0; 3]];
        let (lo, hi) = ellipticity_bounds(&r, 2);
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 1.25f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn json_forms() {
        let c: CoefficientField = serde_json::from_str(r#"{"family":"checkerboard","kappa":10}"#).unwrap();
        assert_eq!(c, CoefficientField::checkerboard(10.0, 0.25));
        let r: CoefficientField = serde_json::from_str(r#"{"family":"rotation","skew":0.5,"lambda":4}"#).unwrap();
        assert_eq!(r.lambda(), 4.0);
        assert!(!r.is_symmetric());
    }

    #[test]
    fn violations() {
        let d = build_domain(&DomainSpec::unit_cube(1.0 / 8.0)).unwrap();
        assert!(CoefficientField::identity().check_ellipticity(&d).is_ok());
        assert!(CoefficientField::checkerboard(100.0, 0.25).check_ellipticity(&d).is_ok());
        assert!(CoefficientField::rotation(0.5, None).check_ellipticity(&d).is_ok());
        let strong = CoefficientField::rotation(50.0, None);
        assert!(matches!(strong.check_ellipticity(&d), Err(OperatorError::Ellipticity(_))));
        let tight = CoefficientField::rotation(3.0, Some(2.0));
        assert!(matches!(tight.check_ellipticity(&d), Err(OperatorError::Ellipticity(_))));
        let small_lambda = CoefficientField { lambda: Some(5.0), ..CoefficientField::checkerboard(10.0, 0.25) };
        assert!(small_lambda.check_ellipticity(&d).is_err());
    }

    #[test]
    fn drift_is_divergence_free() {
        let c = CoefficientField::rotation(1.3, None);
        let e = 1e-5;
        for x in [[0.2, 0.7, 0.1], [0.55, 0.31, 0.9]] {
            let div: f64 = (0..2)
                .map(|k| {
                    let mut p = x;
                    let mut m = x;
                    p[k] += e;
                    m[k] -= e;
                    (c.drift(&p)[k] - c.drift(&m)[k]) / (2.0 * e)
                })
                .sum();
            assert!(div.abs() < 1e-6);
        }
    }
}
