use serde::{Deserialize, Serialize};

use crate::fit::{power_fit, LinearFit};
use crate::geometry::{dist, GridDomain, Point};

use super::{DiscreteField, OperatorError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorHolderFit {
    /// Fitted exponent of `osc(u, B(X0, rho))` against `rho / R`; `None` when degenerate.
    pub exponent: Option<f64>,
    /// `max osc(rho) / ((rho/R)^exponent * (avg over 2B of u^2)^(1/2))`.
    pub constant: Option<f64>,
    pub r2: Option<f64>,
    pub degenerate: bool,
    pub radii: Vec<f64>,
    pub oscillations: Vec<f64>,
}

/// Oscillation decay of `u` on sub-balls of `B(center, radius)`. The center snaps to the
/// nearest cell center and radii are whole multiples of `h` close to `radius / 2^k`, so the
/// sampled sets are exactly similar for linear fields.
pub fn estimate_interior_holder(domain: &GridDomain, u: &DiscreteField, center: &Point, radius: f64) -> Result<InteriorHolderFit> {
    let h = domain.h();
    let (delta, _) = domain.boundary_distance(center);
    if !domain.contains(center) || delta < 2.0 * radius {
        return Err(OperatorError::ScaleOutOfRange(format!(
            "ball of radius {radius} doubled leaves the domain (distance {delta:.4})"
        )));
    }
    let c0 = domain.nearest_unknown(center).map(|c| domain.cell_center(c)).unwrap_or(*center);
    let mut cells: Vec<(f64, f64)> = (0..domain.n_unknowns())
        .filter_map(|c| {
            let d = dist(&domain.cell_center(c), &c0);
            (d < 2.0 * radius).then_some((d, u.cells[c]))
        })
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let l2 = (cells.iter().map(|c| c.1 * c.1).sum::<f64>() / cells.len().max(1) as f64).sqrt();
    let mut radii = Vec::new();
    let mut oscs = Vec::new();
    let mut k = 0;
    loop {
        let m = (radius / 2f64.powi(k) / h).round();
        if m < 2.0 {
            break;
        }
        k += 1;
        let rho = m * h;
        if radii.last().is_some_and(|&r: &f64| rho >= r) {
            continue;
        }
        let within = cells.iter().take_while(|c| c.0 <= rho * (1.0 + 1e-9));
        let (lo, hi) = within.fold((f64::INFINITY, f64::NEG_INFINITY), |a, c| (a.0.min(c.1), a.1.max(c.1)));
        radii.push(rho);
        oscs.push(hi - lo);
    }
    let degenerate = oscs.first().map_or(true, |&o| o <= 1e-14 * l2.max(1e-300));
    if degenerate || radii.len() < 2 {
        return Ok(InteriorHolderFit { exponent: None, constant: None, r2: None, degenerate: true, radii, oscillations: oscs });
    }
    let scaled: Vec<f64> = radii.iter().map(|r| r / radius).collect();
    let fit = power_fit(&scaled, &oscs);
    let (exponent, r2) = match fit {
        Some(LinearFit { slope, r2, .. }) => (Some(slope), Some(r2)),
        None => (None, None),
    };
    let constant = exponent.map(|e| {
        scaled.iter().zip(&oscs).map(|(s, o)| o / (s.powf(e) * l2)).fold(0.0, f64::max)
    });
    Ok(InteriorHolderFit { exponent, constant, r2, degenerate: false, radii, oscillations: oscs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryHolderFit {
    /// Fitted exponent of `sup_{B(x,rho)} u` against the reach of the maximizer; `None` when `u` vanishes there.
    pub exponent: Option<f64>,
    /// `max sup(rho) / (rho / r_max)^exponent`.
    pub constant: Option<f64>,
    pub r2: Option<f64>,
    pub undefined: bool,
    pub scales: Vec<f64>,
    /// Distance from `x` of the cell attaining each supremum.
    pub reach: Vec<f64>,
    pub sups: Vec<f64>,
}

/// Vanishing rate of a non-negative solution near the boundary point `x`.
/// `x` may be any point of the closed boundary, such as a corner.
pub fn estimate_boundary_holder(domain: &GridDomain, u: &DiscreteField, x: &Point, scales: &[f64]) -> Result<BoundaryHolderFit> {
    let rmax = scales.iter().copied().fold(0.0, f64::max);
    if scales.is_empty() || scales.iter().any(|&r| !(r > 0.0)) {
        return Err(OperatorError::ScaleOutOfRange("scales must be positive".into()));
    }
    for (i, c) in domain.face_centroids().iter().enumerate() {
        if dist(c, x) < 2.0 * rmax && u.faces[i].abs() > 1e-12 {
            return Err(OperatorError::NonvanishingData(format!("face {i} at {c:?} carries {}", u.faces[i])));
        }
    }
    let mut sorted: Vec<f64> = scales.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut near: Vec<(f64, f64)> = (0..domain.n_unknowns())
        .filter_map(|c| {
            let d = dist(&domain.cell_center(c), x);
            (d < rmax).then_some((d, u.cells[c]))
        })
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Each scale is represented by the distance of its maximizing cell.
    let mut sups = Vec::with_capacity(sorted.len());
    let mut reach = Vec::with_capacity(sorted.len());
    for &r in &sorted {
        let mut best = (0.0, 0.0);
        for &(d, v) in near.iter().take_while(|c| c.0 < r) {
            if v > best.1 {
                best = (d, v);
            }
        }
        reach.push(best.0);
        sups.push(best.1);
    }
    if sups.iter().all(|&s| s <= 0.0) {
        return Ok(BoundaryHolderFit {
            exponent: None,
            constant: None,
            r2: None,
            undefined: true,
            scales: sorted,
            reach,
            sups,
        });
    }
    let fit = power_fit(&reach, &sups);
    let exponent = fit.map(|f| f.slope);
    let constant =
        exponent.map(|e| reach.iter().zip(&sups).filter(|(r, _)| **r > 0.0).map(|(r, s)| s / (r / rmax).powf(e)).fold(0.0, f64::max));
    Ok(BoundaryHolderFit { exponent, constant, r2: fit.map(|f| f.r2), undefined: false, scales: sorted, reach, sups })
}
