//! Shared fixtures for the benchmarks.

use emlab_core::geometry::{build_domain, dist, DomainSpec, GridDomain};

pub fn cube(h: f64) -> GridDomain {
    build_domain(&DomainSpec::unit_cube(h)).expect("cube builds")
}

/// `|y - y0|^alpha` with `y0` the face centroid nearest the bottom-face center.
pub fn power_datum(d: &GridDomain, alpha: f64) -> Vec<f64> {
    let y0 = d.face_centroid(d.nearest_face(&[0.5, 0.5, 0.0]));
    d.face_centroids().iter().map(|y| dist(y, &y0).powf(alpha)).collect()
}
