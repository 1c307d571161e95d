//! Cell-union domains on regular lattices and the geometric probes used on them.

pub mod domain;
pub mod lattice;
pub mod probes;
pub mod whitney;

pub use domain::{
    build_domain, check_adr, distance_field, read_mask, surface_ball_measure, write_mask, AdrReport, DomainSpec,
    GridDomain, Shape, Truncation,
};
pub use lattice::{dist, dist2, Face, Lattice, Point};
pub use probes::{
    find_carrot_path, find_corkscrew, find_harnack_chain, CarrotPath, ChainBall, Corkscrew, HarnackChain,
    HarnackProbe,
};
pub use whitney::{whitney_decompose, Focus, WhitneyCheck, WhitneyCube, WhitneyDecomposition, WhitneyOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid domain spec: {0}")]
    SpecParse(String),
    #[error("domain has no interior cells")]
    EmptyInterior,
    #[error("{point:?} is not a boundary face centroid")]
    NotABoundaryPoint { point: Point },
    #[error("{point:?} is not an interior point")]
    NotInterior { point: Point },
    #[error("scale out of range: {0}")]
    ScaleOutOfRange(String),
    #[error("no interior cell in the search ball")]
    NoInteriorPoint,
    #[error("points lie in different components")]
    Disconnected,
    #[error("target not reachable from the boundary point")]
    Unreachable,
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;
