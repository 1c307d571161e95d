pub mod capacity;
pub mod fit;
pub mod geometry;
pub mod growth;
pub mod measure;
pub mod norms;
pub mod operator;
