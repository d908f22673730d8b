pub mod graph;
pub mod linalg;
pub mod nn;
pub mod metrics;
pub mod federation;
pub mod theory;
pub mod experiment;
