//! Simplicial finite elements for diffusion problems on curved domains.
//!
//! The curved physical domain is reached through a coordinate
//! transformation from a polyhedral parametric domain. The problem is
//! pulled back along the transformation, discretized with straight
//! Lagrange elements on the parametric triangulation and solved there.

pub mod analysis;
pub mod assembly;
pub mod elements;
pub mod geometry;
pub mod interp;
pub mod mesh;
pub mod solver;

pub use analysis::{ConvergenceReport, ExperimentConfig};
pub use geometry::builtin::Geometry;
pub use interp::GlobalLagrangeSpace;
pub use mesh::{Point, Simplex, SimplicialComplex};

use thiserror::Error;

/// Any error raised along the solution pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Element(#[from] elements::ElementError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Interp(#[from] interp::InterpError),
    #[error(transparent)]
    Assembly(#[from] assembly::AssemblyError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}
