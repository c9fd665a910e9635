//! Fixtures shared by the pipeline benchmarks.

use tfem_core::analysis::{solve_level, ExperimentConfig};
use tfem_core::assembly::{apply_dirichlet, ReducedSystem};
use tfem_core::geometry::builtin::Geometry;
use tfem_core::interp::GlobalLagrangeSpace;
use tfem_core::SimplicialComplex;

pub fn refined(geometry: Geometry, level: usize) -> SimplicialComplex {
    geometry
        .mesh()
        .refine_times(level)
        .expect("refinement of a built-in mesh")
}

pub fn space(mesh: &SimplicialComplex, degree: usize) -> GlobalLagrangeSpace<'_> {
    GlobalLagrangeSpace::conforming(mesh, degree).expect("conforming space")
}

/// The reduced system of one experiment level, ready for the solver.
pub fn reduced_system(geometry: Geometry, degree: usize, level: usize) -> ReducedSystem {
    let sol =
        solve_level(&ExperimentConfig::new(geometry, degree, level), level).expect("level solve");
    apply_dirichlet(&sol.system).expect("dirichlet elimination")
}
