//! A quick self-check of the pipeline: pullback identities plus a set of
//! structural invariants, each reported by name.

use nalgebra::DMatrix;

use super::{estimate_broken_bh_constant, pullback_identity, random_wave_pairs, ExactSolution};
use crate::assembly::{apply_dirichlet, assemble_stiffness, Coefficient, SparseSymmetricSystem};
use crate::elements::{dual_basis, LagrangeElement, SimplexGeometry};
use crate::geometry::builtin::Geometry;
use crate::geometry::{finite_difference_jacobian, ConstantTensor, ScalarField};
use crate::interp::{build_dof_assignment, scott_zhang_interpolate, GlobalLagrangeSpace};
use crate::mesh::SimplicialComplex;
use crate::solver::{cg_solve, dense_solve, CgOptions};
use crate::Error as PipelineError;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Settings for [`run_verification`].
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Mesh level for the pullback identities.
    pub level: usize,
    pub quad_degree: usize,
    pub pairs: usize,
    pub seed: u64,
    /// Highest level of the broken/conforming comparison.
    pub ratio_levels: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            level: 3,
            quad_degree: 12,
            pairs: 5,
            seed: 2024,
            ratio_levels: 3,
        }
    }
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String), PipelineError>) -> CheckOutcome {
    match f() {
        Ok((passed, detail)) => CheckOutcome::new(name, passed, detail),
        Err(e) => CheckOutcome::new(name, false, format!("error: {e}")),
    }
}

pub fn run_verification(opts: &VerifyOptions) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let pairs = random_wave_pairs(opts.seed, opts.pairs);
    for geometry in Geometry::ALL {
        out.push(check(&format!("pullback identity ({geometry})"), || {
            let mut worst = 0.0f64;
            for (u, v) in &pairs {
                worst = worst.max(
                    pullback_identity(geometry, opts.level, opts.quad_degree, u, v)?
                        .max_relative_error(),
                );
            }
            Ok((worst < 1e-4, format!("max relative error {worst:.3e}")))
        }));
        out.push(check(
            &format!("jacobian matches finite differences ({geometry})"),
            || {
                let map = geometry.map();
                let mesh = geometry.mesh().refine_times(2)?;
                let mut worst = 0.0f64;
                for c in 0..mesh.num_cells() {
                    let x = mesh.cell_centroid(c);
                    let j = map.jacobian(&x)?;
                    let fd = finite_difference_jacobian(map.as_ref(), &x, 1e-6)?;
                    worst = worst.max((j - &fd).amax() / fd.amax());
                }
                Ok((worst < 1e-6, format!("max relative deviation {worst:.3e}")))
            },
        ));
        out.push(check(
            &format!("exact gradient consistency ({geometry})"),
            || {
                let mesh = geometry.mesh().refine_times(2)?;
                let pts: Vec<Vec<f64>> = (0..mesh.num_cells())
                    .map(|c| mesh.cell_centroid(c))
                    .collect();
                let dev = ExactSolution::of_geometry(geometry).gradient_consistency(&pts, 1e-6)?;
                Ok((dev < 1e-6, format!("max relative deviation {dev:.3e}")))
            },
        ));
    }

    out.push(check("P1 reference stiffness", || {
        let m = SimplicialComplex::reference_triangle();
        let s = GlobalLagrangeSpace::conforming(&m, 1)?;
        let k = assemble_stiffness(
            &s,
            Coefficient::Exact(&ConstantTensor(DMatrix::identity(2, 2))),
            2,
        )?
        .matrix
        .to_dense();
        let expect =
            DMatrix::from_row_slice(3, 3, &[1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5]);
        let dev = (k - expect).amax();
        Ok((dev < 1e-13, format!("max deviation {dev:.3e}")))
    }));

    out.push(check("stiffness row sums vanish", || {
        let mut worst = 0.0f64;
        for geometry in Geometry::ALL {
            let mesh = geometry.mesh().refine_times(1)?;
            let a = geometry
                .physical_problem()
                .pull_back(geometry.map())
                .coefficient;
            for r in 1..=4 {
                let s = GlobalLagrangeSpace::conforming(&mesh, r)?;
                let k = assemble_stiffness(&s, Coefficient::Exact(a.as_ref()), 2 * r + 2)?.matrix;
                let mut y = vec![0.0; k.dim()];
                k.matvec(&vec![1.0; k.dim()], &mut y);
                worst = worst.max(y.iter().fold(0.0f64, |m, v| m.max(v.abs())) / k.max_abs());
            }
        }
        Ok((worst < 1e-10, format!("max relative row sum {worst:.3e}")))
    }));

    out.push(check("cg agrees with dense cholesky", || {
        let mut worst = 0.0f64;
        for (geometry, level, r) in [(Geometry::Annulus, 1, 1), (Geometry::BallQuadrant, 2, 2)] {
            let mesh = geometry.mesh().refine_times(level)?;
            let s = GlobalLagrangeSpace::conforming(&mesh, r)?;
            let a = geometry
                .physical_problem()
                .pull_back(geometry.map())
                .coefficient;
            let k = assemble_stiffness(&s, Coefficient::Exact(a.as_ref()), 2 * r + 2)?.matrix;
            let rhs: Vec<f64> = (0..k.dim())
                .map(|i| ((i % 7) as f64 - 3.0) * 0.1 + 1.0)
                .collect();
            let red = apply_dirichlet(&SparseSymmetricSystem {
                matrix: k,
                rhs,
                dirichlet: s.dirichlet_mask().to_vec(),
            })?;
            let (x, _) = cg_solve(&red.matrix, &red.rhs, &CgOptions::default())?;
            let (y, _) = dense_solve(&red.matrix, &red.rhs)?;
            let num: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let den: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
        Ok((worst < 1e-9, format!("max relative difference {worst:.3e}")))
    }));

    out.push(check(
        "basis partition of unity and dual biorthogonality",
        || {
            let t = SimplexGeometry::new(vec![vec![0.1, 0.0], vec![1.2, 0.3], vec![0.4, 0.8]]);
            let mut worst = 0.0f64;
            for r in 1..=4 {
                let e = LagrangeElement::new(2, r)?;
                let mut phi = vec![0.0; e.num_basis()];
                for lam in [[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.05, 0.9, 0.05]] {
                    e.values(&lam, &mut phi);
                    worst = worst.max((phi.iter().sum::<f64>() - 1.0).abs());
                }
                let dual = dual_basis(&t, &e)?;
                let m = e.normalized_mass()? * t.volume();
                let id = &dual.coeffs * m;
                worst = worst.max((id - DMatrix::identity(e.num_basis(), e.num_basis())).amax());
            }
            Ok((worst < 1e-10, format!("max deviation {worst:.3e}")))
        },
    ));

    out.push(check(
        "scott-zhang preserves polynomials and zero boundary values",
        || {
            let mesh = Geometry::Annulus.mesh().refine_times(2)?;
            let exact = ExactSolution::of_geometry(Geometry::Annulus);
            let mut worst = 0.0f64;
            for r in 1..=4 {
                let s = GlobalLagrangeSpace::conforming(&mesh, r)?;
                let a = build_dof_assignment(&s)?;
                let poly = crate::geometry::FnScalar(move |x: &[f64]| {
                    (x[0] + 0.5 * x[1]).powi(r as i32) - x[1]
                });
                let c = scott_zhang_interpolate(&s, &a, &poly, 2 * r + 2)?;
                for (dof, v) in c.iter().enumerate() {
                    worst = worst.max((v - poly.value(s.dof_coords(dof))?).abs());
                }
                let c = scott_zhang_interpolate(&s, &a, exact.0.as_ref(), 2 * r + 4)?;
                for (dof, v) in c.iter().enumerate() {
                    if s.dirichlet_mask()[dof] {
                        worst = worst.max(v.abs());
                    }
                }
            }
            Ok((worst < 1e-11, format!("max deviation {worst:.3e}")))
        },
    ));

    out.push(check("broken/conforming ratio bounded", || {
        let exact = ExactSolution::of_geometry(Geometry::Annulus);
        let mut spreads = Vec::new();
        for r in 1..=4 {
            let rep = estimate_broken_bh_constant(
                &Geometry::Annulus.mesh(),
                r,
                exact.0.as_ref(),
                opts.ratio_levels,
                2 * r + 6,
            )?;
            spreads.push(rep.spread().unwrap_or(1.0));
        }
        let worst = spreads.iter().cloned().fold(0.0, f64::max);
        Ok((
            worst < 3.0,
            format!("max/min ratio per degree {spreads:.3?}"),
        ))
    }));
    out
}
