//! Global Lagrange spaces, Scott–Zhang interpolation and comparisons
//! between broken and conforming best approximation.
//!
//! The interpolant reads each DOF from a local functional: DOFs interior to
//! a cell take the nodal value of the cell's L² projection, every other DOF
//! takes a dual-basis moment over one facet containing its Lagrange point.
//! Preferring Dirichlet facets makes the interpolant preserve homogeneous
//! boundary values.

mod space;

pub use space::GlobalLagrangeSpace;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::elements::{dual_basis, quadrature, ElementError, LagrangeElement, SimplexGeometry};
use crate::geometry::{GeometryError, ScalarField, SmoothFunction};
use crate::mesh::{MeshError, SimplicialComplex};

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("no admissible facet for DOF {0}")]
    NoAdmissibleFacet(usize),
    #[error("mesh is not face-connected")]
    NotFaceConnected,
    #[error("local mass matrix is singular on cell {0}")]
    SingularMassMatrix(usize),
    #[error("operation needs a conforming space")]
    NotConforming,
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Functional chosen for a DOF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofAssignment {
    /// Nodal value of the L² projection on this cell.
    InteriorCell(usize),
    /// Dual-basis moment over this facet.
    FacetMoment(usize),
}

/// Picks the functional for every DOF of a conforming space. Non-interior
/// DOFs use the lowest-id facet containing their Lagrange point, restricted
/// to Dirichlet facets when the point lies on the Dirichlet boundary.
pub fn build_dof_assignment(
    space: &GlobalLagrangeSpace,
) -> Result<Vec<DofAssignment>, InterpError> {
    if !space.is_conforming() {
        return Err(InterpError::NotConforming);
    }
    let complex = space.complex();
    let element = space.element();
    let mut interior: Vec<Option<usize>> = vec![None; space.num_dofs()];
    let mut candidates: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); space.num_dofs()];
    for c in 0..complex.num_cells() {
        let facets = complex.cell_facets(c);
        for (k, &g) in space.cell_dofs(c).iter().enumerate() {
            let alpha = &element.indices()[k];
            if alpha.iter().all(|&a| a > 0) {
                interior[g] = Some(c);
            } else {
                for (i, &a) in alpha.iter().enumerate() {
                    if a == 0 {
                        candidates[g].insert(facets[i]);
                    }
                }
            }
        }
    }
    let mask = space.dirichlet_mask();
    (0..space.num_dofs())
        .map(|g| {
            if let Some(c) = interior[g] {
                return Ok(DofAssignment::InteriorCell(c));
            }
            let pick = if mask[g] {
                candidates[g]
                    .iter()
                    .copied()
                    .find(|&f| complex.is_dirichlet(f))
            } else {
                candidates[g].first().copied()
            };
            pick.map(DofAssignment::FacetMoment)
                .ok_or(InterpError::NoAdmissibleFacet(g))
        })
        .collect()
}

/// Nodal coefficients of the L² projection of `v` onto 𝒫_r(T).
pub fn local_projection(
    t: &SimplexGeometry,
    element: &LagrangeElement,
    v: &dyn ScalarField,
    quad_degree: usize,
) -> Result<Vec<f64>, InterpError> {
    let nb = element.num_basis();
    let rule = quadrature(element.dim(), quad_degree)?;
    let vol = t.volume();
    let mass = element.normalized_mass()? * vol;
    let mut rhs = DVector::zeros(nb);
    let mut phi = vec![0.0; nb];
    for (lam, w) in rule.points().iter().zip(rule.volume_fractions()) {
        element.values(lam, &mut phi);
        let val = v.value(&t.point_at(lam))?;
        for k in 0..nb {
            rhs[k] += w * vol * val * phi[k];
        }
    }
    let chol = mass.cholesky().ok_or(ElementError::SingularMassMatrix)?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Scott–Zhang interpolant of `v` into a conforming space.
pub fn scott_zhang_interpolate(
    space: &GlobalLagrangeSpace,
    assignment: &[DofAssignment],
    v: &dyn ScalarField,
    quad_degree: usize,
) -> Result<Vec<f64>, InterpError> {
    if !space.is_conforming() {
        return Err(InterpError::NotConforming);
    }
    let complex = space.complex();
    let element = space.element();
    let r = element.degree();
    let facet_element = LagrangeElement::new(complex.dim() - 1, r)?;
    let facet_index: BTreeMap<&[usize], usize> = facet_element
        .indices()
        .iter()
        .enumerate()
        .map(|(k, a)| (a.as_slice(), k))
        .collect();

    let mut by_cell: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut by_facet: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (g, a) in assignment.iter().enumerate() {
        match *a {
            DofAssignment::InteriorCell(c) => by_cell.entry(c).or_default().push(g),
            DofAssignment::FacetMoment(f) => by_facet.entry(f).or_default().push(g),
        }
    }

    let mut out = vec![0.0; space.num_dofs()];
    for c in by_cell.keys().copied() {
        let p =
            local_projection(space.cell_geometry(c), element, v, quad_degree).map_err(
                |e| match e {
                    InterpError::Element(ElementError::SingularMassMatrix) => {
                        InterpError::SingularMassMatrix(c)
                    }
                    e => e,
                },
            )?;
        for (k, &g) in space.cell_dofs(c).iter().enumerate() {
            if assignment[g] == DofAssignment::InteriorCell(c) {
                out[g] = p[k];
            }
        }
    }

    let rule = quadrature(complex.dim() - 1, quad_degree)?;
    let fractions = rule.volume_fractions();
    for (&f, dofs) in &by_facet {
        let facet = complex.facet(f);
        let geom = SimplexGeometry::of_simplex(complex, facet);
        let dual = dual_basis(&geom, &facet_element)?;
        let vol = geom.volume();
        let mut moments = vec![0.0; facet_element.num_basis()];
        for (lam, w) in rule.points().iter().zip(&fractions) {
            let val = v.value(&geom.point_at(lam))?;
            for (m, psi) in moments.iter_mut().zip(dual.values(&facet_element, lam)) {
                *m += w * vol * val * psi;
            }
        }
        // Locate each DOF's point on the facet through an incident cell.
        let c = complex.facet_cells(f)[0];
        let i = complex.cell_facets(c).iter().position(|&x| x == f).unwrap();
        for (k, &g) in space.cell_dofs(c).iter().enumerate() {
            let alpha = &element.indices()[k];
            if alpha[i] != 0 || !dofs.contains(&g) {
                continue;
            }
            let mut beta = alpha.clone();
            beta.remove(i);
            out[g] = moments[facet_index[beta.as_slice()]];
        }
    }
    Ok(out)
}

/// Which error a best-approximation comparison measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seminorm {
    L2,
    H1Semi,
}

/// Squared cellwise errors of a finite element function against `v`.
#[derive(Debug, Clone)]
pub struct CellErrors {
    pub l2_sq: Vec<f64>,
    pub h1_sq: Vec<f64>,
}

impl CellErrors {
    pub fn l2(&self) -> f64 {
        self.l2_sq.iter().sum::<f64>().sqrt()
    }

    pub fn h1_semi(&self) -> f64 {
        self.h1_sq.iter().sum::<f64>().sqrt()
    }
}

/// ‖v − v_h‖ and |v − v_h|₁ per cell, by quadrature of the given degree.
pub fn cellwise_errors(
    space: &GlobalLagrangeSpace,
    coeffs: &[f64],
    v: &dyn SmoothFunction,
    quad_degree: usize,
) -> Result<CellErrors, InterpError> {
    let element = space.element();
    let n = element.dim();
    let nb = element.num_basis();
    let rule = quadrature(n, quad_degree)?;
    let fractions = rule.volume_fractions();
    let table = element.tabulate(rule.points());
    let nc = space.complex().num_cells();
    let mut l2_sq = vec![0.0; nc];
    let mut h1_sq = vec![0.0; nc];
    let mut grads = vec![0.0; nb * n];
    for c in 0..nc {
        let geom = space.cell_geometry(c);
        let bg = geom.barycentric_gradients()?;
        let dofs = space.cell_dofs(c);
        let vol = geom.volume();
        for (q, lam) in rule.points().iter().enumerate() {
            let x = geom.point_at(lam);
            let phi = table.values_at(q);
            table.gradients_at(q, bg, &mut grads);
            let mut uh = 0.0;
            let mut guh = vec![0.0; n];
            for (k, &g) in dofs.iter().enumerate() {
                uh += coeffs[g] * phi[k];
                for d in 0..n {
                    guh[d] += coeffs[g] * grads[k * n + d];
                }
            }
            let w = fractions[q] * vol;
            let e = v.value(&x)? - uh;
            let ge = v.gradient(&x)?;
            l2_sq[c] += w * e * e;
            h1_sq[c] += w * (0..n).map(|d| (ge[d] - guh[d]).powi(2)).sum::<f64>();
        }
    }
    Ok(CellErrors { l2_sq, h1_sq })
}

/// inf over 𝒫_{r,−1}(𝒯) of the chosen error, computed cell by cell. For the
/// H¹ seminorm the local minimizer is the Ritz projection with the mean of
/// `v` preserved.
pub fn broken_best_error(
    complex: &SimplicialComplex,
    degree: usize,
    v: &dyn SmoothFunction,
    seminorm: Seminorm,
    quad_degree: usize,
) -> Result<f64, InterpError> {
    let space = GlobalLagrangeSpace::broken(complex, degree)?;
    let element = space.element();
    let n = element.dim();
    let nb = element.num_basis();
    let rule = quadrature(n, quad_degree)?;
    let fractions = rule.volume_fractions();
    let table = element.tabulate(rule.points());
    let mut coeffs = vec![0.0; space.num_dofs()];
    let mut grads = vec![0.0; nb * n];
    for c in 0..complex.num_cells() {
        let geom = space.cell_geometry(c);
        let local = match seminorm {
            Seminorm::L2 => local_projection(geom, element, v, quad_degree)?,
            Seminorm::H1Semi => {
                let bg = geom.barycentric_gradients()?;
                let vol = geom.volume();
                let mut sys = DMatrix::zeros(nb + 1, nb + 1);
                let mut rhs = DVector::zeros(nb + 1);
                for (q, lam) in rule.points().iter().enumerate() {
                    let w = fractions[q] * vol;
                    let x = geom.point_at(lam);
                    let gv = v.gradient(&x)?;
                    let val = v.value(&x)?;
                    let phi = table.values_at(q);
                    table.gradients_at(q, bg, &mut grads);
                    for a in 0..nb {
                        for b in 0..nb {
                            let dot: f64 =
                                (0..n).map(|d| grads[a * n + d] * grads[b * n + d]).sum();
                            sys[(a, b)] += w * dot;
                        }
                        let dot: f64 = (0..n).map(|d| gv[d] * grads[a * n + d]).sum();
                        rhs[a] += w * dot;
                        sys[(a, nb)] += w * phi[a];
                        sys[(nb, a)] += w * phi[a];
                    }
                    rhs[nb] += w * val;
                }
                let sol = sys
                    .lu()
                    .solve(&rhs)
                    .ok_or(InterpError::SingularMassMatrix(c))?;
                sol.iter().take(nb).copied().collect()
            }
        };
        for (k, &g) in space.cell_dofs(c).iter().enumerate() {
            coeffs[g] = local[k];
        }
    }
    let errs = cellwise_errors(&space, &coeffs, v, quad_degree)?;
    Ok(match seminorm {
        Seminorm::L2 => errs.l2(),
        Seminorm::H1Semi => errs.h1_semi(),
    })
}

/// One level of a broken/conforming comparison.
#[derive(Debug, Clone)]
pub struct RatioRow {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    /// |v − I_h v|₁ for the Scott–Zhang interpolant.
    pub conforming: f64,
    /// inf over the broken space of |v − w|₁.
    pub broken: f64,
    /// `None` when both errors vanish to rounding.
    pub ratio: Option<f64>,
}

/// Compares the conforming Scott–Zhang H¹ error with the broken best H¹
/// error on levels 0..=`levels` of uniform refinement.
pub fn broken_conforming_ratio(
    base: &SimplicialComplex,
    degree: usize,
    v: &dyn SmoothFunction,
    levels: usize,
    quad_degree: usize,
) -> Result<Vec<RatioRow>, InterpError> {
    let mut rows = Vec::with_capacity(levels + 1);
    let mut mesh = base.clone();
    for level in 0..=levels {
        if level > 0 {
            mesh = mesh.refine_uniform()?;
        }
        if !mesh.is_face_connected() {
            return Err(InterpError::NotFaceConnected);
        }
        let space = GlobalLagrangeSpace::conforming(&mesh, degree)?;
        let assignment = build_dof_assignment(&space)?;
        let coeffs = scott_zhang_interpolate(&space, &assignment, v, quad_degree)?;
        let conforming = cellwise_errors(&space, &coeffs, v, quad_degree)?.h1_semi();
        let broken = broken_best_error(&mesh, degree, v, Seminorm::H1Semi, quad_degree)?;
        let zero = vec![0.0; space.num_dofs()];
        let scale = cellwise_errors(&space, &zero, v, quad_degree)?.h1_semi();
        let floor = 1e-10 * scale.max(1e-300);
        let ratio = (conforming > floor || broken > floor).then(|| conforming / broken);
        log::debug!("ratio level {level}: conforming {conforming:e} broken {broken:e}");
        rows.push(RatioRow {
            level,
            h: mesh.mesh_size(),
            dofs: space.num_dofs(),
            conforming,
            broken,
            ratio,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builtin;
    use crate::geometry::{FnScalar, FnSmooth};
    use nalgebra::DVector;

    /// x^p + x^{p−1} y + ½ y^p + 0.3, of exact degree p.
    fn poly(deg: usize) -> impl SmoothFunction {
        let p = deg as i32;
        FnSmooth::new(
            move |x: &[f64]| x[0].powi(p) + x[0].powi(p - 1) * x[1] + 0.5 * x[1].powi(p) + 0.3,
            move |x: &[f64]| {
                let pf = p as f64;
                let cross = if p > 1 {
                    (pf - 1.0) * x[0].powi(p - 2) * x[1]
                } else {
                    0.0
                };
                DVector::from_vec(vec![
                    pf * x[0].powi(p - 1) + cross,
                    x[0].powi(p - 1) + 0.5 * pf * x[1].powi(p - 1),
                ])
            },
        )
    }

    #[test]
    fn assignment_prefers_dirichlet_facets() {
        let m = builtin::annulus_mesh().refine_times(1).unwrap();
        for r in 1..=4 {
            let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
            let a = build_dof_assignment(&s).unwrap();
            for (g, kind) in a.iter().enumerate() {
                if s.dirichlet_mask()[g] {
                    match kind {
                        DofAssignment::FacetMoment(f) => assert!(m.is_dirichlet(*f)),
                        _ => panic!("boundary DOF {g} assigned to a cell"),
                    }
                }
            }
        }
    }

    #[test]
    fn assignment_requires_conforming_space() {
        let m = SimplicialComplex::unit_square();
        let s = GlobalLagrangeSpace::conforming(&m, 2).unwrap();
        let a = build_dof_assignment(&s).unwrap();
        assert_eq!(a.len(), s.num_dofs());
        let b = GlobalLagrangeSpace::broken(&m, 2).unwrap();
        assert!(matches!(
            build_dof_assignment(&b),
            Err(InterpError::NotConforming)
        ));
    }

    #[test]
    fn reproduces_polynomials() {
        let m = builtin::ball_quadrant_mesh().refine_times(2).unwrap();
        for r in 1..=4 {
            let v = poly(r);
            let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
            let a = build_dof_assignment(&s).unwrap();
            let c = scott_zhang_interpolate(&s, &a, &v, 2 * r + 2).unwrap();
            for dof in 0..s.num_dofs() {
                let x = s.dof_coords(dof);
                assert!(
                    (c[dof] - v.value(x).unwrap()).abs() < 1e-11,
                    "r={r} dof={dof}"
                );
            }
        }
    }

    #[test]
    fn preserves_homogeneous_boundary_values() {
        let m = builtin::annulus_mesh().refine_times(2).unwrap();
        let v = FnScalar(|x: &[f64]| {
            let n1 = x[0].abs() + x[1].abs();
            (n1 - 0.5) * (1.0 - n1) * (1.0 + x[0] * x[1]).exp()
        });
        for r in 1..=4 {
            let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
            let a = build_dof_assignment(&s).unwrap();
            let c = scott_zhang_interpolate(&s, &a, &v, 2 * r + 4).unwrap();
            for dof in 0..s.num_dofs() {
                if s.dirichlet_mask()[dof] {
                    assert!(c[dof].abs() < 1e-13, "r={r} dof={dof} value {}", c[dof]);
                }
            }
        }
    }

    #[test]
    fn local_projection_preserves_mean() {
        let t = SimplexGeometry::new(vec![vec![0.1, 0.2], vec![1.3, 0.1], vec![0.4, 0.9]]);
        let v = FnScalar(|x: &[f64]| (3.0 * x[0]).sin() * x[1].exp());
        let rule = quadrature(2, 14).unwrap();
        for r in 1..=4 {
            let e = LagrangeElement::new(2, r).unwrap();
            let p = local_projection(&t, &e, &v, 14).unwrap();
            let mut phi = vec![0.0; e.num_basis()];
            let (mut int_v, mut int_p) = (0.0, 0.0);
            for (lam, w) in rule.points().iter().zip(rule.volume_fractions()) {
                e.values(lam, &mut phi);
                int_p += w * phi.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
                int_v += w * v.value(&t.point_at(lam)).unwrap();
            }
            assert!((int_v - int_p).abs() < 1e-13);
        }
    }

    #[test]
    fn broken_best_error_is_zero_for_piecewise_polynomials() {
        let m = builtin::annulus_mesh().refine_times(1).unwrap();
        let v = poly(2);
        for sn in [Seminorm::L2, Seminorm::H1Semi] {
            assert!(broken_best_error(&m, 2, &v, sn, 8).unwrap() < 1e-12);
        }
    }

    #[test]
    fn broken_best_error_never_exceeds_conforming_interpolation() {
        let m = builtin::annulus_mesh().refine_times(1).unwrap();
        let v = FnSmooth::new(
            |x: &[f64]| (2.0 * x[0]).sin() * x[1].cos(),
            |x: &[f64]| {
                DVector::from_vec(vec![
                    2.0 * (2.0 * x[0]).cos() * x[1].cos(),
                    -(2.0 * x[0]).sin() * x[1].sin(),
                ])
            },
        );
        for r in 1..=3 {
            let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
            let a = build_dof_assignment(&s).unwrap();
            let c = scott_zhang_interpolate(&s, &a, &v, 2 * r + 4).unwrap();
            let errs = cellwise_errors(&s, &c, &v, 2 * r + 6).unwrap();
            let bh = broken_best_error(&m, r, &v, Seminorm::H1Semi, 2 * r + 6).unwrap();
            let bl = broken_best_error(&m, r, &v, Seminorm::L2, 2 * r + 6).unwrap();
            assert!(bh <= errs.h1_semi() * (1.0 + 1e-12));
            assert!(bl <= errs.l2() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ratio_reports_both_zero() {
        let m = builtin::ball_quadrant_mesh();
        let rows = broken_conforming_ratio(&m, 1, &poly(1), 1, 4).unwrap();
        assert!(rows.iter().all(|row| row.ratio.is_none()));
    }

    #[test]
    fn ratio_rejects_disconnected_mesh() {
        let pts: Vec<crate::mesh::Point> =
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
                .into_iter()
                .map(Into::into)
                .collect();
        let m = SimplicialComplex::build(&pts, &[vec![0, 1, 2], vec![0, 3, 4]], &[], &[]).unwrap();
        let r = broken_conforming_ratio(&m, 1, &poly(1), 0, 4);
        assert!(matches!(r, Err(InterpError::NotFaceConnected)));
    }
}
