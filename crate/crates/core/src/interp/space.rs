use std::collections::HashMap;

use crate::elements::{ElementError, LagrangeElement, SimplexGeometry};
use crate::mesh::SimplicialComplex;

/// Conforming 𝒫_r(𝒯) or broken 𝒫_{r,−1}(𝒯) Lagrange space over a complex.
///
/// Conforming DOFs are identified combinatorially: a Lagrange point with
/// multi-index α on a cell with sorted vertices v₀ < ⋯ < v_d is keyed by the
/// pairs (v_i, α_i) with α_i > 0, which does not depend on the cell.
#[derive(Debug, Clone)]
pub struct GlobalLagrangeSpace<'a> {
    complex: &'a SimplicialComplex,
    element: LagrangeElement,
    conforming: bool,
    cell_dofs: Vec<Vec<usize>>,
    num_dofs: usize,
    dof_coords: Vec<Vec<f64>>,
    dirichlet: Vec<bool>,
    geometry: Vec<SimplexGeometry>,
}

impl<'a> GlobalLagrangeSpace<'a> {
    pub fn conforming(complex: &'a SimplicialComplex, degree: usize) -> Result<Self, ElementError> {
        Self::new(complex, degree, true)
    }

    pub fn broken(complex: &'a SimplicialComplex, degree: usize) -> Result<Self, ElementError> {
        Self::new(complex, degree, false)
    }

    fn new(
        complex: &'a SimplicialComplex,
        degree: usize,
        conforming: bool,
    ) -> Result<Self, ElementError> {
        let n = complex.dim();
        let element = LagrangeElement::new(n, degree)?;
        let nb = element.num_basis();
        let geometry: Vec<SimplexGeometry> = (0..complex.num_cells())
            .map(|c| SimplexGeometry::of_cell(complex, c))
            .collect();

        let mut cell_dofs = Vec::with_capacity(complex.num_cells());
        let mut dof_coords = Vec::new();
        if conforming {
            let mut keys: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
            for (c, cell) in complex.cells().iter().enumerate() {
                let mut local = Vec::with_capacity(nb);
                for k in 0..nb {
                    let key: Vec<(usize, usize)> = cell
                        .vertices()
                        .iter()
                        .zip(&element.indices()[k])
                        .filter(|(_, &a)| a > 0)
                        .map(|(&v, &a)| (v, a))
                        .collect();
                    let next = keys.len();
                    let id = *keys.entry(key).or_insert(next);
                    if id == next {
                        dof_coords.push(geometry[c].point_at(&element.barycentric_point(k)));
                    }
                    local.push(id);
                }
                cell_dofs.push(local);
            }
        } else {
            for c in 0..complex.num_cells() {
                cell_dofs.push((c * nb..(c + 1) * nb).collect());
                for k in 0..nb {
                    dof_coords.push(geometry[c].point_at(&element.barycentric_point(k)));
                }
            }
        }
        let num_dofs = dof_coords.len();

        let mut dirichlet = vec![false; num_dofs];
        for &f in complex.dirichlet_facets() {
            let c = complex.facet_cells(f)[0];
            let i = complex.cell_facets(c).iter().position(|&x| x == f).unwrap();
            for k in 0..nb {
                if element.indices()[k][i] == 0 {
                    dirichlet[cell_dofs[c][k]] = true;
                }
            }
        }
        Ok(GlobalLagrangeSpace {
            complex,
            element,
            conforming,
            cell_dofs,
            num_dofs,
            dof_coords,
            dirichlet,
            geometry,
        })
    }

    pub fn complex(&self) -> &'a SimplicialComplex {
        self.complex
    }

    pub fn element(&self) -> &LagrangeElement {
        &self.element
    }

    pub fn degree(&self) -> usize {
        self.element.degree()
    }

    pub fn is_conforming(&self) -> bool {
        self.conforming
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    /// Global DOF ids of a cell, in the element's basis order.
    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        &self.cell_dofs[c]
    }

    pub fn dof_coords(&self, dof: usize) -> &[f64] {
        &self.dof_coords[dof]
    }

    /// True for DOFs whose Lagrange point lies on a Dirichlet facet.
    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn num_dirichlet(&self) -> usize {
        self.dirichlet.iter().filter(|&&d| d).count()
    }

    pub fn cell_geometry(&self, c: usize) -> &SimplexGeometry {
        &self.geometry[c]
    }

    /// Value of the finite element function `coeffs` at barycentric
    /// coordinates `lambda` of cell `c`.
    pub fn evaluate(&self, coeffs: &[f64], c: usize, lambda: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.element.num_basis()];
        self.element.values(lambda, &mut phi);
        self.cell_dofs[c]
            .iter()
            .zip(&phi)
            .map(|(&g, p)| coeffs[g] * p)
            .sum()
    }

    /// Nodal interpolant of a pointwise-evaluable function.
    pub fn nodal_interpolant<E>(
        &self,
        mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    ) -> Result<Vec<f64>, E> {
        self.dof_coords.iter().map(|x| f(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::binomial;
    use crate::geometry::builtin;

    #[test]
    fn dof_counts() {
        let m = builtin::annulus_mesh().refine_times(1).unwrap();
        let (nv, ne, nc) = (m.num_vertices(), m.simplices(1).len(), m.num_cells());
        for r in 1..=4 {
            let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
            let interior = if r >= 3 { binomial(r - 1, 2) } else { 0 };
            assert_eq!(s.num_dofs(), nv + (r - 1) * ne + interior * nc);
            let b = GlobalLagrangeSpace::broken(&m, r).unwrap();
            assert_eq!(b.num_dofs(), nc * binomial(r + 2, 2));
        }
    }

    #[test]
    fn shared_points_coincide() {
        let m = builtin::ball_quadrant_mesh().refine_times(1).unwrap();
        let s = GlobalLagrangeSpace::conforming(&m, 3).unwrap();
        for c in 0..m.num_cells() {
            let g = s.cell_geometry(c);
            for (k, &dof) in s.cell_dofs(c).iter().enumerate() {
                let x = g.point_at(&s.element().barycentric_point(k));
                let y = s.dof_coords(dof);
                assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dirichlet_mask_covers_boundary_points() {
        let m = builtin::annulus_mesh().refine_times(1).unwrap();
        let s = GlobalLagrangeSpace::conforming(&m, 2).unwrap();
        for dof in 0..s.num_dofs() {
            let x = s.dof_coords(dof);
            let n1 = x[0].abs() + x[1].abs();
            let on_boundary = (n1 - 0.5).abs() < 1e-12 || (n1 - 1.0).abs() < 1e-12;
            assert_eq!(s.dirichlet_mask()[dof], on_boundary, "dof {dof} at {x:?}");
        }
        let level0 = builtin::annulus_mesh();
        let s = GlobalLagrangeSpace::conforming(&level0, 1).unwrap();
        assert_eq!(s.num_dirichlet(), s.num_dofs());
    }
}
