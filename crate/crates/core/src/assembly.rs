//! Stiffness and load assembly on a Lagrange space, data approximation and
//! Dirichlet elimination.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::elements::{quadrature, ElementError, LagrangeElement, QuadratureRule, SimplexGeometry};
use crate::geometry::{GeometryError, ParametricProblem, ScalarField, TensorField, VectorField};
use crate::interp::GlobalLagrangeSpace;
use crate::mesh::SimplicialComplex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("field evaluation failed: {0}")]
    EvaluationFailure(#[from] GeometryError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error("every DOF is constrained; nothing to solve")]
    AllDofsConstrained,
    #[error("coefficient is not positive definite at a quadrature point of cell {cell}")]
    NonPositiveCoefficient { cell: usize },
    #[error("data dimension does not match the space")]
    DimensionMismatch,
}

/// Cells per batch of concurrently computed local blocks.
const BATCH: usize = 2048;

/// Square sparse matrix in compressed row storage, columns sorted per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sparsity pattern; each row is sorted and
    /// deduplicated.
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != 0.0).collect())
            .collect();
        let mut out = Self::from_pattern(rows);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    out.add(i, j, m[(i, j)]);
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (c, _) = self.row(i);
        c.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Entry (i, j); zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.vals[k])
    }

    /// Adds to an entry of the pattern. Panics outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).expect("entry outside the sparsity pattern");
        self.vals[k] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
    }

    /// y = A x with rows split across the rayon pool. Each row is reduced in
    /// the same order as [`matvec`](Self::matvec), so results are identical.
    pub fn par_matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut()
            .enumerate()
            .with_min_len(1024)
            .for_each(|(i, yi)| *yi = self.row_dot(i, x));
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (c, v) = self.row(i);
        c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                m[(i, j)] += a;
            }
        }
        m
    }

    /// max |A_ij − A_ji| over the pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// max |A_ij − B_ij| over the union of both patterns.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                worst = worst.max((a - other.get(i, j)).abs());
            }
            let (c, v) = other.row(i);
            for (&j, &b) in c.iter().zip(v) {
                worst = worst.max((b - self.get(i, j)).abs());
            }
        }
        worst
    }

    /// Writes the lower triangle in MatrixMarket symmetric coordinate format.
    pub fn write_matrix_market(&self, mut w: impl Write) -> io::Result<()> {
        let lower = (0..self.n)
            .map(|i| self.row(i).0.iter().filter(|&&j| j <= i).count())
            .sum::<usize>();
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(w, "{} {} {}", self.n, self.n, lower)?;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if j <= i {
                    writeln!(w, "{} {} {:.17e}", i + 1, j + 1, a)?;
                }
            }
        }
        Ok(())
    }
}

/// How the coefficient and data are approximated cellwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataApproximation {
    /// Nodal interpolation at the degree-k Lagrange points.
    Nodal,
    /// Cellwise L² projection onto degree-k polynomials.
    #[default]
    L2Projection,
}

/// Cellwise degree-k polynomial approximations Â_h, f̂_h, ĝ_h, stored as
/// nodal values in the degree-k Lagrange basis of each cell.
#[derive(Debug, Clone)]
pub struct InterpolatedData {
    element: LagrangeElement,
    num_cells: usize,
    /// Per cell, `nb * n * n` values: basis function j, entry (a, b) at
    /// `j * n * n + a * n + b`.
    coefficient: Vec<f64>,
    /// Per cell, `nb` values.
    source: Vec<f64>,
    /// Per cell, `nb * n` values.
    flux: Vec<f64>,
}

impl InterpolatedData {
    pub fn degree(&self) -> usize {
        self.element.degree()
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    fn dim(&self) -> usize {
        self.element.dim()
    }

    pub fn coefficient_at(&self, c: usize, lambda: &[f64]) -> DMatrix<f64> {
        let mut phi = vec![0.0; self.element.num_basis()];
        self.element.values(lambda, &mut phi);
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        self.combine_coefficient(c, &phi, &mut out);
        DMatrix::from_row_slice(n, n, &out)
    }

    pub fn source_at(&self, c: usize, lambda: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.element.num_basis()];
        self.element.values(lambda, &mut phi);
        self.combine_source(c, &phi)
    }

    pub fn flux_at(&self, c: usize, lambda: &[f64]) -> DVector<f64> {
        let mut phi = vec![0.0; self.element.num_basis()];
        self.element.values(lambda, &mut phi);
        let mut out = vec![0.0; self.dim()];
        self.combine_flux(c, &phi, &mut out);
        DVector::from_vec(out)
    }

    fn combine_coefficient(&self, c: usize, phi: &[f64], out: &mut [f64]) {
        let s = out.len();
        let block = &self.coefficient[c * phi.len() * s..(c + 1) * phi.len() * s];
        out.fill(0.0);
        for (j, p) in phi.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(&block[j * s..(j + 1) * s]) {
                *o += p * v;
            }
        }
    }

    fn combine_source(&self, c: usize, phi: &[f64]) -> f64 {
        let block = &self.source[c * phi.len()..(c + 1) * phi.len()];
        phi.iter().zip(block).map(|(p, v)| p * v).sum()
    }

    fn combine_flux(&self, c: usize, phi: &[f64], out: &mut [f64]) {
        let n = out.len();
        let block = &self.flux[c * phi.len() * n..(c + 1) * phi.len() * n];
        out.fill(0.0);
        for (j, p) in phi.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(&block[j * n..(j + 1) * n]) {
                *o += p * v;
            }
        }
    }
}

/// Approximates Â, f̂ and ĝ by degree-k polynomials on every cell. Nodal
/// values on interfaces between smoothness pieces are taken from the side
/// of the cell being approximated.
pub fn interpolate_data(
    problem: &ParametricProblem,
    complex: &SimplicialComplex,
    k: usize,
    method: DataApproximation,
) -> Result<InterpolatedData, AssemblyError> {
    let n = complex.dim();
    let element = LagrangeElement::new(n, k)?;
    let nb = element.num_basis();
    let nc = complex.num_cells();

    let per_cell: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..nc)
        .into_par_iter()
        .with_min_len(64)
        .map(|c| {
            let geom = SimplexGeometry::of_cell(complex, c);
            match method {
                DataApproximation::Nodal => nodal_cell_data(problem, &geom, &element),
                DataApproximation::L2Projection => projected_cell_data(problem, &geom, &element),
            }
        })
        .collect::<Result<_, AssemblyError>>()?;

    let mut coefficient = Vec::with_capacity(nc * nb * n * n);
    let mut source = Vec::with_capacity(nc * nb);
    let mut flux = Vec::with_capacity(nc * nb * n);
    for (a, f, g) in per_cell {
        coefficient.extend(a);
        source.extend(f);
        flux.extend(g);
    }
    Ok(InterpolatedData {
        element,
        num_cells: nc,
        coefficient,
        source,
        flux,
    })
}

type CellData = (Vec<f64>, Vec<f64>, Vec<f64>);

fn nodal_cell_data(
    problem: &ParametricProblem,
    geom: &SimplexGeometry,
    element: &LagrangeElement,
) -> Result<CellData, AssemblyError> {
    let n = geom.ambient_dim();
    let nb = element.num_basis();
    let centroid = geom.point_at(&vec![1.0 / (n + 1) as f64; n + 1]);
    let mut a = Vec::with_capacity(nb * n * n);
    let mut f = Vec::with_capacity(nb);
    let mut g = Vec::with_capacity(nb * n);
    for j in 0..nb {
        let x = geom.point_at(&element.barycentric_point(j));
        let t = problem.coefficient.tensor_toward(&x, &centroid)?;
        for r in 0..n {
            for s in 0..n {
                a.push(t[(r, s)]);
            }
        }
        f.push(problem.source.value_toward(&x, &centroid)?);
        g.extend(problem.flux.vector_toward(&x, &centroid)?.iter());
    }
    Ok((a, f, g))
}

fn projected_cell_data(
    problem: &ParametricProblem,
    geom: &SimplexGeometry,
    element: &LagrangeElement,
) -> Result<CellData, AssemblyError> {
    let n = geom.ambient_dim();
    let nb = element.num_basis();
    let rule = quadrature(n, 2 * element.degree() + 4)?;
    let vol = geom.volume();
    let mut rhs = DMatrix::zeros(nb, n * n + 1 + n);
    let mut phi = vec![0.0; nb];
    for (lam, w) in rule.points().iter().zip(rule.volume_fractions()) {
        element.values(lam, &mut phi);
        let x = geom.point_at(lam);
        let t = problem.coefficient.tensor(&x)?;
        let f = problem.source.value(&x)?;
        let g = problem.flux.vector(&x)?;
        let mut vals = Vec::with_capacity(n * n + 1 + n);
        for r in 0..n {
            for s in 0..n {
                vals.push(t[(r, s)]);
            }
        }
        vals.push(f);
        vals.extend(g.iter());
        for j in 0..nb {
            for (e, v) in vals.iter().enumerate() {
                rhs[(j, e)] += w * vol * phi[j] * v;
            }
        }
    }
    let mass = element.normalized_mass()? * vol;
    let sol = mass
        .cholesky()
        .ok_or(ElementError::SingularMassMatrix)?
        .solve(&rhs);
    let mut a = Vec::with_capacity(nb * n * n);
    let mut f = Vec::with_capacity(nb);
    let mut g = Vec::with_capacity(nb * n);
    for j in 0..nb {
        a.extend((0..n * n).map(|e| sol[(j, e)]));
        f.push(sol[(j, n * n)]);
        g.extend((0..n).map(|e| sol[(j, n * n + 1 + e)]));
    }
    Ok((a, f, g))
}

/// Diffusion coefficient used in assembly.
#[derive(Clone, Copy)]
pub enum Coefficient<'a> {
    /// Evaluated at every quadrature point.
    Exact(&'a dyn TensorField),
    Interpolated(&'a InterpolatedData),
}

/// Right-hand-side data used in assembly.
#[derive(Clone, Copy)]
pub enum LoadData<'a> {
    Exact {
        source: &'a dyn ScalarField,
        flux: Option<&'a dyn VectorField>,
    },
    Interpolated(&'a InterpolatedData),
}

/// Assembled stiffness matrix with the cells where the coefficient failed
/// to be positive definite at some quadrature point.
#[derive(Debug, Clone)]
pub struct Stiffness {
    pub matrix: CsrMatrix,
    pub warnings: Vec<AssemblyError>,
}

/// Global system before boundary conditions are applied.
#[derive(Debug, Clone)]
pub struct SparseSymmetricSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Constrained DOFs.
    pub dirichlet: Vec<bool>,
}

fn sparsity(space: &GlobalLagrangeSpace) -> CsrMatrix {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); space.num_dofs()];
    for c in 0..space.complex().num_cells() {
        let dofs = space.cell_dofs(c);
        for &i in dofs {
            rows[i].extend_from_slice(dofs);
        }
    }
    CsrMatrix::from_pattern(rows)
}

fn check_cells(space: &GlobalLagrangeSpace, data: &InterpolatedData) -> Result<(), AssemblyError> {
    if data.num_cells() != space.complex().num_cells() || data.dim() != space.complex().dim() {
        return Err(AssemblyError::DimensionMismatch);
    }
    Ok(())
}

fn is_positive_definite(a: &[f64], n: usize) -> bool {
    match n {
        1 => a[0] > 0.0,
        2 => a[0] > 0.0 && a[0] * a[3] - a[1] * a[2] > 0.0,
        _ => DMatrix::from_row_slice(n, n, a).cholesky().is_some(),
    }
}

/// K_ij = Σ_T ∫_T ∇φ_i · Â ∇φ_j by quadrature of the given degree. Local
/// blocks are computed concurrently and scattered in cell order, so the
/// result does not depend on the thread count.
pub fn assemble_stiffness(
    space: &GlobalLagrangeSpace,
    coefficient: Coefficient,
    quad_degree: usize,
) -> Result<Stiffness, AssemblyError> {
    if let Coefficient::Interpolated(d) = coefficient {
        check_cells(space, d)?;
    }
    let element = space.element();
    let n = element.dim();
    let nb = element.num_basis();
    let rule = quadrature(n, quad_degree)?;
    let fractions = rule.volume_fractions();
    let table = element.tabulate(rule.points());
    let data_table = match coefficient {
        Coefficient::Interpolated(d) => Some(d.element.tabulate(rule.points())),
        Coefficient::Exact(_) => None,
    };

    let local = |c: usize| -> Result<(Vec<f64>, bool), AssemblyError> {
        let geom = space.cell_geometry(c);
        let bg = geom.barycentric_gradients()?;
        let vol = geom.volume();
        let mut k = vec![0.0; nb * nb];
        let mut grads = vec![0.0; nb * n];
        let mut agrads = vec![0.0; nb * n];
        let mut a = vec![0.0; n * n];
        let mut positive = true;
        for (q, lam) in rule.points().iter().enumerate() {
            match coefficient {
                Coefficient::Exact(field) => {
                    let t = field.tensor(&geom.point_at(lam))?;
                    for r in 0..n {
                        for s in 0..n {
                            a[r * n + s] = t[(r, s)];
                        }
                    }
                }
                Coefficient::Interpolated(d) => {
                    d.combine_coefficient(c, data_table.as_ref().unwrap().values_at(q), &mut a);
                }
            }
            positive &= is_positive_definite(&a, n);
            table.gradients_at(q, bg, &mut grads);
            for j in 0..nb {
                for r in 0..n {
                    agrads[j * n + r] = (0..n).map(|s| a[r * n + s] * grads[j * n + s]).sum();
                }
            }
            let w = fractions[q] * vol;
            for i in 0..nb {
                for j in i..nb {
                    let dot: f64 = (0..n).map(|r| grads[i * n + r] * agrads[j * n + r]).sum();
                    k[i * nb + j] += w * dot;
                }
            }
        }
        for i in 0..nb {
            for j in 0..i {
                k[i * nb + j] = k[j * nb + i];
            }
        }
        Ok((k, positive))
    };

    let mut matrix = sparsity(space);
    let mut warnings = Vec::new();
    let nc = space.complex().num_cells();
    for start in (0..nc).step_by(BATCH) {
        let end = (start + BATCH).min(nc);
        let blocks: Vec<(Vec<f64>, bool)> = (start..end)
            .into_par_iter()
            .map(local)
            .collect::<Result<_, _>>()?;
        for (c, (k, positive)) in (start..end).zip(blocks) {
            if !positive {
                log::warn!("coefficient not positive definite on cell {c}");
                warnings.push(AssemblyError::NonPositiveCoefficient { cell: c });
            }
            let dofs = space.cell_dofs(c);
            for (i, &gi) in dofs.iter().enumerate() {
                for (j, &gj) in dofs.iter().enumerate() {
                    matrix.add(gi, gj, k[i * nb + j]);
                }
            }
        }
    }
    Ok(Stiffness { matrix, warnings })
}

/// b_i = Σ_T ∫_T f̂ φ_i + ĝ · ∇φ_i by quadrature of the given degree.
pub fn assemble_load(
    space: &GlobalLagrangeSpace,
    data: LoadData,
    quad_degree: usize,
) -> Result<Vec<f64>, AssemblyError> {
    if let LoadData::Interpolated(d) = data {
        check_cells(space, d)?;
    }
    let element = space.element();
    let n = element.dim();
    let nb = element.num_basis();
    let rule: QuadratureRule = quadrature(n, quad_degree)?;
    let fractions = rule.volume_fractions();
    let table = element.tabulate(rule.points());
    let data_table = match data {
        LoadData::Interpolated(d) => Some(d.element.tabulate(rule.points())),
        LoadData::Exact { .. } => None,
    };

    let local = |c: usize| -> Result<Vec<f64>, AssemblyError> {
        let geom = space.cell_geometry(c);
        let bg = geom.barycentric_gradients()?;
        let vol = geom.volume();
        let mut b = vec![0.0; nb];
        let mut grads = vec![0.0; nb * n];
        let mut g = vec![0.0; n];
        for (q, lam) in rule.points().iter().enumerate() {
            let (f, has_flux) = match data {
                LoadData::Exact { source, flux } => {
                    let x = geom.point_at(lam);
                    if let Some(flux) = flux {
                        g.copy_from_slice(flux.vector(&x)?.as_slice());
                    }
                    (source.value(&x)?, flux.is_some())
                }
                LoadData::Interpolated(d) => {
                    let phi = data_table.as_ref().unwrap().values_at(q);
                    d.combine_flux(c, phi, &mut g);
                    (d.combine_source(c, phi), true)
                }
            };
            let w = fractions[q] * vol;
            let phi = table.values_at(q);
            if has_flux {
                table.gradients_at(q, bg, &mut grads);
            }
            for i in 0..nb {
                let mut v = f * phi[i];
                if has_flux {
                    v += (0..n).map(|r| g[r] * grads[i * n + r]).sum::<f64>();
                }
                b[i] += w * v;
            }
        }
        Ok(b)
    };

    let mut rhs = vec![0.0; space.num_dofs()];
    let nc = space.complex().num_cells();
    for start in (0..nc).step_by(BATCH) {
        let end = (start + BATCH).min(nc);
        let blocks: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(local)
            .collect::<Result<_, _>>()?;
        for (c, b) in (start..end).zip(blocks) {
            for (&gi, v) in space.cell_dofs(c).iter().zip(b) {
                rhs[gi] += v;
            }
        }
    }
    Ok(rhs)
}

/// The system restricted to free DOFs.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Global id of each free DOF.
    pub free: Vec<usize>,
    pub num_global: usize,
}

impl ReducedSystem {
    /// Global vector with zeros at constrained DOFs.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_global];
        for (&g, &v) in self.free.iter().zip(x) {
            out[g] = v;
        }
        out
    }
}

/// Removes the rows and columns of constrained DOFs (homogeneous values).
pub fn apply_dirichlet(system: &SparseSymmetricSystem) -> Result<ReducedSystem, AssemblyError> {
    let n = system.matrix.dim();
    let free: Vec<usize> = (0..n).filter(|&i| !system.dirichlet[i]).collect();
    if free.is_empty() {
        return Err(AssemblyError::AllDofsConstrained);
    }
    let mut local = vec![usize::MAX; n];
    for (k, &g) in free.iter().enumerate() {
        local[g] = k;
    }
    let mut row_ptr = Vec::with_capacity(free.len() + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for &g in &free {
        let (c, v) = system.matrix.row(g);
        for (&j, &a) in c.iter().zip(v) {
            if local[j] != usize::MAX {
                cols.push(local[j]);
                vals.push(a);
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(ReducedSystem {
        matrix: CsrMatrix {
            n: free.len(),
            row_ptr,
            cols,
            vals,
        },
        rhs: free.iter().map(|&g| system.rhs[g]).collect(),
        free,
        num_global: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builtin::{self, Geometry};
    use crate::geometry::{Constant, ConstantTensor, ConstantVector, FnTensor};
    use std::sync::Arc;

    fn identity() -> ConstantTensor {
        ConstantTensor(DMatrix::identity(2, 2))
    }

    fn exact_stiffness(space: &GlobalLagrangeSpace, a: &dyn TensorField, q: usize) -> CsrMatrix {
        assemble_stiffness(space, Coefficient::Exact(a), q)
            .unwrap()
            .matrix
    }

    #[test]
    fn p1_reference_triangle() {
        let m = SimplicialComplex::reference_triangle();
        let s = GlobalLagrangeSpace::conforming(&m, 1).unwrap();
        let k = exact_stiffness(&s, &identity(), 2).to_dense();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[(i, j)] - expect[i][j]).abs() < 1e-13);
            }
        }
        let b = assemble_load(
            &s,
            LoadData::Exact {
                source: &Constant(1.0),
                flux: None,
            },
            2,
        )
        .unwrap();
        for v in b {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn row_sums_vanish_and_matrix_is_symmetric() {
        for geo in Geometry::ALL {
            let m = geo.mesh().refine_times(1).unwrap();
            let a = geo.physical_problem().pull_back(geo.map()).coefficient;
            for r in 1..=4 {
                let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
                let k = exact_stiffness(&s, a.as_ref(), 2 * r + 2);
                assert_eq!(k.asymmetry(), 0.0);
                let ones = vec![1.0; k.dim()];
                let mut y = vec![0.0; k.dim()];
                k.matvec(&ones, &mut y);
                let scale = k.max_abs();
                assert!(y.iter().all(|v| v.abs() < 1e-10 * scale), "{geo} r={r}");
            }
        }
    }

    #[test]
    fn linear_in_the_coefficient() {
        let geo = Geometry::Annulus;
        let m = geo.mesh().refine_times(1).unwrap();
        let a = geo.physical_problem().pull_back(geo.map()).coefficient;
        let s = GlobalLagrangeSpace::conforming(&m, 2).unwrap();
        let k1 = exact_stiffness(&s, &identity(), 6);
        let k2 = exact_stiffness(&s, a.as_ref(), 6);
        let two = ConstantTensor(DMatrix::identity(2, 2) * 2.0);
        let kd = exact_stiffness(&s, &two, 6);
        for (x, y) in k1.values().iter().zip(kd.values()) {
            assert_eq!(2.0 * x, *y);
        }
        let a2 = a.clone();
        let sum = FnTensor(move |x: &[f64]| a2.tensor(x).unwrap() + DMatrix::identity(2, 2));
        let ks = exact_stiffness(&s, &sum, 6);
        for ((x, y), z) in k1.values().iter().zip(k2.values()).zip(ks.values()) {
            assert!((x + y - z).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_flux_load_sums_to_zero() {
        let m = builtin::ball_quadrant_mesh().refine_times(1).unwrap();
        for r in 1..=3 {
            let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
            let zero = assemble_load(
                &s,
                LoadData::Exact {
                    source: &Constant(0.0),
                    flux: None,
                },
                4,
            )
            .unwrap();
            assert!(zero.iter().all(|&v| v == 0.0));
            let c = ConstantVector(DVector::from_vec(vec![0.7, -1.3]));
            let b = assemble_load(
                &s,
                LoadData::Exact {
                    source: &Constant(0.0),
                    flux: Some(&c),
                },
                2 * r,
            )
            .unwrap();
            assert!(b.iter().sum::<f64>().abs() < 1e-13);
            assert!(b.iter().any(|v| v.abs() > 1e-3));
        }
    }

    #[test]
    fn quadrature_saturates() {
        for geo in Geometry::ALL {
            let m = geo.mesh().refine_times(2).unwrap();
            let a = geo.physical_problem().pull_back(geo.map()).coefficient;
            for r in 1..=4 {
                let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
                let q = 2 * r + 8;
                let k1 = exact_stiffness(&s, a.as_ref(), q);
                let k2 = exact_stiffness(&s, a.as_ref(), q + 4);
                assert!(k1.max_abs_diff(&k2) < 1e-8 * k2.max_abs(), "{geo} r={r}");
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomial_data() {
        let m = builtin::annulus_mesh().refine_times(1).unwrap();
        let problem = ParametricProblem {
            coefficient: Arc::new(FnTensor(|x: &[f64]| {
                DMatrix::from_row_slice(2, 2, &[1.0 + x[0] * x[1], 0.2, 0.2, 2.0 - x[1] * x[1]])
            })),
            source: Arc::new(Constant(3.0)),
            flux: Arc::new(ConstantVector(DVector::from_vec(vec![1.0, 2.0]))),
        };
        for method in [DataApproximation::Nodal, DataApproximation::L2Projection] {
            let d = interpolate_data(&problem, &m, 2, method).unwrap();
            for c in 0..m.num_cells() {
                let g = SimplexGeometry::of_cell(&m, c);
                let lam = [0.2, 0.5, 0.3];
                let x = g.point_at(&lam);
                let diff = d.coefficient_at(c, &lam) - problem.coefficient.tensor(&x).unwrap();
                assert!(diff.amax() < 1e-12);
                assert!((d.source_at(c, &lam) - 3.0).abs() < 1e-12);
                assert!((d.flux_at(c, &lam)[1] - 2.0).abs() < 1e-12);
            }
        }
    }

    fn centroid_interpolation_error(level: usize) -> f64 {
        let geo = Geometry::Annulus;
        let m = geo.mesh().refine_times(level).unwrap();
        let problem = geo.physical_problem().pull_back(geo.map());
        let d = interpolate_data(&problem, &m, 1, DataApproximation::Nodal).unwrap();
        let lam = [1.0 / 3.0; 3];
        (0..m.num_cells())
            .map(|c| {
                let x = m.cell_centroid(c);
                (d.coefficient_at(c, &lam) - problem.coefficient.tensor(&x).unwrap()).amax()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn data_interpolation_converges_quadratically() {
        let ratio = centroid_interpolation_error(3) / centroid_interpolation_error(4);
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn interpolated_stiffness_approaches_exact() {
        let geo = Geometry::Annulus;
        let problem = geo.physical_problem().pull_back(geo.map());
        for r in 1..=2 {
            let mut gaps = Vec::new();
            let mut hs = Vec::new();
            for level in 2..=5 {
                let m = geo.mesh().refine_times(level).unwrap();
                let s = GlobalLagrangeSpace::conforming(&m, r).unwrap();
                let exact = exact_stiffness(&s, problem.coefficient.as_ref(), 12);
                let d = interpolate_data(&problem, &m, r, DataApproximation::Nodal).unwrap();
                let interp = assemble_stiffness(&s, Coefficient::Interpolated(&d), 2 * r + 2)
                    .unwrap()
                    .matrix;
                gaps.push(exact.max_abs_diff(&interp));
                hs.push(m.mesh_size());
            }
            let rate = (gaps[2] / gaps[3]).ln() / (hs[2] / hs[3]).ln();
            assert!(
                (rate - (r + 1) as f64).abs() <= 0.3,
                "r={r} gaps {gaps:?} rate {rate}"
            );
        }
    }

    #[test]
    fn dirichlet_elimination() {
        let m = builtin::annulus_mesh();
        let s = GlobalLagrangeSpace::conforming(&m, 1).unwrap();
        let k = exact_stiffness(&s, &identity(), 2);
        let sys = SparseSymmetricSystem {
            rhs: vec![1.0; k.dim()],
            matrix: k.clone(),
            dirichlet: s.dirichlet_mask().to_vec(),
        };
        assert_eq!(
            apply_dirichlet(&sys).unwrap_err(),
            AssemblyError::AllDofsConstrained
        );

        let free = SparseSymmetricSystem {
            dirichlet: vec![false; k.dim()],
            ..sys
        };
        let red = apply_dirichlet(&free).unwrap();
        assert_eq!(red.matrix, k);

        let m1 = m.refine_uniform().unwrap();
        let s1 = GlobalLagrangeSpace::conforming(&m1, 1).unwrap();
        let k1 = exact_stiffness(&s1, &identity(), 2);
        let sys1 = SparseSymmetricSystem {
            rhs: (0..k1.dim()).map(|i| i as f64).collect(),
            matrix: k1,
            dirichlet: s1.dirichlet_mask().to_vec(),
        };
        let red = apply_dirichlet(&sys1).unwrap();
        assert_eq!(red.free.len(), 8);
        let x = red.expand(&vec![1.0; red.free.len()]);
        for (g, v) in x.iter().enumerate() {
            assert_eq!(*v, if s1.dirichlet_mask()[g] { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn reduced_system_is_positive_definite() {
        let geo = Geometry::Annulus;
        let m = geo.mesh().refine_times(2).unwrap();
        let problem = geo.physical_problem().pull_back(geo.map());
        let s = GlobalLagrangeSpace::conforming(&m, 1).unwrap();
        let k = exact_stiffness(&s, problem.coefficient.as_ref(), 4);
        let sys = SparseSymmetricSystem {
            rhs: vec![0.0; k.dim()],
            matrix: k,
            dirichlet: s.dirichlet_mask().to_vec(),
        };
        let red = apply_dirichlet(&sys).unwrap();
        let eig = red.matrix.to_dense().symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn matrix_market_export() {
        let m = SimplicialComplex::reference_triangle();
        let s = GlobalLagrangeSpace::conforming(&m, 1).unwrap();
        let k = exact_stiffness(&s, &identity(), 2);
        let mut buf = Vec::new();
        k.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "%%MatrixMarket matrix coordinate real symmetric");
        assert_eq!(lines[1], "3 3 6");
        assert_eq!(lines.len(), 8);
        let first: Vec<&str> = lines[2].split_whitespace().collect();
        assert_eq!(first[..2], ["1", "1"]);
        assert_eq!(first[2].parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn parallel_matvec_matches_serial() {
        let m = builtin::ball_quadrant_mesh().refine_times(3).unwrap();
        let s = GlobalLagrangeSpace::conforming(&m, 3).unwrap();
        let k = exact_stiffness(&s, &identity(), 4);
        let x: Vec<f64> = (0..k.dim()).map(|i| (i as f64).sin()).collect();
        let (mut y1, mut y2) = (vec![0.0; k.dim()], vec![0.0; k.dim()]);
        k.matvec(&x, &mut y1);
        k.par_matvec(&x, &mut y2);
        assert_eq!(y1, y2);
    }
}
