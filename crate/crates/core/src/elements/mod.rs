//! Degree-r Lagrange elements on simplices.
//!
//! Basis functions are represented in barycentric coordinates: a degree-r
//! nodal basis function is a homogeneous degree-r polynomial in
//! λ₀, …, λ_d. Because barycentric coordinates are affine invariant, the
//! coefficient matrix is computed once per (d, r) by inverting the
//! Vandermonde matrix of barycentric monomials at the Lagrange points, and
//! physical gradients follow from the chain rule through ∇λ_i.

mod quadrature;

pub use quadrature::{gauss_legendre_unit, quadrature, QuadratureRule, MAX_DEGREE};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::mesh::{Simplex, SimplicialComplex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementError {
    #[error("polynomial degree must be at least 1 (got {0})")]
    InvalidDegree(usize),
    #[error("point {index} lies outside the simplex")]
    PointOutsideSimplex { index: usize },
    #[error("local mass matrix is singular (degenerate simplex)")]
    SingularMassMatrix,
    #[error("no quadrature rule of degree {degree} in dimension {dim}")]
    UnsupportedOrder { dim: usize, degree: usize },
    #[error("operation needs a full-dimensional simplex")]
    NotFullDimensional,
}

/// All multi-indices α ∈ ℕ₀^{parts} with |α| = total, in descending
/// lexicographic order.
pub fn multi_indices(parts: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            rec(parts - 1, total - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, total, &mut Vec::with_capacity(parts), &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// The degree-r nodal Lagrange basis on a d-simplex, in barycentric form.
#[derive(Debug, Clone)]
pub struct LagrangeElement {
    dim: usize,
    degree: usize,
    indices: Vec<Vec<usize>>,
    /// Column k holds the monomial coefficients of basis function k.
    coeffs: DMatrix<f64>,
}

impl LagrangeElement {
    pub fn new(dim: usize, degree: usize) -> Result<Self, ElementError> {
        if degree < 1 {
            return Err(ElementError::InvalidDegree(degree));
        }
        let indices = multi_indices(dim + 1, degree);
        let nb = indices.len();
        let r = degree as f64;
        let mut vander = DMatrix::zeros(nb, nb);
        for (i, alpha) in indices.iter().enumerate() {
            let lambda: Vec<f64> = alpha.iter().map(|&a| a as f64 / r).collect();
            for (j, beta) in indices.iter().enumerate() {
                vander[(i, j)] = monomial(&lambda, beta);
            }
        }
        let coeffs = vander
            .try_inverse()
            .ok_or(ElementError::SingularMassMatrix)?;
        Ok(LagrangeElement {
            dim,
            degree,
            indices,
            coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.indices.len()
    }

    /// Multi-index of each Lagrange point, in basis order.
    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn barycentric_point(&self, k: usize) -> Vec<f64> {
        let r = self.degree as f64;
        self.indices[k].iter().map(|&a| a as f64 / r).collect()
    }

    /// Values of all basis functions at barycentric coordinates `lambda`.
    pub fn values(&self, lambda: &[f64], out: &mut [f64]) {
        let nb = self.num_basis();
        out[..nb].fill(0.0);
        for (j, beta) in self.indices.iter().enumerate() {
            let m = monomial(lambda, beta);
            if m == 0.0 {
                continue;
            }
            for (k, o) in out[..nb].iter_mut().enumerate() {
                *o += self.coeffs[(j, k)] * m;
            }
        }
    }

    /// Partial derivatives ∂φ_k/∂λ_i, stored at `out[k * (dim + 1) + i]`.
    pub fn barycentric_derivatives(&self, lambda: &[f64], out: &mut [f64]) {
        let nb = self.num_basis();
        let np = self.dim + 1;
        out[..nb * np].fill(0.0);
        let mut dm = vec![0.0; np];
        for (j, beta) in self.indices.iter().enumerate() {
            for (i, d) in dm.iter_mut().enumerate() {
                *d = if beta[i] == 0 {
                    0.0
                } else {
                    let mut b = beta.clone();
                    b[i] -= 1;
                    beta[i] as f64 * monomial(lambda, &b)
                };
            }
            for k in 0..nb {
                let c = self.coeffs[(j, k)];
                if c == 0.0 {
                    continue;
                }
                for i in 0..np {
                    out[k * np + i] += c * dm[i];
                }
            }
        }
    }

    /// Values and barycentric derivatives at a list of barycentric points.
    pub fn tabulate(&self, points: &[Vec<f64>]) -> ReferenceTable {
        let nb = self.num_basis();
        let np = self.dim + 1;
        let mut values = vec![0.0; points.len() * nb];
        let mut derivs = vec![0.0; points.len() * nb * np];
        for (q, lam) in points.iter().enumerate() {
            self.values(lam, &mut values[q * nb..(q + 1) * nb]);
            self.barycentric_derivatives(lam, &mut derivs[q * nb * np..(q + 1) * nb * np]);
        }
        ReferenceTable {
            num_points: points.len(),
            num_basis: nb,
            parts: np,
            values,
            derivs,
        }
    }

    /// Reference mass matrix ∫ φ_x φ_y / vol(T), independent of T.
    pub fn normalized_mass(&self) -> Result<DMatrix<f64>, ElementError> {
        let rule = quadrature(self.dim, 2 * self.degree)?;
        let fr = rule.volume_fractions();
        let nb = self.num_basis();
        let mut m = DMatrix::zeros(nb, nb);
        let mut v = vec![0.0; nb];
        for (lam, w) in rule.points().iter().zip(&fr) {
            self.values(lam, &mut v);
            for a in 0..nb {
                for b in 0..nb {
                    m[(a, b)] += w * v[a] * v[b];
                }
            }
        }
        Ok(m)
    }
}

fn monomial(lambda: &[f64], beta: &[usize]) -> f64 {
    lambda
        .iter()
        .zip(beta)
        .map(|(&l, &b)| l.powi(b as i32))
        .product()
}

/// Basis values and barycentric derivatives tabulated at fixed points.
#[derive(Debug, Clone)]
pub struct ReferenceTable {
    pub num_points: usize,
    pub num_basis: usize,
    /// d + 1
    pub parts: usize,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl ReferenceTable {
    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.num_basis..(q + 1) * self.num_basis]
    }

    /// ∂φ_k/∂λ_i at point q for all k, i.
    pub fn derivs_at(&self, q: usize) -> &[f64] {
        let s = self.num_basis * self.parts;
        &self.derivs[q * s..(q + 1) * s]
    }

    /// Physical gradients at point q, given the rows ∇λ_i of the cell;
    /// written to `out[k * n + c]`.
    pub fn gradients_at(&self, q: usize, bary_grads: &DMatrix<f64>, out: &mut [f64]) {
        let n = bary_grads.ncols();
        let d = self.derivs_at(q);
        for k in 0..self.num_basis {
            for c in 0..n {
                let mut g = 0.0;
                for i in 0..self.parts {
                    g += d[k * self.parts + i] * bary_grads[(i, c)];
                }
                out[k * n + c] = g;
            }
        }
    }
}

/// Vertex coordinates of a simplex together with derived affine data.
#[derive(Debug, Clone)]
pub struct SimplexGeometry {
    vertices: Vec<Vec<f64>>,
    volume: f64,
    bary_grads: Option<DMatrix<f64>>,
}

impl SimplexGeometry {
    pub fn new(vertices: Vec<Vec<f64>>) -> Self {
        let refs: Vec<&[f64]> = vertices.iter().map(Vec::as_slice).collect();
        let volume = crate::mesh::simplex_volume(&refs);
        let bary_grads = (vertices.len() == vertices[0].len() + 1)
            .then(|| crate::mesh::barycentric_gradients(&refs))
            .filter(|g| g.iter().all(|x| x.is_finite()));
        SimplexGeometry {
            vertices,
            volume,
            bary_grads,
        }
    }

    pub fn of_simplex(c: &SimplicialComplex, s: &Simplex) -> Self {
        Self::new(s.vertices().iter().map(|&v| c.vertex(v).to_vec()).collect())
    }

    pub fn of_cell(c: &SimplicialComplex, cell: usize) -> Self {
        Self::of_simplex(c, c.cell(cell))
    }

    /// Intrinsic dimension d.
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.vertices.len() {
            for j in i + 1..self.vertices.len() {
                d = d.max(crate::mesh::dist(&self.vertices[i], &self.vertices[j]));
            }
        }
        d
    }

    /// Rows are the gradients ∇λ_i; only for full-dimensional simplices.
    pub fn barycentric_gradients(&self) -> Result<&DMatrix<f64>, ElementError> {
        self.bary_grads
            .as_ref()
            .ok_or(ElementError::NotFullDimensional)
    }

    pub fn point_at(&self, lambda: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ambient_dim()];
        for (l, v) in lambda.iter().zip(&self.vertices) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += l * vi;
            }
        }
        x
    }

    pub fn barycentric(&self, x: &[f64]) -> Result<Vec<f64>, ElementError> {
        let g = self.barycentric_gradients()?;
        let v0 = &self.vertices[0];
        let n = self.ambient_dim();
        let mut lam = vec![0.0; n + 1];
        for i in 1..=n {
            lam[i] = (0..n).map(|c| g[(i, c)] * (x[c] - v0[c])).sum();
        }
        lam[0] = 1.0 - lam[1..].iter().sum::<f64>();
        Ok(lam)
    }
}

/// A Lagrange point of a simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangePoint {
    pub index: Vec<usize>,
    pub barycentric: Vec<f64>,
    pub coords: Vec<f64>,
    /// True iff every entry of `index` is positive.
    pub interior: bool,
}

#[derive(Debug, Clone)]
pub struct LagrangePointSet {
    pub degree: usize,
    pub points: Vec<LagrangePoint>,
}

impl LagrangePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_interior(&self) -> usize {
        self.points.iter().filter(|p| p.interior).count()
    }
}

/// The degree-r Lagrange points (α₀x₀ + ⋯ + α_d x_d)/r, |α| = r.
pub fn lagrange_points(t: &SimplexGeometry, r: usize) -> Result<LagrangePointSet, ElementError> {
    if r < 1 {
        return Err(ElementError::InvalidDegree(r));
    }
    let points = multi_indices(t.dim() + 1, r)
        .into_iter()
        .map(|index| {
            let barycentric: Vec<f64> = index.iter().map(|&a| a as f64 / r as f64).collect();
            LagrangePoint {
                coords: t.point_at(&barycentric),
                interior: index.iter().all(|&a| a > 0),
                barycentric,
                index,
            }
        })
        .collect();
    Ok(LagrangePointSet { degree: r, points })
}

/// Basis values and physical gradients at a list of points.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub degree: usize,
    /// `values[p][k]` = φ_k(pts[p])
    pub values: Vec<Vec<f64>>,
    /// `gradients[p][k]` = ∇φ_k(pts[p])
    pub gradients: Vec<Vec<Vec<f64>>>,
}

/// Evaluates every basis function and its gradient at points inside `t`.
pub fn eval_basis(
    t: &SimplexGeometry,
    element: &LagrangeElement,
    pts: &[Vec<f64>],
) -> Result<LocalBasis, ElementError> {
    let g = t.barycentric_gradients()?;
    let n = t.ambient_dim();
    let nb = element.num_basis();
    let np = n + 1;
    let mut values = Vec::with_capacity(pts.len());
    let mut gradients = Vec::with_capacity(pts.len());
    let mut d = vec![0.0; nb * np];
    for (index, x) in pts.iter().enumerate() {
        let lam = t.barycentric(x)?;
        if lam.iter().any(|&l| l < -1e-10) {
            return Err(ElementError::PointOutsideSimplex { index });
        }
        let mut v = vec![0.0; nb];
        element.values(&lam, &mut v);
        element.barycentric_derivatives(&lam, &mut d);
        let grads = (0..nb)
            .map(|k| {
                (0..n)
                    .map(|c| (0..np).map(|i| d[k * np + i] * g[(i, c)]).sum())
                    .collect()
            })
            .collect();
        values.push(v);
        gradients.push(grads);
    }
    Ok(LocalBasis {
        degree: element.degree(),
        values,
        gradients,
    })
}

/// Dual basis Ψ_x = Σ_y coeffs[(x, y)] Φ_y with ∫_T Ψ_x Φ_y = δ_xy.
#[derive(Debug, Clone)]
pub struct DualBasis {
    pub degree: usize,
    pub coeffs: DMatrix<f64>,
}

impl DualBasis {
    /// Values of all Ψ_x at barycentric coordinates `lambda`.
    pub fn values(&self, element: &LagrangeElement, lambda: &[f64]) -> Vec<f64> {
        let mut phi = vec![0.0; element.num_basis()];
        element.values(lambda, &mut phi);
        (0..phi.len())
            .map(|x| (0..phi.len()).map(|y| self.coeffs[(x, y)] * phi[y]).sum())
            .collect()
    }
}

/// Solves the local mass-matrix system for the dual basis of `t`. Works for
/// simplices of any intrinsic dimension (cells and facets).
pub fn dual_basis(
    t: &SimplexGeometry,
    element: &LagrangeElement,
) -> Result<DualBasis, ElementError> {
    if !(t.volume() > 0.0) {
        return Err(ElementError::SingularMassMatrix);
    }
    let m = element.normalized_mass()? * t.volume();
    let coeffs = m.try_inverse().ok_or(ElementError::SingularMassMatrix)?;
    Ok(DualBasis {
        degree: element.degree(),
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_triangle() -> SimplexGeometry {
        SimplexGeometry::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]])
    }

    fn random_triangle(rng: &mut ChaCha8Rng) -> SimplexGeometry {
        loop {
            let v: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                .collect();
            let t = SimplexGeometry::new(v);
            if t.volume() > 0.1 {
                return t;
            }
        }
    }

    fn random_bary(rng: &mut ChaCha8Rng) -> Vec<f64> {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        let (a, b) = if a + b > 1.0 {
            (1.0 - a, 1.0 - b)
        } else {
            (a, b)
        };
        vec![1.0 - a - b, a, b]
    }

    #[test]
    fn lagrange_point_counts() {
        let t = unit_triangle();
        let p1 = lagrange_points(&t, 1).unwrap();
        assert_eq!(p1.len(), 3);
        assert_eq!(p1.num_interior(), 0);
        let p2 = lagrange_points(&t, 2).unwrap();
        assert_eq!(p2.len(), 6);
        assert_eq!(p2.num_interior(), 0);
        let mids: Vec<&LagrangePoint> = p2.points.iter().filter(|p| p.index.contains(&1)).collect();
        assert_eq!(mids.len(), 3);
        let p3 = lagrange_points(&t, 3).unwrap();
        assert_eq!(p3.len(), 10);
        assert_eq!(p3.num_interior(), 1);
        let c = p3.points.iter().find(|p| p.interior).unwrap();
        assert!((c.coords[0] - 1.0 / 3.0).abs() < 1e-15 && (c.coords[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            lagrange_points(&t, 0),
            Err(ElementError::InvalidDegree(0))
        ));
        for r in 1..=6 {
            assert_eq!(lagrange_points(&t, r).unwrap().len(), binomial(r + 2, 2));
        }
    }

    #[test]
    fn facet_points_embed() {
        // Lagrange points of an edge are the cell points with the opposite index zero.
        let t = unit_triangle();
        let edge = SimplexGeometry::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        for r in 1..=4 {
            let cell = lagrange_points(&t, r).unwrap();
            for p in lagrange_points(&edge, r).unwrap().points {
                assert!(cell.points.iter().any(|q| q.index[0] == 0
                    && (q.coords[0] - p.coords[0]).abs() < 1e-15
                    && (q.coords[1] - p.coords[1]).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn p1_values_and_gradients() {
        let t = unit_triangle();
        let e = LagrangeElement::new(2, 1).unwrap();
        let b = eval_basis(&t, &e, &[vec![1.0 / 3.0, 1.0 / 3.0]]).unwrap();
        for v in &b.values[0] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let expected = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        for (g, e) in b.gradients[0].iter().zip(expected) {
            assert!((g[0] - e[0]).abs() < 1e-14 && (g[1] - e[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn kronecker_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for r in 1..=4 {
            let e = LagrangeElement::new(2, r).unwrap();
            let t = random_triangle(&mut rng);
            let pts: Vec<Vec<f64>> = lagrange_points(&t, r)
                .unwrap()
                .points
                .into_iter()
                .map(|p| p.coords)
                .collect();
            let b = eval_basis(&t, &e, &pts).unwrap();
            for (i, row) in b.values.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    let want = if i == k { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-12, "r={r} i={i} k={k} v={v}");
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for r in 1..=4 {
            let e = LagrangeElement::new(2, r).unwrap();
            let t = random_triangle(&mut rng);
            let pts: Vec<Vec<f64>> = (0..1000)
                .map(|_| t.point_at(&random_bary(&mut rng)))
                .collect();
            let b = eval_basis(&t, &e, &pts).unwrap();
            for (vals, grads) in b.values.iter().zip(&b.gradients) {
                assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let gx: f64 = grads.iter().map(|g| g[0]).sum();
                let gy: f64 = grads.iter().map(|g| g[1]).sum();
                assert!(gx.hypot(gy) < 1e-10);
            }
        }
    }

    #[test]
    fn polynomial_reproduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for r in 1..=4 {
            let e = LagrangeElement::new(2, r).unwrap();
            let t = random_triangle(&mut rng);
            // random polynomial of total degree r
            let coeffs: Vec<((i32, i32), f64)> = (0..=r as i32)
                .flat_map(|a| (0..=(r as i32 - a)).map(move |b| (a, b)))
                .map(|ab| (ab, rng.random_range(-1.0..1.0)))
                .collect();
            let p = |x: &[f64]| -> f64 {
                coeffs
                    .iter()
                    .map(|&((a, b), c)| c * x[0].powi(a) * x[1].powi(b))
                    .sum()
            };
            let nodes = lagrange_points(&t, r).unwrap();
            let nodal: Vec<f64> = nodes.points.iter().map(|n| p(&n.coords)).collect();
            let pts: Vec<Vec<f64>> = (0..200)
                .map(|_| t.point_at(&random_bary(&mut rng)))
                .collect();
            let b = eval_basis(&t, &e, &pts).unwrap();
            for (x, vals) in pts.iter().zip(&b.values) {
                let rec: f64 = vals.iter().zip(&nodal).map(|(v, n)| v * n).sum();
                assert!((rec - p(x)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn outside_point_rejected() {
        let e = LagrangeElement::new(2, 1).unwrap();
        let err = eval_basis(&unit_triangle(), &e, &[vec![0.2, 0.2], vec![1.0, 1.0]]).unwrap_err();
        assert_eq!(err, ElementError::PointOutsideSimplex { index: 1 });
    }

    #[test]
    fn p1_dual_basis_by_hand() {
        let e = LagrangeElement::new(2, 1).unwrap();
        let d = dual_basis(&unit_triangle(), &e).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                let want = if x == y { 18.0 } else { -6.0 };
                assert!((d.coeffs[(x, y)] - want).abs() < 1e-12);
            }
        }
    }

    fn biorthogonality(t: &SimplexGeometry, e: &LagrangeElement) -> DMatrix<f64> {
        let d = dual_basis(t, e).unwrap();
        let rule = quadrature(t.dim(), 2 * e.degree()).unwrap();
        let nb = e.num_basis();
        let mut m = DMatrix::zeros(nb, nb);
        let mut phi = vec![0.0; nb];
        for (lam, w) in rule.points().iter().zip(rule.volume_fractions()) {
            e.values(lam, &mut phi);
            let psi = d.values(e, lam);
            for x in 0..nb {
                for y in 0..nb {
                    m[(x, y)] += w * t.volume() * psi[x] * phi[y];
                }
            }
        }
        m
    }

    #[test]
    fn biorthogonality_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for r in 1..=4 {
            let e = LagrangeElement::new(2, r).unwrap();
            let m = biorthogonality(&random_triangle(&mut rng), &e);
            assert!((m - DMatrix::identity(e.num_basis(), e.num_basis())).amax() < 1e-11);
            // facets too
            let f = LagrangeElement::new(1, r).unwrap();
            let edge = SimplexGeometry::new(vec![vec![0.3, 0.1], vec![-0.4, 0.9]]);
            let m = biorthogonality(&edge, &f);
            assert!((m - DMatrix::identity(r + 1, r + 1)).amax() < 1e-11);
        }
    }

    #[test]
    fn dual_basis_scaling() {
        let e = LagrangeElement::new(2, 2).unwrap();
        let t = unit_triangle();
        let t2 = SimplexGeometry::new(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]]);
        let d1 = dual_basis(&t, &e).unwrap();
        let d2 = dual_basis(&t2, &e).unwrap();
        assert!((d2.coeffs * 4.0 - d1.coeffs).amax() < 1e-10);
    }

    #[test]
    fn basis_l2_norm_scaling() {
        // ‖Φ‖_{L²(2T)} = 2^{d/2} ‖Φ‖_{L²(T)} with d = 2
        let e = LagrangeElement::new(2, 3).unwrap();
        let m = e.normalized_mass().unwrap();
        let t = unit_triangle();
        let t2 = SimplexGeometry::new(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]]);
        for k in 0..e.num_basis() {
            let n1 = (m[(k, k)] * t.volume()).sqrt();
            let n2 = (m[(k, k)] * t2.volume()).sqrt();
            assert!((n2 / n1 - 2.0).abs() < 1e-10);
        }
    }
}
