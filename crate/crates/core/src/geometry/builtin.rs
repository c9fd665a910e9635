//! The two built-in geometries: the annulus and the positive quadrant of the
//! unit ball, each with its transformation, coarse parametric mesh and model
//! problem with a known solution.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{
    ConstantTensor, ConstantVector, CoordinateTransformation, FnScalar, GeometryError,
    PhysicalProblem, ScalarField, SmoothFunction,
};
use crate::mesh::{Point, SimplicialComplex};

fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sign vector of x with sign(0) = +1; the gradient of ‖x‖₁ away from the axes.
fn signs(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
        .collect()
}

/// J = s I + x ∇sᵀ for maps of the form Φ(x) = s(x) x.
fn radial_jacobian(x: &[f64], s: f64, grad_s: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { s } else { 0.0 } + x[i] * grad_s[j])
}

/// Annulus Jacobian with the gradient of ‖x‖₁ taken as `sg`.
fn annulus_jacobian(x: &[f64], sg: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    let n2 = norm2(x);
    if n2 == 0.0 {
        return Err(GeometryError::EvaluationAtOrigin);
    }
    let n1 = norm1(x);
    let grad: Vec<f64> = x
        .iter()
        .zip(sg)
        .map(|(&xi, &si)| si / n2 - n1 * xi / (n2 * n2 * n2))
        .collect();
    Ok(radial_jacobian(x, n1 / n2, &grad))
}

/// Φ(x̂) = (‖x̂‖₁ / ‖x̂‖₂) x̂, from the Manhattan annulus ½ < ‖x̂‖₁ < 1 onto the
/// Euclidean annulus ½ < ‖x̆‖₂ < 1. Smooth on each coordinate orthant.
#[derive(Debug, Clone, Copy)]
pub struct AnnulusMap;

impl CoordinateTransformation for AnnulusMap {
    fn dim(&self) -> usize {
        2
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let n2 = norm2(x);
        if n2 == 0.0 {
            return Err(GeometryError::EvaluationAtOrigin);
        }
        let s = norm1(x) / n2;
        Ok(x.iter().map(|v| s * v).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        annulus_jacobian(x, &signs(x))
    }

    fn jacobian_in_region(&self, x: &[f64], region: i32) -> Result<DMatrix<f64>, GeometryError> {
        let sg: Vec<f64> = (0..x.len())
            .map(|i| if region & (1 << i) != 0 { -1.0 } else { 1.0 })
            .collect();
        annulus_jacobian(x, &sg)
    }

    fn inverse_map(&self, y: &[f64]) -> Option<Result<Vec<f64>, GeometryError>> {
        let n1 = norm1(y);
        if n1 == 0.0 {
            return Some(Err(GeometryError::EvaluationAtOrigin));
        }
        let s = norm2(y) / n1;
        Some(Ok(y.iter().map(|v| s * v).collect()))
    }

    /// Orthant index: bit i is set when x_i < 0.
    fn region_of(&self, x: &[f64]) -> i32 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| if v < 0.0 { 1 << i } else { 0 })
            .sum()
    }
}

/// The identity for ‖x̂‖₁ ≤ ½ and
/// (‖x̂‖₁⁻¹ − ‖x̂‖₂⁻¹ + 2‖x̂‖₁/‖x̂‖₂ − 1) x̂ for ½ < ‖x̂‖₁ ≤ 1, mapping the
/// positive quadrant of the Manhattan unit ball onto that of the Euclidean one.
#[derive(Debug, Clone, Copy)]
pub struct BallQuadrantMap;

const DOMAIN_TOL: f64 = 1e-12;

impl BallQuadrantMap {
    fn check(x: &[f64]) -> Result<f64, GeometryError> {
        let n1 = norm1(x);
        if x.iter().any(|&v| v < -DOMAIN_TOL) || n1 > 1.0 + DOMAIN_TOL {
            return Err(GeometryError::OutsideDomain(x.to_vec()));
        }
        Ok(n1)
    }
}

impl CoordinateTransformation for BallQuadrantMap {
    fn dim(&self) -> usize {
        2
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let n1 = Self::check(x)?;
        if n1 <= 0.5 {
            return Ok(x.to_vec());
        }
        let n2 = norm2(x);
        let s = 1.0 / n1 - 1.0 / n2 + 2.0 * n1 / n2 - 1.0;
        Ok(x.iter().map(|v| s * v).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let n1 = Self::check(x)?;
        self.jacobian_in_region(x, if n1 <= 0.5 { 0 } else { 1 })
    }

    fn jacobian_in_region(&self, x: &[f64], region: i32) -> Result<DMatrix<f64>, GeometryError> {
        let n1 = Self::check(x)?;
        let n = x.len();
        if region == 0 {
            return Ok(DMatrix::identity(n, n));
        }
        let n2 = norm2(x);
        let n2c = n2 * n2 * n2;
        let s = 1.0 / n1 - 1.0 / n2 + 2.0 * n1 / n2 - 1.0;
        let sg = signs(x);
        let grad: Vec<f64> = x
            .iter()
            .zip(&sg)
            .map(|(&xi, &si)| -si / (n1 * n1) + xi / n2c + 2.0 * si / n2 - 2.0 * n1 * xi / n2c)
            .collect();
        Ok(radial_jacobian(x, s, &grad))
    }

    /// Rays through the origin are invariant, and along a ray the outer
    /// formula is affine in the scaling parameter, so Ψ⁻¹ has a closed form.
    fn inverse_map(&self, y: &[f64]) -> Option<Result<Vec<f64>, GeometryError>> {
        let a = norm1(y);
        if a <= 0.5 {
            return Some(Ok(y.to_vec()));
        }
        let b = norm2(y);
        let t = (1.0 - 1.0 / a + 1.0 / b) / (2.0 * a / b - 1.0);
        Some(Ok(y.iter().map(|v| t * v).collect()))
    }

    /// 0 on the inner triangle ‖x̂‖₁ ≤ ½, 1 on the outer band.
    fn region_of(&self, x: &[f64]) -> i32 {
        if norm1(x) <= 0.5 {
            0
        } else {
            1
        }
    }
}

/// Builds a mesh with region tags from `map` and the whole boundary Dirichlet.
pub fn tagged_mesh(
    vertices: &[[f64; 2]],
    cells: &[Vec<usize>],
    map: &dyn CoordinateTransformation,
) -> SimplicialComplex {
    let pts: Vec<Point> = vertices.iter().map(|&v| Point::from(v)).collect();
    let untagged = SimplicialComplex::build(&pts, cells, &[], &[]).expect("built-in mesh is valid");
    let tags: Vec<i32> = (0..untagged.num_cells())
        .map(|c| map.region_of(&untagged.cell_centroid(c)))
        .collect();
    let boundary: Vec<Vec<usize>> = untagged
        .boundary_facets()
        .map(|f| untagged.facet(f).vertices().to_vec())
        .collect();
    SimplicialComplex::build(&pts, cells, &boundary, &tags).expect("built-in mesh is valid")
}

/// Eight-triangle mesh of the parametric annulus, two cells per quadrant,
/// with the whole boundary marked Dirichlet.
///
/// Vertex order: outer (1,0), (0,1), (−1,0), (0,−1), then the inner
/// vertices at half that distance in the same order. In each quadrant the
/// diagonal runs from the outer vertex on the counter-clockwise-first axis
/// to the inner vertex on the next axis.
pub fn annulus_mesh() -> SimplicialComplex {
    let v = [
        [1.0, 0.0],
        [0.0, 1.0],
        [-1.0, 0.0],
        [0.0, -1.0],
        [0.5, 0.0],
        [0.0, 0.5],
        [-0.5, 0.0],
        [0.0, -0.5],
    ];
    let cells = vec![
        vec![0, 4, 5],
        vec![0, 5, 1],
        vec![1, 5, 6],
        vec![1, 6, 2],
        vec![2, 6, 7],
        vec![2, 7, 3],
        vec![3, 7, 4],
        vec![3, 4, 0],
    ];
    tagged_mesh(&v, &cells, &AnnulusMap)
}

/// Three-triangle mesh of the parametric ball quadrant: the inner triangle
/// ‖x̂‖₁ ≤ ½ and two cells covering the outer band. Whole boundary Dirichlet.
pub fn ball_quadrant_mesh() -> SimplicialComplex {
    let v = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [1.0, 0.0], [0.0, 1.0]];
    let cells = vec![vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4]];
    tagged_mesh(&v, &cells, &BallQuadrantMap)
}

/// ŭ = ¼ + 3 ln(x² + y²) / (32 ln 2) − (x² + y²)/4, solving −Δŭ = 1 on the
/// annulus with zero boundary values.
#[derive(Debug, Clone, Copy)]
pub struct AnnulusSolution;

impl ScalarField for AnnulusSolution {
    fn value(&self, x: &[f64]) -> Result<f64, GeometryError> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        Ok(0.25 + 3.0 * r2.ln() / (32.0 * std::f64::consts::LN_2) - r2 / 4.0)
    }
}

impl SmoothFunction for AnnulusSolution {
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let c = 3.0 / (16.0 * std::f64::consts::LN_2 * r2) - 0.5;
        Ok(DVector::from_vec(vec![c * x[0], c * x[1]]))
    }
}

/// ŭ = x²y²(1 − x² − y²), vanishing on the boundary of the ball quadrant.
#[derive(Debug, Clone, Copy)]
pub struct BallQuadrantSolution;

impl ScalarField for BallQuadrantSolution {
    fn value(&self, x: &[f64]) -> Result<f64, GeometryError> {
        let (a, b) = (x[0], x[1]);
        Ok(a * a * b * b * (1.0 - a * a - b * b))
    }
}

impl SmoothFunction for BallQuadrantSolution {
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let (a, b) = (x[0], x[1]);
        let gx = 2.0 * a * b * b - 4.0 * a.powi(3) * b * b - 2.0 * a * b.powi(4);
        let gy = 2.0 * a * a * b - 2.0 * a.powi(4) * b - 4.0 * a * a * b.powi(3);
        Ok(DVector::from_vec(vec![gx, gy]))
    }
}

/// −Δŭ for [`BallQuadrantSolution`].
pub fn ball_quadrant_source(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    24.0 * a * a * b * b - 2.0 * (a * a + b * b) + 2.0 * (a.powi(4) + b.powi(4))
}

/// The built-in experiment geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Annulus,
    BallQuadrant,
}

impl Geometry {
    pub const ALL: [Geometry; 2] = [Geometry::Annulus, Geometry::BallQuadrant];

    pub fn name(self) -> &'static str {
        match self {
            Geometry::Annulus => "anulus",
            Geometry::BallQuadrant => "ball-quadrant",
        }
    }

    pub fn mesh(self) -> SimplicialComplex {
        match self {
            Geometry::Annulus => annulus_mesh(),
            Geometry::BallQuadrant => ball_quadrant_mesh(),
        }
    }

    pub fn map(self) -> Arc<dyn CoordinateTransformation> {
        match self {
            Geometry::Annulus => Arc::new(AnnulusMap),
            Geometry::BallQuadrant => Arc::new(BallQuadrantMap),
        }
    }

    /// Poisson problem −Δŭ = f̆ with Ă = I and ğ = 0.
    pub fn physical_problem(self) -> PhysicalProblem {
        let source: Arc<dyn ScalarField> = match self {
            Geometry::Annulus => Arc::new(super::Constant(1.0)),
            Geometry::BallQuadrant => Arc::new(FnScalar(ball_quadrant_source)),
        };
        PhysicalProblem {
            coefficient: Arc::new(ConstantTensor(DMatrix::identity(2, 2))),
            source,
            flux: Arc::new(ConstantVector(DVector::zeros(2))),
        }
    }

    /// The physical domain in polar coordinates: radii and angles.
    pub fn polar_extent(self) -> ([f64; 2], [f64; 2]) {
        match self {
            Geometry::Annulus => ([0.5, 1.0], [0.0, 2.0 * std::f64::consts::PI]),
            Geometry::BallQuadrant => ([0.0, 1.0], [0.0, std::f64::consts::FRAC_PI_2]),
        }
    }

    pub fn physical_solution(self) -> Arc<dyn SmoothFunction> {
        match self {
            Geometry::Annulus => Arc::new(AnnulusSolution),
            Geometry::BallQuadrant => Arc::new(BallQuadrantSolution),
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Geometry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "anulus" | "annulus" => Ok(Geometry::Annulus),
            "ball-quadrant" | "ball" => Ok(Geometry::BallQuadrant),
            other => Err(format!(
                "unknown geometry `{other}` (expected `anulus` or `ball-quadrant`)"
            )),
        }
    }
}
