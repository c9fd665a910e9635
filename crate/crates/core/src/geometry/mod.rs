//! Coordinate transformations and pullbacks of coefficients and data.
//!
//! A transformation Φ maps the polyhedral parametric domain onto the curved
//! physical domain. Pulling a diffusion problem back along Φ produces the
//! parametric coefficient `|det DΦ| DΦ⁻¹ (Ă∘Φ) DΦ⁻ᵀ`, the source
//! `|det DΦ| (f̆∘Φ)` and the Piola-transformed flux `|det DΦ| DΦ⁻¹ (ğ∘Φ)`.

pub mod builtin;
mod fields;

pub use fields::{
    Constant, ConstantTensor, ConstantVector, FnScalar, FnSmooth, FnTensor, FnVector, ScalarField,
    SmoothFunction, TensorField, VectorField,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("singular jacobian (det = {det:e})")]
    SingularJacobian { det: f64 },
    #[error("transformation evaluated at the origin")]
    EvaluationAtOrigin,
    #[error("point {0:?} lies outside the transformation's domain")]
    OutsideDomain(Vec<f64>),
    #[error("field evaluation failed: {0}")]
    Evaluation(String),
}

/// A piecewise smooth, bi-Lipschitz map x̂ ↦ x̆ between domains in ℝⁿ.
pub trait CoordinateTransformation: Send + Sync {
    fn dim(&self) -> usize;

    fn map(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError>;

    /// DΦ(x̂), with entry (i, j) = ∂Φ_i/∂x̂_j.
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError>;

    /// DΦ(x̂) taken as the limit from within `region`, for points on an
    /// interface where the one-sided Jacobians differ.
    fn jacobian_in_region(&self, x: &[f64], _region: i32) -> Result<DMatrix<f64>, GeometryError> {
        self.jacobian(x)
    }

    /// Φ⁻¹, when the transformation provides one.
    fn inverse_map(&self, _y: &[f64]) -> Option<Result<Vec<f64>, GeometryError>> {
        None
    }

    /// Smoothness region containing x̂. Points on an interface between
    /// regions belong to the region with the lower tag.
    fn region_of(&self, x: &[f64]) -> i32;
}

/// Φ = id.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl CoordinateTransformation for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        Ok(x.to_vec())
    }

    fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        Ok(DMatrix::identity(self.0, self.0))
    }

    fn inverse_map(&self, y: &[f64]) -> Option<Result<Vec<f64>, GeometryError>> {
        Some(Ok(y.to_vec()))
    }

    fn region_of(&self, _x: &[f64]) -> i32 {
        0
    }
}

/// Φ(x̂) = A x̂ + b.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn scaling(n: usize, factor: f64) -> Self {
        AffineMap {
            matrix: DMatrix::identity(n, n) * factor,
            offset: DVector::zeros(n),
        }
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        AffineMap {
            matrix: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            offset: DVector::zeros(2),
        }
    }
}

impl CoordinateTransformation for AffineMap {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        Ok(
            (&self.matrix * DVector::from_column_slice(x) + &self.offset)
                .as_slice()
                .to_vec(),
        )
    }

    fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        Ok(self.matrix.clone())
    }

    fn inverse_map(&self, y: &[f64]) -> Option<Result<Vec<f64>, GeometryError>> {
        let inv = self.matrix.clone().try_inverse()?;
        Some(Ok((inv * (DVector::from_column_slice(y) - &self.offset))
            .as_slice()
            .to_vec()))
    }

    fn region_of(&self, _x: &[f64]) -> i32 {
        0
    }
}

/// Determinant and inverse of the Jacobian at one point.
pub(crate) struct JacobianData {
    pub det: f64,
    pub inv: DMatrix<f64>,
}

pub(crate) fn jacobian_data(
    map: &dyn CoordinateTransformation,
    x: &[f64],
) -> Result<JacobianData, GeometryError> {
    invert_jacobian(map.jacobian(x)?)
}

/// Jacobian data at `x` from the smoothness region containing `inside`.
pub(crate) fn jacobian_data_toward(
    map: &dyn CoordinateTransformation,
    x: &[f64],
    inside: &[f64],
) -> Result<JacobianData, GeometryError> {
    invert_jacobian(map.jacobian_in_region(x, map.region_of(inside))?)
}

fn invert_jacobian(jac: DMatrix<f64>) -> Result<JacobianData, GeometryError> {
    let n = jac.nrows();
    let det = jac.determinant();
    let scale = jac.norm().powi(n as i32);
    if !(det.abs() > 1e-14 * scale) {
        return Err(GeometryError::SingularJacobian { det });
    }
    let inv = jac
        .try_inverse()
        .ok_or(GeometryError::SingularJacobian { det })?;
    Ok(JacobianData { det, inv })
}

/// Â = |det DΦ| DΦ⁻¹ (Ă∘Φ) DΦ⁻ᵀ, symmetrized after the triple product.
pub struct PulledBackCoefficient {
    map: Arc<dyn CoordinateTransformation>,
    coefficient: Arc<dyn TensorField>,
}

impl PulledBackCoefficient {
    fn eval(&self, x: &[f64], j: JacobianData) -> Result<DMatrix<f64>, GeometryError> {
        let a = self.coefficient.tensor(&self.map.map(x)?)?;
        let p = &j.inv * a * j.inv.transpose() * j.det.abs();
        Ok((&p + p.transpose()) * 0.5)
    }
}

impl TensorField for PulledBackCoefficient {
    fn tensor(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.eval(x, jacobian_data(self.map.as_ref(), x)?)
    }

    fn tensor_toward(&self, x: &[f64], inside: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.eval(x, jacobian_data_toward(self.map.as_ref(), x, inside)?)
    }
}

pub fn pullback_coefficient(
    map: Arc<dyn CoordinateTransformation>,
    coefficient: Arc<dyn TensorField>,
) -> PulledBackCoefficient {
    PulledBackCoefficient { map, coefficient }
}

/// f̂ = |det DΦ| (f̆∘Φ).
pub struct PulledBackSource {
    map: Arc<dyn CoordinateTransformation>,
    source: Arc<dyn ScalarField>,
}

impl ScalarField for PulledBackSource {
    fn value(&self, x: &[f64]) -> Result<f64, GeometryError> {
        let j = jacobian_data(self.map.as_ref(), x)?;
        Ok(j.det.abs() * self.source.value(&self.map.map(x)?)?)
    }

    fn value_toward(&self, x: &[f64], inside: &[f64]) -> Result<f64, GeometryError> {
        let j = jacobian_data_toward(self.map.as_ref(), x, inside)?;
        Ok(j.det.abs() * self.source.value(&self.map.map(x)?)?)
    }
}

/// ĝ = |det DΦ| DΦ⁻¹ (ğ∘Φ), the Piola transform of the flux.
pub struct PulledBackFlux {
    map: Arc<dyn CoordinateTransformation>,
    flux: Arc<dyn VectorField>,
}

impl VectorField for PulledBackFlux {
    fn vector(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let j = jacobian_data(self.map.as_ref(), x)?;
        let g = self.flux.vector(&self.map.map(x)?)?;
        Ok(j.inv * g * j.det.abs())
    }

    fn vector_toward(&self, x: &[f64], inside: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let j = jacobian_data_toward(self.map.as_ref(), x, inside)?;
        let g = self.flux.vector(&self.map.map(x)?)?;
        Ok(j.inv * g * j.det.abs())
    }
}

pub fn pullback_rhs(
    map: Arc<dyn CoordinateTransformation>,
    source: Arc<dyn ScalarField>,
    flux: Arc<dyn VectorField>,
) -> (PulledBackSource, PulledBackFlux) {
    (
        PulledBackSource {
            map: map.clone(),
            source,
        },
        PulledBackFlux { map, flux },
    )
}

/// û = ŭ∘Φ with ∇û = DΦᵀ (∇ŭ∘Φ).
pub struct PulledBackFunction {
    map: Arc<dyn CoordinateTransformation>,
    function: Arc<dyn SmoothFunction>,
}

impl ScalarField for PulledBackFunction {
    fn value(&self, x: &[f64]) -> Result<f64, GeometryError> {
        self.function.value(&self.map.map(x)?)
    }
}

impl SmoothFunction for PulledBackFunction {
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let jac = self.map.jacobian(x)?;
        Ok(jac.transpose() * self.function.gradient(&self.map.map(x)?)?)
    }
}

pub fn pullback_scalar(
    map: Arc<dyn CoordinateTransformation>,
    function: Arc<dyn SmoothFunction>,
) -> PulledBackFunction {
    PulledBackFunction { map, function }
}

/// Diffusion problem data on the physical domain.
#[derive(Clone)]
pub struct PhysicalProblem {
    pub coefficient: Arc<dyn TensorField>,
    pub source: Arc<dyn ScalarField>,
    pub flux: Arc<dyn VectorField>,
}

/// Diffusion problem data on the parametric domain.
#[derive(Clone)]
pub struct ParametricProblem {
    pub coefficient: Arc<dyn TensorField>,
    pub source: Arc<dyn ScalarField>,
    pub flux: Arc<dyn VectorField>,
}

impl PhysicalProblem {
    pub fn pull_back(&self, map: Arc<dyn CoordinateTransformation>) -> ParametricProblem {
        let (source, flux) = pullback_rhs(map.clone(), self.source.clone(), self.flux.clone());
        ParametricProblem {
            coefficient: Arc::new(pullback_coefficient(map, self.coefficient.clone())),
            source: Arc::new(source),
            flux: Arc::new(flux),
        }
    }
}

/// Centered finite-difference Jacobian, used as an independent check of
/// hand-derived Jacobians.
pub fn finite_difference_jacobian(
    map: &dyn CoordinateTransformation,
    x: &[f64],
    step: f64,
) -> Result<DMatrix<f64>, GeometryError> {
    let n = map.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + step;
        let fp = map.map(&xp)?;
        xp[j] = x[j] - step;
        let fm = map.map(&xp)?;
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Centered finite-difference gradient of a scalar field.
pub fn finite_difference_gradient(
    f: &dyn ScalarField,
    x: &[f64],
    step: f64,
) -> Result<DVector<f64>, GeometryError> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + step;
        let fp = f.value(&xp)?;
        xp[j] = x[j] - step;
        let fm = f.value(&xp)?;
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_tensor() -> Arc<dyn TensorField> {
        Arc::new(ConstantTensor(DMatrix::identity(2, 2)))
    }

    /// Uniform point in the parametric annulus, away from the axes.
    fn annulus_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            let n1 = x.abs() + y.abs();
            if n1 > 0.5 && n1 < 1.0 && x.abs() > 1e-3 && y.abs() > 1e-3 {
                return vec![x, y];
            }
        }
    }

    fn ball_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let x: f64 = rng.random_range(0.0..1.0);
            let y: f64 = rng.random_range(0.0..1.0);
            let n1 = x + y;
            if n1 < 1.0 && (n1 - 0.5).abs() > 1e-3 && x > 1e-3 && y > 1e-3 {
                return vec![x, y];
            }
        }
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn identity_pullback() {
        let c = pullback_coefficient(Arc::new(Identity(2)), identity_tensor());
        let a = c.tensor(&[0.3, -0.7]).unwrap();
        assert_eq!(a, DMatrix::identity(2, 2));
        let (f, g) = pullback_rhs(
            Arc::new(Identity(2)),
            Arc::new(FnScalar(|x: &[f64]| x[0] * x[1])),
            Arc::new(ConstantVector(DVector::from_vec(vec![1.0, 2.0]))),
        );
        assert_eq!(f.value(&[2.0, 3.0]).unwrap(), 6.0);
        assert_eq!(g.vector(&[2.0, 3.0]).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn scaling_pullback_is_conformal_in_2d() {
        let c = pullback_coefficient(Arc::new(AffineMap::scaling(2, 2.0)), identity_tensor());
        let a = c.tensor(&[0.1, 0.2]).unwrap();
        assert!((a - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn rotation_rotates_flux() {
        let theta = 0.7;
        let rot = AffineMap::rotation(theta);
        let (_, g) = pullback_rhs(
            Arc::new(rot.clone()),
            Arc::new(Constant(0.0)),
            Arc::new(ConstantVector(DVector::from_vec(vec![1.0, 0.5]))),
        );
        let got = g.vector(&[0.3, 0.4]).unwrap();
        let want = rot.matrix.transpose() * DVector::from_vec(vec![1.0, 0.5]);
        assert!((got - want).amax() < 1e-15);
    }

    #[test]
    fn annulus_map_values() {
        let m = AnnulusMap;
        assert_eq!(m.map(&[0.75, 0.0]).unwrap(), vec![0.75, 0.0]);
        let y = m.map(&[0.375, 0.375]).unwrap();
        assert!((y[0] - 0.530330).abs() < 1e-6 && (y[1] - 0.530330).abs() < 1e-6);
        assert!((y[0].hypot(y[1]) - 0.75).abs() < 1e-15);
        assert_eq!(m.map(&[0.0, 0.0]), Err(GeometryError::EvaluationAtOrigin));
    }

    #[test]
    fn annulus_norm_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            let x = annulus_point(&mut rng);
            let y = AnnulusMap.map(&x).unwrap();
            assert!((y[0].hypot(y[1]) - (x[0].abs() + x[1].abs())).abs() < 1e-13);
            let back = AnnulusMap.inverse_map(&y).unwrap().unwrap();
            assert!((back[0] - x[0]).abs() < 1e-13 && (back[1] - x[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let maps: [(
            &dyn CoordinateTransformation,
            fn(&mut ChaCha8Rng) -> Vec<f64>,
        ); 2] = [(&AnnulusMap, annulus_point), (&BallQuadrantMap, ball_point)];
        for (map, sample) in maps {
            for _ in 0..100 {
                let x = sample(&mut rng);
                let exact = map.jacobian(&x).unwrap();
                let fd = finite_difference_jacobian(map, &x, 1e-6).unwrap();
                assert!(rel_err(&fd, &exact) < 1e-6, "at {x:?}");
            }
        }
    }

    #[test]
    fn ball_map_values() {
        let m = BallQuadrantMap;
        assert_eq!(m.map(&[0.2, 0.2]).unwrap(), vec![0.2, 0.2]);
        let y = m.map(&[0.5, 0.5]).unwrap();
        assert!((y[0] - 0.707107).abs() < 1e-6 && (y[0].hypot(y[1]) - 1.0).abs() < 1e-14);
        assert!(matches!(
            m.map(&[0.8, 0.8]),
            Err(GeometryError::OutsideDomain(_))
        ));
        assert!(matches!(
            m.map(&[-0.1, 0.2]),
            Err(GeometryError::OutsideDomain(_))
        ));
    }

    #[test]
    fn ball_map_continuity_and_boundary() {
        let m = BallQuadrantMap;
        for t in [0.0, 0.1, 0.37, 0.5, 0.81, 1.0] {
            let dir = [t, 1.0 - t];
            let inner = m
                .map(&[dir[0] * (0.5 - 1e-8), dir[1] * (0.5 - 1e-8)])
                .unwrap();
            let outer = m
                .map(&[dir[0] * (0.5 + 1e-8), dir[1] * (0.5 + 1e-8)])
                .unwrap();
            assert!(((inner[0] - outer[0]).hypot(inner[1] - outer[1])) < 1e-6);
            let b = m.map(&dir).unwrap();
            assert!((b[0].hypot(b[1]) - 1.0).abs() < 1e-12);
            let inside = [dir[0] * 0.4, dir[1] * 0.4];
            assert_eq!(m.map(&inside).unwrap(), inside.to_vec());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let x = ball_point(&mut rng);
            let back = m.inverse_map(&m.map(&x).unwrap()).unwrap().unwrap();
            assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn region_tags_follow_interfaces() {
        assert_eq!(AnnulusMap.region_of(&[0.5, 0.5]), 0);
        assert_eq!(AnnulusMap.region_of(&[0.0, 0.7]), 0);
        assert_eq!(AnnulusMap.region_of(&[-0.5, 0.5]), 1);
        assert_eq!(AnnulusMap.region_of(&[0.5, -0.5]), 2);
        assert_eq!(AnnulusMap.region_of(&[-0.5, -0.5]), 3);
        assert_eq!(BallQuadrantMap.region_of(&[0.25, 0.25]), 0);
        assert_eq!(BallQuadrantMap.region_of(&[0.5, 0.25]), 1);
    }

    #[test]
    fn pulled_back_coefficient_symmetric_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (map, sample) in [
            (
                Arc::new(AnnulusMap) as Arc<dyn CoordinateTransformation>,
                annulus_point as fn(&mut ChaCha8Rng) -> Vec<f64>,
            ),
            (Arc::new(BallQuadrantMap), ball_point),
        ] {
            let c = pullback_coefficient(map, identity_tensor());
            for _ in 0..200 {
                let a = c.tensor(&sample(&mut rng)).unwrap();
                assert_eq!(a, a.transpose());
                assert!(a.clone().symmetric_eigenvalues().min() > 0.0);
            }
        }
        let c = pullback_coefficient(Arc::new(AnnulusMap), identity_tensor());
        let a = c.tensor(&[0.375, 0.375]).unwrap();
        assert_eq!(a, a.transpose());
        assert!(a.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn unit_source_pulls_back_to_jacobian_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let map: Arc<dyn CoordinateTransformation> = Arc::new(AnnulusMap);
        let (f, _) = pullback_rhs(
            map.clone(),
            Arc::new(Constant(1.0)),
            Arc::new(ConstantVector(DVector::zeros(2))),
        );
        for _ in 0..100 {
            let x = annulus_point(&mut rng);
            let fd = finite_difference_jacobian(map.as_ref(), &x, 1e-6)
                .unwrap()
                .determinant()
                .abs();
            assert!((f.value(&x).unwrap() - fd).abs() < 1e-6 * fd);
        }
    }

    #[test]
    fn scalar_pullback() {
        let lin = Arc::new(FnSmooth::new(
            |x: &[f64]| 2.0 * x[0] - x[1],
            |_: &[f64]| DVector::from_vec(vec![2.0, -1.0]),
        ));
        let u = pullback_scalar(Arc::new(Identity(2)), lin);
        assert_eq!(u.value(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(u.gradient(&[1.0, 1.0]).unwrap().as_slice(), &[2.0, -1.0]);

        let u = pullback_scalar(Arc::new(AnnulusMap), Arc::new(AnnulusSolution));
        assert!((u.value(&[0.375, 0.375]).unwrap() - 0.031555468885).abs() < 1e-11);

        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for (map, sol, sample) in [
            (
                Arc::new(AnnulusMap) as Arc<dyn CoordinateTransformation>,
                Arc::new(AnnulusSolution) as Arc<dyn SmoothFunction>,
                annulus_point as fn(&mut ChaCha8Rng) -> Vec<f64>,
            ),
            (
                Arc::new(BallQuadrantMap),
                Arc::new(BallQuadrantSolution),
                ball_point,
            ),
        ] {
            let u = pullback_scalar(map, sol);
            for _ in 0..100 {
                let x = sample(&mut rng);
                let g = u.gradient(&x).unwrap();
                let fd = finite_difference_gradient(&u, &x, 1e-6).unwrap();
                assert!(
                    (&g - &fd).norm() < 1e-6 * g.norm().max(1e-3),
                    "at {x:?}: {g} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn exact_solutions_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..50 {
            let y = AnnulusMap.map(&annulus_point(&mut rng)).unwrap();
            let g = AnnulusSolution.gradient(&y).unwrap();
            let fd = finite_difference_gradient(&AnnulusSolution, &y, 1e-6).unwrap();
            assert!((&g - &fd).norm() < 1e-6 * g.norm().max(1e-3));
        }
        // boundary values vanish
        for t in [0.0, 0.4, 1.3, 2.9] {
            let (s, c) = f64::sin_cos(t);
            assert!(AnnulusSolution.value(&[c, s]).unwrap().abs() < 1e-15);
            assert!(AnnulusSolution.value(&[0.5 * c, 0.5 * s]).unwrap().abs() < 1e-15);
        }
        assert!(BallQuadrantSolution.value(&[0.6, 0.8]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn singular_jacobian_detected() {
        let flat = AffineMap {
            matrix: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
            offset: DVector::zeros(2),
        };
        let c = pullback_coefficient(Arc::new(flat), identity_tensor());
        assert!(matches!(
            c.tensor(&[0.1, 0.1]),
            Err(GeometryError::SingularJacobian { .. })
        ));
    }
}
