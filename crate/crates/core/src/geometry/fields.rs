//! Evaluable scalar, vector and matrix fields.

use nalgebra::{DMatrix, DVector};

use super::GeometryError;

/// Fields may be piecewise smooth. The `*_toward` methods evaluate at `x`
/// as the limit from the piece containing `inside`, which matters only for
/// points on an interface between pieces.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> Result<f64, GeometryError>;

    fn value_toward(&self, x: &[f64], _inside: &[f64]) -> Result<f64, GeometryError> {
        self.value(x)
    }
}

pub trait VectorField: Send + Sync {
    fn vector(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError>;

    fn vector_toward(&self, x: &[f64], _inside: &[f64]) -> Result<DVector<f64>, GeometryError> {
        self.vector(x)
    }
}

pub trait TensorField: Send + Sync {
    fn tensor(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError>;

    fn tensor_toward(&self, x: &[f64], _inside: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.tensor(x)
    }
}

/// A scalar field with an analytic gradient.
pub trait SmoothFunction: ScalarField {
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError>;
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn value(&self, _x: &[f64]) -> Result<f64, GeometryError> {
        Ok(self.0)
    }
}

impl SmoothFunction for Constant {
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        Ok(DVector::zeros(x.len()))
    }
}

#[derive(Debug, Clone)]
pub struct ConstantVector(pub DVector<f64>);

impl VectorField for ConstantVector {
    fn vector(&self, _x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone)]
pub struct ConstantTensor(pub DMatrix<f64>);

impl TensorField for ConstantTensor {
    fn tensor(&self, _x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        Ok(self.0.clone())
    }
}

/// Wraps an infallible closure as a scalar field.
pub struct FnScalar<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarField for FnScalar<F> {
    fn value(&self, x: &[f64]) -> Result<f64, GeometryError> {
        Ok((self.0)(x))
    }
}

pub struct FnVector<F>(pub F);

impl<F: Fn(&[f64]) -> DVector<f64> + Send + Sync> VectorField for FnVector<F> {
    fn vector(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        Ok((self.0)(x))
    }
}

pub struct FnTensor<F>(pub F);

impl<F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync> TensorField for FnTensor<F> {
    fn tensor(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        Ok((self.0)(x))
    }
}

/// A function given by a value closure and a gradient closure.
pub struct FnSmooth<V, G> {
    value: V,
    gradient: G,
}

impl<V, G> FnSmooth<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Send + Sync,
{
    pub fn new(value: V, gradient: G) -> Self {
        FnSmooth { value, gradient }
    }
}

impl<V, G> ScalarField for FnSmooth<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Send + Sync,
{
    fn value(&self, x: &[f64]) -> Result<f64, GeometryError> {
        Ok((self.value)(x))
    }
}

impl<V, G> SmoothFunction for FnSmooth<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Send + Sync,
{
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        Ok((self.gradient)(x))
    }
}
