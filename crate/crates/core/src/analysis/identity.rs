//! Checks that pulling a problem back leaves its bilinear form and load
//! functional unchanged. The physical side is integrated in polar
//! coordinates, independently of the transformation and the mesh.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elements::{gauss_legendre_unit, quadrature, SimplexGeometry};
use crate::geometry::builtin::Geometry;
use crate::geometry::{
    pullback_scalar, FnTensor, FnVector, GeometryError, PhysicalProblem, ScalarField,
    SmoothFunction, TensorField,
};
use crate::Error as PipelineError;

/// amp · sin(a · x + b).
#[derive(Debug, Clone, Copy)]
pub struct Wave {
    pub amp: f64,
    pub a: [f64; 2],
    pub b: f64,
}

impl ScalarField for Wave {
    fn value(&self, x: &[f64]) -> Result<f64, GeometryError> {
        Ok(self.amp * (self.a[0] * x[0] + self.a[1] * x[1] + self.b).sin())
    }
}

impl SmoothFunction for Wave {
    fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let c = self.amp * (self.a[0] * x[0] + self.a[1] * x[1] + self.b).cos();
        Ok(DVector::from_vec(vec![c * self.a[0], c * self.a[1]]))
    }
}

/// Pairs of smooth test functions drawn from a seeded generator.
pub fn random_wave_pairs(seed: u64, count: usize) -> Vec<(Wave, Wave)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wave = || Wave {
        amp: rng.random_range(0.5..2.0),
        a: [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
        b: rng.random_range(0.0..2.0 * PI),
    };
    (0..count).map(|_| (wave(), wave())).collect()
}

/// A variable symmetric positive definite physical coefficient.
pub fn test_coefficient() -> Arc<dyn TensorField> {
    Arc::new(FnTensor(|x: &[f64]| {
        DMatrix::from_row_slice(
            2,
            2,
            &[2.0 + x[1], 0.3 * x[0], 0.3 * x[0], 1.5 + x[0] * x[0]],
        )
    }))
}

/// Both sides of one identity.
#[derive(Debug, Clone, Copy)]
pub struct IdentityCheck {
    pub parametric: f64,
    pub physical: f64,
}

impl IdentityCheck {
    pub fn relative_error(&self) -> f64 {
        (self.parametric - self.physical).abs() / self.physical.abs().max(1e-300)
    }
}

/// Result for one pair (u, v): the bilinear form B(u, v) and the load
/// F(v) with source f = u and flux g = u·(0.4, −0.2).
#[derive(Debug, Clone, Copy)]
pub struct PullbackIdentity {
    pub bilinear: IdentityCheck,
    pub load: IdentityCheck,
}

impl PullbackIdentity {
    pub fn max_relative_error(&self) -> f64 {
        self.bilinear
            .relative_error()
            .max(self.load.relative_error())
    }
}

const FLUX_DIRECTION: [f64; 2] = [0.4, -0.2];

fn integrate_polar(
    geometry: Geometry,
    mut f: impl FnMut(&[f64]) -> Result<f64, GeometryError>,
) -> Result<f64, GeometryError> {
    let ([r0, r1], [t0, t1]) = geometry.polar_extent();
    let (xr, wr) = gauss_legendre_unit(48);
    let (xt, wt) = gauss_legendre_unit(128);
    let mut total = 0.0;
    for (sr, wr) in xr.iter().zip(&wr) {
        let rho = r0 + (r1 - r0) * sr;
        for (st, wt) in xt.iter().zip(&wt) {
            let theta = t0 + (t1 - t0) * st;
            let x = [rho * theta.cos(), rho * theta.sin()];
            total += wr * wt * (r1 - r0) * (t1 - t0) * rho * f(&x)?;
        }
    }
    Ok(total)
}

/// Evaluates both sides of the pullback identities for `u`, `v` with the
/// parametric side integrated on the level-`level` mesh at `quad_degree`.
pub fn pullback_identity(
    geometry: Geometry,
    level: usize,
    quad_degree: usize,
    u: &Wave,
    v: &Wave,
) -> Result<PullbackIdentity, PipelineError> {
    let coefficient = test_coefficient();
    let uu = *u;
    let physical_problem = PhysicalProblem {
        coefficient: coefficient.clone(),
        source: Arc::new(uu),
        flux: Arc::new(FnVector(move |x: &[f64]| {
            let s = uu.value(x).unwrap_or(f64::NAN);
            DVector::from_vec(vec![s * FLUX_DIRECTION[0], s * FLUX_DIRECTION[1]])
        })),
    };

    let phys_b = integrate_polar(geometry, |x| {
        let a = coefficient.tensor(x)?;
        Ok((u.gradient(x)?.transpose() * a * v.gradient(x)?)[(0, 0)])
    })?;
    let phys_f = integrate_polar(geometry, |x| {
        let g = physical_problem.flux.vector(x)?;
        Ok(u.value(x)? * v.value(x)? + g.dot(&v.gradient(x)?))
    })?;

    let map = geometry.map();
    let problem = physical_problem.pull_back(map.clone());
    let uh = pullback_scalar(map.clone(), Arc::new(*u));
    let vh = pullback_scalar(map, Arc::new(*v));
    let mesh = geometry.mesh().refine_times(level)?;
    let rule = quadrature(2, quad_degree)?;
    let (mut par_b, mut par_f) = (0.0, 0.0);
    for c in 0..mesh.num_cells() {
        let geom = SimplexGeometry::of_cell(&mesh, c);
        for (lam, w) in rule.points().iter().zip(rule.volume_fractions()) {
            let x = geom.point_at(lam);
            let wv = w * geom.volume();
            let a = problem.coefficient.tensor(&x)?;
            let gv = vh.gradient(&x)?;
            par_b += wv * (uh.gradient(&x)?.transpose() * a * &gv)[(0, 0)];
            par_f += wv
                * (problem.source.value(&x)? * vh.value(&x)? + problem.flux.vector(&x)?.dot(&gv));
        }
    }
    Ok(PullbackIdentity {
        bilinear: IdentityCheck {
            parametric: par_b,
            physical: phys_b,
        },
        load: IdentityCheck {
            parametric: par_f,
            physical: phys_f,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_quadrature_measures_area() {
        let a = integrate_polar(Geometry::Annulus, |_| Ok(1.0)).unwrap();
        assert!((a - 0.75 * PI).abs() < 1e-13);
        let b = integrate_polar(Geometry::BallQuadrant, |x| Ok(x[0] * x[1])).unwrap();
        assert!((b - 0.125).abs() < 1e-14);
    }

    #[test]
    fn identity_holds_for_a_fixed_pair() {
        let pairs = random_wave_pairs(3, 1);
        for geometry in Geometry::ALL {
            let r = pullback_identity(geometry, 2, 12, &pairs[0].0, &pairs[0].1).unwrap();
            assert!(r.max_relative_error() < 1e-3, "{geometry}: {r:?}");
        }
    }
}
