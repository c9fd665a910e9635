//! Solvers for the reduced symmetric positive definite system: conjugate
//! gradients with an optional Jacobi preconditioner, and a dense Cholesky
//! solve for small systems.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dense solve limited to {max} unknowns (got {n})")]
    TooLarge { n: usize, max: usize },
    #[error("right-hand side has length {rhs}, matrix has dimension {dim}")]
    DimensionMismatch { dim: usize, rhs: usize },
}

/// Largest system accepted by [`dense_solve`].
pub const DENSE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    ConjugateGradient,
    DenseCholesky,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::ConjugateGradient => "cg",
            SolveMethod::DenseCholesky => "cholesky",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    /// ‖b − Kx‖₂ / ‖b‖₂, recomputed from the returned solution.
    pub residual: f64,
    pub wall_time: Duration,
    pub method: SolveMethod,
}

/// z = M⁻¹ r.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct NoPreconditioner;

impl Preconditioner for NoPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(matrix: &CsrMatrix) -> Result<Self, SolverError> {
        let inv_diag = matrix
            .diagonal()
            .into_iter()
            .map(|d| {
                if d > 0.0 {
                    Ok(1.0 / d)
                } else {
                    Err(SolverError::NotPositiveDefinite)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Jacobi { inv_diag })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *z = r * d;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreconditionerKind {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub tol: f64,
    /// Defaults to 50·√N + 1000.
    pub max_iter: Option<usize>,
    pub preconditioner: PreconditionerKind,
    /// Row-parallel matrix-vector products. Dot products stay serial, so the
    /// iterates do not depend on the thread count.
    pub parallel: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-12,
            max_iter: None,
            preconditioner: PreconditionerKind::Jacobi,
            parallel: false,
        }
    }
}

pub fn default_max_iter(n: usize) -> usize {
    50 * (n as f64).sqrt().ceil() as usize + 1000
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// b − K x with error-free products and sums per row, so the confirmed
/// residual is not swamped by cancellation once it is far below ‖K‖‖x‖.
fn residual(matrix: &CsrMatrix, x: &[f64], b: &[f64], parallel: bool, r: &mut [f64]) {
    let row = |i: usize| {
        let (cols, vals) = matrix.row(i);
        let (mut sum, mut comp) = (b[i], 0.0);
        for (&j, &a) in cols.iter().zip(vals) {
            let p = -a * x[j];
            let perr = (-a).mul_add(x[j], -p);
            let t = sum + p;
            let z = t - sum;
            comp += (sum - (t - z)) + (p - z) + perr;
            sum = t;
        }
        sum + comp
    };
    if parallel {
        r.par_iter_mut()
            .enumerate()
            .for_each(|(i, ri)| *ri = row(i));
    } else {
        r.iter_mut().enumerate().for_each(|(i, ri)| *ri = row(i));
    }
}

/// Solves K x = b by conjugate gradients from a zero initial guess.
pub fn cg_solve(
    matrix: &CsrMatrix,
    rhs: &[f64],
    opts: &CgOptions,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    cg_solve_observed(matrix, rhs, opts, |_, _| {})
}

/// Restarts from the true residual that may fail to halve it before CG
/// gives up on reaching the tolerance.
const STALL_RESTARTS: usize = 5;

/// As [`cg_solve`], calling `observe(k, x_k)` after every iteration.
pub fn cg_solve_observed(
    matrix: &CsrMatrix,
    rhs: &[f64],
    opts: &CgOptions,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let start = Instant::now();
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(SolverError::DimensionMismatch {
            dim: n,
            rhs: rhs.len(),
        });
    }
    let precond: Box<dyn Preconditioner> = match opts.preconditioner {
        PreconditionerKind::None => Box::new(NoPreconditioner),
        PreconditionerKind::Jacobi => Box::new(Jacobi::new(matrix)?),
    };
    let max_iter = opts.max_iter.unwrap_or_else(|| default_max_iter(n));
    let bnorm = norm(rhs);
    let mut x = vec![0.0; n];
    let report = |iterations, residual| SolveReport {
        iterations,
        residual,
        wall_time: start.elapsed(),
        method: SolveMethod::ConjugateGradient,
    };
    if bnorm == 0.0 {
        return Ok((x, report(0, 0.0)));
    }

    let matvec = |v: &[f64], out: &mut [f64]| {
        if opts.parallel {
            matrix.par_matvec(v, out)
        } else {
            matrix.matvec(v, out)
        }
    };
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut target = opts.tol * bnorm;
    let mut best_true = f64::INFINITY;
    let mut stalled = 0;
    while iterations < max_iter {
        matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(SolverError::NotPositiveDefinite);
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        iterations += 1;
        observe(iterations, &x);
        if norm(&r) <= target {
            // The recurrence residual drifts from the true one; confirm, and
            // restart from the true residual if they disagree.
            residual(matrix, &x, rhs, opts.parallel, &mut r);
            let true_rel = norm(&r) / bnorm;
            if true_rel <= opts.tol {
                log::debug!("cg converged in {iterations} iterations, residual {true_rel:e}");
                return Ok((x, report(iterations, true_rel)));
            }
            if true_rel < 0.5 * best_true {
                stalled = 0;
            } else {
                stalled += 1;
            }
            best_true = best_true.min(true_rel);
            // Ask the restarted recurrence for a real reduction, not just
            // the few digits separating the true residual from the target.
            target = target.min(0.01 * true_rel * bnorm);
            if stalled >= STALL_RESTARTS {
                log::warn!(
                    "cg stagnated at relative residual {true_rel:e} above tolerance {:e}",
                    opts.tol
                );
                return Err(SolverError::MaxIterations {
                    iterations,
                    residual: true_rel,
                });
            }
            precond.apply(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    residual(matrix, &x, rhs, opts.parallel, &mut r);
    let true_rel = norm(&r) / bnorm;
    if true_rel <= opts.tol {
        return Ok((x, report(iterations, true_rel)));
    }
    Err(SolverError::MaxIterations {
        iterations,
        residual: true_rel,
    })
}

/// Dense Cholesky solve, for systems of at most [`DENSE_LIMIT`] unknowns.
pub fn dense_solve(
    matrix: &CsrMatrix,
    rhs: &[f64],
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let start = Instant::now();
    let n = matrix.dim();
    if n > DENSE_LIMIT {
        return Err(SolverError::TooLarge {
            n,
            max: DENSE_LIMIT,
        });
    }
    if rhs.len() != n {
        return Err(SolverError::DimensionMismatch {
            dim: n,
            rhs: rhs.len(),
        });
    }
    let chol = matrix
        .to_dense()
        .cholesky()
        .ok_or(SolverError::NotPositiveDefinite)?;
    let x: Vec<f64> = chol
        .solve(&nalgebra::DVector::from_column_slice(rhs))
        .iter()
        .copied()
        .collect();
    let mut r = vec![0.0; n];
    residual(matrix, &x, rhs, false, &mut r);
    let bnorm = norm(rhs);
    Ok((
        x,
        SolveReport {
            iterations: 0,
            residual: if bnorm > 0.0 { norm(&r) / bnorm } else { 0.0 },
            wall_time: start.elapsed(),
            method: SolveMethod::DenseCholesky,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn csr(rows: usize, vals: &[f64]) -> CsrMatrix {
        CsrMatrix::from_dense(&DMatrix::from_row_slice(rows, rows, vals))
    }

    fn laplacian_1d(n: usize) -> CsrMatrix {
        CsrMatrix::from_dense(&DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0 + (i as f64) * 0.01,
            1 => -1.0,
            _ => 0.0,
        }))
    }

    #[test]
    fn identity_in_one_iteration() {
        let k = csr(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let b = [1.0, -2.0, 3.5];
        let (x, rep) = cg_solve(&k, &b, &CgOptions::default()).unwrap();
        assert_eq!(x, b);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn two_by_two() {
        let k = csr(2, &[2.0, 1.0, 1.0, 2.0]);
        for pc in [PreconditionerKind::None, PreconditionerKind::Jacobi] {
            let opts = CgOptions {
                preconditioner: pc,
                ..Default::default()
            };
            let (x, rep) = cg_solve(&k, &[3.0, 3.0], &opts).unwrap();
            assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
            assert!(rep.residual <= 1e-12);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let k = csr(2, &[1.0, 0.0, 0.0, -1.0]);
        let opts = CgOptions {
            preconditioner: PreconditionerKind::None,
            ..Default::default()
        };
        assert_eq!(
            cg_solve(&k, &[1.0, 1.0], &opts).unwrap_err(),
            SolverError::NotPositiveDefinite
        );
        assert_eq!(
            cg_solve(&k, &[1.0, 1.0], &CgOptions::default()).unwrap_err(),
            SolverError::NotPositiveDefinite
        );
        assert_eq!(
            dense_solve(&k, &[1.0, 1.0]).unwrap_err(),
            SolverError::NotPositiveDefinite
        );
    }

    #[test]
    fn max_iterations_reported() {
        let k = laplacian_1d(200);
        let opts = CgOptions {
            max_iter: Some(3),
            ..Default::default()
        };
        assert!(matches!(
            cg_solve(&k, &vec![1.0; 200], &opts),
            Err(SolverError::MaxIterations { iterations: 3, .. })
        ));
    }

    #[test]
    fn dense_scalar_and_limits() {
        let (x, _) = dense_solve(&csr(1, &[4.0]), &[2.0]).unwrap();
        assert_eq!(x, vec![0.5]);
        let big = CsrMatrix::from_pattern(vec![Vec::new(); DENSE_LIMIT + 1]);
        assert!(matches!(
            dense_solve(&big, &vec![0.0; DENSE_LIMIT + 1]),
            Err(SolverError::TooLarge { .. })
        ));
    }

    #[test]
    fn energy_error_is_monotone() {
        let k = laplacian_1d(60);
        let b: Vec<f64> = (0..60).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let (exact, _) = dense_solve(&k, &b).unwrap();
        for pc in [PreconditionerKind::None, PreconditionerKind::Jacobi] {
            let opts = CgOptions {
                preconditioner: pc,
                ..Default::default()
            };
            let mut errs = Vec::new();
            let (x, _) = cg_solve_observed(&k, &b, &opts, |_, x| {
                let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
                let mut ke = vec![0.0; e.len()];
                k.matvec(&e, &mut ke);
                errs.push(dot(&e, &ke).sqrt());
            })
            .unwrap();
            for w in errs.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-14);
            }
            for (a, b) in x.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (x, rep) = cg_solve(&laplacian_1d(5), &[0.0; 5], &CgOptions::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(rep.iterations, 0);
    }
}
