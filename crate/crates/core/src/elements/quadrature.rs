//! Quadrature rules on the reference simplices of dimension 0, 1 and 2.
//!
//! Points are stored in barycentric coordinates; weights sum to the volume
//! of the reference simplex (1 for [0,1], 1/2 for the unit right triangle).
//! On the triangle, fully symmetric rules cover degrees up to 5 and a
//! collapsed-coordinate Gauss product (Stroud conical rule) covers the rest.

use super::ElementError;

/// Highest exactness degree served by [`quadrature`].
pub const MAX_DEGREE: usize = 20;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    degree: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exactness degree the rule was requested with.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Barycentric coordinates of the quadrature points (dim + 1 entries each).
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights rescaled to sum to one; multiply by a simplex volume to
    /// integrate over that simplex.
    pub fn volume_fractions(&self) -> Vec<f64> {
        let f: f64 = (1..=self.dim).map(|i| i as f64).product();
        self.weights.iter().map(|w| w * f).collect()
    }

    /// Cartesian coordinates of the points on the reference simplex.
    pub fn reference_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|b| b[1..].to_vec()).collect()
    }
}

/// Returns a rule on the d-dimensional reference simplex exact for all
/// polynomials of total degree ≤ q.
pub fn quadrature(d: usize, q: usize) -> Result<QuadratureRule, ElementError> {
    if q > MAX_DEGREE {
        return Err(ElementError::UnsupportedOrder { dim: d, degree: q });
    }
    let (points, weights) = match d {
        0 => (vec![vec![1.0]], vec![1.0]),
        1 => {
            let (x, w) = gauss_legendre_unit((q + 2) / 2);
            (x.iter().map(|&t| vec![1.0 - t, t]).collect(), w)
        }
        2 => triangle_rule(q),
        _ => return Err(ElementError::UnsupportedOrder { dim: d, degree: q }),
    };
    Ok(QuadratureRule {
        dim: d,
        degree: q,
        points,
        weights,
    })
}

/// Gauss-Legendre nodes and weights on [0, 1] with `n` points.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// P_n(z) and P_n'(z) by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

fn orbit3(a: f64, w: f64, pts: &mut Vec<Vec<f64>>, wts: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        pts.push(p.to_vec());
        wts.push(w);
    }
}

fn triangle_rule(q: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    match q {
        0 | 1 => {
            pts.push(vec![1.0 / 3.0; 3]);
            wts.push(0.5);
        }
        2 => orbit3(1.0 / 6.0, 1.0 / 6.0, &mut pts, &mut wts),
        3..=5 => {
            // Radon's 7-point rule, degree 5
            let s15 = 15f64.sqrt();
            pts.push(vec![1.0 / 3.0; 3]);
            wts.push(9.0 / 80.0);
            orbit3(
                (6.0 - s15) / 21.0,
                (155.0 - s15) / 2400.0,
                &mut pts,
                &mut wts,
            );
            orbit3(
                (6.0 + s15) / 21.0,
                (155.0 + s15) / 2400.0,
                &mut pts,
                &mut wts,
            );
        }
        _ => {
            // ∫_T f = ∫₀¹∫₀¹ f(u, (1-u)v) (1-u) dv du; the u-integrand has degree q+1.
            let (xu, wu) = gauss_legendre_unit((q + 3) / 2);
            let (xv, wv) = gauss_legendre_unit((q + 2) / 2);
            for (&u, &a) in xu.iter().zip(&wu) {
                for (&v, &b) in xv.iter().zip(&wv) {
                    let x = u;
                    let y = (1.0 - u) * v;
                    pts.push(vec![1.0 - x - y, x, y]);
                    wts.push(a * b * (1.0 - u));
                }
            }
        }
    }
    (pts, wts)
}
