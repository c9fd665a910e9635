//! Geometric validity checks for freshly built complexes.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;

use super::{MeshError, SimplicialComplex};

const TOL: f64 = 1e-12;

pub(super) fn check_geometry(c: &SimplicialComplex) -> Result<(), MeshError> {
    check_facet_sides(c)?;
    match c.dim() {
        1 | 2 => check_pairs(c),
        _ => Ok(()),
    }
}

/// Two cells sharing a facet must lie on opposite sides of it.
fn check_facet_sides(c: &SimplicialComplex) -> Result<(), MeshError> {
    let n = c.dim();
    for f in 0..c.num_facets() {
        let inc = c.facet_cells(f);
        if inc.len() != 2 {
            continue;
        }
        let facet = c.facet(f).vertices();
        let side = |cell: usize| -> f64 {
            let opp = *c
                .cell(cell)
                .vertices()
                .iter()
                .find(|v| !facet.contains(v))
                .expect("cell has a vertex off its facet");
            let base = c.vertex(facet[0]);
            let m = DMatrix::from_fn(n, n, |r, k| {
                let p = if k + 1 < n {
                    c.vertex(facet[k + 1])
                } else {
                    c.vertex(opp)
                };
                p[r] - base[r]
            });
            m.determinant()
        };
        if side(inc[0]) * side(inc[1]) >= 0.0 {
            return Err(MeshError::NonSimplicialIntersection(inc[0], inc[1]));
        }
    }
    Ok(())
}

/// Pairwise test of cells whose bounding boxes overlap, bucketed on a grid
/// of spacing h so the cost stays linear for quasi-uniform meshes.
fn check_pairs(c: &SimplicialComplex) -> Result<(), MeshError> {
    let n = c.dim();
    let h = c.mesh_size();
    let boxes: Vec<(Vec<f64>, Vec<f64>)> = c
        .cells()
        .iter()
        .map(|s| {
            let mut lo = vec![f64::INFINITY; n];
            let mut hi = vec![f64::NEG_INFINITY; n];
            for &v in s.vertices() {
                for (k, &x) in c.vertex(v).iter().enumerate() {
                    lo[k] = lo[k].min(x);
                    hi[k] = hi[k].max(x);
                }
            }
            (lo, hi)
        })
        .collect();
    let key = |x: f64| (x / h).floor() as i64;
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (ci, (lo, hi)) in boxes.iter().enumerate() {
        let ranges: Vec<(i64, i64)> = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| (key(a - TOL), key(b + TOL)))
            .collect();
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        // odometer over the box's buckets
        loop {
            grid.entry(cur.clone()).or_default().push(ci);
            let mut k = 0;
            while k < n {
                cur[k] += 1;
                if cur[k] <= ranges[k].1 {
                    break;
                }
                cur[k] = ranges[k].0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }
    let mut checked: HashSet<(usize, usize)> = HashSet::new();
    for bucket in grid.values() {
        for (i, &a) in bucket.iter().enumerate() {
            for &b in &bucket[i + 1..] {
                let pair = (a.min(b), a.max(b));
                if !checked.insert(pair) {
                    continue;
                }
                let (la, ha) = &boxes[pair.0];
                let (lb, hb) = &boxes[pair.1];
                if (0..n).any(|k| la[k] > hb[k] + TOL || lb[k] > ha[k] + TOL) {
                    continue;
                }
                let bad = if n == 1 {
                    intervals_overlap(c, pair.0, pair.1)
                } else {
                    triangles_overlap(c, pair.0, pair.1)
                };
                if bad {
                    return Err(MeshError::NonSimplicialIntersection(pair.0, pair.1));
                }
            }
        }
    }
    Ok(())
}

fn intervals_overlap(c: &SimplicialComplex, a: usize, b: usize) -> bool {
    let iv = |s: usize| {
        let v = c.cell(s).vertices();
        let (x, y) = (c.vertex(v[0])[0], c.vertex(v[1])[0]);
        (x.min(y), x.max(y))
    };
    let ((a0, a1), (b0, b1)) = (iv(a), iv(b));
    a0.max(b0) < a1.min(b1) - TOL * (a1 - a0)
}

fn orient(p: &[f64], q: &[f64], r: &[f64]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

fn in_closed_triangle(p: &[f64], t: [&[f64]; 3]) -> bool {
    let area = orient(t[0], t[1], t[2]);
    let l0 = orient(p, t[1], t[2]) / area;
    let l1 = orient(t[0], p, t[2]) / area;
    let l2 = orient(t[0], t[1], p) / area;
    l0 >= -TOL && l1 >= -TOL && l2 >= -TOL
}

fn segments_cross(p1: &[f64], p2: &[f64], q1: &[f64], q2: &[f64]) -> bool {
    let scale = super::dist(p1, p2) * super::dist(q1, q2);
    let d1 = orient(p1, p2, q1);
    let d2 = orient(p1, p2, q2);
    let d3 = orient(q1, q2, p1);
    let d4 = orient(q1, q2, p2);
    let eps = TOL * scale;
    ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
}

/// True unless the two triangles meet exactly in the face spanned by their
/// shared vertices.
fn triangles_overlap(c: &SimplicialComplex, a: usize, b: usize) -> bool {
    let va = c.cell(a).vertices();
    let vb = c.cell(b).vertices();
    let ta = [c.vertex(va[0]), c.vertex(va[1]), c.vertex(va[2])];
    let tb = [c.vertex(vb[0]), c.vertex(vb[1]), c.vertex(vb[2])];
    for (vs, other_ids, other) in [(vb, va, ta), (va, vb, tb)] {
        for &v in vs {
            if !other_ids.contains(&v) && in_closed_triangle(c.vertex(v), other) {
                return true;
            }
        }
    }
    for i in 0..3 {
        let ea = [va[i], va[(i + 1) % 3]];
        for j in 0..3 {
            let eb = [vb[j], vb[(j + 1) % 3]];
            if ea.iter().any(|v| eb.contains(v)) {
                continue;
            }
            if segments_cross(
                c.vertex(ea[0]),
                c.vertex(ea[1]),
                c.vertex(eb[0]),
                c.vertex(eb[1]),
            ) {
                return true;
            }
        }
    }
    false
}
