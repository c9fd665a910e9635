//! Simplicial complexes over ℝⁿ.
//!
//! A [`SimplicialComplex`] stores its vertices, every simplex of every
//! dimension (closed under taking faces), the incidence between cells and
//! facets, the Dirichlet facet markers and one region tag per cell. Region
//! tags record which smoothness region of a coordinate transformation a cell
//! belongs to; refinement passes them on to the children unchanged.

mod io;
mod validate;

pub use io::{read_mesh, write_mesh};

use std::collections::{BTreeSet, HashMap, VecDeque};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("complex has no cells")]
    Empty,
    #[error("vertex id {id} out of range ({count} vertices)")]
    VertexOutOfRange { id: usize, count: usize },
    #[error("point {index} has {got} coordinates, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("cell {cell} has {got} vertices, expected {expected}")]
    WrongArity {
        cell: usize,
        got: usize,
        expected: usize,
    },
    #[error("cell {0} repeats a vertex")]
    RepeatedVertex(usize),
    #[error("cell {0} is degenerate (zero volume)")]
    DegenerateCell(usize),
    #[error("cells {0} and {1} do not intersect in a common face")]
    NonSimplicialIntersection(usize, usize),
    #[error("facet {0:?} is not a facet of the complex")]
    UnknownFacet(Vec<usize>),
    #[error("dirichlet facet {0:?} is not on the boundary")]
    NonBoundaryDirichletFacet(Vec<usize>),
    #[error("expected {expected} region tags, got {got}")]
    RegionTagCount { expected: usize, got: usize },
    #[error("uniform refinement is not implemented in dimension {0}")]
    UnsupportedDimension(usize),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A point in ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Point(coords.into())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(c: [f64; N]) -> Self {
        Point(c.to_vec())
    }
}

/// A simplex given by strictly increasing vertex ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Simplex {
    vertices: Vec<usize>,
}

impl Simplex {
    /// Builds a simplex from vertex ids in any order.
    pub fn new(mut vertices: Vec<usize>) -> Self {
        vertices.sort_unstable();
        Simplex { vertices }
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    /// True if every vertex of `self` is a vertex of `other`.
    pub fn is_face_of(&self, other: &Simplex) -> bool {
        self.vertices
            .iter()
            .all(|v| other.vertices.binary_search(v).is_ok())
    }
}

#[derive(Debug, Clone)]
pub struct SimplicialComplex {
    dim: usize,
    coords: Vec<f64>,
    /// `simplices[k]` holds the k-simplices. Cells keep their input order,
    /// lower-dimensional simplices are sorted lexicographically.
    simplices: Vec<Vec<Simplex>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
    /// Local facet `i` of a cell is opposite its local vertex `i`.
    cell_facets: Vec<Vec<usize>>,
    facet_cells: Vec<Vec<usize>>,
    dirichlet: BTreeSet<usize>,
    region_tags: Vec<i32>,
}

impl SimplicialComplex {
    /// Builds and validates a complex from its top-dimensional cells.
    ///
    /// All faces are generated, degenerate cells and improper intersections
    /// are rejected and the Dirichlet facets are checked to lie on the
    /// boundary. An empty `region_tags` slice tags every cell with 0.
    pub fn build(
        vertices: &[Point],
        cells: &[Vec<usize>],
        dirichlet_facets: &[Vec<usize>],
        region_tags: &[i32],
    ) -> Result<Self, MeshError> {
        let dim = vertices.first().map(Point::dim).ok_or(MeshError::Empty)?;
        let mut coords = Vec::with_capacity(dim * vertices.len());
        for (i, p) in vertices.iter().enumerate() {
            if p.dim() != dim {
                return Err(MeshError::DimensionMismatch {
                    index: i,
                    got: p.dim(),
                    expected: dim,
                });
            }
            if p.0.iter().any(|x| !x.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
            coords.extend_from_slice(&p.0);
        }
        let complex = Self::assemble(dim, coords, cells, dirichlet_facets, region_tags)?;
        validate::check_geometry(&complex)?;
        Ok(complex)
    }

    /// Builds the closure and incidence without the pairwise intersection test.
    /// Used where validity is guaranteed by construction (refinement).
    fn assemble(
        dim: usize,
        coords: Vec<f64>,
        cells: &[Vec<usize>],
        dirichlet_facets: &[Vec<usize>],
        region_tags: &[i32],
    ) -> Result<Self, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = coords.len() / dim.max(1);
        let region_tags = if region_tags.is_empty() {
            vec![0; cells.len()]
        } else if region_tags.len() == cells.len() {
            region_tags.to_vec()
        } else {
            return Err(MeshError::RegionTagCount {
                expected: cells.len(),
                got: region_tags.len(),
            });
        };

        let mut top = Vec::with_capacity(cells.len());
        for (ci, cell) in cells.iter().enumerate() {
            if cell.len() != dim + 1 {
                return Err(MeshError::WrongArity {
                    cell: ci,
                    got: cell.len(),
                    expected: dim + 1,
                });
            }
            if let Some(&id) = cell.iter().find(|&&v| v >= nv) {
                return Err(MeshError::VertexOutOfRange { id, count: nv });
            }
            let s = Simplex::new(cell.clone());
            if s.vertices.windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::RepeatedVertex(ci));
            }
            top.push(s);
        }

        // Faces of dimension < dim: all proper subsets of each cell.
        let mut faces: Vec<BTreeSet<Vec<usize>>> = vec![BTreeSet::new(); dim];
        for s in &top {
            let k = s.vertices.len();
            for mask in 1u32..(1u32 << k) - 1 {
                let sub: Vec<usize> = (0..k)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| s.vertices[i])
                    .collect();
                faces[sub.len() - 1].insert(sub);
            }
        }
        let mut simplices: Vec<Vec<Simplex>> = faces
            .into_iter()
            .map(|set| {
                set.into_iter()
                    .map(|vertices| Simplex { vertices })
                    .collect()
            })
            .collect();
        simplices.push(top);

        let mut lookup: Vec<HashMap<Vec<usize>, usize>> = Vec::with_capacity(dim + 1);
        for (k, list) in simplices.iter().enumerate() {
            let mut map = HashMap::with_capacity(list.len());
            for (i, s) in list.iter().enumerate() {
                if let Some(prev) = map.insert(s.vertices.clone(), i) {
                    // only possible for duplicated cells
                    debug_assert_eq!(k, dim);
                    return Err(MeshError::NonSimplicialIntersection(prev, i));
                }
            }
            lookup.push(map);
        }

        let n_facets = if dim == 0 {
            0
        } else {
            simplices[dim - 1].len()
        };
        let mut cell_facets = Vec::with_capacity(simplices[dim].len());
        let mut facet_cells = vec![Vec::new(); n_facets];
        if dim > 0 {
            for (ci, cell) in simplices[dim].iter().enumerate() {
                let mut local = Vec::with_capacity(dim + 1);
                for skip in 0..=dim {
                    let f: Vec<usize> = cell
                        .vertices
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != skip)
                        .map(|(_, &v)| v)
                        .collect();
                    let fid = lookup[dim - 1][&f];
                    facet_cells[fid].push(ci);
                    local.push(fid);
                }
                cell_facets.push(local);
            }
        }
        for inc in &facet_cells {
            if inc.len() > 2 {
                return Err(MeshError::NonSimplicialIntersection(inc[0], inc[2]));
            }
        }

        let mut dirichlet = BTreeSet::new();
        for f in dirichlet_facets {
            let key = Simplex::new(f.clone()).vertices;
            let fid = if dim == 0 {
                None
            } else {
                lookup[dim - 1].get(&key).copied()
            };
            let fid = fid.ok_or_else(|| MeshError::UnknownFacet(key.clone()))?;
            if facet_cells[fid].len() != 1 {
                return Err(MeshError::NonBoundaryDirichletFacet(key));
            }
            dirichlet.insert(fid);
        }

        let complex = SimplicialComplex {
            dim,
            coords,
            simplices,
            lookup,
            cell_facets,
            facet_cells,
            dirichlet,
            region_tags,
        };
        for ci in 0..complex.num_cells() {
            let vol = complex.cell_volume(ci);
            let diam = complex.cell_diameter(ci);
            if !(vol > 1e-14 * diam.powi(dim as i32)) {
                return Err(MeshError::DegenerateCell(ci));
            }
        }
        Ok(complex)
    }

    /// Ambient (and cell) dimension n.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn num_cells(&self) -> usize {
        self.simplices[self.dim].len()
    }

    pub fn cell(&self, i: usize) -> &Simplex {
        &self.simplices[self.dim][i]
    }

    pub fn cells(&self) -> &[Simplex] {
        &self.simplices[self.dim]
    }

    /// The k-simplices of the complex.
    pub fn simplices(&self, k: usize) -> &[Simplex] {
        &self.simplices[k]
    }

    pub fn num_facets(&self) -> usize {
        self.facet_cells.len()
    }

    pub fn facet(&self, f: usize) -> &Simplex {
        &self.simplices[self.dim - 1][f]
    }

    /// Id of the k-simplex with the given vertex ids (any order).
    pub fn simplex_id(&self, vertices: &[usize]) -> Option<usize> {
        let mut key = vertices.to_vec();
        key.sort_unstable();
        let k = key.len().checked_sub(1)?;
        self.lookup.get(k)?.get(&key).copied()
    }

    /// Facet ids of a cell; entry `i` is opposite the cell's i-th vertex.
    pub fn cell_facets(&self, c: usize) -> &[usize] {
        &self.cell_facets[c]
    }

    /// Cells incident to a facet (one or two).
    pub fn facet_cells(&self, f: usize) -> &[usize] {
        &self.facet_cells[f]
    }

    pub fn is_boundary_facet(&self, f: usize) -> bool {
        self.facet_cells[f].len() == 1
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_facets()).filter(|&f| self.is_boundary_facet(f))
    }

    pub fn dirichlet_facets(&self) -> &BTreeSet<usize> {
        &self.dirichlet
    }

    pub fn is_dirichlet(&self, f: usize) -> bool {
        self.dirichlet.contains(&f)
    }

    pub fn region_tag(&self, c: usize) -> i32 {
        self.region_tags[c]
    }

    pub fn region_tags(&self) -> &[i32] {
        &self.region_tags
    }

    /// Returns a copy with the Dirichlet markers replaced.
    pub fn with_dirichlet(
        &self,
        facets: impl IntoIterator<Item = usize>,
    ) -> Result<Self, MeshError> {
        let mut out = self.clone();
        out.dirichlet.clear();
        for f in facets {
            if !self.is_boundary_facet(f) {
                return Err(MeshError::NonBoundaryDirichletFacet(
                    self.facet(f).vertices.clone(),
                ));
            }
            out.dirichlet.insert(f);
        }
        Ok(out)
    }

    /// Returns a copy whose whole boundary is marked Dirichlet.
    pub fn with_full_dirichlet_boundary(&self) -> Self {
        let mut out = self.clone();
        out.dirichlet = self.boundary_facets().collect();
        out
    }

    /// Vertex coordinates of a simplex, one row per vertex.
    pub fn simplex_coords(&self, s: &Simplex) -> Vec<&[f64]> {
        s.vertices.iter().map(|&v| self.vertex(v)).collect()
    }

    /// Diameter (longest edge) of a simplex.
    pub fn simplex_diameter(&self, s: &Simplex) -> f64 {
        let pts = self.simplex_coords(s);
        let mut diam: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                diam = diam.max(dist(pts[i], pts[j]));
            }
        }
        diam
    }

    /// d-dimensional volume of a d-simplex, via the Gram determinant.
    pub fn simplex_volume(&self, s: &Simplex) -> f64 {
        simplex_volume(&self.simplex_coords(s))
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        self.simplex_volume(self.cell(c))
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        self.simplex_diameter(self.cell(c))
    }

    pub fn cell_centroid(&self, c: usize) -> Vec<f64> {
        let s = self.cell(c);
        let mut out = vec![0.0; self.dim];
        for &v in s.vertices() {
            for (o, x) in out.iter_mut().zip(self.vertex(v)) {
                *o += x;
            }
        }
        let k = s.vertices().len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        out
    }

    /// Shape measure diam(T)^d / vol(T) of a full-dimensional simplex.
    pub fn shape_measure(&self, c: usize) -> Result<f64, MeshError> {
        let vol = self.cell_volume(c);
        let diam = self.cell_diameter(c);
        if !(vol > 1e-14 * diam.powi(self.dim as i32)) {
            return Err(MeshError::DegenerateCell(c));
        }
        Ok(diam.powi(self.dim as i32) / vol)
    }

    /// Maximum shape measure over all cells.
    pub fn max_shape_measure(&self) -> Result<f64, MeshError> {
        (0..self.num_cells()).try_fold(0.0f64, |m, c| Ok(m.max(self.shape_measure(c)?)))
    }

    /// Mesh size h: the maximum cell diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_cells())
            .map(|c| self.cell_diameter(c))
            .fold(0.0, f64::max)
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_volume(c)).sum()
    }

    /// Outward unit normal of a facet, taken from its incident cell.
    ///
    /// For an interior facet the first incident cell is used.
    pub fn facet_outward_normal(&self, f: usize) -> Vec<f64> {
        let c = self.facet_cells[f][0];
        let local = self.cell_facets[c].iter().position(|&x| x == f).unwrap();
        let grads = barycentric_gradients(&self.simplex_coords(self.cell(c)));
        let g: Vec<f64> = (0..self.dim).map(|j| -grads[(local, j)]).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        g.into_iter().map(|x| x / norm).collect()
    }

    /// Uniform red refinement of a triangulation.
    ///
    /// Every triangle is split into four through its edge midpoints. The
    /// midpoint of edge `e` becomes vertex `num_vertices + e`, so vertex
    /// numbering depends only on the combinatorics of the parent.
    pub fn refine_uniform(&self) -> Result<Self, MeshError> {
        if self.dim != 2 {
            return Err(MeshError::UnsupportedDimension(self.dim));
        }
        let nv = self.num_vertices();
        let edges = self.simplices(1);
        let mut coords = self.coords.clone();
        coords.reserve(edges.len() * 2);
        for e in edges {
            let (a, b) = (self.vertex(e.vertices[0]), self.vertex(e.vertices[1]));
            coords.push(0.5 * (a[0] + b[0]));
            coords.push(0.5 * (a[1] + b[1]));
        }
        let mid = |a: usize, b: usize| nv + self.lookup[1][&vec![a.min(b), a.max(b)]];

        let mut cells = Vec::with_capacity(4 * self.num_cells());
        let mut tags = Vec::with_capacity(4 * self.num_cells());
        for (ci, s) in self.cells().iter().enumerate() {
            let [a, b, c] = [s.vertices[0], s.vertices[1], s.vertices[2]];
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            cells.push(vec![a, ab, ca]);
            cells.push(vec![ab, b, bc]);
            cells.push(vec![ca, bc, c]);
            cells.push(vec![ab, bc, ca]);
            tags.extend_from_slice(&[self.region_tags[ci]; 4]);
        }
        let mut dirichlet = Vec::with_capacity(2 * self.dirichlet.len());
        for &f in &self.dirichlet {
            let v = &self.facet(f).vertices;
            let m = mid(v[0], v[1]);
            dirichlet.push(vec![v[0], m]);
            dirichlet.push(vec![m, v[1]]);
        }
        Self::assemble(2, coords, &cells, &dirichlet, &tags)
    }

    /// Applies `refine_uniform` `levels` times.
    pub fn refine_times(&self, levels: usize) -> Result<Self, MeshError> {
        let mut m = self.clone();
        for _ in 0..levels {
            m = m.refine_uniform()?;
        }
        Ok(m)
    }

    /// Face-connectedness: for every simplex σ, the cells containing σ form
    /// a connected graph when two cells are adjacent iff they share a facet
    /// that contains σ.
    ///
    /// Any two cells S, T with S ∩ T = σ lie in the star of σ, and a facet
    /// chain through cells containing a larger face also runs through the
    /// star of σ, so star connectivity for every σ is equivalent to the
    /// chain condition for every intersecting pair.
    pub fn is_face_connected(&self) -> bool {
        let n = self.dim;
        if n == 0 {
            return true;
        }
        // star[k][id] = cells containing the k-simplex id
        let mut star: Vec<Vec<Vec<usize>>> = (0..n)
            .map(|k| vec![Vec::new(); self.simplices[k].len()])
            .collect();
        for (ci, cell) in self.cells().iter().enumerate() {
            let k = cell.vertices.len();
            for mask in 1u32..(1u32 << k) - 1 {
                let sub: Vec<usize> = (0..k)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| cell.vertices[i])
                    .collect();
                let d = sub.len() - 1;
                star[d][self.lookup[d][&sub]].push(ci);
            }
        }
        for (k, per_dim) in star.iter().enumerate() {
            for (sid, cells) in per_dim.iter().enumerate() {
                if cells.len() <= 1 {
                    continue;
                }
                let sigma = &self.simplices[k][sid];
                let mut seen: BTreeSet<usize> = BTreeSet::new();
                let mut queue = VecDeque::from([cells[0]]);
                seen.insert(cells[0]);
                while let Some(c) = queue.pop_front() {
                    for &f in &self.cell_facets[c] {
                        if !sigma.is_face_of(self.facet(f)) {
                            continue;
                        }
                        for &nb in &self.facet_cells[f] {
                            if seen.insert(nb) {
                                queue.push_back(nb);
                            }
                        }
                    }
                }
                if seen.len() != cells.len() {
                    return false;
                }
            }
        }
        true
    }

    /// A square [0,1]² split into two triangles along the diagonal.
    pub fn unit_square() -> Self {
        let v: Vec<Point> = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
            .into_iter()
            .map(Point::from)
            .collect();
        Self::build(&v, &[vec![0, 1, 2], vec![0, 2, 3]], &[], &[])
            .expect("unit square is a valid complex")
    }

    /// The unit right triangle (0,0), (1,0), (0,1).
    pub fn reference_triangle() -> Self {
        let v: Vec<Point> = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
            .into_iter()
            .map(Point::from)
            .collect();
        Self::build(&v, &[vec![0, 1, 2]], &[], &[]).expect("reference triangle is a valid complex")
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Volume of the d-simplex spanned by `pts` (d+1 points in ℝⁿ, d ≤ n).
pub(crate) fn simplex_volume(pts: &[&[f64]]) -> f64 {
    let d = pts.len() - 1;
    if d == 0 {
        return 1.0;
    }
    let n = pts[0].len();
    let j = DMatrix::from_fn(n, d, |r, c| pts[c + 1][r] - pts[0][r]);
    let det = if n == d {
        j.determinant().abs()
    } else {
        (j.transpose() * &j).determinant().max(0.0).sqrt()
    };
    det / factorial(d)
}

/// Gradients of the barycentric coordinates of a full-dimensional simplex;
/// row i is ∇λ_i.
pub(crate) fn barycentric_gradients(pts: &[&[f64]]) -> DMatrix<f64> {
    let n = pts[0].len();
    let j = DMatrix::from_fn(n, n, |r, c| pts[c + 1][r] - pts[0][r]);
    let jinv = j
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    let mut g = DMatrix::zeros(n + 1, n);
    for i in 0..n {
        for c in 0..n {
            g[(i + 1, c)] = jinv[(i, c)];
            g[(0, c)] -= jinv[(i, c)];
        }
    }
    g
}
