//! Conforming triangulations of a rectangular space-time domain
//! `(x_L, x_R) × (t_0, T)`, with newest-vertex bisection.
//!
//! Coordinates are `(x, t)`. Every triangle is stored counter-clockwise as
//! `[v0, v1, v2]` where `(v0, v1)` is its refinement edge and `v2` its newest
//! vertex. Local edge `i` is the edge opposite local vertex `i`.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Which end of the spatial interval carries the inflow designation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// `t = t_0`, where the initial data lives.
    InitialTime,
    FinalTime,
    /// Lateral boundary where elevation data is imposed.
    SpatialInflow,
    SpatialOutflow,
}

impl BoundaryTag {
    pub fn is_lateral(self) -> bool {
        matches!(
            self,
            BoundaryTag::SpatialInflow | BoundaryTag::SpatialOutflow
        )
    }
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoints with `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Adjacent triangles with the local index of this edge in each.
    pub triangles: [Option<(usize, usize)>; 2],
    pub tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles[1].is_none()
    }
}

/// Geometry of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
    /// Longest edge length.
    pub diameter: f64,
    pub edge_lengths: [f64; 3],
    /// Outward unit normal `(n_x, n_t)` of local edge `i`.
    pub normals: [[f64; 2]; 3],
    /// Constant gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn from_vertices(p: [[f64; 2]; 3]) -> Result<Self> {
        let cross =
            (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
        let scale = (0..3)
            .map(|i| {
                let j = (i + 1) % 3;
                (p[j][0] - p[i][0]).hypot(p[j][1] - p[i][1])
            })
            .fold(0.0_f64, f64::max);
        if !(cross > 1e-14 * scale * scale) {
            return Err(Error::InvalidMesh(format!(
                "degenerate or clockwise triangle {p:?} (signed double area {cross:e})"
            )));
        }
        let area = 0.5 * cross;
        let mut edge_lengths = [0.0; 3];
        let mut normals = [[0.0; 2]; 3];
        let mut grad_lambda = [[0.0; 2]; 3];
        for i in 0..3 {
            let a = p[(i + 1) % 3];
            let b = p[(i + 2) % 3];
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = d[0].hypot(d[1]);
            edge_lengths[i] = len;
            normals[i] = [d[1] / len, -d[0] / len];
            grad_lambda[i] = [-d[1] / cross, d[0] / cross];
        }
        let diameter = edge_lengths.iter().copied().fold(0.0, f64::max);
        Ok(ElementGeometry {
            vertices: p,
            area,
            diameter,
            edge_lengths,
            normals,
            grad_lambda,
        })
    }

    /// Physical point for barycentric coordinates.
    pub fn point(&self, lambda: &[f64; 3]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (l, v) in lambda.iter().zip(&self.vertices) {
            x[0] += l * v[0];
            x[1] += l * v[1];
        }
        x
    }

    pub fn barycentric(&self, x: [f64; 2]) -> [f64; 3] {
        let mut lambda = [0.0; 3];
        for i in 0..3 {
            let a = self.vertices[(i + 1) % 3];
            let g = self.grad_lambda[i];
            lambda[i] = g[0] * (x[0] - a[0]) + g[1] * (x[1] - a[1]);
        }
        lambda
    }
}

#[derive(Debug, Clone)]
pub struct SpaceTimeMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    triangle_edges: Vec<[usize; 3]>,
    geometry: Vec<ElementGeometry>,
    /// Triangle of the previous generation each triangle descends from.
    parent: Vec<Option<usize>>,
    generation: usize,
    x_range: (f64, f64),
    t_range: (f64, f64),
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SpaceTimeMesh {
    /// Crossed rectangular grid with every cell cut along its lower-left to
    /// upper-right diagonal.
    pub fn build_structured(
        x_range: (f64, f64),
        t_range: (f64, f64),
        nx: usize,
        nt: usize,
        inflow: Side,
    ) -> Result<Self> {
        if nx == 0 || nt == 0 {
            return Err(Error::invalid(format!(
                "grid counts must be positive, got {nx}x{nt}"
            )));
        }
        if !(x_range.1 > x_range.0) || !(t_range.1 > t_range.0) {
            return Err(Error::invalid(format!(
                "empty space-time interval {x_range:?} x {t_range:?}"
            )));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (nt + 1));
        for j in 0..=nt {
            let t = if j == nt {
                t_range.1
            } else {
                t_range.0 + (t_range.1 - t_range.0) * j as f64 / nt as f64
            };
            for i in 0..=nx {
                let x = if i == nx {
                    x_range.1
                } else {
                    x_range.0 + (x_range.1 - x_range.0) * i as f64 / nx as f64
                };
                vertices.push([x, t]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * nt);
        for j in 0..nt {
            for i in 0..nx {
                let a = id(i, j);
                let b = id(i + 1, j);
                let c = id(i + 1, j + 1);
                let d = id(i, j + 1);
                // Refinement edge is the diagonal (a, c) in both halves.
                triangles.push([c, a, b]);
                triangles.push([a, c, d]);
            }
        }
        let (left, right) = match inflow {
            Side::Left => (BoundaryTag::SpatialInflow, BoundaryTag::SpatialOutflow),
            Side::Right => (BoundaryTag::SpatialOutflow, BoundaryTag::SpatialInflow),
        };
        let mut tags = HashMap::new();
        for i in 0..nx {
            tags.insert(edge_key(id(i, 0), id(i + 1, 0)), BoundaryTag::InitialTime);
            tags.insert(edge_key(id(i, nt), id(i + 1, nt)), BoundaryTag::FinalTime);
        }
        for j in 0..nt {
            tags.insert(edge_key(id(0, j), id(0, j + 1)), left);
            tags.insert(edge_key(id(nx, j), id(nx, j + 1)), right);
        }
        let parent = vec![None; triangles.len()];
        Self::from_parts(vertices, triangles, &tags, parent, 0, x_range, t_range)
    }

    fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        tags: &HashMap<(usize, usize), BoundaryTag>,
        parent: Vec<Option<usize>>,
        generation: usize,
        x_range: (f64, f64),
        t_range: (f64, f64),
    ) -> Result<Self> {
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 4);
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        let mut geometry = Vec::with_capacity(triangles.len());
        for (k, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {k} references a missing vertex"
                )));
            }
            geometry.push(
                ElementGeometry::from_vertices([
                    vertices[tri[0]],
                    vertices[tri[1]],
                    vertices[tri[2]],
                ])
                .map_err(|e| Error::InvalidMesh(format!("triangle {k}: {e}")))?,
            );
            let mut te = [0; 3];
            for (local, slot) in te.iter_mut().enumerate() {
                let key = edge_key(tri[(local + 1) % 3], tri[(local + 2) % 3]);
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        triangles: [None, None],
                        tag: None,
                    });
                    edges.len() - 1
                });
                let edge = &mut edges[e];
                if edge.triangles[0].is_none() {
                    edge.triangles[0] = Some((k, local));
                } else if edge.triangles[1].is_none() {
                    edge.triangles[1] = Some((k, local));
                } else {
                    return Err(Error::InvalidMesh(format!(
                        "edge {key:?} shared by more than two triangles"
                    )));
                }
                *slot = e;
            }
            triangle_edges.push(te);
        }
        for edge in edges.iter_mut() {
            let key = (edge.vertices[0], edge.vertices[1]);
            match (edge.is_boundary(), tags.get(&key)) {
                (true, Some(&tag)) => edge.tag = Some(tag),
                (true, None) => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge {key:?} has no tag (hanging node or hole)"
                    )))
                }
                (false, _) => {}
            }
        }
        Ok(SpaceTimeMesh {
            vertices,
            triangles,
            edges,
            triangle_edges,
            geometry,
            parent,
            generation,
            x_range,
            t_range,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Global edge indices of local edges 0, 1, 2 of triangle `k`.
    pub fn triangle_edges(&self, k: usize) -> [usize; 3] {
        self.triangle_edges[k]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parent[k]
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.x_range
    }

    pub fn t_range(&self) -> (f64, f64) {
        self.t_range
    }

    /// Refinement edge of triangle `k` as a global edge index.
    pub fn refinement_edge(&self, k: usize) -> usize {
        self.triangle_edges[k][2]
    }

    pub fn element_geometry(&self, k: usize) -> Result<ElementGeometry> {
        self.geometry
            .get(k)
            .copied()
            .ok_or_else(|| Error::invalid(format!("triangle index {k} out of range")))
    }

    /// Geometry without the bounds check, for assembly loops.
    pub(crate) fn geometry(&self, k: usize) -> &ElementGeometry {
        &self.geometry[k]
    }

    /// Tag of local edge `local` of triangle `k`, if it lies on the boundary.
    pub fn edge_tag(&self, k: usize, local: usize) -> Option<BoundaryTag> {
        self.edges[self.triangle_edges[k][local]].tag
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    pub fn max_diameter(&self) -> f64 {
        self.geometry.iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    /// Newest-vertex bisection of the marked triangles plus the closure
    /// refinements needed to stay conforming.
    pub fn bisect(&self, marked: &[usize]) -> Result<SpaceTimeMesh> {
        let mut marked_edges = vec![false; self.edges.len()];
        let mut stack = Vec::new();
        for &k in marked {
            if k >= self.triangles.len() {
                return Err(Error::invalid(format!("marked triangle {k} out of range")));
            }
            let e = self.refinement_edge(k);
            if !marked_edges[e] {
                marked_edges[e] = true;
                stack.push(e);
            }
        }
        self.refine_marked_edges(marked_edges, stack)
    }

    /// Splits every triangle into four by bisecting all edges.
    pub fn uniform_refine(&self) -> Result<SpaceTimeMesh> {
        let all = vec![true; self.edges.len()];
        self.refine_marked_edges(all, Vec::new())
    }

    fn refine_marked_edges(
        &self,
        mut marked_edges: Vec<bool>,
        mut stack: Vec<usize>,
    ) -> Result<SpaceTimeMesh> {
        // Closure: a triangle with any marked edge must bisect its
        // refinement edge first.
        while let Some(e) = stack.pop() {
            for &(k, _) in self.edges[e].triangles.iter().flatten() {
                let re = self.refinement_edge(k);
                if !marked_edges[re] {
                    marked_edges[re] = true;
                    stack.push(re);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut tags: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for (e, edge) in self.edges.iter().enumerate() {
            let [a, b] = edge.vertices;
            if marked_edges[e] {
                let pa = self.vertices[a];
                let pb = self.vertices[b];
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                let m = vertices.len() - 1;
                midpoint.insert((a, b), m);
                if let Some(tag) = edge.tag {
                    tags.insert(edge_key(a, m), tag);
                    tags.insert(edge_key(m, b), tag);
                }
            } else if let Some(tag) = edge.tag {
                tags.insert((a, b), tag);
            }
        }

        let mut triangles = Vec::with_capacity(self.triangles.len() * 2);
        let mut parent = Vec::with_capacity(self.triangles.len() * 2);
        let mut work = Vec::new();
        for (k, &tri) in self.triangles.iter().enumerate() {
            work.push(tri);
            while let Some(t) = work.pop() {
                match midpoint.get(&edge_key(t[0], t[1])) {
                    Some(&m) => {
                        work.push([t[1], t[2], m]);
                        work.push([t[2], t[0], m]);
                    }
                    None => {
                        triangles.push(t);
                        parent.push(Some(k));
                    }
                }
            }
        }
        Self::from_parts(
            vertices,
            triangles,
            &tags,
            parent,
            self.generation + 1,
            self.x_range,
            self.t_range,
        )
    }

    /// Checks conformity against the rectangle: positive orientation, every
    /// single-sided edge lies on the rectangle boundary with a matching tag,
    /// and the triangles tile the rectangle.
    pub fn audit(&self) -> Result<()> {
        let (xl, xr) = self.x_range;
        let (t0, t1) = self.t_range;
        let tol = 1e-12 * (xr - xl).abs().max((t1 - t0).abs());
        for (e, edge) in self.edges.iter().enumerate() {
            let [a, b] = edge.vertices.map(|v| self.vertices[v]);
            let on = |f: &dyn Fn([f64; 2]) -> bool| f(a) && f(b);
            let expected = if on(&|p| (p[1] - t0).abs() <= tol) {
                Some(BoundaryTag::InitialTime)
            } else if on(&|p| (p[1] - t1).abs() <= tol) {
                Some(BoundaryTag::FinalTime)
            } else if on(&|p| (p[0] - xl).abs() <= tol) || on(&|p| (p[0] - xr).abs() <= tol) {
                edge.tag
                    .filter(|t| t.is_lateral())
                    .or(Some(BoundaryTag::SpatialInflow))
            } else {
                None
            };
            match (edge.is_boundary(), expected) {
                (true, Some(t)) if edge.tag == Some(t) => {}
                (false, None) => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {e} {:?} is non-conforming or mis-tagged",
                        edge.vertices
                    )))
                }
            }
        }
        let area = self.total_area();
        let expected = (xr - xl) * (t1 - t0);
        if ((area - expected) / expected).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!(
                "triangles cover area {area} instead of {expected}"
            )));
        }
        Ok(())
    }

    /// Bucket grid for point location.
    pub fn locator(&self) -> PointLocator<'_> {
        PointLocator::new(self)
    }
}

/// Finds the triangle containing a point.
pub struct PointLocator<'a> {
    mesh: &'a SpaceTimeMesh,
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    fn new(mesh: &'a SpaceTimeMesh) -> Self {
        let (xl, xr) = mesh.x_range;
        let (t0, t1) = mesh.t_range;
        let n = (mesh.n_triangles() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [n, n];
        let cell = [(xr - xl) / n as f64, (t1 - t0) / n as f64];
        let origin = [xl, t0];
        let mut buckets = vec![Vec::new(); n * n];
        for (k, g) in mesh.geometry.iter().enumerate() {
            let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
            for v in &g.vertices {
                for d in 0..2 {
                    lo[d] = lo[d].min(v[d]);
                    hi[d] = hi[d].max(v[d]);
                }
            }
            let i0 = Self::bin(lo[0], origin[0], cell[0], n);
            let i1 = Self::bin(hi[0], origin[0], cell[0], n);
            let j0 = Self::bin(lo[1], origin[1], cell[1], n);
            let j1 = Self::bin(hi[1], origin[1], cell[1], n);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * n + i].push(k);
                }
            }
        }
        PointLocator {
            mesh,
            origin,
            cell,
            dims,
            buckets,
        }
    }

    fn bin(v: f64, origin: f64, cell: f64, n: usize) -> usize {
        let b = ((v - origin) / cell).floor();
        if b < 0.0 {
            0
        } else {
            (b as usize).min(n - 1)
        }
    }

    /// Triangle index and barycentric coordinates of `x`, or `None` if the
    /// point is outside the mesh.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let i = Self::bin(x[0], self.origin[0], self.cell[0], self.dims[0]);
        let j = Self::bin(x[1], self.origin[1], self.cell[1], self.dims[1]);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &k in &self.buckets[j * self.dims[0] + i] {
            let lambda = self.mesh.geometry[k].barycentric(x);
            let worst = lambda.iter().copied().fold(f64::MAX, f64::min);
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((k, lambda, worst));
            }
        }
        match best {
            Some((k, lambda, worst)) if worst >= -1e-9 => Some((k, lambda)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(nx: usize, nt: usize) -> SpaceTimeMesh {
        SpaceTimeMesh::build_structured((0.0, 1.0), (0.0, 1.0), nx, nt, Side::Left).unwrap()
    }

    #[test]
    fn structured_counts() {
        let m = unit(1, 1);
        assert_eq!((m.n_triangles(), m.n_vertices(), m.n_edges()), (2, 4, 5));
        let tidal =
            SpaceTimeMesh::build_structured((0.0, 10000.0), (0.0, 604800.0), 25, 400, Side::Left)
                .unwrap();
        assert_eq!(tidal.n_triangles(), 20000);
        assert_eq!(tidal.n_vertices(), 26 * 401);
        let dam =
            SpaceTimeMesh::build_structured((0.0, 2000.0), (0.0, 200.0), 800, 35, Side::Right)
                .unwrap();
        assert_eq!(dam.n_triangles(), 56000);
        dam.audit().unwrap();
    }

    #[test]
    fn structured_rejects_bad_input() {
        assert!(SpaceTimeMesh::build_structured((0.0, 1.0), (0.0, 1.0), 0, 3, Side::Left).is_err());
        assert!(SpaceTimeMesh::build_structured((1.0, 1.0), (0.0, 1.0), 2, 3, Side::Left).is_err());
        assert!(SpaceTimeMesh::build_structured((0.0, 1.0), (2.0, 1.0), 2, 3, Side::Left).is_err());
    }

    #[test]
    fn boundary_tags_cover_the_boundary() {
        let m = unit(3, 2);
        let count = |t| m.edges().iter().filter(|e| e.tag == Some(t)).count();
        assert_eq!(count(BoundaryTag::InitialTime), 3);
        assert_eq!(count(BoundaryTag::FinalTime), 3);
        assert_eq!(count(BoundaryTag::SpatialInflow), 2);
        assert_eq!(count(BoundaryTag::SpatialOutflow), 2);
        let n_boundary = m.edges().iter().filter(|e| e.is_boundary()).count();
        assert_eq!(n_boundary, 10);
        // Inflow sits on the left.
        for e in m
            .edges()
            .iter()
            .filter(|e| e.tag == Some(BoundaryTag::SpatialInflow))
        {
            assert!(e.vertices.iter().all(|&v| m.vertices()[v][0] == 0.0));
        }
    }

    #[test]
    fn unit_right_triangle_geometry() {
        let g = ElementGeometry::from_vertices([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((g.area - 0.5).abs() < 1e-15);
        assert!((g.diameter - 2f64.sqrt()).abs() < 1e-15);
        // Leg along t = 0 is opposite vertex 2, the leg along x = 0 opposite vertex 1.
        assert!((g.normals[2][0] - 0.0).abs() < 1e-15 && (g.normals[2][1] + 1.0).abs() < 1e-15);
        assert!((g.normals[1][0] + 1.0).abs() < 1e-15 && g.normals[1][1].abs() < 1e-15);
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let r = ElementGeometry::from_vertices([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert!(matches!(r, Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = unit(2, 2);
        let r = m.bisect(&[]).unwrap();
        assert_eq!(r.n_triangles(), m.n_triangles());
        assert_eq!(r.n_vertices(), m.n_vertices());
    }

    #[test]
    fn single_mark_closes_through_neighbour() {
        let m = unit(1, 1);
        let r = m.bisect(&[0]).unwrap();
        assert_eq!(r.n_triangles(), 4);
        r.audit().unwrap();
        // Both halves of the shared diagonal are interior edges.
        let interior = r.edges().iter().filter(|e| !e.is_boundary()).count();
        assert_eq!(interior, 4);
    }

    #[test]
    fn uniform_refinement_counts_and_diameters() {
        let m = unit(1, 1);
        assert_eq!(m.uniform_refine().unwrap().n_triangles(), 8);
        let mut m6 =
            SpaceTimeMesh::build_structured((0.0, 3.0), (0.0, 1.0), 3, 1, Side::Left).unwrap();
        assert_eq!(m6.n_triangles(), 6);
        let mut h = m6.max_diameter();
        for _ in 0..3 {
            m6 = m6.uniform_refine().unwrap();
            let h2 = m6.max_diameter();
            assert!((h2 - 0.5 * h).abs() < 1e-12 * h);
            h = h2;
            m6.audit().unwrap();
        }
        assert_eq!(m6.n_triangles(), 384);
    }

    #[test]
    fn anisotropic_cells_halve_diameter() {
        let mut m =
            SpaceTimeMesh::build_structured((0.0, 1.0), (0.0, 0.5), 1, 1, Side::Left).unwrap();
        let mut h = m.max_diameter();
        for _ in 0..4 {
            m = m.uniform_refine().unwrap();
            assert!((m.max_diameter() - 0.5 * h).abs() < 1e-12 * h);
            h = m.max_diameter();
        }
    }

    #[test]
    fn edge_normals_close_up() {
        let m = unit(2, 3)
            .uniform_refine()
            .unwrap()
            .bisect(&[0, 5])
            .unwrap();
        for k in 0..m.n_triangles() {
            let g = m.element_geometry(k).unwrap();
            let mut s = [0.0; 2];
            for i in 0..3 {
                s[0] += g.edge_lengths[i] * g.normals[i][0];
                s[1] += g.edge_lengths[i] * g.normals[i][1];
            }
            assert!(s[0].abs() < 1e-14 && s[1].abs() < 1e-14);
        }
    }

    #[test]
    fn parents_tile_children() {
        let m = unit(2, 2);
        let r = m.bisect(&[1, 6]).unwrap();
        let mut area = vec![0.0; m.n_triangles()];
        for k in 0..r.n_triangles() {
            area[r.parent(k).unwrap()] += r.element_geometry(k).unwrap().area;
        }
        for (k, a) in area.iter().enumerate() {
            let pa = m.element_geometry(k).unwrap().area;
            assert!((a - pa).abs() < 1e-12 * pa);
        }
    }

    #[test]
    fn locator_finds_points() {
        let m = unit(4, 3).bisect(&[3, 7, 11]).unwrap();
        let loc = m.locator();
        for &p in &[
            [0.0, 0.0],
            [1.0, 1.0],
            [0.3, 0.7],
            [0.999, 0.001],
            [0.5, 0.5],
        ] {
            let (k, l) = loc.locate(p).unwrap();
            let back = m.element_geometry(k).unwrap().point(&l);
            assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
        }
        assert!(loc.locate([1.5, 0.5]).is_none());
    }
}
