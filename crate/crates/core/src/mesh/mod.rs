//! Mesh containers, file IO and the barycentric embedding of the surface in
//! the coarse lattice.

mod embedding;
pub(crate) mod frames;
mod obj;

pub use embedding::{apply_embedding, embed_surface, EmbeddingWeights, BARYCENTRIC_TOLERANCE};
pub use frames::{read_frames, write_frames, DisplacementFrame, FrameSet};
pub use obj::{load_lattice, load_surface, save_lattice, save_surface};

use crate::{Error, Result};

/// A point or displacement in millimetres.
pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Axis-aligned bounds of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    pub fn of(points: &[Vec3]) -> Self {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Bounds { min, max }
    }

    pub fn diagonal(&self) -> f64 {
        distance(self.min, self.max)
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }
}

/// Undirected surface edge with its rest length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// High-resolution triangle surface in its rest pose.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    // CSR adjacency over `edges`: neighbours of v are
    // `adj[adj_start[v]..adj_start[v + 1]]` as (vertex, edge length).
    adj_start: Vec<usize>,
    adj: Vec<(usize, f64)>,
}

impl SurfaceMesh {
    /// Validates the triangles, derives the edge list and checks that the
    /// vertex/edge graph is connected.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let count = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= count) {
                return Err(Error::IndexOutOfRange {
                    line: t + 1,
                    index,
                    count,
                });
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateTriangle(t));
            }
        }
        let edges = unique_edges(&vertices, triangles.iter().flat_map(|t| {
            [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
        }));
        if let Some(e) = edges.iter().position(|e| !(e.length > 0.0)) {
            return Err(Error::DegenerateTriangle(
                triangles
                    .iter()
                    .position(|t| t.contains(&edges[e].a) && t.contains(&edges[e].b))
                    .unwrap_or(0),
            ));
        }
        let (adj_start, adj) = csr(count, &edges);
        let mesh = SurfaceMesh {
            vertices,
            triangles,
            edges,
            adj_start,
            adj,
        };
        let components = mesh.component_count();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Neighbours of `v` with the cached rest edge length.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[self.adj_start[v]..self.adj_start[v + 1]]
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::of(&self.vertices)
    }

    fn component_count(&self) -> usize {
        let n = self.vertices.len();
        let mut seen = vec![false; n];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(w, _) in self.neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        components
    }
}

/// Coarse tetrahedral lattice in its rest pose.
#[derive(Debug, Clone)]
pub struct LatticeMesh {
    vertices: Vec<Vec3>,
    tetrahedra: Vec<[usize; 4]>,
    edges: Vec<Edge>,
    adj_start: Vec<usize>,
    adj: Vec<(usize, f64)>,
}

impl LatticeMesh {
    /// Every tetrahedron must have positive signed volume
    /// `det[b - a, c - a, d - a] / 6`.
    pub fn new(vertices: Vec<Vec3>, tetrahedra: Vec<[usize; 4]>) -> Result<Self> {
        let count = vertices.len();
        for (t, tet) in tetrahedra.iter().enumerate() {
            if let Some(&index) = tet.iter().find(|&&i| i >= count) {
                return Err(Error::IndexOutOfRange {
                    line: t + 1,
                    index,
                    count,
                });
            }
            if !(signed_volume(&vertices, tet) > 0.0) {
                return Err(Error::InvertedTetrahedron(t));
            }
        }
        let edges = unique_edges(
            &vertices,
            tetrahedra.iter().flat_map(|t| {
                [
                    (t[0], t[1]),
                    (t[0], t[2]),
                    (t[0], t[3]),
                    (t[1], t[2]),
                    (t[1], t[3]),
                    (t[2], t[3]),
                ]
            }),
        );
        let (adj_start, adj) = csr(count, &edges);
        Ok(LatticeMesh {
            vertices,
            tetrahedra,
            edges,
            adj_start,
            adj,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tetrahedra(&self) -> &[[usize; 4]] {
        &self.tetrahedra
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[self.adj_start[v]..self.adj_start[v + 1]]
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::of(&self.vertices)
    }
}

pub(crate) fn signed_volume(vertices: &[Vec3], tet: &[usize; 4]) -> f64 {
    let a = vertices[tet[0]];
    let e1 = sub(vertices[tet[1]], a);
    let e2 = sub(vertices[tet[2]], a);
    let e3 = sub(vertices[tet[3]], a);
    dot(e1, cross(e2, e3)) / 6.0
}

fn unique_edges(vertices: &[Vec3], pairs: impl Iterator<Item = (usize, usize)>) -> Vec<Edge> {
    let mut keys: Vec<(usize, usize)> = pairs.map(|(a, b)| (a.min(b), a.max(b))).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(a, b)| Edge {
            a,
            b,
            length: distance(vertices[a], vertices[b]),
        })
        .collect()
}

fn csr(count: usize, edges: &[Edge]) -> (Vec<usize>, Vec<(usize, f64)>) {
    let mut degree = vec![0usize; count + 1];
    for e in edges {
        degree[e.a + 1] += 1;
        degree[e.b + 1] += 1;
    }
    for v in 0..count {
        degree[v + 1] += degree[v];
    }
    let start = degree;
    let mut fill = start.clone();
    let mut adj = vec![(0usize, 0.0f64); 2 * edges.len()];
    for e in edges {
        adj[fill[e.a]] = (e.b, e.length);
        fill[e.a] += 1;
        adj[fill[e.b]] = (e.a, e.length);
        fill[e.b] += 1;
    }
    (start, adj)
}

/// Minimum triangle area accepted by [`face_normals`], in mm².
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Unit normal of every triangle, oriented by the winding `(i, j, k)`.
pub fn face_normals(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Result<Vec<Vec3>> {
    triangles
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::shape(format!(
                    "triangle {t} references a vertex beyond {}",
                    vertices.len()
                )));
            }
            let n = cross(
                sub(vertices[tri[1]], vertices[tri[0]]),
                sub(vertices[tri[2]], vertices[tri[0]]),
            );
            let len = norm(n);
            if !(0.5 * len > MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateTriangle(t));
            }
            Ok(scale(n, 1.0 / len))
        })
        .collect()
}
