use super::{sub, Bounds, LatticeMesh, SurfaceMesh, Vec3};
use crate::{Error, Result};

/// Barycentric coordinates may undershoot zero by this much (vertices lying on
/// tetrahedron faces).
pub const BARYCENTRIC_TOLERANCE: f64 = 1e-6;

// Violations below this are treated as exact containment so that shared faces
// resolve to the lowest tetrahedron index.
const TIE_EPS: f64 = 1e-12;

/// Containing tetrahedron and barycentric coordinates of every surface vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingWeights {
    lattice_vertices: usize,
    tets: Vec<usize>,
    corners: Vec<[usize; 4]>,
    coords: Vec<[f64; 4]>,
}

impl EmbeddingWeights {
    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    pub fn tetrahedron(&self, vertex: usize) -> usize {
        self.tets[vertex]
    }

    pub fn corners(&self, vertex: usize) -> [usize; 4] {
        self.corners[vertex]
    }

    pub fn coords(&self, vertex: usize) -> [f64; 4] {
        self.coords[vertex]
    }

    pub fn lattice_vertex_count(&self) -> usize {
        self.lattice_vertices
    }
}

fn barycentric(v: &[Vec3], tet: &[usize; 4], p: Vec3) -> Option<[f64; 4]> {
    let a = v[tet[0]];
    let e1 = sub(v[tet[1]], a);
    let e2 = sub(v[tet[2]], a);
    let e3 = sub(v[tet[3]], a);
    let r = sub(p, a);
    let det = super::dot(e1, super::cross(e2, e3));
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = super::dot(r, super::cross(e2, e3)) / det;
    let l2 = super::dot(e1, super::cross(r, e3)) / det;
    let l3 = super::dot(e1, super::cross(e2, r)) / det;
    Some([1.0 - l1 - l2 - l3, l1, l2, l3])
}

fn violation(l: &[f64; 4]) -> f64 {
    let v = l
        .iter()
        .map(|&x| (-x).max(x - 1.0))
        .fold(0.0f64, f64::max);
    if v < TIE_EPS {
        0.0
    } else {
        v
    }
}

/// Locates every surface vertex in the lattice. The tetrahedron with the
/// smallest containment violation wins, ties go to the lowest index.
pub fn embed_surface(surface: &SurfaceMesh, lattice: &LatticeMesh) -> Result<EmbeddingWeights> {
    let lv = lattice.vertices();
    let boxes: Vec<Bounds> = lattice
        .tetrahedra()
        .iter()
        .map(|t| Bounds::of(&[lv[t[0]], lv[t[1]], lv[t[2]], lv[t[3]]]))
        .collect();
    let slack = 1e-6 * lattice.bounds().diagonal().max(1.0);

    let mut tets = Vec::with_capacity(surface.vertex_count());
    let mut corners = Vec::with_capacity(surface.vertex_count());
    let mut coords = Vec::with_capacity(surface.vertex_count());
    for (vi, &p) in surface.vertices().iter().enumerate() {
        let mut best: Option<(f64, usize, [f64; 4])> = None;
        for (t, tet) in lattice.tetrahedra().iter().enumerate() {
            if !boxes[t].contains(p, slack) {
                continue;
            }
            let Some(l) = barycentric(lv, tet, p) else {
                continue;
            };
            let viol = violation(&l);
            if best.is_none_or(|(b, _, _)| viol < b) {
                best = Some((viol, t, l));
            }
        }
        match best {
            Some((viol, t, l)) if viol <= BARYCENTRIC_TOLERANCE => {
                tets.push(t);
                corners.push(lattice.tetrahedra()[t]);
                coords.push(l);
            }
            other => {
                return Err(Error::OutsideLattice {
                    vertex: vi,
                    violation: other.map_or(f64::INFINITY, |b| b.0),
                })
            }
        }
    }
    Ok(EmbeddingWeights {
        lattice_vertices: lattice.vertex_count(),
        tets,
        corners,
        coords,
    })
}

/// Displaces the embedded surface by interpolating lattice displacements.
pub fn apply_embedding(weights: &EmbeddingWeights, lr_disp: &[Vec3]) -> Result<Vec<Vec3>> {
    if lr_disp.len() != weights.lattice_vertices {
        return Err(Error::shape(format!(
            "lattice has {} vertices but displacement has {} rows",
            weights.lattice_vertices,
            lr_disp.len()
        )));
    }
    Ok(weights
        .corners
        .iter()
        .zip(&weights.coords)
        .map(|(c, l)| {
            let mut out = [0.0; 3];
            for (&vi, &w) in c.iter().zip(l) {
                for a in 0..3 {
                    out[a] += w * lr_disp[vi][a];
                }
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_tet() -> LatticeMesh {
        LatticeMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    // Two tets sharing the face (1, 2, 3).
    fn two_tets() -> LatticeMesh {
        LatticeMesh::new(
            vec![
                [0.0; 3],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 1.0],
            ],
            vec![[0, 1, 2, 3], [4, 2, 1, 3]],
        )
        .unwrap()
    }

    fn surface(points: Vec<Vec3>) -> SurfaceMesh {
        let n = points.len();
        let tris = (2..n).map(|i| [0, i - 1, i]).collect();
        SurfaceMesh::new(points, tris).unwrap()
    }

    #[test]
    fn coincident_centroid_and_edge_midpoint() {
        let s = surface(vec![
            [0.0, 1.0, 0.0],
            [0.25, 0.25, 0.25],
            [0.5, 0.0, 0.0],
        ]);
        let w = embed_surface(&s, &unit_tet()).unwrap();
        assert_eq!(w.coords(0), [0.0, 0.0, 1.0, 0.0]);
        for c in w.coords(1) {
            assert!((c - 0.25).abs() < 1e-15);
        }
        let m = w.coords(2);
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
        assert!(m[2].abs() < 1e-15 && m[3].abs() < 1e-15);
    }

    #[test]
    fn shared_face_goes_to_lowest_index() {
        let s = surface(vec![
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [0.9, 0.9, 0.9],
            [0.1, 0.1, 0.1],
        ]);
        let w = embed_surface(&s, &two_tets()).unwrap();
        assert_eq!(w.tetrahedron(0), 0);
        assert_eq!(w.tetrahedron(1), 1);
        assert_eq!(w.tetrahedron(2), 0);
        for v in 0..3 {
            let c = w.coords(v);
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(c.iter().all(|&x| x >= -BARYCENTRIC_TOLERANCE));
        }
    }

    #[test]
    fn outside_vertex_is_reported() {
        let s = surface(vec![[0.1, 0.1, 0.1], [0.2, 0.1, 0.1], [2.0, 2.0, 2.0]]);
        assert!(matches!(
            embed_surface(&s, &unit_tet()),
            Err(Error::OutsideLattice { vertex: 2, .. })
        ));
    }

    #[test]
    fn partition_of_unity_and_centroid_mean() {
        let s = surface(vec![[0.25, 0.25, 0.25], [0.1, 0.2, 0.3], [0.0, 0.0, 0.5]]);
        let w = embed_surface(&s, &unit_tet()).unwrap();
        let d = [1.5, -2.0, 0.25];
        for out in apply_embedding(&w, &[d; 4]).unwrap() {
            for a in 0..3 {
                assert!((out[a] - d[a]).abs() < 1e-15);
            }
        }
        assert!(apply_embedding(&w, &[[0.0; 3]; 4])
            .unwrap()
            .iter()
            .all(|v| *v == [0.0; 3]));
        let e = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [4.0, 4.0, 4.0]];
        let out = apply_embedding(&w, &e).unwrap()[0];
        let mean = [1.25, 1.5, 1.75];
        for a in 0..3 {
            assert!((out[a] - mean[a]).abs() < 1e-15);
        }
        assert!(apply_embedding(&w, &e[..3]).is_err());
    }

    proptest! {
        #[test]
        fn embedding_is_linear(
            u in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 5),
            v in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 5),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let s = surface(vec![[0.2, 0.3, 0.1], [0.7, 0.6, 0.5], [0.05, 0.05, 0.8]]);
            let w = embed_surface(&s, &two_tets()).unwrap();
            let mix: Vec<Vec3> = u.iter().zip(&v).map(|(p, q)| {
                [a * p[0] + b * q[0], a * p[1] + b * q[1], a * p[2] + b * q[2]]
            }).collect();
            let lhs = apply_embedding(&w, &mix).unwrap();
            let pu = apply_embedding(&w, &u).unwrap();
            let pv = apply_embedding(&w, &v).unwrap();
            for j in 0..lhs.len() {
                for k in 0..3 {
                    prop_assert!((lhs[j][k] - (a * pu[j][k] + b * pv[j][k])).abs() < 1e-12);
                }
            }
        }
    }
}
