use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::AssignmentMap;
use crate::mesh::{LatticeMesh, SurfaceMesh};
use crate::{Error, Result};

/// Undirected graph with non-negative edge weights.
pub trait WeightedGraph: Sync {
    fn vertex_count(&self) -> usize;
    fn neighbors(&self, v: usize) -> &[(usize, f64)];
}

impl WeightedGraph for SurfaceMesh {
    fn vertex_count(&self) -> usize {
        SurfaceMesh::vertex_count(self)
    }

    fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        SurfaceMesh::neighbors(self, v)
    }
}

impl WeightedGraph for LatticeMesh {
    fn vertex_count(&self) -> usize {
        LatticeMesh::vertex_count(self)
    }

    fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        LatticeMesh::neighbors(self, v)
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (distance, vertex).
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path lengths; unreachable vertices stay infinite.
pub fn shortest_paths<G: WeightedGraph + ?Sized>(graph: &G, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.vertex_count()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in graph.neighbors(v) {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Entry(nd, w));
            }
        }
    }
    dist
}

/// Geodesic distance from every mapped coarse vertex (rows) to every surface
/// vertex (columns).
pub fn source_distances(surface: &SurfaceMesh, mapped: &AssignmentMap) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = mapped
        .targets()
        .par_iter()
        .map(|&s| shortest_paths(surface, s))
        .collect();
    if rows.iter().flatten().any(|d| !d.is_finite()) {
        return Err(Error::Disconnected { components: 2 });
    }
    Ok(rows)
}

/// `k` nearest other lattice vertices of every lattice vertex along lattice
/// edges, flattened row-major (`N * k`). Ties resolve to the lower index.
pub fn lattice_knn(lattice: &LatticeMesh, k: usize) -> Result<Vec<usize>> {
    let n = lattice.vertex_count();
    if k == 0 || k >= n {
        return Err(Error::TooManyNeighbors {
            k,
            available: n.saturating_sub(1),
        });
    }
    let rows: Vec<Result<Vec<usize>>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let dist = shortest_paths(lattice, v);
            let mut order: Vec<usize> = (0..n).filter(|&w| w != v && dist[w].is_finite()).collect();
            if order.len() < k {
                return Err(Error::TooManyNeighbors {
                    k,
                    available: order.len(),
                });
            }
            order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
            order.truncate(k);
            Ok(order)
        })
        .collect();
    let mut out = Vec::with_capacity(n * k);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}
