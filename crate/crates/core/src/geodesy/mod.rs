//! Rest-pose neighbourhoods: optimal coarse-to-surface vertex assignment,
//! shortest-path distances along surface edges and the frozen k-nearest table
//! consumed by upsampling.

mod assignment;
mod dijkstra;
mod table;

pub use assignment::{linear_assignment, AssignmentMap};
pub use dijkstra::{lattice_knn, shortest_paths, source_distances, WeightedGraph};
pub use table::{geodesic_knn, NeighborhoodTable};

use crate::mesh::{distance, LatticeMesh, SurfaceMesh};
use crate::Result;

/// Euclidean rest distance between every lattice vertex (rows) and every
/// surface vertex (columns).
pub fn rest_costs(surface: &SurfaceMesh, lattice: &LatticeMesh) -> Vec<Vec<f64>> {
    lattice
        .vertices()
        .iter()
        .map(|&l| surface.vertices().iter().map(|&h| distance(l, h)).collect())
        .collect()
}

/// Optimal injective map of lattice vertices onto surface vertices.
pub fn rest_assignment(surface: &SurfaceMesh, lattice: &LatticeMesh) -> Result<AssignmentMap> {
    linear_assignment(&rest_costs(surface, lattice))
}

/// Pairwise costs, assignment, then geodesic k-nearest search.
pub fn precompute(surface: &SurfaceMesh, lattice: &LatticeMesh, k: usize) -> Result<NeighborhoodTable> {
    let mapped = rest_assignment(surface, lattice)?;
    geodesic_knn(surface, &mapped, k)
}
