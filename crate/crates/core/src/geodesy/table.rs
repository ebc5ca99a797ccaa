use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{shortest_paths, AssignmentMap, WeightedGraph};
use crate::mesh::frames as reader;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SSNT";
const SOURCE_CHUNK: usize = 64;

/// Per surface vertex, the `k` coarse vertices nearest along surface edges,
/// sorted by (distance, coarse index).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodTable {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborhoodTable {
    pub fn new(k: usize, indices: Vec<usize>, distances: Vec<f64>) -> Result<Self> {
        if k == 0 || indices.len() != distances.len() || !indices.len().is_multiple_of(k) {
            return Err(Error::shape(format!(
                "table with k = {k} cannot hold {} indices and {} distances",
                indices.len(),
                distances.len()
            )));
        }
        for (j, row) in distances.chunks(k).enumerate() {
            let ordered = row.windows(2).all(|w| w[0] <= w[1]);
            if !ordered || row.iter().any(|d| !(*d >= 0.0)) {
                return Err(Error::Format(format!("row {j} distances not sorted and non-negative")));
            }
            let idx = &indices[j * k..(j + 1) * k];
            if (1..k).any(|a| idx[..a].contains(&idx[a])) {
                return Err(Error::Format(format!("row {j} repeats a neighbor")));
            }
        }
        Ok(NeighborhoodTable {
            k,
            indices,
            distances,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of surface vertices.
    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.indices[j * self.k..(j + 1) * self.k]
    }

    pub fn distances(&self, j: usize) -> &[f64] {
        &self.distances[j * self.k..(j + 1) * self.k]
    }

    /// Flattened `M * k` neighbour indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Keeps the first `k` neighbours of every row, which are exactly the
    /// `k`-nearest table.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k {
            return Err(Error::TooManyNeighbors {
                k,
                available: self.k,
            });
        }
        fn pick<V: Copy>(v: &[V], from: usize, k: usize) -> Vec<V> {
            v.chunks(from).flat_map(|r| r[..k].to_vec()).collect()
        }
        Ok(NeighborhoodTable {
            k,
            indices: pick(&self.indices, self.k, k),
            distances: pick(&self.distances, self.k, k),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.indices.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (&i, &d) in self.indices.iter().zip(&self.distances) {
            out.extend_from_slice(&(i as u32).to_le_bytes());
            out.extend_from_slice(&(d as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = reader::Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing SSNT magic".into()));
        }
        let k = r.u32()? as usize;
        let m = r.u32()? as usize;
        let total = k
            .checked_mul(m)
            .filter(|&t| t.checked_mul(8).is_some_and(|b| b + 12 == bytes.len()))
            .ok_or_else(|| Error::Format("table length does not match header".into()))?;
        let mut indices = Vec::with_capacity(total);
        let mut distances = Vec::with_capacity(total);
        for _ in 0..total {
            indices.push(r.u32()? as usize);
            distances.push(r.f32()?);
        }
        NeighborhoodTable::new(k, indices, distances)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_bytes()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_bytes(&bytes)
    }
}

#[inline]
fn before(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_lt()
}

/// For every surface vertex, the `k` coarse vertices whose mapped surface
/// positions are closest along edges weighted by rest length.
///
/// One Dijkstra per coarse source (parallel within a chunk of sources), merged
/// into a bounded sorted list per surface vertex.
pub fn geodesic_knn<G: WeightedGraph>(
    graph: &G,
    mapped: &AssignmentMap,
    k: usize,
) -> Result<NeighborhoodTable> {
    let n = mapped.len();
    if k == 0 || k > n {
        return Err(Error::TooManyNeighbors { k, available: n });
    }
    let m = graph.vertex_count();
    let mut best: Vec<Vec<(f64, usize)>> = vec![Vec::with_capacity(k + 1); m];
    for chunk_start in (0..n).step_by(SOURCE_CHUNK) {
        let chunk_end = (chunk_start + SOURCE_CHUNK).min(n);
        let rows: Vec<Vec<f64>> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|i| shortest_paths(graph, mapped.target(i)))
            .collect();
        for (offset, dist) in rows.iter().enumerate() {
            let i = chunk_start + offset;
            for (j, &d) in dist.iter().enumerate() {
                if !d.is_finite() {
                    return Err(Error::Disconnected { components: 2 });
                }
                let list = &mut best[j];
                if list.len() == k && !before((d, i), list[k - 1]) {
                    continue;
                }
                let pos = list.partition_point(|&e| before(e, (d, i)));
                list.insert(pos, (d, i));
                list.truncate(k);
            }
        }
    }
    let mut indices = Vec::with_capacity(m * k);
    let mut distances = Vec::with_capacity(m * k);
    for list in best {
        for (d, i) in list {
            indices.push(i);
            distances.push(d);
        }
    }
    NeighborhoodTable::new(k, indices, distances)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Path graph v0 - v1 - v2 with unit edges.
    struct Path3;

    const ADJ: [&[(usize, f64)]; 3] = [&[(1, 1.0)], &[(0, 1.0), (2, 1.0)], &[(1, 1.0)]];

    impl WeightedGraph for Path3 {
        fn vertex_count(&self) -> usize {
            3
        }
        fn neighbors(&self, v: usize) -> &[(usize, f64)] {
            ADJ[v]
        }
    }

    #[test]
    fn path_graph_examples() {
        let mapped = AssignmentMap::new(vec![0, 2], 0.0);
        let t1 = geodesic_knn(&Path3, &mapped, 1).unwrap();
        assert_eq!(t1.neighbors(1), &[0]);
        assert_eq!(t1.distances(1), &[1.0]);
        assert_eq!(t1.distances(0), &[0.0]);

        let t2 = geodesic_knn(&Path3, &mapped, 2).unwrap();
        assert_eq!(t2.neighbors(0), &[0, 1]);
        assert_eq!(t2.distances(0), &[0.0, 2.0]);
        assert_eq!(t2.truncated(1).unwrap(), t1);
        assert!(geodesic_knn(&Path3, &mapped, 3).is_err());
    }

    #[test]
    fn bytes_round_trip_and_corruption() {
        let t = NeighborhoodTable::new(2, vec![0, 1, 1, 0], vec![0.0, 2.5, 0.5, 1.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"SSNT");
        assert_eq!(NeighborhoodTable::from_bytes(&bytes).unwrap(), t);
        assert!(NeighborhoodTable::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn rejects_unsorted_or_repeated_rows() {
        assert!(NeighborhoodTable::new(2, vec![0, 1], vec![2.0, 1.0]).is_err());
        assert!(NeighborhoodTable::new(2, vec![1, 1], vec![1.0, 1.0]).is_err());
    }
}
