//! Feature encoding on the coarse lattice, coordinate-based upsampling onto the
//! surface and per-vertex reconstruction of surface displacements.

mod config;
mod model;
mod train;

pub use config::{ModelConfig, Variant};
pub use model::{displacement_scale, EncodedFeatures, LossParts, Model};
pub use train::{loss_log_csv, train, EpochLog, Trainer};

use std::sync::Arc;

use crate::geodesy::{lattice_knn, NeighborhoodTable};
use crate::mesh::{distance, Bounds, LatticeMesh, SurfaceMesh, Vec3};
use crate::tensor::Tensor;
use crate::{Error, Result, Scalar};

/// `[sin(2^l pi p), cos(2^l pi p)]` for every axis and level `l < levels`,
/// grouped by axis, giving `6 * levels` values per point.
pub fn positional_encode(points: &[Vec3], levels: usize) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let mut row = Vec::with_capacity(6 * levels);
            for &x in p {
                for l in 0..levels {
                    let a = (1u64 << l) as f64 * std::f64::consts::PI * x;
                    row.push(a.sin());
                    row.push(a.cos());
                }
            }
            row
        })
        .collect()
}

/// Per-axis affine map of the surface rest bounding box onto `[-1, 1]^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    center: Vec3,
    half: Vec3,
}

impl Normalizer {
    pub fn from_bounds(b: &Bounds) -> Self {
        let mut center = [0.0; 3];
        let mut half = [1.0; 3];
        for a in 0..3 {
            center[a] = 0.5 * (b.min[a] + b.max[a]);
            let h = 0.5 * (b.max[a] - b.min[a]);
            if h > 0.0 {
                half[a] = h;
            }
        }
        Normalizer { center, half }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.center[0]) / self.half[0],
            (p[1] - self.center[1]) / self.half[1],
            (p[2] - self.center[2]) / self.half[2],
        ]
    }
}

/// The `k` nearest lattice vertices of every surface vertex by straight-line
/// rest distance, ties to the lower index.
pub fn euclidean_knn(surface: &SurfaceMesh, lattice: &LatticeMesh, k: usize) -> Result<Vec<usize>> {
    let n = lattice.vertex_count();
    if k > n {
        return Err(Error::TooManyNeighbors { k, available: n });
    }
    let mut out = Vec::with_capacity(surface.vertex_count() * k);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &h in surface.vertices() {
        order.clear();
        order.extend(lattice.vertices().iter().enumerate().map(|(i, &l)| (distance(h, l), i)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(order[..k].iter().map(|&(_, i)| i));
    }
    Ok(out)
}

/// Frame-independent inputs of the model: encodings of rest positions,
/// neighbourhoods and the surface topology.
pub struct Geometry<T> {
    lattice_count: usize,
    surface_count: usize,
    k_interp: usize,
    positional: Tensor<T>,
    rest_graph: Arc<[usize]>,
    centers: Arc<[usize]>,
    neighbors: Arc<[usize]>,
    coords: Tensor<T>,
    surface_rest: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl<T: Scalar> Geometry<T> {
    /// `table` must hold at least `k_interp` geodesic neighbours per surface
    /// vertex; the no-coordinate-upsampling variant ignores it and uses
    /// Euclidean neighbours instead.
    pub fn new(
        config: &ModelConfig,
        surface: &SurfaceMesh,
        lattice: &LatticeMesh,
        table: &NeighborhoodTable,
    ) -> Result<Self> {
        config.validate()?;
        let (n, m, k) = (lattice.vertex_count(), surface.vertex_count(), config.k_interp);
        if config.k_graph >= n {
            return Err(Error::TooManyNeighbors {
                k: config.k_graph,
                available: n.saturating_sub(1),
            });
        }
        let neighbors: Vec<usize> = match config.variant {
            Variant::NoCoordinateUpsampling => euclidean_knn(surface, lattice, k)?,
            _ => {
                if table.len() != m {
                    return Err(Error::shape(format!(
                        "neighbourhood table has {} rows for {m} surface vertices",
                        table.len()
                    )));
                }
                let t = table.truncated(k)?;
                if let Some(&bad) = t.indices().iter().find(|&&i| i >= n) {
                    return Err(Error::shape(format!(
                        "neighbourhood table refers to lattice vertex {bad} of {n}"
                    )));
                }
                t.indices().to_vec()
            }
        };

        let norm = Normalizer::from_bounds(&surface.bounds());
        let lr: Vec<Vec3> = lattice.vertices().iter().map(|&p| norm.apply(p)).collect();
        let hr: Vec<Vec3> = surface.vertices().iter().map(|&p| norm.apply(p)).collect();
        let pe = positional_encode(&lr, config.pe_levels);
        let positional = Tensor::from_f64(vec![n, 6 * config.pe_levels], &pe.concat())?;

        let mut coords = Vec::with_capacity(m * k * 7);
        for (j, h) in hr.iter().enumerate() {
            for &i in &neighbors[j * k..(j + 1) * k] {
                let l = lr[i];
                coords.extend_from_slice(h);
                coords.extend_from_slice(&l);
                coords.push(distance(l, *h));
            }
        }

        Ok(Geometry {
            lattice_count: n,
            surface_count: m,
            k_interp: k,
            positional,
            rest_graph: lattice_knn(lattice, config.k_graph)?.into(),
            centers: (0..n).flat_map(|i| std::iter::repeat_n(i, config.k_graph)).collect(),
            neighbors: neighbors.into(),
            coords: Tensor::from_f64(vec![m * k, 7], &coords)?,
            surface_rest: surface.vertices().to_vec(),
            triangles: surface.triangles().to_vec(),
        })
    }

    pub fn lattice_count(&self) -> usize {
        self.lattice_count
    }

    pub fn surface_count(&self) -> usize {
        self.surface_count
    }

    pub fn k_interp(&self) -> usize {
        self.k_interp
    }

    /// Flattened `M x k_interp` lattice indices used for upsampling.
    pub fn neighbors(&self) -> &Arc<[usize]> {
        &self.neighbors
    }

    /// `[x_j, x_i, |x_i - x_j|]` in normalized rest coordinates for every
    /// surface vertex `j` and its neighbours `i`, as `(M * k) x 7`.
    pub fn pair_coordinates(&self) -> &Tensor<T> {
        &self.coords
    }

    pub fn surface_rest(&self) -> &[Vec3] {
        &self.surface_rest
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub(crate) fn positional(&self) -> &Tensor<T> {
        &self.positional
    }

    pub(crate) fn rest_graph(&self) -> &Arc<[usize]> {
        &self.rest_graph
    }

    pub(crate) fn centers(&self) -> &Arc<[usize]> {
        &self.centers
    }
}
