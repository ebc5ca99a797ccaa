use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geodesy::NeighborhoodTable;
use crate::mesh::{sub, LatticeMesh, SurfaceMesh, Vec3};
use crate::{Error, Result};

/// Normal matrices above this condition number get a small ridge.
pub const RIDGE_CONDITION: f64 = 1e12;
pub const RIDGE: f64 = 1e-9;

/// Polynomial basis of the local fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MlsBasis {
    /// Powers of the predicted component's own coordinate offset.
    Univariate,
    /// All monomials of the 3D offset up to the degree.
    Trivariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlsConfig {
    pub degree: usize,
    /// Gaussian width on geodesic distance, mm.
    pub sigma: f64,
    pub basis: MlsBasis,
}

impl MlsConfig {
    pub fn new(sigma: f64) -> Self {
        MlsConfig {
            degree: 2,
            sigma,
            basis: MlsBasis::Univariate,
        }
    }

    pub fn basis_size(&self) -> usize {
        match self.basis {
            MlsBasis::Univariate => self.degree + 1,
            MlsBasis::Trivariate => (self.degree + 1) * (self.degree + 2) * (self.degree + 3) / 6,
        }
    }
}

/// Moving least squares with the basis recentred on each surface vertex, so
/// the prediction is the constant coefficient. That coefficient is linear in
/// the neighbour values, and its weights depend only on rest geometry, so
/// they are solved once here.
#[derive(Debug, Clone)]
pub struct MlsBaseline {
    config: MlsConfig,
    k: usize,
    neighbors: Vec<usize>,
    /// Per component `[M * k]`; a single shared row set for the trivariate basis.
    coefficients: Vec<Vec<f64>>,
    regularized: usize,
}

impl MlsBaseline {
    pub fn new(
        surface: &SurfaceMesh,
        lattice: &LatticeMesh,
        table: &NeighborhoodTable,
        config: MlsConfig,
    ) -> Result<Self> {
        if !(config.sigma > 0.0) {
            return Err(Error::Config(format!("mls width must be positive, got {}", config.sigma)));
        }
        let m = surface.vertex_count();
        if table.len() != m {
            return Err(Error::shape(format!("table has {} rows for {m} vertices", table.len())));
        }
        let k = table.k();
        let need = config.basis_size();
        if k < need {
            return Err(Error::TooFewNeighbors {
                vertex: 0,
                available: k,
                required: need,
            });
        }
        if let Some(&bad) = table.indices().iter().find(|&&i| i >= lattice.vertex_count()) {
            return Err(Error::shape(format!(
                "neighbor {bad} out of range for {} lattice vertices",
                lattice.vertex_count()
            )));
        }
        let sets: Vec<usize> = match config.basis {
            MlsBasis::Univariate => vec![0, 1, 2],
            MlsBasis::Trivariate => vec![3],
        };
        let fits: Vec<(Vec<f64>, bool)> = sets
            .par_iter()
            .flat_map_iter(|&axis| (0..m).map(move |j| (axis, j)))
            .map(|(axis, j)| {
                let offsets: Vec<Vec3> = table
                    .neighbors(j)
                    .iter()
                    .map(|&i| sub(lattice.vertices()[i], surface.vertices()[j]))
                    .collect();
                local_weights(&offsets, table.distances(j), &config, axis)
            })
            .collect::<Result<_>>()?;
        let regularized = fits.iter().filter(|f| f.1).count();
        let coefficients = fits
            .chunks(m)
            .map(|rows| rows.iter().flat_map(|r| r.0.iter().copied()).collect())
            .collect();
        Ok(MlsBaseline {
            config,
            k,
            neighbors: table.indices().to_vec(),
            coefficients,
            regularized,
        })
    }

    pub fn config(&self) -> &MlsConfig {
        &self.config
    }

    /// Number of local systems that needed the ridge.
    pub fn regularized(&self) -> usize {
        self.regularized
    }

    pub fn reconstruct(&self, lr_disp: &[Vec3]) -> Result<Vec<Vec3>> {
        if let Some(&bad) = self.neighbors.iter().find(|&&i| i >= lr_disp.len()) {
            return Err(Error::shape(format!("neighbor {bad} out of range for {} rows", lr_disp.len())));
        }
        let m = self.neighbors.len() / self.k;
        let out = (0..m)
            .map(|j| {
                let idx = &self.neighbors[j * self.k..(j + 1) * self.k];
                let mut o = [0.0; 3];
                for (c, v) in o.iter_mut().enumerate() {
                    let coef = &self.coefficients[c.min(self.coefficients.len() - 1)][j * self.k..(j + 1) * self.k];
                    *v = coef.iter().zip(idx).map(|(a, &i)| a * lr_disp[i][c]).sum();
                }
                o
            })
            .collect();
        Ok(out)
    }
}

fn basis_row(t: Vec3, config: &MlsConfig, axis: usize) -> Vec<f64> {
    let r = config.degree as i32;
    if axis < 3 {
        return (0..=r).map(|p| t[axis].powi(p)).collect();
    }
    let mut row = Vec::with_capacity(config.basis_size());
    for total in 0..=r {
        for a in (0..=total).rev() {
            for b in (0..=total - a).rev() {
                let c = total - a - b;
                row.push(t[0].powi(a) * t[1].powi(b) * t[2].powi(c));
            }
        }
    }
    row
}

/// Weights `a_i` with `c0 = sum_i a_i f_i`, and whether the ridge was used.
fn local_weights(offsets: &[Vec3], distances: &[f64], config: &MlsConfig, axis: usize) -> Result<(Vec<f64>, bool)> {
    let s = config.sigma;
    let d0 = distances.iter().copied().fold(f64::INFINITY, f64::min);
    // Weights relative to the nearest neighbour; the fit is scale invariant.
    let w: Vec<f64> = distances
        .iter()
        .map(|&d| (-(d * d - d0 * d0) / (s * s)).exp())
        .collect();
    let rows: Vec<Vec<f64>> = offsets
        .iter()
        .map(|&o| basis_row([o[0] / s, o[1] / s, o[2] / s], config, axis))
        .collect();
    let p = rows[0].len();
    let b = DMatrix::from_fn(rows.len(), p, |i, c| rows[i][c]);
    let wb = DMatrix::from_fn(rows.len(), p, |i, c| w[i] * rows[i][c]);
    let mut normal = b.transpose() * &wb;
    let sv = normal.singular_values();
    let ridge = !(sv.max() / sv.min() <= RIDGE_CONDITION);
    if ridge {
        for c in 0..p {
            normal[(c, c)] += RIDGE;
        }
    }
    let mut e0 = DVector::zeros(p);
    e0[0] = 1.0;
    let z = normal
        .lu()
        .solve(&e0)
        .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    let coef = (&wb * z).iter().copied().collect();
    Ok((coef, ridge))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        let mut c = MlsConfig::new(1.0);
        assert_eq!(c.basis_size(), 3);
        c.basis = MlsBasis::Trivariate;
        assert_eq!(c.basis_size(), 10);
        assert_eq!(basis_row([2.0, 3.0, 5.0], &c, 3).len(), 10);
    }

    #[test]
    fn constant_is_reproduced_by_the_weights() {
        let offsets: Vec<Vec3> = (0..6).map(|i| [i as f64 - 2.5, (i * i) as f64 * 0.3, 1.0]).collect();
        let d: Vec<f64> = offsets.iter().map(|o| crate::mesh::norm(*o)).collect();
        let (a, ridge) = local_weights(&offsets, &d, &MlsConfig::new(2.0), 0).unwrap();
        assert!(!ridge);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
