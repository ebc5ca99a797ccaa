use nalgebra::{DMatrix, LU};
use rayon::prelude::*;

use crate::geodesy::{rest_assignment, source_distances};
use crate::mesh::{LatticeMesh, SurfaceMesh, Vec3};
use crate::{Error, Result};

/// Largest accepted condition number of the kernel matrix.
pub const MAX_CONDITION: f64 = 1e15;

pub fn gaussian(r: f64, sigma: f64) -> f64 {
    (-(r * r) / (sigma * sigma)).exp()
}

/// Factorized Gaussian kernel matrix over fixed centers. Fitting a frame
/// solves for one weight vector per center.
#[derive(Debug, Clone)]
pub struct RbfModel {
    sigma: f64,
    condition: f64,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl RbfModel {
    /// `distances` is the symmetric center-to-center distance matrix.
    pub fn new(distances: &[Vec<f64>], sigma: f64) -> Result<Self> {
        let n = distances.len();
        if n == 0 {
            return Err(Error::Empty("rbf centers"));
        }
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("rbf width must be positive, got {sigma}")));
        }
        if distances.iter().any(|r| r.len() != n) {
            return Err(Error::shape("rbf distance matrix is not square"));
        }
        let phi = DMatrix::from_fn(n, n, |i, k| gaussian(distances[i][k], sigma));
        let sv = phi.singular_values();
        let condition = sv.max() / sv.min();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        Ok(RbfModel {
            sigma,
            condition,
            lu: phi.lu(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Ratio of extreme singular values of the kernel matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn center_count(&self) -> usize {
        self.lu.l().nrows()
    }

    /// Weights reproducing `values` at every center.
    pub fn fit(&self, values: &[Vec3]) -> Result<Vec<Vec3>> {
        let n = self.center_count();
        if values.len() != n {
            return Err(Error::shape(format!("{} values for {n} centers", values.len())));
        }
        let rhs = DMatrix::from_fn(n, 3, |i, c| values[i][c]);
        let w = self
            .lu
            .solve(&rhs)
            .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
        Ok((0..n).map(|i| [w[(i, 0)], w[(i, 1)], w[(i, 2)]]).collect())
    }

    /// Evaluates at points whose distance to center `i` is `distances[i][j]`.
    pub fn evaluate(&self, weights: &[Vec3], distances: &[Vec<f64>]) -> Result<Vec<Vec3>> {
        if weights.len() != distances.len() {
            return Err(Error::shape(format!(
                "{} weights for {} distance rows",
                weights.len(),
                distances.len()
            )));
        }
        let m = distances.first().map_or(0, Vec::len);
        if distances.iter().any(|r| r.len() != m) {
            return Err(Error::Missing("rbf evaluation distances".into()));
        }
        let mut out = vec![[0.0; 3]; m];
        for (w, row) in weights.iter().zip(distances) {
            for (o, &r) in out.iter_mut().zip(row) {
                let p = gaussian(r, self.sigma);
                for c in 0..3 {
                    o[c] += w[c] * p;
                }
            }
        }
        Ok(out)
    }
}

/// Gaussian RBF interpolation of coarse displacements onto the surface, with
/// lattice vertices placed at their assigned surface vertices and distances
/// measured along surface edges.
#[derive(Debug, Clone)]
pub struct RbfBaseline {
    model: RbfModel,
    /// Geodesic distance from every center (rows) to every surface vertex.
    to_surface: Vec<Vec<f64>>,
}

impl RbfBaseline {
    /// `sigma` defaults to [`median_spacing`] of the centers.
    pub fn new(surface: &SurfaceMesh, lattice: &LatticeMesh, sigma: Option<f64>) -> Result<Self> {
        let mapped = rest_assignment(surface, lattice)?;
        let to_surface = source_distances(surface, &mapped)?;
        let centers: Vec<Vec<f64>> = to_surface
            .iter()
            .map(|row| mapped.targets().iter().map(|&t| row[t]).collect())
            .collect();
        let sigma = sigma.unwrap_or_else(|| median_spacing(&centers));
        Ok(RbfBaseline {
            model: RbfModel::new(&centers, sigma)?,
            to_surface,
        })
    }

    pub fn model(&self) -> &RbfModel {
        &self.model
    }

    pub fn reconstruct(&self, lr_disp: &[Vec3]) -> Result<Vec<Vec3>> {
        let w = self.model.fit(lr_disp)?;
        self.model.evaluate(&w, &self.to_surface)
    }

    pub fn reconstruct_all(&self, frames: &[&[Vec3]]) -> Result<Vec<Vec<Vec3>>> {
        frames.par_iter().map(|f| self.reconstruct(f)).collect()
    }
}

/// Median over centers of the distance to the nearest other center.
pub fn median_spacing(distances: &[Vec<f64>]) -> f64 {
    let mut nearest: Vec<f64> = distances
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, &d)| d)
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect();
    if nearest.is_empty() {
        return 1.0;
    }
    nearest.sort_by(f64::total_cmp);
    let n = nearest.len();
    if n % 2 == 1 {
        nearest[n / 2]
    } else {
        0.5 * (nearest[n / 2 - 1] + nearest[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_center_by_hand() {
        let m = RbfModel::new(&[vec![0.0]], 2.0).unwrap();
        let w = m.fit(&[[1.0, -2.0, 0.5]]).unwrap();
        assert_eq!(w, vec![[1.0, -2.0, 0.5]]);
        let out = m.evaluate(&w, &[vec![3.0]]).unwrap();
        let e = (-9.0f64 / 4.0).exp();
        assert!((out[0][1] + 2.0 * e).abs() < 1e-15);
    }

    #[test]
    fn zero_field_and_bad_inputs() {
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let m = RbfModel::new(&d, 1.0).unwrap();
        assert_eq!(m.fit(&[[0.0; 3]; 2]).unwrap(), vec![[0.0; 3]; 2]);
        assert!(m.fit(&[[0.0; 3]]).is_err());
        assert!(RbfModel::new(&d, 0.0).is_err());
        let same = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert!(matches!(RbfModel::new(&same, 1.0), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn spacing_median_of_nearest() {
        let d = vec![
            vec![0.0, 1.0, 4.0],
            vec![1.0, 0.0, 2.0],
            vec![4.0, 2.0, 0.0],
        ];
        assert_eq!(median_spacing(&d), 1.0);
    }
}
