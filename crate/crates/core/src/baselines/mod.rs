//! Comparison methods: barycentric embedding, Gaussian RBF and moving least
//! squares interpolation, and a fully connected beta-VAE.

mod mls;
mod rbf;
mod vae;

use std::fmt;
use std::str::FromStr;

pub use mls::{MlsBaseline, MlsBasis, MlsConfig, RIDGE, RIDGE_CONDITION};
pub use rbf::{gaussian, median_spacing, RbfBaseline, RbfModel, MAX_CONDITION};
pub use vae::{kl_divergence, train_vae, BetaVae, VaeConfig, VaeEpoch, VaeTrainer};

use crate::geodesy::{rest_assignment, source_distances};
use crate::mesh::{apply_embedding, EmbeddingWeights, LatticeMesh, SurfaceMesh, Vec3};
use crate::network::Variant;
use crate::{Error, Result};

/// Every method the `baseline` command can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Embedded,
    Rbf,
    Mls,
    Bvae,
    NoFe,
    NoCu,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Embedded,
        Method::Rbf,
        Method::Mls,
        Method::Bvae,
        Method::NoFe,
        Method::NoCu,
    ];

    /// The network variant a learned ablation trains, if any.
    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::NoFe => Some(Variant::NoFeatureEncoding),
            Method::NoCu => Some(Variant::NoCoordinateUpsampling),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Embedded => "embedded",
            Method::Rbf => "rbf",
            Method::Mls => "mls",
            Method::Bvae => "bvae",
            Method::NoFe => "no-fe",
            Method::NoCu => "no-cu",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Surface displacements carried by the barycentric embedding.
pub fn embedded(weights: &EmbeddingWeights, lr_disp: &[Vec3]) -> Result<Vec<Vec3>> {
    apply_embedding(weights, lr_disp)
}

/// Median geodesic distance from each lattice vertex to its nearest other
/// lattice vertex, measured between their assigned surface vertices.
pub fn center_spacing(surface: &SurfaceMesh, lattice: &LatticeMesh) -> Result<f64> {
    let mapped = rest_assignment(surface, lattice)?;
    let rows = source_distances(surface, &mapped)?;
    let centers: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| mapped.targets().iter().map(|&t| row[t]).collect())
        .collect();
    Ok(median_spacing(&centers))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("dde".parse::<Method>().is_err());
        assert_eq!(Method::NoCu.variant(), Some(Variant::NoCoordinateUpsampling));
    }
}
