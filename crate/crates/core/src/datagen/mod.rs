//! Synthetic paired datasets: a curved surface patch inside a tetrahedral
//! box, driven by shared activation trajectories at both resolutions.

mod config;
mod generate;
mod manifest;
mod perturb;

pub use config::GenConfig;
pub use generate::{
    activation_trajectory, box_lattice, generate, hr_displacement, lr_displacement, surface_patch, wrinkle_activation,
    Dataset,
};
pub use manifest::{write_dataset, DatasetManifest, LoadedManifest, MANIFEST_FILE, MANIFEST_VERSION};
pub use perturb::{perturb_dynamics, perturb_force, Dynamics};
