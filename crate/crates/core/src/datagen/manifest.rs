use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, GenConfig};
use crate::mesh::{load_lattice, load_surface, read_frames, save_lattice, save_surface, write_frames, FrameSet, LatticeMesh, SurfaceMesh};
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Index of a dataset directory. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub surface: String,
    pub lattice: String,
    pub frames: String,
    /// Written by the precompute step, absent until then.
    pub table: String,
    pub train_frames: Vec<u32>,
    pub test_frames: Vec<u32>,
    pub seed: u64,
    pub generator: GenConfig,
}

impl DatasetManifest {
    pub fn for_dataset(d: &Dataset) -> Self {
        DatasetManifest {
            format_version: MANIFEST_VERSION,
            surface: "surface.obj".into(),
            lattice: "lattice.obj".into(),
            frames: "frames.ssrf".into(),
            table: "neighbors.ssnt".into(),
            train_frames: d.train_frames.clone(),
            test_frames: d.test_frames.clone(),
            seed: d.seed,
            generator: d.config.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                self.format_version
            )));
        }
        if let Some(id) = self.train_frames.iter().find(|id| self.test_frames.contains(id)) {
            return Err(Error::Format(format!("frame {id} is in both train and test")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl LoadedManifest {
    /// Accepts either the manifest file or the directory holding it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest = DatasetManifest::from_json(&text)?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedManifest { dir, manifest })
    }

    pub fn surface_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.surface)
    }

    pub fn lattice_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.lattice)
    }

    pub fn frames_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.frames)
    }

    pub fn table_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.table)
    }

    pub fn surface(&self) -> Result<SurfaceMesh> {
        load_surface(self.surface_path())
    }

    pub fn lattice(&self) -> Result<LatticeMesh> {
        load_lattice(self.lattice_path())
    }

    pub fn frames(&self) -> Result<FrameSet> {
        read_frames(self.frames_path())
    }
}

/// Writes meshes, the frame container and `manifest.json` into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest::for_dataset(dataset);
    save_surface(&dataset.surface, dir.join(&manifest.surface))?;
    save_lattice(&dataset.lattice, dir.join(&manifest.lattice))?;
    write_frames(&dataset.frames, dir.join(&manifest.frames))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_overlap_check() {
        let d = super::super::generate(
            &GenConfig {
                hr_resolution: 10,
                lattice_cells: [2, 2, 1],
                frames_per_family: 2,
                ..GenConfig::default()
            },
            0,
        )
        .unwrap();
        let mut m = DatasetManifest::for_dataset(&d);
        assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);
        m.test_frames.push(m.train_frames[0]);
        assert!(DatasetManifest::from_json(&m.to_json()).is_err());
    }
}
