use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kv::{entries, join};
use crate::{Error, Result};

/// Shape of the synthetic benchmark. Lengths are millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Surface grid vertices per side.
    pub hr_resolution: usize,
    /// Side length of the square surface patch.
    pub patch_size: f64,
    /// Height of the dome at the patch centre.
    pub bulge: f64,
    /// Lattice cells along x, y and z.
    pub lattice_cells: [usize; 3],
    /// Gap between the surface bounding box and the lattice.
    pub lattice_margin: f64,
    pub channels: usize,
    /// Bump centres in the patch plane, one `(x, y)` pair per channel.
    pub bulk_centers: Vec<[f64; 2]>,
    pub bulk_widths: Vec<f64>,
    pub bulk_amplitudes: Vec<f64>,
    /// Unit push direction of each channel.
    pub bulk_directions: Vec<[f64; 3]>,
    pub wrinkle_wavelength: f64,
    pub wrinkle_amplitude: f64,
    /// In-plane direction along which the wrinkle oscillates.
    pub wrinkle_direction: [f64; 2],
    pub wrinkle_center: [f64; 2],
    pub wrinkle_radius: f64,
    /// Per-channel gain of the quadratic wrinkle activation.
    pub wrinkle_gains: Vec<f64>,
    pub bias_amplitude: f64,
    pub families: usize,
    pub frames_per_family: usize,
    pub train_families: Vec<usize>,
    /// Upper end of every activation value.
    pub activation_scale: f64,
    /// Standard deviation of a random-walk step.
    pub walk_step: f64,
    /// Exponential smoothing factor of the random walk, in `[0, 1)`.
    pub walk_smoothing: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self::with_channels(4)
    }
}

impl GenConfig {
    /// Default benchmark with `channels` bumps spread on a ring.
    pub fn with_channels(channels: usize) -> Self {
        let ring = |a: usize| 2.0 * std::f64::consts::PI * a as f64 / channels.max(1) as f64;
        GenConfig {
            hr_resolution: 48,
            patch_size: 100.0,
            bulge: 15.0,
            lattice_cells: [6, 6, 3],
            lattice_margin: 4.0,
            channels,
            bulk_centers: (0..channels)
                .map(|a| [22.0 * ring(a).cos(), 22.0 * ring(a).sin()])
                .collect(),
            bulk_widths: vec![22.0; channels],
            bulk_amplitudes: vec![6.0; channels],
            bulk_directions: (0..channels)
                .map(|a| {
                    let d = [0.6 * ring(a).cos(), 0.6 * ring(a).sin(), 1.0];
                    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    [d[0] / n, d[1] / n, d[2] / n]
                })
                .collect(),
            wrinkle_wavelength: 20.0,
            wrinkle_amplitude: 1.2,
            wrinkle_direction: [1.0, 0.5],
            wrinkle_center: [0.0, 0.0],
            wrinkle_radius: 30.0,
            wrinkle_gains: vec![1.0; channels],
            bias_amplitude: 2.5,
            families: 4,
            frames_per_family: 60,
            train_families: vec![0, 1],
            activation_scale: 1.0,
            walk_step: 0.6,
            walk_smoothing: 0.85,
        }
    }

    pub fn surface_vertex_count(&self) -> usize {
        self.hr_resolution * self.hr_resolution
    }

    pub fn lattice_vertex_count(&self) -> usize {
        self.lattice_cells.iter().map(|c| c + 1).product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let a = self.channels;
        if a == 0 {
            return bad("channels must be at least 1".into());
        }
        if self.hr_resolution < 2 || self.lattice_cells.contains(&0) {
            return bad("resolutions must be positive (surface at least 2 per side)".into());
        }
        if self.surface_vertex_count() <= self.lattice_vertex_count() {
            return bad("the surface must have more vertices than the lattice".into());
        }
        let lens = [
            ("bulk_centers", self.bulk_centers.len()),
            ("bulk_widths", self.bulk_widths.len()),
            ("bulk_amplitudes", self.bulk_amplitudes.len()),
            ("bulk_directions", self.bulk_directions.len()),
            ("wrinkle_gains", self.wrinkle_gains.len()),
        ];
        for (name, len) in lens {
            if len != a {
                return bad(format!("{name} has {len} entries for {a} channels"));
            }
        }
        if self.bulk_widths.iter().any(|&w| !(w > 0.0)) || !(self.wrinkle_radius > 0.0) {
            return bad("widths and radii must be positive".into());
        }
        if !(self.patch_size > 0.0) || !(self.wrinkle_wavelength > 0.0) {
            return bad("patch_size and wrinkle_wavelength must be positive".into());
        }
        if self.families == 0 || self.frames_per_family == 0 {
            return bad("need at least one family and one frame".into());
        }
        if let Some(&f) = self.train_families.iter().find(|&&f| f >= self.families) {
            return bad(format!("train family {f} out of range"));
        }
        if !(0.0..1.0).contains(&self.walk_smoothing) || self.activation_scale < 0.0 {
            return bad("walk_smoothing must lie in [0, 1), activation_scale >= 0".into());
        }
        Ok(())
    }

    /// Parses `key = value` text. Per-channel lists default from `channels`.
    pub fn parse(text: &str) -> Result<Self> {
        let list = entries(text)?;
        let channels = match list.iter().find(|e| e.key == "channels") {
            Some(e) => e.parse()?,
            None => 4,
        };
        let mut c = GenConfig::with_channels(channels);
        for e in &list {
            match e.key {
                "channels" => {}
                "hr_resolution" => c.hr_resolution = e.parse()?,
                "patch_size" => c.patch_size = e.parse()?,
                "bulge" => c.bulge = e.parse()?,
                "lattice_cells" => c.lattice_cells = fixed(e.list()?, e.line)?,
                "lattice_margin" => c.lattice_margin = e.parse()?,
                "bulk_centers" => c.bulk_centers = chunked(e.list()?, e.line)?,
                "bulk_widths" => c.bulk_widths = e.list()?,
                "bulk_amplitudes" => c.bulk_amplitudes = e.list()?,
                "bulk_directions" => c.bulk_directions = chunked(e.list()?, e.line)?,
                "wrinkle_wavelength" => c.wrinkle_wavelength = e.parse()?,
                "wrinkle_amplitude" => c.wrinkle_amplitude = e.parse()?,
                "wrinkle_direction" => c.wrinkle_direction = fixed(e.list()?, e.line)?,
                "wrinkle_center" => c.wrinkle_center = fixed(e.list()?, e.line)?,
                "wrinkle_radius" => c.wrinkle_radius = e.parse()?,
                "wrinkle_gains" => c.wrinkle_gains = e.list()?,
                "bias_amplitude" => c.bias_amplitude = e.parse()?,
                "families" => c.families = e.parse()?,
                "frames_per_family" => c.frames_per_family = e.parse()?,
                "train_families" => c.train_families = e.list()?,
                "activation_scale" => c.activation_scale = e.parse()?,
                "walk_step" => c.walk_step = e.parse()?,
                "walk_smoothing" => c.walk_smoothing = e.parse()?,
                _ => return Err(e.unknown()),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let flat2: Vec<f64> = self.bulk_centers.iter().flatten().copied().collect();
        let flat3: Vec<f64> = self.bulk_directions.iter().flatten().copied().collect();
        format!(
            "channels = {}\nhr_resolution = {}\npatch_size = {}\nbulge = {}\n\
             lattice_cells = {}\nlattice_margin = {}\nbulk_centers = {}\nbulk_widths = {}\n\
             bulk_amplitudes = {}\nbulk_directions = {}\nwrinkle_wavelength = {}\n\
             wrinkle_amplitude = {}\nwrinkle_direction = {}\nwrinkle_center = {}\n\
             wrinkle_radius = {}\nwrinkle_gains = {}\nbias_amplitude = {}\nfamilies = {}\n\
             frames_per_family = {}\ntrain_families = {}\nactivation_scale = {}\n\
             walk_step = {}\nwalk_smoothing = {}\n",
            self.channels,
            self.hr_resolution,
            self.patch_size,
            self.bulge,
            join(&self.lattice_cells),
            self.lattice_margin,
            join(&flat2),
            join(&self.bulk_widths),
            join(&self.bulk_amplitudes),
            join(&flat3),
            self.wrinkle_wavelength,
            self.wrinkle_amplitude,
            join(&self.wrinkle_direction),
            join(&self.wrinkle_center),
            self.wrinkle_radius,
            join(&self.wrinkle_gains),
            self.bias_amplitude,
            self.families,
            self.frames_per_family,
            join(&self.train_families),
            self.activation_scale,
            self.walk_step,
            self.walk_smoothing,
        )
    }
}

fn fixed<V: Copy, const N: usize>(v: Vec<V>, line: usize) -> Result<[V; N]> {
    let len = v.len();
    v.try_into().map_err(|_| Error::Parse {
        line,
        message: format!("expected {N} values, got {len}"),
    })
}

fn chunked<const N: usize>(v: Vec<f64>, line: usize) -> Result<Vec<[f64; N]>> {
    if !v.len().is_multiple_of(N) {
        return Err(Error::Parse {
            line,
            message: format!("expected a multiple of {N} values, got {}", v.len()),
        });
    }
    Ok(v.chunks(N).map(|c| c.try_into().unwrap()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = GenConfig::default();
        c.validate().unwrap();
        assert_eq!(c.surface_vertex_count(), 2304);
        assert_eq!(c.lattice_vertex_count(), 196);
        assert_eq!(GenConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn channel_count_drives_list_defaults() {
        let c = GenConfig::parse("channels = 2\nbias_amplitude = 0").unwrap();
        assert_eq!(c.bulk_widths.len(), 2);
        assert_eq!(c.bias_amplitude, 0.0);
        assert!(GenConfig::parse("channels = 2\nbulk_widths = 1, 2, 3").is_err());
        assert!(GenConfig::parse("lattice_cells = 6, 6").is_err());
        assert!(GenConfig::parse("train_families = 7").is_err());
    }
}
