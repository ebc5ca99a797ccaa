use crate::mesh::{norm, scale, DisplacementFrame, LatticeMesh, Vec3};
use crate::{Error, Result};

/// Oscillating rigid and shear offsets applied to coarse inputs over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dynamics {
    /// Peak offset in millimetres.
    pub amplitude: f64,
    /// Oscillation period in frames.
    pub period: f64,
    /// Exponential smoothing of the offset over time, in `[0, 1)`.
    pub smoothing: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics {
            amplitude: 2.0,
            period: 20.0,
            smoothing: 0.5,
        }
    }
}

/// Adds a lagging side-to-side sway to the coarse displacements of a time
/// ordered sequence. Surface targets are left untouched.
pub fn perturb_dynamics(
    frames: &[DisplacementFrame],
    lattice: &LatticeMesh,
    dynamics: Dynamics,
) -> Result<Vec<DisplacementFrame>> {
    if frames.len() < 2 {
        return Err(Error::Config("dynamics need at least two frames".into()));
    }
    if !(dynamics.period > 0.0) || !(0.0..1.0).contains(&dynamics.smoothing) {
        return Err(Error::Config("period must be positive and smoothing in [0, 1)".into()));
    }
    let b = lattice.bounds();
    let height = (b.max[2] - b.min[2]).max(f64::MIN_POSITIVE);
    let omega = 2.0 * std::f64::consts::PI / dynamics.period;
    let (mut rigid, mut shear) = (0.0, 0.0);
    let keep = dynamics.smoothing;
    let mut out = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let phase = omega * t as f64;
        rigid = keep * rigid + (1.0 - keep) * dynamics.amplitude * phase.sin();
        shear = keep * shear + (1.0 - keep) * dynamics.amplitude * (1.0 - phase.cos());
        let mut f = frame.clone();
        for (d, x) in f.lr_disp.iter_mut().zip(lattice.vertices()) {
            let h = (x[2] - b.min[2]) / height;
            d[0] += rigid + shear * h;
            d[1] += 0.5 * rigid;
        }
        out.push(f);
    }
    Ok(out)
}

/// Adds a Gaussian pull of width `radius` centred at `site` to the coarse
/// displacements of one frame.
pub fn perturb_force(
    frame: &DisplacementFrame,
    lattice: &LatticeMesh,
    site: Vec3,
    magnitude: f64,
    direction: Vec3,
    radius: f64,
) -> Result<DisplacementFrame> {
    if !lattice.bounds().contains(site, 0.0) {
        return Err(Error::OutOfBounds(site));
    }
    let len = norm(direction);
    if !(len > 0.0) || !(radius > 0.0) {
        return Err(Error::Config("force needs a nonzero direction and radius".into()));
    }
    let dir = scale(direction, 1.0 / len);
    let mut f = frame.clone();
    for (d, x) in f.lr_disp.iter_mut().zip(lattice.vertices()) {
        let r2: f64 = (0..3).map(|k| (x[k] - site[k]).powi(2)).sum();
        let s = magnitude * (-r2 / (radius * radius)).exp();
        for k in 0..3 {
            d[k] += s * dir[k];
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenConfig};

    fn data() -> crate::datagen::Dataset {
        let c = GenConfig {
            hr_resolution: 10,
            lattice_cells: [2, 2, 1],
            frames_per_family: 6,
            ..GenConfig::default()
        };
        generate(&c, 5).unwrap()
    }

    #[test]
    fn zero_amplitude_and_long_period_are_near_identity() {
        let d = data();
        let frames = &d.frames.frames[..6];
        let same = perturb_dynamics(frames, &d.lattice, Dynamics { amplitude: 0.0, ..Dynamics::default() }).unwrap();
        assert_eq!(same, frames);
        let slow = Dynamics {
            amplitude: 1.0,
            period: 1e7,
            smoothing: 0.5,
        };
        let near = perturb_dynamics(frames, &d.lattice, slow).unwrap();
        for (a, b) in near.iter().zip(frames) {
            for (x, y) in a.lr_disp.iter().flatten().zip(b.lr_disp.iter().flatten()) {
                assert!((x - y).abs() < 1e-5);
            }
            assert_eq!(a.hr_disp, b.hr_disp);
        }
        assert!(perturb_dynamics(&frames[..1], &d.lattice, Dynamics::default()).is_err());
    }

    #[test]
    fn pull_at_a_vertex_moves_it_by_the_magnitude() {
        let d = data();
        let f = &d.frames.frames[0];
        let site = d.lattice.vertices()[4];
        let g = perturb_force(f, &d.lattice, site, 3.0, [0.0, 0.0, 2.0], 10.0).unwrap();
        let moved = [
            g.lr_disp[4][0] - f.lr_disp[4][0],
            g.lr_disp[4][1] - f.lr_disp[4][1],
            g.lr_disp[4][2] - f.lr_disp[4][2],
        ];
        assert_eq!(moved[0], 0.0);
        assert!((moved[2] - 3.0).abs() < 1e-12);
        assert_eq!(perturb_force(f, &d.lattice, site, 0.0, [1.0, 0.0, 0.0], 5.0).unwrap(), *f);
        assert!(matches!(
            perturb_force(f, &d.lattice, [1e3, 0.0, 0.0], 1.0, [1.0, 0.0, 0.0], 5.0),
            Err(Error::OutOfBounds(_))
        ));
    }
}
