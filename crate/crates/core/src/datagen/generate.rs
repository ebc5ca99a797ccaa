use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use super::GenConfig;
use crate::mesh::{dot, embed_surface, scale, sub, DisplacementFrame, FrameSet, LatticeMesh, SurfaceMesh, Vec3};
use crate::{Error, Result};

/// Meshes, frames and the train/test split produced by [`generate`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: GenConfig,
    pub seed: u64,
    pub surface: SurfaceMesh,
    pub lattice: LatticeMesh,
    pub frames: FrameSet,
    pub train_frames: Vec<u32>,
    pub test_frames: Vec<u32>,
}

impl Dataset {
    pub fn frame(&self, frame_id: u32) -> Option<&DisplacementFrame> {
        self.frames.get(frame_id)
    }

    pub fn train(&self) -> Vec<&DisplacementFrame> {
        self.select(&self.train_frames)
    }

    pub fn test(&self) -> Vec<&DisplacementFrame> {
        self.select(&self.test_frames)
    }

    fn select(&self, ids: &[u32]) -> Vec<&DisplacementFrame> {
        ids.iter().filter_map(|&id| self.frames.get(id)).collect()
    }
}

/// Curved square patch: a dome over `[-s/2, s/2]^2` with upward normals.
pub fn surface_patch(config: &GenConfig) -> Result<SurfaceMesh> {
    let n = config.hr_resolution;
    let half = config.patch_size / 2.0;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let u = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let v = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
            let z = config.bulge * (1.0 - u * u) * (1.0 - v * v);
            vertices.push([u * half, v * half, z]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let v00 = i + n * j;
            let v10 = v00 + 1;
            let v01 = v00 + n;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Box of `cells` hexahedra around `surface`, each split into six
/// positively oriented tetrahedra sharing the cell diagonal.
pub fn box_lattice(surface: &SurfaceMesh, cells: [usize; 3], margin: f64) -> Result<LatticeMesh> {
    let b = surface.bounds();
    let lo = [b.min[0] - margin, b.min[1] - margin, b.min[2] - margin];
    let hi = [b.max[0] + margin, b.max[1] + margin, b.max[2] + margin];
    let [cx, cy, cz] = cells;
    let index = |i: usize, j: usize, l: usize| i + (cx + 1) * (j + (cy + 1) * l);
    let mut vertices = Vec::with_capacity((cx + 1) * (cy + 1) * (cz + 1));
    for l in 0..=cz {
        for j in 0..=cy {
            for i in 0..=cx {
                let t = [i as f64 / cx as f64, j as f64 / cy as f64, l as f64 / cz as f64];
                vertices.push([
                    lo[0] + t[0] * (hi[0] - lo[0]),
                    lo[1] + t[1] * (hi[1] - lo[1]),
                    lo[2] + t[2] * (hi[2] - lo[2]),
                ]);
            }
        }
    }
    const AXES: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tetrahedra = Vec::with_capacity(6 * cx * cy * cz);
    for l in 0..cz {
        for j in 0..cy {
            for i in 0..cx {
                for order in AXES {
                    let mut at = [i, j, l];
                    let mut tet = [index(i, j, l); 4];
                    for (k, &axis) in order.iter().enumerate() {
                        at[axis] += 1;
                        tet[k + 1] = index(at[0], at[1], at[2]);
                    }
                    if signed_volume(&vertices, tet) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tetrahedra.push(tet);
                }
            }
        }
    }
    LatticeMesh::new(vertices, tetrahedra)
}

fn signed_volume(v: &[Vec3], t: [usize; 4]) -> f64 {
    let a = sub(v[t[1]], v[t[0]]);
    let b = sub(v[t[2]], v[t[0]]);
    let c = sub(v[t[3]], v[t[0]]);
    dot(a, crate::mesh::cross(b, c))
}

fn gaussian2(p: Vec3, c: [f64; 2], width: f64) -> f64 {
    let dx = p[0] - c[0];
    let dy = p[1] - c[1];
    (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
}

fn bulk(config: &GenConfig, x: Vec3, params: &[f64]) -> Vec3 {
    let mut out = [0.0; 3];
    for (a, &p) in params.iter().enumerate() {
        let s = p * config.bulk_amplitudes[a] * gaussian2(x, config.bulk_centers[a], config.bulk_widths[a]);
        let d = config.bulk_directions[a];
        for k in 0..3 {
            out[k] += s * d[k];
        }
    }
    out
}

/// Activation strength of the wrinkle field, `sum_a gain_a * p_a^2`.
pub fn wrinkle_activation(config: &GenConfig, params: &[f64]) -> f64 {
    params
        .iter()
        .zip(&config.wrinkle_gains)
        .map(|(p, g)| g * p * p)
        .sum()
}

/// Coarse displacement of a point at rest position `x`.
pub fn lr_displacement(config: &GenConfig, x: Vec3, params: &[f64]) -> Vec3 {
    let half = config.patch_size / 2.0;
    let (u, v) = (x[0] / half, x[1] / half);
    let pi = std::f64::consts::PI;
    let bias = [
        0.6 * (pi * u).sin(),
        0.6 * (pi * v).sin(),
        (pi * u / 2.0).cos() * (pi * v / 2.0).cos(),
    ];
    let norm = params.iter().map(|p| p * p).sum::<f64>().sqrt();
    let b = scale(bias, config.bias_amplitude * norm);
    let m = bulk(config, x, params);
    [m[0] + b[0], m[1] + b[1], m[2] + b[2]]
}

/// Fine displacement of a surface point at rest position `x`.
pub fn hr_displacement(config: &GenConfig, x: Vec3, params: &[f64]) -> Vec3 {
    let [dx, dy] = config.wrinkle_direction;
    let len = (dx * dx + dy * dy).sqrt().max(f64::MIN_POSITIVE);
    let phase = (x[0] * dx + x[1] * dy) / len;
    let wave = (2.0 * std::f64::consts::PI * phase / config.wrinkle_wavelength).sin();
    let envelope = gaussian2(x, config.wrinkle_center, config.wrinkle_radius);
    let w = config.wrinkle_amplitude * envelope * wave * wrinkle_activation(config, params);
    let mut out = bulk(config, x, params);
    out[2] += w;
    out
}

/// Smooth activation trajectory of one family, `frames_per_family` rows of
/// `channels` values in `[0, activation_scale]`.
pub fn activation_trajectory(config: &GenConfig, seed: u64, family: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(family as u64 + 1);
    let a = config.channels;
    let emphasis: Vec<f64> = {
        let u = Uniform::new_inclusive(0.5, 1.0);
        (0..a).map(|_| u.sample(&mut rng)).collect()
    };
    let step = Normal::new(0.0, config.walk_step.max(0.0)).expect("finite step");
    let start = Normal::new(0.0, 1.0).expect("unit normal");
    let mut walk: Vec<f64> = (0..a).map(|_| start.sample(&mut rng)).collect();
    let mut smooth = walk.clone();
    let keep = config.walk_smoothing;
    let mut out = Vec::with_capacity(config.frames_per_family);
    for _ in 0..config.frames_per_family {
        let row = (0..a)
            .map(|c| {
                walk[c] += step.sample(&mut rng);
                smooth[c] = keep * smooth[c] + (1.0 - keep) * walk[c];
                config.activation_scale * emphasis[c] / (1.0 + (-smooth[c]).exp())
            })
            .collect();
        out.push(row);
    }
    out
}

/// Builds the meshes and every frame for `config` under `seed`. Frame ids
/// are `family * frames_per_family + t`.
pub fn generate(config: &GenConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let surface = surface_patch(config)?;
    let lattice = box_lattice(&surface, config.lattice_cells, config.lattice_margin)?;
    // Fails when the lattice does not enclose every surface vertex.
    embed_surface(&surface, &lattice)?;

    let per = config.frames_per_family;
    let jobs: Vec<(u32, Vec<f64>)> = (0..config.families)
        .flat_map(|f| {
            activation_trajectory(config, seed, f)
                .into_iter()
                .enumerate()
                .map(move |(t, p)| ((f * per + t) as u32, p))
        })
        .collect();
    let frames: Vec<DisplacementFrame> = jobs
        .into_par_iter()
        .map(|(frame_id, params)| {
            let params: Vec<f64> = params.iter().map(|&p| p as f32 as f64).collect();
            DisplacementFrame {
                frame_id,
                lr_disp: lattice
                    .vertices()
                    .iter()
                    .map(|&x| lr_displacement(config, x, &params))
                    .collect(),
                hr_disp: Some(
                    surface
                        .vertices()
                        .iter()
                        .map(|&x| hr_displacement(config, x, &params))
                        .collect(),
                ),
                params,
            }
            .quantized()
        })
        .collect();
    let frames = FrameSet::new(lattice.vertex_count(), surface.vertex_count(), frames)?;

    let (mut train_frames, mut test_frames) = (Vec::new(), Vec::new());
    for f in 0..config.families {
        let ids = (0..per).map(|t| (f * per + t) as u32);
        if config.train_families.contains(&f) {
            train_frames.extend(ids);
        } else {
            test_frames.extend(ids);
        }
    }
    if train_frames.is_empty() {
        return Err(Error::Config("no training family".into()));
    }
    Ok(Dataset {
        config: config.clone(),
        seed,
        surface,
        lattice,
        frames,
        train_frames,
        test_frames,
    })
}
