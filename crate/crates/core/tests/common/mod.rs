#![allow(dead_code)]

use simsr::datagen::{box_lattice, generate, Dataset, GenConfig};
use simsr::geodesy::{precompute, NeighborhoodTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simsr::mesh::{distance, DisplacementFrame, LatticeMesh, SurfaceMesh};
use simsr::network::ModelConfig;

/// A few hundred surface vertices in a coarse box, a handful of frames.
pub fn small_config() -> GenConfig {
    GenConfig {
        hr_resolution: 14,
        lattice_cells: [3, 3, 2],
        frames_per_family: 4,
        ..GenConfig::default()
    }
}

pub fn small_dataset(seed: u64) -> (Dataset, NeighborhoodTable) {
    let d = generate(&small_config(), seed).unwrap();
    let t = precompute(&d.surface, &d.lattice, 8).unwrap();
    (d, t)
}

/// Model settings sized for the small dataset.
pub fn small_model() -> ModelConfig {
    ModelConfig {
        widths: vec![8, 12],
        k_graph: 4,
        k_interp: 8,
        weight_hidden: 8,
        recon_hidden: 8,
        epochs: 2,
        batch_size: 3,
        lr: 1e-3,
        ..ModelConfig::default()
    }
}

/// Ten surface vertices in two bent rows inside one split cube.
pub fn toy_problem() -> (SurfaceMesh, LatticeMesh, DisplacementFrame) {
    let mut v = Vec::new();
    for row in 0..2 {
        for i in 0..5 {
            let x = i as f64 * 2.0;
            let y = row as f64 * 3.0;
            v.push([x, y, 0.3 * (x - 4.0).powi(2) / 4.0 + 0.2 * y]);
        }
    }
    let mut tris = Vec::new();
    for i in 0..4 {
        tris.push([i, i + 1, i + 6]);
        tris.push([i, i + 6, i + 5]);
    }
    let surface = SurfaceMesh::new(v, tris).unwrap();
    let lattice = box_lattice(&surface, [1, 1, 1], 1.0).unwrap();
    let lr = (0..lattice.vertex_count())
        .map(|i| {
            let t = i as f64;
            [0.3 * (t * 0.7).sin(), 0.2 * (t * 1.3).cos(), 0.4 * (t * 0.4).sin()]
        })
        .collect();
    let hr = (0..surface.vertex_count())
        .map(|j| {
            let t = j as f64;
            [0.25 * (t * 0.9).cos(), 0.1 * t.sin(), 0.5 * (t * 0.3).cos()]
        })
        .collect();
    let frame = DisplacementFrame {
        frame_id: 0,
        params: vec![],
        lr_disp: lr,
        hr_disp: Some(hr),
    };
    (surface, lattice, frame)
}

/// Latitude-longitude sphere with jittered vertices.
pub fn sphere(lon: usize, lat: usize, seed: u64) -> SurfaceMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![[0.0, 0.0, 10.0]];
    for a in 1..lat {
        for b in 0..lon {
            let th = std::f64::consts::PI * a as f64 / lat as f64 + rng.gen_range(-0.02..0.02);
            let ph = 2.0 * std::f64::consts::PI * b as f64 / lon as f64 + rng.gen_range(-0.02..0.02);
            v.push([10.0 * th.sin() * ph.cos(), 10.0 * th.sin() * ph.sin(), 10.0 * th.cos()]);
        }
    }
    v.push([0.0, 0.0, -10.0]);
    let south = v.len() - 1;
    let at = |a: usize, b: usize| 1 + (a - 1) * lon + b % lon;
    let mut t = Vec::new();
    for b in 0..lon {
        t.push([0, at(1, b), at(1, b + 1)]);
        t.push([south, at(lat - 1, b + 1), at(lat - 1, b)]);
    }
    for a in 1..lat - 1 {
        for b in 0..lon {
            t.push([at(a, b), at(a + 1, b), at(a + 1, b + 1)]);
            t.push([at(a, b), at(a + 1, b + 1), at(a, b + 1)]);
        }
    }
    SurfaceMesh::new(v, t).unwrap()
}

/// All-pairs shortest paths by Floyd-Warshall over the edge list.
pub fn floyd(mesh: &SurfaceMesh) -> Vec<Vec<f64>> {
    let n = mesh.vertex_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for t in mesh.triangles() {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let w = distance(mesh.vertices()[a], mesh.vertices()[b]);
            d[a][b] = d[a][b].min(w);
            d[b][a] = d[b][a].min(w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Cheapest injective row-to-column assignment by exhaustive search.
pub fn brute_force(costs: &[Vec<f64>]) -> f64 {
    fn go(row: usize, costs: &[Vec<f64>], used: &mut Vec<bool>) -> f64 {
        if row == costs.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.min(costs[row][c] + go(row + 1, costs, used));
                used[c] = false;
            }
        }
        best
    }
    go(0, costs, &mut vec![false; costs[0].len()])
}
