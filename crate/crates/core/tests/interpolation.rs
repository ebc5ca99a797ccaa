mod common;

use proptest::prelude::*;
use simsr::baselines::{center_spacing, embedded, kl_divergence, MlsBaseline, MlsBasis, MlsConfig, RbfBaseline};
use simsr::geodesy::{precompute, rest_assignment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simsr::mesh::{embed_surface, LatticeMesh, Vec3};

use common::small_dataset;

fn affine(x: Vec3) -> Vec3 {
    [
        0.3 + 0.02 * x[0] - 0.05 * x[1] + 0.01 * x[2],
        -1.2 + 0.04 * x[1] + 0.03 * x[2],
        2.0 - 0.01 * x[0] + 0.06 * x[2],
    ]
}

fn quadratic(x: Vec3) -> Vec3 {
    [
        0.5 + 0.03 * x[0] - 0.002 * x[0] * x[0],
        -0.7 + 0.01 * x[1] + 0.001 * x[1] * x[1],
        0.2 - 0.04 * x[2] + 0.003 * x[2] * x[2],
    ]
}

fn mixed(x: Vec3) -> Vec3 {
    let q = 0.4 + 0.01 * x[0] * x[1] - 0.02 * x[1] * x[2] + 0.001 * x[0] * x[0];
    [q, 2.0 * q - 0.03 * x[2], 0.05 * x[0] * x[2]]
}

#[test]
fn rbf_interpolates_its_centers() {
    let (d, _) = small_dataset(3);
    let spacing = center_spacing(&d.surface, &d.lattice).unwrap();
    let mapped = rest_assignment(&d.surface, &d.lattice).unwrap();
    let lr = &d.frames.frames[2].lr_disp;
    let scale = lr.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for factor in [0.5, 1.0, 2.0, 3.5, 5.0] {
        let rbf = RbfBaseline::new(&d.surface, &d.lattice, Some(factor * spacing)).unwrap();
        let out = rbf.reconstruct(lr).unwrap();
        let tol = 1e-6 * scale.max(1.0) * rbf.model().condition().max(1.0).sqrt().max(1.0);
        for (i, &t) in mapped.targets().iter().enumerate() {
            for c in 0..3 {
                assert!(
                    (out[t][c] - lr[i][c]).abs() < tol.max(1e-6),
                    "sigma {factor}x: center {i} off by {:e}",
                    (out[t][c] - lr[i][c]).abs()
                );
            }
        }
    }
}

/// Regular lattices put many neighbours on shared coordinate planes, which
/// leaves quadratic fits underdetermined; jitter breaks that.
fn jittered(lattice: &LatticeMesh, seed: u64) -> LatticeMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = lattice
        .vertices()
        .iter()
        .map(|p| [0, 1, 2].map(|c| p[c] + rng.gen_range(-1.5..1.5)))
        .collect();
    LatticeMesh::new(v, lattice.tetrahedra().to_vec()).unwrap()
}

#[test]
fn mls_reproduces_univariate_quadratics() {
    let (d, _) = small_dataset(5);
    let lattice = jittered(&d.lattice, 1);
    let table = precompute(&d.surface, &lattice, 8).unwrap();
    let spacing = center_spacing(&d.surface, &lattice).unwrap();
    let lr: Vec<Vec3> = lattice.vertices().iter().map(|&x| quadratic(x)).collect();
    for factor in [1.0, 2.0, 4.0] {
        let mls = MlsBaseline::new(&d.surface, &lattice, &table, MlsConfig::new(factor * spacing)).unwrap();
        assert_eq!(mls.regularized(), 0);
        let out = mls.reconstruct(&lr).unwrap();
        for (p, x) in out.iter().zip(d.surface.vertices()) {
            let e = quadratic(*x);
            for c in 0..3 {
                assert!((p[c] - e[c]).abs() < 1e-8, "{factor}x: {} vs {}", p[c], e[c]);
            }
        }
    }
}

#[test]
fn mls_trivariate_reproduces_full_quadratics() {
    let (d, _) = small_dataset(5);
    let lattice = jittered(&d.lattice, 2);
    let table = precompute(&d.surface, &lattice, 20).unwrap();
    let spacing = center_spacing(&d.surface, &lattice).unwrap();
    let config = MlsConfig {
        degree: 2,
        sigma: 3.0 * spacing,
        basis: MlsBasis::Trivariate,
    };
    let mls = MlsBaseline::new(&d.surface, &lattice, &table, config).unwrap();
    assert_eq!(mls.regularized(), 0);
    let lr: Vec<Vec3> = lattice.vertices().iter().map(|&x| mixed(x)).collect();
    let out = mls.reconstruct(&lr).unwrap();
    let mut checked = 0;
    for (p, x) in out.iter().zip(d.surface.vertices()) {
        let e = mixed(*x);
        for c in 0..3 {
            assert!((p[c] - e[c]).abs() < 1e-6, "{} vs {}", p[c], e[c]);
        }
        checked += 1;
    }
    assert_eq!(checked, d.surface.vertex_count());
}

#[test]
fn embedding_is_exact_for_affine_fields() {
    let (d, _) = small_dataset(9);
    let w = embed_surface(&d.surface, &d.lattice).unwrap();
    let lr: Vec<Vec3> = d.lattice.vertices().iter().map(|&x| affine(x)).collect();
    let out = embedded(&w, &lr).unwrap();
    for (p, x) in out.iter().zip(d.surface.vertices()) {
        let e = affine(*x);
        for c in 0..3 {
            assert!((p[c] - e[c]).abs() < 1e-9);
        }
    }
}

#[test]
fn too_few_neighbors_for_the_basis_is_an_error() {
    let (d, table) = small_dataset(5);
    let config = MlsConfig {
        degree: 2,
        sigma: 5.0,
        basis: MlsBasis::Trivariate,
    };
    assert!(MlsBaseline::new(&d.surface, &d.lattice, &table, config).is_err());
}

proptest! {
    #[test]
    fn kl_is_nonnegative(pairs in prop::collection::vec((-5.0f64..5.0, -6.0f64..4.0), 1..64)) {
        let (mu, lv): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(kl_divergence(&mu, &lv) >= -1e-12);
    }

    #[test]
    fn kl_vanishes_only_at_the_prior(n in 1usize..32) {
        prop_assert_eq!(kl_divergence(&vec![0.0; n], &vec![0.0; n]), 0.0);
    }
}
