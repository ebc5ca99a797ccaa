mod common;

use proptest::prelude::*;
use simsr::baselines::embedded;
use simsr::datagen::{
    generate, hr_displacement, perturb_dynamics, perturb_force, write_dataset, Dynamics, GenConfig, LoadedManifest,
};
use simsr::eval::per_vertex_error;
use simsr::mesh::{embed_surface, norm};

use common::small_config;

/// Bumps and bias switched off, so only the surface wrinkle moves.
fn wrinkle_only() -> GenConfig {
    let mut c = small_config();
    c.bulk_amplitudes = vec![0.0; c.channels];
    c.bias_amplitude = 0.0;
    c
}

#[test]
fn pure_wrinkle_is_invisible_to_the_lattice() {
    let c = wrinkle_only();
    let d = generate(&c, 12).unwrap();
    let w = embed_surface(&d.surface, &d.lattice).unwrap();
    let mut worst = 0.0f64;
    for f in &d.frames.frames {
        assert!(f.lr_disp.iter().flatten().all(|&v| v == 0.0));
        let hr = f.hr_disp.as_ref().unwrap();
        for (h, x) in hr.iter().zip(d.surface.vertices()) {
            assert_eq!(h[0], 0.0);
            assert_eq!(h[1], 0.0);
            let e = hr_displacement(&c, *x, &f.params);
            assert!((h[2] - e[2]).abs() < 1e-6 * e[2].abs().max(1.0));
        }
        let (_, mean) = per_vertex_error(&embedded(&w, &f.lr_disp).unwrap(), hr).unwrap();
        let direct = hr.iter().map(|h| h[2].abs()).sum::<f64>() / hr.len() as f64;
        assert!((mean - direct).abs() < 1e-12);
        worst = worst.max(mean);
    }
    assert!(worst > 0.0);
}

#[test]
fn embedded_error_is_positive_on_the_default_generator() {
    let d = generate(&small_config(), 4).unwrap();
    let w = embed_surface(&d.surface, &d.lattice).unwrap();
    for f in d.test() {
        let (_, mean) = per_vertex_error(&embedded(&w, &f.lr_disp).unwrap(), f.hr_disp.as_ref().unwrap()).unwrap();
        assert!(mean > 0.0);
    }
}

#[test]
fn written_datasets_are_byte_identical_per_seed() {
    let c = small_config();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, seed) in dirs.iter().zip([21, 21, 22]) {
        write_dataset(&generate(&c, seed).unwrap(), dir.path()).unwrap();
    }
    let bytes = |i: usize| {
        let m = LoadedManifest::open(dirs[i].path()).unwrap();
        [m.surface_path(), m.lattice_path(), m.frames_path()].map(|p| std::fs::read(p).unwrap())
    };
    assert_eq!(bytes(0), bytes(1));
    assert_ne!(bytes(0)[2], bytes(2)[2]);
    let back = LoadedManifest::open(dirs[0].path()).unwrap();
    assert_eq!(back.frames().unwrap(), generate(&c, 21).unwrap().frames);
}

#[test]
fn train_and_test_families_are_disjoint() {
    let d = generate(&small_config(), 0).unwrap();
    assert!(d.train_frames.iter().all(|t| !d.test_frames.contains(t)));
    assert_eq!(d.train_frames.len() + d.test_frames.len(), d.frames.frames.len());
}

#[test]
fn dynamics_change_only_coarse_inputs() {
    let d = generate(&small_config(), 2).unwrap();
    let frames: Vec<_> = d.test().into_iter().cloned().collect();
    let dynamics = Dynamics::default();
    let out = perturb_dynamics(&frames, &d.lattice, dynamics).unwrap();
    for (a, b) in out.iter().zip(&frames) {
        assert_eq!(a.hr_disp, b.hr_disp);
        for (p, q) in a.lr_disp.iter().zip(&b.lr_disp) {
            let shift = norm([p[0] - q[0], p[1] - q[1], p[2] - q[2]]);
            assert!(shift <= 3.0 * dynamics.amplitude);
            assert_eq!(p[2], q[2]);
        }
    }
    assert!(out[1..].iter().zip(&frames[1..]).any(|(a, b)| a.lr_disp != b.lr_disp));
    assert!(perturb_dynamics(&frames[..1], &d.lattice, dynamics).is_err());
}

#[test]
fn force_outside_the_lattice_is_rejected() {
    let d = generate(&small_config(), 2).unwrap();
    let f = &d.frames.frames[0];
    let b = d.lattice.bounds();
    let out = [b.max[0] + 1.0, b.max[1], b.max[2]];
    assert!(perturb_force(f, &d.lattice, out, 1.0, [0.0, 0.0, 1.0], 5.0).is_err());
    assert!(perturb_force(f, &d.lattice, b.min, 1.0, [0.0; 3], 5.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn force_decays_from_its_site(
        t in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        magnitude in 0.1f64..10.0,
        radius in 1.0f64..40.0,
    ) {
        let d = generate(&small_config(), 2).unwrap();
        let f = &d.frames.frames[0];
        let b = d.lattice.bounds();
        let site = [
            b.min[0] + t.0 * (b.max[0] - b.min[0]),
            b.min[1] + t.1 * (b.max[1] - b.min[1]),
            b.min[2] + t.2 * (b.max[2] - b.min[2]),
        ];
        let out = perturb_force(f, &d.lattice, site, magnitude, [1.0, -2.0, 0.5], radius).unwrap();
        prop_assert_eq!(&out.hr_disp, &f.hr_disp);
        let mut by_range: Vec<(f64, f64)> = out
            .lr_disp
            .iter()
            .zip(&f.lr_disp)
            .zip(d.lattice.vertices())
            .map(|((p, q), x)| {
                let r = norm([x[0] - site[0], x[1] - site[1], x[2] - site[2]]);
                (r, norm([p[0] - q[0], p[1] - q[1], p[2] - q[2]]))
            })
            .collect();
        by_range.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in by_range.windows(2) {
            prop_assert!(w[1].1 <= w[0].1 + 1e-9);
        }
        prop_assert!(by_range.iter().all(|p| p.1 <= magnitude + 1e-9));
    }
}
