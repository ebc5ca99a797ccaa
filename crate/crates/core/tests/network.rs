mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simsr::geodesy::precompute;
use simsr::network::{displacement_scale, train, ModelConfig, Variant};
use simsr::tensor::{grad_check_inputs, Bound};
use simsr::{Geometry32, Geometry64, Model32, Model64};

use common::{small_dataset, small_model, toy_problem};

fn toy_config() -> ModelConfig {
    ModelConfig {
        widths: vec![4, 5],
        k_graph: 3,
        k_interp: 4,
        weight_hidden: 4,
        recon_hidden: 5,
        pe_levels: 2,
        ..ModelConfig::default()
    }
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let (surface, lattice, frame) = toy_problem();
    let config = toy_config();
    let table = precompute(&surface, &lattice, 4).unwrap();
    let geo = Geometry64::new(&config, &surface, &lattice, &table).unwrap();
    let model = Model64::new(config, surface.vertex_count(), 0.8).unwrap();
    let err = grad_check_inputs(
        |g, vars| {
            let bound = Bound::new(vars.to_vec());
            let w = model.record_weights(g, &bound, &geo)?;
            Ok(model.record_loss(g, &bound, &geo, w, &frame, 0.7)?.0)
        },
        model.params().tensors(),
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn ablation_shapes() {
    let (d, table) = small_dataset(2);
    let m = d.surface.vertex_count();
    let no_fe = ModelConfig {
        variant: Variant::NoFeatureEncoding,
        ..small_model()
    };
    assert_eq!(no_fe.encoded_width(), 3 + 6 * no_fe.pe_levels);
    let geo = Geometry64::new(&no_fe, &d.surface, &d.lattice, &table).unwrap();
    let model = Model64::new(no_fe, m, 1.0).unwrap();
    let f = model.feature_encode(&geo, &d.frames.frames[0].lr_disp).unwrap();
    assert_eq!(f.encoded.shape(), &[d.lattice.vertex_count(), 33]);
    assert!(f.layers.is_empty());

    let no_cu = ModelConfig {
        variant: Variant::NoCoordinateUpsampling,
        k_interp: 20,
        ..small_model()
    };
    let geo = Geometry64::new(&no_cu, &d.surface, &d.lattice, &table).unwrap();
    let model = Model64::new(no_cu, m, 1.0).unwrap();
    let id = model.params().find("upsample.weights").unwrap();
    assert_eq!(model.params().get(id).shape(), &[m, 20]);
    assert_eq!(model.interpolation_weights(&geo).unwrap().shape(), &[m, 20]);
}

#[test]
fn checkpoint_round_trip_predicts_identically() {
    let (d, table) = small_dataset(4);
    let config = small_model();
    let geo = Geometry32::new(&config, &d.surface, &d.lattice, &table).unwrap();
    let model = Model32::new(config.clone(), d.surface.vertex_count(), 2.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ssck");
    model.save(&path).unwrap();
    let back = Model32::load(config, d.surface.vertex_count(), &path).unwrap();
    let lr = &d.frames.frames[1].lr_disp;
    assert_eq!(model.predict(&geo, lr).unwrap(), back.predict(&geo, lr).unwrap());
}

#[test]
fn training_is_deterministic_and_lowers_the_loss() {
    let (d, table) = small_dataset(6);
    let config = ModelConfig {
        epochs: 6,
        beta_max: 0.01,
        ..small_model()
    };
    let geo = Geometry32::new(&config, &d.surface, &d.lattice, &table).unwrap();
    let run = || {
        let train_frames = d.train();
        let model = Model32::new(config.clone(), d.surface.vertex_count(), displacement_scale(&train_frames)).unwrap();
        train(model, &geo, train_frames, None).unwrap()
    };
    let (a, log) = run();
    let (b, _) = run();
    assert_eq!(a.params().tensors(), b.params().tensors());
    assert!(log.last().unwrap().recon < log[0].recon);
}

#[test]
fn inference_shifts_smoothly_under_a_rigid_offset() {
    let (d, table) = small_dataset(8);
    let config = small_model();
    let geo = Geometry32::new(&config, &d.surface, &d.lattice, &table).unwrap();
    let model = Model32::new(config, d.surface.vertex_count(), 3.0).unwrap();
    let lr = d.frames.frames[0].lr_disp.clone();
    let base = model.predict(&geo, &lr).unwrap();
    let offset = 1.5;
    let moved: Vec<_> = lr.iter().map(|v| [v[0] + offset, v[1], v[2]]).collect();
    let out = model.predict(&geo, &moved).unwrap();
    for (a, b) in out.iter().zip(&base) {
        for c in 0..3 {
            assert!(a[c].is_finite());
            assert!((a[c] - b[c]).abs() <= 10.0 * offset);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn upsampling_is_a_convex_combination(seed in 0u64..1_000_000) {
        let (d, table) = small_dataset(1);
        let config = ModelConfig { seed, ..small_model() };
        let geo = Geometry64::new(&config, &d.surface, &d.lattice, &table).unwrap();
        let model = Model64::new(config, d.surface.vertex_count(), 1.0).unwrap();
        let w = model.interpolation_weights(&geo).unwrap();
        let k = geo.k_interp();
        for row in w.data().chunks(k) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lr: Vec<[f64; 3]> = (0..d.lattice.vertex_count())
            .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
            .collect();
        let enc = model.feature_encode(&geo, &lr).unwrap().encoded;
        let width = enc.shape()[1];
        let up = model.upsample(&geo, &enc).unwrap();
        let nb = geo.neighbors();
        for j in 0..d.surface.vertex_count() {
            for c in 0..width {
                let vals = nb[j * k..(j + 1) * k].iter().map(|&i| enc.data()[i * width + c]);
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                let u = up.data()[j * width + c];
                prop_assert!(u >= lo - 1e-9 && u <= hi + 1e-9);
            }
        }
    }
}
