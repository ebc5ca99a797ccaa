mod common;

use proptest::prelude::*;
use simsr::eval::{aggregate, bench, heatmap_ply, parse_heatmap, per_vertex_error, ErrorStats};
use simsr::mesh::Vec3;

use common::small_dataset;

fn rows(n: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<(Vec3, Vec3)>> {
    let v = || prop::array::uniform3(-50.0f64..50.0);
    prop::collection::vec((v(), v()), n)
}

proptest! {
    #[test]
    fn error_ignores_a_shared_translation(pairs in rows(1..40), t in prop::array::uniform3(-1e3f64..1e3)) {
        let (p, q): (Vec<Vec3>, Vec<Vec3>) = pairs.into_iter().unzip();
        let shift = |v: &[Vec3]| v.iter().map(|a| [a[0] + t[0], a[1] + t[1], a[2] + t[2]]).collect::<Vec<_>>();
        let (_, a) = per_vertex_error(&p, &q).unwrap();
        let (_, b) = per_vertex_error(&shift(&p), &shift(&q)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn stats_are_ordered(errors in prop::collection::vec(0.0f64..100.0, 1..60)) {
        let frames: Vec<(u32, f64)> = errors.iter().enumerate().map(|(i, &e)| (i as u32, e)).collect();
        let s = aggregate(&frames).unwrap();
        prop_assert!(s.min <= s.mean + 1e-12 && s.mean <= s.max + 1e-12);
        prop_assert!(s.min <= s.median && s.median <= s.max);
        prop_assert!(s.std >= 0.0);
        prop_assert_eq!(s.frame_csv("m").lines().count(), frames.len() + 1);
    }

    #[test]
    fn heatmap_colors_follow_the_error(errors in prop::collection::vec(0.0f64..5.0, 196)) {
        let (d, _) = small_dataset(0);
        let colors = parse_heatmap(&heatmap_ply(&d.surface, &errors).unwrap()).unwrap();
        let mut order: Vec<usize> = (0..errors.len()).collect();
        order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]));
        for w in order.windows(2) {
            prop_assert!(colors[w[0]][0] <= colors[w[1]][0]);
            prop_assert!(colors[w[0]][2] >= colors[w[1]][2]);
        }
    }
}

#[test]
fn identical_frames_score_zero() {
    let (d, _) = small_dataset(1);
    let hr = d.frames.frames[0].hr_disp.as_ref().unwrap();
    let (e, mean) = per_vertex_error(hr, hr).unwrap();
    assert_eq!(mean, 0.0);
    assert!(e.iter().all(|&x| x == 0.0));
    let s = aggregate(&[(0, mean)]).unwrap();
    assert_eq!(s.summary_row("same"), "same,0,0,0,0,0\n");
    assert_eq!(ErrorStats::SUMMARY_HEADER, "method,mean,median,std,max,min\n");
}

#[test]
fn mismatched_inputs_are_errors() {
    assert!(per_vertex_error(&[[0.0; 3]], &[]).is_err());
    assert!(per_vertex_error(&[], &[]).is_err());
    assert!(aggregate(&[]).is_err());
    assert!(bench(0, 0, || Ok(())).is_err());
}

#[test]
fn bench_counts_runs() {
    let mut calls = 0;
    let r = bench(3, 10, || {
        calls += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(calls, 13);
    assert_eq!(r.runs, 10);
    assert!(r.min_seconds <= r.mean_seconds && r.std_seconds >= 0.0);
}
