mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simsr::geodesy::{geodesic_knn, linear_assignment, AssignmentMap, NeighborhoodTable};
use simsr::mesh::SurfaceMesh;

use common::{brute_force, floyd, sphere};

fn check_table(mesh: &SurfaceMesh, sources: Vec<usize>, k: usize) {
    let all = floyd(mesh);
    let mapped = AssignmentMap::new(sources.clone(), 0.0);
    let table: NeighborhoodTable = geodesic_knn(mesh, &mapped, k).unwrap();
    for j in 0..mesh.vertex_count() {
        let mut expect: Vec<(f64, usize)> = sources.iter().enumerate().map(|(i, &s)| (all[s][j], i)).collect();
        expect.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let idx: Vec<usize> = expect[..k].iter().map(|e| e.1).collect();
        assert_eq!(table.neighbors(j), idx.as_slice(), "vertex {j}");
        for (d, e) in table.distances(j).iter().zip(&expect) {
            assert!((d - e.0).abs() < 1e-9);
        }
    }
}

#[test]
fn knn_matches_all_pairs_on_spheres() {
    for (lon, lat, seed) in [(6, 5, 1), (12, 8, 2), (18, 12, 3)] {
        let mesh = sphere(lon, lat, seed);
        assert!(mesh.vertex_count() <= 200);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sources: Vec<usize> = (0..mesh.vertex_count()).collect();
        for i in (1..sources.len()).rev() {
            sources.swap(i, rng.gen_range(0..=i));
        }
        sources.truncate(mesh.vertex_count() / 4);
        check_table(&mesh, sources, 5);
    }
}

#[test]
fn assignment_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(1..=7);
        let m = rng.gen_range(n..=8);
        let costs: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let a = linear_assignment(&costs).unwrap();
        let total: f64 = (0..n).map(|r| costs[r][a.target(r)]).sum();
        let best = brute_force(&costs);
        assert!((total - best).abs() < 1e-9, "{total} vs {best}");
        assert!((a.total_cost() - best).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn table_rows_are_sorted_and_distinct(seed in 0u64..10_000, k in 1usize..8) {
        let mesh = sphere(8, 6, seed);
        let sources: Vec<usize> = (0..mesh.vertex_count()).step_by(3).collect();
        let t = geodesic_knn(&mesh, &AssignmentMap::new(sources.clone(), 0.0), k).unwrap();
        for j in 0..mesh.vertex_count() {
            let d = t.distances(j);
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
            let mut n = t.neighbors(j).to_vec();
            n.sort_unstable();
            n.dedup();
            prop_assert_eq!(n.len(), k);
            if let Some(i) = sources.iter().position(|&s| s == j) {
                prop_assert_eq!(t.neighbors(j)[0], i);
                prop_assert_eq!(d[0], 0.0);
            }
        }
    }
}
