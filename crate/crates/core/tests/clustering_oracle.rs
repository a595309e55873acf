mod oracles;

use copg_core::range::{cluster_range_image, merge_angle};
use oracles::cluster::{merge_angle_geometric, random_image, same_partition, union_find_components};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn bfs_labels_match_union_find_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let (img, theta) = random_image(&mut rng);
        let bfs = cluster_range_image(&img, theta);
        let uf = union_find_components(&img, theta);
        assert!(same_partition(&bfs.label, &uf), "case {case}: theta {theta}");
        let distinct: std::collections::BTreeSet<_> = uf.iter().flatten().collect();
        assert_eq!(bfs.num_clusters as usize, distinct.len());
    }
}

#[test]
fn closed_form_matches_triangle_geometry() {
    for d1 in [0.5, 3.0, 17.0, 80.0] {
        for d2 in [0.5, 2.0, 17.0, 120.0] {
            for alpha in [0.05, 0.4, 1.0, 10.0, 45.0, 120.0] {
                let a = merge_angle(d1, d2, alpha);
                let b = merge_angle_geometric(d1, d2, alpha);
                assert!((a - b).abs() < 1e-9, "{d1} {d2} {alpha}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn labeling_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (img, theta) = random_image(&mut rng);
    assert_eq!(cluster_range_image(&img, theta), cluster_range_image(&img, theta));
}
