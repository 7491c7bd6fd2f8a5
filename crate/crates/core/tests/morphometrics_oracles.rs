use mrface_core::landmarks::LandmarkSet;
use mrface_core::mesh::Vec3;
use mrface_core::morphometrics::{
    edma, gpa, morphospace_iou, pca, procrustes_distance, select_edma_biomarkers, top_significant_pairs,
    total_variance, GroupSample,
};
use mrface_testkit::{grid_procrustes_distance, jacobi_eigen};
use nalgebra::{Rotation3, Unit, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_config(rng: &mut ChaCha8Rng, l: usize) -> Vec<Vec3> {
    (0..l).map(|_| [0; 3].map(|_| rng.random_range(-50.0..50.0))).collect()
}

fn similarity(rng: &mut ChaCha8Rng, c: &[Vec3]) -> Vec<Vec3> {
    let axis = Unit::new_normalize(Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let r = Rotation3::from_axis_angle(&axis, rng.random_range(-3.1..3.1));
    let s = rng.random_range(0.5..2.0);
    let t = Vector3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
    c.iter()
        .map(|p| {
            let v = s * (r * Vector3::from(*p)) + t;
            [v.x, v.y, v.z]
        })
        .collect()
}

fn group(id: &str, configs: &[Vec<Vec3>]) -> GroupSample {
    let names: Vec<String> = (0..configs[0].len()).map(|i| format!("p{i}")).collect();
    let sets: Vec<LandmarkSet> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| LandmarkSet::new(names.clone(), c.clone(), format!("{id}{i}")).unwrap())
        .collect();
    GroupSample::from_sets(id, &sets).unwrap()
}

fn jitter(rng: &mut ChaCha8Rng, c: &[Vec3], sigma: f64) -> Vec<Vec3> {
    let n = Normal::new(0.0, sigma).unwrap();
    c.iter().map(|p| p.map(|v| v + n.sample(rng))).collect()
}

#[test]
fn explained_variance_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = random_config(&mut rng, 4);
    let configs: Vec<Vec<Vec3>> = (0..10).map(|_| jitter(&mut rng, &base, 3.0)).collect();
    let g = gpa(&configs).unwrap();
    let p = 9;
    let g = pca(&g, p).unwrap();
    let k = g.procrustes_coords.len();
    let n = g.procrustes_coords[0].len();
    let mean: Vec<f64> = (0..n).map(|j| g.procrustes_coords.iter().map(|r| r[j]).sum::<f64>() / k as f64).collect();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    g.procrustes_coords.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (k - 1) as f64
                })
                .collect()
        })
        .collect();
    let (vals, _) = jacobi_eigen(&cov);
    for c in 0..p {
        assert!((g.explained_variance[c] - vals[c].max(0.0)).abs() < 1e-9, "component {c}");
    }
    let full = pca(&gpa(&configs).unwrap(), 9).unwrap();
    assert!((full.explained_variance.iter().sum::<f64>() - total_variance(&full)).abs() < 1e-9);
}

#[test]
fn procrustes_distance_matches_rotation_grid() {
    let a = vec![[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [2.0, 7.0, 0.0]];
    let b = vec![[1.0, 1.0, 0.0], [9.0, 3.0, 1.0], [0.0, 6.0, 3.0]];
    let d = procrustes_distance(&a, &b).unwrap();
    let oracle = grid_procrustes_distance(&a, &b);
    assert!((d - oracle).abs() < 1e-4, "{d} vs {oracle}");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = random_config(&mut rng, 6);
    let moved = similarity(&mut rng, &c);
    let e = jitter(&mut rng, &moved, 4.0);
    let d = procrustes_distance(&c, &e).unwrap();
    assert!((d - grid_procrustes_distance(&c, &e)).abs() < 1e-4);
}

#[test]
fn iou_is_symmetric_and_motion_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a: Vec<[f64; 2]> = (0..12).map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..1.0)]).collect();
    let b: Vec<[f64; 2]> = (0..12).map(|_| [rng.random_range(1.0..3.0), rng.random_range(0.5..1.5)]).collect();
    let ab = morphospace_iou(&a, &b).unwrap().iou;
    let ba = morphospace_iou(&b, &a).unwrap().iou;
    assert!((ab - ba).abs() < 1e-12);
    let (s, c) = 0.7f64.sin_cos();
    let m = |p: &[f64; 2]| [c * p[0] - s * p[1] + 4.0, s * p[0] + c * p[1] - 2.0];
    let moved = morphospace_iou(&a.iter().map(m).collect::<Vec<_>>(), &b.iter().map(m).collect::<Vec<_>>()).unwrap();
    assert!((moved.iou - ab).abs() < 1e-12);
}

#[test]
fn displaced_landmark_pairs_rank_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = random_config(&mut rng, 8);
    let a: Vec<Vec<Vec3>> = (0..15).map(|_| jitter(&mut rng, &base, 0.05)).collect();
    let b: Vec<Vec<Vec3>> = a
        .iter()
        .map(|c| {
            let mut c = jitter(&mut rng, c, 0.01);
            c[0] = [c[0][0] + 40.0, c[0][1] - 30.0, c[0][2] + 25.0];
            c
        })
        .collect();
    let (ga, gb) = (group("a", &a), group("b", &b));
    let e = edma(&ga, &gb, 10.0, 200, 3).unwrap();
    let top: Vec<(usize, usize)> = e.order[..7].iter().map(|&p| e.pairs[p]).collect();
    assert!(top.iter().all(|&(i, _)| i == 0), "{top:?}");
    let two = top_significant_pairs(&e, 2).unwrap();
    assert_eq!(two, e.order[..2].to_vec());
    let bio = select_edma_biomarkers(&e, &[&ga, &gb], 2).unwrap();
    assert_eq!(bio.len(), 30);
    assert!(top_significant_pairs(&e, e.significant_count() + 1).is_err());
}

#[test]
fn edma_ratios_follow_motion_and_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = random_config(&mut rng, 6);
    let a: Vec<Vec<Vec3>> = (0..8).map(|_| jitter(&mut rng, &base, 2.0)).collect();
    let b: Vec<Vec<Vec3>> = (0..8).map(|_| jitter(&mut rng, &base, 2.0)).collect();
    let e = edma(&group("a", &a), &group("b", &b), 10.0, 100, 1).unwrap();

    let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
    let move_all = |cs: &[Vec<Vec3>]| -> Vec<Vec<Vec3>> {
        cs.iter()
            .map(|c| c.iter().map(|p| { let v = r * Vector3::from(*p) + Vector3::new(5.0, 6.0, 7.0); [v.x, v.y, v.z] }).collect())
            .collect()
    };
    let moved = edma(&group("a", &move_all(&a)), &group("b", &move_all(&b)), 10.0, 100, 1).unwrap();
    for (x, y) in e.ratios.iter().zip(&moved.ratios) {
        assert!((x - y).abs() < 1e-12);
    }
    let scaled: Vec<Vec<Vec3>> = a.iter().map(|c| c.iter().map(|p| p.map(|v| 3.0 * v)).collect()).collect();
    let s = edma(&group("a", &scaled), &group("b", &b), 10.0, 100, 1).unwrap();
    for (x, y) in e.ratios.iter().zip(&s.ratios) {
        assert!((y - 3.0 * x).abs() < 1e-12 * y.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gpa_ignores_per_subject_similarity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_config(&mut rng, 7);
        let configs: Vec<Vec<Vec3>> = (0..6).map(|_| jitter(&mut rng, &base, 3.0)).collect();
        let moved: Vec<Vec<Vec3>> = configs.iter().map(|c| similarity(&mut rng, c)).collect();
        let g1 = gpa(&configs).unwrap();
        let g2 = gpa(&moved).unwrap();
        for (r1, r2) in g1.procrustes_coords.iter().zip(&g2.procrustes_coords) {
            for (x, y) in r1.iter().zip(r2) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }
}
