use mrface_core::mesh::{
    ambient_occlusion, apply_transform, box_mesh, component_diagonals, connected_components, crop_face, empty_interior,
    estimate_similarity, hemisphere_directions, laplacian_smooth, norm, read_ply, remove_small_components, scale, add,
    taubin_smooth, uv_sphere, write_ply, CropSpec, PlyFormat, SimilarityTransform, TriMesh, Vec3, RAY_OFFSET,
    TAUBIN_ITERS, TAUBIN_LAMBDA, TAUBIN_MU,
};
use mrface_testkit::{brute_ambient_occlusion, mesh_components};
use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle_quality(mesh: &TriMesh, rays: usize, seed: u64) -> Vec<f64> {
    let diag = mesh.bbox_diagonal();
    let normals = mesh.vertex_normals();
    let bundles: Vec<Vec<(Vec3, Vec3)>> = mesh
        .vertices
        .iter()
        .zip(&normals)
        .enumerate()
        .map(|(i, (&v, &n))| {
            let o = add(v, scale(n, RAY_OFFSET * diag));
            hemisphere_directions(n, rays, seed, i).into_iter().map(|d| (o, d)).collect()
        })
        .collect();
    brute_ambient_occlusion(&mesh.vertices, &mesh.triangles, &bundles, diag)
}

#[test]
fn occlusion_matches_brute_force_on_isolated_sphere() {
    let s = uv_sphere([0.0; 3], 20.0, 22, 26);
    assert!(s.vertices.len() >= 500);
    let q = ambient_occlusion(&s, 32, 5).unwrap().value.quality.unwrap();
    let oracle = oracle_quality(&s, 32, 5);
    assert_eq!(q, oracle);
    assert!(q.iter().all(|&x| x >= 0.95));
}

#[test]
fn nested_spheres_lose_the_inner_one() {
    let outer = uv_sphere([0.0; 3], 30.0, 16, 20);
    let inner = uv_sphere([2.0, 0.0, 1.0], 10.0, 10, 12);
    let n_outer = outer.vertices.len();
    let m = outer.merge(&inner);
    let ao = ambient_occlusion(&m, 64, 2).unwrap().value;
    let q = ao.quality.clone().unwrap();
    assert_eq!(q, oracle_quality(&m, 64, 2));
    assert!(q[n_outer..].iter().all(|&x| x <= 0.05));
    assert!(q[..n_outer].iter().all(|&x| x >= 0.95));
    let emptied = empty_interior(&ao, 0.0, 0.25).unwrap().value;
    assert_eq!(emptied.vertices.len(), n_outer);
    assert!(emptied.vertices.iter().all(|v| norm(*v) > 29.0));
}

#[test]
fn components_agree_with_union_find() {
    let parts = [
        uv_sphere([0.0; 3], 25.0, 10, 12),
        box_mesh([100.0; 3], [101.0; 3]),
        uv_sphere([-80.0, 0.0, 0.0], 24.0, 8, 10),
        box_mesh([0.0, 90.0, 0.0], [2.0, 92.0, 3.0]),
    ];
    let m = parts.iter().skip(1).fold(parts[0].clone(), |a, b| a.merge(b));
    let (labels, count) = connected_components(&m);
    let (oracle, oracle_count) = mesh_components(m.vertices.len(), &m.triangles);
    assert_eq!(count, oracle_count);
    // same partition, possibly different numbering
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            assert_eq!(labels[i] == labels[j], oracle[i] == oracle[j]);
        }
    }
    let diag = component_diagonals(&m, &oracle, oracle_count);
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let kept = oracle.iter().filter(|&&l| diag[l] >= 0.9 * largest).count();
    let out = remove_small_components(&m, 0.9);
    assert_eq!(out.vertices.len(), kept);
    assert_eq!(connected_components(&out).1, 2);
}

fn noisy_sphere(r: f64, sigma: f64, seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = uv_sphere([0.0; 3], r, 24, 32);
    for v in m.vertices.iter_mut() {
        *v = scale(*v, 1.0 + sigma * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt());
    }
    m
}

fn rms_radial(m: &TriMesh, r: f64) -> f64 {
    (m.vertices.iter().map(|v| (norm(*v) - r).powi(2)).sum::<f64>() / m.vertices.len() as f64).sqrt()
}

#[test]
fn taubin_denoises_without_shrinking() {
    let r = 30.0;
    let noisy = noisy_sphere(r, 0.02, 1);
    let smooth = taubin_smooth(&noisy, TAUBIN_LAMBDA, TAUBIN_MU, TAUBIN_ITERS).unwrap();
    assert!(rms_radial(&smooth, r) <= 0.6 * rms_radial(&noisy, r));
    let clean = uv_sphere([0.0; 3], r, 24, 32);
    let v0 = clean.signed_volume();
    let taubin = taubin_smooth(&clean, TAUBIN_LAMBDA, TAUBIN_MU, TAUBIN_ITERS).unwrap().signed_volume();
    let lap = laplacian_smooth(&clean, TAUBIN_LAMBDA, TAUBIN_ITERS).signed_volume();
    assert!((v0 - taubin).abs() / v0 < 0.02);
    assert!((v0 - lap) / v0 >= 0.10);
}

#[test]
fn crop_keeps_only_input_vertices() {
    let s = uv_sphere([0.0; 3], 30.0, 16, 20);
    let crop = CropSpec::new(-5.0, -20.0, 25.0).unwrap();
    let out = crop_face(&s, &crop).unwrap();
    assert!(out.vertices.iter().all(|v| s.vertices.contains(v) && crop.keeps(*v)));
}

#[test]
fn ply_formats_agree_on_a_sphere() {
    let s = uv_sphere([1.5, -2.0, 3.25], 10.0, 8, 12);
    let a = read_ply(&write_ply(&s, PlyFormat::Ascii)).unwrap();
    let b = read_ply(&write_ply(&s, PlyFormat::BinaryLittleEndian)).unwrap();
    assert_eq!(a, b);
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.random_range(-3.1..3.1)).into_inner()
}

fn points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| [0; 3].map(|_| rng.random_range(-50.0..50.0))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn similarity_is_conjugated_by_common_motion(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = points(&mut rng, 5);
        let dst = points(&mut rng, 5);
        let q = SimilarityTransform::from_parts(1.0, &random_rotation(&mut rng), &Vector3::new(3.0, -7.0, 11.0));
        let xf = estimate_similarity(&src, &dst).unwrap();
        let moved_src: Vec<Vec3> = src.iter().map(|p| q.apply(*p)).collect();
        let moved_dst: Vec<Vec3> = dst.iter().map(|p| q.apply(*p)).collect();
        let conj = estimate_similarity(&moved_src, &moved_dst).unwrap();
        // conj = Q xf Q^-1
        let expected = q.inverse().then(&xf).then(&q);
        prop_assert!((conj.s - expected.s).abs() < 1e-9);
        for p in points(&mut rng, 4) {
            let (a, b) = (conj.apply(p), expected.apply(p));
            prop_assert!(norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]]) < 1e-9);
        }
    }

    #[test]
    fn rigid_application_preserves_distances(seed in any::<u64>(), s in 0.5f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = uv_sphere([1.0, 2.0, 3.0], 10.0, 4, 6);
        let xf = SimilarityTransform::from_parts(s, &random_rotation(&mut rng), &Vector3::new(5.0, 0.0, -2.0));
        let moved = apply_transform(&mesh, &xf, true);
        for i in 0..mesh.vertices.len() {
            for j in 0..i {
                let d0 = norm([0, 1, 2].map(|d| mesh.vertices[i][d] - mesh.vertices[j][d]));
                let d1 = norm([0, 1, 2].map(|d| moved.vertices[i][d] - moved.vertices[j][d]));
                prop_assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn component_removal_never_adds_components(n in 1usize..5, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = (0..n)
            .map(|i| uv_sphere([i as f64 * 100.0, 0.0, 0.0], rng.random_range(1.0..30.0), 4, 6))
            .reduce(|a, b| a.merge(&b))
            .unwrap();
        let out = remove_small_components(&m, frac);
        let (labels, count) = connected_components(&out);
        prop_assert!(count <= n);
        let diag = component_diagonals(&out, &labels, count);
        let largest = diag.iter().cloned().fold(0.0, f64::max);
        prop_assert!(diag.iter().all(|&d| d >= frac * largest));
    }
}
