use mrface_core::landmarks::{
    icp_rigid, read_landmarks, surface_distances, transfer_landmarks, write_landmarks, LandmarkFormat, LandmarkTemplate,
    ICP_MAX_ITERS, ICP_TRIM,
};
use mrface_core::mesh::{apply_transform, box_mesh, norm, sub, SimilarityTransform};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn motion(deg: f64, axis: [f64; 3], t: [f64; 3]) -> SimilarityTransform {
    let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), deg.to_radians());
    SimilarityTransform::from_parts(1.0, r.matrix(), &Vector3::from(t))
}

#[test]
fn template_onto_itself_is_a_fixed_point() {
    let t = LandmarkTemplate::builtin();
    let out = transfer_landmarks(&t.mesh, &t, 0).unwrap();
    assert_eq!(out.landmarks.names, t.landmarks.names);
    for (a, b) in out.landmarks.coords.iter().zip(&t.landmarks.coords) {
        assert!(norm(sub(*a, *b)) < 1e-6);
    }
    assert!(!out.needs_review);
}

#[test]
fn rigidly_moved_template_carries_its_landmarks() {
    let t = LandmarkTemplate::builtin();
    let q = motion(8.0, [0.3, 1.0, 0.2], [12.0, -7.0, 4.0]);
    let face = apply_transform(&t.mesh, &q, false);
    let out = transfer_landmarks(&face, &t, 1).unwrap();
    let tol = 0.005 * face.bbox_diagonal();
    for (name, (a, b)) in out.landmarks.names.iter().zip(out.landmarks.coords.iter().zip(&t.landmarks.coords)) {
        let d = norm(sub(*a, q.apply(*b)));
        assert!(d < tol, "{name}: {d:.3} mm > {tol:.3}");
    }
    let dist = surface_distances(&face, &out.landmarks.coords);
    assert!(dist.iter().all(|d| *d < 1e-9));
}

#[test]
fn a_cube_is_flagged_for_review() {
    let t = LandmarkTemplate::builtin();
    let cube = box_mesh([-60.0, -10.0, -90.0], [60.0, 110.0, 90.0]);
    let out = transfer_landmarks(&cube, &t, 0).unwrap();
    assert!(out.needs_review, "residual {}", out.residual);
    assert_eq!(out.landmarks.len(), 20);
}

#[test]
fn icp_recovers_a_small_motion() {
    let t = LandmarkTemplate::builtin();
    let q = motion(10.0, [0.0, 0.0, 1.0], [5.0, 0.0, 0.0]);
    let moved = apply_transform(&t.mesh, &q, false);
    let r = icp_rigid(&t.mesh, &moved, ICP_MAX_ITERS, ICP_TRIM, 0).unwrap();
    let err = r.transform.then(&q.inverse());
    assert!(err.rotation_angle_deg() < 0.1, "{}", err.rotation_angle_deg());
    assert!(norm(err.t) < 0.1, "{:?}", err.t);
    let same = icp_rigid(&t.mesh, &t.mesh, ICP_MAX_ITERS, ICP_TRIM, 0).unwrap();
    assert!(same.transform.rotation_angle_deg() < 1e-6 && norm(same.transform.t) < 1e-6);
}

#[test]
fn json_and_csv_carry_the_same_coordinates() {
    let lm = LandmarkTemplate::builtin().landmarks;
    let csv = read_landmarks(&write_landmarks(&lm, LandmarkFormat::Csv).unwrap(), LandmarkFormat::Csv).unwrap();
    let json = read_landmarks(&write_landmarks(&lm, LandmarkFormat::Json).unwrap(), LandmarkFormat::Json).unwrap();
    assert_eq!(csv, json);
    assert_eq!(csv, lm);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn transfer_follows_rigid_motion_of_the_face(
        deg in -6.0f64..6.0,
        tx in -20.0f64..20.0,
        tz in -20.0f64..20.0,
    ) {
        let t = LandmarkTemplate::builtin();
        let q = motion(deg, [0.2, 0.1, 1.0], [tx, 3.0, tz]);
        let base = transfer_landmarks(&t.mesh, &t, 2).unwrap();
        let moved = transfer_landmarks(&apply_transform(&t.mesh, &q, false), &t, 2).unwrap();
        prop_assert_eq!(&moved.landmarks.names, &t.landmarks.names);
        for (a, b) in moved.landmarks.coords.iter().zip(&base.landmarks.coords) {
            prop_assert!(norm(sub(*a, q.apply(*b))) < 1.0);
        }
    }
}
