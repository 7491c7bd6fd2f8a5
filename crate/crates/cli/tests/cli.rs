use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mrface_core::landmarks::{load_landmarks, LANDMARK_NAMES};
use mrface_core::phantom::{head_phantom, HeadParams, ScanOptions, CLEAN_THRESHOLD};
use mrface_core::reconstruct::CalibrationModel;
use mrface_core::volume::save_nifti;

fn mrface(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrface"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn phantom(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let v = head_phantom(&HeadParams::sample(seed), &ScanOptions { seed, ..Default::default() }).unwrap();
    let p = dir.join(format!("{name}.nii.gz"));
    save_nifti(&v, &p).unwrap();
    p
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("x.nii");
    std::fs::write(&input, b"").unwrap();
    let o = mrface(&["extract", s(&input)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--threshold"));
    let o = mrface(&["extract", s(&input), "--calibration", "/no/such/model.json"]);
    assert_eq!(code(&o), 2);
    let o = mrface(&["extract", s(&input), "--threshold", "5", "--crop", "0,10,-10"]);
    assert_eq!(code(&o), 2);
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "treshold = 3\n").unwrap();
    assert_eq!(code(&mrface(&["extract", s(&input), "--config", s(&cfg)])), 2);
    assert_eq!(code(&mrface(&["frobnicate"])), 2);
}

#[test]
fn unreadable_single_input_is_a_total_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("x.nii");
    std::fs::write(&input, b"not a volume").unwrap();
    let o = mrface(&["extract", s(&input), "--threshold", "5", "-o", s(&tmp.path().join("out"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn batch_exit_codes_follow_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    std::fs::create_dir_all(&inputs).unwrap();
    phantom(&inputs, "good", 2);
    std::fs::write(inputs.join("bad.nii"), b"junk").unwrap();
    let out = tmp.path().join("out");
    let th = CLEAN_THRESHOLD.to_string();
    let o = mrface(&["extract", s(&inputs), "--threshold", &th, "-o", s(&out)]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.csv").is_file());
    assert!(out.join("good/face.ply").is_file());

    std::fs::remove_file(inputs.join("good.nii.gz")).unwrap();
    let o = mrface(&["extract", s(&inputs), "--threshold", &th, "-o", s(&tmp.path().join("out2"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn calibrate_fits_the_shipped_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data");
    let model = tmp.path().join("model.json");
    let o = mrface(&["calibrate", s(&data.join("phantom_calibration.csv")), "-o", s(&model)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fitted = CalibrationModel::load(&model).unwrap();
    let shipped = CalibrationModel::load(data.join("phantom_calibration.json")).unwrap();
    assert!((fitted.w1 - shipped.w1).abs() < 1e-9);
    assert_eq!(fitted.n_samples, shipped.n_samples);

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "mean,max,threshold\n1,2,3\n").unwrap();
    assert_eq!(code(&mrface(&["calibrate", s(&bad), "-o", s(&model)])), 3);
}

#[test]
fn extract_then_landmark_reproduces_the_pipeline_landmarks() {
    let tmp = tempfile::tempdir().unwrap();
    let input = phantom(tmp.path(), "sub-7", 7);
    let out = tmp.path().join("out");
    let cal = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/phantom_calibration.json");
    let o = mrface(&["extract", s(&input), "--calibration", s(&cal), "-o", s(&out), "--snapshot"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.join("sub-7");
    assert!(dir.join("snapshot.png").is_file());

    let o = mrface(&["landmark", s(&dir.join("face.ply"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let placed = load_landmarks(&dir.join("face_landmarks.json")).unwrap();
    let from_pipeline = load_landmarks(&dir.join("landmarks.json")).unwrap();
    // face.ply stores f32 vertices, so the refit differs only by rounding effects
    assert_eq!(placed.names, from_pipeline.names);
    for (p, q) in placed.coords.iter().zip(&from_pipeline.coords) {
        let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        assert!(d < 0.25, "{d}");
    }
    assert_eq!(placed.subject_id, "sub-7");
    assert!(dir.join("face_landmarks.report.json").is_file());
    assert!(dir.join("face_landmarks.provenance.json").is_file());

    let csv = tmp.path().join("lm.csv");
    let o = mrface(&["landmark", s(&dir.join("face.ply")), "-o", s(&csv), "--id", "x"]);
    assert_eq!(code(&o), 0);
    let lm = load_landmarks(&csv).unwrap();
    assert_eq!(lm.len(), LANDMARK_NAMES.len());
    for (p, q) in lm.coords.iter().zip(&placed.coords) {
        assert!((0..3).all(|d| (p[d] - q[d]).abs() < 1e-9));
    }
}

#[test]
fn compare_rejects_empty_groups() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("a")).unwrap();
    std::fs::create_dir_all(tmp.path().join("b")).unwrap();
    let o = mrface(&[
        "compare",
        "--group-a",
        s(&tmp.path().join("a")),
        "--group-b",
        s(&tmp.path().join("b")),
        "-o",
        s(&tmp.path().join("c")),
    ]);
    assert_eq!(code(&o), 3);
}
