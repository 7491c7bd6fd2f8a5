use std::path::{Path, PathBuf};

use mrface_core::phantom::{head_phantom, HeadParams, ScanOptions, CLEAN_THRESHOLD};
use mrface_core::reconstruct::CalibrationModel;
use mrface_core::volume::{reorient, save_nifti, AxisMap};
use mrface_pipeline::extract::{FACE_FILE, LANDMARKS_FILE, PROVENANCE_FILE, REPORT_FILE, SNAPSHOT_FILE};
use mrface_pipeline::{run_batch, run_subject, BatchStatus, PipelineConfig, PipelineError, Stage, SubjectStatus};

fn calibration_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/phantom_calibration.json")
}

/// Phantom head written as NIfTI, stored in a non-head axis order.
fn write_phantom(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let scan = ScanOptions {
        seed,
        ..Default::default()
    };
    let v = head_phantom(&HeadParams::sample(seed), &scan).unwrap();
    let v = reorient(&v, AxisMap::from_label("RPI").unwrap());
    let p = dir.join(format!("{name}.nii.gz"));
    save_nifti(&v, &p).unwrap();
    p
}

fn config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        threshold: Some(CLEAN_THRESHOLD),
        output_dir: out.to_path_buf(),
        ..Default::default()
    }
}

fn read(dir: &Path, f: &str) -> Vec<u8> {
    std::fs::read(dir.join(f)).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_phantom(tmp.path(), "sub-01", 11);
    let mut cfg = config(&tmp.path().join("a"));
    cfg.save_snapshot = true;
    let a = run_subject(&input, &cfg).unwrap();
    cfg.output_dir = tmp.path().join("b");
    let b = run_subject(&input, &cfg).unwrap();
    for f in [FACE_FILE, LANDMARKS_FILE, REPORT_FILE, PROVENANCE_FILE, SNAPSHOT_FILE] {
        assert_eq!(read(&a.dir, f), read(&b.dir, f), "{f}");
    }
    assert_eq!(a.dir.file_name().unwrap(), "sub-01");
    let r = &a.report;
    assert_eq!(r.landmarks.count, 20);
    assert!(!r.landmarks.needs_review, "residual {}", r.landmarks.icp_residual);
    assert!(r.head.alignment.is_some());
    assert!(r.head.components_after >= 1 && r.head.components_after <= r.head.components_before);
    assert_eq!(r.volume.stored_orientation, "RPI");
    assert!(r.threshold.valid);
}

#[test]
fn calibrated_threshold_is_used_and_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_phantom(tmp.path(), "s", 5);
    let cfg = PipelineConfig {
        calibration: Some(calibration_path()),
        output_dir: tmp.path().join("out"),
        ..Default::default()
    };
    let out = run_subject(&input, &cfg).unwrap();
    let t = out.report.threshold;
    assert!(t.valid && t.mean < t.threshold && t.threshold < t.max);
    let model = CalibrationModel::load(calibration_path()).unwrap();
    assert_eq!(t.threshold, model.predict(t.mean, t.max));
}

#[test]
fn invalid_prediction_aborts_with_guidance() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_phantom(tmp.path(), "s", 5);
    let model = tmp.path().join("bad.json");
    std::fs::write(&model, CalibrationModel::explicit(1e6, 0.0, 0.0).to_json().unwrap()).unwrap();
    let cfg = PipelineConfig {
        calibration: Some(model),
        output_dir: tmp.path().join("out"),
        ..Default::default()
    };
    let err = run_subject(&input, &cfg).unwrap_err();
    assert!(matches!(err, PipelineError::InvalidThreshold { .. }));
    assert_eq!(err.stage(), Some(Stage::Threshold));
    assert!(err.to_string().contains("--threshold"));
    assert!(!tmp.path().join("out/s").exists());
}

#[test]
fn missing_threshold_source_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        output_dir: tmp.path().to_path_buf(),
        ..Default::default()
    };
    let err = run_subject(Path::new("/nonexistent.nii"), &cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)));
}

#[test]
fn optional_stages_leave_upstream_outputs_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_phantom(tmp.path(), "s", 3);
    let base = run_subject(&input, &config(&tmp.path().join("base"))).unwrap();

    let mut snap = config(&tmp.path().join("snap"));
    snap.save_snapshot = true;
    let with_snap = run_subject(&input, &snap).unwrap();
    assert_eq!(read(&base.dir, FACE_FILE), read(&with_snap.dir, FACE_FILE));
    assert_eq!(read(&base.dir, LANDMARKS_FILE), read(&with_snap.dir, LANDMARKS_FILE));
    assert!(!base.dir.join(SNAPSHOT_FILE).exists());

    let mut smooth = config(&tmp.path().join("smooth"));
    smooth.smooth_remesh = true;
    let smoothed = run_subject(&input, &smooth).unwrap();
    assert_eq!(base.head, smoothed.head);
    assert_ne!(base.face, smoothed.face);
    assert!(smoothed.report.face.smoothed);
}

#[test]
fn skipping_fine_alignment_keeps_the_centred_head() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_phantom(tmp.path(), "s", 3);
    let mut cfg = config(tmp.path());
    cfg.fine_alignment = false;
    let out = run_subject(&input, &cfg).unwrap();
    assert!(out.report.head.alignment.is_none());
    // the phantom is generated head-centred, so the centred head is already
    // close to the canonical frame and landmarks still transfer
    assert_eq!(out.report.landmarks.count, 20);
}

#[test]
fn batch_isolates_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    std::fs::create_dir(&inputs).unwrap();
    write_phantom(&inputs, "a", 1);
    write_phantom(&inputs, "b", 2);
    std::fs::write(inputs.join("c.nii"), b"not a volume").unwrap();
    std::fs::write(inputs.join("notes.txt"), b"ignored").unwrap();
    let cfg = config(&tmp.path().join("out"));
    let s = run_batch(&inputs, &cfg).unwrap();
    assert_eq!(s.rows.len(), 3);
    assert_eq!(s.status(), BatchStatus::Partial);
    assert_eq!(s.failures(), 1);
    let c = s.rows.iter().find(|r| r.subject == "c").unwrap();
    assert_eq!(c.status, SubjectStatus::Failed);
    assert_eq!(c.stage.as_deref(), Some("load"));
    let csv = std::fs::read_to_string(tmp.path().join("out/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("subject,status,threshold,threshold_valid,residual"));
    assert!(tmp.path().join("out/a/face.ply").exists());
}

#[test]
fn empty_batch_folder_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run_batch(tmp.path(), &config(&tmp.path().join("out"))).unwrap_err();
    assert!(matches!(err, PipelineError::Input(_)));
}
