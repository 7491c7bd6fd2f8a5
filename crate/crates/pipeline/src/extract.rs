//! Per-subject processing: volume to face mesh and landmarks.

use std::path::{Path, PathBuf};

use mrface_core::enhance::{enhance_volume, ReferenceHistogram};
use mrface_core::landmarks::{
    builtin_cp_ref, control_points, transfer_with, write_landmarks, LandmarkFormat, LandmarkSet, LandmarkTemplate,
    Transfer, TransferOptions,
};
use mrface_core::mesh::{
    ambient_occlusion, apply_transform, center_mesh, connected_components, crop_face, empty_interior,
    estimate_similarity, fill_holes, remove_small_components, taubin_smooth, write_ply, CropSpec, PlyFormat,
    SimilarityTransform, TriMesh, TAUBIN_ITERS, TAUBIN_LAMBDA, TAUBIN_MU,
};
use mrface_core::reconstruct::{extract_isosurface, intensity_stats, predict_threshold, CalibrationModel};
use mrface_core::volume::{parse_nifti, reorient, AxisMap, Volume};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{io_err, AtStage, PipelineError, Result, Stage};
use crate::provenance::{sha256_hex, Provenance};
use crate::snapshot::snapshot_png;

/// Component size rule: keep pieces at least this fraction of the largest.
pub const COMPONENT_FRACTION: f64 = 0.9;
/// Quality band removed as interior.
pub const INTERIOR_QUALITY: (f64, f64) = (0.0, 0.25);

/// Template, reference control points, reference histogram and calibration
/// resolved from a configuration.
#[derive(Debug, Clone)]
pub struct Resources {
    pub template: LandmarkTemplate,
    pub cp_ref: LandmarkSet,
    pub reference: ReferenceHistogram,
    pub calibration: Option<CalibrationModel>,
}

impl Resources {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let template = match &cfg.template {
            Some(dir) => LandmarkTemplate::load(dir).map_err(|e| PipelineError::Config(format!("template: {e}")))?,
            None => LandmarkTemplate::builtin(),
        };
        let cp_ref = if cfg.template.is_some() {
            LandmarkSet::new(template.control_names.clone(), template.control_coords(), "reference")
                .map_err(|e| PipelineError::Config(e.to_string()))?
        } else {
            builtin_cp_ref()
        };
        let reference = match &cfg.reference_histogram {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(io_err(p))?;
                ReferenceHistogram::from_json(&text).map_err(|e| PipelineError::Config(format!("reference histogram: {e}")))?
            }
            None => ReferenceHistogram::builtin(),
        };
        let calibration = match &cfg.calibration {
            Some(p) => Some(CalibrationModel::load(p).map_err(|e| PipelineError::Config(format!("calibration: {e}")))?),
            None => None,
        };
        Ok(Self {
            template,
            cp_ref,
            reference,
            calibration,
        })
    }

    /// Default crop anchored on the reference nose tip.
    pub fn default_crop(&self) -> CropSpec {
        let nose = self
            .cp_ref
            .get("nose_tip")
            .or_else(|| self.template.landmarks.get("nose_tip"))
            .unwrap_or([0.0; 3]);
        CropSpec::around_nose_tip(nose)
    }
}

/// Subject id from a NIfTI path: the file name without `.nii` / `.nii.gz`.
pub fn subject_id(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("subject");
    name.strip_suffix(".gz")
        .unwrap_or(name)
        .strip_suffix(".nii")
        .unwrap_or_else(|| name.strip_suffix(".gz").unwrap_or(name))
        .to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeReport {
    pub input: String,
    pub input_sha256: String,
    pub stored_orientation: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub bias_iterations: usize,
    pub bias_converged: bool,
    pub bias_shift: f64,
}

/// A loaded, reoriented and enhanced volume.
#[derive(Debug, Clone)]
pub struct PreparedVolume {
    pub subject_id: String,
    pub raw: Volume,
    pub enhanced: Volume,
    pub report: VolumeReport,
    pub warnings: Vec<String>,
}

/// Read a NIfTI file, reorient it to the head frame and enhance it.
pub fn prepare_volume(path: &Path, res: &Resources) -> Result<PreparedVolume> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let gz = bytes.starts_with(&[0x1f, 0x8b]);
    let loaded = parse_nifti(&bytes, gz).at(Stage::Load)?;
    let mut warnings = loaded.warnings;
    let stored = loaded.value.orientation;
    let raw = reorient(&loaded.value, AxisMap::HEAD);
    let enhanced = enhance_volume(&raw, &res.reference).at(Stage::Enhance)?;
    warnings.extend(enhanced.warnings);
    let e = enhanced.value;
    Ok(PreparedVolume {
        subject_id: subject_id(path),
        report: VolumeReport {
            input: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            input_sha256: sha256_hex(&bytes),
            stored_orientation: stored.label(),
            dims: raw.dims,
            spacing: raw.spacing,
            bias_iterations: e.bias_iterations,
            bias_converged: e.bias_converged,
            bias_shift: e.bias_shift,
        },
        raw,
        enhanced: e.volume,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Explicit,
    Calibration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdDecision {
    pub threshold: f64,
    pub source: ThresholdSource,
    /// mean < threshold < max of the statistics volume.
    pub valid: bool,
    pub mean: f64,
    pub max: f64,
    pub stats_on_raw: bool,
}

/// The calibrated prediction, or `None` without a calibration model.
pub fn predicted_threshold(prep: &PreparedVolume, res: &Resources, raw_stats: bool) -> Result<Option<ThresholdDecision>> {
    let Some(model) = &res.calibration else {
        return Ok(None);
    };
    let (mean, max) = intensity_stats(if raw_stats { &prep.raw } else { &prep.enhanced }).at(Stage::Threshold)?;
    let (threshold, valid) = predict_threshold(model, mean, max);
    Ok(Some(ThresholdDecision {
        threshold,
        source: ThresholdSource::Calibration,
        valid,
        mean,
        max,
        stats_on_raw: raw_stats,
    }))
}

/// Explicit threshold if configured, otherwise the calibrated prediction.
/// An invalid prediction is an error; an explicit threshold is always used.
pub fn decide_threshold(prep: &PreparedVolume, cfg: &PipelineConfig, res: &Resources) -> Result<ThresholdDecision> {
    if let Some(th) = cfg.threshold {
        let (mean, max) = intensity_stats(if cfg.raw_stats { &prep.raw } else { &prep.enhanced }).at(Stage::Threshold)?;
        return Ok(ThresholdDecision {
            threshold: th,
            source: ThresholdSource::Explicit,
            valid: th.is_finite() && mean < th && th < max,
            mean,
            max,
            stats_on_raw: cfg.raw_stats,
        });
    }
    let d = predicted_threshold(prep, res, cfg.raw_stats)?
        .ok_or_else(|| PipelineError::Config("no threshold source configured".into()))?;
    if !d.valid {
        return Err(PipelineError::InvalidThreshold {
            threshold: d.threshold,
            mean: d.mean,
            max: d.max,
        });
    }
    Ok(d)
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedPoint {
    pub name: String,
    pub xyz: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentReport {
    pub transform: SimilarityTransform,
    pub rigid_only: bool,
    pub control_points: Vec<NamedPoint>,
    pub icp_residual: f64,
    pub needs_review: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeadReport {
    pub isosurface_vertices: usize,
    pub isosurface_triangles: usize,
    pub components_before: usize,
    pub components_after: usize,
    pub centering_shift: [f64; 3],
    pub alignment: Option<AlignmentReport>,
    pub occlusion_rays: usize,
    pub occlusion_seed: u64,
    pub interior_vertices_removed: usize,
    pub head_vertices: usize,
}

#[derive(Debug, Clone)]
pub struct HeadResult {
    /// Cleaned, centred, optionally aligned head with interior removed.
    pub head: TriMesh,
    pub report: HeadReport,
    pub warnings: Vec<String>,
}

/// Isosurface through interior removal.
pub fn build_head(enhanced: &Volume, threshold: f64, cfg: &PipelineConfig, res: &Resources) -> Result<HeadResult> {
    let iso = extract_isosurface(enhanced, threshold);
    let mut warnings = iso.warnings;
    let iso = iso.value;
    if iso.is_empty() {
        return Err(PipelineError::Stage {
            stage: Stage::Isosurface,
            source: mrface_core::Error::EmptyMesh,
        });
    }
    let (_, components_before) = connected_components(&iso);
    let cleaned = remove_small_components(&iso, COMPONENT_FRACTION);
    let (_, components_after) = connected_components(&cleaned);
    let (centered, shift) = center_mesh(&cleaned).at(Stage::Clean)?;

    let (aligned, alignment) = if cfg.fine_alignment {
        let (mesh, report) = fine_align(&centered, cfg, res)?;
        (mesh, Some(report))
    } else {
        (centered, None)
    };

    let ao = ambient_occlusion(&aligned, cfg.occlusion_rays, cfg.seeds.occlusion).at(Stage::Occlusion)?;
    warnings.extend(ao.warnings);
    let emptied = empty_interior(&ao.value, INTERIOR_QUALITY.0, INTERIOR_QUALITY.1).at(Stage::Occlusion)?;
    warnings.extend(emptied.warnings);
    let mut head = emptied.value;
    let removed = aligned.vertices.len() - head.vertices.len();
    head.quality = None;
    Ok(HeadResult {
        report: HeadReport {
            isosurface_vertices: iso.vertices.len(),
            isosurface_triangles: iso.triangles.len(),
            components_before,
            components_after,
            centering_shift: shift,
            alignment,
            occlusion_rays: cfg.occlusion_rays,
            occlusion_seed: cfg.seeds.occlusion,
            interior_vertices_removed: removed,
            head_vertices: head.vertices.len(),
        },
        head,
        warnings,
    })
}

/// Locate the control points on the head by template transfer, then move
/// the head so they match the reference control points.
fn fine_align(head: &TriMesh, cfg: &PipelineConfig, res: &Resources) -> Result<(TriMesh, AlignmentReport)> {
    let reference = res.template.head.as_ref().unwrap_or(&res.template.mesh);
    let transfer = transfer_with(
        head,
        reference,
        &res.template.landmarks,
        &TransferOptions {
            seed: cfg.seeds.alignment,
            review_gate: cfg.review_gate,
            ..Default::default()
        },
    )
    .at(Stage::Align)?;
    let cp_in = control_points(&transfer.landmarks, &res.template).at(Stage::Align)?;
    let cp_ref: Vec<_> = res
        .template
        .control_names
        .iter()
        .map(|n| res.cp_ref.get(n).ok_or_else(|| mrface_core::Error::MissingLandmark(n.clone())))
        .collect::<mrface_core::Result<_>>()
        .at(Stage::Align)?;
    let xf = estimate_similarity(&cp_in, &cp_ref).at(Stage::Align)?;
    let aligned = apply_transform(head, &xf, cfg.rigid_only);
    let control_points = res
        .template
        .control_names
        .iter()
        .zip(cp_in)
        .map(|(name, xyz)| NamedPoint { name: name.clone(), xyz })
        .collect();
    Ok((
        aligned,
        AlignmentReport {
            transform: xf,
            rigid_only: cfg.rigid_only,
            control_points,
            icp_residual: transfer.residual,
            needs_review: transfer.needs_review,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct FaceReport {
    pub crop: CropSpec,
    pub smoothed: bool,
    pub holes_filled: usize,
    pub vertices: usize,
    pub triangles: usize,
}

/// Crop the face out of the head and optionally smooth and close holes.
pub fn extract_face(head: &TriMesh, crop: &CropSpec, smooth_remesh: bool) -> Result<(TriMesh, FaceReport)> {
    let mut face = crop_face(head, crop).at(Stage::Crop)?;
    let mut holes_filled = 0;
    if smooth_remesh {
        face = taubin_smooth(&face, TAUBIN_LAMBDA, TAUBIN_MU, TAUBIN_ITERS).at(Stage::Smooth)?;
        let (filled, n) = fill_holes(&face, crop).at(Stage::Smooth)?;
        face = filled;
        holes_filled = n;
    }
    let report = FaceReport {
        crop: *crop,
        smoothed: smooth_remesh,
        holes_filled,
        vertices: face.vertices.len(),
        triangles: face.triangles.len(),
    };
    Ok((face, report))
}

/// Template landmarks transferred onto a face, labelled with the subject.
pub fn place_landmarks(face: &TriMesh, subject_id: &str, cfg: &PipelineConfig, res: &Resources) -> Result<Transfer> {
    let mut t = transfer_with(
        face,
        &res.template.mesh,
        &res.template.landmarks,
        &TransferOptions {
            seed: cfg.seeds.landmarks,
            review_gate: cfg.review_gate,
            ..Default::default()
        },
    )
    .at(Stage::Landmarks)?;
    t.landmarks.subject_id = subject_id.to_string();
    Ok(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct LandmarkReport {
    pub count: usize,
    pub icp_residual: f64,
    pub needs_review: bool,
    pub review_gate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Flags {
    pub fine_alignment: bool,
    pub rigid_only: bool,
    pub smooth_remesh: bool,
    pub save_snapshot: bool,
}

/// Every decision taken for one subject.
#[derive(Debug, Clone, Serialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub volume: VolumeReport,
    pub threshold: ThresholdDecision,
    pub head: HeadReport,
    pub face: FaceReport,
    pub landmarks: LandmarkReport,
    pub flags: Flags,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SubjectOutput {
    pub dir: PathBuf,
    pub face_ply: PathBuf,
    pub landmarks: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub report: SubjectReport,
    pub face: TriMesh,
    pub head: TriMesh,
    pub transfer: Transfer,
}

pub const FACE_FILE: &str = "face.ply";
pub const LANDMARKS_FILE: &str = "landmarks.json";
pub const SNAPSHOT_FILE: &str = "snapshot.png";
pub const REPORT_FILE: &str = "report.json";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Run the whole chain for one NIfTI file, writing into
/// `<output_dir>/<subject id>/`.
pub fn run_subject(path: &Path, cfg: &PipelineConfig) -> Result<SubjectOutput> {
    cfg.validate()?;
    let res = Resources::load(cfg)?;
    run_subject_with(path, cfg, &res)
}

/// [`run_subject`] with resources already loaded.
pub fn run_subject_with(path: &Path, cfg: &PipelineConfig, res: &Resources) -> Result<SubjectOutput> {
    let prep = prepare_volume(path, res)?;
    run_prepared(&prep, cfg, res)
}

/// Everything after enhancement, for callers that cache the enhanced volume.
pub fn run_prepared(prep: &PreparedVolume, cfg: &PipelineConfig, res: &Resources) -> Result<SubjectOutput> {
    let mut warnings = prep.warnings.clone();
    let threshold = decide_threshold(prep, cfg, res)?;
    if !threshold.valid {
        warnings.push(format!(
            "threshold {} lies outside (mean {:.3}, max {:.3})",
            threshold.threshold, threshold.mean, threshold.max
        ));
    }
    let head = build_head(&prep.enhanced, threshold.threshold, cfg, res)?;
    warnings.extend(head.warnings.iter().cloned());
    let crop = cfg.crop.unwrap_or_else(|| res.default_crop());
    let (face, face_report) = extract_face(&head.head, &crop, cfg.smooth_remesh)?;
    let transfer = place_landmarks(&face, &prep.subject_id, cfg, res)?;

    let dir = cfg.output_dir.join(&prep.subject_id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut files: Vec<(String, Vec<u8>)> = vec![
        (FACE_FILE.into(), write_ply(&face, PlyFormat::BinaryLittleEndian)),
        (
            LANDMARKS_FILE.into(),
            write_landmarks(&transfer.landmarks, LandmarkFormat::Json).at(Stage::Write)?,
        ),
    ];
    if cfg.save_snapshot {
        files.push((SNAPSHOT_FILE.into(), snapshot_png(&face).map_err(|e| match e {
            PipelineError::Input(m) => PipelineError::Stage {
                stage: Stage::Snapshot,
                source: mrface_core::Error::InvalidArgument(m),
            },
            other => other,
        })?));
    }
    let report = SubjectReport {
        subject_id: prep.subject_id.clone(),
        volume: prep.report.clone(),
        threshold,
        head: head.report.clone(),
        face: face_report,
        landmarks: LandmarkReport {
            count: transfer.landmarks.len(),
            icp_residual: transfer.residual,
            needs_review: transfer.needs_review,
            review_gate: cfg.review_gate,
        },
        flags: Flags {
            fine_alignment: cfg.fine_alignment,
            rigid_only: cfg.rigid_only,
            smooth_remesh: cfg.smooth_remesh,
            save_snapshot: cfg.save_snapshot,
        },
        warnings,
        outputs: files.iter().map(|(n, _)| n.clone()).chain([REPORT_FILE.to_string()]).collect(),
    };
    files.push((REPORT_FILE.into(), pretty_json(&report)));

    let mut prov = Provenance::new(&prep.report.input_sha256, cfg);
    prov.param("threshold", &report.threshold);
    prov.param("crop", &crop);
    prov.param("seeds", &cfg.seeds);
    prov.param("occlusion_rays", &cfg.occlusion_rays);
    prov.param("component_fraction", &COMPONENT_FRACTION);
    prov.param("interior_quality", &INTERIOR_QUALITY);
    for (name, bytes) in &files {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(io_err(&p))?;
        prov.output(name, bytes);
    }
    let p = dir.join(PROVENANCE_FILE);
    std::fs::write(&p, pretty_json(&prov)).map_err(io_err(&p))?;

    Ok(SubjectOutput {
        face_ply: dir.join(FACE_FILE),
        landmarks: dir.join(LANDMARKS_FILE),
        snapshot: cfg.save_snapshot.then(|| dir.join(SNAPSHOT_FILE)),
        dir,
        report,
        face,
        head: head.head,
        transfer,
    })
}

pub(crate) fn pretty_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("report serializes");
    s.push(b'\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subject_ids() {
        assert_eq!(subject_id(Path::new("/a/sub-01.nii.gz")), "sub-01");
        assert_eq!(subject_id(Path::new("x.nii")), "x");
        assert_eq!(subject_id(Path::new("scan.gz")), "scan");
        assert_eq!(subject_id(Path::new("plain")), "plain");
    }
}
