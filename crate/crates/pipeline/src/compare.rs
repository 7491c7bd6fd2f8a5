//! Two-group shape comparison shared by the CLI and the review service.

use std::path::{Path, PathBuf};

use mrface_core::mesh::Vec3;
use mrface_core::morphometrics::{
    edma, gpa, morphospace_iou, pca, prepare_groups, select_edma_biomarkers, select_gpa_biomarkers,
    top_significant_pairs, total_variance, EdmaReport, GroupSample, Point2, DEFAULT_ALPHA, DEFAULT_BOOTSTRAP,
};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, AtStage, PipelineError, Result, Stage};
use crate::extract::{pretty_json, LANDMARKS_FILE};
use crate::plots::{edma_plot_png, morphospace_png};
use crate::provenance::Provenance;

pub const GROUP_A: &str = "group_a";
pub const GROUP_B: &str = "group_b";
pub const DEFAULT_COMPONENTS: usize = 2;
pub const DEFAULT_SEED: u64 = 0;
/// Pairs listed when no `k` is requested.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareParams {
    pub alpha: f64,
    pub bootstrap: usize,
    pub components: usize,
    pub seed: u64,
    /// Number of EDMA biomarker pairs; out of range is an error when set.
    pub k: Option<usize>,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            bootstrap: DEFAULT_BOOTSTRAP,
            components: DEFAULT_COMPONENTS,
            seed: DEFAULT_SEED,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerGroup<T> {
    pub a: T,
    pub b: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpaAnalysis {
    pub ids: PerGroup<Vec<String>>,
    pub components: usize,
    /// Principal-component scores, one row per subject.
    pub scores: PerGroup<Vec<Vec<f64>>>,
    /// Convex hulls of the PC1-PC2 scores.
    pub hulls: PerGroup<Vec<Point2>>,
    pub hull_areas: PerGroup<f64>,
    pub intersection_area: f64,
    pub iou: f64,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub mean_shape: Vec<Vec3>,
    pub centroid_sizes: PerGroup<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Pooled Procrustes superimposition, PCA and PC1-PC2 hull overlap.
pub fn gpa_analysis(a: &GroupSample, b: &GroupSample, components: usize) -> mrface_core::Result<GpaAnalysis> {
    if components < 2 {
        return Err(mrface_core::Error::OutOfRange(format!(
            "components must be at least 2 for the PC1-PC2 morphospace, got {components}"
        )));
    }
    let mut configs = a.configs();
    configs.extend(b.configs());
    let g = pca(&gpa(&configs)?, components)?;
    let na = a.len();
    let pc12 = |rows: &[Vec<f64>]| rows.iter().map(|r| [r[0], r[1]]).collect::<Vec<Point2>>();
    let overlap = morphospace_iou(&pc12(&g.scores[..na]), &pc12(&g.scores[na..]))?;
    Ok(GpaAnalysis {
        ids: PerGroup {
            a: a.ids.clone(),
            b: b.ids.clone(),
        },
        components,
        scores: PerGroup {
            a: g.scores[..na].to_vec(),
            b: g.scores[na..].to_vec(),
        },
        hulls: PerGroup {
            a: overlap.hull_a,
            b: overlap.hull_b,
        },
        hull_areas: PerGroup {
            a: overlap.area_a,
            b: overlap.area_b,
        },
        intersection_area: overlap.intersection,
        iou: overlap.iou,
        total_variance: total_variance(&g),
        explained_variance: g.explained_variance,
        mean_shape: g.mean_shape,
        centroid_sizes: PerGroup {
            a: g.centroid_sizes[..na].to_vec(),
            b: g.centroid_sizes[na..].to_vec(),
        },
        iterations: g.iterations,
        converged: g.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPair {
    pub pair: usize,
    pub landmarks: (String, String),
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdmaAnalysis {
    #[serde(flatten)]
    pub report: EdmaReport,
    pub ids: PerGroup<Vec<String>>,
    pub names: Vec<String>,
    pub k: Option<usize>,
    /// Most different significant pairs, strongest first.
    pub top_pairs: Vec<RankedPair>,
    pub note: String,
}

/// Bootstrap EDMA plus the ranked biomarker pairs.
pub fn edma_analysis(a: &GroupSample, b: &GroupSample, p: &CompareParams) -> mrface_core::Result<EdmaAnalysis> {
    let report = edma(a, b, p.alpha, p.bootstrap, p.seed)?;
    let n_sig = report.significant_count();
    let top = match p.k {
        Some(k) => top_significant_pairs(&report, k)?,
        None if n_sig >= 2 => top_significant_pairs(&report, n_sig.min(DEFAULT_TOP_K))?,
        None => Vec::new(),
    };
    let top_pairs = top
        .iter()
        .map(|&i| {
            let (l, m) = report.pairs[i];
            RankedPair {
                pair: i,
                landmarks: (a.names[l].clone(), a.names[m].clone()),
                ratio: report.ratios[i],
                ci_low: report.ci_low[i],
                ci_high: report.ci_high[i],
            }
        })
        .collect();
    let note = format!(
        "ratios are mean distance in group A over group B; a pair is significant when its {}% bootstrap \
         interval excludes 1; with no correction for multiple comparisons about {}% of pairs are expected \
         to be significant between groups from one population",
        100.0 - p.alpha,
        p.alpha
    );
    Ok(EdmaAnalysis {
        ids: PerGroup {
            a: a.ids.clone(),
            b: b.ids.clone(),
        },
        names: a.names.clone(),
        k: p.k,
        top_pairs,
        note,
        report,
    })
}

/// Landmark files of a group folder: `*.json` / `*.csv` directly inside,
/// plus `<sub>/landmarks.json` of subject output folders. Sorted by path.
pub fn group_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    for e in rd.filter_map(|e| e.ok()) {
        let p = e.path();
        if p.is_dir() {
            let lm = p.join(LANDMARKS_FILE);
            if lm.is_file() {
                files.push(lm);
            }
        } else if matches!(p.extension().and_then(|x| x.to_str()), Some("json" | "csv")) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::Input(format!("no landmark files in {}", dir.display())));
    }
    Ok(files)
}

pub fn load_groups(dir_a: &Path, dir_b: &Path) -> Result<(GroupSample, GroupSample, Vec<PathBuf>, Vec<PathBuf>)> {
    let fa = group_files(dir_a)?;
    let fb = group_files(dir_b)?;
    let mut groups = prepare_groups(&[(GROUP_A.into(), fa.clone()), (GROUP_B.into(), fb.clone())])
        .map_err(|e| PipelineError::Input(e.to_string()))?;
    let b = groups.pop().expect("two groups");
    let a = groups.pop().expect("two groups");
    Ok((a, b, fa, fb))
}

pub const GPA_JSON: &str = "gpa.json";
pub const EDMA_JSON: &str = "edma.json";
pub const MORPHOSPACE_PNG: &str = "morphospace.png";
pub const EDMA_PNG: &str = "edma_distances.png";

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub gpa: GpaAnalysis,
    pub edma: EdmaAnalysis,
    pub files: Vec<PathBuf>,
}

fn analysis_err(e: mrface_core::Error) -> PipelineError {
    PipelineError::Input(format!("analysis failed: {e}"))
}

/// Run both analyses on two group folders and write reports, spreadsheets,
/// plots and provenance into `out_dir`.
pub fn compare_groups(dir_a: &Path, dir_b: &Path, params: &CompareParams, out_dir: &Path) -> Result<CompareOutput> {
    let (a, b, fa, fb) = load_groups(dir_a, dir_b)?;
    let g = gpa_analysis(&a, &b, params.components).map_err(analysis_err)?;
    let e = edma_analysis(&a, &b, params).map_err(analysis_err)?;

    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("group_a.csv".into(), a.to_csv().at(Stage::Write)?),
        ("group_b.csv".into(), b.to_csv().at(Stage::Write)?),
        (GPA_JSON.into(), pretty_json(&g)),
        (EDMA_JSON.into(), pretty_json(&e)),
    ];
    let pcs = select_gpa_biomarkers(&pca_view(&g), g.components).map_err(analysis_err)?;
    files.push(("gpa_biomarkers.csv".into(), biomarker_csv(&a, &b, &pcs, |c| format!("PC{}", c + 1))));
    if !e.top_pairs.is_empty() {
        let d = select_edma_biomarkers(&e.report, &[&a, &b], e.top_pairs.len()).map_err(analysis_err)?;
        files.push((
            "edma_biomarkers.csv".into(),
            biomarker_csv(&a, &b, &d, |c| {
                let (l, m) = &e.top_pairs[c].landmarks;
                format!("{l}-{m}")
            }),
        ));
    }
    files.push((MORPHOSPACE_PNG.into(), morphospace_png(&g)?));
    files.push((EDMA_PNG.into(), edma_plot_png(&g.mean_shape, &e)?));

    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut prov = Provenance::bare();
    for (group, list, dir) in [(GROUP_A, &fa, dir_a), (GROUP_B, &fb, dir_b)] {
        for f in list {
            let bytes = std::fs::read(f).map_err(io_err(f))?;
            let rel = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
            prov.input(&format!("{group}/{rel}"), &bytes);
        }
    }
    prov.param("compare", params);
    let mut written = Vec::new();
    for (name, bytes) in &files {
        let p = out_dir.join(name);
        std::fs::write(&p, bytes).map_err(io_err(&p))?;
        prov.output(name, bytes);
        written.push(p);
    }
    let p = out_dir.join("provenance.json");
    std::fs::write(&p, pretty_json(&prov)).map_err(io_err(&p))?;
    written.push(p);
    Ok(CompareOutput {
        gpa: g,
        edma: e,
        files: written,
    })
}

/// Scores and variances of an analysis, in the shape the biomarker selector takes.
fn pca_view(g: &GpaAnalysis) -> mrface_core::morphometrics::GpaResult {
    let mut scores = g.scores.a.clone();
    scores.extend(g.scores.b.iter().cloned());
    mrface_core::morphometrics::GpaResult {
        mean_shape: g.mean_shape.clone(),
        procrustes_coords: Vec::new(),
        centroid_sizes: Vec::new(),
        loadings: Vec::new(),
        scores,
        explained_variance: g.explained_variance.clone(),
        iterations: g.iterations,
        converged: g.converged,
    }
}

fn biomarker_csv(a: &GroupSample, b: &GroupSample, rows: &[Vec<f64>], col: impl Fn(usize) -> String) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let width = rows.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string(), "group".to_string()];
    header.extend((0..width).map(col));
    w.write_record(&header).expect("in-memory csv");
    let labels = a.ids.iter().map(|i| (i, GROUP_A)).chain(b.ids.iter().map(|i| (i, GROUP_B)));
    for ((id, group), row) in labels.zip(rows) {
        let mut rec = vec![id.clone(), group.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}
