use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrface_core::landmarks::{transfer_with, write_landmarks, LandmarkFormat, LandmarkTemplate, TransferOptions, REVIEW_GATE_MM};
use mrface_core::mesh::{read_ply, CropSpec};
use mrface_core::reconstruct::{fit_calibration, read_samples_csv};
use mrface_pipeline::compare::{DEFAULT_COMPONENTS, DEFAULT_SEED};
use mrface_pipeline::provenance::Provenance;
use mrface_pipeline::{
    compare_groups, run_batch, run_subject, BatchStatus, CompareParams, ConfigOverrides, PipelineConfig, PipelineError,
    Seeds,
};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "mrface", version, about = "Facial surfaces and landmarks from head MRI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract face mesh and landmarks from one volume or a folder of volumes.
    Extract(ExtractArgs),
    /// Fit a threshold model from a CSV of mean,max,threshold rows.
    Calibrate {
        samples: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Transfer template landmarks onto a face mesh.
    Landmark(LandmarkArgs),
    /// Compare two groups of landmark files with GPA/PCA and EDMA.
    Compare(CompareArgs),
    /// Serve a workspace to the review UI.
    Serve {
        #[arg(long, default_value_t = mrface_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        workspace: PathBuf,
    },
}

#[derive(Args)]
struct ExtractArgs {
    /// A .nii/.nii.gz file, or a folder for batch mode.
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "calibration")]
    threshold: Option<f64>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Crop band as thY,thZ_low,thZ_high in mm.
    #[arg(long, value_parser = parse_crop)]
    crop: Option<CropSpec>,
    #[arg(long)]
    no_fine_alignment: bool,
    /// Apply the full similarity of the control-point fit, not only its rigid part.
    #[arg(long)]
    similarity: bool,
    #[arg(long)]
    smooth_remesh: bool,
    #[arg(long)]
    snapshot: bool,
    /// Threshold statistics from the raw instead of the enhanced volume.
    #[arg(long)]
    raw_stats: bool,
    #[arg(long)]
    template: Option<PathBuf>,
}

#[derive(Args)]
struct LandmarkArgs {
    face: PathBuf,
    /// Template directory; the bundled template when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Output file; .csv selects CSV. Defaults to <face>_landmarks.json beside the mesh.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = Seeds::default().landmarks)]
    seed: u64,
    #[arg(long, default_value_t = REVIEW_GATE_MM)]
    review_gate: f64,
    /// Subject id; defaults to the file stem, or the folder name for face.ply.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    group_a: PathBuf,
    #[arg(long)]
    group_b: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    components: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Number of EDMA biomarker pairs; by default up to 10 significant pairs.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(short, long, default_value = "compare")]
    output: PathBuf,
}

fn parse_crop(s: &str) -> Result<CropSpec, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [y, lo, hi] => CropSpec::new(y, lo, hi).map_err(|e| e.to_string()),
        _ => Err("expected thY,thZ_low,thZ_high".into()),
    }
}

/// Failure with its exit code.
struct Failure(u8, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        };
        Failure(code, e.to_string())
    }
}

impl From<mrface_core::Error> for Failure {
    fn from(e: mrface_core::Error) -> Self {
        Failure(EXIT_FAILURE, e.to_string())
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure(EXIT_FAILURE, format!("{}: {e}", path.display()))
}

fn extract(a: ExtractArgs) -> Result<u8, Failure> {
    let base = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let cfg = base.apply(&ConfigOverrides {
        calibration: a.calibration,
        threshold: a.threshold,
        crop: a.crop,
        no_fine_alignment: a.no_fine_alignment,
        similarity: a.similarity,
        smooth_remesh: a.smooth_remesh,
        save_snapshot: a.snapshot,
        raw_stats: a.raw_stats,
        template: a.template,
        output_dir: a.output,
    });
    cfg.validate()?;
    if a.input.is_dir() {
        let summary = run_batch(&a.input, &cfg)?;
        for row in summary.rows.iter().filter(|r| r.error.is_some()) {
            log::error!("{}: {}", row.subject, row.error.as_deref().unwrap_or(""));
        }
        println!(
            "{} subjects, {} failed; summary in {}",
            summary.rows.len(),
            summary.failures(),
            cfg.output_dir.display()
        );
        return Ok(match summary.status() {
            BatchStatus::Success => 0,
            BatchStatus::Partial => EXIT_PARTIAL,
            BatchStatus::AllFailed => EXIT_FAILURE,
        });
    }
    let out = run_subject(&a.input, &cfg)?;
    let r = &out.report;
    for w in &r.warnings {
        log::warn!("{}: {w}", r.subject_id);
    }
    println!(
        "{}: threshold {:.3}, residual {:.3} mm{} -> {}",
        r.subject_id,
        r.threshold.threshold,
        r.landmarks.icp_residual,
        if r.landmarks.needs_review { " (needs review)" } else { "" },
        out.dir.display()
    );
    Ok(0)
}

fn calibrate(samples: &Path, output: &Path) -> Result<u8, Failure> {
    let f = std::fs::File::open(samples).map_err(io(samples))?;
    let model = fit_calibration(&read_samples_csv(f)?)?;
    std::fs::write(output, model.to_json()?).map_err(io(output))?;
    println!(
        "th = {:.6} + {:.6} mean + {:.6} max; r = {:.4} over {} samples",
        model.w0, model.w1, model.w2, model.fit_r, model.n_samples
    );
    Ok(0)
}

fn landmark(a: LandmarkArgs) -> Result<u8, Failure> {
    let bytes = std::fs::read(&a.face).map_err(io(&a.face))?;
    let face = read_ply(&bytes)?;
    let (template, template_bytes) = match &a.template {
        Some(dir) => (LandmarkTemplate::load(dir)?, Some(dir)),
        None => (LandmarkTemplate::builtin(), None),
    };
    let stem = a.face.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let id = a.id.unwrap_or_else(|| match a.face.parent().and_then(|p| p.file_name()) {
        Some(dir) if stem == "face" => dir.to_string_lossy().into_owned(),
        _ => stem.clone(),
    });
    let opts = TransferOptions {
        seed: a.seed,
        review_gate: a.review_gate,
        ..Default::default()
    };
    let mut t = transfer_with(&face, &template.mesh, &template.landmarks, &opts)?;
    t.landmarks.subject_id = id.clone();

    let output = a
        .output
        .unwrap_or_else(|| a.face.with_file_name(format!("{stem}_landmarks.json")));
    let format = match output.extension().and_then(|e| e.to_str()) {
        Some("csv") => LandmarkFormat::Csv,
        _ => LandmarkFormat::Json,
    };
    let sidecar = |suffix: &str| {
        let s = output.file_stem().unwrap_or_default().to_string_lossy();
        output.with_file_name(format!("{s}.{suffix}.json"))
    };
    let lm_bytes = write_landmarks(&t.landmarks, format)?;
    let report = serde_json::json!({
        "subject_id": id,
        "count": t.landmarks.len(),
        "icp_residual": t.residual,
        "needs_review": t.needs_review,
        "review_gate": a.review_gate,
        "transform": t.transform,
    });
    let report_bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    let mut prov = Provenance::bare();
    prov.input("face", &bytes);
    if let Some(dir) = template_bytes {
        prov.param("template", &dir.file_name().unwrap_or_default().to_string_lossy());
    } else {
        prov.param("template", "builtin");
    }
    prov.param("seed", &a.seed);
    prov.param("review_gate", &a.review_gate);
    let report_path = sidecar("report");
    for (p, b) in [(&output, &lm_bytes), (&report_path, &report_bytes)] {
        std::fs::write(p, b).map_err(io(p))?;
        prov.output(&p.file_name().unwrap_or_default().to_string_lossy(), b);
    }
    let prov_path = sidecar("provenance");
    let prov_bytes = serde_json::to_vec_pretty(&prov).expect("provenance serializes");
    std::fs::write(&prov_path, prov_bytes).map_err(io(&prov_path))?;
    println!(
        "{id}: {} landmarks, residual {:.3} mm{} -> {}",
        t.landmarks.len(),
        t.residual,
        if t.needs_review { " (needs review)" } else { "" },
        output.display()
    );
    Ok(0)
}

fn compare(a: CompareArgs) -> Result<u8, Failure> {
    let params = CompareParams {
        alpha: a.alpha,
        bootstrap: a.bootstrap,
        components: a.components,
        seed: a.seed,
        k: a.top_k,
    };
    let out = compare_groups(&a.group_a, &a.group_b, &params, &a.output)?;
    println!(
        "IoU {:.4}; {} of {} distances significant ({:.1}%) -> {}",
        out.gpa.iou,
        out.edma.report.significant_count(),
        out.edma.report.pairs.len(),
        out.edma.report.percent_significant,
        a.output.display()
    );
    Ok(0)
}

fn serve(port: u16, workspace: &Path) -> Result<u8, Failure> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure(EXIT_FAILURE, e.to_string()))?;
    rt.block_on(mrface_service::serve(workspace, port))
        .map_err(|e| Failure(EXIT_FAILURE, e.to_string()))?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => extract(a),
        Command::Calibrate { samples, output } => calibrate(&samples, &output),
        Command::Landmark(a) => landmark(a),
        Command::Compare(a) => compare(a),
        Command::Serve { port, workspace } => serve(port, &workspace),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
