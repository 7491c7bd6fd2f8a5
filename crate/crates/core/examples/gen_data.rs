//! Regenerates the bundled reference data under `crates/core/data`.
//!
//! cargo run -p mrface-core --example gen_data [spacing]

use std::path::Path;
use std::time::Instant;

use mrface_core::enhance::ReferenceHistogram;
use mrface_core::landmarks::{write_landmarks, LandmarkFormat, LandmarkSet};
use mrface_core::reconstruct::fit_calibration;
use mrface_core::phantom;

fn main() -> mrface_core::Result<()> {
    let spacing: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");

    let t = Instant::now();
    let hist = phantom::reference_histogram(256)?;
    std::fs::write(data.join("reference_histogram.json"), hist.to_json()?)?;
    eprintln!("histogram {:?}", t.elapsed());

    let t = Instant::now();
    let tmpl = phantom::build_template(spacing)?;
    eprintln!(
        "template {:?}: face {} vertices, head {} vertices",
        t.elapsed(),
        tmpl.mesh.vertices.len(),
        tmpl.head.as_ref().map_or(0, |h| h.vertices.len())
    );
    tmpl.save(&data.join("template"))?;
    let cp = LandmarkSet::new(tmpl.control_names.clone(), tmpl.control_coords(), "reference")?;
    std::fs::write(data.join("cp_ref.json"), write_landmarks(&cp, LandmarkFormat::Json)?)?;
    for (n, c) in tmpl.landmarks.names.iter().zip(&tmpl.landmarks.coords) {
        eprintln!("{n:>20} {:8.2} {:8.2} {:8.2}", c[0], c[1], c[2]);
    }

    // Phantom calibration: shipped as an example input for `calibrate`, not
    // as a default model.
    let t = Instant::now();
    let reference = ReferenceHistogram::builtin();
    let mut samples = Vec::new();
    let mut csv = String::from("mean,max,threshold\n");
    for seed in 0..CALIBRATION_SAMPLES {
        let params = phantom::HeadParams::sample(seed);
        let s = phantom::calibration_sample(&params, &phantom::calibration_scan(spacing, seed), &reference)?;
        csv.push_str(&format!("{},{},{}\n", s.mean, s.max, s.threshold));
        samples.push(s);
    }
    let model = fit_calibration(&samples)?;
    std::fs::write(data.join("phantom_calibration.csv"), csv)?;
    std::fs::write(data.join("phantom_calibration.json"), model.to_json()?)?;
    eprintln!("calibration {:?}: {model:?}", t.elapsed());
    for s in &samples {
        eprintln!("  mean {:8.3} max {:8.3} th {:8.3} pred {:8.3}", s.mean, s.max, s.threshold, model.predict(s.mean, s.max));
    }
    Ok(())
}

const CALIBRATION_SAMPLES: u64 = 24;
