use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use mrface_core::landmarks::{load_landmarks, write_landmarks, LandmarkFormat, LandmarkSet, LANDMARK_NAMES};
use mrface_core::mesh::read_ply;
use mrface_core::phantom::{head_phantom, HeadParams, ScanOptions, CLEAN_THRESHOLD};
use mrface_core::volume::save_nifti;
use mrface_pipeline::compare::{compare_groups, CompareParams, EDMA_JSON, GPA_JSON};
use mrface_service::workspace::{INPUTS_DIR, JOURNAL_FILE, SUBJECTS_DIR};
use mrface_service::{router, Workspace};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    headers: HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    fn header(&self, name: &str) -> &str {
        self.headers.get(name).unwrap().to_str().unwrap()
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, headers, body }
}

fn app(root: &Path) -> Router {
    router(Arc::new(Workspace::open(root).unwrap()))
}

fn phantom_workspace(root: &Path, seeds: &[u64]) {
    std::fs::create_dir_all(root.join(INPUTS_DIR)).unwrap();
    for &s in seeds {
        let v = head_phantom(&HeadParams::sample(s), &ScanOptions { seed: s, ..Default::default() }).unwrap();
        save_nifti(&v, root.join(INPUTS_DIR).join(format!("p{s}.nii.gz"))).unwrap();
    }
}

#[tokio::test]
async fn empty_workspace_lists_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let r = call(&app, Method::GET, "/subjects", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!([]));
}

#[tokio::test]
async fn params_are_validated_journaled_and_persisted() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join(INPUTS_DIR)).unwrap();
    for id in ["b", "a"] {
        std::fs::write(tmp.path().join(INPUTS_DIR).join(format!("{id}.nii")), b"").unwrap();
    }
    let app = app(tmp.path());
    let list = call(&app, Method::GET, "/subjects", None).await.json();
    assert_eq!(list.as_array().unwrap().len(), 2);
    assert_eq!(list[0]["id"], "a");
    assert_eq!(list[0]["status"], "pending");

    let journal = || {
        std::fs::read_to_string(tmp.path().join(JOURNAL_FILE))
            .map(|s| s.lines().count())
            .unwrap_or(0)
    };
    let r = call(&app, Method::PATCH, "/subjects/a/params", Some(json!({"status": "accepted", "threshold": 70.5}))).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["threshold"], 70.5);
    assert_eq!(journal(), 1);
    let crop = json!({"crop": {"thY": 10.0, "thZ_low": -50.0, "thZ_high": 60.0}});
    assert_eq!(call(&app, Method::PATCH, "/subjects/a/params", Some(crop)).await.status, StatusCode::OK);
    assert_eq!(journal(), 2);

    let list = call(&app, Method::GET, "/subjects", None).await.json();
    assert_eq!(list[0]["status"], "accepted");
    assert_eq!(list[0]["params"]["crop"]["thY"], 10.0);

    for bad in [
        json!({"crop": {"thY": 0.0, "thZ_low": 5.0, "thZ_high": 1.0}}),
        json!({"status": "done"}),
        json!({"threshold": "high"}),
        json!({"colour": 1}),
    ] {
        let r = call(&app, Method::PATCH, "/subjects/a/params", Some(bad.clone())).await;
        assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
    }
    assert_eq!(journal(), 2);
    assert_eq!(
        call(&app, Method::PATCH, "/subjects/zz/params", Some(json!({}))).await.status,
        StatusCode::NOT_FOUND
    );

    // clearing with null, and the registry survives a restart
    call(&app, Method::PATCH, "/subjects/a/params", Some(json!({"threshold": null}))).await;
    let again = app_reopened(tmp.path()).await;
    assert_eq!(again[0]["params"]["threshold"], Value::Null);
    assert_eq!(again[0]["status"], "accepted");
    assert_eq!(Workspace::open(tmp.path()).unwrap().journal_len(), 3);
}

async fn app_reopened(root: &Path) -> Value {
    call(&app(root), Method::GET, "/subjects", None).await.json()
}

#[tokio::test]
async fn preview_run_crop_and_landmarks() {
    let tmp = tempfile::tempdir().unwrap();
    phantom_workspace(tmp.path(), &[4]);
    let cal = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/phantom_calibration.json");
    std::fs::write(tmp.path().join("mrface.toml"), format!("calibration = {:?}\n", cal.to_str().unwrap())).unwrap();
    let app = app(tmp.path());

    // no body: the calibrated prediction
    let r = call(&app, Method::POST, "/subjects/p4/preview", None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    assert_eq!(r.header("x-mesh-format"), "ply-binary-le");
    assert_eq!(r.header("content-type"), "application/octet-stream");
    let predicted: f64 = r.header("x-threshold-used").parse().unwrap();
    assert_eq!(r.header("x-threshold-valid"), "true");
    let mesh = read_ply(&r.body).unwrap();
    assert!(!mesh.is_empty());
    assert_eq!(r.header("x-vertex-count"), mesh.vertices.len().to_string());

    let body = json!({"threshold": CLEAN_THRESHOLD});
    let a = call(&app, Method::POST, "/subjects/p4/preview", Some(body.clone())).await;
    let b = call(&app, Method::POST, "/subjects/p4/preview", Some(body)).await;
    assert_eq!(a.body, b.body);
    assert_eq!(a.header("x-threshold-used"), CLEAN_THRESHOLD.to_string());
    assert_ne!(predicted, CLEAN_THRESHOLD);

    let high = call(&app, Method::POST, "/subjects/p4/preview", Some(json!({"threshold": 1e9}))).await;
    assert_eq!(high.status, StatusCode::OK);
    assert_eq!(high.header("x-threshold-valid"), "false");
    assert_eq!(high.header("x-vertex-count"), "0");
    assert!(read_ply(&high.body).unwrap().vertices.is_empty());
    let r = call(&app, Method::POST, "/subjects/p4/preview", Some(json!({"threshold": "NaN"}))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(call(&app, Method::POST, "/subjects/nope/preview", None).await.status, StatusCode::NOT_FOUND);

    let crop = json!({"thY": 0.0, "thZ_low": -100.0, "thZ_high": 100.0});
    let r = call(&app, Method::POST, "/subjects/p4/crop-preview", Some(crop.clone())).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(call(&app, Method::GET, "/subjects/p4/landmarks", None).await.status, StatusCode::CONFLICT);

    let run = call(&app, Method::POST, "/subjects/p4/run", None).await;
    assert_eq!(run.status, StatusCode::OK, "{}", String::from_utf8_lossy(&run.body));
    assert_eq!(run.json()["threshold"]["threshold"], predicted);

    let c1 = call(&app, Method::POST, "/subjects/p4/crop-preview", Some(crop.clone())).await;
    let c2 = call(&app, Method::POST, "/subjects/p4/crop-preview", Some(crop)).await;
    assert_eq!(c1.status, StatusCode::OK);
    assert_eq!(c1.body, c2.body);
    let wide = json!({"thY": -1e4, "thZ_low": -1e4, "thZ_high": 1e4});
    let full = call(&app, Method::POST, "/subjects/p4/crop-preview", Some(wide)).await;
    assert!(read_ply(&full.body).unwrap().vertices.len() > read_ply(&c1.body).unwrap().vertices.len());
    let empty = json!({"thY": 1e4, "thZ_low": -1.0, "thZ_high": 1.0});
    let r = call(&app, Method::POST, "/subjects/p4/crop-preview", Some(empty)).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let lm = call(&app, Method::GET, "/subjects/p4/landmarks", None).await.json();
    let rows = lm["landmarks"].as_array().unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(lm["subject_id"], "p4");
    assert!(lm["residual"].as_f64().unwrap() > 0.0);
    assert_eq!(lm["needs_review"], false);
    let file = load_landmarks(&tmp.path().join(SUBJECTS_DIR).join("p4/landmarks.json")).unwrap();
    for (row, (name, xyz)) in rows.iter().zip(file.names.iter().zip(&file.coords)) {
        assert_eq!(row["name"], name.as_str());
        assert_eq!([row["x"].as_f64().unwrap(), row["y"].as_f64().unwrap(), row["z"].as_f64().unwrap()], *xyz);
    }
    let list = call(&app, Method::GET, "/subjects", None).await.json();
    assert_eq!(list[0]["processed"], true);
    assert_eq!(list[0]["threshold"], predicted);
}

/// Workspace whose subjects already have landmark files: `a*` from one
/// shape, `b*` with landmark 5 displaced.
fn analysis_workspace(root: &Path, groups: &Path) {
    std::fs::create_dir_all(root.join(INPUTS_DIR)).unwrap();
    let names: Vec<String> = LANDMARK_NAMES.iter().map(|(_, a)| a.to_string()).collect();
    for (g, shift) in [("a", 0.0), ("b", 6.0)] {
        std::fs::create_dir_all(groups.join(g)).unwrap();
        for s in 0..8 {
            let id = format!("{g}{s}");
            let coords = (0..20)
                .map(|i| {
                    let w = ((s * 7 + i * 13 + if g == "b" { 5 } else { 0 }) % 9) as f64 * 0.3;
                    let t = i as f64 * 0.6;
                    [30.0 * t.cos() + w + if i == 5 { shift } else { 0.0 }, 20.0 + w * 0.5, 40.0 * t.sin() - w]
                })
                .collect();
            let lm = LandmarkSet::new(names.clone(), coords, &id).unwrap();
            let bytes = write_landmarks(&lm, LandmarkFormat::Json).unwrap();
            std::fs::write(root.join(INPUTS_DIR).join(format!("{id}.nii")), b"").unwrap();
            std::fs::create_dir_all(root.join(SUBJECTS_DIR).join(&id)).unwrap();
            std::fs::write(root.join(SUBJECTS_DIR).join(&id).join("landmarks.json"), &bytes).unwrap();
            std::fs::write(groups.join(g).join(format!("{id}.json")), &bytes).unwrap();
        }
    }
}

fn ids(g: &str) -> Vec<String> {
    (0..8).map(|s| format!("{g}{s}")).collect()
}

#[tokio::test]
async fn analyses_match_the_batch_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("ws");
    analysis_workspace(&root, &tmp.path().join("groups"));
    let app = app(&root);

    let req = json!({"group_a": ids("a"), "group_b": ids("b"), "alpha": 10.0, "bootstrap": 300, "seed": 9});
    let r = call(&app, Method::POST, "/analysis/edma", Some(req.clone())).await;
    assert_eq!(r.status, StatusCode::CONFLICT, "subjects are not accepted yet");
    for id in ids("a").into_iter().chain(ids("b")) {
        let r = call(&app, Method::PATCH, &format!("/subjects/{id}/params"), Some(json!({"status": "accepted"}))).await;
        assert_eq!(r.status, StatusCode::OK);
    }
    let edma = call(&app, Method::POST, "/analysis/edma", Some(req.clone())).await;
    assert_eq!(edma.status, StatusCode::OK, "{}", String::from_utf8_lossy(&edma.body));
    assert_eq!(edma.body, call(&app, Method::POST, "/analysis/edma", Some(req)).await.body);
    let gpa = call(&app, Method::POST, "/analysis/gpa", Some(json!({"group_a": ids("a"), "group_b": ids("b"), "components": 2}))).await;
    assert_eq!(gpa.status, StatusCode::OK);

    let params = CompareParams {
        alpha: 10.0,
        bootstrap: 300,
        seed: 9,
        components: 2,
        k: None,
    };
    let out = tmp.path().join("cmp");
    compare_groups(&tmp.path().join("groups/a"), &tmp.path().join("groups/b"), &params, &out).unwrap();
    let file = |f: &str| serde_json::from_slice::<Value>(&std::fs::read(out.join(f)).unwrap()).unwrap();
    assert_eq!(edma.json(), file(EDMA_JSON));
    assert_eq!(gpa.json(), file(GPA_JSON));
    let top = &edma.json()["top_pairs"][0]["landmarks"];
    assert!(top[0] == LANDMARK_NAMES[5].1 || top[1] == LANDMARK_NAMES[5].1);

    let same = call(&app, Method::POST, "/analysis/gpa", Some(json!({"group_a": ids("a"), "group_b": ids("a")}))).await;
    assert_eq!(same.json()["iou"], 1.0);

    let unknown = json!({"group_a": ["a0", "ghost"], "group_b": ids("b")});
    assert_eq!(call(&app, Method::POST, "/analysis/edma", Some(unknown)).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let big_k = json!({"group_a": ids("a"), "group_b": ids("b"), "bootstrap": 50, "k": 500});
    assert_eq!(call(&app, Method::POST, "/analysis/edma", Some(big_k)).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_components = json!({"group_a": ids("a"), "group_b": ids("b"), "components": 40});
    assert_eq!(
        call(&app, Method::POST, "/analysis/gpa", Some(bad_components)).await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}
