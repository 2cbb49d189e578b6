mod common;

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::*;
use hoiforge::cli::{build_service, ServeArgs};
use hoiforge::log::replay_log;
use hoiforge::service::{router, BatchPage, ErrorBody, ReviewService};
use hoiforge_core::autolabel::{AnnotatedImage, AnnotationSource};
use hoiforge_core::review::{Progress, ReviewStatus, Verdict, VerifiedExport};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
    service: Arc<ReviewService>,
}

impl Fixture {
    fn new(manifest: &[AnnotatedImage], fraction: f64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::create_dir(root.join("images")).unwrap();
        for img in manifest {
            if let Some(name) = Path::new(&img.file).file_name() {
                std::fs::write(root.join("images").join(name), format!("pixels of {}", img.image_id)).unwrap();
            }
        }
        let m = write_jsonl(&root, "labeled.jsonl", manifest);
        let service = Arc::new(build_service(&serve_args(&root, &m, fraction), root.join("images")).unwrap());
        Fixture { _dir: dir, root, service }
    }

    fn app(&self) -> Router {
        router(Arc::clone(&self.service))
    }

    fn log(&self) -> std::path::PathBuf {
        self.root.join("verdicts.jsonl")
    }
}

fn serve_args(root: &Path, manifest: &Path, fraction: f64) -> ServeArgs {
    ServeArgs {
        data: None,
        manifest: manifest.to_path_buf(),
        fraction,
        seed: 5,
        port: 0,
        host: "127.0.0.1".parse().unwrap(),
        log: root.join("verdicts.jsonl"),
    }
}

async fn call(app: Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json<T: serde::de::DeserializeOwned>(app: Router, uri: &str) -> (StatusCode, T) {
    let (status, body) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&body))))
}

async fn post_verdict(app: Router, body: Value, reviewer: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::post("/api/verdict").header("content-type", "application/json");
    if let Some(r) = reviewer {
        req = req.header("x-reviewer", r);
    }
    call(app, req.body(Body::from(body.to_string())).unwrap()).await
}

fn five_images() -> Vec<AnnotatedImage> {
    (0..5).map(|k| labeled_image(&format!("img{k}"), &[0])).collect()
}

#[tokio::test]
async fn batch_pages_cover_all_items() {
    let manifest: Vec<_> = (0..40).map(|k| labeled_image(&format!("img{k:02}"), &[0, 2])).collect();
    let fx = Fixture::new(&manifest, 0.5);
    let mut cursor = Some(0);
    let mut seen = Vec::new();
    while let Some(c) = cursor {
        let (status, page): (_, BatchPage) = get_json(fx.app(), &format!("/api/batch?cursor={c}&limit=7")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(page.total, 20);
        seen.extend(page.items.into_iter().map(|i| i.image_id));
        cursor = page.next_cursor;
    }
    assert_eq!(seen.len(), 20);
    let mut sorted = seen.clone();
    sorted.sort();
    assert_eq!(seen, sorted, "items keep manifest order");

    let (_, page): (_, BatchPage) = get_json(fx.app(), "/api/batch").await;
    assert_eq!(page.items.len(), 20);
    assert!(page.items.iter().all(|i| i.status == ReviewStatus::Pending));
}

#[tokio::test]
async fn images_are_served_from_the_data_root_only() {
    let mut manifest = five_images();
    manifest[1].file = "../labeled.jsonl".into();
    manifest[2].file = "missing.png".into();
    let fx = Fixture::new(&manifest, 1.0);
    std::fs::remove_file(fx.root.join("images/missing.png")).unwrap();

    let (status, body) = call(fx.app(), Request::get("/api/image/img0").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"pixels of img0");

    let (status, _) = call(fx.app(), Request::get("/api/image/img1").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = call(fx.app(), Request::get("/api/image/img2").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(fx.app(), Request::get("/api/image/nope").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(fx.app(), Request::get("/api/image/..%2Flabeled.jsonl").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn verdict_errors_map_to_status_codes() {
    let fx = Fixture::new(&five_images(), 1.0);
    let (status, body) = post_verdict(fx.app(), json!({"annotation_id": "nope/0", "decision": "accept"}), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert!(err.error.contains("nope/0"));

    let (status, _) = post_verdict(fx.app(), json!({"annotation_id": "img0/0", "decision": "edit"}), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = post_verdict(fx.app(), json!({"annotation_id": "img0/0", "decision": "maybe"}), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let outside = json!({"human_box": [0, 0, 700, 10], "object_box": [0, 0, 5, 5], "hoi_id": 0, "source": "auto"});
    let (status, _) =
        post_verdict(fx.app(), json!({"annotation_id": "img0/0", "decision": "edit", "edited_annotation": outside}), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, progress): (_, Progress) = get_json(fx.app(), "/api/progress").await;
    assert_eq!(progress.pending, 5);
    assert_eq!(std::fs::read_to_string(fx.log()).unwrap().lines().count(), 1, "rejected verdicts are not logged");
}

#[tokio::test]
async fn reviewer_header_and_server_clock_fill_gaps() {
    let fx = Fixture::new(&five_images(), 1.0);
    let (status, body) = post_verdict(fx.app(), json!({"annotation_id": "img3/0", "decision": "accept"}), Some("kim")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Verdict = serde_json::from_slice(&body).unwrap();
    assert_eq!(v.reviewer, "kim");
    assert!(v.timestamp > 1_600_000_000_000);

    let (_, body) =
        post_verdict(fx.app(), json!({"annotation_id": "img3/0", "decision": "reject", "reviewer": "lee", "timestamp": 5}), Some("kim")).await;
    let v: Verdict = serde_json::from_slice(&body).unwrap();
    assert_eq!((v.reviewer.as_str(), v.timestamp), ("lee", 5));
    // older timestamp loses
    let snap = fx.service.snapshot();
    assert_eq!(snap.annotation("img3/0").unwrap().status, ReviewStatus::Accepted);
}

/// render -> accept -> edit -> reject across a five-item batch.
#[tokio::test]
async fn scripted_review_session() {
    let fx = Fixture::new(&five_images(), 1.0);
    let (_, page): (_, BatchPage) = get_json(fx.app(), "/api/batch?limit=5").await;
    assert_eq!(page.items.len(), 5);
    for item in &page.items {
        let (status, _) = call(fx.app(), Request::get(format!("/api/image/{}", item.image_id)).body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
    }
    let ids: Vec<String> = page.items.iter().map(|i| i.annotations[0].annotation_id.clone()).collect();
    let mut edited = page.items[1].annotations[0].annotation.clone();
    edited.human_box = bbox([12.5, 20.25, 80.0, 160.75]);

    for (id, body) in [
        (&ids[0], json!({"decision": "accept"})),
        (&ids[1], json!({"decision": "edit", "edited_annotation": edited})),
        (&ids[2], json!({"decision": "reject"})),
    ] {
        let mut body = body;
        body["annotation_id"] = json!(id);
        let (status, raw) = post_verdict(fx.app(), body, Some("reviewer-1")).await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&raw));
    }

    let (_, p): (_, Progress) = get_json(fx.app(), "/api/progress").await;
    assert_eq!((p.accepted, p.edited, p.rejected, p.pending, p.total), (1, 1, 1, 2, 5));

    let (_, export): (_, VerifiedExport) = get_json(fx.app(), "/api/export").await;
    assert_eq!(export.records.len(), 2);
    assert_eq!(export.header.sampling_unit, "images");
    let e = &export.records[1].annotations[0];
    assert_eq!(e.source, AnnotationSource::Edited);
    let (got, want) = (e.human_box.to_array(), edited.human_box.to_array());
    assert!(got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 0.5));

    // restart: the log alone reproduces what was acknowledged
    let replayed = replay_log(&fx.log()).unwrap();
    assert_eq!(replayed, *fx.service.snapshot());
}

#[tokio::test]
async fn resume_uses_recorded_batch() {
    let manifest: Vec<_> = (0..20).map(|k| labeled_image(&format!("img{k:02}"), &[0])).collect();
    let fx = Fixture::new(&manifest, 0.25);
    let first = fx.service.snapshot().items()[0].annotations[0].annotation_id.clone();
    let (status, _) = post_verdict(fx.app(), json!({"annotation_id": first, "decision": "accept", "timestamp": 9}), None).await;
    assert_eq!(status, StatusCode::OK);

    let m = fx.root.join("labeled.jsonl");
    let mut args = serve_args(&fx.root, &m, 0.9);
    args.seed = 99;
    let resumed = build_service(&args, fx.root.join("images")).unwrap();
    assert_eq!(*resumed.snapshot(), *fx.service.snapshot());
    assert_eq!(resumed.snapshot().items().len(), 5);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_reviewers_are_serialized() {
    let manifest: Vec<_> = (0..30).map(|k| labeled_image(&format!("img{k:02}"), &[0, 2])).collect();
    let fx = Fixture::new(&manifest, 1.0);
    let ids: Vec<String> =
        fx.service.snapshot().items().iter().flat_map(|i| i.annotations.iter().map(|a| a.annotation_id.clone())).collect();

    let mut tasks = Vec::new();
    for (k, id) in ids.iter().cycle().take(200).enumerate() {
        let app = fx.app();
        let decision = ["accept", "reject"][k % 2];
        let body = json!({"annotation_id": id, "decision": decision, "timestamp": (k % 17) as u64});
        tasks.push(tokio::spawn(async move { post_verdict(app, body, Some("r")).await.0 }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    assert_eq!(std::fs::read_to_string(fx.log()).unwrap().lines().count(), 201);
    let replayed = replay_log(&fx.log()).unwrap();
    assert_eq!(replayed, *fx.service.snapshot());
    assert_eq!(replayed.progress().pending, 0);
}
