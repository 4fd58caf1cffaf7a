use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use burstkit::audio::{decode_wav, spectrogram::HOP, spectrogram::WINDOW, write_wav_pcm16, AudioClip};
use burstkit::classifier::{ClassifierBackend, ClassifierError};
use burstkit::dataset::Manifest;
use burstkit::token::{Burst, LabelSource, StopToken, Voicing};
use burstkit_service::{router, AppState, LabelAck, NextResponse, Progress, ServiceConfig, Strategy};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const RATE: u32 = 16_000;

/// A 4 s recording of low noise with a rising ramp, so clips differ.
fn write_recording(path: &Path) {
    let n = 4 * RATE as usize;
    let samples: Vec<f32> = (0..n).map(|i| 0.2 * ((i as f32) * 0.37).sin() * (i as f32 / n as f32)).collect();
    write_wav_pcm16(path, &AudioClip::new(samples, RATE).unwrap()).unwrap();
}

fn token(i: usize, wav: &Path, start: f64, end: f64, confidence: Option<f64>) -> StopToken {
    StopToken {
        token_id: format!("t{i:04}"),
        corpus: "synthetic".into(),
        speaker: format!("s{}", i % 3),
        audio_path: wav.display().to_string(),
        phone: "t".into(),
        voicing: if i % 2 == 0 { Voicing::Voiced } else { Voicing::Voiceless },
        start,
        end,
        burst: confidence.map_or(Burst::Unknown, |p| Burst::from_binary(p >= 0.5)),
        label_source: if confidence.is_some() { LabelSource::Model } else { LabelSource::Corpus },
        confidence,
        context: None,
        clamped: false,
        excluded: false,
    }
}

fn corpus(dir: &Path, n: usize) -> Manifest {
    let wav = dir.join("rec.wav");
    write_recording(&wav);
    let records = (0..n)
        .map(|i| {
            let start = 0.2 + (i % 30) as f64 * 0.1;
            token(i, &wav, start, start + 0.06, None)
        })
        .collect();
    Manifest::new(records, "test corpus").unwrap()
}

fn open(dir: &Path, m: Option<&Manifest>) -> (Arc<AppState>, Router) {
    let app = AppState::open(&dir.join("store"), m, ServiceConfig::default(), None).unwrap();
    let r = router(app.clone());
    (app, r)
}

async fn call(r: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = r.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_call(r: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(r, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn next(r: &Router, session: &str, query: &str) -> Option<String> {
    let (s, v) = json_call(r, "GET", &format!("/v1/sessions/{session}/next{query}"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    match serde_json::from_value::<NextResponse>(v).unwrap() {
        NextResponse::Token { token } => Some(token.token_id),
        NextResponse::Empty => None,
    }
}

async fn label(r: &Router, session: &str, id: &str, label: &str) -> (StatusCode, Value) {
    json_call(
        r,
        "POST",
        &format!("/v1/sessions/{session}/labels"),
        Some(json!({"token_id": id, "label": label, "annotator": "ann"})),
    )
    .await
}

#[tokio::test]
async fn sequential_session_labels_everything() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 12);
    let (_, r) = open(dir.path(), Some(&m));
    let mut seen = Vec::new();
    while let Some(id) = next(&r, "a", "").await {
        let (s, v) = label(&r, "a", &id, if seen.len() % 2 == 0 { "present" } else { "absent" }).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        assert_eq!(v["outcome"], "recorded");
        seen.push(id);
    }
    let want: Vec<String> = m.records.iter().map(|t| t.token_id.clone()).collect();
    assert_eq!(seen, want);
    let (_, p) = json_call(&r, "GET", "/v1/sessions/a/progress", None).await;
    let p: Progress = serde_json::from_value(p).unwrap();
    assert_eq!((p.total, p.labeled, p.present, p.absent, p.open, p.unseen), (12, 12, 6, 6, 0, 0));
    assert_eq!((p.session_served, p.session_labeled), (12, 12));
}

#[tokio::test]
async fn concurrent_pops_never_hand_out_a_token_twice() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 200);
    let (_, r) = open(dir.path(), Some(&m));
    let mut tasks = Vec::new();
    for k in 0..16 {
        let r = r.clone();
        tasks.push(tokio::spawn(async move {
            let session = format!("s{k}");
            let strategy = ["", "?strategy=random&seed=3", "?strategy=sequential"][k % 3];
            let mut got = Vec::new();
            while let Some(id) = next(&r, &session, strategy).await {
                got.push(id);
            }
            got
        }));
    }
    let mut all = Vec::new();
    for t in tasks {
        all.extend(t.await.unwrap());
    }
    assert_eq!(all.len(), 200);
    assert_eq!(all.iter().collect::<HashSet<_>>().len(), 200);
}

#[tokio::test]
async fn random_order_is_seeded_and_per_session() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 40);
    let order = |seed: u64, session: &'static str| {
        let dir = tempfile::tempdir().unwrap();
        let m = m.clone();
        async move {
            let (_, r) = open(dir.path(), Some(&m));
            let mut v = Vec::new();
            while let Some(id) = next(&r, session, &format!("?strategy=random&seed={seed}")).await {
                v.push(id);
            }
            v
        }
    };
    let a = order(7, "x").await;
    assert_eq!(a, order(7, "x").await);
    assert_ne!(a, order(8, "x").await);
    assert_ne!(a, order(7, "y").await);
    let sequential: Vec<String> = m.records.iter().map(|t| t.token_id.clone()).collect();
    assert_ne!(a, sequential);
    let mut sorted = a.clone();
    sorted.sort();
    assert_eq!(sorted, sequential);
}

#[tokio::test]
async fn uncertainty_serves_closest_to_half_first() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("rec.wav");
    write_recording(&wav);
    let records = vec![
        token(0, &wav, 0.3, 0.36, Some(0.9)),
        token(1, &wav, 0.5, 0.56, Some(0.52)),
        token(2, &wav, 0.7, 0.76, Some(0.1)),
    ];
    let m = Manifest::new(records, "t").unwrap();
    let (_, r) = open(dir.path(), Some(&m));
    let mut order = Vec::new();
    while let Some(id) = next(&r, "u", "?strategy=uncertainty").await {
        order.push(id);
    }
    assert_eq!(order[0], "t0001");
    assert_eq!(order.len(), 3);
}

/// P(present) from the clip length: 0.07 s -> 0.35, 0.10 s -> 0.5, ...
struct LengthModel;

impl ClassifierBackend for LengthModel {
    fn name(&self) -> &str {
        "length"
    }
    fn expected_sample_rate(&self) -> u32 {
        RATE
    }
    fn classify_batch(&self, clips: &[AudioClip<f32>]) -> Result<Vec<f64>, ClassifierError> {
        Ok(clips.iter().map(|c| (c.duration() * 5.0).min(1.0)).collect())
    }
}

#[tokio::test]
async fn uncertainty_falls_back_to_the_backend() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("rec.wav");
    write_recording(&wav);
    // with 10 ms context: 0.14 s -> 0.7, 0.10 s -> 0.5, 0.04 s -> 0.2
    let records = vec![token(0, &wav, 0.3, 0.42, None), token(1, &wav, 0.5, 0.58, None), token(2, &wav, 0.7, 0.72, None)];
    let m = Manifest::new(records, "t").unwrap();
    let app = AppState::open(&dir.path().join("store"), Some(&m), ServiceConfig::default(), Some(Arc::new(LengthModel))).unwrap();
    let r = router(app);
    let (_, v) = json_call(&r, "GET", "/v1/sessions/u/next?strategy=uncertainty", None).await;
    assert_eq!(v["token"]["token_id"], "t0001");
    assert!((v["token"]["prediction"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert_eq!(next(&r, "u", "?strategy=uncertainty").await.as_deref(), Some("t0000"));
    assert_eq!(next(&r, "u", "?strategy=uncertainty").await.as_deref(), Some("t0002"));

    // no confidences and no model: a clear client error
    let (_, r) = open(&dir.path().join("other"), Some(&m));
    let (s, v) = json_call(&r, "GET", "/v1/sessions/u/next?strategy=uncertainty", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["kind"], "bad_request");
}

#[tokio::test]
async fn relabel_is_idempotent_or_overwrites_with_audit() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 5);
    let (app, r) = open(dir.path(), Some(&m));
    let id = next(&r, "a", "").await.unwrap();
    let (_, v) = label(&r, "a", &id, "present").await;
    let ack: LabelAck = serde_json::from_value(v).unwrap();
    assert_eq!((ack.outcome.as_str(), ack.seq), ("recorded", Some(1)));
    let (s, v) = label(&r, "a", &id, "present").await;
    assert_eq!((s, v["outcome"].as_str()), (StatusCode::OK, Some("unchanged")));
    let (_, v) = label(&r, "a", &id, "unsure").await;
    assert_eq!(v["outcome"], "overwritten");
    let (_, audit) = json_call(&r, "GET", "/v1/sessions/a/audit", None).await;
    assert_eq!(audit["consistent"], true, "{audit}");
    assert_eq!(audit["log_events"], 2);
    assert_eq!(audit["recount"], json!({"unsure": 1}));
    let manifest = app.manifest().await;
    assert_eq!(manifest.get(&id).unwrap().burst, Burst::Unsure);
    let log = std::fs::read_to_string(dir.path().join("store/labels.jsonl")).unwrap();
    let last: Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!((last["label"].as_str(), last["previous"].as_str()), (Some("unsure"), Some("present")));
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 5);
    let (_, r) = open(dir.path(), Some(&m));
    let id = next(&r, "a", "").await.unwrap();
    let (s, v) = label(&r, "a", "nope", "present").await;
    assert_eq!((s, v["error"]["kind"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (s, _) = label(&r, "b", &id, "present").await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = label(&r, "a", "t0004", "present").await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = label(&r, "a", &id, "unknown").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&r, "GET", "/v1/sessions/a/next?strategy=clever", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&r, "GET", "/v1/tokens/nope/audio", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn labels_survive_a_restart_and_a_torn_log() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 10);
    let mut labeled = BTreeMap::new();
    {
        let (_, r) = open(dir.path(), Some(&m));
        for k in 0..4 {
            let id = next(&r, "a", "").await.unwrap();
            let l = ["present", "absent"][k % 2];
            label(&r, "a", &id, l).await;
            labeled.insert(id, l);
        }
        // served but never labeled: returns to the queue after a restart
        next(&r, "a", "").await.unwrap();
    }
    // a crash mid-append leaves half a line behind
    let log = dir.path().join("store/labels.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"seq\":5,\"sess");
    std::fs::write(&log, text).unwrap();

    let (app, r) = open(dir.path(), None);
    let manifest = app.manifest().await;
    for (id, l) in &labeled {
        assert_eq!(manifest.get(id).unwrap().burst.as_str(), *l);
        assert_eq!(manifest.get(id).unwrap().label_source, LabelSource::Manual);
    }
    let (_, p) = json_call(&r, "GET", "/v1/sessions/a/progress", None).await;
    assert_eq!((p["labeled"].as_u64(), p["open"].as_u64(), p["session_labeled"].as_u64()), (Some(4), Some(0), Some(4)));
    let id = next(&r, "a", "").await.unwrap();
    assert_eq!(id, "t0004");
    let (_, v) = label(&r, "a", &id, "present").await;
    assert_eq!(v["seq"], 5);
    let (_, audit) = json_call(&r, "GET", "/v1/sessions/a/audit", None).await;
    assert_eq!(audit["consistent"], true, "{audit}");
    app.flush().await.unwrap();
    drop(r);
    drop(app);
    let reopened = Manifest::read(&dir.path().join("store/manifest.jsonl")).unwrap();
    assert_eq!(reopened.records.iter().filter(|t| t.label_source == LabelSource::Manual).count(), 5);
}

#[tokio::test]
async fn audio_and_spectrogram_carry_annotation_context() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 3);
    let (_, r) = open(dir.path(), Some(&m));
    let t = &m.records[1];
    let (s, wav) = call(&r, "GET", &format!("/v1/tokens/{}/audio", t.token_id), None).await;
    assert_eq!(s, StatusCode::OK);
    let clip: AudioClip<f32> = decode_wav(&wav).unwrap();
    let n = ((t.end - t.start + 0.2) * RATE as f64).round() as usize;
    assert_eq!((clip.sample_rate(), clip.len()), (RATE, n));
    let (s, spec) = json_call(&r, "GET", &format!("/v1/tokens/{}/spectrogram", t.token_id), None).await;
    assert_eq!(s, StatusCode::OK);
    let frames = (n - WINDOW) / HOP + 1;
    assert_eq!(spec["n_frames"].as_u64(), Some(frames as u64));
    assert_eq!(spec["n_bins"].as_u64(), Some(WINDOW as u64 / 2 + 1));
    assert_eq!(spec["db"].as_array().unwrap().len(), frames);
    assert_eq!(spec["db"][0].as_array().unwrap().len(), WINDOW / 2 + 1);
}

#[tokio::test]
async fn missing_audio_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = corpus(dir.path(), 2);
    m.records[0].audio_path = dir.path().join("gone.wav").display().to_string();
    let (_, r) = open(dir.path(), Some(&m));
    let (s, v) = json_call(&r, "GET", "/v1/tokens/t0000/audio", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{v}");
}

#[tokio::test]
async fn static_files_fall_through() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 2);
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>ui</html>").unwrap();
    let cfg = ServiceConfig { static_dir: Some(ui), default_strategy: Strategy::Sequential, ..Default::default() };
    let app = AppState::open(&dir.path().join("store"), Some(&m), cfg, None).unwrap();
    let r = router(app);
    let (s, b) = call(&r, "GET", "/index.html", None).await;
    assert_eq!((s, b.as_slice()), (StatusCode::OK, &b"<html>ui</html>"[..]));
    let (s, _) = call(&r, "GET", "/v1/sessions/a/progress", None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn scripted_hundred_token_session_audits_clean() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path(), 100);
    let (app, r) = open(dir.path(), Some(&m));
    let labels = ["present", "absent", "unsure"];
    let mut want: BTreeMap<String, usize> = BTreeMap::new();
    let mut k = 0;
    while let Some(id) = next(&r, "script", "?strategy=random&seed=11").await {
        let l = labels[k % 3];
        label(&r, "script", &id, l).await;
        *want.entry(l.to_string()).or_default() += 1;
        k += 1;
    }
    assert_eq!(k, 100);
    let (_, audit) = json_call(&r, "GET", "/v1/sessions/script/audit", None).await;
    assert_eq!(audit["consistent"], true);
    assert_eq!(audit["recount"], serde_json::to_value(&want).unwrap());
    assert_eq!(audit["progress"]["session_labeled"], 100);
    // the 100th label triggered a snapshot
    let snap = Manifest::read(&dir.path().join("store/manifest.jsonl")).unwrap();
    assert_eq!(snap.records.iter().filter(|t| t.label_source == LabelSource::Manual).count(), 100);
    drop(app);
}
