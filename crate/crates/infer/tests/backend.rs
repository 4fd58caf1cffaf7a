use std::path::PathBuf;
use std::sync::Arc;

use burstkit::audio::{synthesize_balanced, AudioClip};
use burstkit::classifier::{ClassifierBackend, ClassifierError};
use burstkit_infer::fixture::{
    float_tensor, int_attr, ints_attr, model, node, pooled_model, tiny_model, tiny_probability, write_model,
    write_tiny_bundle, TinyWeights,
};
use burstkit_infer::{check_parity, parity_path, sidecar_path, InferError, ModelMeta, NeuralModel, ParityFixture, MIN_SAMPLES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(dir: &tempfile::TempDir) -> (PathBuf, NeuralModel) {
    let path = write_tiny_bundle(dir.path(), "tiny", 1).unwrap();
    let m = NeuralModel::load(&path).unwrap();
    (path, m)
}

fn random_clips(n: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = [50, 100, 399, 400, 401, 800, 1120, 2000][r.gen_range(0..8)];
            let amp: f32 = r.gen_range(0.01..0.9);
            (0..len).map(|_| amp * r.gen_range(-1.0f32..1.0)).collect()
        })
        .collect()
}

#[test]
fn loads_with_declared_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let (path, m) = tiny(&dir);
    assert_eq!(m.meta().base_model, "tiny-fixture");
    assert_eq!(m.expected_sample_rate(), 16_000);
    assert_eq!(m.name(), "tiny-fixture");
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
    assert_eq!(side["labels"], serde_json::json!(["absent", "present"]));
    assert_eq!(side["normalization"], "zero_mean_unit_var");
}

#[test]
fn parity_fixture_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let (path, m) = tiny(&dir);
    let fixture = ParityFixture::read(&parity_path(&path)).unwrap();
    assert_eq!(fixture.clips.len(), 8);
    let report = check_parity(&m, &fixture, 1e-3).unwrap();
    assert!(report.passed && report.max_abs_diff < 1e-5, "{report:?}");
    let mut off = fixture.clone();
    off.probabilities[3] += 0.01;
    assert!(!check_parity(&m, &off, 1e-3).unwrap().passed);
}

#[test]
fn matches_direct_forward_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = tiny(&dir);
    let clips = random_clips(40, 3);
    let got = m.probabilities(&clips).unwrap();
    for (c, p) in clips.iter().zip(&got) {
        let want = tiny_probability(&TinyWeights::default(), c);
        assert!((p - want).abs() < 1e-5, "len {}: {p} vs {want}", c.len());
        assert!((0.0..=1.0).contains(p));
    }
}

#[test]
fn short_clip_is_padded_to_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = tiny(&dir);
    let clip: Vec<f32> = (0..100).map(|i| ((i as f32) * 0.3).sin() * 0.5).collect();
    let p = m.probabilities(&[clip.clone()]).unwrap()[0];
    let mut padded = burstkit_infer::normalize(&clip);
    padded.resize(MIN_SAMPLES, 0.0);
    let l = burstkit_infer::fixture::tiny_logits(&TinyWeights::default(), &padded);
    let want = 1.0 / (1.0 + (l[0] - l[1]).exp());
    assert!((p - want).abs() < 1e-6);
}

#[test]
fn batching_does_not_leak() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = tiny(&dir);
    let clips = random_clips(64, 9);
    let alone: Vec<f64> = clips.iter().map(|c| m.probabilities(&[c.clone()]).unwrap()[0]).collect();
    for size in [1, 2, 8, 64] {
        for batch in clips.chunks(size) {
            let start = clips.iter().position(|c| std::ptr::eq(c, &batch[0])).unwrap();
            for (k, p) in m.probabilities(batch).unwrap().into_iter().enumerate() {
                assert!((p - alone[start + k]).abs() < 1e-5, "batch {size}, clip {}", start + k);
            }
        }
    }
}

#[test]
fn more_than_one_batch_of_equal_clips() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = tiny(&dir);
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let clips: Vec<Vec<f32>> = (0..150).map(|_| (0..800).map(|_| r.gen_range(-0.5f32..0.5)).collect()).collect();
    let all = m.probabilities(&clips).unwrap();
    for (i, c) in clips.iter().enumerate().step_by(37) {
        assert!((all[i] - m.probabilities(&[c.clone()]).unwrap()[0]).abs() < 1e-6);
    }
    assert_eq!(m.probabilities(&clips).unwrap(), all);
}

#[test]
fn backend_contract_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = tiny(&dir);
    let m: Arc<dyn ClassifierBackend> = Arc::new(m);
    let clips: Vec<AudioClip<f32>> = synthesize_balanced::<f32>(6, 20.0, 2).unwrap().into_iter().map(|(c, _)| c).collect();
    let want = m.classify_batch(&clips).unwrap();
    assert_eq!(m.classify_batch(&[]).unwrap(), Vec::<f64>::new());
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (m, clips) = (m.clone(), clips.clone());
            std::thread::spawn(move || m.classify_batch(&clips).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), want);
    }
    let wrong_rate = AudioClip::new(vec![0.1f32; 800], 8000).unwrap();
    assert!(matches!(m.classify_batch(&[wrong_rate]), Err(ClassifierError::Input(_))));
}

#[test]
fn three_logit_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let proto = pooled_model(&[0.1; 6], &[0.0; 3], 3);
    let path = write_model(dir.path(), "three", &proto, &ModelMeta::new("bad")).unwrap();
    match NeuralModel::load(&path) {
        Err(InferError::ShapeMismatch { got }) => assert_eq!(got, vec![1, 3]),
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn missing_files_and_bad_metadata() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(NeuralModel::load(&dir.path().join("nope.onnx")), Err(InferError::NotFound(_))));
    let path = write_model(dir.path(), "m", &tiny_model(&TinyWeights::default()), &ModelMeta::new("x")).unwrap();
    std::fs::remove_file(sidecar_path(&path)).unwrap();
    assert!(matches!(NeuralModel::load(&path), Err(InferError::Metadata { .. })));
    let mut meta = ModelMeta::new("x");
    meta.labels = vec!["no".into(), "yes".into()];
    let path = write_model(dir.path(), "m2", &tiny_model(&TinyWeights::default()), &meta).unwrap();
    assert!(matches!(NeuralModel::load(&path), Err(InferError::Metadata { .. })));
    let mut meta = ModelMeta::new("x");
    meta.sample_rate = 8000;
    let path = write_model(dir.path(), "m3", &tiny_model(&TinyWeights::default()), &meta).unwrap();
    assert!(matches!(NeuralModel::load(&path), Err(InferError::Metadata { .. })));
    std::fs::write(dir.path().join("junk.onnx"), b"not a model").unwrap();
    std::fs::write(dir.path().join("junk.json"), serde_json::to_string(&ModelMeta::new("x")).unwrap()).unwrap();
    assert!(matches!(NeuralModel::load(&dir.path().join("junk.onnx")), Err(InferError::Load { .. })));
}

#[test]
fn reversed_label_order_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let w = TinyWeights::default();
    let swapped = TinyWeights { w: [[w.w[0][1], w.w[0][0]], [w.w[1][1], w.w[1][0]]], b: [w.b[1], w.b[0]] };
    let mut meta = ModelMeta::new("swapped");
    meta.labels = vec!["present".into(), "absent".into()];
    let path = write_model(dir.path(), "s", &tiny_model(&swapped), &meta).unwrap();
    let m = NeuralModel::load(&path).unwrap();
    let clips = random_clips(10, 5);
    for (c, p) in clips.iter().zip(m.probabilities(&clips).unwrap()) {
        assert!((p - tiny_probability(&w, c)).abs() < 1e-5);
    }
}

#[test]
fn nan_output_is_a_backend_fault() {
    let dir = tempfile::tempdir().unwrap();
    // sqrt of a normalized waveform is NaN wherever a sample is negative;
    // the all-zero load probe stays finite
    let nodes = vec![
        node("Sqrt", &["x"], &["root"], vec![]),
        node("ReduceMean", &["root"], &["mean"], vec![ints_attr("axes", &[1]), int_attr("keepdims", 1)]),
        node("MatMul", &["mean", "W"], &["logits"], vec![]),
    ];
    let proto = model(nodes, vec![float_tensor("W", &[1, 2], vec![1.0, -1.0])], 2);
    let path = write_model(dir.path(), "nan", &proto, &ModelMeta::new("nan")).unwrap();
    let m = NeuralModel::load(&path).unwrap();
    let clip: Vec<f32> = (0..800).map(|i| ((i as f32) * 0.1).sin() * 0.5).collect();
    assert!(matches!(m.probabilities(&[clip]), Err(InferError::Fault(_))));
}
