//! A tiny exported model for tests, demos and the parity check.
//!
//! The graph normalizes nothing itself; it reads the already normalized
//! waveform, takes mean and max absolute amplitude over time, and maps
//! that pair to two logits with a dense layer. Mean pooling over time
//! makes it sensitive to padding, which is what batching tests need.

use std::path::{Path, PathBuf};

use burstkit::audio::{synthesize_balanced, CANONICAL_RATE};
use prost::Message;
use tract_onnx::pb::{
    attribute_proto::AttributeType, tensor_proto::DataType, tensor_shape_proto::dimension, tensor_shape_proto::Dimension,
    type_proto, AttributeProto, GraphProto, ModelProto, NodeProto, OperatorSetIdProto, TensorProto, TensorShapeProto,
    TypeProto, ValueInfoProto,
};

use crate::{normalize, parity_path, sidecar_path, softmax_present, InferError, ModelMeta, ParityFixture};

pub const OPSET: i64 = 13;

/// `[features][logits]` dense weights plus bias; features are
/// (mean |x|, max |x|).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TinyWeights {
    pub w: [[f32; 2]; 2],
    pub b: [f32; 2],
}

impl Default for TinyWeights {
    fn default() -> Self {
        Self { w: [[0.0, -2.0], [0.0, 0.5]], b: [0.0, -0.5] }
    }
}

pub fn float_tensor(name: &str, dims: &[i64], data: Vec<f32>) -> TensorProto {
    TensorProto { name: name.into(), dims: dims.to_vec(), data_type: DataType::Float as i32, float_data: data, ..Default::default() }
}

pub fn ints_attr(name: &str, ints: &[i64]) -> AttributeProto {
    AttributeProto { name: name.into(), r#type: AttributeType::Ints as i32, ints: ints.to_vec(), ..Default::default() }
}

pub fn int_attr(name: &str, i: i64) -> AttributeProto {
    AttributeProto { name: name.into(), r#type: AttributeType::Int as i32, i, ..Default::default() }
}

pub fn node(op: &str, inputs: &[&str], outputs: &[&str], attribute: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        op_type: op.into(),
        name: outputs[0].into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: outputs.iter().map(|s| s.to_string()).collect(),
        attribute,
        ..Default::default()
    }
}

/// A float tensor value with named (symbolic) or fixed dimensions.
pub fn value_info(name: &str, dims: &[Result<i64, &str>]) -> ValueInfoProto {
    let dim = dims
        .iter()
        .map(|d| Dimension {
            value: Some(match d {
                Ok(v) => dimension::Value::DimValue(*v),
                Err(p) => dimension::Value::DimParam(p.to_string()),
            }),
            ..Default::default()
        })
        .collect();
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: DataType::Float as i32,
                shape: Some(TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

/// Wraps nodes into a model with input `x: [batch, samples]` and output
/// `logits: [batch, n_logits]`.
pub fn model(nodes: Vec<NodeProto>, initializer: Vec<TensorProto>, n_logits: i64) -> ModelProto {
    ModelProto {
        ir_version: 7,
        producer_name: "burstkit-fixture".into(),
        opset_import: vec![OperatorSetIdProto { domain: String::new(), version: OPSET }],
        graph: Some(GraphProto {
            name: "burst".into(),
            node: nodes,
            initializer,
            input: vec![value_info("x", &[Err("batch"), Err("samples")])],
            output: vec![value_info("logits", &[Err("batch"), Ok(n_logits)])],
            ..Default::default()
        }),
        ..Default::default()
    }
}

/// The pooled-amplitude graph with `n_logits` outputs; anything but 2 is
/// a contract violation the loader must reject.
pub fn pooled_model(w: &[f32], b: &[f32], n_logits: i64) -> ModelProto {
    let nodes = vec![
        node("Abs", &["x"], &["abs"], vec![]),
        node("ReduceMean", &["abs"], &["mean"], vec![ints_attr("axes", &[1]), int_attr("keepdims", 1)]),
        node("ReduceMax", &["abs"], &["max"], vec![ints_attr("axes", &[1]), int_attr("keepdims", 1)]),
        node("Concat", &["mean", "max"], &["feat"], vec![int_attr("axis", 1)]),
        node("MatMul", &["feat", "W"], &["mm"], vec![]),
        node("Add", &["mm", "B"], &["logits"], vec![]),
    ];
    let init = vec![float_tensor("W", &[2, n_logits], w.to_vec()), float_tensor("B", &[n_logits], b.to_vec())];
    model(nodes, init, n_logits)
}

pub fn tiny_model(weights: &TinyWeights) -> ModelProto {
    let w: Vec<f32> = weights.w.iter().flatten().copied().collect();
    pooled_model(&w, &weights.b, 2)
}

/// The tiny model's forward pass computed directly, for one normalized
/// and zero-padded row.
pub fn tiny_logits(weights: &TinyWeights, row: &[f32]) -> [f64; 2] {
    let mean = row.iter().map(|v| v.abs() as f64).sum::<f64>() / row.len() as f64;
    let max = row.iter().fold(0.0f64, |m, v| m.max(v.abs() as f64));
    let f = [mean, max];
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        *o = weights.b[k] as f64 + f[0] * weights.w[0][k] as f64 + f[1] * weights.w[1][k] as f64;
    }
    out
}

/// Reference P(present) for a raw clip: normalize, pad to the minimum,
/// then the direct forward pass.
pub fn tiny_probability(weights: &TinyWeights, clip: &[f32]) -> f64 {
    let mut row = normalize(clip);
    if row.len() < crate::MIN_SAMPLES {
        row.resize(crate::MIN_SAMPLES, 0.0);
    }
    let l = tiny_logits(weights, &row);
    softmax_present([l[0] as f32, l[1] as f32], 1).expect("finite")
}

fn io_err(path: &Path, e: std::io::Error) -> InferError {
    InferError::Load { path: path.display().to_string(), message: e.to_string() }
}

/// Writes `<dir>/<stem>.onnx` and its sidecar; returns the model path.
pub fn write_model(dir: &Path, stem: &str, proto: &ModelProto, meta: &ModelMeta) -> Result<PathBuf, InferError> {
    let path = dir.join(format!("{stem}.onnx"));
    std::fs::write(&path, proto.encode_to_vec()).map_err(|e| io_err(&path, e))?;
    let side = sidecar_path(&path);
    std::fs::write(&side, serde_json::to_string_pretty(meta).expect("meta serializes")).map_err(|e| io_err(&side, e))?;
    Ok(path)
}

/// Tiny model, sidecar and an 8-clip parity fixture of synthetic stops.
pub fn write_tiny_bundle(dir: &Path, stem: &str, seed: u64) -> Result<PathBuf, InferError> {
    let weights = TinyWeights::default();
    let mut meta = ModelMeta::new("tiny-fixture");
    meta.run_id = Some(format!("fixture-seed-{seed}"));
    let path = write_model(dir, stem, &tiny_model(&weights), &meta)?;
    let clips: Vec<Vec<f32>> = synthesize_balanced::<f32>(4, 20.0, seed)
        .map_err(|e| InferError::Input(e.to_string()))?
        .into_iter()
        .map(|(c, _)| c.into_samples())
        .collect();
    let probabilities = clips.iter().map(|c| tiny_probability(&weights, c)).collect();
    ParityFixture { sample_rate: CANONICAL_RATE, clips, probabilities }.write(&parity_path(&path))?;
    Ok(path)
}
