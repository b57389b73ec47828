//! A tiny linear encoder pair in ONNX form, for exercising the graph backend
//! without an exported vision-language model.
//!
//! Image: flatten `f32[1, 3, R, R]`, multiply by `W_img` (`3RR x dim`), add a
//! bias. Text: cast `i64[1, ctx]` ids to float, multiply by `W_txt`
//! (`ctx x dim`), add a bias. Weights are drawn from a seeded ChaCha stream.

use std::path::Path;

use prost::Message;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tract_onnx::pb;

use crate::error::{Result, SdsError};
use crate::fsutil;

const FLOAT: i32 = 1;
const INT64: i32 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGraph {
    pub dim: usize,
    pub input_resolution: usize,
    pub context_length: usize,
    pub image_weights: Vec<f32>,
    pub image_bias: Vec<f32>,
    pub text_weights: Vec<f32>,
    pub text_bias: Vec<f32>,
}

impl LinearGraph {
    pub fn random(dim: usize, input_resolution: usize, context_length: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect() };
        let r = input_resolution;
        Self {
            dim,
            input_resolution,
            context_length,
            image_weights: draw(3 * r * r * dim),
            image_bias: draw(dim),
            text_weights: draw(context_length * dim),
            text_bias: draw(dim),
        }
    }

    /// Toy tokenizer: byte values mod 50, zero padded to the context length.
    pub fn token_ids(&self, text: &str) -> Vec<i64> {
        (0..self.context_length)
            .map(|i| text.as_bytes().get(i).map_or(0, |b| i64::from(b % 50)))
            .collect()
    }

    /// Text feature computed directly, for checking the backend.
    pub fn text_feature(&self, text: &str) -> Vec<f32> {
        let ids = self.token_ids(text);
        (0..self.dim)
            .map(|d| {
                self.text_bias[d]
                    + ids
                        .iter()
                        .enumerate()
                        .map(|(i, &t)| t as f32 * self.text_weights[i * self.dim + d])
                        .sum::<f32>()
            })
            .collect()
    }

    /// Write `graph.json`, both models and a token table for `captions`.
    pub fn write(&self, dir: &Path, model_id: &str, captions: &[String]) -> Result<()> {
        let r = self.input_resolution as i64;
        let (dim, ctx) = (self.dim as i64, self.context_length as i64);
        let image = pb::GraphProto {
            name: "image".into(),
            node: vec![
                node("Flatten", &["pixels"], "flat", vec![int_attr("axis", 1)]),
                node("MatMul", &["flat", "w"], "proj", vec![]),
                node("Add", &["proj", "b"], "feat", vec![]),
            ],
            initializer: vec![
                tensor("w", &[3 * r * r, dim], &self.image_weights),
                tensor("b", &[dim], &self.image_bias),
            ],
            input: vec![value_info("pixels", FLOAT, &[1, 3, r, r])],
            output: vec![value_info("feat", FLOAT, &[1, dim])],
            ..Default::default()
        };
        let text = pb::GraphProto {
            name: "text".into(),
            node: vec![
                node("Cast", &["ids"], "idsf", vec![int_attr("to", i64::from(FLOAT))]),
                node("MatMul", &["idsf", "w"], "proj", vec![]),
                node("Add", &["proj", "b"], "feat", vec![]),
            ],
            initializer: vec![
                tensor("w", &[ctx, dim], &self.text_weights),
                tensor("b", &[dim], &self.text_bias),
            ],
            input: vec![value_info("ids", INT64, &[1, ctx])],
            output: vec![value_info("feat", FLOAT, &[1, dim])],
            ..Default::default()
        };
        fsutil::write_atomic(&dir.join("image.onnx"), &model(image).encode_to_vec())?;
        fsutil::write_atomic(&dir.join("text.onnx"), &model(text).encode_to_vec())?;

        let mut tokens = String::new();
        for c in captions {
            let line = serde_json::json!({"text": c, "ids": self.token_ids(c)});
            tokens.push_str(&line.to_string());
            tokens.push('\n');
        }
        fsutil::write_atomic(&dir.join("tokens.jsonl"), tokens.as_bytes())?;
        let meta = serde_json::json!({
            "model_id": model_id,
            "dim": self.dim,
            "input_resolution": self.input_resolution,
            "context_length": self.context_length,
            "image_encoder": "image.onnx",
            "text_encoder": "text.onnx",
            "tokens": "tokens.jsonl",
        });
        let meta = serde_json::to_string_pretty(&meta).map_err(|e| SdsError::Backend(e.to_string()))?;
        fsutil::write_atomic(&dir.join("graph.json"), meta.as_bytes())
    }
}

fn model(graph: pb::GraphProto) -> pb::ModelProto {
    pb::ModelProto {
        ir_version: 8,
        opset_import: vec![pb::OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        producer_name: "sds-synth".into(),
        graph: Some(graph),
        ..Default::default()
    }
}

fn value_info(name: &str, elem_type: i32, dims: &[i64]) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::{dimension::Value, Dimension};
    let dim = dims
        .iter()
        .map(|d| Dimension {
            value: Some(Value::DimValue(*d)),
            ..Default::default()
        })
        .collect();
    pb::ValueInfoProto {
        name: name.into(),
        r#type: Some(pb::TypeProto {
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type,
                shape: Some(pb::TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn tensor(name: &str, dims: &[i64], data: &[f32]) -> pb::TensorProto {
    pb::TensorProto {
        name: name.into(),
        dims: dims.to_vec(),
        data_type: FLOAT,
        float_data: data.to_vec(),
        ..Default::default()
    }
}

fn node(op: &str, inputs: &[&str], output: &str, attribute: Vec<pb::AttributeProto>) -> pb::NodeProto {
    pb::NodeProto {
        op_type: op.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        name: output.into(),
        attribute,
        ..Default::default()
    }
}

fn int_attr(name: &str, i: i64) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.into(),
        r#type: 2,
        i,
        ..Default::default()
    }
}
