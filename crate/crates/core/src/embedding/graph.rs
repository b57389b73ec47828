//! In-process inference over an exported ONNX encoder pair.
//!
//! A graph directory holds `graph.json` ([`GraphMeta`]), the two model files
//! it names, and a token table: JSON lines `{"text": ..., "ids": [...]}` with
//! captions tokenized offline to exactly `context_length` ids.
//!
//! The image entry point takes `f32[1, 3, R, R]` (RGB, normalized with the
//! recorded mean/std); the text entry point takes `i64[1, context_length]`.
//! Both return a `[1, dim]` feature.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use super::{check_dim, BackendDescriptor, BackendKind, EmbeddingKey, EmbeddingVector, Encoder};
use crate::error::{Result, SdsError};
use crate::fsutil;
use crate::imaging::ImageBuffer;

#[allow(clippy::excessive_precision)]
pub const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
#[allow(clippy::excessive_precision)]
pub const CLIP_STD: [f32; 3] = [0.268_629_54, 0.261_302_58, 0.275_777_11];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub model_id: String,
    pub dim: usize,
    pub input_resolution: u32,
    pub context_length: usize,
    pub image_encoder: PathBuf,
    pub text_encoder: PathBuf,
    pub tokens: PathBuf,
    #[serde(default = "default_mean")]
    pub mean: [f32; 3],
    #[serde(default = "default_std")]
    pub std: [f32; 3],
}

fn default_mean() -> [f32; 3] {
    CLIP_MEAN
}

fn default_std() -> [f32; 3] {
    CLIP_STD
}

#[derive(Deserialize)]
struct TokenLine {
    text: String,
    ids: Vec<i64>,
}

type Plan = Arc<TypedRunnableModel>;

pub struct GraphBackend {
    descriptor: BackendDescriptor,
    meta: GraphMeta,
    image_plan: Plan,
    text_plan: Plan,
    tokens: HashMap<String, Vec<i64>>,
}

impl std::fmt::Debug for GraphBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphBackend").field("meta", &self.meta).finish_non_exhaustive()
    }
}

fn backend_err(context: &str) -> impl Fn(TractError) -> SdsError + '_ {
    move |e| SdsError::Backend(format!("{context}: {e:#}"))
}

impl GraphBackend {
    pub fn open(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("graph.json");
        let meta: GraphMeta = serde_json::from_str(&fsutil::read_to_string(&meta_path)?).map_err(|source| {
            SdsError::Json {
                path: meta_path.clone(),
                source,
            }
        })?;
        if meta.dim == 0 || meta.input_resolution == 0 || meta.context_length == 0 {
            return Err(SdsError::Backend("graph meta has a zero dimension".into()));
        }
        let r = meta.input_resolution as usize;
        let image_plan = load_plan(&dir.join(&meta.image_encoder), f32::fact([1, 3, r, r]).into())?;
        let text_plan = load_plan(
            &dir.join(&meta.text_encoder),
            i64::fact([1, meta.context_length]).into(),
        )?;
        let tokens = load_tokens(&dir.join(&meta.tokens), meta.context_length)?;
        Ok(Self {
            descriptor: BackendDescriptor {
                kind: BackendKind::Graph,
                model_id: meta.model_id.clone(),
                dim: meta.dim,
                input_resolution: meta.input_resolution,
            },
            meta,
            image_plan,
            text_plan,
            tokens,
        })
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    /// Resize the short side to the input resolution, centre crop, normalize,
    /// and lay out as NCHW.
    pub fn preprocess(&self, image: &ImageBuffer) -> Vec<f32> {
        let r = self.meta.input_resolution;
        let (h, w) = (image.height(), image.width());
        let (nh, nw) = if h <= w {
            (r, ((u64::from(w) * u64::from(r) + u64::from(h) / 2) / u64::from(h)).max(u64::from(r)) as u32)
        } else {
            (((u64::from(h) * u64::from(r) + u64::from(w) / 2) / u64::from(w)).max(u64::from(r)) as u32, r)
        };
        let resized = imageops::resize(&image.to_rgb(), nw, nh, FilterType::CatmullRom);
        let top = (nh - r) / 2;
        let left = (nw - r) / 2;
        let plane = (r * r) as usize;
        let mut out = vec![0f32; 3 * plane];
        for y in 0..r {
            for x in 0..r {
                let px = resized.get_pixel(left + x, top + y).0;
                for c in 0..3 {
                    let v = f32::from(px[c]) / 255.0;
                    out[c * plane + (y * r + x) as usize] = (v - self.meta.mean[c]) / self.meta.std[c];
                }
            }
        }
        out
    }

    fn run(&self, plan: &Plan, input: Tensor, what: &str) -> Result<EmbeddingVector> {
        let outputs = plan.run(tvec!(input.into())).map_err(backend_err(what))?;
        let first = outputs
            .first()
            .ok_or_else(|| SdsError::Backend(format!("{what}: model produced no output")))?;
        let view = first.to_plain_array_view::<f32>().map_err(backend_err(what))?;
        let v = EmbeddingVector::new(view.iter().copied().collect())?;
        check_dim(&self.descriptor, &v)?;
        Ok(v)
    }
}

fn load_plan(path: &Path, fact: InferenceFact) -> Result<Plan> {
    let ctx = path.display().to_string();
    tract_onnx::onnx()
        .model_for_path(path)
        .and_then(|m| m.with_input_fact(0, fact))
        .and_then(|m| m.into_optimized())
        .and_then(|m| m.into_runnable())
        .map_err(|e| SdsError::Backend(format!("loading {ctx}: {e:#}")))
}

fn load_tokens(path: &Path, context_length: usize) -> Result<HashMap<String, Vec<i64>>> {
    let file = std::fs::File::open(path).map_err(|e| SdsError::io(path, e))?;
    let mut tokens = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SdsError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| SdsError::ManifestLine {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let entry: TokenLine = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        if entry.ids.len() != context_length {
            return Err(at(format!(
                "{} token ids, context length is {context_length}",
                entry.ids.len()
            )));
        }
        tokens.insert(entry.text, entry.ids);
    }
    Ok(tokens)
}

impl Encoder for GraphBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode_text(&self, _key: &EmbeddingKey, caption: &str) -> Result<EmbeddingVector> {
        let ids = self
            .tokens
            .get(caption)
            .ok_or_else(|| SdsError::Backend(format!("no token ids for caption {caption:?}")))?;
        let input = Tensor::from_shape(&[1, ids.len()], ids).map_err(backend_err("text input"))?;
        self.run(&self.text_plan, input, "text encoder")
    }

    fn encode_image(&self, key: &EmbeddingKey, image: Option<&ImageBuffer>) -> Result<EmbeddingVector> {
        let image = image.ok_or_else(|| SdsError::Backend(format!("graph backend needs pixels for {key}")))?;
        let r = self.meta.input_resolution as usize;
        let input = Tensor::from_shape(&[1, 3, r, r], &self.preprocess(image)).map_err(backend_err("image input"))?;
        self.run(&self.image_plan, input, "image encoder")
    }
}
