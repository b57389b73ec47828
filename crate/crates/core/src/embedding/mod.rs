//! Text and image encoders behind a single contract, plus cosine similarity.
//!
//! Three backends implement [`Encoder`]:
//!
//! * [`MockBackend`] looks vectors up in injected tables (captions and image
//!   checksums). Used for tests and demos that need no model.
//! * [`FileStore`] reads precomputed vectors keyed by [`EmbeddingKey`].
//! * `GraphBackend` (feature `graph`) runs an exported encoder pair in-process.

mod mock;
mod store;

#[cfg(feature = "graph")]
mod graph;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdsError};
use crate::imaging::ImageBuffer;

pub use mock::MockBackend;
pub use store::{FileStore, StoreMeta, StoreWriter};

#[cfg(feature = "graph")]
pub use graph::{GraphBackend, GraphMeta};

/// A finite, non-zero feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(SdsError::Embedding("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SdsError::Embedding("non-finite component".into()));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(SdsError::ZeroNorm);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }
}

/// `a . b / (|a| |b|)`, accumulated in f64.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_raw(a.values(), b.values())
}

pub(crate) fn cosine_raw(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SdsError::DimMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SdsError::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Which encoding of a sample a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Text,
    Orig,
    Mix { scale: usize, order_index: usize },
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Text => f.write_str("text"),
            Variant::Orig => f.write_str("orig"),
            Variant::Mix { scale, order_index } => write!(f, "mix_s{scale}_o{order_index}"),
        }
    }
}

impl FromStr for Variant {
    type Err = SdsError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SdsError::Embedding(format!("bad variant {s:?}"));
        match s {
            "text" => Ok(Variant::Text),
            "orig" => Ok(Variant::Orig),
            _ => {
                let rest = s.strip_prefix("mix_s").ok_or_else(bad)?;
                let (scale, order) = rest.split_once("_o").ok_or_else(bad)?;
                Ok(Variant::Mix {
                    scale: scale.parse().map_err(|_| bad())?,
                    order_index: order.parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

/// Store address `{sample_id}__{variant}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmbeddingKey {
    pub sample_id: String,
    pub variant: Variant,
}

impl EmbeddingKey {
    pub fn text(sample_id: &str) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            variant: Variant::Text,
        }
    }

    pub fn orig(sample_id: &str) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            variant: Variant::Orig,
        }
    }

    pub fn mix(sample_id: &str, scale: usize, order_index: usize) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            variant: Variant::Mix { scale, order_index },
        }
    }
}

impl fmt::Display for EmbeddingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}__{}", self.sample_id, self.variant)
    }
}

impl FromStr for EmbeddingKey {
    type Err = SdsError;

    fn from_str(s: &str) -> Result<Self> {
        let (id, variant) = s
            .rsplit_once("__")
            .ok_or_else(|| SdsError::Embedding(format!("bad key {s:?}")))?;
        Ok(Self {
            sample_id: id.to_string(),
            variant: variant.parse()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    FileStore,
    Graph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub model_id: String,
    pub dim: usize,
    pub input_resolution: u32,
}

/// Text encoder `f` and image encoder `g` of a vision-language model.
///
/// Implementations are pure: the same key and input always give the same
/// vector, whichever thread asks.
pub trait Encoder: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn encode_text(&self, key: &EmbeddingKey, caption: &str) -> Result<EmbeddingVector>;

    /// `image` may be `None` only when [`Encoder::needs_pixels`] is false.
    fn encode_image(&self, key: &EmbeddingKey, image: Option<&ImageBuffer>) -> Result<EmbeddingVector>;

    /// Whether `encode_image` needs decoded pixels.
    fn needs_pixels(&self) -> bool {
        true
    }
}

pub(crate) fn check_dim(desc: &BackendDescriptor, v: &EmbeddingVector) -> Result<()> {
    if v.dim() != desc.dim {
        return Err(SdsError::DimMismatch(desc.dim, v.dim()));
    }
    Ok(())
}

/// Open a backend of the given kind from `path`.
pub fn open_backend(kind: BackendKind, path: &Path) -> Result<Box<dyn Encoder>> {
    match kind {
        BackendKind::Mock => Ok(Box::new(MockBackend::load(path)?)),
        BackendKind::FileStore => Ok(Box::new(FileStore::open(path)?)),
        #[cfg(feature = "graph")]
        BackendKind::Graph => Ok(Box::new(GraphBackend::open(path)?)),
        #[cfg(not(feature = "graph"))]
        BackendKind::Graph => Err(SdsError::Backend(
            "graph backend not compiled in (enable the `graph` feature)".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&v(&[3.0, 4.0]), &v(&[6.0, 8.0])).unwrap(), 1.0);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(SdsError::DimMismatch(2, 3))
        ));
        assert!(matches!(cosine_raw(&[0.0, 0.0], &[1.0, 0.0]), Err(SdsError::ZeroNorm)));
        assert!(matches!(EmbeddingVector::new(vec![0.0; 4]), Err(SdsError::ZeroNorm)));
        assert!(EmbeddingVector::new(vec![f32::NAN, 1.0]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn key_strings() {
        assert_eq!(EmbeddingKey::text("s1").to_string(), "s1__text");
        assert_eq!(EmbeddingKey::orig("s1").to_string(), "s1__orig");
        assert_eq!(EmbeddingKey::mix("s1", 16, 2).to_string(), "s1__mix_s16_o2");
        for k in [
            EmbeddingKey::text("a__b"),
            EmbeddingKey::orig("x"),
            EmbeddingKey::mix("img_001", 32, 0),
        ] {
            assert_eq!(k.to_string().parse::<EmbeddingKey>().unwrap(), k);
        }
        assert!("s1__mix_s16".parse::<EmbeddingKey>().is_err());
        assert!("nokey".parse::<EmbeddingKey>().is_err());
    }

    fn nonzero_pair() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
        (1usize..16).prop_flat_map(|d| {
            (
                proptest::collection::vec(-10.0f32..10.0, d),
                proptest::collection::vec(-10.0f32..10.0, d),
            )
        })
        .prop_filter("nonzero", |(a, b)| {
            a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3)
        })
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant((a, b) in nonzero_pair(), alpha in 0.01f32..100.0) {
            let ab = cosine_raw(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert!((ab - cosine_raw(&b, &a).unwrap()).abs() <= 1e-6);
            let scaled: Vec<f32> = a.iter().map(|x| x * alpha).collect();
            prop_assert!((ab - cosine_raw(&scaled, &b).unwrap()).abs() <= 1e-6);
        }
    }
}
