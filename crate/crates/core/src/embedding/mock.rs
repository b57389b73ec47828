use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_dim, BackendDescriptor, BackendKind, EmbeddingKey, EmbeddingVector, Encoder};
use crate::error::{Result, SdsError};
use crate::fsutil;
use crate::imaging::ImageBuffer;

/// Table-driven encoder: captions and image checksums map to fixed vectors.
#[derive(Debug, Clone)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    text: BTreeMap<String, EmbeddingVector>,
    image: BTreeMap<String, EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
struct MockFile {
    model_id: String,
    dim: usize,
    text: BTreeMap<String, Vec<f32>>,
    image: BTreeMap<String, Vec<f32>>,
}

impl MockBackend {
    pub fn new(dim: usize) -> Self {
        Self {
            descriptor: BackendDescriptor {
                kind: BackendKind::Mock,
                model_id: "mock".into(),
                dim,
                input_resolution: 0,
            },
            text: BTreeMap::new(),
            image: BTreeMap::new(),
        }
    }

    pub fn insert_text(&mut self, caption: &str, values: Vec<f32>) -> Result<()> {
        let v = EmbeddingVector::new(values)?;
        check_dim(&self.descriptor, &v)?;
        self.text.insert(caption.to_string(), v);
        Ok(())
    }

    /// Register a vector for an exact image (matched by checksum).
    pub fn insert_image(&mut self, image: &ImageBuffer, values: Vec<f32>) -> Result<()> {
        self.insert_image_checksum(image.checksum(), values)
    }

    pub fn insert_image_checksum(&mut self, checksum: String, values: Vec<f32>) -> Result<()> {
        let v = EmbeddingVector::new(values)?;
        check_dim(&self.descriptor, &v)?;
        self.image.insert(checksum, v);
        Ok(())
    }

    pub fn has_image(&self, image: &ImageBuffer) -> bool {
        self.image.contains_key(&image.checksum())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        let file: MockFile = serde_json::from_str(&text).map_err(|source| SdsError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let mut backend = Self::new(file.dim);
        backend.descriptor.model_id = file.model_id;
        for (k, v) in file.text {
            backend.insert_text(&k, v)?;
        }
        for (k, v) in file.image {
            backend.insert_image_checksum(k, v)?;
        }
        Ok(backend)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let dump = |m: &BTreeMap<String, EmbeddingVector>| {
            m.iter().map(|(k, v)| (k.clone(), v.values().to_vec())).collect()
        };
        let file = MockFile {
            model_id: self.descriptor.model_id.clone(),
            dim: self.descriptor.dim,
            text: dump(&self.text),
            image: dump(&self.image),
        };
        let json = serde_json::to_string(&file).expect("mock table serializes");
        fsutil::write_atomic(path, json.as_bytes())
    }
}

impl Encoder for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode_text(&self, _key: &EmbeddingKey, caption: &str) -> Result<EmbeddingVector> {
        self.text
            .get(caption)
            .cloned()
            .ok_or_else(|| SdsError::Backend(format!("mock has no text entry for {caption:?}")))
    }

    fn encode_image(&self, key: &EmbeddingKey, image: Option<&ImageBuffer>) -> Result<EmbeddingVector> {
        let image = image.ok_or_else(|| SdsError::Backend("mock backend needs pixels".into()))?;
        self.image
            .get(&image.checksum())
            .cloned()
            .ok_or_else(|| SdsError::Backend(format!("mock has no image entry for {key}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn injected_tables() {
        let mut m = MockBackend::new(3);
        m.insert_text("a dog", vec![1.0, 0.0, 0.0]).unwrap();
        let key = EmbeddingKey::text("s1");
        assert_eq!(m.encode_text(&key, "a dog").unwrap().values(), &[1.0, 0.0, 0.0]);
        assert_eq!(m.encode_text(&key, "a dog").unwrap(), m.encode_text(&key, "a dog").unwrap());
        assert!(m.encode_text(&key, "a cat").is_err());
        assert!(m.insert_text("bad", vec![1.0, 0.0]).is_err());

        let img = ImageBuffer::filled(2, 2, [1, 2, 3]).unwrap();
        m.insert_image(&img, vec![0.0, 1.0, 0.0]).unwrap();
        let k = EmbeddingKey::orig("s1");
        assert_eq!(m.encode_image(&k, Some(&img)).unwrap().values(), &[0.0, 1.0, 0.0]);
        let other = ImageBuffer::filled(2, 2, [1, 2, 4]).unwrap();
        assert!(m.encode_image(&k, Some(&other)).is_err());
        assert!(m.encode_image(&k, None).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mock.json");
        let mut m = MockBackend::new(2);
        m.insert_text("t", vec![0.25, -1.5]).unwrap();
        m.insert_image(&ImageBuffer::filled(1, 1, [9, 9, 9]).unwrap(), vec![1e-7, 3.0])
            .unwrap();
        m.save(&path).unwrap();
        let back = MockBackend::load(&path).unwrap();
        assert_eq!(back.text, m.text);
        assert_eq!(back.image, m.image);
        assert_eq!(back.descriptor, m.descriptor);
    }
}
