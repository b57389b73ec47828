//! Precomputed embedding store.
//!
//! Layout of a store directory:
//!
//! * `meta.json`: `{"model_id", "dim", "dtype": "f32le", "input_resolution",
//!   "scales", "n_o", "global_seed"}`
//! * `index.jsonl`: one `{"key", "offset", "length"}` object per line, sorted by
//!   key. `offset` is in bytes into `vectors.bin`, `length` counts floats.
//! * `vectors.bin`: packed little-endian `f32` values.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_dim, BackendDescriptor, BackendKind, EmbeddingKey, EmbeddingVector, Encoder};
use crate::error::{Result, SdsError};
use crate::fsutil;
use crate::imaging::ImageBuffer;

pub const DTYPE_F32LE: &str = "f32le";
const META: &str = "meta.json";
const INDEX: &str = "index.jsonl";
const VECTORS: &str = "vectors.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub model_id: String,
    pub dim: usize,
    pub dtype: String,
    #[serde(default)]
    pub input_resolution: u32,
    pub scales: Vec<usize>,
    pub n_o: usize,
    pub global_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    key: String,
    offset: u64,
    length: usize,
}

/// Read-only, thread-safe view of a store directory.
#[derive(Debug)]
pub struct FileStore {
    descriptor: BackendDescriptor,
    meta: StoreMeta,
    index: HashMap<String, (u64, usize)>,
    vectors: File,
    dir: PathBuf,
}

impl FileStore {
    pub fn open(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META);
        let meta: StoreMeta = serde_json::from_str(&fsutil::read_to_string(&meta_path)?)
            .map_err(|source| SdsError::Json {
                path: meta_path.clone(),
                source,
            })?;
        if meta.dtype != DTYPE_F32LE {
            return Err(SdsError::Backend(format!("unsupported store dtype {:?}", meta.dtype)));
        }
        if meta.dim == 0 {
            return Err(SdsError::Backend("store dim is 0".into()));
        }
        let index_path = dir.join(INDEX);
        let file = File::open(&index_path).map_err(|e| SdsError::io(&index_path, e))?;
        let mut index = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SdsError::io(&index_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: IndexEntry = serde_json::from_str(&line).map_err(|e| SdsError::ManifestLine {
                path: index_path.clone(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            index.insert(entry.key, (entry.offset, entry.length));
        }
        let vec_path = dir.join(VECTORS);
        let vectors = File::open(&vec_path).map_err(|e| SdsError::io(&vec_path, e))?;
        Ok(Self {
            descriptor: BackendDescriptor {
                kind: BackendKind::FileStore,
                model_id: meta.model_id.clone(),
                dim: meta.dim,
                input_resolution: meta.input_resolution,
            },
            meta,
            index,
            vectors,
            dir: dir.to_path_buf(),
        })
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, key: &EmbeddingKey) -> bool {
        self.index.contains_key(&key.to_string())
    }

    /// Fail unless the store was built for the same perturbation settings.
    pub fn check_compatible(&self, scales: &[usize], n_o: usize, global_seed: u64) -> Result<()> {
        if self.meta.scales != scales || self.meta.n_o != n_o || self.meta.global_seed != global_seed {
            return Err(SdsError::Config(format!(
                "store {} was built for scales={:?} n_o={} seed={}, run wants scales={:?} n_o={} seed={}",
                self.dir.display(),
                self.meta.scales,
                self.meta.n_o,
                self.meta.global_seed,
                scales,
                n_o,
                global_seed
            )));
        }
        Ok(())
    }

    pub fn get(&self, key: &EmbeddingKey) -> Result<EmbeddingVector> {
        let name = key.to_string();
        let &(offset, length) = self.index.get(&name).ok_or(SdsError::MissingKey(name))?;
        let mut bytes = vec![0u8; length * 4];
        read_at(&self.vectors, &mut bytes, offset).map_err(|e| SdsError::io(self.dir.join(VECTORS), e))?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let v = EmbeddingVector::new(values)?;
        check_dim(&self.descriptor, &v)?;
        Ok(v)
    }
}

#[cfg(unix)]
fn read_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = file.seek_read(buf, offset)?;
        if n == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        buf = &mut buf[n..];
        offset += n as u64;
    }
    Ok(())
}

impl Encoder for FileStore {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode_text(&self, key: &EmbeddingKey, _caption: &str) -> Result<EmbeddingVector> {
        self.get(key)
    }

    fn encode_image(&self, key: &EmbeddingKey, _image: Option<&ImageBuffer>) -> Result<EmbeddingVector> {
        self.get(key)
    }

    fn needs_pixels(&self) -> bool {
        false
    }
}

/// Streams vectors into a new store directory.
pub struct StoreWriter {
    dir: PathBuf,
    meta: StoreMeta,
    index: Vec<IndexEntry>,
    vectors: BufWriter<tempfile::NamedTempFile>,
    offset: u64,
}

impl StoreWriter {
    pub fn create(dir: &Path, meta: StoreMeta) -> Result<Self> {
        if meta.dtype != DTYPE_F32LE {
            return Err(SdsError::Backend(format!("unsupported store dtype {:?}", meta.dtype)));
        }
        std::fs::create_dir_all(dir).map_err(|e| SdsError::io(dir, e))?;
        let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| SdsError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
            index: Vec::new(),
            vectors: BufWriter::new(tmp),
            offset: 0,
        })
    }

    pub fn add(&mut self, key: &EmbeddingKey, vector: &EmbeddingVector) -> Result<()> {
        if vector.dim() != self.meta.dim {
            return Err(SdsError::DimMismatch(self.meta.dim, vector.dim()));
        }
        for v in vector.values() {
            self.vectors
                .write_all(&v.to_le_bytes())
                .map_err(|e| SdsError::io(&self.dir, e))?;
        }
        self.index.push(IndexEntry {
            key: key.to_string(),
            offset: self.offset,
            length: vector.dim(),
        });
        self.offset += vector.dim() as u64 * 4;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.index.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = self.index.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(SdsError::Backend(format!("duplicate store key {}", w[0].key)));
        }
        let tmp = self
            .vectors
            .into_inner()
            .map_err(|e| SdsError::io(&self.dir, e.into_error()))?;
        tmp.persist(self.dir.join(VECTORS))
            .map_err(|e| SdsError::io(&self.dir, e.error))?;
        let mut index = String::new();
        for e in &self.index {
            index.push_str(&serde_json::to_string(e).expect("index entry serializes"));
            index.push('\n');
        }
        fsutil::write_atomic(&self.dir.join(INDEX), index.as_bytes())?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        fsutil::write_atomic(&self.dir.join(META), meta.as_bytes())
    }
}
