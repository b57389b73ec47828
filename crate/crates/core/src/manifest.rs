//! Dataset data model: sample records, the class table, and the line-delimited
//! JSON manifest format.
//!
//! A manifest holds one record per line:
//!
//! ```text
//! {"id":"s1","image":"img/s1.png","annotation":"ann/s1.png","caption":"a dog on grass","classes":[12]}
//! ```
//!
//! Image and annotation paths are relative to the directory that holds the
//! manifest file. Class index 0 is background and 255 is ignore; neither may
//! appear in a record's class set.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdsError};
use crate::fsutil;

pub const BACKGROUND: u8 = 0;
pub const IGNORE: u8 = 255;

/// One synthetic image/annotation pair with its generation prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub image: PathBuf,
    pub annotation: PathBuf,
    pub caption: String,
    pub classes: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl SampleRecord {
    pub fn image_path(&self, root: &Path) -> PathBuf {
        root.join(&self.image)
    }

    pub fn annotation_path(&self, root: &Path) -> PathBuf {
        root.join(&self.annotation)
    }

    /// Check the record invariants against a class table.
    pub fn validate(&self, table: &ClassTable) -> Result<()> {
        let bad = |msg: String| SdsError::InvalidRecord {
            id: self.id.clone(),
            msg,
        };
        if self.id.is_empty() {
            return Err(bad("empty id".into()));
        }
        if self.caption.trim().is_empty() {
            return Err(bad("empty caption".into()));
        }
        if self.classes.is_empty() {
            return Err(bad("empty class set".into()));
        }
        for &c in &self.classes {
            if c == BACKGROUND || c == IGNORE || !table.contains(c) {
                return Err(bad(format!("unknown/forbidden class index {c}")));
            }
        }
        if self.classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("class set must be sorted ascending without duplicates".into()));
        }
        Ok(())
    }
}

/// Mapping of foreground class indices `1..=L` to names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: BTreeMap<u8, String>,
}

#[derive(Serialize, Deserialize)]
struct ClassTableFile {
    num_classes: usize,
    classes: BTreeMap<String, String>,
}

impl ClassTable {
    pub fn new(entries: BTreeMap<u8, String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(SdsError::ClassTable("no classes".into()));
        }
        for (expected, &idx) in (1u8..).zip(entries.keys()) {
            if idx != expected {
                return Err(SdsError::ClassTable(format!(
                    "indices must be contiguous from 1, found {idx} where {expected} was expected"
                )));
            }
        }
        if entries.len() >= IGNORE as usize {
            return Err(SdsError::ClassTable(format!(
                "{} classes collide with the ignore index",
                entries.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in entries.values() {
            if !seen.insert(name.as_str()) {
                return Err(SdsError::ClassTable(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self { names: entries })
    }

    /// Table with classes named `class_1..class_L`.
    pub fn numbered(num_classes: u8) -> Result<Self> {
        Self::new((1..=num_classes).map(|i| (i, format!("class_{i}"))).collect())
    }

    pub fn num_classes(&self) -> u8 {
        self.names.len() as u8
    }

    pub fn contains(&self, class: u8) -> bool {
        self.names.contains_key(&class)
    }

    pub fn name(&self, class: u8) -> Option<&str> {
        self.names.get(&class).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, &str)> {
        self.names.iter().map(|(&k, v)| (k, v.as_str()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        let file: ClassTableFile = serde_json::from_str(&text).map_err(|source| SdsError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let mut entries = BTreeMap::new();
        for (k, v) in file.classes {
            let idx: u8 = k
                .parse()
                .map_err(|_| SdsError::ClassTable(format!("bad class index {k:?}")))?;
            entries.insert(idx, v);
        }
        let table = Self::new(entries)?;
        if table.names.len() != file.num_classes {
            return Err(SdsError::ClassTable(format!(
                "num_classes is {} but {} entries are listed",
                file.num_classes,
                table.names.len()
            )));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ClassTableFile {
            num_classes: self.names.len(),
            classes: self
                .names
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("class table serializes");
        text.push('\n');
        fsutil::write_atomic(path, text.as_bytes())
    }
}

/// Read and validate a manifest. Records come back in file order.
pub fn load_manifest(path: &Path, table: &ClassTable) -> Result<Vec<SampleRecord>> {
    let file = std::fs::File::open(path).map_err(|e| SdsError::io(path, e))?;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SdsError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at_line = |msg: String| SdsError::ManifestLine {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let record: SampleRecord = serde_json::from_str(&line).map_err(|e| at_line(e.to_string()))?;
        record.validate(table).map_err(|e| at_line(e.to_string()))?;
        if !ids.insert(record.id.clone()) {
            return Err(at_line(SdsError::DuplicateId(record.id).to_string()));
        }
        records.push(record);
    }
    Ok(records)
}

/// Serialize records sorted by id, one JSON object per line.
pub fn manifest_to_string(records: &[SampleRecord]) -> String {
    let mut sorted: Vec<&SampleRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = String::new();
    for r in sorted {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(records: &[SampleRecord], path: &Path) -> Result<()> {
    fsutil::write_atomic(path, manifest_to_string(records).as_bytes())
}

/// Re-express record paths (relative to `from_dir`) relative to `to_dir`.
pub fn rebase(records: &[SampleRecord], from_dir: &Path, to_dir: &Path) -> Result<Vec<SampleRecord>> {
    let from = absolute(from_dir)?;
    let to = absolute(to_dir)?;
    let rel = |p: &Path| -> PathBuf {
        let abs = from.join(p);
        pathdiff::diff_paths(&abs, &to).unwrap_or(abs)
    };
    Ok(records
        .iter()
        .map(|r| SampleRecord {
            image: rel(&r.image),
            annotation: rel(&r.annotation),
            ..r.clone()
        })
        .collect())
}

fn absolute(dir: &Path) -> Result<PathBuf> {
    if dir.exists() {
        dir.canonicalize().map_err(|e| SdsError::io(dir, e))
    } else {
        std::path::absolute(dir).map_err(|e| SdsError::io(dir, e))
    }
}

/// Directory that manifest-relative paths resolve against.
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Number of records containing each class; every table class is present.
pub fn class_histogram(records: &[SampleRecord], table: &ClassTable) -> BTreeMap<u8, usize> {
    let mut hist: BTreeMap<u8, usize> = table.iter().map(|(c, _)| (c, 0)).collect();
    for r in records {
        let unique: BTreeSet<u8> = r.classes.iter().copied().collect();
        for c in unique {
            *hist.entry(c).or_default() += 1;
        }
    }
    hist
}
