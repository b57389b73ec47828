//! Stage score files: JSON lines with a header carrying the config hash.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asf::{AsfRun, ScoredAnnotation};
use crate::error::{Result, SdsError};
use crate::fsutil;
use crate::pcs::{PcsResult, PcsRun, SampleError};

pub const PCS_SCORES: &str = "pcs_scores.jsonl";
pub const PCS_HISTOGRAM: &str = "pcs_histogram.csv";
pub const ASF_SCORES: &str = "asf_scores.jsonl";
pub const ASF_GROUPS: &str = "asf_groups.csv";
pub const CLASS_RETENTION: &str = "class_retention.csv";
pub const SELECTED_MANIFEST: &str = "selected.manifest";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageHeader {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub count: usize,
    pub errored: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PcsLine {
    Header(StageHeader),
    Result(PcsResult),
    Error(SampleError),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum AsfLine {
    Header(StageHeader),
    Score(ScoredAnnotation),
    Error(SampleError),
}

fn to_lines<T: Serialize>(lines: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(&l).expect("stage line serializes"));
        out.push('\n');
    }
    out
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| SdsError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SdsError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SdsError::ManifestLine {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

fn check_header(path: &Path, header: &StageHeader, stage: &str, hash: Option<&str>) -> Result<()> {
    if header.stage != stage {
        return Err(SdsError::StaleArtifact {
            path: path.to_path_buf(),
            msg: format!("expected a {stage} file, found {}", header.stage),
        });
    }
    if let Some(h) = hash {
        if header.config_hash != h {
            return Err(SdsError::StaleArtifact {
                path: path.to_path_buf(),
                msg: format!("config hash {} does not match {h}", header.config_hash),
            });
        }
    }
    Ok(())
}

pub fn write_pcs_scores(path: &Path, run: &PcsRun, config_hash: &str, seed: u64) -> Result<()> {
    let header = PcsLine::Header(StageHeader {
        stage: "pcs".into(),
        config_hash: config_hash.into(),
        seed,
        count: run.results.len(),
        errored: run.errors.len(),
    });
    let body = std::iter::once(header)
        .chain(run.results.iter().cloned().map(PcsLine::Result))
        .chain(run.errors.iter().cloned().map(PcsLine::Error));
    fsutil::write_atomic(path, to_lines(body).as_bytes())
}

/// Read a PCS score file, optionally requiring a config hash.
pub fn read_pcs_scores(path: &Path, expect_hash: Option<&str>) -> Result<(StageHeader, PcsRun)> {
    let mut header = None;
    let mut run = PcsRun::default();
    for line in read_lines::<PcsLine>(path)? {
        match line {
            PcsLine::Header(h) => header = Some(h),
            PcsLine::Result(r) => run.results.push(r),
            PcsLine::Error(e) => run.errors.push(e),
        }
    }
    let header = header.ok_or_else(|| SdsError::StaleArtifact {
        path: path.to_path_buf(),
        msg: "missing header".into(),
    })?;
    check_header(path, &header, "pcs", expect_hash)?;
    Ok((header, run))
}

pub fn write_asf_scores(path: &Path, run: &AsfRun, config_hash: &str, seed: u64) -> Result<()> {
    let header = AsfLine::Header(StageHeader {
        stage: "asf".into(),
        config_hash: config_hash.into(),
        seed,
        count: run.scored.len(),
        errored: run.errors.len(),
    });
    let body = std::iter::once(header)
        .chain(run.scored.iter().cloned().map(AsfLine::Score))
        .chain(run.errors.iter().cloned().map(AsfLine::Error));
    fsutil::write_atomic(path, to_lines(body).as_bytes())
}

pub fn read_asf_scores(path: &Path, expect_hash: Option<&str>) -> Result<(StageHeader, AsfRun)> {
    let mut header = None;
    let mut run = AsfRun::default();
    for line in read_lines::<AsfLine>(path)? {
        match line {
            AsfLine::Header(h) => header = Some(h),
            AsfLine::Score(s) => run.scored.push(s),
            AsfLine::Error(e) => run.errors.push(e),
        }
    }
    let header = header.ok_or_else(|| SdsError::StaleArtifact {
        path: path.to_path_buf(),
        msg: "missing header".into(),
    })?;
    check_header(path, &header, "asf", expect_hash)?;
    Ok((header, run))
}

/// CSV with a leading `# config_hash=... seed=...` comment line.
pub fn csv_with_provenance(body: &str, config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}\n{body}")
}
