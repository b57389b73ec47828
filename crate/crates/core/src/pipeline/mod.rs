//! Staged selection run: image gate, annotation filter, manifest emission.
//!
//! Every stage writes its scores to the output directory. A score file whose
//! header carries the current config hash is reused instead of recomputed.

pub mod artifacts;
mod config;
mod report;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{info, warn};

pub use config::{BackendConfig, ReportConfig, RunConfig};
pub use report::{
    errors_by_stage, miou_edges, AsfCounts, ClassRetention, ConfigEcho, GroupRetention, PcsCounts,
    SelectionReport, StageError,
};

use crate::asf::{self, AsfRun, AsfSelection};
use crate::embedding::{self, BackendKind, Encoder, FileStore};
use crate::error::{Result, SdsError};
use crate::fsutil;
use crate::manifest::{self, ClassTable, SampleRecord};
use crate::pcs::{self, Histogram, PcsRun};
use artifacts::*;
use report::ReportInputs;

/// Loaded inputs shared by all stages.
pub struct Inputs {
    pub table: ClassTable,
    pub records: Vec<SampleRecord>,
    /// Directory manifest paths are relative to.
    pub root: PathBuf,
    pub backend: Box<dyn Encoder>,
    pcs_hash: String,
}

impl Inputs {
    pub fn load(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let table = ClassTable::load(&config.class_table)?;
        let records = manifest::load_manifest(&config.manifest, &table)?;
        let backend: Box<dyn Encoder> = match config.backend.kind {
            BackendKind::FileStore => {
                let store = FileStore::open(&config.backend.path)?;
                store.check_compatible(&config.pcs.scales, config.pcs.n_o, config.pcs.global_seed)?;
                Box::new(store)
            }
            kind => embedding::open_backend(kind, &config.backend.path)?,
        };
        let pcs_hash = pcs_config_hash(config, backend.as_ref())?;
        info!(
            "loaded {} records, {} classes, backend {:?}",
            records.len(),
            table.num_classes(),
            config.backend.kind
        );
        Ok(Inputs {
            table,
            root: manifest::manifest_root(&config.manifest),
            records,
            backend,
            pcs_hash,
        })
    }

    /// Hash of everything the image gate depends on.
    pub fn pcs_hash(&self) -> &str {
        &self.pcs_hash
    }
}

fn hash_parts(parts: &[&str]) -> String {
    let mut joined = String::new();
    for p in parts {
        joined.push_str(&p.len().to_string());
        joined.push(':');
        joined.push_str(p);
    }
    fsutil::sha256_hex(joined.as_bytes())
}

/// Content hash of a backend file, or of every regular file in a backend directory.
fn path_fingerprint(path: &Path) -> Result<String> {
    if path.is_file() {
        return fsutil::file_sha256(path);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| SdsError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut parts = Vec::new();
    for p in &entries {
        parts.push(p.file_name().unwrap_or_default().to_string_lossy().into_owned());
        parts.push(fsutil::file_sha256(p)?);
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    Ok(hash_parts(&refs))
}

fn pcs_config_hash(config: &RunConfig, backend: &dyn Encoder) -> Result<String> {
    let manifest_sha = fsutil::file_sha256(&config.manifest)?;
    let table_sha = fsutil::file_sha256(&config.class_table)?;
    let backend_desc = serde_json::to_string(backend.descriptor()).expect("descriptor serializes");
    let backend_sha = path_fingerprint(&config.backend.path)?;
    let pcs = serde_json::to_string(&config.pcs).expect("pcs config serializes");
    let seed = config.seed.to_string();
    Ok(hash_parts(&[
        "pcs",
        &manifest_sha,
        &table_sha,
        &backend_desc,
        &backend_sha,
        &pcs,
        &seed,
    ]))
}

/// Hash of the annotation stage: the gate's hash plus the scoring options and
/// the reference masks of every gated sample.
fn asf_config_hash(config: &RunConfig, inputs: &Inputs, pcs_run: &PcsRun) -> Result<String> {
    let mut parts = vec![
        "asf".to_string(),
        inputs.pcs_hash.clone(),
        config.asf.include_background.to_string(),
    ];
    for id in pcs_run.accepted_ids() {
        let p = asf::reference_mask_path(&config.reference_masks, id);
        parts.push(id.to_string());
        parts.push(if p.is_file() { fsutil::file_sha256(&p)? } else { "missing".into() });
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    Ok(hash_parts(&refs))
}

/// Hash over everything that determines the curated manifest.
fn selection_hash(config: &RunConfig, asf_hash: &str) -> String {
    let asf = serde_json::to_string(&config.asf).expect("asf config serializes");
    hash_parts(&["select", asf_hash, &asf])
}

/// Run the image gate, reusing a matching score file in the output directory.
pub fn pcs_stage(config: &RunConfig, inputs: &Inputs) -> Result<PcsRun> {
    let path = config.output.join(PCS_SCORES);
    if path.is_file() {
        match read_pcs_scores(&path, Some(&inputs.pcs_hash)) {
            Ok((_, run)) => {
                info!("reusing {}", path.display());
                write_pcs_histogram(config, inputs, &run)?;
                return Ok(run);
            }
            Err(SdsError::StaleArtifact { msg, .. }) => {
                warn!("{} is stale ({msg}); recomputing", path.display());
            }
            Err(e) => return Err(e),
        }
    }
    let run = pcs::score_dataset(
        &inputs.records,
        &inputs.root,
        inputs.backend.as_ref(),
        &config.pcs,
        config.workers,
    )?;
    info!(
        "pcs: {} accepted, {} rejected, {} errored",
        run.accepted(),
        run.rejected(),
        run.errors.len()
    );
    write_pcs_scores(&path, &run, &inputs.pcs_hash, config.seed)?;
    write_pcs_histogram(config, inputs, &run)?;
    Ok(run)
}

fn write_pcs_histogram(config: &RunConfig, inputs: &Inputs, run: &PcsRun) -> Result<()> {
    let hist = pcs::score_histogram(&run.results, config.pcs_edges())?;
    let body = csv_with_provenance(&hist.to_csv(), &inputs.pcs_hash, config.seed);
    fsutil::write_atomic(&config.output.join(PCS_HISTOGRAM), body.as_bytes())
}

/// Score the annotations of every gated sample.
pub fn asf_stage(config: &RunConfig, inputs: &Inputs, pcs_run: &PcsRun) -> Result<AsfRun> {
    let hash = asf_config_hash(config, inputs, pcs_run)?;
    let path = config.output.join(ASF_SCORES);
    if path.is_file() {
        match read_asf_scores(&path, Some(&hash)) {
            Ok((_, run)) => {
                info!("reusing {}", path.display());
                return Ok(run);
            }
            Err(SdsError::StaleArtifact { msg, .. }) => {
                warn!("{} is stale ({msg}); recomputing", path.display());
            }
            Err(e) => return Err(e),
        }
    }
    let gated = gated_records(inputs, pcs_run);
    let run = asf::score_annotations(
        &gated,
        &inputs.root,
        &config.reference_masks,
        inputs.table.num_classes(),
        config.asf.iou_options(),
        config.workers,
    )?;
    info!("asf: {} scored, {} errored", run.scored.len(), run.errors.len());
    write_asf_scores(&path, &run, &hash, config.seed)?;
    Ok(run)
}

fn gated_records(inputs: &Inputs, pcs_run: &PcsRun) -> Vec<SampleRecord> {
    let accepted: BTreeSet<&str> = pcs_run.accepted_ids().into_iter().collect();
    inputs
        .records
        .iter()
        .filter(|r| accepted.contains(r.id.as_str()))
        .cloned()
        .collect()
}

/// Select annotations and write the curated manifest, tables and report.
pub fn selection_stage(
    config: &RunConfig,
    inputs: &Inputs,
    pcs_run: &PcsRun,
    asf_run: &AsfRun,
) -> Result<(SelectionReport, Vec<SampleRecord>)> {
    let asf_hash = asf_config_hash(config, inputs, pcs_run)?;
    let accepted: BTreeSet<&str> = pcs_run.accepted_ids().into_iter().collect();
    if let Some(s) = asf_run.scored.iter().find(|s| !accepted.contains(s.sample_id.as_str())) {
        return Err(SdsError::StaleArtifact {
            path: config.output.join(ASF_SCORES),
            msg: format!("{} was not accepted by the image gate", s.sample_id),
        });
    }
    let selection: AsfSelection = asf::select_annotations(&asf_run.scored, &config.asf, config.asf.mode)?;
    for id in &selection.invalid {
        warn!("{id}: annotation has no foreground class; kept out of every group");
    }
    let hash = selection_hash(config, &asf_hash);

    let curated: Vec<SampleRecord> = inputs
        .records
        .iter()
        .filter(|r| selection.selected.contains(&r.id))
        .cloned()
        .collect();
    let curated = manifest::rebase(&curated, &inputs.root, &config.output)?;

    let report = SelectionReport::build(ReportInputs {
        config_hash: &hash,
        records: &inputs.records,
        table: &inputs.table,
        pcs: pcs_run,
        asf: asf_run,
        selection: &selection,
        pcs_histogram: pcs::score_histogram(&pcs_run.results, config.pcs_edges())?,
        miou_histogram: Histogram::from_values(miou_edges(), asf_run.scored.iter().map(|s| s.miou))?,
        config: ConfigEcho {
            seed: config.seed,
            backend: inputs.backend.descriptor().clone(),
            pcs: config.pcs.clone(),
            asf: config.asf.clone(),
        },
    });

    let out = &config.output;
    manifest::write_manifest(&curated, &out.join(SELECTED_MANIFEST))?;
    fsutil::write_atomic(
        &out.join(ASF_GROUPS),
        csv_with_provenance(&report.group_csv(), &hash, config.seed).as_bytes(),
    )?;
    fsutil::write_atomic(
        &out.join(CLASS_RETENTION),
        csv_with_provenance(&report.class_csv(), &hash, config.seed).as_bytes(),
    )?;
    fsutil::write_atomic(&out.join(REPORT_JSON), report.to_json().as_bytes())?;
    fsutil::write_atomic(&out.join(REPORT_TEXT), report.to_text().as_bytes())?;
    info!(
        "selected {} of {} samples into {}",
        report.final_count,
        report.input_count,
        out.join(SELECTED_MANIFEST).display()
    );
    Ok((report, curated))
}

/// Full run: gate, filter, emit. Returns the report and the curated records
/// (paths relative to the output directory).
pub fn run_select(config: &RunConfig) -> Result<(SelectionReport, Vec<SampleRecord>)> {
    let inputs = Inputs::load(config)?;
    let pcs_run = pcs_stage(config, &inputs)?;
    let asf_run = asf_stage(config, &inputs, &pcs_run)?;
    selection_stage(config, &inputs, &pcs_run, &asf_run)
}

/// Load previously written score files (which must match the current config)
/// and re-emit the selection and report.
pub fn report_from_files(config: &RunConfig) -> Result<(SelectionReport, Vec<SampleRecord>)> {
    let inputs = Inputs::load(config)?;
    let (_, pcs_run) = read_pcs_scores(&config.output.join(PCS_SCORES), Some(&inputs.pcs_hash))?;
    let asf_hash = asf_config_hash(config, &inputs, &pcs_run)?;
    let (_, asf_run) = read_asf_scores(&config.output.join(ASF_SCORES), Some(&asf_hash))?;
    selection_stage(config, &inputs, &pcs_run, &asf_run)
}

/// Stage entry point that requires an existing image-gate score file.
pub fn asf_from_files(config: &RunConfig) -> Result<AsfRun> {
    let inputs = Inputs::load(config)?;
    let (_, pcs_run) = read_pcs_scores(&config.output.join(PCS_SCORES), Some(&inputs.pcs_hash))?;
    asf_stage(config, &inputs, &pcs_run)
}
