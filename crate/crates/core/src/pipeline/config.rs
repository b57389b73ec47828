use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asf::AsfConfig;
use crate::embedding::BackendKind;
use crate::error::{Result, SdsError};
use crate::fsutil;
use crate::pcs::PcsConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Mock table file, store directory, or graph directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// PCS histogram edges; defaults to 0.05 steps over [-0.5, 1.0].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcs_edges: Option<Vec<f64>>,
}

/// Everything a selection run needs. Loaded from TOML; relative paths
/// resolve against the config file's directory.
///
/// ```toml
/// manifest = "data/manifest.jsonl"
/// class_table = "data/classes.json"
/// reference_masks = "data/refs"
/// output = "out"
/// workers = 4
/// seed = 0
///
/// [backend]
/// kind = "file_store"
/// path = "store"
///
/// [pcs]
/// tau_s = 0.8
/// tau_pcs = 0.1
/// scales = [8, 16, 32]
/// n_o = 3
///
/// [asf]
/// keep_fraction = 0.6
/// mode = "both"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub class_table: PathBuf,
    pub reference_masks: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    pub backend: BackendConfig,
    #[serde(default)]
    pub pcs: PcsConfig,
    #[serde(default)]
    pub asf: AsfConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| SdsError::Config(format!("{}: {e}", path.display())))?;
        if cfg.pcs.global_seed != 0 && cfg.pcs.global_seed != cfg.seed {
            return Err(SdsError::Config(
                "set the permutation seed with top-level `seed`, not pcs.global_seed".into(),
            ));
        }
        let base = crate::manifest::manifest_root(path);
        for p in [
            &mut cfg.manifest,
            &mut cfg.class_table,
            &mut cfg.reference_masks,
            &mut cfg.output,
            &mut cfg.backend.path,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.sync_seed();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy the run seed into the perturbation settings.
    pub fn sync_seed(&mut self) {
        self.pcs.global_seed = self.seed;
    }

    /// Check values and that every input path exists.
    pub fn validate(&self) -> Result<()> {
        if self.pcs.global_seed != self.seed {
            return Err(SdsError::Config("pcs.global_seed differs from seed".into()));
        }
        self.pcs.validate()?;
        self.asf.validate()?;
        if self.workers == 0 {
            return Err(SdsError::Config("workers must be at least 1".into()));
        }
        for (what, p) in [
            ("manifest", &self.manifest),
            ("class table", &self.class_table),
            ("reference mask directory", &self.reference_masks),
            ("backend", &self.backend.path),
        ] {
            if !p.exists() {
                return Err(SdsError::Config(format!("{what} {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn pcs_edges(&self) -> Vec<f64> {
        self.report
            .pcs_edges
            .clone()
            .unwrap_or_else(crate::pcs::default_pcs_edges)
    }
}
