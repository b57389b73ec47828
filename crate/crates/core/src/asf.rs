//! Class-balanced annotation filtering.
//!
//! Image-gated samples are scored by the mIoU of their synthetic annotation
//! against a reference annotation, then grouped twice: by how many foreground
//! classes the annotation holds (rule a) and by each class it holds (rule b).
//! The top `n = max(1, ceil(keep_fraction * |group|))` of each group survive,
//! and the selection is the union over all groups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdsError};
use crate::manifest::SampleRecord;
use crate::maskmetrics::{self, IouOptions};
use crate::parallel;
use crate::pcs::SampleError;

pub const DEFAULT_KEEP_FRACTION: f64 = 0.6;

/// Slack for `keep_fraction * len` landing a hair above an integer.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    /// Every sample in one group (the "direct" baseline).
    All,
    /// Samples whose annotation holds exactly `q` foreground classes.
    ByCount(usize),
    /// Samples whose annotation holds class `r`.
    ByClass(u8),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::All => f.write_str("all"),
            GroupKey::ByCount(q) => write!(f, "by_count:{q}"),
            GroupKey::ByClass(r) => write!(f, "by_class:{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AsfMode {
    Direct,
    RuleA,
    RuleB,
    #[default]
    Both,
}

impl FromStr for AsfMode {
    type Err = SdsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(AsfMode::Direct),
            "rule_a" => Ok(AsfMode::RuleA),
            "rule_b" => Ok(AsfMode::RuleB),
            "both" => Ok(AsfMode::Both),
            _ => Err(SdsError::Config(format!(
                "unknown asf mode {s:?} (direct, rule_a, rule_b, both)"
            ))),
        }
    }
}

impl fmt::Display for AsfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AsfMode::Direct => "direct",
            AsfMode::RuleA => "rule_a",
            AsfMode::RuleB => "rule_b",
            AsfMode::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsfConfig {
    #[serde(default = "default_keep")]
    pub keep_fraction: f64,
    #[serde(default)]
    pub mode: AsfMode,
    #[serde(default)]
    pub include_background: bool,
}

fn default_keep() -> f64 {
    DEFAULT_KEEP_FRACTION
}

impl Default for AsfConfig {
    fn default() -> Self {
        Self {
            keep_fraction: DEFAULT_KEEP_FRACTION,
            mode: AsfMode::Both,
            include_background: false,
        }
    }
}

impl AsfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(SdsError::Config(format!(
                "keep_fraction {} outside (0, 1]",
                self.keep_fraction
            )));
        }
        Ok(())
    }

    pub fn iou_options(&self) -> IouOptions {
        IouOptions {
            include_background: self.include_background,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnnotation {
    pub sample_id: String,
    pub miou: f64,
    pub class_count: usize,
    /// Foreground classes used for grouping, ascending.
    pub classes: Vec<u8>,
}

impl ScoredAnnotation {
    pub fn new(sample_id: impl Into<String>, miou: f64, classes: Vec<u8>) -> Self {
        Self {
            sample_id: sample_id.into(),
            miou,
            class_count: classes.len(),
            classes,
        }
    }

    /// One by-count group plus one by-class group per class.
    pub fn groups(&self) -> Vec<GroupKey> {
        let mut g = vec![GroupKey::ByCount(self.classes.len())];
        g.extend(self.classes.iter().map(|&c| GroupKey::ByClass(c)));
        g
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grouping {
    pub groups: BTreeMap<GroupKey, Vec<String>>,
    /// Samples without a foreground class; they join no group.
    pub invalid: Vec<String>,
}

impl Grouping {
    /// Largest class count observed (Q).
    pub fn max_count(&self) -> usize {
        self.groups
            .keys()
            .filter_map(|k| match k {
                GroupKey::ByCount(q) => Some(*q),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Largest class index observed (R).
    pub fn max_class(&self) -> u8 {
        self.groups
            .keys()
            .filter_map(|k| match k {
                GroupKey::ByClass(r) => Some(*r),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

pub fn group_samples(scored: &[ScoredAnnotation]) -> Grouping {
    let mut out = Grouping::default();
    for s in scored {
        if s.classes.is_empty() {
            out.invalid.push(s.sample_id.clone());
            continue;
        }
        for key in s.groups() {
            out.groups.entry(key).or_default().push(s.sample_id.clone());
        }
    }
    for ids in out.groups.values_mut() {
        ids.sort();
    }
    out.invalid.sort();
    out
}

/// `max(1, ceil(keep_fraction * len))`.
pub fn keep_count(len: usize, keep_fraction: f64) -> usize {
    ((keep_fraction * len as f64 - CEIL_SLACK).ceil() as usize).clamp(1, len.max(1))
}

/// Highest-mIoU members of a group, best first; ties go to the smaller id.
pub fn top_n(group: &[(&str, f64)], keep_fraction: f64) -> Result<Vec<String>> {
    if group.is_empty() {
        return Err(SdsError::Config("top_n on an empty group".into()));
    }
    let mut ranked = group.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n = keep_count(ranked.len(), keep_fraction);
    Ok(ranked.into_iter().take(n).map(|(id, _)| id.to_string()).collect())
}

pub fn union_select(
    by_count_tops: &BTreeMap<usize, Vec<String>>,
    by_class_tops: &BTreeMap<u8, Vec<String>>,
) -> BTreeSet<String> {
    by_count_tops
        .values()
        .chain(by_class_tops.values())
        .flatten()
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsfSelection {
    pub selected: BTreeSet<String>,
    /// Members of every group that took part in the selection.
    pub groups: BTreeMap<GroupKey, Vec<String>>,
    /// Survivors of each group.
    pub tops: BTreeMap<GroupKey, Vec<String>>,
    pub invalid: Vec<String>,
}

pub fn select_annotations(scored: &[ScoredAnnotation], config: &AsfConfig, mode: AsfMode) -> Result<AsfSelection> {
    config.validate()?;
    let miou: BTreeMap<&str, f64> = scored.iter().map(|s| (s.sample_id.as_str(), s.miou)).collect();
    if miou.len() != scored.len() {
        return Err(SdsError::Config("duplicate sample id in scored annotations".into()));
    }
    let grouping = group_samples(scored);
    let groups: BTreeMap<GroupKey, Vec<String>> = match mode {
        AsfMode::Direct => {
            let mut all: Vec<String> = scored.iter().map(|s| s.sample_id.clone()).collect();
            all.sort();
            if all.is_empty() {
                BTreeMap::new()
            } else {
                BTreeMap::from([(GroupKey::All, all)])
            }
        }
        _ => grouping
            .groups
            .into_iter()
            .filter(|(k, _)| match k {
                GroupKey::ByCount(_) => mode != AsfMode::RuleB,
                GroupKey::ByClass(_) => mode != AsfMode::RuleA,
                GroupKey::All => false,
            })
            .collect(),
    };

    let mut tops = BTreeMap::new();
    for (key, ids) in &groups {
        let members: Vec<(&str, f64)> = ids.iter().map(|id| (id.as_str(), miou[id.as_str()])).collect();
        tops.insert(*key, top_n(&members, config.keep_fraction)?);
    }
    let mut by_count = BTreeMap::new();
    let mut by_class = BTreeMap::new();
    let mut direct = BTreeSet::new();
    for (key, ids) in &tops {
        match *key {
            GroupKey::ByCount(q) => {
                by_count.insert(q, ids.clone());
            }
            GroupKey::ByClass(r) => {
                by_class.insert(r, ids.clone());
            }
            GroupKey::All => direct.extend(ids.iter().cloned()),
        }
    }
    let mut selected = union_select(&by_count, &by_class);
    selected.extend(direct);
    Ok(AsfSelection {
        selected,
        groups,
        tops,
        invalid: if mode == AsfMode::Direct { Vec::new() } else { grouping.invalid },
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsfRun {
    pub scored: Vec<ScoredAnnotation>,
    pub errors: Vec<SampleError>,
}

/// Reference mask for a sample: `{ref_dir}/{sample_id}.png`.
pub fn reference_mask_path(ref_dir: &Path, sample_id: &str) -> std::path::PathBuf {
    ref_dir.join(format!("{sample_id}.png"))
}

/// Score annotations of `records` against reference masks. Grouping classes
/// come from the synthetic mask; a mask without foreground falls back to the
/// manifest class set (and scores 0).
pub fn score_annotations(
    records: &[SampleRecord],
    root: &Path,
    ref_dir: &Path,
    num_classes: u8,
    options: IouOptions,
    workers: usize,
) -> Result<AsfRun> {
    let outcomes = parallel::map_ordered(workers, records, |r| -> Result<ScoredAnnotation> {
        let y = maskmetrics::load_mask(&r.annotation_path(root), num_classes)?;
        let y_ref = maskmetrics::load_mask(&reference_mask_path(ref_dir, &r.id), num_classes)?;
        let report = maskmetrics::miou_pair(&y, &y_ref, options)?;
        let mut classes = maskmetrics::classes_present(&y);
        if classes.is_empty() {
            classes = r.classes.clone();
        }
        Ok(ScoredAnnotation::new(r.id.clone(), report.miou, classes))
    })?;
    let mut run = AsfRun::default();
    for (r, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok(s) => run.scored.push(s),
            Err(e) => run.errors.push(SampleError {
                sample_id: r.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    run.scored.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    run.errors.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(run)
}
