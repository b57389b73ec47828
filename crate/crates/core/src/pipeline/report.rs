use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::asf::{AsfConfig, AsfRun, AsfSelection};
use crate::embedding::BackendDescriptor;
use crate::manifest::{ClassTable, SampleRecord};
use crate::pcs::{Histogram, PcsConfig, PcsRun};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcsCounts {
    pub accepted: usize,
    pub rejected: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsfCounts {
    /// PCS-accepted samples given to the annotation stage.
    pub input: usize,
    pub scored: usize,
    pub retained: usize,
    pub rejected: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRetention {
    pub group: String,
    pub size: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRetention {
    pub class: u8,
    pub name: String,
    pub input: usize,
    pub pcs_accepted: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub sample_id: String,
    pub message: String,
}

/// Settings that determine the output. Worker count and output directory
/// are left out on purpose: they must not change any byte written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub seed: u64,
    pub backend: BackendDescriptor,
    pub pcs: PcsConfig,
    pub asf: AsfConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub config_hash: String,
    pub input_count: usize,
    pub pcs: PcsCounts,
    pub asf: AsfCounts,
    pub final_count: usize,
    pub groups: Vec<GroupRetention>,
    pub class_retention: Vec<ClassRetention>,
    pub pcs_histogram: Histogram,
    pub miou_histogram: Histogram,
    pub errors: Vec<StageError>,
    pub config: ConfigEcho,
}

pub fn miou_edges() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub(crate) struct ReportInputs<'a> {
    pub config_hash: &'a str,
    pub records: &'a [SampleRecord],
    pub table: &'a ClassTable,
    pub pcs: &'a PcsRun,
    pub asf: &'a AsfRun,
    pub selection: &'a AsfSelection,
    pub pcs_histogram: Histogram,
    pub miou_histogram: Histogram,
    pub config: ConfigEcho,
}

impl SelectionReport {
    pub(crate) fn build(inp: ReportInputs<'_>) -> Self {
        let accepted: BTreeSet<&str> = inp.pcs.accepted_ids().into_iter().collect();
        let selected = &inp.selection.selected;

        let mut class_retention = Vec::new();
        for (class, name) in inp.table.iter() {
            let with_class = inp.records.iter().filter(|r| r.classes.contains(&class));
            let (mut input, mut pcs_accepted, mut kept) = (0, 0, 0);
            for r in with_class {
                input += 1;
                if accepted.contains(r.id.as_str()) {
                    pcs_accepted += 1;
                }
                if selected.contains(&r.id) {
                    kept += 1;
                }
            }
            class_retention.push(ClassRetention {
                class,
                name: name.to_string(),
                input,
                pcs_accepted,
                selected: kept,
            });
        }

        let groups = inp
            .selection
            .groups
            .iter()
            .map(|(k, ids)| GroupRetention {
                group: k.to_string(),
                size: ids.len(),
                kept: inp.selection.tops.get(k).map_or(0, |t| t.len()),
            })
            .collect();

        let mut errors: Vec<StageError> = inp
            .pcs
            .errors
            .iter()
            .map(|e| StageError {
                stage: "pcs".into(),
                sample_id: e.sample_id.clone(),
                message: e.message.clone(),
            })
            .chain(inp.asf.errors.iter().map(|e| StageError {
                stage: "asf".into(),
                sample_id: e.sample_id.clone(),
                message: e.message.clone(),
            }))
            .collect();
        errors.sort_by(|a, b| (&a.sample_id, &a.stage).cmp(&(&b.sample_id, &b.stage)));

        SelectionReport {
            config_hash: inp.config_hash.to_string(),
            input_count: inp.records.len(),
            pcs: PcsCounts {
                accepted: inp.pcs.accepted(),
                rejected: inp.pcs.rejected(),
                errored: inp.pcs.errors.len(),
            },
            asf: AsfCounts {
                input: accepted.len(),
                scored: inp.asf.scored.len(),
                retained: selected.len(),
                rejected: inp.asf.scored.len() - selected.len(),
                errored: inp.asf.errors.len(),
            },
            final_count: selected.len(),
            groups,
            class_retention,
            pcs_histogram: inp.pcs_histogram,
            miou_histogram: inp.miou_histogram,
            errors,
            config: inp.config,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn group_csv(&self) -> String {
        let mut out = String::from("group,size,kept\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{}", g.group, g.size, g.kept);
        }
        out
    }

    pub fn class_csv(&self) -> String {
        let mut out = String::from("class,name,input,pcs_accepted,selected\n");
        for c in &self.class_retention {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.class, c.name, c.input, c.pcs_accepted, c.selected
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
        let _ = writeln!(out, "selection report");
        let _ = writeln!(out, "config hash  {}", self.config_hash);
        let _ = writeln!(out, "seed         {}", self.config.seed);
        let _ = writeln!(
            out,
            "backend      {:?} {} (dim {})",
            self.config.backend.kind, self.config.backend.model_id, self.config.backend.dim
        );
        let _ = writeln!(
            out,
            "pcs          tau_s={} tau_pcs={} scales={:?} n_o={}",
            self.config.pcs.tau_s, self.config.pcs.tau_pcs, self.config.pcs.scales, self.config.pcs.n_o
        );
        let _ = writeln!(
            out,
            "asf          keep_fraction={} mode={} include_background={}",
            self.config.asf.keep_fraction, self.config.asf.mode, self.config.asf.include_background
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "input            {}", self.input_count);
        let _ = writeln!(
            out,
            "pcs accepted     {} ({:.1}%)  rejected {}  errored {}",
            self.pcs.accepted,
            pct(self.pcs.accepted, self.input_count),
            self.pcs.rejected,
            self.pcs.errored
        );
        let _ = writeln!(
            out,
            "asf retained     {} ({:.1}% of {})  rejected {}  errored {}",
            self.asf.retained,
            pct(self.asf.retained, self.asf.input),
            self.asf.input,
            self.asf.rejected,
            self.asf.errored
        );
        let _ = writeln!(
            out,
            "final            {} ({:.1}%)",
            self.final_count,
            pct(self.final_count, self.input_count)
        );

        let _ = writeln!(out, "\ngroups");
        for g in &self.groups {
            let _ = writeln!(out, "  {:<14} {:>6} -> {:>6}", g.group, g.size, g.kept);
        }
        let _ = writeln!(out, "\nclasses (input / pcs / selected)");
        for c in &self.class_retention {
            let _ = writeln!(
                out,
                "  {:>3} {:<16} {:>6} {:>6} {:>6}",
                c.class, c.name, c.input, c.pcs_accepted, c.selected
            );
        }
        let _ = writeln!(out, "\npcs histogram");
        write_hist(&mut out, &self.pcs_histogram);
        let _ = writeln!(out, "\nmiou histogram");
        write_hist(&mut out, &self.miou_histogram);
        if !self.errors.is_empty() {
            let _ = writeln!(out, "\nerrors");
            for e in &self.errors {
                let _ = writeln!(out, "  [{}] {}: {}", e.stage, e.sample_id, e.message);
            }
        }
        out
    }
}

fn write_hist(out: &mut String, h: &Histogram) {
    for (lo, hi, n) in h.rows() {
        if n > 0 {
            let _ = writeln!(out, "  [{lo:>6.2}, {hi:>6.2})  {n}");
        }
    }
}

/// Per-sample errors by stage, for quick lookups in tests and tools.
pub fn errors_by_stage(report: &SelectionReport) -> BTreeMap<&str, Vec<&str>> {
    let mut m: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &report.errors {
        m.entry(e.stage.as_str()).or_default().push(e.sample_id.as_str());
    }
    m
}
