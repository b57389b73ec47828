#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use sds_core::synth::SamplePlan;

/// Ten samples over three classes: p07..p09 fail the image gate, and with
/// keep 0.6 / mode both the annotation filter drops p02 and p04.
///
/// by_count 1: p00 1.0, p03 .778, p06 .455, p01 .333, p04 .231, p02 .143 -> top 4
/// by_count 2: p05 .6 -> p05
/// by_class 1: p00, p05, p01, p02 -> top 3;  2: p03, p05, p04 -> top 2;  3: p06
pub fn ten_sample_plans() -> Vec<SamplePlan> {
    vec![
        SamplePlan::new("p00", &[1], 0.90, 0.60, 0),
        SamplePlan::new("p01", &[1], 0.92, 0.50, 8),
        SamplePlan::new("p02", &[1], 0.88, 0.70, 12),
        SamplePlan::new("p03", &[2], 0.95, 0.40, 2),
        SamplePlan::new("p04", &[2], 0.85, 0.55, 10),
        SamplePlan::new("p05", &[1, 2], 0.91, 0.66, 4),
        SamplePlan::new("p06", &[3], 0.87, 0.62, 6),
        SamplePlan::new("p07", &[1], 0.70, 0.40, 0),
        SamplePlan::new("p08", &[2], 0.90, 0.85, 0),
        SamplePlan::new("p09", &[3], 0.75, 0.30, 0),
    ]
}

pub const TEN_SELECTED: [&str; 5] = ["p00", "p01", "p03", "p05", "p06"];

/// Class 3 annotations all score low; classes 1 and 2 score high.
pub fn low_class_plans() -> Vec<SamplePlan> {
    let mut plans = Vec::new();
    for i in 0..15u32 {
        let classes: &[u8] = if i % 2 == 0 { &[1] } else { &[2] };
        plans.push(SamplePlan::new(&format!("h{i:02}"), classes, 0.9, 0.6, i % 5));
    }
    for i in 0..5u32 {
        plans.push(SamplePlan::new(&format!("l{i:02}"), &[3], 0.9, 0.6, 10 + i % 3));
    }
    plans
}

/// Every regular file in `dir`, by name.
pub fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            );
        }
    }
    out
}
