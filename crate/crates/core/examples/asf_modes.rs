//! Annotation selection under each grouping mode.
//!
//!     cargo run --example asf_modes

use sds_core::asf::{self, AsfConfig, AsfMode, ScoredAnnotation};

fn main() -> sds_core::Result<()> {
    // "sheep" annotations are always poor; the class-count and per-class
    // groups keep some anyway, a single global ranking does not.
    let scored = vec![
        ScoredAnnotation::new("cat_1", 0.91, vec![1]),
        ScoredAnnotation::new("cat_2", 0.74, vec![1]),
        ScoredAnnotation::new("cat_dog", 0.66, vec![1, 2]),
        ScoredAnnotation::new("dog_1", 0.88, vec![2]),
        ScoredAnnotation::new("dog_2", 0.35, vec![2]),
        ScoredAnnotation::new("dog_person", 0.52, vec![2, 3]),
        ScoredAnnotation::new("person_1", 0.81, vec![3]),
        ScoredAnnotation::new("sheep_1", 0.21, vec![4]),
        ScoredAnnotation::new("sheep_2", 0.12, vec![4]),
        ScoredAnnotation::new("sheep_dog_person", 0.30, vec![2, 3, 4]),
    ];
    let cfg = AsfConfig::default();
    println!("keep_fraction {}", cfg.keep_fraction);
    for mode in [AsfMode::Direct, AsfMode::RuleA, AsfMode::RuleB, AsfMode::Both] {
        let sel = asf::select_annotations(&scored, &cfg, mode)?;
        let sheep = sel.selected.iter().filter(|id| id.starts_with("sheep")).count();
        println!("\n{mode}: {} of {} kept, {sheep} with sheep", sel.selected.len(), scored.len());
        for (group, top) in &sel.tops {
            println!("  {:<11} {}/{}  {}", group.to_string(), top.len(), sel.groups[group].len(), top.join(" "));
        }
    }
    Ok(())
}
