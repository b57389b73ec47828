//! Load a manifest, validate it against a class table, count classes, and
//! rebase it for another directory.
//!
//!     cargo run --example manifest

use sds_core::manifest::{self, ClassTable, SampleRecord};

fn main() -> sds_core::Result<()> {
    let dir = std::env::temp_dir().join("sds-examples/manifest");
    let table = ClassTable::new(
        [(1, "cat"), (2, "dog"), (3, "person")]
            .into_iter()
            .map(|(c, n)| (c, n.to_string()))
            .collect(),
    )?;
    table.save(&dir.join("classes.json"))?;

    let rec = |id: &str, caption: &str, classes: &[u8]| SampleRecord {
        id: id.into(),
        image: format!("images/{id}.jpg").into(),
        annotation: format!("masks/{id}.png").into(),
        caption: caption.into(),
        classes: classes.to_vec(),
        split: Some("train".into()),
    };
    let records = vec![
        rec("0002", "a dog on a sofa", &[2]),
        rec("0001", "a cat and a person", &[1, 3]),
        rec("0003", "two dogs and their owner", &[2, 3]),
    ];
    let path = dir.join("manifest.jsonl");
    manifest::write_manifest(&records, &path)?;

    let loaded = manifest::load_manifest(&path, &table)?;
    println!("{} records from {}", loaded.len(), path.display());
    for (class, count) in manifest::class_histogram(&loaded, &table) {
        println!("  {:>2} {:<8} {count}", class, table.name(class).unwrap_or("?"));
    }

    let rebased = manifest::rebase(&loaded, &dir, &dir.join("curated/run1"))?;
    println!("rebased: {}", rebased[0].image.display());

    // Class 0 (background) may not be listed.
    let bad = SampleRecord {
        classes: vec![0, 1],
        ..records[0].clone()
    };
    println!("invalid record: {}", bad.validate(&table).unwrap_err());
    Ok(())
}
