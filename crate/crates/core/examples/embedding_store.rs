//! Build a precomputed embedding store and run the image gate from it,
//! without decoding any pixels.
//!
//!     cargo run --example embedding_store

use sds_core::embedding::{EmbeddingKey, EmbeddingVector, Encoder, FileStore, StoreMeta, StoreWriter};
use sds_core::manifest::SampleRecord;
use sds_core::pcs::{self, PcsConfig};

fn main() -> sds_core::Result<()> {
    let dir = std::env::temp_dir().join("sds-examples/embedding_store");
    let cfg = PcsConfig::default();
    let unit = |angle: f64| EmbeddingVector::new(vec![angle.cos() as f32, angle.sin() as f32, 0.0]);

    let mut w = StoreWriter::create(
        &dir,
        StoreMeta {
            model_id: "toy".into(),
            dim: 3,
            dtype: "f32le".into(),
            input_resolution: 224,
            scales: cfg.scales.clone(),
            n_o: cfg.n_o,
            global_seed: cfg.global_seed,
        },
    )?;
    let mut records = Vec::new();
    for (i, (orig, mixed)) in [(0.3, 0.9), (0.4, 0.5), (0.9, 1.2)].into_iter().enumerate() {
        let id = format!("img{i}");
        w.add(&EmbeddingKey::text(&id), &unit(0.0)?)?;
        w.add(&EmbeddingKey::orig(&id), &unit(orig)?)?;
        for &s in &cfg.scales {
            for o in 0..cfg.n_o {
                w.add(&EmbeddingKey::mix(&id, s, o), &unit(mixed + 0.01 * o as f64)?)?;
            }
        }
        records.push(SampleRecord {
            id: id.clone(),
            image: format!("{id}.jpg").into(),
            annotation: format!("{id}.png").into(),
            caption: "unused by the store".into(),
            classes: vec![1],
            split: None,
        });
    }
    w.finish()?;

    let store = FileStore::open(&dir)?;
    store.check_compatible(&cfg.scales, cfg.n_o, cfg.global_seed)?;
    println!("{} vectors in {}, pixels needed: {}", store.len(), dir.display(), store.needs_pixels());
    let run = pcs::score_dataset(&records, &dir, &store, &cfg, 1)?;
    for r in &run.results {
        println!("{}  s_x {:.3}  pcs {:+.3}  accepted {}", r.sample_id, r.s_x, r.pcs, r.accepted);
    }
    if let Err(e) = store.get(&EmbeddingKey::mix("img0", 64, 0)) {
        println!("lookup outside the store: {e}");
    }
    Ok(())
}
