//! Run the ONNX encoder backend. With a directory argument it opens an
//! exported model (graph.json, encoders, token table); without one it writes
//! and uses a small random linear model.
//!
//!     cargo run --example graph_backend [graph_dir]

use sds_core::embedding::{cosine_similarity, EmbeddingKey, Encoder, GraphBackend};
use sds_core::imaging::{self, ImageBuffer};
use sds_core::synth::graph::LinearGraph;

fn main() -> sds_core::Result<()> {
    let caption = "a red square on a blue background".to_string();
    let dir = match std::env::args().nth(1) {
        Some(d) => d.into(),
        None => {
            let d = std::env::temp_dir().join("sds-examples/graph_backend");
            LinearGraph::random(16, 32, 12, 1).write(&d, "linear-demo", std::slice::from_ref(&caption))?;
            d
        }
    };
    let backend = GraphBackend::open(&dir)?;
    let desc = backend.descriptor();
    println!("{} dim={} resolution={}", desc.model_id, desc.dim, desc.input_resolution);

    let mut data = Vec::new();
    for r in 0..96u32 {
        for c in 0..96u32 {
            let inside = (24..72).contains(&r) && (24..72).contains(&c);
            data.extend_from_slice(if inside { &[220, 20, 20] } else { &[20, 40, 200] });
        }
    }
    let img = ImageBuffer::new(96, 96, data)?;
    let text = backend.encode_text(&EmbeddingKey::text("demo"), &caption)?;
    let orig = backend.encode_image(&EmbeddingKey::orig("demo"), Some(&img))?;
    println!("s_x = {:.4}", cosine_similarity(&text, &orig)?);
    for m in imaging::mixed_variants(&img, &[8, 16, 32], 1, 0, "demo")? {
        let key = EmbeddingKey::mix("demo", m.scale, m.order_index);
        let v = backend.encode_image(&key, Some(&m.image))?;
        println!("{key}: {:.4}", cosine_similarity(&text, &v)?);
    }
    Ok(())
}
