//! On-disk formats shared with the offline export tools, written here by hand
//! the way an independent writer would.

use std::io::BufWriter;

use sds_core::embedding::{EmbeddingKey, Encoder, FileStore};
use sds_core::manifest::{self, ClassTable};
use sds_core::maskmetrics::load_mask;
use sds_core::SdsError;

#[test]
fn hand_written_store_is_readable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("meta.json"),
        r#"{"model_id": "ViT-B-16", "dim": 3, "dtype": "f32le", "input_resolution": 224, "scales": [8, 16, 32], "n_o": 3, "global_seed": 0}"#,
    )
    .unwrap();
    let vectors: [[f32; 3]; 3] = [[1.0, 0.0, 0.0], [0.25, -0.5, 2.0], [1e-3, 7.0, -3.5]];
    let mut bin = Vec::new();
    for v in &vectors {
        for x in v {
            bin.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(d.join("vectors.bin"), bin).unwrap();
    std::fs::write(
        d.join("index.jsonl"),
        "{\"key\": \"cat_01__orig\", \"offset\": 12, \"length\": 3}\n\
         {\"key\": \"cat_01__text\", \"offset\": 0, \"length\": 3}\n\
         {\"key\": \"cat_01__mix_s16_o2\", \"offset\": 24, \"length\": 3}\n",
    )
    .unwrap();

    let store = FileStore::open(d).unwrap();
    store.check_compatible(&[8, 16, 32], 3, 0).unwrap();
    assert_eq!(store.descriptor().input_resolution, 224);
    assert!(!store.needs_pixels());
    let get = |k: EmbeddingKey| store.encode_image(&k, None).unwrap().values().to_vec();
    assert_eq!(get(EmbeddingKey::orig("cat_01")), vectors[1]);
    assert_eq!(get(EmbeddingKey::mix("cat_01", 16, 2)), vectors[2]);
    assert_eq!(
        store.encode_text(&EmbeddingKey::text("cat_01"), "ignored").unwrap().values(),
        vectors[0]
    );
    match store.encode_image(&EmbeddingKey::mix("cat_01", 8, 0), None) {
        Err(SdsError::MissingKey(k)) => assert_eq!(k, "cat_01__mix_s8_o0"),
        other => panic!("{other:?}"),
    }
}

fn write_png(path: &std::path::Path, color: png::ColorType, palette: Option<Vec<u8>>, w: u32, h: u32, data: &[u8]) {
    let file = std::fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    if let Some(p) = palette {
        enc.set_palette(p);
    }
    enc.write_header().unwrap().write_image_data(data).unwrap();
}

#[test]
fn masks_are_read_as_raw_indices() {
    let dir = tempfile::tempdir().unwrap();
    let data = [0u8, 1, 2, 255, 2, 1];
    // Palette colours unrelated to the indices: only indices matter.
    let mut palette = vec![9u8; 256 * 3];
    palette[3..6].copy_from_slice(&[200, 10, 10]);
    let indexed = dir.path().join("indexed.png");
    write_png(&indexed, png::ColorType::Indexed, Some(palette), 3, 2, &data);
    assert_eq!(load_mask(&indexed, 2).unwrap().data(), data);

    let gray = dir.path().join("gray.png");
    write_png(&gray, png::ColorType::Grayscale, None, 3, 2, &data);
    assert_eq!(load_mask(&gray, 2).unwrap().data(), data);
    assert!(load_mask(&gray, 1).is_err());

    let rgb = dir.path().join("rgb.png");
    write_png(&rgb, png::ColorType::Rgb, None, 1, 1, &[1, 1, 1]);
    assert!(load_mask(&rgb, 2).is_err());
}

#[test]
fn manifest_written_by_another_tool() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("classes.json"),
        r#"{"num_classes": 2, "classes": {"1": "aeroplane", "2": "bicycle"}}"#,
    )
    .unwrap();
    let table = ClassTable::load(&dir.path().join("classes.json")).unwrap();
    std::fs::write(
        dir.path().join("m.jsonl"),
        "{\"id\": \"b\", \"image\": \"img/b.jpg\", \"annotation\": \"ann/b.png\", \"caption\": \"two bikes\", \"classes\": [2], \"split\": \"train\"}\n\
         \n\
         {\"id\": \"a\", \"image\": \"img/a.jpg\", \"annotation\": \"ann/a.png\", \"caption\": \"a plane\", \"classes\": [1, 2]}\n",
    )
    .unwrap();
    let records = manifest::load_manifest(&dir.path().join("m.jsonl"), &table).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].split.as_deref(), Some("train"));
    assert_eq!(table.name(2), Some("bicycle"));
    let text = manifest::manifest_to_string(&records);
    assert!(text.starts_with("{\"id\":\"a\""));
}
