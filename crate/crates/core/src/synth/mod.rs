//! Synthetic fixtures with known scores, for examples and tests.
//!
//! Each sample gets a 32x32 noise image, a mask with one horizontal band per
//! class (a 16-pixel-wide block at columns 4..20) and a reference mask with
//! the blocks shifted right by `ref_shift`. Every class then scores
//! IoU = (16 - s) / (16 + s), so the sample mIoU is known exactly.
//!
//! Embeddings are planted so the text vector is e0, the original image sits at
//! cosine `s_x` from it and every mixed variant at cosine `s_hat`.

#[cfg(feature = "graph")]
pub mod graph;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asf::{reference_mask_path, AsfConfig};
use crate::embedding::{BackendKind, EmbeddingKey, MockBackend, StoreMeta, StoreWriter};
use crate::error::{Result, SdsError};
use crate::imaging::{self, ImageBuffer};
use crate::manifest::{self, ClassTable, SampleRecord};
use crate::maskmetrics::SegMask;
use crate::pcs::PcsConfig;
use crate::pipeline::{BackendConfig, ReportConfig, RunConfig};

pub const SIZE: u32 = 32;
pub const DIM: usize = 8;
const BLOCK_LEFT: u32 = 4;
const BLOCK_WIDTH: u32 = 16;
pub const MAX_SHIFT: u32 = SIZE - BLOCK_LEFT - BLOCK_WIDTH;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub id: String,
    pub classes: Vec<u8>,
    pub s_x: f64,
    pub s_hat: f64,
    pub ref_shift: u32,
    pub write_reference: bool,
}

impl SamplePlan {
    pub fn new(id: &str, classes: &[u8], s_x: f64, s_hat: f64, ref_shift: u32) -> Self {
        Self {
            id: id.to_string(),
            classes: classes.to_vec(),
            s_x,
            s_hat,
            ref_shift,
            write_reference: true,
        }
    }

    pub fn pcs(&self) -> f64 {
        self.s_x - self.s_hat
    }

    /// mIoU the sample will score against its reference mask.
    pub fn expected_miou(&self) -> f64 {
        let s = self.ref_shift as f64;
        (BLOCK_WIDTH as f64 - s) / (BLOCK_WIDTH as f64 + s)
    }
}

/// `n` plans over classes `1..=num_classes`. Roughly `pass_rate` of them clear
/// the default image gate, with every score well away from the thresholds.
pub fn random_plans(n: usize, num_classes: u8, pass_rate: f64, seed: u64) -> Vec<SamplePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<u8> = (1..=num_classes).collect();
    (0..n)
        .map(|i| {
            let k = rng.random_range(1..=all.len().min(3));
            let mut classes = all.clone();
            classes.shuffle(&mut rng);
            classes.truncate(k);
            classes.sort_unstable();
            let (s_x, pcs) = if rng.random_bool(pass_rate) {
                (rng.random_range(0.82..0.98), rng.random_range(0.15..=0.5))
            } else if rng.random_bool(0.5) {
                (rng.random_range(0.6..=0.78), rng.random_range(0.15..=0.5))
            } else {
                (rng.random_range(0.82..0.98), rng.random_range(-0.05..=0.08))
            };
            SamplePlan::new(
                &format!("s{i:04}"),
                &classes,
                s_x,
                s_x - pcs,
                rng.random_range(0..=MAX_SHIFT),
            )
        })
        .collect()
}

fn noise_image(id: &str) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(imaging::fnv1a64(id.as_bytes()));
    let mut data = vec![0u8; (SIZE * SIZE * 3) as usize];
    rng.fill_bytes(&mut data);
    ImageBuffer::new(SIZE, SIZE, data).expect("fixed size")
}

fn band_mask(classes: &[u8], shift: u32) -> SegMask {
    let mut m = SegMask::filled(SIZE, SIZE, 0).expect("fixed size");
    let band = SIZE / classes.len().max(1) as u32;
    for (i, &c) in classes.iter().enumerate() {
        for r in i as u32 * band..(i as u32 + 1) * band {
            for col in BLOCK_LEFT + shift..BLOCK_LEFT + shift + BLOCK_WIDTH {
                m.set(r, col, c);
            }
        }
    }
    m
}

/// Unit vector at cosine `s` from e0, leaning on `axis`.
fn planted(s: f64, axis: usize) -> Vec<f32> {
    let mut v = vec![0f32; DIM];
    v[0] = s as f32;
    v[axis] = (1.0 - s * s).max(0.0).sqrt() as f32;
    if v.iter().all(|x| *x == 0.0) {
        v[axis] = 1.0;
    }
    v
}

/// Paths of a written fixture.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub class_table: PathBuf,
    pub reference_masks: PathBuf,
    pub mock: PathBuf,
    pub records: Vec<SampleRecord>,
    pub table: ClassTable,
    /// Every vector the mock table holds, by store key.
    pub vectors: BTreeMap<EmbeddingKey, Vec<f32>>,
}

impl Fixture {
    /// Write images, masks, references, manifest, class table and mock table under `dir`.
    pub fn write(dir: &Path, plans: &[SamplePlan], num_classes: u8, pcs: &PcsConfig) -> Result<Self> {
        let table = ClassTable::numbered(num_classes)?;
        let data = dir.join("data");
        let refs = dir.join("refs");
        let mut mock = MockBackend::new(DIM);
        let mut records = Vec::with_capacity(plans.len());
        let mut vectors = BTreeMap::new();
        let mut owner: BTreeMap<String, (String, Vec<f32>)> = BTreeMap::new();
        let mut claim = |checksum: String, id: &str, v: &[f32]| -> Result<()> {
            if let Some((other, prev)) = owner.get(&checksum) {
                if prev.as_slice() != v {
                    return Err(SdsError::Config(format!(
                        "fixture images of {id} and {other} collide with different vectors"
                    )));
                }
            }
            owner.insert(checksum, (id.to_string(), v.to_vec()));
            Ok(())
        };

        for p in plans {
            let record = SampleRecord {
                id: p.id.clone(),
                image: PathBuf::from(format!("images/{}.png", p.id)),
                annotation: PathBuf::from(format!("masks/{}.png", p.id)),
                caption: format!("a photo of {}", p.id),
                classes: p.classes.clone(),
                split: None,
            };
            record.validate(&table)?;
            let img = noise_image(&p.id);
            img.save_png(&record.image_path(&data))?;
            band_mask(&p.classes, 0).save_png(&record.annotation_path(&data))?;
            if p.write_reference {
                band_mask(&p.classes, p.ref_shift).save_png(&reference_mask_path(&refs, &p.id))?;
            }

            let text = planted(1.0, 1);
            mock.insert_text(&pcs.prompt(&record.caption), text.clone())?;
            vectors.insert(EmbeddingKey::text(&p.id), text);

            let orig = planted(p.s_x, 1);
            claim(img.checksum(), &p.id, &orig)?;
            mock.insert_image(&img, orig.clone())?;
            vectors.insert(EmbeddingKey::orig(&p.id), orig);

            let mixed = planted(p.s_hat, 2);
            for m in imaging::mixed_variants(&img, &pcs.scales, pcs.n_o, pcs.global_seed, &p.id)? {
                claim(m.image.checksum(), &p.id, &mixed)?;
                mock.insert_image(&m.image, mixed.clone())?;
                vectors.insert(EmbeddingKey::mix(&p.id, m.scale, m.order_index), mixed.clone());
            }
            records.push(record);
        }
        std::fs::create_dir_all(&refs).map_err(|e| SdsError::io(&refs, e))?;

        let manifest_path = data.join("manifest.jsonl");
        manifest::write_manifest(&records, &manifest_path)?;
        let class_table = data.join("classes.json");
        table.save(&class_table)?;
        let mock_path = dir.join("mock.json");
        mock.save(&mock_path)?;
        Ok(Fixture {
            dir: dir.to_path_buf(),
            manifest: manifest_path,
            class_table,
            reference_masks: refs,
            mock: mock_path,
            records,
            table,
            vectors,
        })
    }

    /// Export the planted vectors as an embedding store.
    pub fn write_store(&self, dir: &Path, pcs: &PcsConfig) -> Result<()> {
        let mut w = StoreWriter::create(
            dir,
            StoreMeta {
                model_id: "mock".into(),
                dim: DIM,
                dtype: "f32le".into(),
                input_resolution: 0,
                scales: pcs.scales.clone(),
                n_o: pcs.n_o,
                global_seed: pcs.global_seed,
            },
        )?;
        for (k, v) in &self.vectors {
            w.add(k, &crate::embedding::EmbeddingVector::new(v.clone())?)?;
        }
        w.finish()
    }

    /// Run config over this fixture with the mock backend.
    pub fn run_config(&self, output: &Path, pcs: PcsConfig, asf: AsfConfig, workers: usize) -> RunConfig {
        let mut cfg = RunConfig {
            manifest: self.manifest.clone(),
            class_table: self.class_table.clone(),
            reference_masks: self.reference_masks.clone(),
            output: output.to_path_buf(),
            workers,
            seed: pcs.global_seed,
            backend: BackendConfig {
                kind: BackendKind::Mock,
                path: self.mock.clone(),
            },
            pcs,
            asf,
            report: ReportConfig::default(),
        };
        cfg.sync_seed();
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskmetrics::{load_mask, miou_pair, IouOptions};

    #[test]
    fn planted_scores_and_mious_come_out_as_designed() {
        let dir = tempfile::tempdir().unwrap();
        let pcs = PcsConfig::default();
        let plans = vec![
            SamplePlan::new("a", &[1], 0.9, 0.6, 0),
            SamplePlan::new("b", &[1, 2, 3], 0.85, 0.8, 4),
        ];
        let fx = Fixture::write(dir.path(), &plans, 3, &pcs).unwrap();
        let backend = MockBackend::load(&fx.mock).unwrap();
        let root = manifest::manifest_root(&fx.manifest);
        for (p, r) in plans.iter().zip(&fx.records) {
            let img = ImageBuffer::load(&r.image_path(&root)).unwrap();
            let res = crate::pcs::score_sample(r, Some(&img), &backend, &pcs).unwrap();
            assert!((res.s_x - p.s_x).abs() < 1e-6);
            assert!((res.pcs - p.pcs()).abs() < 1e-6);
            assert_eq!(res.s_hat_variants.len(), 9);

            let y = load_mask(&r.annotation_path(&root), 3).unwrap();
            let y_ref = load_mask(&reference_mask_path(&fx.reference_masks, &p.id), 3).unwrap();
            let rep = miou_pair(&y, &y_ref, IouOptions::default()).unwrap();
            assert_eq!(rep.miou, p.expected_miou());
            assert_eq!(rep.classes_evaluated, p.classes);
        }
        assert_eq!(plans[1].expected_miou(), 12.0 / 20.0);
    }

    #[test]
    fn random_plans_are_reproducible_and_clear_of_thresholds() {
        let a = random_plans(300, 5, 0.65, 9);
        assert_eq!(a, random_plans(300, 5, 0.65, 9));
        let pass = a.iter().filter(|p| p.s_x > 0.8 && p.pcs() > 0.1).count();
        assert!((150..=240).contains(&pass), "{pass}");
        for p in &a {
            assert!((p.s_x - 0.8).abs() > 1e-3 && (p.pcs() - 0.1).abs() > 1e-3);
            assert!(!p.classes.is_empty() && p.ref_shift <= MAX_SHIFT);
        }
    }
}
