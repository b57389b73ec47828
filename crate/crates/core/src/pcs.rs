//! Perturbation-based similarity scoring and the image gate.
//!
//! For a sample with caption `T` and image `X`:
//!
//! * `s_x` is the cosine similarity of the text and image features;
//! * every patch-mixed variant gives its own similarity, and `s_hat_mean` is
//!   their arithmetic mean;
//! * `pcs = s_x - s_hat_mean`;
//! * the sample passes when `s_x > tau_s` and `pcs > tau_pcs` (ties reject).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, EmbeddingKey, Encoder};
use crate::error::{Result, SdsError};
use crate::imaging::{self, ImageBuffer};
use crate::manifest::SampleRecord;
use crate::parallel;

pub const DEFAULT_TAU_S: f64 = 0.8;
pub const DEFAULT_TAU_PCS: f64 = 0.1;
pub const DEFAULT_SCALES: [usize; 3] = [8, 16, 32];
pub const DEFAULT_N_O: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcsConfig {
    #[serde(default = "default_tau_s")]
    pub tau_s: f64,
    #[serde(default = "default_tau_pcs")]
    pub tau_pcs: f64,
    #[serde(default = "default_scales")]
    pub scales: Vec<usize>,
    #[serde(default = "default_n_o")]
    pub n_o: usize,
    #[serde(default)]
    pub global_seed: u64,
    /// Text fed to the text encoder; `{caption}` is replaced by the caption.
    #[serde(default = "default_prompt")]
    pub prompt_template: String,
}

fn default_tau_s() -> f64 {
    DEFAULT_TAU_S
}
fn default_tau_pcs() -> f64 {
    DEFAULT_TAU_PCS
}
fn default_scales() -> Vec<usize> {
    DEFAULT_SCALES.to_vec()
}
fn default_n_o() -> usize {
    DEFAULT_N_O
}
fn default_prompt() -> String {
    "{caption}".into()
}

impl Default for PcsConfig {
    fn default() -> Self {
        Self {
            tau_s: DEFAULT_TAU_S,
            tau_pcs: DEFAULT_TAU_PCS,
            scales: default_scales(),
            n_o: DEFAULT_N_O,
            global_seed: 0,
            prompt_template: default_prompt(),
        }
    }
}

impl PcsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.tau_s) {
            return Err(SdsError::Config(format!("tau_s {} outside [-1, 1]", self.tau_s)));
        }
        if !self.tau_pcs.is_finite() {
            return Err(SdsError::Config("tau_pcs must be finite".into()));
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(SdsError::Config("scales must be non-empty and positive".into()));
        }
        if self.n_o == 0 {
            return Err(SdsError::Config("n_o must be at least 1".into()));
        }
        Ok(())
    }

    pub fn prompt(&self, caption: &str) -> String {
        self.prompt_template.replace("{caption}", caption)
    }

    pub fn variant_count(&self) -> usize {
        self.scales.len() * self.n_o
    }
}

/// Image gate with strict inequalities.
pub fn gate(s_x: f64, pcs: f64, tau_s: f64, tau_pcs: f64) -> bool {
    s_x > tau_s && pcs > tau_pcs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub scale: usize,
    pub order_index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsResult {
    pub sample_id: String,
    pub s_x: f64,
    pub s_hat_variants: Vec<VariantScore>,
    pub s_hat_mean: f64,
    pub pcs: f64,
    pub accepted: bool,
}

impl PcsResult {
    /// Assemble a result from raw similarities, applying the gate.
    pub fn from_similarities(sample_id: &str, s_x: f64, variants: Vec<VariantScore>, config: &PcsConfig) -> Self {
        let s_hat_mean = variants.iter().map(|v| v.similarity).sum::<f64>() / variants.len() as f64;
        let pcs = s_x - s_hat_mean;
        Self {
            sample_id: sample_id.to_string(),
            s_x,
            s_hat_variants: variants,
            s_hat_mean,
            pcs,
            accepted: gate(s_x, pcs, config.tau_s, config.tau_pcs),
        }
    }

    /// Re-apply the gate under different thresholds.
    pub fn regate(&self, tau_s: f64, tau_pcs: f64) -> bool {
        gate(self.s_x, self.pcs, tau_s, tau_pcs)
    }
}

/// Score one sample. `image` may be `None` for backends that do not need pixels.
pub fn score_sample(
    record: &SampleRecord,
    image: Option<&ImageBuffer>,
    backend: &dyn Encoder,
    config: &PcsConfig,
) -> Result<PcsResult> {
    let id = record.id.as_str();
    let text = backend.encode_text(&EmbeddingKey::text(id), &config.prompt(&record.caption))?;
    let orig = backend.encode_image(&EmbeddingKey::orig(id), image)?;
    let s_x = cosine_similarity(&text, &orig)?;

    let mut variants = Vec::with_capacity(config.variant_count());
    match image {
        Some(img) if backend.needs_pixels() => {
            for m in imaging::mixed_variants(img, &config.scales, config.n_o, config.global_seed, id)? {
                let key = EmbeddingKey::mix(id, m.scale, m.order_index);
                let f = backend.encode_image(&key, Some(&m.image))?;
                variants.push(VariantScore {
                    scale: m.scale,
                    order_index: m.order_index,
                    similarity: cosine_similarity(&text, &f)?,
                });
            }
        }
        _ => {
            for &scale in &config.scales {
                for order_index in 0..config.n_o {
                    let f = backend.encode_image(&EmbeddingKey::mix(id, scale, order_index), None)?;
                    variants.push(VariantScore {
                        scale,
                        order_index,
                        similarity: cosine_similarity(&text, &f)?,
                    });
                }
            }
        }
    }
    Ok(PcsResult::from_similarities(id, s_x, variants, config))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PcsRun {
    pub results: Vec<PcsResult>,
    pub errors: Vec<SampleError>,
}

impl PcsRun {
    pub fn accepted(&self) -> usize {
        self.results.iter().filter(|r| r.accepted).count()
    }

    pub fn rejected(&self) -> usize {
        self.results.len() - self.accepted()
    }

    pub fn accepted_ids(&self) -> Vec<&str> {
        self.results
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.sample_id.as_str())
            .collect()
    }
}

/// Score every record. Per-sample failures are collected, never accepted.
/// Output is sorted by sample id whatever the worker count.
pub fn score_dataset(
    records: &[SampleRecord],
    root: &Path,
    backend: &dyn Encoder,
    config: &PcsConfig,
    workers: usize,
) -> Result<PcsRun> {
    config.validate()?;
    let outcomes = parallel::map_ordered(workers, records, |record| {
        let image = if backend.needs_pixels() {
            Some(ImageBuffer::load(&record.image_path(root))?)
        } else {
            None
        };
        score_sample(record, image.as_ref(), backend, config)
    })?;
    let mut run = PcsRun::default();
    for (record, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok(r) => run.results.push(r),
            Err(e) => run.errors.push(SampleError {
                sample_id: record.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    run.results.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    run.errors.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(run)
}

/// Counts over half-open bins `[e_i, e_{i+1})` plus underflow and overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// `edges.len() + 1` entries: underflow, the inner bins, overflow.
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() || edges.iter().any(|e| !e.is_finite()) {
            return Err(SdsError::Config("histogram needs finite edges".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SdsError::Config("histogram edges must be strictly increasing".into()));
        }
        let counts = vec![0; edges.len() + 1];
        Ok(Self { edges, counts })
    }

    pub fn from_values(edges: Vec<f64>, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut h = Self::new(edges)?;
        for v in values {
            h.add(v);
        }
        Ok(h)
    }

    pub fn add(&mut self, value: f64) {
        // number of edges <= value is the bin index
        let idx = self.edges.partition_point(|&e| e <= value);
        self.counts[idx] += 1;
    }

    pub fn underflow(&self) -> usize {
        self.counts[0]
    }

    pub fn overflow(&self) -> usize {
        self.counts[self.edges.len()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(low, high, count)` rows; infinite bounds mark the outer bins.
    pub fn rows(&self) -> Vec<(f64, f64, usize)> {
        let mut bounds = Vec::with_capacity(self.edges.len() + 2);
        bounds.push(f64::NEG_INFINITY);
        bounds.extend_from_slice(&self.edges);
        bounds.push(f64::INFINITY);
        bounds
            .windows(2)
            .zip(&self.counts)
            .map(|(w, &c)| (w[0], w[1], c))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (lo, hi, c) in self.rows() {
            out.push_str(&format!("{},{},{}\n", fmt_edge(lo), fmt_edge(hi), c));
        }
        out
    }
}

fn fmt_edge(e: f64) -> String {
    if e == f64::NEG_INFINITY {
        "-inf".into()
    } else if e == f64::INFINITY {
        "inf".into()
    } else {
        format!("{e}")
    }
}

/// Edges `-0.5, -0.45, ..., 1.0`.
pub fn default_pcs_edges() -> Vec<f64> {
    (0..=30).map(|i| (f64::from(i) - 10.0) / 20.0).collect()
}

pub fn score_histogram(results: &[PcsResult], edges: Vec<f64>) -> Result<Histogram> {
    Histogram::from_values(edges, results.iter().map(|r| r.pcs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingVector, MockBackend};

    /// Unit vector with cosine `s` against e0.
    fn at_cos(s: f64, axis: usize, dim: usize) -> Vec<f32> {
        let mut v = vec![0f32; dim];
        v[0] = s as f32;
        v[axis] = (1.0 - s * s).sqrt() as f32;
        v
    }

    fn record(id: &str) -> SampleRecord {
        SampleRecord {
            id: id.into(),
            image: format!("{id}.png").into(),
            annotation: format!("{id}_ann.png").into(),
            caption: format!("caption {id}"),
            classes: vec![1],
            split: None,
        }
    }

    fn noise(seed: u8) -> ImageBuffer {
        let data = (0..16 * 16 * 3)
            .map(|i: u32| (i.wrapping_mul(2_654_435_761).rotate_left(u32::from(seed)) >> 7) as u8)
            .collect();
        ImageBuffer::new(16, 16, data).unwrap()
    }

    /// Mock where the caption vector is e0, the original sits at `s_x`, and
    /// variant j sits at `variant_s[j]`.
    fn mock_for(rec: &SampleRecord, img: &ImageBuffer, s_x: f64, variant_s: &[f64], cfg: &PcsConfig) -> MockBackend {
        let dim = 4;
        let mut m = MockBackend::new(dim);
        m.insert_text(&cfg.prompt(&rec.caption), at_cos(1.0, 1, dim)).unwrap();
        m.insert_image(img, at_cos(s_x, 1, dim)).unwrap();
        let vars = imaging::mixed_variants(img, &cfg.scales, cfg.n_o, cfg.global_seed, &rec.id).unwrap();
        assert_eq!(vars.len(), variant_s.len());
        for (v, &s) in vars.iter().zip(variant_s) {
            m.insert_image(&v.image, at_cos(s, 2, dim)).unwrap();
        }
        m
    }

    fn small_cfg() -> PcsConfig {
        PcsConfig {
            scales: vec![4],
            n_o: 3,
            ..PcsConfig::default()
        }
    }

    #[test]
    fn accepted_example() {
        let cfg = small_cfg();
        let rec = record("s1");
        let img = noise(1);
        let m = mock_for(&rec, &img, 0.9, &[0.3, 0.2, 0.1], &cfg);
        let r = score_sample(&rec, Some(&img), &m, &cfg).unwrap();
        assert!((r.s_x - 0.9).abs() < 1e-6);
        assert!((r.s_hat_mean - 0.2).abs() < 1e-6);
        assert!((r.pcs - 0.7).abs() < 1e-6);
        assert!(r.accepted);
        assert_eq!(r.s_hat_variants.len(), 3);
        assert_eq!(r.pcs, r.s_x - r.s_hat_mean);
    }

    #[test]
    fn identical_embeddings_give_zero_pcs() {
        let cfg = small_cfg();
        let rec = record("s1");
        let img = noise(2);
        let mut m = MockBackend::new(4);
        m.insert_text(&cfg.prompt(&rec.caption), at_cos(1.0, 1, 4)).unwrap();
        m.insert_image(&img, at_cos(0.95, 1, 4)).unwrap();
        for v in imaging::mixed_variants(&img, &cfg.scales, cfg.n_o, 0, "s1").unwrap() {
            m.insert_image(&v.image, at_cos(0.95, 1, 4)).unwrap();
        }
        let r = score_sample(&rec, Some(&img), &m, &cfg).unwrap();
        assert_eq!(r.pcs, 0.0);
        assert!(!r.accepted);
    }

    #[test]
    fn gate_logic() {
        assert!(!gate(0.75, 0.5, 0.8, 0.1));
        assert!(gate(0.81, 0.11, 0.8, 0.1));
        assert!(!gate(0.8, 0.5, 0.8, 0.1));
        assert!(!gate(0.9, 0.1, 0.8, 0.1));
    }

    #[test]
    fn missing_variant_is_an_error() {
        let cfg = small_cfg();
        let rec = record("s1");
        let img = noise(3);
        let mut m = MockBackend::new(4);
        m.insert_text(&cfg.prompt(&rec.caption), at_cos(1.0, 1, 4)).unwrap();
        m.insert_image(&img, at_cos(0.9, 1, 4)).unwrap();
        assert!(score_sample(&rec, Some(&img), &m, &cfg).is_err());
    }

    #[test]
    fn dataset_sorted_and_errors_collected() {
        let cfg = small_cfg();
        let dir = tempfile::tempdir().unwrap();
        let mut backend = MockBackend::new(4);
        let recs: Vec<_> = ["c", "a", "b"].iter().map(|id| record(id)).collect();
        for (i, r) in recs.iter().enumerate() {
            let img = noise(i as u8 + 10);
            img.save_png(&r.image_path(dir.path())).unwrap();
            let m = mock_for(r, &img, 0.9, &[0.5, 0.5, 0.5], &cfg);
            // merge tables
            backend.insert_text(&cfg.prompt(&r.caption), at_cos(1.0, 1, 4)).unwrap();
            backend.insert_image(&img, at_cos(0.9, 1, 4)).unwrap();
            for v in imaging::mixed_variants(&img, &cfg.scales, cfg.n_o, 0, &r.id).unwrap() {
                assert!(m.has_image(&v.image));
                backend.insert_image(&v.image, at_cos(0.5, 2, 4)).unwrap();
            }
        }
        let mut with_missing = recs.clone();
        with_missing.push(record("zz_missing"));
        let run = score_dataset(&with_missing, dir.path(), &backend, &cfg, 2).unwrap();
        let ids: Vec<_> = run.results.iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(run.errors.len(), 1);
        assert_eq!(run.errors[0].sample_id, "zz_missing");
        assert_eq!(run.accepted(), 3);

        let empty = score_dataset(&[], dir.path(), &backend, &cfg, 4).unwrap();
        assert!(empty.results.is_empty() && empty.errors.is_empty());
    }

    #[test]
    fn histogram_examples() {
        let h = Histogram::from_values(vec![0.1, 0.2], [0.05, 0.15, 0.25, 0.15]).unwrap();
        assert_eq!(h.counts, vec![1, 2, 1]);
        assert_eq!((h.underflow(), h.overflow()), (1, 1));

        let h = Histogram::from_values(vec![0.1, 0.2], []).unwrap();
        assert_eq!(h.counts, vec![0, 0, 0]);

        let h = Histogram::from_values(vec![0.1, 0.2], [0.1]).unwrap();
        assert_eq!(h.counts, vec![0, 1, 0]);
        let h = Histogram::from_values(vec![0.1, 0.2], [0.2]).unwrap();
        assert_eq!(h.counts, vec![0, 0, 1]);

        assert!(Histogram::new(vec![0.2, 0.1]).is_err());
        assert!(Histogram::new(vec![0.1, 0.1]).is_err());
        assert!(Histogram::new(vec![]).is_err());
    }

    #[test]
    fn histogram_csv_and_default_edges() {
        let edges = default_pcs_edges();
        assert_eq!(edges.len(), 31);
        assert_eq!(edges[0], -0.5);
        assert_eq!(edges[10], 0.0);
        assert_eq!(edges[30], 1.0);
        let csv = Histogram::from_values(vec![0.0, 0.5], [0.25]).unwrap().to_csv();
        assert_eq!(csv, "bin_low,bin_high,count\n-inf,0,0\n0,0.5,1\n0.5,inf,0\n");
    }

    #[test]
    fn config_validation() {
        assert!(PcsConfig::default().validate().is_ok());
        let bad = |f: fn(&mut PcsConfig)| {
            let mut c = PcsConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.tau_s = 1.5));
        assert!(bad(|c| c.tau_pcs = f64::NAN));
        assert!(bad(|c| c.scales.clear()));
        assert!(bad(|c| c.n_o = 0));
        assert_eq!(PcsConfig::default().prompt("a cat"), "a cat");
        let c = PcsConfig {
            prompt_template: "a photo of {caption}".into(),
            ..PcsConfig::default()
        };
        assert_eq!(c.prompt("a cat"), "a photo of a cat");
    }

    #[test]
    fn vector_helper_is_unit() {
        let v = EmbeddingVector::new(at_cos(0.3, 2, 4)).unwrap();
        let n: f32 = v.values().iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-6);
    }
}
