//! Seeded synthetic datasets with the shapes of the two evaluation corpora:
//! high-dimensional binary "cyber" records and 28x28 greyscale images.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::data::dataset::IndexedDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_feat: usize,
    pub classes: u16,
    /// Probability that a prototype bit is set.
    pub p_base: f64,
    /// Per-bit probability that a record differs from its class prototype.
    pub p_flip: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 2_000,
            n_val: 200,
            n_feat: 49_955,
            classes: 2,
            p_base: 0.5,
            p_flip: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.p_flip) {
            return Err(Error::param(format!(
                "p_flip {} outside [0, 0.5)",
                self.p_flip
            )));
        }
        if !(0.0..=1.0).contains(&self.p_base) {
            return Err(Error::param(format!(
                "p_base {} outside [0, 1]",
                self.p_base
            )));
        }
        if self.classes < 2 || self.classes == crate::data::NO_LABEL {
            return Err(Error::param(format!(
                "class count {} invalid",
                self.classes
            )));
        }
        if self.n_feat == 0 || self.n_feat > u32::MAX as usize {
            return Err(Error::param("feature count must be in 1..=u32::MAX"));
        }
        Ok(())
    }
}

const PROTOTYPE_STREAM: u64 = (1 << 40) - 1;
const LABEL_STREAM: u64 = (1 << 40) - 2;

fn split_rng(seed: u64, split: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split << 40) | item);
    rng
}

/// Balanced labels `1..=classes`, shuffled.
fn balanced_labels(n: usize, classes: u16, rng: &mut ChaCha8Rng) -> Vec<u16> {
    let mut labels: Vec<u16> = (0..n).map(|i| (i % classes as usize) as u16 + 1).collect();
    labels.shuffle(rng);
    labels
}

/// Class prototypes plus per-bit noise. Labels run `1..=classes`; each split
/// is indexed from 0.
pub fn gen_synthetic_cyber(cfg: &SynthConfig) -> Result<(IndexedDataset, IndexedDataset)> {
    cfg.validate()?;
    let mut proto_rng = split_rng(cfg.seed, 0, PROTOTYPE_STREAM);
    let prototypes: Vec<BitVector> = (0..cfg.classes)
        .map(|_| BitVector::bernoulli(cfg.n_feat, cfg.p_base, &mut proto_rng))
        .collect();

    let make = |split: u64, n: usize| -> Result<IndexedDataset> {
        let labels = balanced_labels(
            n,
            cfg.classes,
            &mut split_rng(cfg.seed, split, LABEL_STREAM),
        );
        let rows: Vec<BitVector> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = split_rng(cfg.seed, split, i as u64);
                let noise = BitVector::bernoulli(cfg.n_feat, cfg.p_flip, &mut rng);
                prototypes[labels[i] as usize - 1]
                    .xor(&noise)
                    .expect("equal lengths")
            })
            .collect();
        IndexedDataset::from_bits(&rows, Some(&labels))
    };
    Ok((make(1, cfg.n_train)?, make(2, cfg.n_val)?))
}

/// Write one file per record named `{prefix}-{index:03}-{label}`, holding the
/// raw payload bytes.
pub fn export_record_files(ds: &IndexedDataset, dir: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in ds.records() {
        let label = r
            .label
            .ok_or_else(|| Error::Dataset("record files need labels".into()))?;
        fs::write(
            dir.join(format!("{prefix}-{:03}-{label}", r.index)),
            &r.payload,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub rows: u32,
    pub cols: u32,
    pub classes: u16,
    /// Amplitude of uniform per-pixel noise.
    pub noise: u8,
}

impl Default for ImageSynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 60_000,
            n_val: 10_000,
            rows: 28,
            cols: 28,
            classes: 10,
            noise: 24,
        }
    }
}

struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    level: f64,
}

fn class_templates(cfg: &ImageSynthConfig) -> Vec<Vec<Blob>> {
    let mut rng = split_rng(cfg.seed, 0, PROTOTYPE_STREAM);
    let (h, w) = (cfg.rows as f64, cfg.cols as f64);
    (0..cfg.classes)
        .map(|_| {
            (0..3)
                .map(|_| Blob {
                    cy: rng.random_range(0.25..0.75) * h,
                    cx: rng.random_range(0.25..0.75) * w,
                    ry: rng.random_range(0.1..0.3) * h,
                    rx: rng.random_range(0.1..0.3) * w,
                    level: rng.random_range(120.0..255.0),
                })
                .collect()
        })
        .collect()
}

/// Greyscale images: each class is a union of three soft ellipses; records
/// jitter position and brightness and add pixel noise. Labels run `0..classes`.
pub fn gen_synthetic_images(cfg: &ImageSynthConfig) -> Result<(IndexedDataset, IndexedDataset)> {
    if cfg.classes < 2 || cfg.classes > 256 {
        return Err(Error::param("image classes must be in 2..=256"));
    }
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(Error::param("image dimensions must be positive"));
    }
    let templates = class_templates(cfg);
    let make = |split: u64, n: usize| -> Result<IndexedDataset> {
        let mut lrng = split_rng(cfg.seed, split, LABEL_STREAM);
        let labels: Vec<u16> = balanced_labels(n, cfg.classes, &mut lrng)
            .into_iter()
            .map(|l| l - 1)
            .collect();
        let rows: Vec<Vec<u8>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = split_rng(cfg.seed, split, i as u64);
                let dy = rng.random_range(-2.0..=2.0);
                let dx = rng.random_range(-2.0..=2.0);
                let gain = rng.random_range(0.7..1.0);
                let blobs = &templates[labels[i] as usize];
                let mut px = Vec::with_capacity((cfg.rows * cfg.cols) as usize);
                for y in 0..cfg.rows {
                    for x in 0..cfg.cols {
                        let mut v: f64 = 0.0;
                        for b in blobs {
                            let ny = (y as f64 - b.cy - dy) / b.ry;
                            let nx = (x as f64 - b.cx - dx) / b.rx;
                            let r2 = ny * ny + nx * nx;
                            if r2 < 1.0 {
                                v = v.max(b.level * (1.0 - 0.5 * r2));
                            }
                        }
                        let noise = if cfg.noise > 0 {
                            rng.random_range(-(cfg.noise as f64)..=cfg.noise as f64)
                        } else {
                            0.0
                        };
                        px.push((v * gain + noise).round().clamp(0.0, 255.0) as u8);
                    }
                }
                px
            })
            .collect();
        IndexedDataset::from_u8_rows(rows, Some(&labels))
    };
    Ok((make(1, cfg.n_train)?, make(2, cfg.n_val)?))
}
