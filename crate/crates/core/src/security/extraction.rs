//! Consistency of models trained on two samples in sketch space.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::ml::kmodes::{assign, kmodes, KModesConfig};
use crate::ml::{rand_index, Partition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub name: String,
    pub k: usize,
    pub records: usize,
    /// Rand index between the two models' partitions of the pooled records.
    pub cross_rand_index: f64,
    /// Mean normalized Hamming distance from each center of the first model
    /// to the nearest center of the second.
    pub center_distance: f64,
    /// `1 - center_distance`.
    pub consistency: f64,
    pub seed: u64,
    pub wall_ms: f64,
}

/// Train k-modes on each sample and compare the resulting models.
pub fn model_extraction_check(
    a: &[BitVector],
    b: &[BitVector],
    cfg: &KModesConfig,
) -> Result<ExtractionReport> {
    let start = Instant::now();
    if a.len() < cfg.k || b.len() < cfg.k {
        return Err(Error::Dataset(format!(
            "each sample needs at least k = {} records",
            cfg.k
        )));
    }
    let ma = kmodes(a, cfg)?;
    let mb = kmodes(b, cfg)?;
    let pooled: Vec<BitVector> = a.iter().chain(b).cloned().collect();
    let pa: Vec<u32> = assign(&pooled, &ma.centers, cfg.distance)?
        .into_iter()
        .map(|x| x.0)
        .collect();
    let pb: Vec<u32> = assign(&pooled, &mb.centers, cfg.distance)?
        .into_iter()
        .map(|x| x.0)
        .collect();
    let cross = rand_index(
        &Partition::from_positions(&pa),
        &Partition::from_positions(&pb),
    )?;
    let bits = ma.centers[0].len() as f64;
    let center_distance = ma
        .centers
        .iter()
        .map(|c| {
            mb.centers
                .iter()
                .map(|d| c.hamming(d).map(|h| h as f64 / bits))
                .try_fold(f64::INFINITY, |m, h| h.map(|h| m.min(h)))
        })
        .sum::<Result<f64>>()?
        / ma.centers.len() as f64;
    Ok(ExtractionReport {
        name: "model_extraction".into(),
        k: cfg.k,
        records: pooled.len(),
        cross_rand_index: cross,
        center_distance,
        consistency: 1.0 - center_distance,
        seed: cfg.seed,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
