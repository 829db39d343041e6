//! Forging an admissible sketch for an attacker-chosen cluster.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::ml::kmodes::assign;
use crate::security::report::AttackReport;
use crate::similarity::SimilarityMeasure;
use crate::stats::percentile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalleabilityConfig {
    /// Maximum bits flipped per forgery; `None` for no limit.
    pub budget: Option<usize>,
    pub trials: usize,
    pub seed: u64,
}

/// The attacker holds the model centers but not the key. Each trial picks a
/// held-out sketch and a random target cluster, then flips up to `budget`
/// randomly chosen bits where the sketch disagrees with the target center.
/// A forgery succeeds when it is assigned to the target and its distance to
/// the center is within the 99th percentile of the training distances in
/// that cluster. The baseline is the same test with no flips.
pub fn malleability_probe(
    train: &[BitVector],
    centers: &[BitVector],
    held_out: &[BitVector],
    cfg: &MalleabilityConfig,
) -> Result<AttackReport> {
    let start = Instant::now();
    if centers.is_empty() {
        return Err(Error::param("empty model"));
    }
    if train.is_empty() || held_out.is_empty() {
        return Err(Error::Dataset(
            "malleability needs training and held-out sketches".into(),
        ));
    }
    if cfg.trials == 0 {
        return Err(Error::param("need at least one trial"));
    }
    let measure = SimilarityMeasure::HammingSimilarity;
    let assigned = assign(train, centers, measure)?;
    let thresholds: Vec<f64> = (0..centers.len() as u32)
        .map(|c| {
            let d: Vec<f64> = assigned.iter().filter(|a| a.0 == c).map(|a| a.1).collect();
            if d.is_empty() {
                0.0
            } else {
                percentile(&d, 99.0)
            }
        })
        .collect();
    let admissible = |v: &BitVector, target: u32| -> Result<bool> {
        let (c, d) = assign(std::slice::from_ref(v), centers, measure)?[0];
        Ok(c == target && d <= thresholds[target as usize])
    };

    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let mut v = held_out[rng.random_range(0..held_out.len())].clone();
            let target = rng.random_range(0..centers.len()) as u32;
            let before = admissible(&v, target)?;
            let center = &centers[target as usize];
            let mut differing: Vec<usize> = (0..v.len())
                .filter(|&i| v.get(i) != center.get(i))
                .collect();
            differing.shuffle(&mut rng);
            let flips = cfg
                .budget
                .map_or(differing.len(), |b| b.min(differing.len()));
            for &i in &differing[..flips] {
                v.flip(i);
            }
            Ok((before, admissible(&v, target)?, flips))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = cfg.trials as f64;
    let baseline = outcomes.iter().filter(|o| o.0).count() as f64 / n;
    let success = outcomes.iter().filter(|o| o.1).count() as u64;
    let mean_flips = outcomes.iter().map(|o| o.2 as f64).sum::<f64>() / n;
    let echo = serde_json::json!({
        "budget": cfg.budget,
        "trials": cfg.trials,
        "clusters": centers.len(),
        "bits": centers[0].len(),
        "train": train.len(),
        "held_out": held_out.len(),
    });
    Ok(AttackReport::new(
        "malleability",
        cfg.trials as u64,
        success,
        baseline,
        cfg.seed,
        echo,
    )?
    .metric("mean_flips", mean_flips)
    .metric(
        "mean_threshold",
        thresholds.iter().sum::<f64>() / thresholds.len() as f64,
    )
    .timed(start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{kmodes, KModesConfig};

    fn setup() -> (Vec<BitVector>, Vec<BitVector>, Vec<BitVector>) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let protos = [
            BitVector::random(400, &mut rng),
            BitVector::random(400, &mut rng),
        ];
        let mut make = |n: usize| -> Vec<BitVector> {
            (0..n)
                .map(|i| {
                    protos[i % 2]
                        .xor(&BitVector::bernoulli(400, 0.1, &mut rng))
                        .unwrap()
                })
                .collect()
        };
        let train = make(100);
        let held = make(20);
        let centers = kmodes(&train, &KModesConfig::new(2)).unwrap().centers;
        (train, held, centers)
    }

    #[test]
    fn zero_budget_equals_baseline() {
        let (train, held, centers) = setup();
        let cfg = MalleabilityConfig {
            budget: Some(0),
            trials: 200,
            seed: 1,
        };
        let r = malleability_probe(&train, &centers, &held, &cfg).unwrap();
        assert_eq!(r.success_rate, r.baseline_rate);
        assert!(
            r.baseline_rate > 0.3 && r.baseline_rate < 0.7,
            "{}",
            r.baseline_rate
        );
    }

    #[test]
    fn unlimited_budget_always_succeeds() {
        let (train, held, centers) = setup();
        let cfg = MalleabilityConfig {
            budget: None,
            trials: 100,
            seed: 2,
        };
        let r = malleability_probe(&train, &centers, &held, &cfg).unwrap();
        assert_eq!(r.success_rate, 1.0);
        let again = malleability_probe(&train, &centers, &held, &cfg).unwrap();
        assert_eq!(again.without_timing(), r.without_timing());
    }

    #[test]
    fn empty_model_rejected() {
        let (train, held, _) = setup();
        let cfg = MalleabilityConfig {
            budget: None,
            trials: 1,
            seed: 0,
        };
        assert!(malleability_probe(&train, &[], &held, &cfg).is_err());
    }
}
