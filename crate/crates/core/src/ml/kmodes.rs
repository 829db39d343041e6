//! k-modes over packed bitvectors.
//!
//! Lloyd iterations: assign every record to its most similar center, then
//! replace each center by the per-position majority of its members. Centers
//! are recomputed with order-independent counting, so the result does not
//! depend on the rayon thread count.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::{BitCounter, BitVector, Tie};
use crate::error::{Error, Result};
use crate::ml::partition::Partition;
use crate::similarity::SimilarityMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyClusterPolicy {
    /// Move the record farthest from its current center into the empty cluster.
    #[default]
    ReseedFarthest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// `k` distinct records sampled uniformly.
    Random,
    /// First record uniform, each further record sampled with probability
    /// proportional to its squared Hamming distance to the nearest chosen one.
    #[default]
    Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KModesConfig {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    pub distance: SimilarityMeasure,
    pub empty_cluster_policy: EmptyClusterPolicy,
    pub init: InitMethod,
    /// Stop early once an iteration leaves every assignment unchanged.
    /// Disable to always run exactly `iterations` rounds.
    pub stop_on_convergence: bool,
    pub tie: Tie,
}

impl KModesConfig {
    pub const DEFAULT_ITERATIONS: usize = 20;

    pub fn new(k: usize) -> Self {
        Self {
            k,
            iterations: Self::DEFAULT_ITERATIONS,
            seed: 0,
            distance: SimilarityMeasure::HammingSimilarity,
            empty_cluster_policy: EmptyClusterPolicy::ReseedFarthest,
            init: InitMethod::Spread,
            stop_on_convergence: true,
            tie: Tie::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param("k-modes needs k >= 2"));
        }
        if self.iterations == 0 {
            return Err(Error::param("k-modes needs at least one iteration"));
        }
        Ok(())
    }
}

// `Tie` lives in bitvec; give it serde here to keep bitvec dependency-light.
impl Serialize for Tie {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            Tie::Zero => "zero",
            Tie::One => "one",
        })
    }
}

impl<'de> Deserialize<'de> for Tie {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "zero" => Ok(Tie::Zero),
            "one" => Ok(Tie::One),
            other => Err(serde::de::Error::custom(format!(
                "unknown tie policy {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KModesResult {
    /// Cluster of each input record, by position.
    pub assignment: Vec<u32>,
    pub centers: Vec<BitVector>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Sum of per-record costs after each assignment step.
    pub objective: Vec<f64>,
}

impl KModesResult {
    pub fn partition(&self) -> Partition {
        Partition::from_positions(&self.assignment)
    }

    /// Partition keyed by the given record indexes instead of positions.
    pub fn partition_for(&self, indexes: &[u32]) -> Result<Partition> {
        Partition::from_indexed(indexes, &self.assignment)
    }
}

/// Most similar center for every record (ties go to the lower cluster id),
/// with the matching cost from [`SimilarityMeasure::bits_cost`].
pub fn assign(
    data: &[BitVector],
    centers: &[BitVector],
    measure: SimilarityMeasure,
) -> Result<Vec<(u32, f64)>> {
    if centers.is_empty() {
        return Err(Error::param("no centers to assign to"));
    }
    data.par_iter()
        .with_min_len(16)
        .map(|x| {
            let mut best = (0u32, f64::NEG_INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let s = measure.bits(x, center)?;
                if s > best.1 {
                    best = (c as u32, s);
                }
            }
            Ok((best.0, measure.bits_cost(x, &centers[best.0 as usize])?))
        })
        .collect()
}

fn check_data(data: &[BitVector], k: usize) -> Result<usize> {
    if data.len() < k {
        return Err(Error::param(format!(
            "{} records cannot form {k} clusters",
            data.len()
        )));
    }
    let len = data[0].len();
    if len == 0 {
        return Err(Error::param("zero-length records"));
    }
    if let Some(bad) = data.iter().find(|v| v.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: bad.len(),
        });
    }
    Ok(len)
}

fn initial_centers(data: &[BitVector], cfg: &KModesConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.len();
    match cfg.init {
        InitMethod::Random => index::sample(rng, n, cfg.k).into_vec(),
        InitMethod::Spread => {
            let mut chosen = vec![rng.random_range(0..n)];
            let mut taken = vec![false; n];
            taken[chosen[0]] = true;
            let mut nearest: Vec<f64> = data
                .par_iter()
                .map(|x| x.hamming(&data[chosen[0]]).unwrap() as f64)
                .collect();
            while chosen.len() < cfg.k {
                let weights: Vec<f64> = nearest
                    .iter()
                    .zip(&taken)
                    .map(|(d, t)| if *t { 0.0 } else { d * d })
                    .collect();
                let total: f64 = weights.iter().sum();
                let pick = if total > 0.0 {
                    let mut r = rng.random::<f64>() * total;
                    let mut pick = None;
                    for (i, w) in weights.iter().enumerate() {
                        if *w > 0.0 {
                            pick = Some(i);
                            if r < *w {
                                break;
                            }
                            r -= w;
                        }
                    }
                    pick.expect("positive total weight")
                } else {
                    // remaining records duplicate chosen ones: uniform over the rest
                    let free: Vec<usize> = (0..n).filter(|i| !taken[*i]).collect();
                    free[rng.random_range(0..free.len())]
                };
                taken[pick] = true;
                chosen.push(pick);
                let c = &data[pick];
                nearest
                    .par_iter_mut()
                    .zip(data.par_iter())
                    .for_each(|(d, x)| *d = d.min(x.hamming(c).unwrap() as f64));
            }
            chosen
        }
    }
}

fn recompute_centers(
    data: &[BitVector],
    assignment: &[(u32, f64)],
    k: usize,
    len: usize,
    tie: Tie,
) -> Result<Vec<BitVector>> {
    let counters = data
        .par_iter()
        .zip(assignment.par_iter())
        .with_min_len(64)
        .try_fold(
            || vec![BitCounter::new(len); k],
            |mut acc, (x, (c, _))| {
                acc[*c as usize].add(x)?;
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(
            || vec![BitCounter::new(len); k],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.merge(y)?;
                }
                Ok(a)
            },
        )?;
    counters.iter().map(|c| c.majority(tie)).collect()
}

/// Fill empty clusters by moving in the record farthest from its center.
fn reseed_empty(
    data: &[BitVector],
    centers: &mut [BitVector],
    assignment: &mut [(u32, f64)],
    measure: SimilarityMeasure,
) -> Result<()> {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for (c, _) in assignment.iter() {
        sizes[*c as usize] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let far = assignment
            .iter()
            .enumerate()
            .filter(|(_, (c, _))| sizes[*c as usize] > 1)
            .fold(None::<(usize, f64)>, |best, (i, (_, cost))| match best {
                Some((_, b)) if *cost <= b => best,
                _ => Some((i, *cost)),
            })
            .map(|(i, _)| i)
            .ok_or_else(|| Error::param("cannot reseed: every cluster is a singleton"))?;
        sizes[assignment[far].0 as usize] -= 1;
        sizes[empty] = 1;
        centers[empty] = data[far].clone();
        assignment[far] = (
            empty as u32,
            measure.bits_cost(&data[far], &centers[empty])?,
        );
    }
    Ok(())
}

pub fn kmodes(data: &[BitVector], cfg: &KModesConfig) -> Result<KModesResult> {
    cfg.validate()?;
    let len = check_data(data, cfg.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centers: Vec<BitVector> = initial_centers(data, cfg, &mut rng)
        .into_iter()
        .map(|i| data[i].clone())
        .collect();

    let mut previous: Option<Vec<u32>> = None;
    let mut objective = Vec::with_capacity(cfg.iterations);
    let mut converged = false;
    let mut iterations_run = 0;
    let mut labels = Vec::new();

    for _ in 0..cfg.iterations {
        iterations_run += 1;
        let mut assignment = assign(data, &centers, cfg.distance)?;
        match cfg.empty_cluster_policy {
            EmptyClusterPolicy::ReseedFarthest => {
                reseed_empty(data, &mut centers, &mut assignment, cfg.distance)?
            }
        }
        objective.push(assignment.iter().map(|(_, c)| c).sum());
        labels = assignment.iter().map(|(c, _)| *c).collect::<Vec<_>>();
        if previous.as_ref() == Some(&labels) {
            converged = true;
            if cfg.stop_on_convergence {
                break;
            }
        }
        centers = recompute_centers(data, &assignment, cfg.k, len, cfg.tie)?;
        previous = Some(labels.clone());
    }

    Ok(KModesResult {
        assignment: labels,
        centers,
        iterations_run,
        converged,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per: usize, len: usize, seed: u64) -> (Vec<BitVector>, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let protos = [
            BitVector::random(len, &mut rng),
            BitVector::random(len, &mut rng),
        ];
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let class = i % 2;
            let noise = BitVector::bernoulli(len, 0.1, &mut rng);
            data.push(protos[class].xor(&noise).unwrap());
            labels.push(class as u32);
        }
        (data, labels)
    }

    #[test]
    fn recovers_planted_blobs() {
        let (data, labels) = blobs(50, 1000, 1);
        for measure in [
            SimilarityMeasure::HammingSimilarity,
            SimilarityMeasure::AndCount,
        ] {
            let mut cfg = KModesConfig::new(2);
            cfg.distance = measure;
            let res = kmodes(&data, &cfg).unwrap();
            let ri = crate::ml::rand_index(&res.partition(), &Partition::from_positions(&labels));
            assert_eq!(ri.unwrap(), 1.0, "{measure}");
        }
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<_> = (0..6).map(|_| BitVector::random(64, &mut rng)).collect();
        for init in [InitMethod::Random, InitMethod::Spread] {
            let mut cfg = KModesConfig::new(6);
            cfg.init = init;
            let res = kmodes(&data, &cfg).unwrap();
            let mut a = res.assignment.clone();
            a.sort();
            a.dedup();
            assert_eq!(a.len(), 6);
        }
    }

    #[test]
    fn deterministic() {
        let (data, _) = blobs(30, 300, 3);
        let cfg = KModesConfig {
            seed: 99,
            ..KModesConfig::new(3)
        };
        assert_eq!(kmodes(&data, &cfg).unwrap(), kmodes(&data, &cfg).unwrap());
    }

    #[test]
    fn objective_non_increasing_under_hamming() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<_> = (0..200)
            .map(|_| BitVector::bernoulli(256, 0.3, &mut rng))
            .collect();
        let cfg = KModesConfig {
            stop_on_convergence: false,
            iterations: 15,
            ..KModesConfig::new(5)
        };
        let res = kmodes(&data, &cfg).unwrap();
        assert_eq!(res.objective.len(), 15);
        for w in res.objective.windows(2) {
            assert!(w[1] <= w[0], "{:?}", res.objective);
        }
    }

    #[test]
    fn duplicates_trigger_reseed() {
        // five copies of one record plus one outlier, k = 3: initial
        // assignment leaves a duplicate center empty.
        let a = BitVector::zeros(32);
        let b = BitVector::ones(32);
        let mut data = vec![a.clone(); 5];
        data.push(b);
        let cfg = KModesConfig {
            init: InitMethod::Random,
            ..KModesConfig::new(3)
        };
        let res = kmodes(&data, &cfg).unwrap();
        let mut used = res.assignment.clone();
        used.sort();
        used.dedup();
        assert_eq!(used, vec![0, 1, 2]);
    }

    #[test]
    fn errors() {
        let data = vec![BitVector::zeros(8); 3];
        assert!(kmodes(&data, &KModesConfig::new(4)).is_err());
        assert!(kmodes(&data, &KModesConfig::new(1)).is_err());
        let cfg = KModesConfig {
            iterations: 0,
            ..KModesConfig::new(2)
        };
        assert!(kmodes(&data, &cfg).is_err());
        assert!(kmodes(&vec![BitVector::zeros(0); 3], &KModesConfig::new(2)).is_err());
        let ragged = vec![BitVector::zeros(8), BitVector::zeros(9)];
        assert!(kmodes(&ragged, &KModesConfig::new(2)).is_err());
    }
}
