//! Output divergence under a change of key.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::IndexedDataset;
use crate::error::{Error, Result};
use crate::key::SecretKey;
use crate::security::report::AttackReport;
use crate::sketch::{Scheme, SketchParams, Sketcher};

/// Sufficient statistics for one or more sketch comparisons.
#[derive(Default, Clone, Copy)]
struct Parts {
    n: f64,
    differing: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl Parts {
    fn add(mut self, o: Parts) -> Parts {
        self.n += o.n;
        self.differing += o.differing;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
        self
    }

    fn value(&self, scheme: Scheme) -> f64 {
        match scheme {
            Scheme::BinarySample => self.differing / self.n,
            Scheme::RealProjection => {
                let cov = self.sxy - self.sx * self.sy / self.n;
                let vx = self.sxx - self.sx * self.sx / self.n;
                let vy = self.syy - self.sy * self.sy / self.n;
                if vx <= 0.0 || vy <= 0.0 {
                    0.0
                } else {
                    cov / (vx * vy).sqrt()
                }
            }
        }
    }
}

fn divergence_parts(a: &Sketcher, b: &Sketcher, sample: &IndexedDataset) -> Result<Parts> {
    if a.params() != b.params() {
        return Err(Error::param("sketchers have different parameters"));
    }
    if sample.is_empty() {
        return Err(Error::Dataset("empty sample".into()));
    }
    let scheme = a.params().scheme();
    let n_out = a.params().n_out() as f64;
    sample
        .records()
        .par_iter()
        .map(|r| {
            let (x, y) = (a.sketch_payload(&r.payload)?, b.sketch_payload(&r.payload)?);
            let mut p = Parts::default();
            match scheme {
                Scheme::BinarySample => {
                    p.n = n_out;
                    p.differing = x
                        .iter()
                        .zip(&y)
                        .map(|(u, v)| (u ^ v).count_ones() as f64)
                        .sum();
                }
                Scheme::RealProjection => {
                    for (&u, &v) in x.iter().zip(&y) {
                        let (u, v) = (u as f64, v as f64);
                        p.n += 1.0;
                        p.sx += u;
                        p.sy += v;
                        p.sxx += u * u;
                        p.syy += v * v;
                        p.sxy += u * v;
                    }
                }
            }
            Ok(p)
        })
        .try_reduce(Parts::default, |p, q| Ok(p.add(q)))
}

/// Binary: mean normalized Hamming distance between the two sketches of
/// each record. Real: Pearson correlation of all sketch elements pooled
/// over records.
pub fn sketch_divergence(a: &Sketcher, b: &Sketcher, sample: &IndexedDataset) -> Result<f64> {
    Ok(divergence_parts(a, b, sample)?.value(a.params().scheme()))
}

/// Compare sketches under a base key with those under `keys` other keys.
/// Other keys are independent, or with `flip_bits` the base key with one
/// bit flipped. A trial succeeds for the attacker when the divergence lands
/// outside the band expected of unrelated keys (0.5 ± 0.02 normalized
/// distance, or |rho| <= 0.05). `pooled_divergence` is the same statistic
/// over all comparisons at once.
pub fn key_avalanche(
    params: &SketchParams,
    sample: &IndexedDataset,
    keys: usize,
    flip_bits: bool,
    seed: u64,
) -> Result<AttackReport> {
    let start = Instant::now();
    if sample.len() < 2 {
        return Err(Error::Dataset(
            "key avalanche needs at least two records".into(),
        ));
    }
    if keys == 0 {
        return Err(Error::param("need at least one comparison key"));
    }
    let base_key = SecretKey::from_seed(seed, 0);
    let base = Sketcher::new(&base_key, params.clone())?;
    let parts = (1..=keys)
        .into_par_iter()
        .map(|i| {
            let key = if flip_bits {
                base_key.with_bit_flipped((i - 1) % 256)?
            } else {
                SecretKey::from_seed(seed, i as u64)
            };
            divergence_parts(&base, &Sketcher::new(&key, params.clone())?, sample)
        })
        .collect::<Result<Vec<Parts>>>()?;
    let divergences: Vec<f64> = parts.iter().map(|p| p.value(params.scheme())).collect();
    // one estimate over every key, record and element
    let pooled = parts
        .iter()
        .fold(Parts::default(), |acc, p| acc.add(*p))
        .value(params.scheme());
    let binary = params.scheme() == Scheme::BinarySample;
    let out_of_band = |d: f64| {
        if binary {
            (d - 0.5).abs() > 0.02
        } else {
            d.abs() > 0.05
        }
    };
    let n = divergences.len() as f64;
    let mean = divergences.iter().sum::<f64>() / n;
    let mean_abs = divergences.iter().map(|d| d.abs()).sum::<f64>() / n;
    let max_dev = divergences
        .iter()
        .map(|d| if binary { (d - 0.5).abs() } else { d.abs() })
        .fold(0.0, f64::max);
    let echo = serde_json::json!({
        "scheme": params.scheme().to_string(),
        "delta": params.delta().as_str(),
        "n_in": params.n_in(),
        "n_out": params.n_out(),
        "records": sample.len(),
        "keys": keys,
        "flip_bits": flip_bits,
    });
    Ok(AttackReport::new(
        "key_avalanche",
        keys as u64,
        divergences.iter().filter(|&&d| out_of_band(d)).count() as u64,
        0.0,
        seed,
        echo,
    )?
    .metric("mean_divergence", mean)
    .metric("mean_abs_divergence", mean_abs)
    .metric("pooled_divergence", pooled)
    .metric("max_deviation", max_dev)
    .metric(
        "same_key_divergence",
        sketch_divergence(&base, &base, sample)?,
    )
    .timed(start))
}
