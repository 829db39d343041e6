//! Brute-force inversion of BinarySample sketches at toy sizes.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::key::SecretKey;
use crate::security::report::AttackReport;
use crate::sketch::{Scheme, SketchParams, Sketcher};

/// Largest input width enumerated exhaustively.
pub const MAX_PREIMAGE_BITS: u32 = 24;

fn pack(v: &BitVector) -> u64 {
    v.iter().fold(0, |acc, b| acc << 1 | b as u64)
}

fn check_toy(params: &SketchParams) -> Result<()> {
    if params.scheme() != Scheme::BinarySample {
        return Err(Error::param("preimage search applies to the binary scheme"));
    }
    if params.n_in() > MAX_PREIMAGE_BITS {
        return Err(Error::param(format!(
            "n_in {} too large for exhaustive search (max {MAX_PREIMAGE_BITS})",
            params.n_in()
        )));
    }
    Ok(())
}

/// Number of inputs whose sketch equals `sketch`, by enumerating all
/// `2^n_in` candidates.
pub fn count_preimages(sketcher: &Sketcher, sketch: &BitVector) -> Result<u64> {
    check_toy(sketcher.params())?;
    Error::check_len(sketcher.params().n_out() as usize, sketch.len())?;
    let target = pack(sketch);
    let space = 1u64 << sketcher.params().n_in();
    (0..space)
        .into_par_iter()
        .try_fold(
            || 0u64,
            |n, x| Ok(n + (sketcher.sketch_small(x)? == target) as u64),
        )
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    /// Fraction of input bits guessed right, per candidate key.
    pub per_key: Vec<f64>,
    pub mean: f64,
    pub best: f64,
}

/// Keyless inversion: for each guessed key, place the unmasked sketch bits
/// where that key would have sampled them and fill the rest at random, then
/// score the guess against the true input.
pub fn keyless_recovery(
    params: &SketchParams,
    input: &BitVector,
    sketch: &BitVector,
    candidates: usize,
    seed: u64,
) -> Result<RecoveryStats> {
    if params.scheme() != Scheme::BinarySample {
        return Err(Error::param(
            "keyless recovery applies to the binary scheme",
        ));
    }
    if candidates == 0 {
        return Err(Error::param("need at least one candidate key"));
    }
    Error::check_len(params.n_in() as usize, input.len())?;
    Error::check_len(params.n_out() as usize, sketch.len())?;
    let n_in = params.n_in() as usize;
    let per_key = (0..candidates)
        .into_par_iter()
        .map(|c| {
            let guess_key = SecretKey::from_seed(seed, c as u64 + 1);
            let s = Sketcher::new(&guess_key, params.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut guess = BitVector::random(n_in, &mut rng);
            let mask = s.mask().expect("binary sketcher");
            for (j, &p) in s.gather().expect("binary sketcher").iter().enumerate() {
                guess.set(p as usize, sketch.get(j) ^ mask.get(j));
            }
            Ok(1.0 - guess.hamming(input)? as f64 / n_in as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_key.iter().sum::<f64>() / per_key.len() as f64;
    let best = per_key.iter().copied().fold(f64::MIN, f64::max);
    Ok(RecoveryStats {
        per_key,
        mean,
        best,
    })
}

/// Invert `trials` random sketches. With `key`, the attacker holds the key
/// and enumerates preimages; success means the input was pinned down
/// uniquely. Without it, each trial tries `candidates` guessed keys and every
/// input bit is one Bernoulli trial against a 0.5 baseline.
pub fn preimage_attack(
    params: &SketchParams,
    key: Option<&SecretKey>,
    trials: usize,
    candidates: usize,
    seed: u64,
) -> Result<AttackReport> {
    let start = Instant::now();
    check_toy(params)?;
    if trials == 0 {
        return Err(Error::param("need at least one trial"));
    }
    let n_in = params.n_in() as usize;
    let echo = serde_json::json!({
        "n_in": params.n_in(),
        "n_out": params.n_out(),
        "delta": params.delta().as_str(),
        "with_key": key.is_some(),
        "candidates": candidates,
    });
    let inputs: Vec<BitVector> = (0..trials)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 << 32 | t as u64);
            BitVector::random(n_in, &mut rng)
        })
        .collect();

    match key {
        Some(key) => {
            let s = Sketcher::new(key, params.clone())?;
            let counts = inputs
                .iter()
                .map(|x| count_preimages(&s, &s.sketch_binary(x)?))
                .collect::<Result<Vec<u64>>>()?;
            let expected = 1u64 << (params.n_in() - params.n_out());
            let unique = counts.iter().filter(|&&c| c == 1).count() as u64;
            let matching = counts.iter().filter(|&&c| c == expected).count();
            Ok(AttackReport::new(
                "preimage_with_key",
                trials as u64,
                unique,
                1.0 / (1u64 << n_in) as f64,
                seed,
                echo,
            )?
            .metric("expected_preimages", expected as f64)
            .metric("min_preimages", *counts.iter().min().unwrap() as f64)
            .metric("max_preimages", *counts.iter().max().unwrap() as f64)
            .metric(
                "fraction_matching_expected",
                matching as f64 / trials as f64,
            )
            .timed(start))
        }
        None => {
            let true_key = SecretKey::from_seed(seed, 0);
            let s = Sketcher::new(&true_key, params.clone())?;
            let mut correct = 0u64;
            let mut best = 0.0f64;
            for (t, x) in inputs.iter().enumerate() {
                let stats = keyless_recovery(
                    params,
                    x,
                    &s.sketch_binary(x)?,
                    candidates,
                    seed.wrapping_add(1 + t as u64),
                )?;
                correct += stats
                    .per_key
                    .iter()
                    .map(|a| (a * n_in as f64).round() as u64)
                    .sum::<u64>();
                best = best.max(stats.best);
            }
            let bits = (trials * candidates * n_in) as u64;
            let report = AttackReport::new("preimage_keyless", bits, correct, 0.5, seed, echo)?;
            let mean = report.success_rate;
            Ok(report
                .metric("mean_bit_recovery", mean)
                .metric("best_key_bit_recovery", best)
                .timed(start))
        }
    }
}
