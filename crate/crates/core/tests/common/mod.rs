//! Reference implementations the library is checked against. Everything
//! here works bit by bit or by exhaustive enumeration, on plain `Vec<bool>`
//! and `Vec<u8>`, and shares no code with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use hai_core::{BitVector, SimilarityMeasure};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn bools(v: &BitVector) -> Vec<bool> {
    (0..v.len()).map(|i| v.get(i)).collect()
}

/// MSB-first packing: bit `i` is bit `7 - i % 8` of byte `i / 8`.
pub fn pack(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

pub fn naive_popcount(a: &[bool]) -> u64 {
    a.iter().filter(|&&b| b).count() as u64
}

pub fn naive_hamming(a: &[bool], b: &[bool]) -> u64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

pub fn naive_and(a: &[bool], b: &[bool]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| **x && **y).count() as u64
}

/// Column-wise strict majority; exact halves become `tie`.
pub fn naive_majority(rows: &[Vec<bool>], tie: bool) -> Vec<bool> {
    (0..rows[0].len())
        .map(|i| {
            let ones = rows.iter().filter(|r| r[i]).count();
            let zeros = rows.len() - ones;
            if ones == zeros {
                tie
            } else {
                ones > zeros
            }
        })
        .collect()
}

pub fn naive_similarity(m: SimilarityMeasure, a: &[bool], b: &[bool]) -> f64 {
    match m {
        SimilarityMeasure::HammingSimilarity => (a.len() as u64 - naive_hamming(a, b)) as f64,
        SimilarityMeasure::AndCount => naive_and(a, b) as f64,
        _ => unimplemented!("oracle covers bit measures"),
    }
}

pub fn naive_euclidean_similarity(a: &[u8], b: &[u8]) -> f64 {
    -a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Full sort of every training record, then a majority vote among the first
/// `k`: most votes, then larger summed similarity, then smaller label.
pub fn naive_knn(scores: &[f64], labels: &[u32], k: usize) -> u32 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));
    let mut tally: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for &i in &order[..k] {
        let e = tally.entry(labels[i]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += scores[i];
    }
    let mut best: Option<(u32, usize, f64)> = None;
    for (label, (count, sum)) in tally {
        let better = match best {
            None => true,
            Some((_, c, s)) => count > c || (count == c && sum > s),
        };
        if better {
            best = Some((label, count, sum));
        }
    }
    best.unwrap().0
}

/// Every set partition of `n` elements as restricted growth strings.
pub fn all_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, n: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let max = prefix.iter().copied().max().map_or(0, |m| m + 1);
        for c in 0..=max {
            prefix.push(c);
            rec(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, &mut out);
    out
}

/// Fraction of element pairs on which two labelings agree about
/// "same cluster" versus "different cluster".
pub fn brute_rand_index(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

/// Replace a uniformly random fraction `t` of the coordinates of `x` with
/// fresh values drawn by `fresh`.
pub fn perturb<T: Clone, R: Rng>(
    x: &[T],
    t: f64,
    rng: &mut R,
    mut fresh: impl FnMut(&mut R) -> T,
) -> Vec<T> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(rng);
    let m = (t * x.len() as f64).round() as usize;
    let mut y = x.to_vec();
    for &i in &idx[..m] {
        y[i] = fresh(rng);
    }
    y
}

pub fn euclidean(a: &[u8], b: &[u8]) -> f64 {
    -naive_euclidean_similarity(a, b)
}

/// Order-preservation trial outcome for one triple: `None` if the plaintext
/// gap is below the margin, otherwise whether the sketch kept the strict
/// order.
pub fn order_kept(plain: (f64, f64), sketch: (f64, f64), margin: f64) -> Option<bool> {
    let gap = plain.0 - plain.1;
    if gap.abs() < margin {
        return None;
    }
    Some((gap > 0.0 && sketch.0 > sketch.1) || (gap < 0.0 && sketch.0 < sketch.1))
}

/// Pearson correlation, computed directly from the definition.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
