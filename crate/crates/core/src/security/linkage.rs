//! Re-identification of protected records from plaintext by matching
//! sorted distance profiles.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{IndexedDataset, PayloadKind};
use crate::error::{Error, Result};
use crate::ml::PermutationSet;
use crate::security::report::AttackReport;
use crate::stats::pearson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Repeatedly take the best-scoring unmatched pair.
    #[default]
    Greedy,
    /// Maximum total score.
    Hungarian,
}

impl FromStr for Matching {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "hungarian" => Ok(Self::Hungarian),
            _ => Err(Error::param(format!("unknown matching '{s}'"))),
        }
    }
}

/// For each record, its distances to every other record, sorted ascending.
/// Hamming for bit payloads, Euclidean for byte vectors.
fn profiles(ds: &IndexedDataset) -> Result<Vec<Vec<f64>>> {
    let n = ds.len();
    let dist: Box<dyn Fn(usize, usize) -> f64 + Sync> = match ds.meta().payload_kind() {
        PayloadKind::Bits => {
            let rows = ds.bitvectors()?;
            Box::new(move |i, j| rows[i].hamming(&rows[j]).expect("same length") as f64)
        }
        PayloadKind::U8Vector => {
            let rows = ds.byte_rows()?;
            Box::new(move |i, j| {
                rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
        }
    };
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut p: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(i, j)).collect();
            p.sort_by(f64::total_cmp);
            p
        })
        .collect())
}

fn greedy(score: &[Vec<f64>]) -> Vec<usize> {
    let n = score.len();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    pairs.sort_by(|&(a, b), &(c, d)| {
        score[c][d]
            .total_cmp(&score[a][b])
            .then((a, b).cmp(&(c, d)))
    });
    let mut row_to_col = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    let mut left = n;
    for (i, j) in pairs {
        if left == 0 {
            break;
        }
        if row_to_col[i] == usize::MAX && !col_used[j] {
            row_to_col[i] = j;
            col_used[j] = true;
            left -= 1;
        }
    }
    row_to_col
}

/// Shortest augmenting path assignment minimising total cost over a square
/// matrix. Returns the column for each row.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    row_to_col
}

/// Match every protected record to a plaintext record using only the two
/// datasets, then score the matching against `truth`. Baseline is a random
/// matching, `1 / count`.
pub fn linkage_attack(
    plain: &IndexedDataset,
    protected: &IndexedDataset,
    truth: &PermutationSet,
    matching: Matching,
) -> Result<AttackReport> {
    let start = Instant::now();
    let n = plain.len();
    if n != protected.len() {
        return Err(Error::RecordSetMismatch);
    }
    if n == 0 {
        return Err(Error::Dataset("linkage needs at least one record".into()));
    }
    let pp = profiles(plain)?;
    let qp = profiles(protected)?;
    // score[q][p]: protected record q against plaintext record p
    let score: Vec<Vec<f64>> = qp
        .par_iter()
        .map(|q| pp.iter().map(|p| pearson(q, p)).collect())
        .collect();
    let assignment = match matching {
        Matching::Greedy => greedy(&score),
        Matching::Hungarian => {
            let cost: Vec<Vec<f64>> = score
                .iter()
                .map(|r| r.iter().map(|s| -s).collect())
                .collect();
            hungarian(&cost)
        }
    };
    let correct = assignment
        .iter()
        .enumerate()
        .filter(|&(q, &p)| {
            truth.plain_index(protected.records()[q].index) == Some(plain.records()[p].index)
        })
        .count();
    let true_scores: Vec<f64> = protected
        .records()
        .iter()
        .enumerate()
        .filter_map(|(q, r)| {
            let p_idx = truth.plain_index(r.index)?;
            let p = plain.records().iter().position(|x| x.index == p_idx)?;
            Some(score[q][p])
        })
        .collect();
    let echo = serde_json::json!({
        "records": n,
        "matching": matching,
        "plain_scheme": format!("{:?}", plain.meta().scheme),
        "protected_scheme": format!("{:?}", protected.meta().scheme),
        "delta": protected.meta().delta,
    });
    let mean_true = if true_scores.is_empty() {
        0.0
    } else {
        true_scores.iter().sum::<f64>() / true_scores.len() as f64
    };
    Ok(
        AttackReport::new("linkage", n as u64, correct as u64, 1.0 / n as f64, 0, echo)?
            .metric("mean_true_pair_score", mean_true)
            .timed(start),
    )
}
