//! Exact k-nearest-neighbour classification by full scan.
//!
//! Neighbours are ranked by similarity, ties going to the lower training
//! position. The vote is won by the most frequent label; equal counts go to
//! the label with the larger summed similarity, then the smaller label.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::similarity::SimilarityMeasure;

fn check_args(n_train: usize, n_labels: usize, k: usize) -> Result<()> {
    if n_train == 0 {
        return Err(Error::param("empty training set"));
    }
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if k > n_train {
        return Err(Error::param(format!(
            "k = {k} exceeds {n_train} training records"
        )));
    }
    Error::check_len(n_train, n_labels)
}

/// Vote among the `k` best of `scores` (one per training record).
fn vote(scores: &mut [(f64, usize)], labels: &[u32], k: usize) -> u32 {
    let rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scores.len() {
        scores.select_nth_unstable_by(k - 1, rank);
    }
    let mut tally: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for &(s, i) in &scores[..k] {
        let e = tally.entry(labels[i]).or_default();
        e.0 += 1;
        e.1 += s;
    }
    // BTreeMap iterates labels in ascending order, so `max_by` with a
    // reversed label comparison keeps the smallest label on full ties.
    tally
        .into_iter()
        .max_by(|(la, (ca, sa)), (lb, (cb, sb))| {
            ca.cmp(cb).then(sa.total_cmp(sb)).then_with(|| lb.cmp(la))
        })
        .map(|(l, _)| l)
        .expect("k >= 1")
}

pub fn knn(
    train: &[BitVector],
    labels: &[u32],
    query: &BitVector,
    k: usize,
    measure: SimilarityMeasure,
) -> Result<u32> {
    check_args(train.len(), labels.len(), k)?;
    let mut scores = train
        .iter()
        .enumerate()
        .map(|(i, t)| Ok((measure.bits(query, t)?, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(vote(&mut scores, labels, k))
}

pub fn knn_batch(
    train: &[BitVector],
    labels: &[u32],
    queries: &[BitVector],
    k: usize,
    measure: SimilarityMeasure,
) -> Result<Vec<u32>> {
    check_args(train.len(), labels.len(), k)?;
    queries
        .par_iter()
        .map(|q| knn(train, labels, q, k, measure))
        .collect()
}

/// k-NN over byte vectors (`Euclidean` or `Cosine`).
pub fn knn_bytes(
    train: &[Vec<u8>],
    labels: &[u32],
    query: &[u8],
    k: usize,
    measure: SimilarityMeasure,
) -> Result<u32> {
    check_args(train.len(), labels.len(), k)?;
    let q: Vec<f64> = query.iter().map(|&v| v as f64).collect();
    let mut scores = train
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let t: Vec<f64> = t.iter().map(|&v| v as f64).collect();
            Ok((measure.real(&q, &t)?, i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vote(&mut scores, labels, k))
}

pub fn knn_bytes_batch(
    train: &[Vec<u8>],
    labels: &[u32],
    queries: &[Vec<u8>],
    k: usize,
    measure: SimilarityMeasure,
) -> Result<Vec<u32>> {
    check_args(train.len(), labels.len(), k)?;
    queries
        .par_iter()
        .map(|q| knn_bytes(train, labels, q, k, measure))
        .collect()
}

/// Fraction of positions where two prediction vectors agree.
pub fn agreement(a: &[u32], b: &[u32]) -> Result<f64> {
    Error::check_len(a.len(), b.len())?;
    if a.is_empty() {
        return Ok(1.0);
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_match_wins_with_k1() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train: Vec<_> = (0..20).map(|_| BitVector::random(128, &mut rng)).collect();
        let labels: Vec<u32> = (0..20).map(|i| i % 4).collect();
        for (i, t) in train.iter().enumerate() {
            let got = knn(&train, &labels, t, 1, SimilarityMeasure::HammingSimilarity).unwrap();
            assert_eq!(got, labels[i]);
        }
    }

    #[test]
    fn majority_of_equidistant() {
        let train = vec![
            BitVector::from_bools([true, false]),
            BitVector::from_bools([false, true]),
            BitVector::from_bools([true, true]),
        ];
        let train4: Vec<_> = [[1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 1, 0]]
            .iter()
            .map(|r| BitVector::from_bools(r.iter().map(|b| *b == 1)))
            .collect();
        // all three at Hamming distance 2
        let query = BitVector::from_bools([false; 4]);
        let labels = [0, 0, 1];
        assert_eq!(
            knn(
                &train4,
                &labels,
                &query,
                3,
                SimilarityMeasure::HammingSimilarity
            )
            .unwrap(),
            0
        );
        // ties on index: k=1 picks the lowest position among equals
        assert_eq!(
            knn(
                &train,
                &[5, 6, 7],
                &BitVector::from_bools([false, false]),
                1,
                SimilarityMeasure::HammingSimilarity
            )
            .unwrap(),
            5
        );
    }

    #[test]
    fn vote_tie_uses_similarity_then_label() {
        // two neighbours with different labels: closer one wins
        let train = vec![
            BitVector::from_bools([true, true, true, false]),
            BitVector::from_bools([true, false, false, false]),
        ];
        let q = BitVector::from_bools([true, true, true, true]);
        assert_eq!(
            knn(&train, &[9, 1], &q, 2, SimilarityMeasure::HammingSimilarity).unwrap(),
            9
        );
        // fully tied: smaller label
        let same = vec![BitVector::zeros(4), BitVector::zeros(4)];
        assert_eq!(
            knn(&same, &[7, 3], &q, 2, SimilarityMeasure::HammingSimilarity).unwrap(),
            3
        );
    }

    #[test]
    fn argument_errors() {
        let t = vec![BitVector::zeros(4)];
        let q = BitVector::zeros(4);
        let m = SimilarityMeasure::HammingSimilarity;
        assert!(knn(&[], &[], &q, 1, m).is_err());
        assert!(knn(&t, &[0], &q, 0, m).is_err());
        assert!(knn(&t, &[0], &q, 2, m).is_err());
        assert!(knn(&t, &[0, 1], &q, 1, m).is_err());
        assert!(knn(&t, &[0], &BitVector::zeros(5), 1, m).is_err());
    }

    #[test]
    fn byte_vectors() {
        let train = vec![vec![0u8, 0, 0], vec![200, 200, 200], vec![10, 0, 5]];
        let labels = [1, 2, 1];
        let got = knn_bytes(
            &train,
            &labels,
            &[190, 210, 205],
            1,
            SimilarityMeasure::Euclidean,
        );
        assert_eq!(got.unwrap(), 2);
        assert!(knn_bytes(&train, &labels, &[1, 2, 3], 1, SimilarityMeasure::AndCount).is_err());
    }

    #[test]
    fn agreement_fraction() {
        assert_eq!(agreement(&[1, 2, 3, 4], &[1, 2, 0, 4]).unwrap(), 0.75);
        assert!(agreement(&[1], &[]).is_err());
    }
}
