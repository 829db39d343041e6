use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};

/// Similarity scores where larger always means more similar.
///
/// `HammingSimilarity` and `AndCount` apply to bit payloads, `Euclidean` and
/// `Cosine` to both. Euclidean is reported as the negated distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMeasure {
    #[default]
    HammingSimilarity,
    AndCount,
    Euclidean,
    Cosine,
}

impl SimilarityMeasure {
    pub fn name(self) -> &'static str {
        match self {
            Self::HammingSimilarity => "hamming",
            Self::AndCount => "and-count",
            Self::Euclidean => "euclidean",
            Self::Cosine => "cosine",
        }
    }

    pub fn bits(self, a: &BitVector, b: &BitVector) -> Result<f64> {
        Ok(match self {
            Self::HammingSimilarity => (a.len() as u64 - a.hamming(b)?) as f64,
            Self::AndCount => a.and_similarity(b)? as f64,
            Self::Euclidean => -(a.hamming(b)? as f64).sqrt(),
            Self::Cosine => {
                let and = a.and_similarity(b)? as f64;
                let norm = (a.popcount() as f64 * b.popcount() as f64).sqrt();
                if norm == 0.0 {
                    0.0
                } else {
                    and / norm
                }
            }
        })
    }

    /// Dissimilarity paired with [`bits`](Self::bits): lower is closer.
    /// Hamming distance for `HammingSimilarity`, the negated score otherwise
    /// (plus `1 - cos` for cosine so it stays non-negative).
    pub fn bits_cost(self, a: &BitVector, b: &BitVector) -> Result<f64> {
        Ok(match self {
            Self::HammingSimilarity => a.hamming(b)? as f64,
            Self::Cosine => 1.0 - self.bits(a, b)?,
            _ => -self.bits(a, b)?,
        })
    }

    pub fn real(self, a: &[f64], b: &[f64]) -> Result<f64> {
        Error::check_len(a.len(), b.len())?;
        match self {
            Self::Euclidean => Ok(-a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()),
            Self::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>();
                let norm = (na * nb).sqrt();
                Ok(if norm == 0.0 {
                    0.0
                } else {
                    (dot / norm).clamp(-1.0, 1.0)
                })
            }
            _ => Err(Error::IncompatibleMeasure {
                measure: self.name(),
                payload: "real-valued",
            }),
        }
    }

    pub fn bytes(self, a: &[u8], b: &[u8]) -> Result<f64> {
        let fa: Vec<f64> = a.iter().map(|&v| v as f64).collect();
        let fb: Vec<f64> = b.iter().map(|&v| v as f64).collect();
        self.real(&fa, &fb)
    }
}

impl fmt::Display for SimilarityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityMeasure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(Self::HammingSimilarity),
            "and-count" | "and" => Ok(Self::AndCount),
            "euclidean" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            _ => Err(Error::param(format!("unknown similarity measure {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nibble(v: u8) -> BitVector {
        BitVector::from_bytes(&[v << 4], 4).unwrap()
    }

    #[test]
    fn examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = BitVector::random(300, &mut rng);
        assert_eq!(
            SimilarityMeasure::HammingSimilarity.bits(&x, &x).unwrap(),
            300.0
        );
        assert_eq!(
            SimilarityMeasure::AndCount
                .bits(&nibble(0b1100), &nibble(0b1010))
                .unwrap(),
            1.0
        );
        let r = [1.0, -2.0, 0.5];
        let r2: Vec<f64> = r.iter().map(|v| v * 2.0).collect();
        assert!((SimilarityMeasure::Cosine.real(&r, &r2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(SimilarityMeasure::Euclidean.real(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = BitVector::random(200, &mut rng);
        let b = BitVector::random(200, &mut rng);
        for m in [
            SimilarityMeasure::HammingSimilarity,
            SimilarityMeasure::AndCount,
            SimilarityMeasure::Euclidean,
            SimilarityMeasure::Cosine,
        ] {
            assert_eq!(m.bits(&a, &b).unwrap(), m.bits(&b, &a).unwrap());
        }
        let u = [3.0, 4.0];
        let v = [-1.0, 2.0];
        assert_eq!(
            SimilarityMeasure::Euclidean.real(&u, &v).unwrap(),
            SimilarityMeasure::Euclidean.real(&v, &u).unwrap()
        );
        let c = SimilarityMeasure::Cosine.real(&u, &v).unwrap();
        assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn errors() {
        assert!(SimilarityMeasure::HammingSimilarity
            .bits(&BitVector::zeros(3), &BitVector::zeros(4))
            .is_err());
        assert!(matches!(
            SimilarityMeasure::AndCount.real(&[1.0], &[1.0]),
            Err(Error::IncompatibleMeasure { .. })
        ));
        assert!(SimilarityMeasure::Euclidean
            .real(&[1.0], &[1.0, 2.0])
            .is_err());
        assert_eq!(SimilarityMeasure::Cosine.real(&[0.0], &[1.0]).unwrap(), 0.0);
    }
}
