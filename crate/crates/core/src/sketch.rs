//! Keyed sketch constructions.
//!
//! Two schemes are provided:
//!
//! * [`Scheme::BinarySample`] for bit records: keep `n_out` key-selected
//!   positions, reorder them with a second keyed shuffle, XOR a keyed mask.
//!   The mask is shared by all records, so the Hamming distance between two
//!   sketches equals the Hamming distance of the sampled plaintext bits.
//! * [`Scheme::RealProjection`] for byte vectors: a keyed Gaussian projection,
//!   orthogonalised and scaled so entries have variance 1/n_out, of the centred input, a keyed offset, then uniform
//!   quantisation with a scale fixed by `n_in`, `n_out` and the 0..=255 input
//!   range only.
//!
//! Every derived quantity is a pure function of `(key, params)`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::key::{keyed_rng, tag, SecretKey};

const MAX_DELTA_DECIMALS: usize = 6;
/// Quantiser range in units of the worst-case projection standard deviation.
const QUANT_CLIP_SIGMAS: f64 = 4.0;
/// Offsets are drawn from ±(this × worst-case standard deviation).
const OFFSET_SIGMAS: f64 = 0.5;

/// Compression rate, kept as an exact decimal so derived lengths do not
/// depend on float rounding. Value = `numer / 10^scale`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Delta {
    text: String,
    numer: u64,
    scale: u32,
}

impl Delta {
    pub const MIN: (u64, u64) = (3, 2);
    pub const MAX: u64 = 16;

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("invalid compression rate {s:?}"));
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty()
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || (s.contains('.') && frac.is_empty())
        {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        if frac.len() > MAX_DELTA_DECIMALS {
            return Err(Error::param(format!(
                "compression rate {s:?} has more than {MAX_DELTA_DECIMALS} decimals"
            )));
        }
        let int = int.trim_start_matches('0');
        let digits = format!("{int}{frac}");
        let numer: u64 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| bad())?
        };
        let scale = frac.len() as u32;
        let pow = 10u64.pow(scale);
        // 1.5 <= numer / pow <= 16
        if numer * Self::MIN.1 < Self::MIN.0 * pow || numer > Self::MAX * pow {
            return Err(Error::param(format!(
                "compression rate {s} outside [1.5, 16]"
            )));
        }
        let int_text = if int.is_empty() { "0" } else { int };
        let text = if frac.is_empty() {
            int_text.to_string()
        } else {
            format!("{int_text}.{frac}")
        };
        Ok(Self { text, numer, scale })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn as_f64(&self) -> f64 {
        self.numer as f64 / 10f64.powi(self.scale as i32)
    }

    /// `floor(n / delta)`, computed exactly.
    pub fn divide_floor(&self, n: u32) -> u32 {
        let pow = 10u128.pow(self.scale);
        (n as u128 * pow / self.numer as u128) as u32
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Delta({})", self.text)
    }
}

impl FromStr for Delta {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl PartialOrd for Delta {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Delta {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = self.numer as u128 * 10u128.pow(other.scale);
        let b = other.numer as u128 * 10u128.pow(self.scale);
        a.cmp(&b)
    }
}

impl Serialize for Delta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Delta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Delta::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    BinarySample,
    RealProjection,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "binary-sample" | "binary_sample" => Ok(Scheme::BinarySample),
            "real" | "real-projection" | "real_projection" => Ok(Scheme::RealProjection),
            _ => Err(Error::param(format!("unknown scheme {s:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::BinarySample => "binary",
            Scheme::RealProjection => "real",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchParams {
    scheme: Scheme,
    delta: Delta,
    n_in: u32,
    n_out: u32,
    quant_bits: u8,
}

impl SketchParams {
    pub const MIN_OUT: u32 = 8;

    /// Parameters with the default output length `floor(n_in / delta)`.
    pub fn new(scheme: Scheme, delta: Delta, n_in: u32) -> Result<Self> {
        let n_out = delta.divide_floor(n_in);
        Self::with_n_out(scheme, delta, n_in, n_out)
    }

    /// Parameters with an explicit output length.
    pub fn with_n_out(scheme: Scheme, delta: Delta, n_in: u32, n_out: u32) -> Result<Self> {
        if n_out < Self::MIN_OUT {
            return Err(Error::param(format!(
                "output length {n_out} below minimum {}",
                Self::MIN_OUT
            )));
        }
        if n_out > n_in {
            return Err(Error::param(format!(
                "output length {n_out} exceeds input length {n_in}"
            )));
        }
        if scheme == Scheme::RealProjection && n_in > 8_000_000 {
            return Err(Error::param("projection input length above 8,000,000"));
        }
        Ok(Self {
            scheme,
            delta,
            n_in,
            n_out,
            quant_bits: 8,
        })
    }

    /// Output element width for [`Scheme::RealProjection`]; each element
    /// occupies one byte, so 1..=8.
    pub fn quant_bits(mut self, bits: u8) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::param(format!("quant_bits {bits} outside 1..=8")));
        }
        self.quant_bits = bits;
        Ok(self)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
    pub fn delta(&self) -> &Delta {
        &self.delta
    }
    pub fn n_in(&self) -> u32 {
        self.n_in
    }
    pub fn n_out(&self) -> u32 {
        self.n_out
    }
    pub fn quant_bits_value(&self) -> u8 {
        self.quant_bits
    }

    /// Bytes per plaintext record.
    pub fn input_bytes(&self) -> usize {
        match self.scheme {
            Scheme::BinarySample => (self.n_in as usize).div_ceil(8),
            Scheme::RealProjection => self.n_in as usize,
        }
    }

    /// Bytes per sketch.
    pub fn output_bytes(&self) -> usize {
        match self.scheme {
            Scheme::BinarySample => (self.n_out as usize).div_ceil(8),
            Scheme::RealProjection => self.n_out as usize,
        }
    }
}

/// `n_out` distinct positions of `[0, n_in)`, keyed uniform sample without
/// replacement, in the order a partial Fisher–Yates shuffle emits them.
pub fn derive_positions(key: &SecretKey, n_in: u32, n_out: u32) -> Result<Vec<u32>> {
    if n_out > n_in {
        return Err(Error::param(format!(
            "cannot sample {n_out} positions from {n_in}"
        )));
    }
    let mut rng = keyed_rng(key, &tag("pos", &[n_in, n_out]))?;
    let mut pool: Vec<u32> = (0..n_in).collect();
    let (head, _) = pool.partial_shuffle(&mut rng, n_out as usize);
    Ok(head.to_vec())
}

/// Bijection on `[0, len)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexPermutation {
    class_id: u32,
    mapping: Vec<u32>,
}

impl IndexPermutation {
    pub fn identity(class_id: u32, count: usize) -> Self {
        Self {
            class_id,
            mapping: (0..count as u32).collect(),
        }
    }

    pub fn from_mapping(class_id: u32, mapping: Vec<u32>) -> Result<Self> {
        let p = Self { class_id, mapping };
        if !p.is_bijection() {
            return Err(Error::param("mapping is not a bijection"));
        }
        Ok(p)
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[u32] {
        &self.mapping
    }

    /// Member `i` of the class becomes member `apply(i)`.
    pub fn apply(&self, i: usize) -> usize {
        self.mapping[i] as usize
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u32; self.mapping.len()];
        for (i, &j) in self.mapping.iter().enumerate() {
            inv[j as usize] = i as u32;
        }
        Self {
            class_id: self.class_id,
            mapping: inv,
        }
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.mapping.len()];
        for &j in &self.mapping {
            match seen.get_mut(j as usize) {
                Some(s) if !*s => *s = true,
                _ => return false,
            }
        }
        true
    }
}

/// Keyed full shuffle of `[0, count)` for one class.
pub fn derive_permutation(
    key: &SecretKey,
    class_id: u32,
    count: usize,
) -> Result<IndexPermutation> {
    if count == 0 {
        return Err(Error::param("permutation of an empty class"));
    }
    let count32 = u32::try_from(count).map_err(|_| Error::param("class too large"))?;
    let mut rng = keyed_rng(key, &tag("perm", &[class_id, count32]))?;
    let mut mapping: Vec<u32> = (0..count32).collect();
    mapping.shuffle(&mut rng);
    Ok(IndexPermutation { class_id, mapping })
}

#[derive(Clone)]
enum Construction {
    Binary {
        /// `positions` composed with the output order: sketch bit `j` reads input bit `gather[j]`.
        gather: Vec<u32>,
        /// Selected positions in selection order, before output reordering.
        positions: Vec<u32>,
        mask: BitVector,
    },
    Real {
        /// Row-major `n_out x n_in`; rows orthogonal within each block,
        /// each of squared norm `n_in / n_out`.
        matrix: Vec<f64>,
        offset: Vec<f64>,
        clip: f64,
        step: f64,
        levels: u32,
    },
}

/// Rows orthogonalised together; later rows start a fresh block.
const ORTHO_BLOCK_ROWS: usize = 512;

/// Four-lane dot product; fixed summation order, so results are reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Modified Gram-Schmidt, two passes, over consecutive blocks of at most
/// `min(cols, ORTHO_BLOCK_ROWS)` rows; every row is then scaled to `norm`.
fn orthogonalise(m: &mut [f64], cols: usize, norm: f64) -> Result<()> {
    let block_rows = cols.min(ORTHO_BLOCK_ROWS);
    m.par_chunks_mut(cols * block_rows).try_for_each(|block| {
        let rows = block.len() / cols;
        for i in 0..rows {
            let (done, rest) = block.split_at_mut(i * cols);
            let row = &mut rest[..cols];
            for _ in 0..2 {
                for prev in done.chunks_exact(cols) {
                    let d = dot(prev, row);
                    row.iter_mut().zip(prev).for_each(|(r, p)| *r -= d * p);
                }
            }
            let len = dot(row, row).sqrt();
            if len < 1e-9 {
                return Err(Error::param("degenerate projection row"));
            }
            row.iter_mut().for_each(|v| *v /= len);
        }
        block.iter_mut().for_each(|v| *v *= norm);
        Ok(())
    })
}

/// A keyed sketch function for one parameter set.
///
/// The key itself is not retained: construction derives every table needed
/// and drops the key.
#[derive(Clone)]
pub struct Sketcher {
    params: SketchParams,
    construction: Construction,
}

impl fmt::Debug for Sketcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sketcher")
            .field("params", &self.params)
            .finish()
    }
}

impl Sketcher {
    pub fn new(key: &SecretKey, params: SketchParams) -> Result<Self> {
        let (n_in, n_out) = (params.n_in, params.n_out);
        let construction = match params.scheme {
            Scheme::BinarySample => {
                let positions = derive_positions(key, n_in, n_out)?;
                let mut order: Vec<u32> = (0..n_out).collect();
                order.shuffle(&mut keyed_rng(key, &tag("order", &[n_in, n_out]))?);
                let gather = order.iter().map(|&o| positions[o as usize]).collect();
                let mut mask_bytes = vec![0u8; (n_out as usize).div_ceil(8)];
                keyed_rng(key, &tag("mask", &[n_in, n_out]))?.fill_bytes(&mut mask_bytes);
                if n_out % 8 != 0 {
                    let last = mask_bytes.len() - 1;
                    mask_bytes[last] &= 0xffu8 << (8 - n_out % 8);
                }
                let mask = BitVector::from_bytes(&mask_bytes, n_out as usize)?;
                Construction::Binary {
                    gather,
                    positions,
                    mask,
                }
            }
            Scheme::RealProjection => {
                let (rows, cols) = (n_out as usize, n_in as usize);
                let mut rng = keyed_rng(key, &tag("proj", &[n_in, n_out]))?;
                let mut matrix: Vec<f64> = (0..rows * cols)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                orthogonalise(&mut matrix, cols, (n_in as f64 / n_out as f64).sqrt())?;
                // Worst-case standard deviation of one projected coordinate:
                // every centred input at ±127.5.
                let sigma = 127.5 * (n_in as f64 / n_out as f64).sqrt();
                let mut rng = keyed_rng(key, &tag("offset", &[n_in, n_out]))?;
                let offset = (0..rows)
                    .map(|_| rng.random_range(-OFFSET_SIGMAS..OFFSET_SIGMAS) * sigma)
                    .collect();
                let levels = 1u32 << params.quant_bits;
                let clip = QUANT_CLIP_SIGMAS * sigma;
                Construction::Real {
                    matrix,
                    offset,
                    clip,
                    step: 2.0 * clip / levels as f64,
                    levels,
                }
            }
        };
        Ok(Self {
            params,
            construction,
        })
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    /// Selected input positions in selection order (BinarySample only).
    pub fn positions(&self) -> Option<&[u32]> {
        match &self.construction {
            Construction::Binary { positions, .. } => Some(positions),
            Construction::Real { .. } => None,
        }
    }

    /// Input positions read by each output bit, in output order (BinarySample only).
    pub fn gather(&self) -> Option<&[u32]> {
        match &self.construction {
            Construction::Binary { gather, .. } => Some(gather),
            Construction::Real { .. } => None,
        }
    }

    pub fn mask(&self) -> Option<&BitVector> {
        match &self.construction {
            Construction::Binary { mask, .. } => Some(mask),
            Construction::Real { .. } => None,
        }
    }

    fn wrong_scheme(&self, want: Scheme) -> Error {
        Error::param(format!(
            "sketcher is {}, operation needs {}",
            self.params.scheme, want
        ))
    }

    pub fn sketch_binary(&self, x: &BitVector) -> Result<BitVector> {
        let Construction::Binary { gather, mask, .. } = &self.construction else {
            return Err(self.wrong_scheme(Scheme::BinarySample));
        };
        Error::check_len(self.params.n_in as usize, x.len())?;
        let mut out = BitVector::from_bools(gather.iter().map(|&p| x.get(p as usize)));
        out.xor_assign(mask)?;
        Ok(out)
    }

    /// BinarySample on an input of at most 64 bits packed into the low
    /// `n_in` bits of `x` (bit 0 of the vector is the most significant of
    /// those). Output packed the same way.
    pub(crate) fn sketch_small(&self, x: u64) -> Result<u64> {
        let Construction::Binary { gather, mask, .. } = &self.construction else {
            return Err(self.wrong_scheme(Scheme::BinarySample));
        };
        let (n_in, n_out) = (self.params.n_in as usize, self.params.n_out as usize);
        if n_in > 64 {
            return Err(Error::param("small-path sketch needs n_in <= 64"));
        }
        let mut y = 0u64;
        for &p in gather {
            y = (y << 1) | (x >> (n_in - 1 - p as usize) & 1);
        }
        Ok(y ^ (mask.words()[0] >> (64 - n_out)))
    }

    /// Projected vector before quantisation: `R (x - 127.5) + b`.
    pub fn project(&self, x: &[u8]) -> Result<Vec<f64>> {
        self.project_inner(x, true)
    }

    /// Projected vector without the keyed offset: `R (x - 127.5)`.
    pub fn project_unshifted(&self, x: &[u8]) -> Result<Vec<f64>> {
        self.project_inner(x, false)
    }

    fn project_inner(&self, x: &[u8], with_offset: bool) -> Result<Vec<f64>> {
        let Construction::Real { matrix, offset, .. } = &self.construction else {
            return Err(self.wrong_scheme(Scheme::RealProjection));
        };
        let n_in = self.params.n_in as usize;
        Error::check_len(n_in, x.len())?;
        let centred: Vec<f64> = x.iter().map(|&v| v as f64 - 127.5).collect();
        Ok(matrix
            .chunks_exact(n_in)
            .zip(offset)
            .map(|(row, b)| {
                let p = dot(row, &centred);
                if with_offset {
                    p + b
                } else {
                    p
                }
            })
            .collect())
    }

    /// Quantised sketch; each element is in `[0, 2^quant_bits)`.
    pub fn sketch_real(&self, x: &[u8]) -> Result<Vec<u8>> {
        let projected = self.project(x)?;
        let Construction::Real {
            clip, step, levels, ..
        } = &self.construction
        else {
            unreachable!("project succeeded");
        };
        Ok(projected
            .into_iter()
            .map(|p| {
                let q = ((p + clip) / step).floor();
                q.clamp(0.0, (*levels - 1) as f64) as u8
            })
            .collect())
    }

    /// Sketch one serialized payload: packed bits for BinarySample, raw bytes
    /// for RealProjection.
    pub fn sketch_payload(&self, payload: &[u8]) -> Result<Vec<u8>> {
        match self.params.scheme {
            Scheme::BinarySample => {
                let x = BitVector::from_bytes(payload, self.params.n_in as usize)?;
                Ok(self.sketch_binary(&x)?.to_bytes())
            }
            Scheme::RealProjection => self.sketch_real(payload),
        }
    }
}
