use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bitvec::BitVector;
use crate::error::{Error, Result};
use crate::sketch::{Delta, Scheme, SketchParams};

/// Reserved label value meaning "no label" in containers.
pub const NO_LABEL: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Bits,
    U8Vector,
}

/// Scheme identifier as stored in HAI1 headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    PlainBits = 0,
    PlainU8 = 1,
    BinarySample = 2,
    RealProjection = 3,
}

impl SchemeId {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::PlainBits,
            1 => Self::PlainU8,
            2 => Self::BinarySample,
            3 => Self::RealProjection,
            _ => return None,
        })
    }

    pub fn payload_kind(self) -> PayloadKind {
        match self {
            Self::PlainBits | Self::BinarySample => PayloadKind::Bits,
            Self::PlainU8 | Self::RealProjection => PayloadKind::U8Vector,
        }
    }

    pub fn is_protected(self) -> bool {
        matches!(self, Self::BinarySample | Self::RealProjection)
    }

    pub fn plaintext_for(scheme: Scheme) -> Self {
        match scheme {
            Scheme::BinarySample => Self::PlainBits,
            Scheme::RealProjection => Self::PlainU8,
        }
    }

    pub fn protected_for(scheme: Scheme) -> Self {
        match scheme {
            Scheme::BinarySample => Self::BinarySample,
            Scheme::RealProjection => Self::RealProjection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub scheme: SchemeId,
    /// Plaintext record length in elements (bits or bytes).
    pub n_in: u32,
    /// Sketch length in elements; 0 for plaintext.
    pub n_out: u32,
    /// Compression rate as an exact decimal; "0" for plaintext.
    pub delta: String,
    pub record_len: u32,
    /// Records were reordered within each class by the keyed permutation.
    pub class_permuted: bool,
}

impl DatasetMeta {
    pub fn plaintext(kind: PayloadKind, n_in: u32) -> Self {
        let (scheme, record_len) = match kind {
            PayloadKind::Bits => (SchemeId::PlainBits, n_in.div_ceil(8)),
            PayloadKind::U8Vector => (SchemeId::PlainU8, n_in),
        };
        Self {
            scheme,
            n_in,
            n_out: 0,
            delta: "0".into(),
            record_len,
            class_permuted: false,
        }
    }

    pub fn protected(params: &SketchParams, class_permuted: bool) -> Self {
        Self {
            scheme: SchemeId::protected_for(params.scheme()),
            n_in: params.n_in(),
            n_out: params.n_out(),
            delta: params.delta().as_str().to_string(),
            record_len: params.output_bytes() as u32,
            class_permuted,
        }
    }

    pub fn payload_kind(&self) -> PayloadKind {
        self.scheme.payload_kind()
    }

    /// Number of elements (bits or bytes) in each stored payload.
    pub fn payload_elements(&self) -> u32 {
        if self.scheme.is_protected() {
            self.n_out
        } else {
            self.n_in
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Dataset(m));
        if self.scheme.is_protected() {
            if Delta::parse(&self.delta).is_err() {
                return bad(format!("invalid delta {:?}", self.delta));
            }
            if self.n_out == 0 || self.n_out > self.n_in {
                return bad(format!(
                    "n_out {} invalid for n_in {}",
                    self.n_out, self.n_in
                ));
            }
        } else {
            if self.delta != "0" || self.n_out != 0 {
                return bad("plaintext dataset with sketch parameters".into());
            }
            if self.class_permuted {
                return bad("plaintext dataset marked as permuted".into());
            }
        }
        let elements = self.payload_elements();
        let expected = match self.payload_kind() {
            PayloadKind::Bits => elements.div_ceil(8),
            PayloadKind::U8Vector => elements,
        };
        if self.record_len != expected {
            return bad(format!(
                "record length {} does not match {} elements",
                self.record_len, elements
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub index: u32,
    pub label: Option<u16>,
    pub payload: Vec<u8>,
}

/// Ordered records sharing one payload layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedDataset {
    meta: DatasetMeta,
    records: Vec<Record>,
}

impl IndexedDataset {
    pub fn new(meta: DatasetMeta, records: Vec<Record>) -> Result<Self> {
        meta.validate()?;
        let mut seen = HashSet::with_capacity(records.len());
        let labelled = records.first().is_some_and(|r| r.label.is_some());
        let elements = meta.payload_elements() as usize;
        for r in &records {
            if !seen.insert(r.index) {
                return Err(Error::Dataset(format!(
                    "duplicate record index {}",
                    r.index
                )));
            }
            if r.payload.len() != meta.record_len as usize {
                return Err(Error::Dataset(format!(
                    "record {} has {} payload bytes, expected {}",
                    r.index,
                    r.payload.len(),
                    meta.record_len
                )));
            }
            if r.label.is_some() != labelled {
                return Err(Error::Dataset(
                    "some records are labelled, some are not".into(),
                ));
            }
            if r.label == Some(NO_LABEL) {
                return Err(Error::Dataset(format!("label {NO_LABEL:#x} is reserved")));
            }
            if meta.payload_kind() == PayloadKind::Bits && !elements.is_multiple_of(8) {
                let pad = 0xffu8 >> (elements % 8);
                if r.payload.last().is_some_and(|b| b & pad != 0) {
                    return Err(Error::Dataset(format!(
                        "record {} has non-zero padding bits",
                        r.index
                    )));
                }
            }
        }
        Ok(Self { meta, records })
    }

    /// Plaintext bit dataset from bitvectors; indexes are positions.
    pub fn from_bits(rows: &[BitVector], labels: Option<&[u16]>) -> Result<Self> {
        let n_in = rows.first().map_or(0, |r| r.len()) as u32;
        let meta = DatasetMeta::plaintext(PayloadKind::Bits, n_in);
        Self::new(
            meta,
            Self::make_records(rows.iter().map(|r| r.to_bytes()), labels, rows.len())?,
        )
    }

    /// Plaintext byte-vector dataset; indexes are positions.
    pub fn from_u8_rows(rows: Vec<Vec<u8>>, labels: Option<&[u16]>) -> Result<Self> {
        let n_in = rows.first().map_or(0, |r| r.len()) as u32;
        let meta = DatasetMeta::plaintext(PayloadKind::U8Vector, n_in);
        let n = rows.len();
        Self::new(meta, Self::make_records(rows.into_iter(), labels, n)?)
    }

    fn make_records(
        payloads: impl Iterator<Item = Vec<u8>>,
        labels: Option<&[u16]>,
        n: usize,
    ) -> Result<Vec<Record>> {
        if let Some(l) = labels {
            Error::check_len(n, l.len())?;
        }
        Ok(payloads
            .enumerate()
            .map(|(i, payload)| Record {
                index: i as u32,
                label: labels.map(|l| l[i]),
                payload,
            })
            .collect())
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_parts(self) -> (DatasetMeta, Vec<Record>) {
        (self.meta, self.records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        self.records.first().is_some_and(|r| r.label.is_some())
    }

    pub fn indexes(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.index).collect()
    }

    /// Labels widened to u32, or an error if the dataset is unlabelled.
    pub fn labels(&self) -> Result<Vec<u32>> {
        self.records
            .iter()
            .map(|r| {
                r.label
                    .map(u32::from)
                    .ok_or_else(|| Error::Dataset(format!("record {} has no label", r.index)))
            })
            .collect()
    }

    /// Record count per label.
    pub fn class_counts(&self) -> BTreeMap<Option<u16>, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.label).or_default() += 1;
        }
        m
    }

    /// Payloads decoded as bitvectors (bit payloads only).
    pub fn bitvectors(&self) -> Result<Vec<BitVector>> {
        if self.meta.payload_kind() != PayloadKind::Bits {
            return Err(Error::Dataset("payloads are not bitvectors".into()));
        }
        let len = self.meta.payload_elements() as usize;
        self.records
            .iter()
            .map(|r| BitVector::from_bytes(&r.payload, len))
            .collect()
    }

    /// Raw byte payloads (byte-vector payloads only).
    pub fn byte_rows(&self) -> Result<Vec<Vec<u8>>> {
        if self.meta.payload_kind() != PayloadKind::U8Vector {
            return Err(Error::Dataset("payloads are not byte vectors".into()));
        }
        Ok(self.records.iter().map(|r| r.payload.clone()).collect())
    }

    /// Same dataset with every label removed.
    pub fn without_labels(&self) -> Self {
        Self {
            meta: self.meta.clone(),
            records: self
                .records
                .iter()
                .map(|r| Record {
                    label: None,
                    ..r.clone()
                })
                .collect(),
        }
    }

    /// Sum of payload bytes.
    pub fn payload_bytes(&self) -> u64 {
        self.records.len() as u64 * self.meta.record_len as u64
    }
}
