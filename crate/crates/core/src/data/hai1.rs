//! HAI1 dataset container.
//!
//! All integers big-endian:
//!
//! ```text
//! "HAI1" | version u16 = 1 | scheme u8 | flags u8
//! | delta_len u16 | delta ASCII[delta_len]
//! | n_in u32 | n_out u32 | record_len u32 | count u32
//! | count x ( index u32 | label u16 | payload[record_len] )
//! ```
//!
//! Scheme: 0 plaintext bits, 1 plaintext bytes, 2 binary sample, 3 real
//! projection. Flags: bit 0 labels present, bit 1 records permuted within
//! classes. Absent labels are stored as 0xFFFF.

use std::fs;
use std::path::Path;

use crate::data::dataset::{DatasetMeta, IndexedDataset, Record, SchemeId, NO_LABEL};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HAI1";
pub const VERSION: u16 = 1;
pub const FLAG_LABELS: u8 = 0x01;
pub const FLAG_PERMUTED: u8 = 0x02;
const KNOWN_FLAGS: u8 = FLAG_LABELS | FLAG_PERMUTED;
const RECORD_HEADER: usize = 6;

/// Serialized size without building the buffer.
pub fn encoded_len(ds: &IndexedDataset) -> u64 {
    let meta = ds.meta();
    let header = 4 + 2 + 1 + 1 + 2 + meta.delta.len() + 16;
    header as u64 + ds.len() as u64 * (RECORD_HEADER as u64 + meta.record_len as u64)
}

pub fn encode_hai1(ds: &IndexedDataset, strip_labels: bool) -> Vec<u8> {
    let meta = ds.meta();
    let labelled = ds.has_labels() && !strip_labels;
    let mut out = Vec::with_capacity(encoded_len(ds) as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    out.push(meta.scheme as u8);
    let mut flags = 0;
    if labelled {
        flags |= FLAG_LABELS;
    }
    if meta.class_permuted {
        flags |= FLAG_PERMUTED;
    }
    out.push(flags);
    out.extend_from_slice(&(meta.delta.len() as u16).to_be_bytes());
    out.extend_from_slice(meta.delta.as_bytes());
    for v in [meta.n_in, meta.n_out, meta.record_len, ds.len() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for r in ds.records() {
        out.extend_from_slice(&r.index.to_be_bytes());
        let label = if labelled {
            r.label.unwrap_or(NO_LABEL)
        } else {
            NO_LABEL
        };
        out.extend_from_slice(&label.to_be_bytes());
        out.extend_from_slice(&r.payload);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| {
                Error::malformed(
                    "HAI1",
                    format!("truncated while reading {what} at offset {}", self.pos),
                )
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_hai1(buf: &[u8]) -> Result<IndexedDataset> {
    let bad = |m: String| Error::malformed("HAI1", m);
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let scheme_byte = r.u8("scheme")?;
    let scheme = SchemeId::from_u8(scheme_byte)
        .ok_or_else(|| bad(format!("unknown scheme {scheme_byte}")))?;
    let flags = r.u8("flags")?;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(bad(format!("unknown flags {flags:#04x}")));
    }
    let delta_len = r.u16("delta length")? as usize;
    let delta = std::str::from_utf8(r.take(delta_len, "delta")?)
        .ok()
        .filter(|s| s.is_ascii())
        .ok_or_else(|| bad("delta is not ASCII".into()))?
        .to_string();
    let n_in = r.u32("n_in")?;
    let n_out = r.u32("n_out")?;
    let record_len = r.u32("record length")?;
    let count = r.u32("count")? as usize;

    let remaining = buf.len() - r.pos;
    let per_record = RECORD_HEADER + record_len as usize;
    if per_record.checked_mul(count) != Some(remaining) {
        return Err(bad(format!(
            "{remaining} bytes of records do not match {count} x {per_record}"
        )));
    }

    let meta = DatasetMeta {
        scheme,
        n_in,
        n_out,
        delta,
        record_len,
        class_permuted: flags & FLAG_PERMUTED != 0,
    };
    meta.validate().map_err(|e| bad(e.to_string()))?;

    let labelled = flags & FLAG_LABELS != 0;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let index = r.u32("record index")?;
        let label = r.u16("label")?;
        let payload = r.take(record_len as usize, "payload")?.to_vec();
        let label = match (labelled, label) {
            (true, NO_LABEL) => {
                return Err(bad(format!("record {index} lacks a label")));
            }
            (true, l) => Some(l),
            (false, NO_LABEL) => None,
            (false, _) => {
                return Err(bad(format!("record {index} has a label but flag is unset")));
            }
        };
        records.push(Record {
            index,
            label,
            payload,
        });
    }
    IndexedDataset::new(meta, records).map_err(|e| bad(e.to_string()))
}

pub fn write_hai1(ds: &IndexedDataset, path: &Path, strip_labels: bool) -> Result<()> {
    fs::write(path, encode_hai1(ds, strip_labels))?;
    Ok(())
}

pub fn read_hai1(path: &Path) -> Result<IndexedDataset> {
    decode_hai1(&fs::read(path)?)
}
