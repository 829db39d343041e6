//! IDX tensors as used by the MNIST family: a big-endian magic word
//! `0x0000_08NN` (unsigned bytes, NN dimensions), NN big-endian u32 sizes,
//! then the raw bytes. Images are 3-d (`count x rows x cols`), labels 1-d.

use std::fs;
use std::path::Path;

use crate::data::dataset::{DatasetMeta, IndexedDataset, PayloadKind, Record};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// An image dataset together with the per-item shape (e.g. `[28, 28]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub dataset: IndexedDataset,
    pub item_dims: Vec<u32>,
}

fn header(buf: &[u8], magic: u32, what: &'static str) -> Result<(Vec<u32>, usize)> {
    let bad = |m: String| Error::malformed("IDX", format!("{what}: {m}"));
    if buf.len() < 4 {
        return Err(bad("truncated magic".into()));
    }
    let got = u32::from_be_bytes(buf[..4].try_into().unwrap());
    if got != magic {
        return Err(bad(format!(
            "bad magic {got:#010x}, expected {magic:#010x}"
        )));
    }
    let ndim = (magic & 0xff) as usize;
    let end = 4 + 4 * ndim;
    if buf.len() < end {
        return Err(bad("truncated dimensions".into()));
    }
    let dims: Vec<u32> = buf[4..end]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
        .collect();
    let body: u64 = dims.iter().map(|&d| d as u64).product();
    if (buf.len() - end) as u64 != body {
        return Err(bad(format!(
            "{} data bytes, dimensions {:?} need {body}",
            buf.len() - end,
            dims
        )));
    }
    Ok((dims, end))
}

/// Parse an image file and, optionally, its label file.
pub fn decode_idx(images: &[u8], labels: Option<&[u8]>) -> Result<IdxImages> {
    let (dims, start) = header(images, IMAGES_MAGIC, "images")?;
    let count = dims[0] as usize;
    let item_dims = dims[1..].to_vec();
    let item: usize = item_dims.iter().map(|&d| d as usize).product();
    if item == 0 {
        return Err(Error::malformed("IDX", "images: empty items"));
    }
    let label_bytes = match labels {
        Some(l) => {
            let (ldims, lstart) = header(l, LABELS_MAGIC, "labels")?;
            if ldims[0] as usize != count {
                return Err(Error::malformed(
                    "IDX",
                    format!("{count} images but {} labels", ldims[0]),
                ));
            }
            Some(&l[lstart..])
        }
        None => None,
    };
    let records = images[start..]
        .chunks_exact(item)
        .enumerate()
        .map(|(i, px)| Record {
            index: i as u32,
            label: label_bytes.map(|l| l[i] as u16),
            payload: px.to_vec(),
        })
        .collect();
    let meta = DatasetMeta::plaintext(PayloadKind::U8Vector, item as u32);
    Ok(IdxImages {
        dataset: IndexedDataset::new(meta, records)?,
        item_dims,
    })
}

pub fn read_idx(images: &Path, labels: Option<&Path>) -> Result<IdxImages> {
    let img = fs::read(images)?;
    let lab = labels.map(fs::read).transpose()?;
    decode_idx(&img, lab.as_deref())
}

/// Encode image and label files. Labels are written only when every record
/// has one; each label must fit a byte.
pub fn encode_idx(ds: &IndexedDataset, item_dims: &[u32]) -> Result<(Vec<u8>, Option<Vec<u8>>)> {
    if ds.meta().payload_kind() != PayloadKind::U8Vector || ds.meta().scheme.is_protected() {
        return Err(Error::Dataset(
            "IDX export needs plaintext byte vectors".into(),
        ));
    }
    let item: u64 = item_dims.iter().map(|&d| d as u64).product();
    if item != ds.meta().record_len as u64 || item_dims.len() != 2 {
        return Err(Error::param(format!(
            "item shape {item_dims:?} does not match {} bytes per record",
            ds.meta().record_len
        )));
    }
    let mut img = Vec::with_capacity(16 + ds.payload_bytes() as usize);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for d in item_dims {
        img.extend_from_slice(&d.to_be_bytes());
    }
    for r in ds.records() {
        img.extend_from_slice(&r.payload);
    }
    let labels = if ds.has_labels() {
        let mut lab = Vec::with_capacity(8 + ds.len());
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
        for r in ds.records() {
            let l = r.label.expect("labelled dataset");
            lab.push(u8::try_from(l).map_err(|_| Error::param(format!("label {l} exceeds 255")))?);
        }
        Some(lab)
    } else {
        None
    };
    Ok((img, labels))
}

pub fn write_idx(
    ds: &IndexedDataset,
    item_dims: &[u32],
    images: &Path,
    labels: Option<&Path>,
) -> Result<()> {
    let (img, lab) = encode_idx(ds, item_dims)?;
    fs::write(images, img)?;
    if let (Some(path), Some(lab)) = (labels, lab) {
        fs::write(path, lab)?;
    }
    Ok(())
}
