use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::dataset::{DatasetMeta, IndexedDataset, Record, SchemeId};
use crate::error::{Error, Result};
use crate::key::SecretKey;
use crate::ml::partition::{ClassPermutation, PermutationSet};
use crate::sketch::{derive_permutation, Sketcher};

/// A protected dataset and the owner's map back to plaintext indexes.
#[derive(Debug, Clone)]
pub struct Protected {
    pub dataset: IndexedDataset,
    pub permutations: PermutationSet,
}

/// Positions of each class's records, in dataset order.
fn class_positions(ds: &IndexedDataset) -> Result<BTreeMap<u16, Vec<usize>>> {
    let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (pos, r) in ds.records().iter().enumerate() {
        let label = r.label.ok_or_else(|| {
            Error::Dataset("class permutation needs every record to be labelled".into())
        })?;
        by_class.entry(label).or_default().push(pos);
    }
    Ok(by_class)
}

/// Per-class keyed permutations for a plaintext dataset. Protected indexes
/// are output positions: within each class, the record at the class's
/// `i`-th position moves to its `perm(i)`-th position.
pub fn derive_permutation_set(key: &SecretKey, ds: &IndexedDataset) -> Result<PermutationSet> {
    let classes = class_positions(ds)?
        .into_iter()
        .map(|(label, positions)| {
            let perm = derive_permutation(key, label as u32, positions.len())?;
            Ok(ClassPermutation {
                plain: positions.iter().map(|&p| ds.records()[p].index).collect(),
                protected: positions.iter().map(|&p| p as u32).collect(),
                perm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PermutationSet::new(classes)
}

/// Sketch every record. With `permute_classes`, records are also reordered
/// within each class and re-indexed by position; otherwise order and
/// indexes are kept.
pub fn protect_dataset(
    ds: &IndexedDataset,
    sketcher: &Sketcher,
    permute_classes: bool,
    key: &SecretKey,
) -> Result<Protected> {
    let params = sketcher.params();
    let meta = ds.meta();
    if meta.scheme != SchemeId::plaintext_for(params.scheme()) {
        return Err(Error::Dataset(format!(
            "{:?} payloads cannot be protected with the {} scheme",
            meta.scheme,
            params.scheme()
        )));
    }
    Error::check_len(params.n_in() as usize, meta.n_in as usize)?;

    let sketches: Vec<Vec<u8>> = ds
        .records()
        .par_iter()
        .map(|r| sketcher.sketch_payload(&r.payload))
        .collect::<Result<_>>()?;

    let (records, permutations) = if permute_classes {
        let perms = derive_permutation_set(key, ds)?;
        let mut slots: Vec<Option<Record>> = vec![None; ds.len()];
        for c in perms.classes() {
            for (i, &pos) in c.protected.iter().enumerate() {
                // `protected` holds the class's positions, so member i sits at
                // `pos` in the plaintext and moves to protected[perm(i)].
                let target = c.protected[c.perm.apply(i)] as usize;
                let src = &ds.records()[pos as usize];
                slots[target] = Some(Record {
                    index: target as u32,
                    label: src.label,
                    payload: sketches[pos as usize].clone(),
                });
            }
        }
        let records = slots
            .into_iter()
            .map(|r| r.expect("class permutations cover every position"))
            .collect();
        (records, perms)
    } else {
        let records = ds
            .records()
            .iter()
            .zip(sketches)
            .map(|(r, payload)| Record {
                index: r.index,
                label: r.label,
                payload,
            })
            .collect();
        (records, PermutationSet::identity(&ds.indexes()))
    };

    let dataset = IndexedDataset::new(DatasetMeta::protected(params, permute_classes), records)?;
    Ok(Protected {
        dataset,
        permutations,
    })
}
