use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::IndexPermutation;

/// Cluster assignment over record indexes. Cluster ids lie in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct Partition {
    k: u32,
    assignment: BTreeMap<u32, u32>,
}

/// On-disk form: `{"k": 2, "assignment": [[index, cluster], ...]}`.
#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    k: u32,
    assignment: Vec<(u32, u32)>,
}

impl TryFrom<PartitionRepr> for Partition {
    type Error = Error;
    fn try_from(r: PartitionRepr) -> Result<Self> {
        let n = r.assignment.len();
        let map: BTreeMap<u32, u32> = r.assignment.into_iter().collect();
        if map.len() != n {
            return Err(Error::Dataset("duplicate record index in partition".into()));
        }
        Partition::new(map, r.k)
    }
}

impl From<Partition> for PartitionRepr {
    fn from(p: Partition) -> Self {
        PartitionRepr {
            k: p.k,
            assignment: p.assignment.into_iter().collect(),
        }
    }
}

impl Partition {
    pub fn new(assignment: BTreeMap<u32, u32>, k: u32) -> Result<Self> {
        if let Some((idx, c)) = assignment.iter().find(|(_, c)| **c >= k) {
            return Err(Error::param(format!(
                "record {idx} assigned to cluster {c}, but k = {k}"
            )));
        }
        Ok(Self { k, assignment })
    }

    /// Partition over indexes `0..labels.len()`; `k` = largest label + 1.
    pub fn from_positions(labels: &[u32]) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self {
            k,
            assignment: labels
                .iter()
                .enumerate()
                .map(|(i, &c)| (i as u32, c))
                .collect(),
        }
    }

    /// Partition assigning `indexes[i]` to `labels[i]`.
    pub fn from_indexed(indexes: &[u32], labels: &[u32]) -> Result<Self> {
        Error::check_len(indexes.len(), labels.len())?;
        let map: BTreeMap<u32, u32> = indexes
            .iter()
            .copied()
            .zip(labels.iter().copied())
            .collect();
        if map.len() != indexes.len() {
            return Err(Error::Dataset("duplicate record index".into()));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(map, k)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn cluster_of(&self, index: u32) -> Option<u32> {
        self.assignment.get(&index).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.assignment.iter().map(|(i, c)| (*i, *c))
    }

    /// Same partition with cluster ids renumbered by first appearance in
    /// index order, so two partitions with the same structure compare equal.
    pub fn canonical(&self) -> Self {
        let mut relabel = HashMap::new();
        let assignment = self
            .assignment
            .iter()
            .map(|(&i, &c)| {
                let next = relabel.len() as u32;
                (i, *relabel.entry(c).or_insert(next))
            })
            .collect();
        Self {
            k: relabel.len() as u32,
            assignment,
        }
    }
}

fn pairs(n: u64) -> u128 {
    n as u128 * n.saturating_sub(1) as u128 / 2
}

/// Rand index: fraction of record pairs on which two partitions agree
/// (co-clustered in both, or separated in both).
///
/// Computed from the contingency table in O(n); a single record counts as
/// perfect agreement.
pub fn rand_index(p: &Partition, q: &Partition) -> Result<f64> {
    if p.len() != q.len() || !p.assignment.keys().eq(q.assignment.keys()) {
        return Err(Error::RecordSetMismatch);
    }
    let n = p.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for ((_, a), (_, b)) in p.assignment.iter().zip(&q.assignment) {
        *joint.entry((*a, *b)).or_default() += 1;
        *rows.entry(*a).or_default() += 1;
        *cols.entry(*b).or_default() += 1;
    }
    let both: u128 = joint.values().map(|&c| pairs(c)).sum();
    let in_p: u128 = rows.values().map(|&c| pairs(c)).sum();
    let in_q: u128 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    // agreements = total - (in_p - both) - (in_q - both)
    let agree = total + 2 * both - in_p - in_q;
    Ok(agree as f64 / total as f64)
}

/// One class's permutation: the class member at plaintext index `plain[i]`
/// becomes the protected record at `protected[perm(i)]`.
///
/// `protected` lists the slots the class occupies in the protected dataset;
/// with positional indexes on both sides the two lists are equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPermutation {
    pub plain: Vec<u32>,
    pub protected: Vec<u32>,
    pub perm: IndexPermutation,
}

/// The owner's map between plaintext and protected record indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSet {
    classes: Vec<ClassPermutation>,
    to_plain: HashMap<u32, u32>,
    to_protected: HashMap<u32, u32>,
}

impl PermutationSet {
    pub fn new(classes: Vec<ClassPermutation>) -> Result<Self> {
        let mut to_plain = HashMap::new();
        let mut to_protected = HashMap::new();
        for c in &classes {
            Error::check_len(c.plain.len(), c.perm.len())?;
            Error::check_len(c.protected.len(), c.perm.len())?;
            for (i, &plain) in c.plain.iter().enumerate() {
                let protected = c.protected[c.perm.apply(i)];
                if to_protected.insert(plain, protected).is_some() {
                    return Err(Error::Dataset(format!(
                        "plaintext index {plain} appears twice"
                    )));
                }
                if to_plain.insert(protected, plain).is_some() {
                    return Err(Error::Dataset(format!(
                        "protected index {protected} appears twice"
                    )));
                }
            }
        }
        Ok(Self {
            classes,
            to_plain,
            to_protected,
        })
    }

    /// Every index maps to itself.
    pub fn identity(indexes: &[u32]) -> Self {
        let c = ClassPermutation {
            plain: indexes.to_vec(),
            protected: indexes.to_vec(),
            perm: IndexPermutation::identity(0, indexes.len()),
        };
        Self::new(vec![c]).expect("identity over distinct indexes")
    }

    pub fn classes(&self) -> &[ClassPermutation] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.to_plain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_plain.is_empty()
    }

    pub fn plain_index(&self, protected: u32) -> Option<u32> {
        self.to_plain.get(&protected).copied()
    }

    pub fn protected_index(&self, plain: u32) -> Option<u32> {
        self.to_protected.get(&plain).copied()
    }

    /// The reverse mapping, as a permutation set of its own.
    pub fn inverse(&self) -> Self {
        let classes = self
            .classes
            .iter()
            .map(|c| ClassPermutation {
                plain: c.protected.clone(),
                protected: c.plain.clone(),
                perm: c.perm.inverse(),
            })
            .collect();
        Self {
            classes,
            to_plain: self.to_protected.clone(),
            to_protected: self.to_plain.clone(),
        }
    }
}

/// Relabel a partition computed on protected records onto plaintext record
/// indexes. Cluster structure is unchanged.
pub fn transpose_partition(p: &Partition, maps: &PermutationSet) -> Result<Partition> {
    let assignment = p
        .iter()
        .map(|(idx, c)| {
            maps.plain_index(idx)
                .map(|plain| (plain, c))
                .ok_or(Error::UncoveredIndex(idx))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Partition::new(assignment, p.k())
}
