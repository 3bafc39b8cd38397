//! Sparse vectors over model parameter slots.
//!
//! Gradients, inverse-Hessian-vector products, and parameter updates all live on a
//! small subset of the embedding tables, so they are carried as sorted
//! `(slot, value)` lists rather than dense arrays. A [`ParamSlot`] names a single
//! scalar parameter: which array it sits in, which row, which column. Slots order
//! lexicographically, which makes merges linear-time and keeps every consumer
//! deterministic.

use serde::{Deserialize, Serialize};

/// Which parameter array a slot addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArrayTag {
    /// Entity embedding table (row width: `dim`, or `2*dim` for rotational models).
    Entity,
    /// Relation embedding table (row width: `dim`).
    Relation,
    /// Per-relation auxiliary table (hyperplane normals / relation projectors).
    RelAux,
    /// Per-entity auxiliary table (entity projectors).
    EntAux,
}

/// One scalar parameter: array, row, column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamSlot {
    pub tag: ArrayTag,
    pub row: u32,
    pub col: u32,
}

impl ParamSlot {
    pub fn new(tag: ArrayTag, row: usize, col: usize) -> Self {
        ParamSlot {
            tag,
            row: row as u32,
            col: col as u32,
        }
    }

    /// The row this slot belongs to.
    pub fn row_key(&self) -> RowKey {
        RowKey {
            tag: self.tag,
            row: self.row,
        }
    }
}

impl std::fmt::Display for ParamSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}[{}][{}]", self.tag, self.row, self.col)
    }
}

/// A whole row of one parameter array (all columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub tag: ArrayTag,
    pub row: u32,
}

impl RowKey {
    pub fn new(tag: ArrayTag, row: usize) -> Self {
        RowKey {
            tag,
            row: row as u32,
        }
    }
}

/// Sparse vector over parameter slots, kept sorted by slot.
///
/// Invariants: slots strictly increasing (no duplicates), every value finite.
/// Zero-valued entries are allowed — a slot being present means "this coordinate
/// belongs to the vector's support", which matters when a gradient is identically
/// zero on part of its support.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(ParamSlot, f64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        SparseVec::default()
    }

    /// Build from entries that are already sorted by slot with no duplicates.
    ///
    /// Panics in debug builds if the ordering invariant is violated.
    pub fn from_sorted(entries: Vec<(ParamSlot, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        SparseVec { entries }
    }

    /// Build from arbitrary-order entries; duplicate slots are summed.
    pub fn from_unsorted(mut entries: Vec<(ParamSlot, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(ParamSlot, f64)> = Vec::with_capacity(entries.len());
        for (slot, val) in entries {
            match out.last_mut() {
                Some((last, acc)) if *last == slot => *acc += val,
                _ => out.push((slot, val)),
            }
        }
        SparseVec { entries: out }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ParamSlot, f64)> {
        self.entries.iter()
    }

    pub fn get(&self, slot: ParamSlot) -> Option<f64> {
        self.entries
            .binary_search_by_key(&slot, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// All entries belonging to one row, as a contiguous slice.
    pub fn row_entries(&self, key: RowKey) -> &[(ParamSlot, f64)] {
        let lo = ParamSlot {
            tag: key.tag,
            row: key.row,
            col: 0,
        };
        let hi = ParamSlot {
            tag: key.tag,
            row: key.row,
            col: u32::MAX,
        };
        let start = self.entries.partition_point(|e| e.0 < lo);
        let end = self.entries.partition_point(|e| e.0 <= hi);
        &self.entries[start..end]
    }

    /// Distinct rows present in this vector, in order.
    pub fn rows(&self) -> Vec<RowKey> {
        let mut rows: Vec<RowKey> = Vec::new();
        for (slot, _) in &self.entries {
            let key = slot.row_key();
            if rows.last() != Some(&key) {
                rows.push(key);
            }
        }
        rows
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.entries.len() && j < other.entries.len() {
            match self.entries[i].0.cmp(&other.entries[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.entries[i].1 * other.entries[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm2(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    pub fn scale(&self, c: f64) -> SparseVec {
        SparseVec {
            entries: self.entries.iter().map(|&(s, v)| (s, c * v)).collect(),
        }
    }

    /// `self + c * other`, merging supports.
    pub fn add_scaled(&self, c: f64, other: &SparseVec) -> SparseVec {
        let mut out = Vec::with_capacity(self.entries.len().max(other.entries.len()));
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() || j < other.entries.len() {
            let take_left = match (self.entries.get(i), other.entries.get(j)) {
                (Some(a), Some(b)) => match a.0.cmp(&b.0) {
                    std::cmp::Ordering::Less => Some(true),
                    std::cmp::Ordering::Greater => Some(false),
                    std::cmp::Ordering::Equal => None,
                },
                (Some(_), None) => Some(true),
                (None, Some(_)) => Some(false),
                (None, None) => unreachable!(),
            };
            match take_left {
                Some(true) => {
                    out.push(self.entries[i]);
                    i += 1;
                }
                Some(false) => {
                    out.push((other.entries[j].0, c * other.entries[j].1));
                    j += 1;
                }
                None => {
                    out.push((self.entries[i].0, self.entries[i].1 + c * other.entries[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        SparseVec { entries: out }
    }

    pub fn add(&self, other: &SparseVec) -> SparseVec {
        self.add_scaled(1.0, other)
    }

    pub fn sub(&self, other: &SparseVec) -> SparseVec {
        self.add_scaled(-1.0, other)
    }

    /// Keep only entries whose slot satisfies the predicate.
    pub fn retain(&mut self, mut keep: impl FnMut(ParamSlot) -> bool) {
        self.entries.retain(|&(s, _)| keep(s));
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, v)| v.is_finite())
    }

    /// Re-expresses this vector on an explicit sorted support, filling zeros for
    /// slots the vector does not carry. Entries outside `support` are dropped.
    pub fn densify_onto(&self, support: &[ParamSlot]) -> SparseVec {
        debug_assert!(support.windows(2).all(|w| w[0] < w[1]));
        let entries = support
            .iter()
            .map(|&s| (s, self.get(s).unwrap_or(0.0)))
            .collect();
        SparseVec { entries }
    }
}
