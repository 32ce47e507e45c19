//! Finite sets of coordinate labels.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MdmError, Result};

/// A finite set of positive coordinate labels, stored strictly increasing.
///
/// Ordering is the canonical one used for partial sums over subsets: first by
/// the largest label (the empty set first), then by cardinality, then
/// lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Subset {
    indices: Vec<usize>,
}

impl Subset {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a subset from strictly increasing labels `>= 1`.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.contains(&0) {
            return Err(MdmError::InvalidSubset(format!(
                "labels must be >= 1, got {indices:?}"
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MdmError::InvalidSubset(format!(
                "labels must be strictly increasing, got {indices:?}"
            )));
        }
        Ok(Self { indices })
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices)
    }

    /// `{1, ..., d}`
    pub fn first(d: usize) -> Self {
        Self {
            indices: (1..=d).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Largest label, 0 for the empty set.
    pub fn max_label(&self) -> usize {
        self.indices.last().copied().unwrap_or(0)
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Sub-subset selected by a bit mask over positions.
    pub fn select(&self, mask: u64) -> Subset {
        Subset {
            indices: self
                .indices
                .iter()
                .enumerate()
                .filter(|(p, _)| mask >> p & 1 == 1)
                .map(|(_, &j)| j)
                .collect(),
        }
    }

    /// All subsets of `self` in order of increasing cardinality, then lexicographic.
    pub fn subsets(&self) -> Vec<Subset> {
        subset_masks(self.len())
            .into_iter()
            .map(|m| self.select(m))
            .collect()
    }
}

/// Position masks of all subsets of a `d`-set, ordered by cardinality and then
/// lexicographically by the sorted position lists.
pub fn subset_masks(d: usize) -> Vec<u64> {
    assert!(d < 64, "subset_masks supports d < 64");
    let mut masks: Vec<u64> = (0..(1u64 << d)).collect();
    masks.sort_by(|&a, &b| {
        a.count_ones()
            .cmp(&b.count_ones())
            .then_with(|| positions(a).cmp(&positions(b)))
    });
    masks
}

fn positions(mask: u64) -> Vec<u32> {
    (0..64).filter(|p| mask >> p & 1 == 1).collect()
}

impl Ord for Subset {
    fn cmp(&self, other: &Self) -> Ordering {
        self.max_label()
            .cmp(&other.max_label())
            .then_with(|| self.len().cmp(&other.len()))
            .then_with(|| self.indices.cmp(&other.indices))
    }
}

impl PartialOrd for Subset {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, j) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Subset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.indices.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        Subset::new(v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_labels() {
        assert!(Subset::new(vec![0, 1]).is_err());
        assert!(Subset::new(vec![2, 1]).is_err());
        assert!(Subset::new(vec![1, 1]).is_err());
        assert!(Subset::new(vec![]).unwrap().is_empty());
        assert_eq!(
            Subset::from_unsorted(vec![3, 1, 3]).unwrap().indices(),
            &[1, 3]
        );
    }

    #[test]
    fn canonical_order() {
        let mut v: Vec<Subset> = [vec![1, 2], vec![3], vec![], vec![2], vec![1], vec![1, 3]]
            .into_iter()
            .map(|x| Subset::new(x).unwrap())
            .collect();
        v.sort();
        let got: Vec<String> = v.iter().map(|s| s.to_string()).collect();
        assert_eq!(got, ["{}", "{1}", "{2}", "{1,2}", "{3}", "{1,3}"]);
    }

    #[test]
    fn subset_enumeration_order() {
        let u = Subset::new(vec![2, 5, 7]).unwrap();
        let got: Vec<String> = u.subsets().iter().map(|s| s.to_string()).collect();
        assert_eq!(
            got,
            ["{}", "{2}", "{5}", "{7}", "{2,5}", "{2,7}", "{5,7}", "{2,5,7}"]
        );
    }

    #[test]
    fn serde_is_a_plain_list() {
        let u = Subset::new(vec![1, 4]).unwrap();
        assert_eq!(serde_json::to_string(&u).unwrap(), "[1,4]");
        assert!(serde_json::from_str::<Subset>("[4,1]").is_err());
    }
}
