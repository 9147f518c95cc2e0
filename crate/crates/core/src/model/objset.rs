use std::fmt;

use serde::{Deserialize, Serialize};

use super::ObjectId;

/// A set of objects kept as a sorted, duplicate-free vector.
///
/// Extents and answers are small and combined mostly by union and
/// intersection, which are linear merges on this representation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnswerSet(Vec<ObjectId>);

impl AnswerSet {
    pub const EMPTY: AnswerSet = AnswerSet(Vec::new());

    pub fn new() -> Self {
        AnswerSet(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, o: ObjectId) -> bool {
        self.0.binary_search(&o).is_ok()
    }

    pub fn insert(&mut self, o: ObjectId) -> bool {
        match self.0.binary_search(&o) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, o);
                true
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[ObjectId] {
        &self.0
    }

    pub fn union(&self, other: &AnswerSet) -> AnswerSet {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        AnswerSet(out)
    }

    pub fn intersection(&self, other: &AnswerSet) -> AnswerSet {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len().min(b.len()));
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        AnswerSet(out)
    }

    pub fn union_with(&mut self, other: &AnswerSet) {
        if other.is_empty() {
            return;
        }
        *self = self.union(other);
    }

    pub fn is_subset(&self, other: &AnswerSet) -> bool {
        self.intersection(other).len() == self.len()
    }
}

impl FromIterator<ObjectId> for AnswerSet {
    fn from_iter<I: IntoIterator<Item = ObjectId>>(iter: I) -> Self {
        let mut v: Vec<ObjectId> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        AnswerSet(v)
    }
}

impl fmt::Display for AnswerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn set(v: &[u32]) -> AnswerSet {
        v.iter().map(|&x| ObjectId(x)).collect()
    }

    #[test]
    fn union_and_intersection() {
        let a = set(&[1, 3, 5]);
        let b = set(&[3, 4, 5, 9]);
        assert_eq!(a.union(&b), set(&[1, 3, 4, 5, 9]));
        assert_eq!(a.intersection(&b), set(&[3, 5]));
        assert!(set(&[3]).is_subset(&a));
    }

    proptest! {
        #[test]
        fn merge_ops_agree_with_btreeset(a in prop::collection::vec(0u32..40, 0..20),
                                         b in prop::collection::vec(0u32..40, 0..20)) {
            let sa: BTreeSet<u32> = a.iter().copied().collect();
            let sb: BTreeSet<u32> = b.iter().copied().collect();
            let u: Vec<u32> = sa.union(&sb).copied().collect();
            let i: Vec<u32> = sa.intersection(&sb).copied().collect();
            prop_assert_eq!(set(&a).union(&set(&b)), set(&u));
            prop_assert_eq!(set(&a).intersection(&set(&b)), set(&i));
        }
    }
}
