use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a source in a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceId(pub u32);

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Local indices at or above this value are reserved for the fresh terms
/// introduced when a query is reduced to a term query. They never appear in a
/// stored terminology.
pub const FRESH_TERM_BASE: u32 = 1 << 31;

/// A term, globally unique because it carries the source that owns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TermId {
    pub source: SourceId,
    pub local: u32,
}

impl TermId {
    pub fn new(source: SourceId, local: u32) -> Self {
        TermId { source, local }
    }

    /// The `n`-th fresh term of `source`.
    pub fn fresh(source: SourceId, n: u32) -> Self {
        TermId { source, local: FRESH_TERM_BASE + n }
    }

    pub fn is_fresh(&self) -> bool {
        self.local >= FRESH_TERM_BASE
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_fresh() {
            write!(f, "{}.t{}", self.source, self.local - FRESH_TERM_BASE)
        } else {
            write!(f, "{}.{}", self.source, self.local)
        }
    }
}

/// An object of the shared domain. In the simulator objects model URLs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}
