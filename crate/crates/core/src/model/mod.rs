//! Terms, queries, taxonomies, interpretations, sources and networks.

mod format;
mod ids;
mod objset;
mod query;
pub mod samples;
mod source;

pub use format::{parse_network, parse_source, write_network, FormatError};
pub use ids::{ObjectId, SourceId, TermId, FRESH_TERM_BASE};
pub use objset::AnswerSet;
pub use query::{parse_query, parse_query_with, ConjunctiveQuery, Named, Query, QueryParseError, Vocabulary};
pub use source::{
    index_of, network_source, reduce_to_term_query, simplify, Interpretation, ModelError, Network,
    Source, SubsumptionPair, Taxonomy, TermQueryOverlay, NETWORK_SOURCE_ID,
};
