//! Taxonomy-based information sources and networks of them: centralized
//! query evaluation, the ask/tell protocol with its query cache, the five
//! distribution architectures and a discrete-event network simulator.

pub mod model;
pub mod bgraph;
pub mod eval;
pub mod protocol;
pub mod cache;
pub mod sources;
pub mod simnet;
pub mod trace;
pub mod verify;
