//! Deterministic discrete-event simulation of a network of sources.
//!
//! Virtual time is in nanoseconds. Events are ordered by time, then by
//! insertion sequence.

pub mod delay;
pub mod run;
pub mod stats;
pub mod topology;
pub mod workload;

pub use delay::{DelayModel, Link, MS, SECOND};
pub use run::{network_hash, run, simulate, workload_hash, Answered, Correlations, RunOptions, RunReport, Seeds, SimConfig, Stop};
pub use stats::{correlation, stabilization_check, QueryRecord, StatsBucket, BUCKET};
pub use topology::{generate_topology, Topology, TopologyError, TopologySpec};
pub use workload::{Arrival, Workload, WorkloadSpec};
