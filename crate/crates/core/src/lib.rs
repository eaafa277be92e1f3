//! Schedulers and memory simulators for batched tensor-contraction DAGs.
//!
//! A workload is a collection of rooted contraction trees that share nodes;
//! merging the trees yields a DAG whose leaves are input tensors and whose
//! interior nodes are contractions. This crate builds and validates those DAGs
//! ([`dag`]), replays schedules against an exact residency model ([`memory`]),
//! provides two peak-memory-aware schedulers ([`sibling`] and [`tree`]) plus
//! baselines and an exact small-instance oracle ([`baseline`]), simulates a
//! capacity-limited accelerator with LRU eviction ([`device`]), and parses,
//! emits, and generates workloads ([`workload`]).

pub mod baseline;
pub mod dag;
pub mod device;
pub mod heap;
pub mod memory;
pub mod sibling;
pub mod tree;
pub mod workload;
