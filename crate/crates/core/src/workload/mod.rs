//! Workload I/O and synthesis: text/JSON formats, fixtures, and a seeded
//! generator with tunable cross-tree sharing.

pub mod fixtures;
pub mod format;
pub mod gen;

pub use fixtures::shared_triple;
