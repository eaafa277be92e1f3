//! Exact residency replay of contraction schedules.
//!
//! A schedule is the sequence of non-leaf nodes in execution order. Each step
//! loads absent leaf inputs, produces the output, then releases every tensor
//! whose dependents have all executed (the output itself included, which is
//! always the case for roots). Residency is sampled after the releases;
//! the pre-release high-water mark of each step is tracked separately as the
//! transient load. Temporaries internal to a contraction are out of scope.

use crate::dag::{ContractionDag, NodeId};
use std::fmt;
use std::io::{self, Write};

/// An execution order over the DAG's contractions, tagged with the algorithm
/// that produced it and the seed it used (0 for deterministic algorithms).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub order: Vec<NodeId>,
    pub algo: String,
    pub seed: u64,
}

impl Schedule {
    pub fn new(order: Vec<NodeId>, algo: impl Into<String>, seed: u64) -> Self {
        Schedule { order, algo: algo.into(), seed }
    }
}

/// One scheduler action, in execution order. Loads are what a device fetches;
/// only contractions enter a [`Schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedEvent {
    Load(NodeId),
    Contract(NodeId),
}

/// A defect that makes a schedule unreplayable.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleViolation {
    #[error("schedule names unknown node {node}")]
    UnknownNode { node: NodeId },
    #[error("leaf {node} appears in the schedule")]
    LeafScheduled { node: NodeId },
    #[error("contraction {node} appears more than once")]
    DuplicateContraction { node: NodeId },
    #[error("contraction {node} is missing")]
    MissingContraction { node: NodeId },
    #[error("contraction {node} runs before its input {child}")]
    DependencyViolation { node: NodeId, child: NodeId },
}

/// Checks that a schedule is a permutation of the DAG's contractions in which
/// every node follows all of its non-leaf children. Empty report = replayable.
pub fn check_schedule(dag: &ContractionDag, schedule: &Schedule) -> Vec<ScheduleViolation> {
    let mut report = Vec::new();
    let mut position = vec![usize::MAX; dag.len()];
    for (i, &id) in schedule.order.iter().enumerate() {
        if id.index() >= dag.len() {
            report.push(ScheduleViolation::UnknownNode { node: id });
            continue;
        }
        if dag.node(id).is_leaf() {
            report.push(ScheduleViolation::LeafScheduled { node: id });
            continue;
        }
        if position[id.index()] != usize::MAX {
            report.push(ScheduleViolation::DuplicateContraction { node: id });
            continue;
        }
        position[id.index()] = i;
    }
    for id in dag.contractions() {
        if position[id.index()] == usize::MAX {
            report.push(ScheduleViolation::MissingContraction { node: id });
            continue;
        }
        for &c in &dag.node(id).children {
            if !dag.node(c).is_leaf() && position[c.index()] > position[id.index()] {
                report.push(ScheduleViolation::DependencyViolation { node: id, child: c });
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidSchedule(pub Vec<ScheduleViolation>);

impl fmt::Display for InvalidSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} schedule violations, first: {}", self.0.len(), self.0[0])
    }
}

impl std::error::Error for InvalidSchedule {}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MemoryError {
    #[error("invalid schedule: {0}")]
    Invalid(InvalidSchedule),
    #[error("resident-size accumulator overflowed u64")]
    Overflow,
}

/// Residency trace of a replayed schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryTrace {
    /// Post-release totals `M_0..M_n`; `M_0 = M_n = 0`.
    pub residency: Vec<u64>,
    /// Pre-release high-water mark of each step (inputs loaded, output live).
    pub step_transients: Vec<u64>,
    /// `max(residency)`.
    pub peak: u64,
    /// `max(step_transients)`; what a device actually has to hold.
    pub transient_peak: u64,
    /// Sorted resident ids after each step, when requested.
    pub resident_sets: Option<Vec<Vec<NodeId>>>,
}

impl MemoryTrace {
    /// Writes one CSV row per step: `step,node_id,resident_total,transient_max`.
    pub fn write_csv(&self, schedule: &Schedule, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "step,node_id,resident_total,transient_max")?;
        for (i, &id) in schedule.order.iter().enumerate() {
            writeln!(w, "{},{},{},{}", i + 1, id, self.residency[i + 1], self.step_transients[i])?;
        }
        Ok(())
    }
}

/// Replays `schedule` and returns its residency trace.
pub fn simulate(dag: &ContractionDag, schedule: &Schedule) -> Result<MemoryTrace, MemoryError> {
    simulate_detailed(dag, schedule, false)
}

/// As [`simulate`], optionally recording the full resident set after each step.
pub fn simulate_detailed(
    dag: &ContractionDag,
    schedule: &Schedule,
    record_sets: bool,
) -> Result<MemoryTrace, MemoryError> {
    let violations = check_schedule(dag, schedule);
    if !violations.is_empty() {
        return Err(MemoryError::Invalid(InvalidSchedule(violations)));
    }

    let n = schedule.order.len();
    let mut pending_uses: Vec<usize> = (0..dag.len())
        .map(|i| dag.node(NodeId(i as u32)).parents.len())
        .collect();
    let mut resident = vec![false; dag.len()];
    let mut total: u64 = 0;
    let mut residency = Vec::with_capacity(n + 1);
    let mut step_transients = Vec::with_capacity(n);
    let mut sets = record_sets.then(|| Vec::with_capacity(n + 1));

    let grow = |total: &mut u64, size: u64| -> Result<(), MemoryError> {
        *total = total.checked_add(size).ok_or(MemoryError::Overflow)?;
        Ok(())
    };

    residency.push(0);
    if let Some(sets) = sets.as_mut() {
        sets.push(Vec::new());
    }
    for &id in &schedule.order {
        let node = dag.node(id);
        // (i) load absent leaf inputs
        for &c in &node.children {
            if !resident[c.index()] {
                debug_assert!(dag.node(c).is_leaf());
                resident[c.index()] = true;
                grow(&mut total, dag.node(c).size)?;
            }
        }
        // (ii) produce the output
        resident[id.index()] = true;
        grow(&mut total, node.size)?;
        step_transients.push(total);
        // (iii) release exhausted tensors, the fresh output included
        for &c in &node.children {
            pending_uses[c.index()] -= 1;
            if pending_uses[c.index()] == 0 {
                resident[c.index()] = false;
                total -= dag.node(c).size;
            }
        }
        if pending_uses[id.index()] == 0 {
            resident[id.index()] = false;
            total -= node.size;
        }
        residency.push(total);
        if let Some(sets) = sets.as_mut() {
            sets.push(
                (0..dag.len() as u32).map(NodeId).filter(|x| resident[x.index()]).collect(),
            );
        }
    }
    debug_assert_eq!(total, 0, "complete schedules must end with empty residency");

    let peak = residency.iter().copied().max().unwrap_or(0);
    let transient_peak = step_transients.iter().copied().max().unwrap_or(0);
    Ok(MemoryTrace { residency, step_transients, peak, transient_peak, resident_sets: sets })
}

/// Resident total after completing exactly the contractions in `done`,
/// independent of the order they ran in: a tensor is resident iff it has been
/// produced (or, for leaves, demanded by a completed dependent) and some
/// dependent is still outstanding.
pub fn resident_after(dag: &ContractionDag, done: &[bool]) -> u64 {
    let mut total = 0u64;
    for node in dag.nodes() {
        let produced = if node.is_leaf() {
            node.parents.iter().any(|p| done[p.index()])
        } else {
            done[node.id.index()]
        };
        if produced && node.parents.iter().any(|p| !done[p.index()]) {
            total += node.size;
        }
    }
    total
}
