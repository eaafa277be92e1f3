//! Rank-queue scheduler that chases co-inputs ("siblings") of loaded tensors.
//!
//! Nodes are ranked by height: leaves 0, contractions one above their tallest
//! input. Ready contractions wait in per-rank FIFO queues and the highest
//! non-empty rank runs first, so results are consumed soon after they are
//! produced. Whenever a contraction is one input short, the scheduler
//! prefetches the leaves under that last missing input, which is what pulls
//! sibling subtrees into memory together. Each node is processed exactly once,
//! giving O(V + E) work overall.

use crate::dag::{ContractionDag, NodeId};
use crate::memory::{SchedEvent, Schedule};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, VecDeque};

/// How to choose a leaf when every queue is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafPick {
    /// Lowest-id waiting leaf; fully deterministic.
    #[default]
    LowestId,
    /// Uniform over waiting leaves from a seeded generator.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SiblingOptions {
    pub leaf_pick: LeafPick,
}

/// Scheduler output plus the counters that pin down its complexity.
#[derive(Debug, Clone)]
pub struct SiblingRun {
    pub schedule: Schedule,
    pub events: Vec<SchedEvent>,
    /// Number of nodes processed; exactly one call per node.
    pub process_calls: usize,
    /// Edges touched while releasing inputs and notifying dependents;
    /// bounded by |E| + sum of parent-list lengths.
    pub edges_traversed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SiblingError {
    #[error("scheduler stalled with {remaining} contractions unscheduled")]
    Stuck { remaining: usize },
}

/// Height of every node: 0 for leaves, 1 + max input height otherwise.
pub fn rank_by_height(dag: &ContractionDag) -> Vec<u32> {
    let mut rank = vec![0u32; dag.len()];
    for id in crate::dag::topo_order(dag) {
        let node = dag.node(id);
        rank[id.index()] =
            node.children.iter().map(|c| rank[c.index()] + 1).max().unwrap_or(0);
    }
    rank
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Waiting,
    Queued,
    Inmem,
    Released,
}

struct Scheduler<'d> {
    dag: &'d ContractionDag,
    rank: Vec<u32>,
    state: Vec<State>,
    /// Dependents not yet executed; 0 releases the tensor.
    pending_uses: Vec<usize>,
    /// Inputs not yet in memory; 0 makes a contraction ready.
    pending_inputs: Vec<usize>,
    /// Sum of ids of the not-yet-loaded inputs: when one input remains, the
    /// sum names it without scanning the child list.
    pending_child_sum: Vec<u64>,
    queues: Vec<VecDeque<NodeId>>,
    live_ranks: BTreeSet<u32>,
    order: Vec<NodeId>,
    events: Vec<SchedEvent>,
    process_calls: usize,
    edges_traversed: usize,
}

impl<'d> Scheduler<'d> {
    fn new(dag: &'d ContractionDag) -> Self {
        let rank = rank_by_height(dag);
        let max_rank = rank.iter().copied().max().unwrap_or(0);
        let mut s = Scheduler {
            dag,
            rank,
            state: vec![State::Waiting; dag.len()],
            pending_uses: vec![0; dag.len()],
            pending_inputs: vec![0; dag.len()],
            pending_child_sum: vec![0; dag.len()],
            queues: vec![VecDeque::new(); max_rank as usize + 1],
            live_ranks: BTreeSet::new(),
            order: Vec::with_capacity(dag.contraction_count()),
            events: Vec::with_capacity(dag.len()),
            process_calls: 0,
            edges_traversed: 0,
        };
        for node in dag.nodes() {
            s.pending_uses[node.id.index()] = node.parents.len();
            s.pending_inputs[node.id.index()] = node.children.len();
            s.pending_child_sum[node.id.index()] =
                node.children.iter().map(|c| c.0 as u64).sum();
        }
        s
    }

    fn enqueue(&mut self, id: NodeId) {
        debug_assert_eq!(self.state[id.index()], State::Waiting);
        self.state[id.index()] = State::Queued;
        let r = self.rank[id.index()];
        self.queues[r as usize].push_back(id);
        self.live_ranks.insert(r);
    }

    fn pop_ready(&mut self) -> Option<NodeId> {
        let &r = self.live_ranks.last()?;
        let q = &mut self.queues[r as usize];
        let id = q.pop_front().expect("live rank has a queued node");
        if q.is_empty() {
            self.live_ranks.remove(&r);
        }
        Some(id)
    }

    /// Loads every waiting leaf under `root` so the contraction above it can
    /// become ready. Stops at anything already queued, loaded, or released.
    fn prefetch_leaves(&mut self, root: NodeId) {
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            if self.state[u.index()] != State::Waiting {
                continue;
            }
            let node = self.dag.node(u);
            if node.is_leaf() {
                self.process(u);
            } else {
                // Reversed so the lowest child is handled first.
                stack.extend(node.children.iter().rev());
            }
        }
    }

    /// Executes one node: loads a leaf or emits a contraction, releases spent
    /// inputs, and notifies dependents, enqueueing any that became ready.
    fn process(&mut self, u: NodeId) {
        let node = self.dag.node(u);
        let ui = u.index();
        assert!(
            self.state[ui] == if node.is_leaf() { State::Waiting } else { State::Queued },
            "node {u} processed in state {:?}",
            self.state[ui]
        );
        self.process_calls += 1;
        self.state[ui] = State::Inmem;
        if node.is_leaf() {
            self.events.push(SchedEvent::Load(u));
        } else {
            self.events.push(SchedEvent::Contract(u));
            self.order.push(u);
            for &c in &node.children {
                self.edges_traversed += 1;
                self.pending_uses[c.index()] -= 1;
                if self.pending_uses[c.index()] == 0 {
                    self.state[c.index()] = State::Released;
                }
            }
            if node.parents.is_empty() {
                self.state[ui] = State::Released;
            }
        }
        for &p in &node.parents {
            self.edges_traversed += 1;
            let pi = p.index();
            self.pending_inputs[pi] -= 1;
            self.pending_child_sum[pi] -= u.0 as u64;
            if self.pending_inputs[pi] == 1 {
                let last = NodeId(self.pending_child_sum[pi] as u32);
                self.prefetch_leaves(last);
            } else if self.pending_inputs[pi] == 0 {
                self.enqueue(p);
            }
        }
    }
}

/// Runs the sibling scheduler over a built DAG.
///
/// The result passes [`crate::memory::check_schedule`] for any DAG that
/// validates cleanly; `process_calls` equals the number of nodes and
/// `edges_traversed <= 2|E|`.
pub fn schedule(
    dag: &ContractionDag,
    opts: &SiblingOptions,
) -> Result<SiblingRun, SiblingError> {
    let mut s = Scheduler::new(dag);
    let total = dag.contraction_count();

    let mut rng = match opts.leaf_pick {
        LeafPick::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        LeafPick::LowestId => None,
    };
    // Waiting leaves, ascending; consumed front-to-back in lowest-id mode and
    // by lazy-deletion sampling in random mode.
    let mut leaves: Vec<NodeId> = dag.nodes().filter(|n| n.is_leaf()).map(|n| n.id).collect();
    let mut leaf_cursor = 0usize;

    while s.order.len() < total {
        if let Some(u) = s.pop_ready() {
            s.process(u);
            continue;
        }
        let picked = match rng.as_mut() {
            None => loop {
                if leaf_cursor == leaves.len() {
                    break None;
                }
                let cand = leaves[leaf_cursor];
                leaf_cursor += 1;
                if s.state[cand.index()] == State::Waiting {
                    break Some(cand);
                }
            },
            Some(rng) => loop {
                if leaves.is_empty() {
                    break None;
                }
                let i = rng.random_range(0..leaves.len());
                let cand = leaves.swap_remove(i);
                if s.state[cand.index()] == State::Waiting {
                    break Some(cand);
                }
            },
        };
        match picked {
            Some(leaf) => s.process(leaf),
            None => return Err(SiblingError::Stuck { remaining: total - s.order.len() }),
        }
    }

    let seed = match opts.leaf_pick {
        LeafPick::Random { seed } => seed,
        LeafPick::LowestId => 0,
    };
    Ok(SiblingRun {
        schedule: Schedule::new(s.order, "sibling", seed),
        events: s.events,
        process_calls: s.process_calls,
        edges_traversed: s.edges_traversed,
    })
}
