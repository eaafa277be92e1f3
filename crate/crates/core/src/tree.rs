//! Whole-tree scheduler driven by incremental memory gains.
//!
//! Trees are contracted one at a time. Each tree carries a gain: the exact
//! change in resident memory that contracting all of its remaining members
//! would cause right now. The scheduler keeps every gain current while nodes
//! are processed — counting, per resident tensor and tree, how many of its
//! still-pending dependents lie inside vs. outside that tree — and always
//! contracts the alive tree with the maximum gain (ties to the lowest id)
//! through an addressable max-heap. Bookkeeping is O(1) per (edge, tree)
//! touch, O(k·E) across a run.
//!
//! [`TreeScheduler::reference_gain`] recomputes any tree's gain from scratch
//! off the node states alone; incremental and recomputed gains must agree
//! exactly at every selection, and the run's own residency tally must match
//! [`crate::memory::simulate`] on the emitted schedule.

use serde::Serialize;

use crate::dag::{ContractionDag, NodeId, TreeId, TreeSet};
use crate::heap::IndexedMaxHeap;
use crate::memory::{SchedEvent, Schedule};

/// Lifecycle of a node under the tree scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    /// Not yet produced (contractions) or demanded (leaves).
    Avail,
    /// Produced/loaded and still needed by some unprocessed dependent.
    Inmem,
    /// Gone from memory; every dependent has run.
    Released,
}

/// Pending-dependent counters of one resident tensor with respect to one tree:
/// how many of its unprocessed dependents are members / non-members.
#[derive(Debug, Clone, Copy)]
struct TrackedTree {
    tree: TreeId,
    inside: u32,
    outside: u32,
}

/// Why a tree's gain moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GainCause {
    /// A member was processed; its individual keep-penalty no longer applies.
    MemberProcessed,
    /// A newly produced tensor's dependents all sit inside the tree, which
    /// will therefore free it.
    ReleaseCredit,
    /// Another tree's run freed a tensor this tree was credited for.
    LostRelease,
    /// A tensor's last outside dependent ran; this tree now frees it.
    GainedRelease,
}

/// One gain adjustment, in application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GainEvent {
    pub tree: TreeId,
    pub delta: i64,
    pub cause: GainCause,
}

/// Opt-in audit trail: replaying `events` over `initial` yields `final_gains`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct GainLog {
    pub initial: Vec<i64>,
    pub events: Vec<GainEvent>,
    pub final_gains: Vec<i64>,
}

/// One tree selection: the `index`-th pick took `tree` at gain `gain`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeSelection {
    pub index: usize,
    pub tree: TreeId,
    pub gain: i64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TreeOptions {
    pub record_gain_log: bool,
}

/// Scheduler output plus the instrumentation the complexity and consistency
/// checks rely on.
#[derive(Debug, Clone)]
pub struct TreeRun {
    pub schedule: Schedule,
    pub events: Vec<SchedEvent>,
    pub selections: Vec<TreeSelection>,
    /// The scheduler's own post-release residency after each contraction
    /// (leading 0 included); must equal what replaying the schedule gives.
    pub residency: Vec<u64>,
    /// Pre-release high-water mark of each contraction.
    pub step_transients: Vec<u64>,
    /// Counter/gain mutations performed; O(k·E) across a run.
    pub counter_updates: usize,
    pub gain_log: Option<GainLog>,
}

/// Incremental scheduler state; drive with [`TreeScheduler::step`] or use
/// [`schedule`] to run to completion.
pub struct TreeScheduler<'d> {
    dag: &'d ContractionDag,
    trees: &'d TreeSet,
    state: Vec<NodeState>,
    /// Trees containing each node, ascending; parallel to `member_gain`.
    memberships: Vec<Vec<TreeId>>,
    /// Individual gain of (node, tree): 0 when every dependent is a member,
    /// else -size (the tree leaves the tensor behind).
    member_gain: Vec<Vec<i64>>,
    /// Unprocessed dependents per node; 0 releases it.
    avail_parents: Vec<usize>,
    /// For each resident tensor, its per-tree dependent counters.
    tracked: Vec<Vec<TrackedTree>>,
    /// Cross-tree release credits (gain minus withdrawn member penalties).
    credit: Vec<i64>,
    /// Alive trees keyed by total gain; keys double as the gain store.
    heap: IndexedMaxHeap,
    topo_pos: Vec<usize>,
    // Lazy-load residency tally, mirroring the memory model's accounting.
    tally_loaded: Vec<bool>,
    tally: u64,
    order: Vec<NodeId>,
    events: Vec<SchedEvent>,
    selections: Vec<TreeSelection>,
    residency: Vec<u64>,
    step_transients: Vec<u64>,
    counter_updates: usize,
    log: Option<GainLog>,
}

impl<'d> TreeScheduler<'d> {
    pub fn new(dag: &'d ContractionDag, trees: &'d TreeSet, opts: &TreeOptions) -> Self {
        debug_assert!(
            crate::dag::validate(dag, trees).is_empty(),
            "tree scheduler requires a validated workload"
        );
        let n = dag.len();
        let memberships = trees.memberships(n);
        let mut member_gain: Vec<Vec<i64>> =
            memberships.iter().map(|m| vec![0i64; m.len()]).collect();
        let mut gains = vec![0i64; trees.k()];
        let mut counter_updates = 0usize;
        for (i, trees_of) in memberships.iter().enumerate() {
            let node = dag.node(NodeId(i as u32));
            for (slot, &t) in trees_of.iter().enumerate() {
                let all_inside =
                    node.parents.iter().all(|p| trees.trees[t].contains(*p));
                if !all_inside {
                    member_gain[i][slot] = -(node.size as i64);
                    gains[t] -= node.size as i64;
                }
                counter_updates += 1;
            }
        }

        let mut topo_pos = vec![0usize; n];
        for (i, id) in crate::dag::topo_order(dag).into_iter().enumerate() {
            topo_pos[id.index()] = i;
        }

        let log = opts.record_gain_log.then(|| GainLog {
            initial: gains.clone(),
            events: Vec::new(),
            final_gains: Vec::new(),
        });

        TreeScheduler {
            dag,
            trees,
            state: vec![NodeState::Avail; n],
            memberships,
            member_gain,
            avail_parents: dag.nodes().map(|x| x.parents.len()).collect(),
            tracked: vec![Vec::new(); n],
            credit: vec![0i64; trees.k()],
            heap: IndexedMaxHeap::with_keys(gains),
            topo_pos,
            tally_loaded: vec![false; n],
            tally: 0,
            order: Vec::with_capacity(dag.contraction_count()),
            events: Vec::with_capacity(n),
            selections: Vec::with_capacity(trees.k()),
            residency: vec![0],
            step_transients: Vec::with_capacity(dag.contraction_count()),
            counter_updates,
            log,
        }
    }

    /// Trees not yet contracted, ascending.
    pub fn alive(&self) -> Vec<TreeId> {
        (0..self.trees.k()).filter(|&t| self.heap.contains(t)).collect()
    }

    /// Current incrementally maintained gain of `tree`.
    pub fn gain(&self, tree: TreeId) -> i64 {
        self.heap.key(tree)
    }

    /// Recomputes `tree`'s gain from node states alone: resident total now
    /// minus resident total after contracting every remaining member.
    pub fn reference_gain(&self, tree: TreeId) -> i64 {
        let t = &self.trees.trees[tree];
        let mut now = 0i64;
        let mut after = 0i64;
        for node in self.dag.nodes() {
            let i = node.id.index();
            let processed = self.state[i] != NodeState::Avail;
            if processed
                && node.parents.iter().any(|p| self.state[p.index()] == NodeState::Avail)
            {
                now += node.size as i64;
            }
            if (processed || t.contains(node.id))
                && node.parents.iter().any(|p| {
                    self.state[p.index()] == NodeState::Avail && !t.contains(*p)
                })
            {
                after += node.size as i64;
            }
        }
        now - after
    }

    /// Pops the max-gain tree and contracts its remaining members. Returns
    /// `None` once every tree has been contracted.
    pub fn step(&mut self) -> Option<TreeSelection> {
        let (tree, gain) = self.heap.pop()?;
        let sel = TreeSelection { index: self.selections.len(), tree, gain };
        self.selections.push(sel);
        self.process_tree(tree);
        Some(sel)
    }

    /// Runs to completion and returns the schedule with its instrumentation.
    pub fn finish(mut self) -> TreeRun {
        while self.step().is_some() {}
        if let Some(log) = self.log.as_mut() {
            log.final_gains = (0..self.trees.k()).map(|t| self.heap.key(t)).collect();
        }
        TreeRun {
            schedule: Schedule::new(self.order, "tree", 0),
            events: self.events,
            selections: self.selections,
            residency: self.residency,
            step_transients: self.step_transients,
            counter_updates: self.counter_updates,
            gain_log: self.log,
        }
    }

    fn add_gain(&mut self, tree: TreeId, delta: i64, cause: GainCause) {
        self.heap.update(tree, self.heap.key(tree) + delta);
        if cause != GainCause::MemberProcessed {
            self.credit[tree] += delta;
        }
        self.counter_updates += 1;
        if let Some(log) = self.log.as_mut() {
            log.events.push(GainEvent { tree, delta, cause });
        }
    }

    /// Contracts every still-available member of `tree` in topological order.
    fn process_tree(&mut self, tree: TreeId) {
        let mut members = self.trees.trees[tree].members.clone();
        members.sort_unstable_by_key(|m| self.topo_pos[m.index()]);
        for u in members {
            if self.state[u.index()] != NodeState::Avail {
                continue;
            }
            let node = self.dag.node(u);
            if node.is_leaf() {
                self.process_node(u);
                continue;
            }
            // Mirror the memory model: fetch absent inputs, produce, sample
            // the transient, then let the bookkeeping release spent tensors.
            for &c in &node.children {
                if !self.tally_loaded[c.index()] {
                    debug_assert!(self.dag.node(c).is_leaf());
                    self.tally_loaded[c.index()] = true;
                    self.tally += self.dag.node(c).size;
                    self.events.push(SchedEvent::Load(c));
                }
            }
            self.tally_loaded[u.index()] = true;
            self.tally += node.size;
            self.step_transients.push(self.tally);
            self.events.push(SchedEvent::Contract(u));
            self.order.push(u);

            for &c in &node.children {
                self.process_child(u, c);
            }
            self.process_node(u);
            if self.state[u.index()] == NodeState::Released {
                self.tally -= node.size;
            }
            self.residency.push(self.tally);
        }
    }

    /// Settles the bookkeeping of resident input `x` when its dependent `u`
    /// is processed, releasing `x` if `u` was its last pending dependent.
    fn process_child(&mut self, u: NodeId, x: NodeId) {
        let xi = x.index();
        debug_assert_eq!(self.state[xi], NodeState::Inmem);
        let x_size = self.dag.node(x).size as i64;
        let mut idx = 0;
        while idx < self.tracked[xi].len() {
            let TrackedTree { tree, inside, outside } = self.tracked[xi][idx];
            let u_inside = self.memberships[u.index()].binary_search(&tree).is_ok();
            self.counter_updates += 1;
            if u_inside {
                assert!(inside >= 1, "inside counter underflow at node {x} tree {tree}");
                if inside == 1 && outside == 0 {
                    self.add_gain(tree, -x_size, GainCause::LostRelease);
                }
                if inside == 1 {
                    // x no longer has pending dependents inside `tree`.
                    self.tracked[xi].swap_remove(idx);
                    continue;
                }
                self.tracked[xi][idx].inside = inside - 1;
            } else {
                assert!(outside >= 1, "outside counter underflow at node {x} tree {tree}");
                if outside == 1 {
                    self.add_gain(tree, x_size, GainCause::GainedRelease);
                }
                self.tracked[xi][idx].outside = outside - 1;
            }
            idx += 1;
        }
        self.avail_parents[xi] -= 1;
        if self.avail_parents[xi] == 0 {
            debug_assert!(self.tracked[xi].is_empty());
            self.state[xi] = NodeState::Released;
            self.tally -= self.dag.node(x).size;
        }
    }

    /// Transitions `u` out of `Avail`: withdraws its member penalties, sets up
    /// dependent counters per tree, and credits trees that will free it.
    fn process_node(&mut self, u: NodeId) {
        let ui = u.index();
        debug_assert_eq!(self.state[ui], NodeState::Avail);
        for slot in 0..self.memberships[ui].len() {
            let tree = self.memberships[ui][slot];
            let ig = self.member_gain[ui][slot];
            if ig != 0 {
                self.add_gain(tree, -ig, GainCause::MemberProcessed);
            }
        }

        // Every dependent of a node being processed is itself unprocessed.
        let parents = &self.dag.node(u).parents;
        let out_avail = parents.len();
        let mut entries: Vec<TrackedTree> = Vec::new();
        for &v in parents {
            debug_assert_eq!(self.state[v.index()], NodeState::Avail);
            for &t in &self.memberships[v.index()] {
                self.counter_updates += 1;
                match entries.iter_mut().find(|e| e.tree == t) {
                    Some(e) => e.inside += 1,
                    None => entries.push(TrackedTree { tree: t, inside: 1, outside: 0 }),
                }
            }
        }
        entries.sort_unstable_by_key(|e| e.tree);
        let u_size = self.dag.node(u).size as i64;
        for e in &mut entries {
            e.outside = (out_avail - e.inside as usize) as u32;
            if e.outside == 0 {
                self.add_gain(e.tree, u_size, GainCause::ReleaseCredit);
            }
        }

        if out_avail == 0 {
            self.state[ui] = NodeState::Released;
        } else {
            self.state[ui] = NodeState::Inmem;
            self.tracked[ui] = entries;
        }
    }
}

/// Runs the tree scheduler over a validated workload.
pub fn schedule(dag: &ContractionDag, trees: &TreeSet, opts: &TreeOptions) -> TreeRun {
    TreeScheduler::new(dag, trees, opts).finish()
}
