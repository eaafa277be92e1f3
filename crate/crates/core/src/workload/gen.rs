//! Seeded synthetic workloads with tunable cross-tree sharing.
//!
//! Each tree is a random full binary contraction tree over 3..=8 leaves.
//! Finished subtrees enter a pool keyed by (leaf count, size class); when a
//! later tree needs a subtree of that shape it reuses a pooled one with
//! probability `share_prob`, provided the candidate's closure is disjoint
//! from what the tree already holds (so every tree stays a tree). Roots are
//! always fresh and never pooled. Sharing rises monotonically with
//! `share_prob`, which [`calibrate_share_prob`] exploits to hit a target
//! vertex-sharing factor by bisection.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dag::{build_dag, stats, NodeDecl, NodeId, Tree, TreeSet};

/// Contraction system; fixes the leaf sizes and the interior size classes.
/// Meson-type tensors scale as N^2, baryon-type as N^3, with N^4 appearing in
/// baryon-baryon intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    MxM,
    MxMxM,
    BxM,
    BxB,
    BxBxB,
}

impl System {
    pub const ALL: [System; 5] =
        [System::MxM, System::MxMxM, System::BxM, System::BxB, System::BxBxB];

    fn interior_classes(self) -> &'static [SizeClass] {
        match self {
            System::MxM | System::MxMxM => &[SizeClass::Sq],
            System::BxM => &[SizeClass::Sq, SizeClass::Cu],
            System::BxB | System::BxBxB => &[SizeClass::Sq, SizeClass::Cu, SizeClass::Qu],
        }
    }
}

impl std::fmt::Display for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            System::MxM => "mxm",
            System::MxMxM => "mxmxm",
            System::BxM => "bxm",
            System::BxB => "bxb",
            System::BxBxB => "bxbxb",
        })
    }
}

impl std::str::FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mxm" => Ok(System::MxM),
            "mxmxm" => Ok(System::MxMxM),
            "bxm" => Ok(System::BxM),
            "bxb" => Ok(System::BxB),
            "bxbxb" => Ok(System::BxBxB),
            other => Err(format!("unknown system `{other}` (mxm|mxmxm|bxm|bxb|bxbxb)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum SizeClass {
    Sq,
    Cu,
    Qu,
}

impl SizeClass {
    fn bytes(self, n: u64) -> u64 {
        match self {
            SizeClass::Sq => n * n,
            SizeClass::Cu => n * n * n,
            SizeClass::Qu => n * n * n * n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub system: System,
    pub num_trees: usize,
    /// Tensor dimension N; sizes are N^2..N^4 by class.
    pub n_dim: u64,
    /// Probability of reusing a pooled subtree instead of building fresh.
    pub share_prob: f64,
    /// Inclusive range of leaves per tree; a tree with L leaves has 2L-1
    /// members.
    pub leaves: (u32, u32),
    pub seed: u64,
}

/// One reusable subtree: its root, full descendant closure, and edges.
#[derive(Debug, Clone)]
struct PoolEntry {
    root: NodeId,
    closure: Vec<NodeId>,
    edges: Vec<(NodeId, NodeId)>,
}

struct Gen {
    params: GenParams,
    rng: ChaCha8Rng,
    nodes: Vec<NodeDecl>,
    pool: BTreeMap<(u32, SizeClass), Vec<PoolEntry>>,
    /// Nodes already in the tree under construction.
    in_current: HashSet<NodeId>,
}

impl Gen {
    fn fresh_node(&mut self, size: u64, cost: u64) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(NodeDecl { id, size, cost });
        id
    }

    fn leaf_class(&mut self) -> SizeClass {
        match self.params.system {
            System::MxM | System::MxMxM => SizeClass::Sq,
            System::BxB | System::BxBxB => SizeClass::Cu,
            System::BxM => {
                if self.rng.random_bool(0.5) {
                    SizeClass::Sq
                } else {
                    SizeClass::Cu
                }
            }
        }
    }

    fn interior_class(&mut self) -> SizeClass {
        let classes = self.params.system.interior_classes();
        classes[self.rng.random_range(0..classes.len())]
    }

    /// Reuses a pooled subtree with this leaf count (any size class) whose
    /// closure is disjoint from the current tree, if the share coin and the
    /// pool allow it.
    fn try_reuse(&mut self, leaves: u32) -> Option<PoolEntry> {
        if !self.rng.random_bool(self.params.share_prob) {
            return None;
        }
        let candidates: Vec<&PoolEntry> = self
            .pool
            .range((leaves, SizeClass::Sq)..=(leaves, SizeClass::Qu))
            .flat_map(|(_, v)| v)
            .filter(|e| e.closure.iter().all(|n| !self.in_current.contains(n)))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let entry = candidates[self.rng.random_range(0..candidates.len())].clone();
        self.in_current.extend(entry.closure.iter().copied());
        Some(entry)
    }

    /// Builds (or reuses) a subtree with `leaves` leaves; registers fresh
    /// subtrees in the pool.
    fn subtree(&mut self, leaves: u32) -> PoolEntry {
        if let Some(entry) = self.try_reuse(leaves) {
            return entry;
        }
        let class =
            if leaves == 1 { self.leaf_class() } else { self.interior_class() };
        let size = class.bytes(self.params.n_dim);
        let entry = if leaves == 1 {
            let id = self.fresh_node(size, 0);
            self.in_current.insert(id);
            PoolEntry { root: id, closure: vec![id], edges: Vec::new() }
        } else {
            let left = self.rng.random_range(1..leaves);
            let a = self.subtree(left);
            let b = self.subtree(leaves - left);
            let input_bytes =
                self.nodes[a.root.index()].size + self.nodes[b.root.index()].size;
            let id = self.fresh_node(size, size * input_bytes);
            self.in_current.insert(id);
            let mut closure = a.closure;
            closure.extend_from_slice(&b.closure);
            closure.push(id);
            let mut edges = a.edges;
            edges.extend_from_slice(&b.edges);
            edges.push((a.root, id));
            edges.push((b.root, id));
            PoolEntry { root: id, closure, edges }
        };
        self.pool.entry((leaves, class)).or_default().push(entry.clone());
        entry
    }

    fn tree(&mut self, tid: usize) -> Tree {
        self.in_current.clear();
        let (lo, hi) = self.params.leaves;
        let leaves: u32 = self.rng.random_range(lo..=hi);
        let left = self.rng.random_range(1..leaves);
        let a = self.subtree(left);
        let b = self.subtree(leaves - left);
        // The root is always fresh and never pooled, so no tree is a subtree
        // of another and every root keeps zero dependents.
        let class = self.interior_class();
        let size = class.bytes(self.params.n_dim);
        let input_bytes = self.nodes[a.root.index()].size + self.nodes[b.root.index()].size;
        let root = self.fresh_node(size, size * input_bytes);
        let mut edges = a.edges;
        edges.extend_from_slice(&b.edges);
        edges.push((a.root, root));
        edges.push((b.root, root));
        Tree::new(tid, root, edges)
    }
}

/// Generates a workload; identical parameters give identical output.
pub fn generate(params: &GenParams) -> TreeSet {
    assert!(params.num_trees >= 1, "need at least one tree");
    assert!(params.n_dim >= 2, "tensor dimension must be at least 2");
    assert!(
        (0.0..=1.0).contains(&params.share_prob),
        "share_prob must lie in [0, 1]"
    );
    assert!(
        2 <= params.leaves.0 && params.leaves.0 <= params.leaves.1,
        "leaf range must satisfy 2 <= lo <= hi"
    );
    let mut g = Gen {
        params: *params,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        nodes: Vec::new(),
        pool: BTreeMap::new(),
        in_current: HashSet::new(),
    };
    let trees = (0..params.num_trees).map(|t| g.tree(t)).collect();
    TreeSet { nodes: g.nodes, trees }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub share_prob: f64,
    pub achieved_f_v: f64,
}

fn mean_f_v(params: &GenParams) -> f64 {
    let mut total = 0.0;
    for s in 0..3 {
        let ts = generate(&GenParams { seed: params.seed.wrapping_add(s), ..*params });
        let dag = build_dag(&ts).expect("generated workloads are well-formed");
        total += stats(&dag, &ts).f_v;
    }
    total / 3.0
}

/// Bisects `share_prob` until the mean vertex-sharing factor over three seeds
/// hits `target_f_v` as closely as the workload family allows.
pub fn calibrate_share_prob(params: &GenParams, target_f_v: f64) -> Calibration {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        let f_v = mean_f_v(&GenParams { share_prob: mid, ..*params });
        if f_v < target_f_v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let share_prob = 0.5 * (lo + hi);
    Calibration {
        share_prob,
        achieved_f_v: mean_f_v(&GenParams { share_prob, ..*params }),
    }
}
