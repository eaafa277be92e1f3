//! Contraction DAGs merged from rooted contraction trees.
//!
//! Each tree describes one correlation term: leaves are input tensors, interior
//! nodes are pairwise contractions, and the root is the term's output. Trees
//! share nodes by declaring the same global id, so the merged structure is a
//! DAG in which an edge `(u, v)` means contraction `v` consumes tensor `u`.

use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::fmt;

/// Global tensor/contraction identifier, dense in `0..|V|` within a DAG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a tree within a [`TreeSet`].
pub type TreeId = usize;

/// Role of a node in the merged DAG, assigned from its degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Input tensor: no children. Lives in host memory and is loaded on demand.
    Leaf,
    /// Contraction whose output feeds other contractions.
    Interior,
    /// Contraction with no dependents; its output leaves residency immediately.
    Root,
}

/// A node's size/cost declaration, shared by every tree that uses the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub id: NodeId,
    /// Tensor size in abstract memory units; must be >= 1.
    pub size: u64,
    /// Abstract cost of producing the node (0 for leaves).
    pub cost: u64,
}

/// One rooted contraction tree over shared nodes.
///
/// `edges` hold `(child, parent)` pairs oriented toward the root; `members` is
/// the sorted union of edge endpoints and the root. Both are canonicalized by
/// [`Tree::new`], so structural equality compares trees independent of input
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub id: TreeId,
    pub root: NodeId,
    pub members: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
}

impl Tree {
    /// Builds a tree with sorted, deduplicated members and edges.
    pub fn new(id: TreeId, root: NodeId, mut edges: Vec<(NodeId, NodeId)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let mut members: Vec<NodeId> = edges.iter().flat_map(|&(c, p)| [c, p]).collect();
        members.push(root);
        members.sort_unstable();
        members.dedup();
        Tree { id, root, members, edges }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.members.binary_search(&node).is_ok()
    }
}

/// A workload: node declarations plus the trees that reference them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TreeSet {
    pub nodes: Vec<NodeDecl>,
    pub trees: Vec<Tree>,
}

impl TreeSet {
    /// Number of trees.
    pub fn k(&self) -> usize {
        self.trees.len()
    }

    /// For each node id in `0..num_nodes`, the sorted list of trees containing it.
    pub fn memberships(&self, num_nodes: usize) -> Vec<Vec<TreeId>> {
        let mut out = vec![Vec::new(); num_nodes];
        for tree in &self.trees {
            for &m in &tree.members {
                out[m.index()].push(tree.id);
            }
        }
        out
    }
}

/// A merged node with adjacency in both directions (sorted ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub size: u64,
    pub cost: u64,
    pub children: Vec<NodeId>,
    pub parents: Vec<NodeId>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.kind == NodeKind::Leaf
    }
}

/// The merged contraction DAG. Construct with [`build_dag`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractionDag {
    nodes: Vec<Node>,
    edge_count: usize,
}

impl ContractionDag {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    /// Ids of all non-leaf nodes, ascending.
    pub fn contractions(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.id)
    }

    pub fn contraction_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }
}

/// Summary statistics of a merged workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DagStats {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_trees: usize,
    /// Average number of trees a vertex belongs to.
    pub f_v: f64,
    /// Average number of trees an edge belongs to.
    pub f_e: f64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DagError {
    #[error("node {0} redeclared with conflicting size or cost")]
    InconsistentNode(NodeId),
    #[error("node {0} has zero size")]
    ZeroSize(NodeId),
    #[error("node ids must be dense: {declared} distinct ids but max id is {max_id}")]
    NonDenseIds { declared: usize, max_id: u32 },
    #[error("tree {tree} references undeclared node {node}")]
    UnknownNode { tree: TreeId, node: NodeId },
    #[error("tree {tree} has {count} parentless members; expected exactly one")]
    MultiRootTree { tree: TreeId, count: usize },
    #[error("tree {tree} declares root {declared} but its edges make {actual} the root")]
    WrongRoot { tree: TreeId, declared: NodeId, actual: NodeId },
    #[error("dependency cycle through node {0}")]
    CycleDetected(NodeId),
}

/// Merges a [`TreeSet`] into a [`ContractionDag`].
///
/// Edges from all trees are deduplicated; node kinds follow from merged
/// degrees. Fails on conflicting redeclarations, non-dense ids, references to
/// undeclared nodes, trees whose edges do not single out the declared root,
/// and cycles.
pub fn build_dag(trees: &TreeSet) -> Result<ContractionDag, DagError> {
    let mut decls: Vec<Option<NodeDecl>> = Vec::new();
    let mut declared = 0usize;
    let mut max_id = 0u32;
    for d in &trees.nodes {
        if d.size == 0 {
            return Err(DagError::ZeroSize(d.id));
        }
        let idx = d.id.index();
        max_id = max_id.max(d.id.0);
        if idx >= decls.len() {
            decls.resize(idx + 1, None);
        }
        match decls[idx] {
            None => {
                decls[idx] = Some(*d);
                declared += 1;
            }
            Some(prev) if prev == *d => {}
            Some(_) => return Err(DagError::InconsistentNode(d.id)),
        }
    }
    if declared != decls.len() {
        return Err(DagError::NonDenseIds { declared, max_id });
    }
    let n = declared;

    let mut nodes: Vec<Node> = decls
        .into_iter()
        .map(|d| {
            let d = d.unwrap();
            Node {
                id: d.id,
                kind: NodeKind::Leaf,
                size: d.size,
                cost: d.cost,
                children: Vec::new(),
                parents: Vec::new(),
            }
        })
        .collect();

    // Union of tree edges, deduplicated across (not within) trees; Tree::new
    // already deduplicated within each tree.
    let mut all_edges: Vec<(NodeId, NodeId)> = Vec::new();
    for tree in &trees.trees {
        for &m in tree.members.iter().chain(std::iter::once(&tree.root)) {
            if m.index() >= n {
                return Err(DagError::UnknownNode { tree: tree.id, node: m });
            }
        }
        // The unique member without an outgoing edge must be the declared root.
        let mut out_deg = vec![0usize; tree.members.len()];
        for &(c, _) in &tree.edges {
            let pos = tree.members.binary_search(&c).unwrap();
            out_deg[pos] += 1;
        }
        let parentless: Vec<NodeId> = tree
            .members
            .iter()
            .zip(&out_deg)
            .filter(|&(_, &d)| d == 0)
            .map(|(&m, _)| m)
            .collect();
        match parentless.as_slice() {
            [only] if *only == tree.root => {}
            [only] => {
                return Err(DagError::WrongRoot {
                    tree: tree.id,
                    declared: tree.root,
                    actual: *only,
                })
            }
            other => {
                return Err(DagError::MultiRootTree { tree: tree.id, count: other.len() })
            }
        }
        all_edges.extend_from_slice(&tree.edges);
    }
    all_edges.sort_unstable();
    all_edges.dedup();

    for &(c, p) in &all_edges {
        nodes[p.index()].children.push(c);
        nodes[c.index()].parents.push(p);
    }
    for node in &mut nodes {
        node.children.sort_unstable();
        node.parents.sort_unstable();
        node.kind = match (node.children.is_empty(), node.parents.is_empty()) {
            (true, _) => NodeKind::Leaf,
            (false, true) => NodeKind::Root,
            (false, false) => NodeKind::Interior,
        };
    }

    let dag = ContractionDag { nodes, edge_count: all_edges.len() };
    // Surfaces cycles; a valid topological order exists for everything we return.
    topo_order_checked(&dag)?;
    Ok(dag)
}

/// Deterministic topological order: every node precedes its parents, ties
/// broken by ascending id.
pub fn topo_order(dag: &ContractionDag) -> Vec<NodeId> {
    topo_order_checked(dag).expect("ContractionDag is acyclic by construction")
}

fn topo_order_checked(dag: &ContractionDag) -> Result<Vec<NodeId>, DagError> {
    let mut pending = vec![0usize; dag.len()];
    let mut ready = BinaryHeap::new();
    for node in dag.nodes() {
        pending[node.id.index()] = node.children.len();
        if node.children.is_empty() {
            ready.push(std::cmp::Reverse(node.id));
        }
    }
    let mut order = Vec::with_capacity(dag.len());
    while let Some(std::cmp::Reverse(id)) = ready.pop() {
        order.push(id);
        for &p in &dag.node(id).parents {
            pending[p.index()] -= 1;
            if pending[p.index()] == 0 {
                ready.push(std::cmp::Reverse(p));
            }
        }
    }
    if order.len() != dag.len() {
        let stuck = pending
            .iter()
            .enumerate()
            .find(|&(i, &d)| d > 0 && !dag.nodes[i].children.is_empty())
            .map(|(i, _)| NodeId(i as u32))
            .unwrap_or(NodeId(0));
        return Err(DagError::CycleDetected(stuck));
    }
    Ok(order)
}

/// A structural defect reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("expected {expected} root nodes (one per tree), found {found}")]
    RootCount { expected: usize, found: usize },
    #[error("root {node} of tree {tree} also appears in tree {other}")]
    SharedRoot { node: NodeId, tree: TreeId, other: TreeId },
    #[error("tree {tree} root {node} is not a root node of the merged DAG")]
    RootKind { tree: TreeId, node: NodeId },
    #[error("node {node} has no children and no parents")]
    IsolatedNode { node: NodeId },
    #[error("tree {tree} member {node} is unreachable from the root")]
    DisconnectedMember { tree: TreeId, node: NodeId },
    #[error("tree {tree} member {node} has {count} parents inside the tree")]
    MemberWithManyParents { tree: TreeId, node: NodeId, count: usize },
    #[error("tree {tree} member {node} is missing its input edge from {child}")]
    MissingChildEdge { tree: TreeId, node: NodeId, child: NodeId },
}

/// Checks structural invariants of a merged DAG against its source trees.
///
/// Empty report means: the DAG has exactly one root per tree, roots are
/// unshared, no node is isolated, and every tree is a connected contraction
/// tree (each member's inputs are members, reached through in-tree edges).
pub fn validate(dag: &ContractionDag, trees: &TreeSet) -> Vec<Violation> {
    let mut report = Vec::new();

    let roots = dag.nodes().filter(|n| n.kind == NodeKind::Root).count();
    if roots != trees.k() {
        report.push(Violation::RootCount { expected: trees.k(), found: roots });
    }
    for node in dag.nodes() {
        if node.children.is_empty() && node.parents.is_empty() {
            report.push(Violation::IsolatedNode { node: node.id });
        }
    }

    let mut root_owner: Vec<Option<TreeId>> = vec![None; dag.len()];
    for tree in &trees.trees {
        if dag.node(tree.root).kind != NodeKind::Root {
            report.push(Violation::RootKind { tree: tree.id, node: tree.root });
        }
        for other in &trees.trees {
            if other.id != tree.id && other.contains(tree.root) {
                report.push(Violation::SharedRoot {
                    node: tree.root,
                    tree: tree.id,
                    other: other.id,
                });
            }
        }
        match root_owner[tree.root.index()] {
            None => root_owner[tree.root.index()] = Some(tree.id),
            Some(_) => {} // duplicate root declaration already caught as SharedRoot
        }

        // Orientation: each non-root member has exactly one in-tree parent.
        let mut tree_parent: Vec<Vec<NodeId>> = vec![Vec::new(); tree.members.len()];
        let mut tree_children: Vec<Vec<NodeId>> = vec![Vec::new(); tree.members.len()];
        let member_pos = |m: NodeId| tree.members.binary_search(&m).unwrap();
        for &(c, p) in &tree.edges {
            tree_parent[member_pos(c)].push(p);
            tree_children[member_pos(p)].push(c);
        }
        for (pos, &m) in tree.members.iter().enumerate() {
            let count = tree_parent[pos].len();
            if m != tree.root && count != 1 {
                if count > 1 {
                    report.push(Violation::MemberWithManyParents { tree: tree.id, node: m, count });
                } else {
                    report.push(Violation::DisconnectedMember { tree: tree.id, node: m });
                }
            }
        }

        // Reachability from the root through in-tree edges.
        let mut seen = vec![false; tree.members.len()];
        let mut stack = vec![tree.root];
        seen[member_pos(tree.root)] = true;
        while let Some(u) = stack.pop() {
            for &c in &tree_children[member_pos(u)] {
                let pos = member_pos(c);
                if !seen[pos] {
                    seen[pos] = true;
                    stack.push(c);
                }
            }
        }
        for (pos, &m) in tree.members.iter().enumerate() {
            if !seen[pos] && m != tree.root {
                // Skip members already reported as disconnected above.
                if !tree_parent[pos].is_empty()
                    && !report.iter().any(|v| {
                        matches!(v, Violation::DisconnectedMember { tree: t, node } if *t == tree.id && *node == m)
                    })
                {
                    report.push(Violation::DisconnectedMember { tree: tree.id, node: m });
                }
            }
        }

        // Contraction completeness: a member's inputs are in-tree children.
        for (pos, &m) in tree.members.iter().enumerate() {
            let node = dag.node(m);
            if node.is_leaf() {
                continue;
            }
            for &c in &node.children {
                if !tree_children[pos].contains(&c) {
                    report.push(Violation::MissingChildEdge { tree: tree.id, node: m, child: c });
                }
            }
        }
    }
    report
}

/// Computes vertex/edge counts and the average tree-membership frequencies.
pub fn stats(dag: &ContractionDag, trees: &TreeSet) -> DagStats {
    let vertex_memberships: u64 = trees.trees.iter().map(|t| t.members.len() as u64).sum();
    let edge_memberships: u64 = trees.trees.iter().map(|t| t.edges.len() as u64).sum();
    let v = dag.len().max(1) as f64;
    let e = dag.edge_count().max(1) as f64;
    DagStats {
        num_vertices: dag.len(),
        num_edges: dag.edge_count(),
        num_trees: trees.k(),
        f_v: vertex_memberships as f64 / v,
        f_e: edge_memberships as f64 / e,
    }
}
