//! Hand-built workloads with known schedules and residency traces.

use crate::dag::{NodeDecl, NodeId, Tree, TreeSet};

pub const A: NodeId = NodeId(0);
pub const B: NodeId = NodeId(1);
pub const L: NodeId = NodeId(2);
pub const M: NodeId = NodeId(3);
pub const E: NodeId = NodeId(4);
pub const F: NodeId = NodeId(5);
pub const G: NodeId = NodeId(6);
pub const H: NodeId = NodeId(7);

/// Three unit-size trees over 8 nodes with heavy sharing.
///
/// Leaves `a, b, l, m`; interior `e = (b, l)`; roots `g = (e, a)`,
/// `h = (e, m)`, `f = (a, b)`. The interior `e` and the leaves `a` and `b`
/// each serve two or three trees, so tree order changes both the peak and the
/// full residency trace:
///
/// * `[e, g, h, f]` -> residency `[0, 2, 3, 2, 0]`, peak 3
/// * `[f, e, g, h]` -> residency `[0, 2, 2, 1, 0]`, peak 2 (optimal)
pub fn shared_triple() -> TreeSet {
    let nodes = (0..8)
        .map(|i| NodeDecl { id: NodeId(i), size: 1, cost: if i < 4 { 0 } else { 1 } })
        .collect();
    let trees = vec![
        Tree::new(0, G, vec![(B, E), (L, E), (E, G), (A, G)]),
        Tree::new(1, H, vec![(B, E), (L, E), (E, H), (M, H)]),
        Tree::new(2, F, vec![(A, F), (B, F)]),
    ];
    TreeSet { nodes, trees }
}

/// Single binary tree over distinct unit leaves: root contracts two interiors,
/// each over two leaves. No sharing, so any scheduler must emit a post-order.
pub fn lone_tree() -> TreeSet {
    let nodes = (0..7)
        .map(|i| NodeDecl { id: NodeId(i), size: 1, cost: if i < 4 { 0 } else { 1 } })
        .collect();
    // 4 = (0, 1), 5 = (2, 3), 6 = (4, 5)
    let trees = vec![Tree::new(
        0,
        NodeId(6),
        vec![
            (NodeId(0), NodeId(4)),
            (NodeId(1), NodeId(4)),
            (NodeId(2), NodeId(5)),
            (NodeId(3), NodeId(5)),
            (NodeId(4), NodeId(6)),
            (NodeId(5), NodeId(6)),
        ],
    )];
    TreeSet { nodes, trees }
}

/// Two disjoint trees, each a root over two leaves. Useful for checking that
/// schedulers do not interleave unrelated trees.
pub fn disjoint_pair() -> TreeSet {
    let nodes = (0..6)
        .map(|i| NodeDecl { id: NodeId(i), size: 1, cost: if i < 4 { 0 } else { 1 } })
        .collect();
    let trees = vec![
        Tree::new(0, NodeId(4), vec![(NodeId(0), NodeId(4)), (NodeId(1), NodeId(4))]),
        Tree::new(1, NodeId(5), vec![(NodeId(2), NodeId(5)), (NodeId(3), NodeId(5))]),
    ];
    TreeSet { nodes, trees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::{build_dag, validate};

    #[test]
    fn fixtures_validate_cleanly() {
        for ts in [shared_triple(), lone_tree(), disjoint_pair()] {
            let dag = build_dag(&ts).unwrap();
            assert!(validate(&dag, &ts).is_empty());
        }
    }

    #[test]
    fn shared_triple_shares_across_trees() {
        let ts = shared_triple();
        let in_trees = |n: NodeId| ts.trees.iter().filter(|t| t.contains(n)).count();
        assert_eq!(in_trees(A), 2);
        assert_eq!(in_trees(B), 3);
        assert_eq!(in_trees(E), 2);
    }
}
