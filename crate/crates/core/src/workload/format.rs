//! Workload and schedule file formats.
//!
//! The text workload format is line-oriented; `#` starts a comment anywhere
//! on a line and blank lines are skipped:
//!
//! ```text
//! node <id> <size> <cost>
//! tree <tid> : <root>
//! edge <tid> <child> <parent>
//! ```
//!
//! A tree must be declared before its edges and tree ids must be dense from
//! zero. [`emit_workload`] writes the canonical form — nodes ascending, then
//! each tree followed by its sorted edges — so equal workloads emit identical
//! bytes and `parse` inverts `emit`. A JSON mirror of the same data and a
//! plain-text schedule format (one contraction id per line under an
//! `# algo=<label> seed=<n>` header) round-trip the same way.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dag::{NodeDecl, NodeId, Tree, TreeSet};
use crate::memory::Schedule;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("expected `{expected}`")]
    Malformed { expected: &'static str },
    #[error("invalid integer `{0}`")]
    BadInteger(String),
    #[error("node {0} declared twice")]
    DuplicateNode(NodeId),
    #[error("tree {0} declared twice")]
    DuplicateTree(usize),
    #[error("edge references tree {0} before its declaration")]
    EdgeBeforeTree(usize),
    #[error("tree ids must be dense from 0, found {found} trees with max id {max_id}")]
    NonDenseTreeIds { found: usize, max_id: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

fn err(line: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, kind }
}

fn int<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, ParseError> {
    tok.parse().map_err(|_| err(line, ParseErrorKind::BadInteger(tok.to_string())))
}

/// Parses the text workload format. Syntax and tree-id checks happen here;
/// structural checks (dense node ids, acyclicity, root degrees) happen when
/// the workload is built into a DAG.
pub fn parse_workload(input: &str) -> Result<TreeSet, ParseError> {
    let mut nodes: Vec<NodeDecl> = Vec::new();
    let mut trees: Vec<(usize, NodeId, Vec<(NodeId, NodeId)>)> = Vec::new();
    let mut seen_nodes = std::collections::BTreeSet::new();

    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        match toks[0] {
            "node" => {
                let [_, id, size, cost] = toks[..] else {
                    return Err(err(line, ParseErrorKind::Malformed {
                        expected: "node <id> <size> <cost>",
                    }));
                };
                let id = NodeId(int(id, line)?);
                if !seen_nodes.insert(id) {
                    return Err(err(line, ParseErrorKind::DuplicateNode(id)));
                }
                nodes.push(NodeDecl { id, size: int(size, line)?, cost: int(cost, line)? });
            }
            "tree" => {
                let [_, tid, ":", root] = toks[..] else {
                    return Err(err(line, ParseErrorKind::Malformed {
                        expected: "tree <tid> : <root>",
                    }));
                };
                let tid: usize = int(tid, line)?;
                if trees.iter().any(|t| t.0 == tid) {
                    return Err(err(line, ParseErrorKind::DuplicateTree(tid)));
                }
                trees.push((tid, NodeId(int(root, line)?), Vec::new()));
            }
            "edge" => {
                let [_, tid, child, parent] = toks[..] else {
                    return Err(err(line, ParseErrorKind::Malformed {
                        expected: "edge <tid> <child> <parent>",
                    }));
                };
                let tid: usize = int(tid, line)?;
                let Some(tree) = trees.iter_mut().find(|t| t.0 == tid) else {
                    return Err(err(line, ParseErrorKind::EdgeBeforeTree(tid)));
                };
                tree.2.push((NodeId(int(child, line)?), NodeId(int(parent, line)?)));
            }
            other => {
                return Err(err(line, ParseErrorKind::UnknownDirective(other.to_string())));
            }
        }
    }

    let max_id = trees.iter().map(|t| t.0).max();
    if let Some(max_id) = max_id {
        if max_id + 1 != trees.len() {
            return Err(err(
                input.lines().count(),
                ParseErrorKind::NonDenseTreeIds { found: trees.len(), max_id },
            ));
        }
    }
    nodes.sort_unstable_by_key(|n| n.id);
    trees.sort_unstable_by_key(|t| t.0);
    let trees = trees.into_iter().map(|(tid, root, edges)| Tree::new(tid, root, edges)).collect();
    Ok(TreeSet { nodes, trees })
}

/// Writes the canonical text form; [`parse_workload`] inverts it exactly.
pub fn emit_workload(ts: &TreeSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} nodes, {} trees", ts.nodes.len(), ts.trees.len());
    let mut nodes = ts.nodes.clone();
    nodes.sort_unstable_by_key(|n| n.id);
    for n in &nodes {
        let _ = writeln!(out, "node {} {} {}", n.id, n.size, n.cost);
    }
    for t in &ts.trees {
        let _ = writeln!(out, "tree {} : {}", t.id, t.root);
        for (c, p) in &t.edges {
            let _ = writeln!(out, "edge {} {} {}", t.id, c, p);
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonTree {
    id: usize,
    root: NodeId,
    edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonWorkload {
    nodes: Vec<NodeDecl>,
    trees: Vec<JsonTree>,
}

/// JSON mirror of the text format, same canonical ordering.
pub fn to_json(ts: &TreeSet) -> String {
    let mut nodes = ts.nodes.clone();
    nodes.sort_unstable_by_key(|n| n.id);
    let doc = JsonWorkload {
        nodes,
        trees: ts
            .trees
            .iter()
            .map(|t| JsonTree { id: t.id, root: t.root, edges: t.edges.clone() })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("workload serialization cannot fail")
}

pub fn from_json(input: &str) -> Result<TreeSet, serde_json::Error> {
    let doc: JsonWorkload = serde_json::from_str(input)?;
    let mut nodes = doc.nodes;
    nodes.sort_unstable_by_key(|n| n.id);
    let mut trees: Vec<JsonTree> = doc.trees;
    trees.sort_unstable_by_key(|t| t.id);
    Ok(TreeSet {
        nodes,
        trees: trees.into_iter().map(|t| Tree::new(t.id, t.root, t.edges)).collect(),
    })
}

/// Writes a schedule as one contraction id per line under a header carrying
/// the producing algorithm and seed.
pub fn emit_schedule(schedule: &Schedule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# algo={} seed={}", schedule.algo, schedule.seed);
    for id in &schedule.order {
        let _ = writeln!(out, "{id}");
    }
    out
}

/// Parses a schedule file. The `# algo=<label> seed=<n>` header is restored
/// into the schedule when present; other comments are skipped.
pub fn parse_schedule(input: &str) -> Result<Schedule, ParseError> {
    let mut algo = String::from("unknown");
    let mut seed = 0u64;
    let mut order = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        if let Some(comment) = raw.trim_start().strip_prefix('#') {
            let toks: Vec<&str> = comment.split_whitespace().collect();
            if !saw_header {
                if let [a, s] = toks[..] {
                    if let (Some(a), Some(s)) =
                        (a.strip_prefix("algo="), s.strip_prefix("seed="))
                    {
                        algo = a.to_string();
                        seed = int(s, line)?;
                        saw_header = true;
                    }
                }
            }
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        match toks[..] {
            [] => continue,
            [id] => order.push(NodeId(int(id, line)?)),
            _ => {
                return Err(err(line, ParseErrorKind::Malformed {
                    expected: "one contraction id per line",
                }))
            }
        }
    }
    Ok(Schedule::new(order, algo, seed))
}
