//! Directed B-hypergraphs whose hyperedges have a single head.
//!
//! A taxonomy maps to one hyperedge per simplified pair. The object graph of
//! `o` adds an edge `({TRUE}, u)` for every term `u` indexing `o`; a term is
//! then in the answer for `o` iff it is B-connected to TRUE.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::model::{index_of, ObjectId, Source, SubsumptionPair, TermId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    True,
    Term(TermId),
}

impl From<TermId> for NodeId {
    fn from(t: TermId) -> Self {
        NodeId::Term(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hyperedge {
    /// Sorted, non-empty, duplicate-free.
    pub tail: Vec<NodeId>,
    pub head: NodeId,
}

impl Hyperedge {
    pub fn new(tail: impl IntoIterator<Item = NodeId>, head: NodeId) -> Self {
        let tail: BTreeSet<NodeId> = tail.into_iter().collect();
        assert!(!tail.is_empty(), "hyperedge tail must be non-empty");
        Hyperedge { tail: tail.into_iter().collect(), head }
    }

    fn sort_key(&self) -> (usize, &[NodeId], NodeId) {
        (self.tail.len(), &self.tail, self.head)
    }
}

impl From<&SubsumptionPair> for Hyperedge {
    fn from(p: &SubsumptionPair) -> Self {
        Hyperedge::new(p.tail.terms().iter().map(|t| NodeId::Term(*t)), NodeId::Term(p.head))
    }
}

/// Edges are kept in a canonical order: shorter tails first, then by tail,
/// then by head. Incoming lists follow the same order.
#[derive(Debug, Clone, Default)]
pub struct BGraph {
    nodes: BTreeSet<NodeId>,
    edges: Vec<Hyperedge>,
    incoming: HashMap<NodeId, Vec<usize>>,
    outgoing: HashMap<NodeId, Vec<usize>>,
}

impl BGraph {
    pub fn from_edges(nodes: impl IntoIterator<Item = NodeId>, edges: impl IntoIterator<Item = Hyperedge>) -> Self {
        let mut edges: Vec<Hyperedge> = edges.into_iter().collect();
        edges.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        edges.dedup();
        let mut nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let mut incoming: HashMap<NodeId, Vec<usize>> = HashMap::new();
        let mut outgoing: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            nodes.insert(e.head);
            incoming.entry(e.head).or_default().push(i);
            for u in &e.tail {
                nodes.insert(*u);
                outgoing.entry(*u).or_default().push(i);
            }
        }
        BGraph { nodes, edges, incoming, outgoing }
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn incoming(&self, n: NodeId) -> impl Iterator<Item = &Hyperedge> {
        self.incoming.get(&n).into_iter().flatten().map(|&i| &self.edges[i])
    }

    /// Every node B-connected to TRUE, computed by forward marking. Each edge
    /// fires at most once; the cost is linear in the total edge size.
    pub fn marked(&self) -> BTreeSet<NodeId> {
        let mut missing: Vec<usize> = self.edges.iter().map(|e| e.tail.len()).collect();
        let mut marked = BTreeSet::from([NodeId::True]);
        let mut stack = vec![NodeId::True];
        while let Some(n) = stack.pop() {
            for &i in self.outgoing.get(&n).into_iter().flatten() {
                missing[i] -= 1;
                if missing[i] == 0 && marked.insert(self.edges[i].head) {
                    stack.push(self.edges[i].head);
                }
            }
        }
        marked
    }

    pub fn to_dot(&self, vocab: &Vocabulary) -> String {
        let name = |n: &NodeId| match n {
            NodeId::True => "TRUE".to_string(),
            NodeId::Term(t) => vocab.display(*t),
        };
        let mut out = String::from("digraph bgraph {\n  rankdir=BT;\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{}\";", name(n));
        }
        for (i, e) in self.edges.iter().enumerate() {
            if let [u] = e.tail.as_slice() {
                let _ = writeln!(out, "  \"{}\" -> \"{}\";", name(u), name(&e.head));
            } else {
                let _ = writeln!(out, "  e{i} [shape=point];");
                for u in &e.tail {
                    let _ = writeln!(out, "  \"{}\" -> e{i} [arrowhead=none];", name(u));
                }
                let _ = writeln!(out, "  e{i} -> \"{}\";", name(&e.head));
            }
        }
        out.push_str("}\n");
        out
    }
}

pub fn taxonomy_graph<'a>(pairs: impl IntoIterator<Item = &'a SubsumptionPair>, terms: impl IntoIterator<Item = TermId>) -> BGraph {
    BGraph::from_edges(terms.into_iter().map(NodeId::Term), pairs.into_iter().map(Hyperedge::from))
}

/// The taxonomy graph of a source, articulations included.
pub fn source_graph(source: &Source) -> BGraph {
    taxonomy_graph(source.all_pairs(), source.terms())
}

pub fn object_graph(source: &Source, o: ObjectId) -> BGraph {
    let edges = source
        .all_pairs()
        .map(Hyperedge::from)
        .chain(index_of(source, o).into_iter().map(|u| Hyperedge::new([NodeId::True], NodeId::Term(u))));
    BGraph::from_edges(source.terms().map(NodeId::Term).chain([NodeId::True]), edges)
}

pub fn b_connected(g: &BGraph, target: NodeId) -> bool {
    target == NodeId::True || g.marked().contains(&target)
}

/// Counts cycle-free simple paths `from = x1, e1, x2, …, ek, x(k+1) = to` with
/// `xi` in the tail of `ei` and `x(i+1)` its head. Saturates at `bound`.
pub fn count_simple_paths(g: &BGraph, from: NodeId, to: NodeId, bound: u64) -> u64 {
    fn walk(g: &BGraph, at: NodeId, to: NodeId, on_path: &mut BTreeSet<NodeId>, count: &mut u64, bound: u64) {
        if *count >= bound {
            return;
        }
        if at == to {
            *count += 1;
            return;
        }
        for &i in g.outgoing.get(&at).into_iter().flatten() {
            let next = g.edges[i].head;
            if on_path.insert(next) {
                walk(g, next, to, on_path, count, bound);
                on_path.remove(&next);
            }
        }
    }
    if from == to || g.edges.is_empty() {
        return 0;
    }
    let mut count = 0;
    let mut on_path = BTreeSet::from([from]);
    walk(g, from, to, &mut on_path, &mut count, bound);
    count.min(bound)
}
