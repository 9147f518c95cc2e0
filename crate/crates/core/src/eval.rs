//! Centralized evaluation: the recursive procedure `qe` over a taxonomy
//! graph, and an independent closure-based oracle.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::bgraph::{taxonomy_graph, BGraph, NodeId};
use crate::model::{
    index_of, reduce_to_term_query, AnswerSet, Interpretation, ModelError, ObjectId, Query, Source, TermId,
    Vocabulary,
};

/// One recorded call of `qe`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceCall {
    pub term: TermId,
    /// Terms on the path from the root, in path order.
    pub visited: Vec<TermId>,
    /// Some incoming edge was skipped because its tail meets `visited`.
    pub pruned: bool,
    /// Child call indices, one group per eligible edge.
    pub parts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalTrace {
    pub calls: Vec<TraceCall>,
    /// Unions and intersections performed.
    pub set_ops: u64,
}

impl EvalTrace {
    /// Calls in breadth-first order of the call tree.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.calls.len());
        if self.calls.is_empty() {
            return order;
        }
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            queue.extend(self.calls[i].parts.iter().flatten().copied());
        }
        order
    }

    /// Distinct terms touched by any call.
    pub fn visited_terms(&self) -> BTreeSet<TermId> {
        self.calls.iter().map(|c| c.term).collect()
    }

    /// A `Call | Result` table, one row per call in breadth-first order;
    /// calls that skipped an edge end with ` ★`.
    pub fn render_table(&self, vocab: &Vocabulary) -> String {
        let call = |c: &TraceCall| {
            let v: Vec<String> = c.visited.iter().map(|t| vocab.display(*t)).collect();
            format!("QE({},{{{}}})", vocab.display(c.term), v.join(","))
        };
        let mut out = String::from("Call | Result\n");
        for i in self.bfs_order() {
            let c = &self.calls[i];
            let mut result = format!("I({})", vocab.display(c.term));
            for part in &c.parts {
                let calls: Vec<String> = part.iter().map(|&j| call(&self.calls[j])).collect();
                if calls.len() == 1 {
                    let _ = write!(result, " ∪ {}", calls[0]);
                } else {
                    let _ = write!(result, " ∪ ({})", calls.join(" ∩ "));
                }
            }
            if c.pruned {
                result.push_str(" ★");
            }
            let _ = writeln!(out, "{} | {}", call(c), result);
        }
        out
    }
}

/// `R = I(x) ∪ ⋃ over edges (U, x) with U ∩ visited = ∅ of ⋂_{u∈U} qe(u, visited ∪ {u})`.
///
/// `visited` must contain `x`. Edges and tail terms are taken in the graph's
/// canonical order, so traces are reproducible.
pub fn qe(g: &BGraph, interp: &Interpretation, x: TermId, visited: &[TermId], trace: Option<&mut EvalTrace>) -> AnswerSet {
    debug_assert!(visited.contains(&x));
    let mut scratch = EvalTrace::default();
    let trace = trace.unwrap_or(&mut scratch);
    let mut path = visited.to_vec();
    qe_rec(g, interp, x, &mut path, trace)
}

fn qe_rec(g: &BGraph, interp: &Interpretation, x: TermId, path: &mut Vec<TermId>, trace: &mut EvalTrace) -> AnswerSet {
    let me = trace.calls.len();
    trace.calls.push(TraceCall { term: x, visited: path.clone(), pruned: false, parts: Vec::new() });
    let mut r = interp.extent(x).clone();
    for e in g.incoming(NodeId::Term(x)) {
        let tail: Vec<TermId> = e
            .tail
            .iter()
            .filter_map(|n| match n {
                NodeId::Term(t) => Some(*t),
                NodeId::True => None,
            })
            .collect();
        if tail.iter().any(|u| path.contains(u)) {
            trace.calls[me].pruned = true;
            continue;
        }
        let mut group = Vec::with_capacity(tail.len());
        let mut acc: Option<AnswerSet> = None;
        for u in tail {
            group.push(trace.calls.len());
            path.push(u);
            let sub = qe_rec(g, interp, u, path, trace);
            path.pop();
            acc = Some(match acc {
                None => sub,
                Some(a) => {
                    trace.set_ops += 1;
                    a.intersection(&sub)
                }
            });
        }
        trace.calls[me].parts.push(group);
        trace.set_ops += 1;
        r.union_with(&acc.expect("tails are non-empty"));
    }
    r
}

/// Least fixpoint of `ind(o)` under the rules `t1 ∧ … ∧ tm → u` of the
/// source's pairs and articulations. Naive iteration; independent of the
/// graph code on purpose.
pub fn closure(source: &Source, o: ObjectId) -> BTreeSet<TermId> {
    let mut set = index_of(source, o);
    loop {
        let mut changed = false;
        for p in source.all_pairs() {
            if !set.contains(&p.head) && p.tail.terms().iter().all(|t| set.contains(t)) {
                set.insert(p.head);
                changed = true;
            }
        }
        if !changed {
            return set;
        }
    }
}

fn check_terms(source: &Source, q: &Query) -> Result<(), ModelError> {
    match q.terms().into_iter().find(|t| !source.owns(*t)) {
        Some(term) => Err(ModelError::UnknownTerm { term, source_id: source.id }),
        None => Ok(()),
    }
}

/// The certain answer of `q`: reduce to a term query, then run `qe` from the
/// fresh term.
pub fn answer(source: &Source, q: &Query) -> Result<AnswerSet, ModelError> {
    answer_traced(source, q, None)
}

pub fn answer_traced(source: &Source, q: &Query, trace: Option<&mut EvalTrace>) -> Result<AnswerSet, ModelError> {
    check_terms(source, q)?;
    let overlay = reduce_to_term_query(source, q);
    let g = taxonomy_graph(overlay.pairs(), source.terms().chain([overlay.fresh]));
    Ok(qe(&g, &source.interpretation, overlay.fresh, &[overlay.fresh], trace))
}

/// `{o | some disjunct of q lies inside closure(source, o)}`.
pub fn answer_oracle(source: &Source, q: &Query) -> AnswerSet {
    source
        .interpretation
        .objects()
        .iter()
        .filter(|&o| {
            let cl = closure(source, o);
            q.disjuncts().iter().any(|d| d.terms().iter().all(|t| cl.contains(t)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgraph::{object_graph, source_graph};
    use crate::model::{parse_query, samples, ConjunctiveQuery, SourceId, SubsumptionPair};
    use proptest::prelude::*;

    fn t(s: &Source, n: &str) -> TermId {
        s.vocabulary.resolve(n).unwrap()
    }

    #[test]
    fn base_case() {
        let mut s = Source::new(SourceId(0), "s");
        let x = s.add_term("x");
        s.index(ObjectId(1), x).unwrap();
        let g = source_graph(&s);
        assert_eq!(qe(&g, &s.interpretation, x, &[x], None), [ObjectId(1)].into_iter().collect());
    }

    #[test]
    fn example_answers() {
        let s = samples::example_source();
        let g = source_graph(&s);
        let a2 = t(&s, "a2");
        let o: AnswerSet = [ObjectId(1)].into_iter().collect();
        assert_eq!(qe(&g, &s.interpretation, a2, &[a2], None), o);
        let q = |text: &str| parse_query(text, &s.vocabulary).unwrap();
        assert_eq!(answer(&s, &q("a2")).unwrap(), o);
        assert_eq!(answer_oracle(&s, &q("b1")), o);
        assert!(answer_oracle(&s, &q("a2 & a3")).is_empty());
        assert!(answer(&s, &q("a2 & a3")).unwrap().is_empty());
    }

    #[test]
    fn example_closures() {
        let mut s = samples::example_source();
        let names = |ns: &[&str], s: &Source| ns.iter().map(|n| t(s, n)).collect::<BTreeSet<_>>();
        assert_eq!(closure(&s, ObjectId(1)), names(&["c1", "c2", "c3", "b1", "b2", "a2", "a1"], &s));
        assert!(closure(&s, ObjectId(5)).is_empty());
        let b3 = t(&s, "b3");
        s.index(ObjectId(2), b3).unwrap();
        assert_eq!(closure(&s, ObjectId(2)), names(&["b3", "a2", "a1"], &s));
    }

    #[test]
    fn example_trace_has_two_pruned_calls() {
        let s = samples::example_source();
        let g = source_graph(&s);
        let a2 = t(&s, "a2");
        let mut tr = EvalTrace::default();
        qe(&g, &s.interpretation, a2, &[a2], Some(&mut tr));
        assert_eq!(tr.calls.len(), 11);
        let pruned: Vec<String> = tr
            .calls
            .iter()
            .filter(|c| c.pruned)
            .map(|c| c.visited.iter().map(|x| s.vocabulary.display(*x)).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(pruned, vec!["a2,b1,c2", "a2,b2,c2,b1"]);
    }

    #[test]
    fn unknown_term_is_an_error() {
        let s = samples::example_source();
        let q = Query::term(TermId::new(SourceId(9), 0));
        assert!(answer(&s, &q).is_err());
    }

    pub(crate) fn random_source() -> impl Strategy<Value = (Source, Query)> {
        let pairs = prop::collection::vec((prop::collection::btree_set(0u32..12, 1..=3), 0u32..12), 0..16);
        let index = prop::collection::vec((0u32..10, 0u32..12), 0..25);
        let query = prop::collection::vec(prop::collection::btree_set(0u32..12, 1..=3), 1..=3);
        (2u32..=12, pairs, index, query).prop_map(|(n, pairs, index, query)| {
            let mut s = Source::new(SourceId(0), "r");
            let ids: Vec<TermId> = (0..n).map(|i| s.add_term(format!("t{i}"))).collect();
            for (tail, head) in pairs {
                let tail = ConjunctiveQuery::new(tail.iter().map(|&i| ids[(i % n) as usize])).unwrap();
                s.add_pair(SubsumptionPair::new(tail, ids[(head % n) as usize])).unwrap();
            }
            for (o, term) in index {
                s.index(ObjectId(o), ids[(term % n) as usize]).unwrap();
            }
            let q = Query::new(
                query
                    .into_iter()
                    .map(|d| ConjunctiveQuery::new(d.iter().map(|&i| ids[(i % n) as usize])).unwrap())
                    .collect(),
            )
            .unwrap();
            (s, q)
        })
    }

    proptest! {
        #[test]
        fn answer_matches_oracle((s, q) in random_source()) {
            prop_assert_eq!(answer(&s, &q).unwrap(), answer_oracle(&s, &q));
        }

        #[test]
        fn closure_matches_marking((s, _q) in random_source(), o in 0u32..10) {
            let marked: BTreeSet<TermId> = object_graph(&s, ObjectId(o))
                .marked()
                .into_iter()
                .filter_map(|n| match n { NodeId::Term(t) => Some(t), NodeId::True => None })
                .collect();
            prop_assert_eq!(closure(&s, ObjectId(o)), marked);
        }

        #[test]
        fn enlarging_an_extent_never_shrinks((s, q) in random_source(), o in 0u32..10, k in 0usize..12) {
            let before = answer(&s, &q).unwrap();
            let mut s2 = s.clone();
            let terms: Vec<TermId> = s2.terms().collect();
            let term = terms[k % terms.len()];
            s2.index(ObjectId(o), term).unwrap();
            prop_assert!(before.is_subset(&answer(&s2, &q).unwrap()));
        }

        #[test]
        fn calls_follow_paths((s, q) in random_source()) {
            let mut tr = EvalTrace::default();
            answer_traced(&s, &q, Some(&mut tr)).unwrap();
            for c in &tr.calls {
                prop_assert_eq!(c.visited.last(), Some(&c.term));
                let distinct: BTreeSet<_> = c.visited.iter().collect();
                prop_assert_eq!(distinct.len(), c.visited.len());
                // Two edges sharing a tail term legitimately repeat a call, so
                // uniqueness holds per part only.
                for part in &c.parts {
                    let terms: BTreeSet<_> = part.iter().map(|&j| tr.calls[j].term).collect();
                    prop_assert_eq!(terms.len(), part.len());
                }
                for &j in c.parts.iter().flatten() {
                    prop_assert_eq!(&tr.calls[j].visited[..c.visited.len()], &c.visited[..]);
                    prop_assert_eq!(tr.calls[j].visited.len(), c.visited.len() + 1);
                }
            }
        }
    }
}
