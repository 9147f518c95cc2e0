use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnswerSet, ConjunctiveQuery, ObjectId, Query, SourceId, TermId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("head {head} of a subsumption is not in the terminology of {source_id}")]
    ForeignHead { head: TermId, source_id: SourceId },
    #[error("tail term {term} of a taxonomy pair is not local to {source_id}")]
    ForeignTail { term: TermId, source_id: SourceId },
    #[error("term {term} is not in the terminology of {source_id}")]
    UnknownTerm { term: TermId, source_id: SourceId },
    #[error("source {0} appears twice in the network")]
    DuplicateSource(SourceId),
    #[error("terminologies of {0} and {1} overlap")]
    OverlappingTerminologies(SourceId, SourceId),
}

/// A simplified subsumption `tail ⪯ head`: a conjunction subsumed by a term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubsumptionPair {
    pub tail: ConjunctiveQuery,
    pub head: TermId,
}

impl SubsumptionPair {
    pub fn new(tail: ConjunctiveQuery, head: TermId) -> Self {
        SubsumptionPair { tail, head }
    }
}

/// Splits DNF ⪯ conjunction subsumptions into (conjunction, term) pairs.
pub fn simplify<'a, I>(pairs: I) -> BTreeSet<SubsumptionPair>
where
    I: IntoIterator<Item = (&'a Query, &'a ConjunctiveQuery)>,
{
    let mut out = BTreeSet::new();
    for (lhs, rhs) in pairs {
        for c in lhs.disjuncts() {
            for t in rhs.terms() {
                out.insert(SubsumptionPair::new(c.clone(), *t));
            }
        }
    }
    out
}

/// A terminology with its simplified subsumption pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    terminology: BTreeSet<TermId>,
    pairs: BTreeSet<SubsumptionPair>,
}

impl Taxonomy {
    pub fn new(terminology: BTreeSet<TermId>) -> Self {
        Taxonomy { terminology, pairs: BTreeSet::new() }
    }

    pub fn terminology(&self) -> &BTreeSet<TermId> {
        &self.terminology
    }

    pub fn pairs(&self) -> &BTreeSet<SubsumptionPair> {
        &self.pairs
    }

    pub fn contains_term(&self, t: TermId) -> bool {
        self.terminology.contains(&t)
    }

    /// Adds a pair; the head must belong to the terminology.
    pub fn add_pair(&mut self, pair: SubsumptionPair) -> Result<bool, ModelError> {
        if !self.terminology.contains(&pair.head) {
            return Err(ModelError::ForeignHead { head: pair.head, source_id: pair.head.source });
        }
        Ok(self.pairs.insert(pair))
    }

    fn add_pair_unchecked(&mut self, pair: SubsumptionPair) {
        self.pairs.insert(pair);
    }
}

/// Term extents. Total over a terminology: a missing term has an empty extent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpretation {
    extents: BTreeMap<TermId, AnswerSet>,
}

static EMPTY: AnswerSet = AnswerSet::EMPTY;

impl Interpretation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extent(&self, t: TermId) -> &AnswerSet {
        self.extents.get(&t).unwrap_or(&EMPTY)
    }

    pub fn set_extent(&mut self, t: TermId, objs: AnswerSet) {
        if objs.is_empty() {
            self.extents.remove(&t);
        } else {
            self.extents.insert(t, objs);
        }
    }

    pub fn add(&mut self, t: TermId, o: ObjectId) {
        self.extents.entry(t).or_default().insert(o);
    }

    pub fn extents(&self) -> impl Iterator<Item = (TermId, &AnswerSet)> {
        self.extents.iter().map(|(t, s)| (*t, s))
    }

    pub fn objects(&self) -> AnswerSet {
        self.extents.values().flat_map(|s| s.iter()).collect()
    }

    pub fn merge(&mut self, other: &Interpretation) {
        for (t, s) in &other.extents {
            self.extents.entry(*t).or_default().union_with(s);
        }
    }
}

/// An (articulated) information source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub id: SourceId,
    pub name: String,
    pub vocabulary: Vocabulary,
    pub taxonomy: Taxonomy,
    pub interpretation: Interpretation,
    articulations: BTreeSet<SubsumptionPair>,
}

/// Id used for the source that merges a whole network.
pub const NETWORK_SOURCE_ID: SourceId = SourceId(u32::MAX);

impl Source {
    pub fn new(id: SourceId, name: impl Into<String>) -> Self {
        Source {
            id,
            name: name.into(),
            vocabulary: Vocabulary::new(),
            taxonomy: Taxonomy::default(),
            interpretation: Interpretation::new(),
            articulations: BTreeSet::new(),
        }
    }

    /// Adds a term named `name` and returns its id.
    pub fn add_term(&mut self, name: impl Into<String>) -> TermId {
        let id = TermId::new(self.id, self.taxonomy.terminology.len() as u32);
        self.taxonomy.terminology.insert(id);
        self.vocabulary.insert(name, id);
        id
    }

    pub fn terms(&self) -> impl Iterator<Item = TermId> + '_ {
        self.taxonomy.terminology.iter().copied()
    }

    pub fn owns(&self, t: TermId) -> bool {
        self.taxonomy.contains_term(t)
    }

    /// Adds a local subsumption pair: tail and head must be local terms.
    pub fn add_pair(&mut self, pair: SubsumptionPair) -> Result<bool, ModelError> {
        if let Some(term) = pair.tail.terms().iter().find(|t| !self.owns(**t)) {
            return Err(ModelError::ForeignTail { term: *term, source_id: self.id });
        }
        if !self.owns(pair.head) {
            return Err(ModelError::ForeignHead { head: pair.head, source_id: self.id });
        }
        Ok(self.taxonomy.add_pair(pair)?)
    }

    /// Adds an articulation: any tail, local head.
    pub fn add_articulation(&mut self, pair: SubsumptionPair) -> Result<bool, ModelError> {
        if !self.owns(pair.head) {
            return Err(ModelError::ForeignHead { head: pair.head, source_id: self.id });
        }
        Ok(self.articulations.insert(pair))
    }

    pub fn articulations(&self) -> &BTreeSet<SubsumptionPair> {
        &self.articulations
    }

    /// Taxonomy pairs followed by articulations.
    pub fn all_pairs(&self) -> impl Iterator<Item = &SubsumptionPair> {
        self.taxonomy.pairs().iter().chain(self.articulations.iter())
    }

    /// Assigns `o` to term `t`; `t` must be local.
    pub fn index(&mut self, o: ObjectId, t: TermId) -> Result<(), ModelError> {
        if !self.owns(t) {
            return Err(ModelError::UnknownTerm { term: t, source_id: self.id });
        }
        self.interpretation.add(t, o);
        Ok(())
    }

    pub fn extent(&self, t: TermId) -> &AnswerSet {
        self.interpretation.extent(t)
    }
}

/// The terms whose extent contains `o`.
pub fn index_of(source: &Source, o: ObjectId) -> BTreeSet<TermId> {
    source
        .interpretation
        .extents()
        .filter(|(_, s)| s.contains(o))
        .map(|(t, _)| t)
        .collect()
}

/// A source extended with a fresh term `t_q` subsuming every disjunct of a
/// query. The base source is borrowed, not copied.
#[derive(Debug, Clone)]
pub struct TermQueryOverlay<'a> {
    pub base: &'a Source,
    pub fresh: TermId,
    pub extra: Vec<SubsumptionPair>,
}

impl TermQueryOverlay<'_> {
    pub fn pairs(&self) -> impl Iterator<Item = &SubsumptionPair> {
        self.base.all_pairs().chain(self.extra.iter())
    }

    /// Copies the overlay into a standalone source.
    pub fn materialize(&self) -> Source {
        let mut s = self.base.clone();
        s.taxonomy.terminology.insert(self.fresh);
        s.vocabulary.insert("t", self.fresh);
        for p in &self.extra {
            s.taxonomy.add_pair_unchecked(p.clone());
        }
        s
    }
}

/// Reduces `q` to a term query on an overlay of `source`.
pub fn reduce_to_term_query<'a>(source: &'a Source, q: &Query) -> TermQueryOverlay<'a> {
    let fresh = TermId::fresh(source.id, 0);
    let extra = q.disjuncts().iter().map(|d| SubsumptionPair::new(d.clone(), fresh)).collect();
    TermQueryOverlay { base: source, fresh, extra }
}

/// A network of articulated sources with pairwise disjoint terminologies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    sources: BTreeMap<SourceId, Source>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, source: Source) -> Result<(), ModelError> {
        if self.sources.contains_key(&source.id) {
            return Err(ModelError::DuplicateSource(source.id));
        }
        for other in self.sources.values() {
            if other.taxonomy.terminology.intersection(&source.taxonomy.terminology).next().is_some() {
                return Err(ModelError::OverlappingTerminologies(other.id, source.id));
            }
        }
        self.sources.insert(source.id, source);
        Ok(())
    }

    pub fn get(&self, id: SourceId) -> Option<&Source> {
        self.sources.get(&id)
    }

    pub fn get_mut(&mut self, id: SourceId) -> Option<&mut Source> {
        self.sources.get_mut(&id)
    }

    pub fn sources(&self) -> impl Iterator<Item = &Source> {
        self.sources.values()
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let mut v = Vocabulary::new();
        for s in self.sources.values() {
            v.merge(&s.vocabulary);
        }
        v
    }

    pub fn terminology_size(&self) -> usize {
        self.sources.values().map(|s| s.taxonomy.terminology.len()).sum()
    }
}

/// Merges every source of `net` into one source: union of terminologies,
/// interpretations, taxonomies and articulations.
pub fn network_source(net: &Network) -> Source {
    let mut out = Source::new(NETWORK_SOURCE_ID, "network");
    for s in net.sources() {
        out.taxonomy.terminology.extend(s.taxonomy.terminology.iter().copied());
        out.vocabulary.merge(&s.vocabulary);
        out.interpretation.merge(&s.interpretation);
        for p in s.all_pairs() {
            out.taxonomy.add_pair_unchecked(p.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_query, ConjunctiveQuery};

    fn terms(s: &mut Source, names: &[&str]) -> Vec<TermId> {
        names.iter().map(|n| s.add_term(*n)).collect()
    }

    #[test]
    fn simplify_splits_both_sides() {
        let mut s = Source::new(SourceId(0), "s");
        let ids = terms(&mut s, &["a1", "a2", "b1", "b2", "b3", "c1"]);
        let v = &s.vocabulary;
        let lhs1 = parse_query("b1 & b2 | b3", v).unwrap();
        let rhs1 = ConjunctiveQuery::new([ids[0], ids[1]]).unwrap();
        let lhs2 = parse_query("a1 & a2", v).unwrap();
        let rhs2 = ConjunctiveQuery::single(ids[5]);
        let out = simplify([(&lhs1, &rhs1), (&lhs2, &rhs2)]);
        let c = |ts: &[usize]| ConjunctiveQuery::new(ts.iter().map(|&i| ids[i])).unwrap();
        let expected: BTreeSet<_> = [
            SubsumptionPair::new(c(&[2, 3]), ids[0]),
            SubsumptionPair::new(c(&[2, 3]), ids[1]),
            SubsumptionPair::new(c(&[4]), ids[0]),
            SubsumptionPair::new(c(&[4]), ids[1]),
            SubsumptionPair::new(c(&[0, 1]), ids[5]),
        ]
        .into_iter()
        .collect();
        assert_eq!(out, expected);
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn simplify_trivial_and_cross_product() {
        let mut s = Source::new(SourceId(0), "s");
        let ids = terms(&mut s, &["a", "b", "x", "y", "u", "v"]);
        let q = Query::term(ids[1]);
        let c = ConjunctiveQuery::single(ids[0]);
        assert_eq!(simplify([(&q, &c)]).len(), 1);

        let lhs = parse_query("x | y", &s.vocabulary).unwrap();
        let rhs = ConjunctiveQuery::new([ids[4], ids[5]]).unwrap();
        let out = simplify([(&lhs, &rhs)]);
        let heads_tails: BTreeSet<(TermId, TermId)> = out
            .iter()
            .map(|p| (*p.tail.terms().iter().next().unwrap(), p.head))
            .collect();
        let expected: BTreeSet<_> =
            [(ids[2], ids[4]), (ids[2], ids[5]), (ids[3], ids[4]), (ids[3], ids[5])].into();
        assert_eq!(heads_tails, expected);
    }

    #[test]
    fn simplify_is_idempotent_on_simple_pairs() {
        let mut s = Source::new(SourceId(0), "s");
        let ids = terms(&mut s, &["a", "b", "c"]);
        let once = simplify([
            (&Query::term(ids[0]), &ConjunctiveQuery::single(ids[1])),
            (&Query::conjunction(ConjunctiveQuery::new([ids[0], ids[1]]).unwrap()), &ConjunctiveQuery::single(ids[2])),
        ]);
        let as_queries: Vec<(Query, ConjunctiveQuery)> = once
            .iter()
            .map(|p| (Query::conjunction(p.tail.clone()), ConjunctiveQuery::single(p.head)))
            .collect();
        let twice = simplify(as_queries.iter().map(|(q, c)| (q, c)));
        assert_eq!(once, twice);
    }

    #[test]
    fn index_of_scans_extents() {
        let mut s = Source::new(SourceId(0), "s");
        let ids = terms(&mut s, &["c1", "c2", "c3", "d"]);
        let o = ObjectId(7);
        assert!(index_of(&s, o).is_empty());
        for t in &ids[..3] {
            s.index(o, *t).unwrap();
        }
        s.index(ObjectId(8), ids[3]).unwrap();
        assert_eq!(index_of(&s, o), ids[..3].iter().copied().collect());
    }

    #[test]
    fn reduction_is_an_overlay() {
        let mut s = Source::new(SourceId(0), "s");
        let ids = terms(&mut s, &["a2", "a3"]);
        let q = parse_query("a2 & a3", &s.vocabulary).unwrap();
        let before = s.clone();
        let ov = reduce_to_term_query(&s, &q);
        assert_eq!(ov.extra.len(), 1);
        assert_eq!(ov.extra[0].tail, ConjunctiveQuery::new([ids[0], ids[1]]).unwrap());
        assert!(ov.fresh.is_fresh());
        assert_eq!(*ov.base, before);
        let m = ov.materialize();
        assert!(m.owns(ov.fresh));
        assert!(m.extent(ov.fresh).is_empty());
    }

    #[test]
    fn invariants_enforced() {
        let mut a = Source::new(SourceId(0), "a");
        let mut b = Source::new(SourceId(1), "b");
        let ta = a.add_term("x");
        let tb = b.add_term("y");
        assert!(a.add_pair(SubsumptionPair::new(ConjunctiveQuery::single(tb), ta)).is_err());
        assert!(a.add_articulation(SubsumptionPair::new(ConjunctiveQuery::single(ta), tb)).is_err());
        assert!(a.add_articulation(SubsumptionPair::new(ConjunctiveQuery::single(tb), ta)).unwrap());
        let mut net = Network::new();
        net.add(a.clone()).unwrap();
        assert_eq!(net.add(a), Err(ModelError::DuplicateSource(SourceId(0))));
    }

    #[test]
    fn network_source_is_order_insensitive() {
        let mut a = Source::new(SourceId(0), "a");
        let mut b = Source::new(SourceId(1), "b");
        let ta = a.add_term("x");
        let tb = b.add_term("y");
        a.add_articulation(SubsumptionPair::new(ConjunctiveQuery::single(tb), ta)).unwrap();
        b.index(ObjectId(1), tb).unwrap();
        let mut n1 = Network::new();
        n1.add(a.clone()).unwrap();
        n1.add(b.clone()).unwrap();
        let mut n2 = Network::new();
        n2.add(b).unwrap();
        n2.add(a).unwrap();
        let s = network_source(&n1);
        assert_eq!(s, network_source(&n2));
        assert_eq!(s.taxonomy.pairs().len(), 1);
        assert_eq!(s.extent(tb).len(), 1);
    }
}
