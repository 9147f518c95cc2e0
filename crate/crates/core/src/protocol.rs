//! Message vocabulary shared by every architecture: query ids, ask/tell
//! messages, query programs and rewrite trees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnswerSet, Query, SourceId, TermId, Vocabulary};

/// Virtual time in nanoseconds.
pub type Time = u64;

/// Identifier of a (sub)query: the source that created it and a serial
/// number unique within that source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueryId {
    pub origin: SourceId,
    pub serial: u64,
}

impl QueryId {
    pub fn new(origin: SourceId, serial: u64) -> Self {
        QueryId { origin, serial }
    }
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.serial)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("query {0} is not an open call of the program")]
    NotOpen(QueryId),
    #[error("the program still has {0} open calls")]
    StillOpen(usize),
    #[error("closed call carries a rewrite where an answer set was expected")]
    WrongPayload,
    #[error("rewrite syntax error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
}

/// A symbolic evaluation: unions and intersections over term leaves.
/// `Placeholder(n)` stands for the not yet substituted result of query `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewriteNode {
    Term(TermId),
    Placeholder(u64),
    Union(Vec<RewriteNode>),
    Inter(Vec<RewriteNode>),
}

impl RewriteNode {
    pub fn leaves(&self) -> BTreeSet<TermId> {
        let mut out = BTreeSet::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut BTreeSet<TermId>) {
        match self {
            RewriteNode::Term(t) => {
                out.insert(*t);
            }
            RewriteNode::Placeholder(_) => {}
            RewriteNode::Union(c) | RewriteNode::Inter(c) => c.iter().for_each(|n| n.collect_leaves(out)),
        }
    }

    /// Number of leaf occurrences, duplicates included.
    pub fn size(&self) -> usize {
        match self {
            RewriteNode::Term(_) | RewriteNode::Placeholder(_) => 1,
            RewriteNode::Union(c) | RewriteNode::Inter(c) => c.iter().map(RewriteNode::size).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RewriteNode::Term(_) | RewriteNode::Placeholder(_) => 1,
            RewriteNode::Union(c) | RewriteNode::Inter(c) => 1 + c.iter().map(RewriteNode::depth).max().unwrap_or(0),
        }
    }

    /// Replaces every placeholder for which `f` returns a tree.
    pub fn substitute(&self, f: &dyn Fn(u64) -> Option<RewriteNode>) -> RewriteNode {
        match self {
            RewriteNode::Placeholder(n) => f(*n).unwrap_or_else(|| self.clone()),
            RewriteNode::Term(_) => self.clone(),
            RewriteNode::Union(c) => RewriteNode::Union(c.iter().map(|n| n.substitute(f)).collect()),
            RewriteNode::Inter(c) => RewriteNode::Inter(c.iter().map(|n| n.substitute(f)).collect()),
        }
    }
}

/// Bottom-up set evaluation. Placeholders evaluate to the empty set.
pub fn evaluate_rewrite(root: &RewriteNode, lookup: &mut dyn FnMut(TermId) -> AnswerSet) -> AnswerSet {
    match root {
        RewriteNode::Term(t) => lookup(*t),
        RewriteNode::Placeholder(_) => AnswerSet::new(),
        RewriteNode::Union(c) => {
            let mut acc = AnswerSet::new();
            for n in c {
                acc.union_with(&evaluate_rewrite(n, lookup));
            }
            acc
        }
        RewriteNode::Inter(c) => {
            let mut iter = c.iter();
            let mut acc = match iter.next() {
                Some(n) => evaluate_rewrite(n, lookup),
                None => return AnswerSet::new(),
            };
            for n in iter {
                if acc.is_empty() {
                    break;
                }
                acc = acc.intersection(&evaluate_rewrite(n, lookup));
            }
            acc
        }
    }
}

/// Linear form of a rewrite. Compound nodes with several children are
/// infix (`a ∪ b`, `a ∩ b`) and parenthesized unless at top level; a
/// single-child compound node is written `∪(x)` or `∩(x)`.
pub fn linearize(root: &RewriteNode, vocab: &Vocabulary) -> String {
    linearize_with(root, &|t| vocab.display(t))
}

pub fn linearize_with(root: &RewriteNode, name: &dyn Fn(TermId) -> String) -> String {
    let mut out = String::new();
    write_node(root, name, true, &mut out);
    out
}

fn write_node(n: &RewriteNode, name: &dyn Fn(TermId) -> String, top: bool, out: &mut String) {
    match n {
        RewriteNode::Term(t) => out.push_str(&name(*t)),
        RewriteNode::Placeholder(k) => out.push_str(&format!("R({k})")),
        RewriteNode::Union(c) | RewriteNode::Inter(c) => {
            let op = if matches!(n, RewriteNode::Union(_)) { "∪" } else { "∩" };
            if c.len() == 1 {
                out.push_str(op);
                out.push('(');
                write_node(&c[0], name, true, out);
                out.push(')');
                return;
            }
            if !top {
                out.push('(');
            }
            for (i, child) in c.iter().enumerate() {
                if i > 0 {
                    out.push_str(&format!(" {op} "));
                }
                write_node(child, name, false, out);
            }
            if !top {
                out.push(')');
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Ident(&'a str),
    Placeholder(u64),
    Union,
    Inter,
    Open,
    Close,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok<'_>)>, ProtocolError> {
    let perr = |offset: usize, message: &str| ProtocolError::Parse { offset, message: message.to_string() };
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().expect("in bounds");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        match c {
            '∪' => out.push((i, Tok::Union)),
            '∩' => out.push((i, Tok::Inter)),
            '(' => out.push((i, Tok::Open)),
            ')' => out.push((i, Tok::Close)),
            c if c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | ':') => {
                let start = i;
                let end = text[i..]
                    .char_indices()
                    .find(|(_, c)| !(c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | ':')))
                    .map(|(p, _)| i + p)
                    .unwrap_or(text.len());
                let word = &text[start..end];
                if word == "R" && text[end..].starts_with('(') {
                    let close = text[end..].find(')').ok_or_else(|| perr(end, "unterminated placeholder"))? + end;
                    let n = text[end + 1..close].trim().parse::<u64>().map_err(|_| perr(end + 1, "bad placeholder number"))?;
                    out.push((start, Tok::Placeholder(n)));
                    i = close + 1;
                    continue;
                }
                out.push((start, Tok::Ident(word)));
                i = end;
                continue;
            }
            _ => return Err(perr(i, "unexpected character")),
        }
        i += c.len_utf8();
    }
    Ok(out)
}

struct RwParser<'a, 'f> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
    resolve: &'f dyn Fn(&str) -> Option<TermId>,
}

impl<'a> RwParser<'a, '_> {
    fn err(&self, message: &str) -> ProtocolError {
        let offset = self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end);
        ProtocolError::Parse { offset, message: message.to_string() }
    }

    fn peek(&self) -> Option<Tok<'a>> {
        self.toks.get(self.pos).map(|t| t.1)
    }

    fn expr(&mut self) -> Result<RewriteNode, ProtocolError> {
        let first = self.item()?;
        let op = match self.peek() {
            Some(Tok::Union) => Tok::Union,
            Some(Tok::Inter) => Tok::Inter,
            _ => return Ok(first),
        };
        let mut children = vec![first];
        while let Some(t) = self.peek() {
            if t == op {
                self.pos += 1;
                children.push(self.item()?);
            } else if matches!(t, Tok::Union | Tok::Inter) {
                return Err(self.err("mixed ∪ and ∩ need parentheses"));
            } else {
                break;
            }
        }
        Ok(if op == Tok::Union { RewriteNode::Union(children) } else { RewriteNode::Inter(children) })
    }

    fn item(&mut self) -> Result<RewriteNode, ProtocolError> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let t = (self.resolve)(name).ok_or_else(|| self.err("unknown term"))?;
                self.pos += 1;
                Ok(RewriteNode::Term(t))
            }
            Some(Tok::Placeholder(n)) => {
                self.pos += 1;
                Ok(RewriteNode::Placeholder(n))
            }
            Some(Tok::Open) => {
                self.pos += 1;
                let e = self.expr()?;
                self.close()?;
                Ok(e)
            }
            Some(op @ (Tok::Union | Tok::Inter)) => {
                self.pos += 1;
                if self.peek() != Some(Tok::Open) {
                    return Err(self.err("expected `(`"));
                }
                self.pos += 1;
                let e = self.expr()?;
                self.close()?;
                Ok(if op == Tok::Union { RewriteNode::Union(vec![e]) } else { RewriteNode::Inter(vec![e]) })
            }
            _ => Err(self.err("expected a term, a placeholder or `(`")),
        }
    }

    fn close(&mut self) -> Result<(), ProtocolError> {
        if self.peek() == Some(Tok::Close) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err("expected `)`"))
        }
    }
}

pub fn parse_rewrite(text: &str, vocab: &Vocabulary) -> Result<RewriteNode, ProtocolError> {
    parse_rewrite_with(text, &|n| vocab.resolve(n))
}

pub fn parse_rewrite_with(text: &str, resolve: &dyn Fn(&str) -> Option<TermId>) -> Result<RewriteNode, ProtocolError> {
    let toks = lex(text)?;
    let mut p = RwParser { toks, pos: 0, end: text.len(), resolve };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

/// Result carried by a closed call or a tell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    Answer(AnswerSet),
    Rewrite(RewriteNode),
}

impl Payload {
    pub fn as_answer(&self) -> Option<&AnswerSet> {
        match self {
            Payload::Answer(a) => Some(a),
            Payload::Rewrite(_) => None,
        }
    }

    pub fn as_rewrite(&self) -> Option<&RewriteNode> {
        match self {
            Payload::Rewrite(r) => Some(r),
            Payload::Answer(_) => None,
        }
    }
}

/// Tell content. `Epsilon` is the timeout marker: it stands for no
/// information and is never cached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TellPayload {
    Value(Payload),
    Epsilon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Call {
    Open(QueryId),
    Closed(QueryId, Payload),
}

impl Call {
    pub fn id(&self) -> QueryId {
        match self {
            Call::Open(id) | Call::Closed(id, _) => *id,
        }
    }
}

/// A set of sub-programs, one per expanded hyperedge; each sub-program holds
/// one call per tail term. Invariant: `open` counts the open calls.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryProgram {
    subs: Vec<Vec<Call>>,
    open: usize,
}

impl QueryProgram {
    pub fn new(subs: Vec<Vec<QueryId>>) -> Self {
        let open = subs.iter().map(Vec::len).sum();
        QueryProgram { subs: subs.into_iter().map(|s| s.into_iter().map(Call::Open).collect()).collect(), open }
    }

    pub fn subs(&self) -> &[Vec<Call>] {
        &self.subs
    }

    pub fn open_count(&self) -> usize {
        self.open
    }

    pub fn is_closed(&self) -> bool {
        self.open == 0
    }

    pub fn call_ids(&self) -> impl Iterator<Item = QueryId> + '_ {
        self.subs.iter().flatten().map(Call::id)
    }

    pub fn is_open(&self, id: QueryId) -> bool {
        self.subs.iter().flatten().any(|c| matches!(c, Call::Open(x) if *x == id))
    }

    /// Replaces the open call `id` by its result.
    pub fn close_call(&mut self, id: QueryId, payload: Payload) -> Result<(), ProtocolError> {
        for call in self.subs.iter_mut().flatten() {
            if matches!(call, Call::Open(x) if *x == id) {
                *call = Call::Closed(id, payload);
                self.open -= 1;
                return Ok(());
            }
        }
        Err(ProtocolError::NotOpen(id))
    }

    /// `⋃_i ⋂_j R_j^i` over a closed program of answer sets.
    pub fn compute_answer(&self) -> Result<AnswerSet, ProtocolError> {
        if self.open > 0 {
            return Err(ProtocolError::StillOpen(self.open));
        }
        let mut out = AnswerSet::new();
        for sub in &self.subs {
            let mut acc: Option<AnswerSet> = None;
            for call in sub {
                let Call::Closed(_, p) = call else { unreachable!("program is closed") };
                let r = p.as_answer().ok_or(ProtocolError::WrongPayload)?;
                acc = Some(match acc {
                    None => r.clone(),
                    Some(a) => a.intersection(r),
                });
            }
            if let Some(a) = acc {
                out.union_with(&a);
            }
        }
        Ok(out)
    }

    /// The rewrite tree of the program: one part per sub-program (the child
    /// itself or an intersection), joined by a union headed by `own` when
    /// given. Closed answer payloads and open calls become placeholders.
    pub fn compose_rewrite(&self, own: Option<TermId>) -> RewriteNode {
        self.compose(own, &|c| match c {
            Call::Closed(_, Payload::Rewrite(r)) => r.clone(),
            other => RewriteNode::Placeholder(other.id().serial),
        })
    }

    /// Like `compose_rewrite`, but every call is a placeholder.
    pub fn symbolic(&self, own: Option<TermId>) -> RewriteNode {
        self.compose(own, &|c| RewriteNode::Placeholder(c.id().serial))
    }

    fn compose(&self, own: Option<TermId>, leaf: &dyn Fn(&Call) -> RewriteNode) -> RewriteNode {
        let mut parts: Vec<RewriteNode> = own.map(RewriteNode::Term).into_iter().collect();
        for sub in &self.subs {
            let mut children: Vec<RewriteNode> = sub.iter().map(leaf).collect();
            parts.push(if children.len() == 1 { children.pop().expect("one child") } else { RewriteNode::Inter(children) });
        }
        if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            RewriteNode::Union(parts)
        }
    }

    /// `{{2},{3,R(4)}}`: open calls by serial, closed ones as `R(serial)`.
    pub fn render(&self) -> String {
        let subs: Vec<String> = self
            .subs
            .iter()
            .map(|s| {
                let calls: Vec<String> = s
                    .iter()
                    .map(|c| match c {
                        Call::Open(id) => id.serial.to_string(),
                        Call::Closed(id, _) => format!("R({})", id.serial),
                    })
                    .collect();
                format!("{{{}}}", calls.join(","))
            })
            .collect();
        format!("{{{}}}", subs.join(","))
    }
}

pub fn group_by_source(terms: impl IntoIterator<Item = TermId>) -> BTreeMap<SourceId, BTreeSet<TermId>> {
    let mut out: BTreeMap<SourceId, BTreeSet<TermId>> = BTreeMap::new();
    for t in terms {
        out.entry(t.source).or_default().insert(t);
    }
    out
}

/// Message bodies on the (simulated) wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Body {
    /// Full query sent to an evaluating server.
    Query { id: QueryId, query: Query },
    /// Final answer; `None` is the null answer of a timed-out query.
    Answer { id: QueryId, answer: Option<AnswerSet> },
    Ask { id: QueryId, term: TermId, visited: Vec<TermId> },
    Tell { id: QueryId, payload: TellPayload },
    RewriteRequest { id: QueryId, query: Query },
    RewriteResult { id: QueryId, rewrite: Option<RewriteNode> },
    InterpRequest { id: QueryId, terms: Vec<TermId> },
    InterpAnswer { id: QueryId, extents: Vec<(TermId, AnswerSet)> },
    /// A complete rewrite sent to an interpretation server.
    Eval { id: QueryId, rewrite: RewriteNode },
}

pub const HEADER_BYTES: f64 = 40.0;
pub const OBJECT_BYTES: f64 = 63.4;
pub const TERM_BYTES: f64 = 6.0;
pub const ID_BYTES: f64 = 8.0;

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::Query { .. } => "query",
            Body::Answer { .. } => "answer",
            Body::Ask { .. } => "ask",
            Body::Tell { .. } => "tell",
            Body::RewriteRequest { .. } => "rewrite-request",
            Body::RewriteResult { .. } => "rewrite-result",
            Body::InterpRequest { .. } => "interp-request",
            Body::InterpAnswer { .. } => "interp-answer",
            Body::Eval { .. } => "eval",
        }
    }

    pub fn id(&self) -> QueryId {
        match self {
            Body::Query { id, .. }
            | Body::Answer { id, .. }
            | Body::Ask { id, .. }
            | Body::Tell { id, .. }
            | Body::RewriteRequest { id, .. }
            | Body::RewriteResult { id, .. }
            | Body::InterpRequest { id, .. }
            | Body::InterpAnswer { id, .. }
            | Body::Eval { id, .. } => *id,
        }
    }

    /// Objects carried.
    pub fn object_count(&self) -> usize {
        match self {
            Body::Answer { answer: Some(a), .. } => a.len(),
            Body::Tell { payload: TellPayload::Value(Payload::Answer(a)), .. } => a.len(),
            Body::InterpAnswer { extents, .. } => extents.iter().map(|(_, a)| a.len()).sum(),
            _ => 0,
        }
    }

    /// Terms carried.
    pub fn term_count(&self) -> usize {
        let q = |q: &Query| q.disjuncts().iter().map(|d| d.len()).sum::<usize>();
        match self {
            Body::Query { query, .. } | Body::RewriteRequest { query, .. } => q(query),
            Body::Ask { visited, .. } => 1 + visited.len(),
            Body::Tell { payload: TellPayload::Value(Payload::Rewrite(r)), .. } => r.size(),
            Body::RewriteResult { rewrite: Some(r), .. } | Body::Eval { rewrite: r, .. } => r.size(),
            Body::InterpRequest { terms, .. } => terms.len(),
            Body::InterpAnswer { extents, .. } => extents.len(),
            _ => 0,
        }
    }

    /// Wire size in bytes: header, id, terms and objects.
    pub fn size_bytes(&self) -> f64 {
        HEADER_BYTES + ID_BYTES + TERM_BYTES * self.term_count() as f64 + OBJECT_BYTES * self.object_count() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{samples, ObjectId};
    use proptest::prelude::*;

    fn qid(n: u64) -> QueryId {
        QueryId::new(SourceId(0), n)
    }

    fn set(v: &[u32]) -> AnswerSet {
        v.iter().map(|&x| ObjectId(x)).collect()
    }

    #[test]
    fn close_and_combine() {
        let mut qp = QueryProgram::new(vec![vec![qid(7), qid(8)]]);
        qp.close_call(qid(8), Payload::Answer(set(&[1, 2]))).unwrap();
        assert_eq!(qp.open_count(), 1);
        assert_eq!(qp.render(), "{{7,R(8)}}");
        qp.close_call(qid(7), Payload::Answer(set(&[2, 3]))).unwrap();
        assert_eq!(qp.open_count(), 0);
        assert_eq!(qp.compute_answer().unwrap(), set(&[2]));
        assert_eq!(qp.close_call(qid(9), Payload::Answer(set(&[]))), Err(ProtocolError::NotOpen(qid(9))));
        assert_eq!(qp.close_call(qid(7), Payload::Answer(set(&[]))), Err(ProtocolError::NotOpen(qid(7))));
    }

    #[test]
    fn union_of_intersections() {
        let mut qp = QueryProgram::new(vec![vec![qid(2)], vec![qid(3), qid(4)]]);
        assert!(qp.compute_answer().is_err());
        qp.close_call(qid(2), Payload::Answer(set(&[1]))).unwrap();
        qp.close_call(qid(3), Payload::Answer(set(&[2, 3]))).unwrap();
        qp.close_call(qid(4), Payload::Answer(set(&[3, 4]))).unwrap();
        assert_eq!(qp.compute_answer().unwrap(), set(&[1, 3]));
    }

    #[test]
    fn table_linearization_parses() {
        let s = samples::example_source();
        let text = "a2 ∪ R(2) ∪ (R(3) ∩ R(4))";
        let n = parse_rewrite(text, &s.vocabulary).unwrap();
        let a2 = s.vocabulary.resolve("a2").unwrap();
        assert_eq!(
            n,
            RewriteNode::Union(vec![
                RewriteNode::Term(a2),
                RewriteNode::Placeholder(2),
                RewriteNode::Inter(vec![RewriteNode::Placeholder(3), RewriteNode::Placeholder(4)]),
            ])
        );
        assert_eq!(linearize(&n, &s.vocabulary), text);
        let qp = QueryProgram::new(vec![vec![qid(2)], vec![qid(3), qid(4)]]);
        assert_eq!(qp.symbolic(Some(a2)), n);
        assert_eq!(parse_rewrite("b3", &s.vocabulary).unwrap(), RewriteNode::Term(s.vocabulary.resolve("b3").unwrap()));
        assert!(parse_rewrite("a1 ∪ a2 ∩ a3", &s.vocabulary).is_err());
        assert!(parse_rewrite("(a1 ∪ a2", &s.vocabulary).is_err());
        assert!(parse_rewrite("zz", &s.vocabulary).is_err());
    }

    #[test]
    fn grouping_partitions_terms() {
        let net = samples::example_network();
        let v = net.vocabulary();
        let terms: Vec<TermId> = ["a2", "b1", "b2", "b3", "c1", "c2", "c3"].iter().map(|n| v.resolve(n).unwrap()).collect();
        let g = group_by_source(terms.iter().copied());
        assert_eq!(g.len(), 3);
        assert_eq!(g[&SourceId(0)].len(), 1);
        assert_eq!(g[&SourceId(1)].len(), 3);
        assert_eq!(g[&SourceId(2)].len(), 3);
        assert!(group_by_source([]).is_empty());
    }

    fn term_strategy() -> impl Strategy<Value = RewriteNode> {
        let leaf = prop_oneof![
            (0u32..9).prop_map(|i| RewriteNode::Term(TermId::new(SourceId(0), i))),
            (1u64..20).prop_map(RewriteNode::Placeholder),
        ];
        leaf.prop_recursive(8, 64, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(RewriteNode::Union),
                prop::collection::vec(inner, 1..4).prop_map(RewriteNode::Inter),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn linearize_round_trip(n in term_strategy()) {
            let s = samples::example_source();
            let text = linearize(&n, &s.vocabulary);
            prop_assert_eq!(parse_rewrite(&text, &s.vocabulary).unwrap(), n);
        }
    }

    proptest! {
        #[test]
        fn program_matches_formula(subs in prop::collection::vec(prop::collection::vec(prop::collection::btree_set(0u32..10, 0..6), 1..4), 1..4)) {
            let mut ids = Vec::new();
            let mut serial = 0;
            for s in &subs {
                ids.push(s.iter().map(|_| { serial += 1; qid(serial) }).collect::<Vec<_>>());
            }
            let mut qp = QueryProgram::new(ids.clone());
            for (s, sid) in subs.iter().zip(&ids) {
                for (r, id) in s.iter().zip(sid) {
                    qp.close_call(*id, Payload::Answer(r.iter().map(|&x| ObjectId(x)).collect())).unwrap();
                }
            }
            let mut expected = BTreeSet::new();
            for s in &subs {
                let mut acc: Option<BTreeSet<u32>> = None;
                for r in s {
                    acc = Some(match acc { None => r.clone(), Some(a) => a.intersection(r).copied().collect() });
                }
                expected.extend(acc.unwrap());
            }
            let got: BTreeSet<u32> = qp.compute_answer().unwrap().iter().map(|o| o.0).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
