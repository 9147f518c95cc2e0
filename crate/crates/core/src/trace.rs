//! Single-source replays of the ask/tell protocol with symbolic rendering of
//! every message, and the canonical one-line-per-message trace format.
//!
//! Scheduling: the ask queue is drained first-in first-out; when it is empty
//! the pending tell with the highest query serial runs next.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use crate::model::{AnswerSet, Query, Source, SourceId, TermId, Vocabulary};
use crate::protocol::{linearize_with, Body, Payload, QueryId, RewriteNode, TellPayload, Time};
use crate::sources::{standalone, Dest, EvalMode, Node, NodeConfig};

/// One processed message and its effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub time: Time,
    pub incoming: String,
    pub kind: &'static str,
    pub generated: Vec<String>,
    /// The program built by an ask, or the updated program of the caller when
    /// a tell leaves it open.
    pub program: Option<String>,
    pub program_owner: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub mode: EvalMode,
    pub source: SourceId,
    pub rows: Vec<TraceRow>,
    pub asks: usize,
    pub tells: usize,
    /// Final answer (direct mode) or the evaluation of the final rewrite.
    pub answer: Option<AnswerSet>,
    pub rewrite: Option<RewriteNode>,
    /// Distinct terms asked for.
    pub visited_terms: usize,
}

const STEP: Time = 1_000;

fn render_visited(v: &[TermId], vocab: &Vocabulary) -> String {
    let names: Vec<String> = v.iter().map(|t| vocab.display(*t)).collect();
    format!("{{{}}}", names.join(","))
}

/// The symbolic result of an entry: its own term (as `I(t)` in direct mode)
/// joined with placeholders for the calls of its program.
fn symbolic(node: &Node, id: QueryId, mode: EvalMode, vocab: &Vocabulary) -> String {
    let Some(e) = node.entry(id) else { return "?".into() };
    let tree = match &e.qp {
        Some(qp) => qp.symbolic(e.ext.term),
        None => match e.ext.term {
            Some(t) => RewriteNode::Term(t),
            None => return "∅".into(),
        },
    };
    match mode {
        EvalMode::Direct => linearize_with(&tree, &|t| format!("I({})", vocab.display(t))),
        EvalMode::Rewrite => format!("\"{}\"", linearize_with(&tree, &|t| vocab.display(t))),
    }
}

/// Runs `query` on a single source and records every message.
pub fn replay(source: &Source, query: &Query, mode: EvalMode) -> Replay {
    let cfg = NodeConfig { answer_timeout: Time::MAX / 4, cache_timeout: Time::MAX / 4, seed: 0 };
    let vocab = &source.vocabulary;
    let mut node = standalone(source, mode, cfg);
    let (root, out) = match mode {
        EvalMode::Direct => node.submit(0, query.clone()),
        EvalMode::Rewrite => node.submit_rewrite(0, query.clone()),
    };
    let mut asks: VecDeque<Body> = VecDeque::new();
    let mut tells: BTreeMap<u64, Body> = BTreeMap::new();
    let mut others: VecDeque<Body> = VecDeque::new();
    let mut labels: BTreeMap<(u64, &'static str), String> = BTreeMap::new();
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut result = Replay {
        mode,
        source: source.id,
        rows: Vec::new(),
        asks: 0,
        tells: 0,
        answer: None,
        rewrite: None,
        visited_terms: 0,
    };
    let mut terms = std::collections::BTreeSet::new();
    let mut pending = out.emits;
    let mut time: Time = 0;
    loop {
        let mut generated = Vec::new();
        for e in pending.drain(..) {
            match (&e.dest, &e.body) {
                (Dest::Local, Body::Ask { id, term, visited }) => {
                    let s = format!("ask({},{},{})", id.serial, vocab.display(*term), render_visited(visited, vocab));
                    labels.insert((id.serial, "ask"), s.clone());
                    generated.push(s);
                    result.asks += 1;
                    terms.insert(*term);
                    asks.push_back(e.body);
                }
                (Dest::Local, Body::Tell { id, payload }) => {
                    let sym = match payload {
                        TellPayload::Epsilon => "ε".to_string(),
                        TellPayload::Value(_) => symbolic(&node, *id, mode, vocab),
                    };
                    let s = format!("tell({},{})", id.serial, sym);
                    labels.insert((id.serial, "tell"), s.clone());
                    generated.push(s);
                    result.tells += 1;
                    tells.insert(id.serial, e.body);
                }
                (Dest::App, Body::Answer { id, answer }) => {
                    generated.push(format!("answer({},{})", id.serial, answer.as_ref().map(|a| a.to_string()).unwrap_or("null".into())));
                    result.answer = answer.clone();
                }
                (Dest::App, Body::RewriteResult { id, rewrite }) => {
                    let text = rewrite.as_ref().map(|r| linearize_with(r, &|t| vocab.display(t))).unwrap_or("null".into());
                    generated.push(format!("rewrite({},\"{}\")", id.serial, text));
                    result.rewrite = rewrite.clone();
                    result.answer = rewrite.as_ref().map(|r| crate::protocol::evaluate_rewrite(r, &mut |t| source.extent(t).clone()));
                }
                (_, body) => {
                    generated.push(body.kind().to_string());
                    others.push_back(e.body);
                }
            }
        }
        if let Some(last) = rows.last_mut() {
            last.generated = generated;
        }
        let next = asks.pop_front().or_else(|| tells.pop_last().map(|(_, b)| b)).or_else(|| others.pop_front());
        let Some(body) = next else { break };
        time += STEP;
        let (incoming, kind) = match &body {
            Body::Ask { id, .. } => (labels[&(id.serial, "ask")].clone(), "ask"),
            Body::Tell { id, .. } => (labels[&(id.serial, "tell")].clone(), "tell"),
            other => (other.kind().to_string(), other.kind()),
        };
        let parent = match &body {
            Body::Tell { id, .. } => node.entry(*id).and_then(|e| e.parent),
            _ => None,
        };
        let asked = match &body {
            Body::Ask { id, .. } => Some(*id),
            _ => None,
        };
        let out = node.handle(time, source.id, body, Some(root));
        let made_ask = out.emits.iter().any(|e| matches!(e.body, Body::Ask { .. }));
        let made_tell = out.emits.iter().any(|e| matches!(e.body, Body::Tell { .. }));
        let (program, owner) = match (asked, parent) {
            (Some(id), _) if made_ask => (node.entry(id).and_then(|e| e.qp.as_ref()).map(|qp| qp.render()), None),
            (None, Some(p)) if !made_tell => (node.entry(p).and_then(|e| e.qp.as_ref()).map(|qp| qp.render()), Some(p.serial)),
            _ => (None, None),
        };
        rows.push(TraceRow { time, incoming, kind, generated: Vec::new(), program, program_owner: owner });
        pending = out.emits;
    }
    result.rows = rows;
    result.visited_terms = terms.len();
    result
}

impl Replay {
    /// Three columns: incoming message, generated messages, query program.
    pub fn render_messages(&self) -> String {
        let mut out = String::from("Incoming message | Generated messages | Q. Program\n");
        for r in &self.rows {
            let (generated, program) = match (&r.program, r.program_owner) {
                (Some(p), Some(owner)) => (format!("the query program of {owner} becomes {p}"), String::new()),
                (Some(p), None) => (r.generated.join(", "), p.clone()),
                (None, _) => (r.generated.join(", "), String::new()),
            };
            let _ = writeln!(out, "{}", format!("{} | {} | {}", r.incoming, generated, program).trim_end());
        }
        out
    }

    /// Two columns, omitting the rows whose only effect is new asks.
    pub fn render_tells(&self) -> String {
        let mut out = String::from("Incoming message | Generated messages\n");
        for r in &self.rows {
            if r.generated.iter().any(|g| g.starts_with("ask(")) {
                continue;
            }
            let generated = match (&r.program, r.program_owner) {
                (Some(p), Some(owner)) => format!("the query program of {owner} becomes {p}"),
                _ => r.generated.join(", "),
            };
            let _ = writeln!(out, "{} | {}", r.incoming, generated);
        }
        out
    }

    /// One canonical trace line per message processed.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(out, "{} {} {} {} {}", r.time, self.source, self.source, r.kind, r.incoming);
        }
        out
    }
}

/// Canonical trace line for a simulated message: virtual time, sender,
/// receiver, kind and fields.
pub fn trace_line(time: Time, from: SourceId, to: SourceId, body: &Body, vocab: Option<&Vocabulary>) -> String {
    let name = |t: &TermId| vocab.map(|v| v.display(*t)).unwrap_or_else(|| t.to_string());
    let names = |ts: &[TermId]| ts.iter().map(name).collect::<Vec<_>>().join(",");
    let size = |a: &Option<AnswerSet>| a.as_ref().map(|a| a.len().to_string()).unwrap_or("null".into());
    let fields = match body {
        Body::Query { id, query } => format!("id={id} terms={}", query.terms().len()),
        Body::Answer { id, answer } => format!("id={id} objects={}", size(answer)),
        Body::Ask { id, term, visited } => format!("id={id} term={} visited={{{}}}", name(term), names(visited)),
        Body::Tell { id, payload } => match payload {
            TellPayload::Epsilon => format!("id={id} eps"),
            TellPayload::Value(Payload::Answer(a)) => format!("id={id} objects={}", a.len()),
            TellPayload::Value(Payload::Rewrite(r)) => format!("id={id} leaves={}", r.size()),
        },
        Body::RewriteRequest { id, query } => format!("id={id} terms={}", query.terms().len()),
        Body::RewriteResult { id, rewrite } => {
            format!("id={id} leaves={}", rewrite.as_ref().map(|r| r.size().to_string()).unwrap_or("null".into()))
        }
        Body::InterpRequest { id, terms } => format!("id={id} terms={{{}}}", names(terms)),
        Body::InterpAnswer { id, extents } => format!("id={id} objects={}", extents.iter().map(|(_, a)| a.len()).sum::<usize>()),
        Body::Eval { id, rewrite } => format!("id={id} leaves={}", rewrite.size()),
    };
    format!("{time} {from} {to} {} {fields}", body.kind())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_query, samples};

    #[test]
    fn direct_replay_of_a2() {
        let s = samples::example_source();
        let q = parse_query("a2", &s.vocabulary).unwrap();
        let r = replay(&s, &q, EvalMode::Direct);
        assert_eq!((r.asks, r.tells, r.visited_terms), (11, 11, 7));
        assert_eq!(r.answer.as_ref().map(|a| a.len()), Some(1));
        let table = r.render_messages();
        assert!(table.contains("ask(4,b2,{a2,b2}) | ask(7,c2,{a2,b2,c2}), ask(8,c3,{a2,b2,c3}) | {{7,8}}\n"));
        assert!(table.contains("tell(4,I(b2) ∪ (R(7) ∩ R(8))) | the query program of 1 becomes {{2},{3,R(4)}} |"));
        assert_eq!(r.canonical().lines().count(), 22);
        assert!(r.canonical().starts_with("1000 s0 s0 ask ask(1,a2,{a2})\n"));
    }

    #[test]
    fn rewrite_replay_of_a2() {
        let s = samples::example_source();
        let q = parse_query("a2", &s.vocabulary).unwrap();
        let r = replay(&s, &q, EvalMode::Rewrite);
        let text = linearize_with(r.rewrite.as_ref().unwrap(), &|t| s.vocabulary.display(t));
        assert_eq!(text, "a2 ∪ b3 ∪ ((b1 ∪ c1 ∪ c2) ∩ (b2 ∪ ((c2 ∪ ((b1 ∪ c1) ∩ b3)) ∩ c3)))");
        assert_eq!(r.answer, replay(&s, &q, EvalMode::Direct).answer);
        assert!(r.render_tells().contains("tell(2,\"b3\") | tell(1,\"a2 ∪ R(2) ∪ (R(3) ∩ R(4))\")\n"));
    }
}
