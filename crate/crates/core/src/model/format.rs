//! Line-oriented text format for sources and networks.
//!
//! ```text
//! # comment
//! source pa                 # starts a section; optional for single sources
//! term a1 a2 a3
//! pair b1 & b2 | b3 -> a1 & a2
//! pair c1 -> b1
//! obj 7 : c1, c2
//! artic pb.b1, pb.b2 -> a2
//! ```
//!
//! `pair` accepts either a comma list (a conjunction) or a DNF query on the
//! left and a conjunction on the right; it is simplified on load. Articulation
//! tails name foreign terms as `source.term`.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    parse_query_with, simplify, ConjunctiveQuery, ModelError, Network, ObjectId, Query, Source,
    SourceId, TermId,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError { line, message: message.into() }
}

struct Section {
    name: String,
    // (line number, directive, rest)
    lines: Vec<(usize, String, String)>,
}

fn split_sections(text: &str) -> Result<Vec<Section>, FormatError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (kw, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };
        if kw == "source" {
            if rest.is_empty() || rest.contains(char::is_whitespace) {
                return Err(err(line_no, "expected `source <name>`"));
            }
            if sections.iter().any(|s| s.name == rest) {
                return Err(err(line_no, format!("duplicate source `{rest}`")));
            }
            sections.push(Section { name: rest.to_string(), lines: Vec::new() });
            continue;
        }
        if !matches!(kw, "term" | "pair" | "obj" | "artic") {
            return Err(err(line_no, format!("unknown directive `{kw}`")));
        }
        if sections.is_empty() {
            sections.push(Section { name: "s0".to_string(), lines: Vec::new() });
        }
        sections.last_mut().expect("non-empty").lines.push((line_no, kw.to_string(), rest.to_string()));
    }
    Ok(sections)
}

fn parse_object(line: usize, text: &str) -> Result<ObjectId, FormatError> {
    let digits = text.strip_prefix('o').unwrap_or(text);
    digits.parse::<u32>().map(ObjectId).map_err(|_| err(line, format!("bad object id `{text}`")))
}

fn model_err(line: usize, e: ModelError) -> FormatError {
    err(line, e.to_string())
}

/// Resolves a comma list or a DNF query to a `Query`.
fn parse_lhs<F>(line: usize, text: &str, resolve: F) -> Result<Query, FormatError>
where
    F: Fn(&str) -> Option<TermId>,
{
    let normalized: String;
    let text = if text.contains(',') && !text.contains('|') && !text.contains('&') {
        normalized = text.replace(',', " & ");
        normalized.as_str()
    } else {
        text
    };
    parse_query_with(text, resolve).map_err(|e| err(line, e.to_string()))
}

/// Parses a whole network. Sections are numbered by their order of appearance.
pub fn parse_network(text: &str) -> Result<Network, FormatError> {
    let sections = split_sections(text)?;
    let mut sources: Vec<Source> = Vec::new();
    let mut by_name: BTreeMap<String, usize> = BTreeMap::new();

    // Pass 1: terms, so that articulations may point forward.
    for (idx, sec) in sections.iter().enumerate() {
        let mut s = Source::new(SourceId(idx as u32), sec.name.clone());
        for (line, kw, rest) in &sec.lines {
            if kw != "term" {
                continue;
            }
            if rest.is_empty() {
                return Err(err(*line, "expected at least one term name"));
            }
            for name in rest.split(|c: char| c.is_whitespace() || c == ',').filter(|n| !n.is_empty()) {
                if s.vocabulary.resolve(name).is_some() {
                    return Err(err(*line, format!("duplicate term `{name}`")));
                }
                s.add_term(name);
            }
        }
        by_name.insert(sec.name.clone(), idx);
        sources.push(s);
    }

    let foreign = |name: &str, sources: &[Source]| -> Option<TermId> {
        let (src, term) = name.split_once('.')?;
        let idx = *by_name.get(src)?;
        sources[idx].vocabulary.resolve(term)
    };

    // Pass 2: pairs, objects and articulations.
    for (idx, sec) in sections.iter().enumerate() {
        for (line, kw, rest) in &sec.lines {
            let line = *line;
            match kw.as_str() {
                "term" => {}
                "pair" | "artic" => {
                    let (lhs, rhs) =
                        rest.split_once("->").ok_or_else(|| err(line, "expected `->`"))?;
                    let local = |n: &str| sources[idx].vocabulary.resolve(n);
                    let tail = if kw == "pair" {
                        parse_lhs(line, lhs.trim(), local)?
                    } else {
                        parse_lhs(line, lhs.trim(), |n| foreign(n, &sources).or_else(|| local(n)))?
                    };
                    let head = parse_lhs(line, rhs.trim(), local)?;
                    let [head] = head.disjuncts() else {
                        return Err(err(line, "the right-hand side must be a conjunction"));
                    };
                    let head: ConjunctiveQuery = head.clone();
                    for p in simplify([(&tail, &head)]) {
                        let s = &mut sources[idx];
                        if kw == "pair" {
                            s.add_pair(p).map_err(|e| model_err(line, e))?;
                        } else {
                            s.add_articulation(p).map_err(|e| model_err(line, e))?;
                        }
                    }
                }
                "obj" => {
                    let (o, terms) = rest.split_once(':').ok_or_else(|| err(line, "expected `:`"))?;
                    let o = parse_object(line, o.trim())?;
                    for name in terms.split(',').map(str::trim).filter(|n| !n.is_empty()) {
                        let t = sources[idx]
                            .vocabulary
                            .resolve(name)
                            .ok_or_else(|| err(line, format!("unknown term `{name}`")))?;
                        sources[idx].index(o, t).map_err(|e| model_err(line, e))?;
                    }
                }
                _ => unreachable!("filtered in split_sections"),
            }
        }
    }

    let mut net = Network::new();
    for s in sources {
        net.add(s).map_err(|e| err(0, e.to_string()))?;
    }
    Ok(net)
}

/// Parses a file holding exactly one source.
pub fn parse_source(text: &str) -> Result<Source, FormatError> {
    let net = parse_network(text)?;
    match net.len() {
        0 => Ok(Source::new(SourceId(0), "s0")),
        1 => Ok(net.sources().next().expect("one source").clone()),
        n => Err(err(0, format!("expected one source, found {n}"))),
    }
}

/// Writes a network in the text format. Parsing the output yields an equal
/// network when terms were added in id order.
pub fn write_network(net: &Network) -> String {
    let mut out = String::new();
    let vocab = net.vocabulary();
    let sections: BTreeMap<SourceId, &str> = net.sources().map(|s| (s.id, s.name.as_str())).collect();
    let qualified = |t: TermId| format!("{}.{}", sections.get(&t.source).copied().unwrap_or("?"), vocab.display(t));
    for s in net.sources() {
        out.push_str(&format!("source {}\n", s.name));
        let names: Vec<String> = s.terms().map(|t| s.vocabulary.display(t)).collect();
        if !names.is_empty() {
            out.push_str(&format!("term {}\n", names.join(" ")));
        }
        for p in s.taxonomy.pairs() {
            let tail: Vec<String> = p.tail.terms().iter().map(|t| s.vocabulary.display(*t)).collect();
            out.push_str(&format!("pair {} -> {}\n", tail.join(","), s.vocabulary.display(p.head)));
        }
        for p in s.articulations() {
            let tail: Vec<String> = p
                .tail
                .terms()
                .iter()
                .map(|t| if t.source == s.id { s.vocabulary.display(*t) } else { qualified(*t) })
                .collect();
            out.push_str(&format!("artic {} -> {}\n", tail.join(","), s.vocabulary.display(p.head)));
        }
        let mut index: BTreeMap<ObjectId, Vec<String>> = BTreeMap::new();
        for (t, ext) in s.interpretation.extents() {
            for o in ext.iter() {
                index.entry(o).or_default().push(s.vocabulary.display(t));
            }
        }
        for (o, terms) in index {
            out.push_str(&format!("obj {} : {}\n", o.0, terms.join(",")));
        }
    }
    out
}
