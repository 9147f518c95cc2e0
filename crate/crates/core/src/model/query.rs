//! Conjunctive and disjunctive queries over a terminology, and their
//! surface syntax: `|` separates disjuncts, `&` separates terms of a
//! conjunction, `|` binds loosest. `∨` and `∧` are accepted as aliases.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TermId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown term `{name}` at offset {offset}")]
    UnknownTerm { name: String, offset: usize },
}

/// A non-empty conjunction of terms. Set semantics: duplicates collapse.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConjunctiveQuery(BTreeSet<TermId>);

impl ConjunctiveQuery {
    /// Returns `None` for an empty term collection.
    pub fn new<I: IntoIterator<Item = TermId>>(terms: I) -> Option<Self> {
        let set: BTreeSet<TermId> = terms.into_iter().collect();
        if set.is_empty() {
            None
        } else {
            Some(ConjunctiveQuery(set))
        }
    }

    pub fn single(t: TermId) -> Self {
        ConjunctiveQuery(BTreeSet::from([t]))
    }

    pub fn terms(&self) -> &BTreeSet<TermId> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: TermId) -> bool {
        self.0.contains(&t)
    }
}

/// A query in disjunctive normal form; disjuncts keep their textual order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Query(Vec<ConjunctiveQuery>);

impl Query {
    pub fn new(disjuncts: Vec<ConjunctiveQuery>) -> Option<Self> {
        if disjuncts.is_empty() {
            None
        } else {
            Some(Query(disjuncts))
        }
    }

    pub fn term(t: TermId) -> Self {
        Query(vec![ConjunctiveQuery::single(t)])
    }

    pub fn conjunction(c: ConjunctiveQuery) -> Self {
        Query(vec![c])
    }

    pub fn disjuncts(&self) -> &[ConjunctiveQuery] {
        &self.0
    }

    /// The single term, if this is a term query.
    pub fn as_term(&self) -> Option<TermId> {
        match self.0.as_slice() {
            [d] if d.len() == 1 => d.terms().iter().next().copied(),
            _ => None,
        }
    }

    pub fn terms(&self) -> BTreeSet<TermId> {
        self.0.iter().flat_map(|d| d.terms().iter().copied()).collect()
    }

    /// Canonical form used for expression equality: sorted, duplicate-free
    /// disjuncts.
    pub fn canonical(&self) -> Query {
        let set: BTreeSet<ConjunctiveQuery> = self.0.iter().cloned().collect();
        Query(set.into_iter().collect())
    }
}

/// Bidirectional mapping between term names and term ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    by_name: BTreeMap<String, TermId>,
    by_id: BTreeMap<TermId, String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, id: TermId) {
        let name = name.into();
        self.by_id.insert(id, name.clone());
        self.by_name.insert(name, id);
    }

    pub fn resolve(&self, name: &str) -> Option<TermId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: TermId) -> Option<&str> {
        self.by_id.get(&id).map(String::as_str)
    }

    /// Name for display; fresh terms print as `t`, unknown ones by id.
    pub fn display(&self, id: TermId) -> String {
        match self.by_id.get(&id) {
            Some(n) => n.clone(),
            None if id.is_fresh() => "t".to_string(),
            None => id.to_string(),
        }
    }

    pub fn merge(&mut self, other: &Vocabulary) {
        for (id, name) in &other.by_id {
            self.insert(name.clone(), *id);
        }
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TermId, &str)> {
        self.by_id.iter().map(|(id, n)| (*id, n.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Ident(&'a str),
    And,
    Or,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | ':')
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token<'_>)>, QueryParseError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '&' || c == '∧' {
            out.push((pos, Token::And));
            chars.next();
        } else if c == '|' || c == '∨' {
            out.push((pos, Token::Or));
            chars.next();
        } else if is_ident_char(c) {
            let start = pos;
            let mut end = pos;
            while let Some(&(p, c)) = chars.peek() {
                if is_ident_char(c) {
                    end = p + c.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((start, Token::Ident(&text[start..end])));
        } else {
            return Err(QueryParseError::Syntax {
                offset: pos,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

/// Parses `text` against `vocab`.
pub fn parse_query(text: &str, vocab: &Vocabulary) -> Result<Query, QueryParseError> {
    parse_query_with(text, |name| vocab.resolve(name))
}

/// Parses `text`, resolving identifiers through `resolve`.
pub fn parse_query_with<F>(text: &str, resolve: F) -> Result<Query, QueryParseError>
where
    F: Fn(&str) -> Option<TermId>,
{
    let tokens = tokenize(text)?;
    let mut disjuncts = Vec::new();
    let mut current: Vec<TermId> = Vec::new();
    // true when the next token must be a term
    let mut expect_term = true;
    for (offset, tok) in &tokens {
        match (tok, expect_term) {
            (Token::Ident(name), true) => {
                let id = resolve(name).ok_or_else(|| QueryParseError::UnknownTerm {
                    name: name.to_string(),
                    offset: *offset,
                })?;
                current.push(id);
                expect_term = false;
            }
            (Token::And, false) => expect_term = true,
            (Token::Or, false) => {
                disjuncts.push(ConjunctiveQuery::new(current.drain(..)).expect("non-empty"));
                expect_term = true;
            }
            (Token::Ident(name), false) => {
                return Err(QueryParseError::Syntax {
                    offset: *offset,
                    message: format!("expected `&` or `|` before `{name}`"),
                })
            }
            (_, true) => {
                return Err(QueryParseError::Syntax {
                    offset: *offset,
                    message: "expected a term".to_string(),
                })
            }
        }
    }
    if expect_term {
        return Err(QueryParseError::Syntax {
            offset: text.len(),
            message: "expected a term".to_string(),
        });
    }
    disjuncts.push(ConjunctiveQuery::new(current).expect("non-empty"));
    Ok(Query(disjuncts))
}

/// A value paired with the vocabulary used to print it.
pub struct Named<'a, T>(pub &'a T, pub &'a Vocabulary);

impl fmt::Display for Named<'_, ConjunctiveQuery> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.terms().iter().enumerate() {
            if i > 0 {
                write!(f, " & ")?;
            }
            write!(f, "{}", self.1.display(*t))?;
        }
        Ok(())
    }
}

impl fmt::Display for Named<'_, Query> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.disjuncts().iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            write!(f, "{}", Named(d, self.1))?;
        }
        Ok(())
    }
}
