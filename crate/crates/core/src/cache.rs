//! The per-source query cache: lifecycle records for queries and
//! sub-queries, coalescing of identical in-flight queries, answer reuse and
//! timeouts.
//!
//! Application-level entries move through `free`, `principal`, `dependent`,
//! `declined` and `closed` (plus the `-rw` variants once a rewrite has been
//! received). Sub-query entries start `total` or `partial`; a total one is
//! kept as `closed` when its answer arrives, a partial one is dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::mem;

use serde::{Deserialize, Serialize};

use crate::model::{Query, TermId};
use crate::protocol::{Payload, QueryId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CacheState {
    Free,
    Principal,
    Dependent,
    Declined,
    Closed,
    Total,
    Partial,
    FreeRw,
    PrincipalRw,
}

impl CacheState {
    /// States of an application-level query still waiting for its answer.
    pub fn is_pending_root(self) -> bool {
        matches!(self, CacheState::Free | CacheState::Principal | CacheState::FreeRw | CacheState::PrincipalRw | CacheState::Declined)
    }

    fn can_lead(self) -> bool {
        matches!(self, CacheState::Free | CacheState::Principal | CacheState::FreeRw | CacheState::PrincipalRw)
    }
}

impl fmt::Display for CacheState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CacheState::Free => "free",
            CacheState::Principal => "principal",
            CacheState::Dependent => "dependent",
            CacheState::Declined => "declined",
            CacheState::Closed => "closed",
            CacheState::Total => "total",
            CacheState::Partial => "partial",
            CacheState::FreeRw => "free-rw",
            CacheState::PrincipalRw => "principal-rw",
        };
        f.write_str(s)
    }
}

/// Whether a cached payload is an answer set or a rewrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CacheKind {
    Answer,
    Rewrite,
}

/// The expression index key. Queries are stored canonically so that
/// syntactic variants share entries; a term sub-query uses the one-term query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub query: Query,
    pub kind: CacheKind,
}

impl CacheKey {
    pub fn new(query: &Query, kind: CacheKind) -> Self {
        CacheKey { query: query.canonical(), kind }
    }

    pub fn term(t: TermId, kind: CacheKind) -> Self {
        CacheKey { query: Query::term(t), kind }
    }
}

/// Sub-queries whose visited set holds a single real (non-fresh) term are
/// evaluated without pruning and may be cached (`total`); deeper ones are
/// `partial`. A fresh query term never occurs in a tail, so it does not
/// restrict the evaluation.
pub fn mark_total_or_partial(visited: &[TermId]) -> CacheState {
    if visited.iter().filter(|t| !t.is_fresh()).count() <= 1 {
        CacheState::Total
    } else {
        CacheState::Partial
    }
}

#[derive(Debug, Clone)]
pub struct CacheEntry<X> {
    pub id: QueryId,
    pub key: CacheKey,
    pub state: CacheState,
    /// Set iff the entry is dependent.
    pub dep: Option<QueryId>,
    /// Set iff the entry is closed.
    pub answer: Option<Payload>,
    timeout: Time,
    pub qp: Option<crate::protocol::QueryProgram>,
    /// The entry whose program holds this sub-query as a call.
    pub parent: Option<QueryId>,
    pub rewriting: bool,
    pub created: Time,
    pub ext: X,
    dependents: BTreeSet<QueryId>,
    epsilon_sent: bool,
}

impl<X> CacheEntry<X> {
    pub fn dependents(&self) -> &BTreeSet<QueryId> {
        &self.dependents
    }

    pub fn timeout(&self) -> Time {
        self.timeout
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Admit {
    Evaluate,
    AnswerNow(Payload),
    Dependent(QueryId),
}

/// An answer (or a null answer) owed to the requester of a removed or
/// closed application-level entry.
#[derive(Debug, Clone)]
pub struct Notify<X> {
    pub id: QueryId,
    pub answer: Option<Payload>,
    pub ext: X,
}

#[derive(Debug, Clone)]
pub struct SweepOutput<X> {
    pub notify: Vec<Notify<X>>,
    /// Expired sub-query entries that owe an ε tell.
    pub epsilon: Vec<QueryId>,
    pub deleted: Vec<QueryId>,
}

impl<X> Default for SweepOutput<X> {
    fn default() -> Self {
        SweepOutput { notify: Vec::new(), epsilon: Vec::new(), deleted: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub dependents: u64,
    pub declines: u64,
    pub epsilon_tells: u64,
}

#[derive(Debug, Clone)]
pub struct QueryCache<X> {
    entries: BTreeMap<QueryId, CacheEntry<X>>,
    index: HashMap<CacheKey, BTreeSet<QueryId>>,
    /// Pending timeouts of every non-declined entry.
    timeouts: BTreeSet<(Time, QueryId)>,
    /// Declined entries that lost a dependent since the last sweep.
    maybe_orphans: BTreeSet<QueryId>,
    answer_timeout: Time,
    cache_timeout: Time,
    pub stats: CacheStats,
}

impl<X: Clone> QueryCache<X> {
    pub fn new(answer_timeout: Time, cache_timeout: Time) -> Self {
        QueryCache {
            entries: BTreeMap::new(),
            index: HashMap::new(),
            timeouts: BTreeSet::new(),
            maybe_orphans: BTreeSet::new(),
            answer_timeout,
            cache_timeout,
            stats: CacheStats::default(),
        }
    }

    pub fn answer_timeout(&self) -> Time {
        self.answer_timeout
    }

    pub fn cache_timeout(&self) -> Time {
        self.cache_timeout
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: QueryId) -> Option<&CacheEntry<X>> {
        self.entries.get(&id)
    }

    pub fn get_mut(&mut self, id: QueryId) -> Option<&mut CacheEntry<X>> {
        self.entries.get_mut(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry<X>> {
        self.entries.values()
    }

    /// Earliest pending timeout, if any.
    pub fn next_timeout(&self) -> Option<Time> {
        self.timeouts.first().map(|&(t, _)| t)
    }

    fn retime(&mut self, id: QueryId, timeout: Option<Time>) {
        let Some(e) = self.entries.get_mut(&id) else { return };
        self.timeouts.remove(&(e.timeout, id));
        if let Some(t) = timeout {
            e.timeout = t;
            self.timeouts.insert((t, id));
        }
    }

    fn insert(&mut self, e: CacheEntry<X>) {
        self.index.entry(e.key.clone()).or_default().insert(e.id);
        self.timeouts.insert((e.timeout, e.id));
        let prev = self.entries.insert(e.id, e);
        assert!(prev.is_none(), "query id admitted twice");
    }

    fn new_entry(&self, id: QueryId, key: CacheKey, state: CacheState, now: Time, ext: X) -> CacheEntry<X> {
        CacheEntry {
            id,
            key,
            state,
            dep: None,
            answer: None,
            timeout: now + self.answer_timeout,
            qp: None,
            parent: None,
            rewriting: false,
            created: now,
            ext,
            dependents: BTreeSet::new(),
            epsilon_sent: false,
        }
    }

    pub fn remove(&mut self, id: QueryId) -> Option<CacheEntry<X>> {
        let e = self.entries.remove(&id)?;
        self.timeouts.remove(&(e.timeout, id));
        if let Some(set) = self.index.get_mut(&e.key) {
            set.remove(&id);
            if set.is_empty() {
                self.index.remove(&e.key);
            }
        }
        if let Some(target) = e.dep {
            if let Some(t) = self.entries.get_mut(&target) {
                t.dependents.remove(&id);
                if t.state == CacheState::Declined && t.dependents.is_empty() {
                    self.maybe_orphans.insert(target);
                }
            }
        }
        Some(e)
    }

    /// A live closed entry for `key`, most recent first.
    pub fn lookup_closed(&self, key: &CacheKey, now: Time) -> Option<&Payload> {
        self.index
            .get(key)?
            .iter()
            .rev()
            .filter_map(|id| self.entries.get(id))
            .filter(|e| e.state == CacheState::Closed && e.timeout > now)
            .max_by_key(|e| e.created)
            .and_then(|e| e.answer.as_ref())
    }

    fn leader_for(&self, key: &CacheKey, now: Time) -> Option<QueryId> {
        self.index
            .get(key)?
            .iter()
            .filter_map(|id| self.entries.get(id))
            .filter(|e| e.state.can_lead() && e.timeout > now)
            .min_by_key(|e| (e.created, e.id))
            .map(|e| e.id)
    }

    /// Arrival of an application-level query. Creates a `free` or a
    /// `dependent` entry, or reuses a closed answer without creating one.
    pub fn admit(&mut self, id: QueryId, key: CacheKey, now: Time, ext: X) -> Admit {
        if let Some(p) = self.lookup_closed(&key, now).cloned() {
            self.stats.hits += 1;
            return Admit::AnswerNow(p);
        }
        if let Some(target) = self.leader_for(&key, now) {
            let t = self.entries.get_mut(&target).expect("leader exists");
            t.state = match t.state {
                CacheState::Free => CacheState::Principal,
                CacheState::FreeRw => CacheState::PrincipalRw,
                s => s,
            };
            t.dependents.insert(id);
            let mut e = self.new_entry(id, key, CacheState::Dependent, now, ext);
            e.dep = Some(target);
            self.insert(e);
            self.stats.dependents += 1;
            return Admit::Dependent(target);
        }
        let e = self.new_entry(id, key, CacheState::Free, now, ext);
        self.insert(e);
        Admit::Evaluate
    }

    /// Creates a `total` or `partial` entry for a sub-query.
    pub fn insert_sub(&mut self, id: QueryId, term: TermId, kind: CacheKind, visited: &[TermId], parent: Option<QueryId>, now: Time, ext: X) {
        let mut e = self.new_entry(id, CacheKey::term(term, kind), mark_total_or_partial(visited), now, ext);
        e.parent = parent;
        self.insert(e);
    }

    /// Records the result of a sub-query: a total entry with a real result
    /// is kept for reuse, anything else is deleted. `None` stands for ε.
    pub fn close_sub(&mut self, id: QueryId, result: Option<&Payload>, now: Time) {
        let keep = matches!(self.entries.get(&id), Some(e) if e.state == CacheState::Total) && result.is_some();
        if keep {
            let e = self.entries.get_mut(&id).expect("checked");
            e.state = CacheState::Closed;
            e.answer = result.cloned();
            e.qp = None;
            self.retime(id, Some(now + self.cache_timeout));
        } else {
            self.remove(id);
        }
    }

    /// The rewrite of an application-level query has arrived.
    pub fn mark_rewritten(&mut self, id: QueryId) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.rewriting = true;
            e.state = match e.state {
                CacheState::Free => CacheState::FreeRw,
                CacheState::Principal => CacheState::PrincipalRw,
                s => s,
            };
        }
    }

    /// The final answer of an application-level entry. A real answer closes
    /// the entry; `None` (the null answer of a timed-out server) deletes it.
    /// Either way every waiting requester is notified, and dependents are
    /// deleted.
    pub fn on_answer(&mut self, id: QueryId, answer: Option<Payload>, now: Time) -> Vec<Notify<X>> {
        let Some(e) = self.entries.get(&id) else { return Vec::new() };
        if !e.state.is_pending_root() {
            return Vec::new();
        }
        let mut out = Vec::new();
        let state = e.state;
        let dependents: Vec<QueryId> = e.dependents.iter().copied().collect();
        if state != CacheState::Declined {
            out.push(Notify { id, answer: answer.clone(), ext: e.ext.clone() });
        }
        for d in dependents {
            if let Some(de) = self.remove(d) {
                out.push(Notify { id: d, answer: answer.clone(), ext: de.ext });
            }
        }
        match answer {
            Some(p) => {
                let e = self.entries.get_mut(&id).expect("present");
                e.state = CacheState::Closed;
                e.answer = Some(p);
                e.qp = None;
                e.dependents.clear();
                self.retime(id, Some(now + self.cache_timeout));
            }
            None => {
                self.remove(id);
            }
        }
        out
    }

    /// Periodic inspection: expires entries whose timeout has passed.
    pub fn sweep(&mut self, now: Time) -> SweepOutput<X> {
        let mut out = SweepOutput::default();
        let expired: Vec<QueryId> = self.timeouts.iter().take_while(|&&(t, _)| t <= now).map(|&(_, id)| id).collect();
        for id in expired {
            let Some(e) = self.entries.get_mut(&id) else { continue };
            match e.state {
                CacheState::Free | CacheState::FreeRw | CacheState::Dependent => {
                    let e = self.remove(id).expect("present");
                    out.notify.push(Notify { id, answer: None, ext: e.ext });
                    out.deleted.push(id);
                }
                CacheState::Principal | CacheState::PrincipalRw => {
                    e.state = CacheState::Declined;
                    let note = Notify { id, answer: None, ext: e.ext.clone() };
                    if e.dependents.is_empty() {
                        self.maybe_orphans.insert(id);
                    }
                    self.stats.declines += 1;
                    self.retime(id, None);
                    out.notify.push(note);
                }
                CacheState::Closed => {
                    self.remove(id);
                    out.deleted.push(id);
                }
                CacheState::Total | CacheState::Partial => {
                    if e.epsilon_sent {
                        self.remove(id);
                        out.deleted.push(id);
                    } else {
                        // Kept one more period so the ε tell still finds it.
                        e.epsilon_sent = true;
                        self.stats.epsilon_tells += 1;
                        self.retime(id, Some(now + 1));
                        out.epsilon.push(id);
                    }
                }
                CacheState::Declined => unreachable!("filtered"),
            }
        }
        for id in mem::take(&mut self.maybe_orphans) {
            if self.entries.get(&id).is_some_and(|e| e.state == CacheState::Declined && e.dependents.is_empty()) {
                self.remove(id);
                out.deleted.push(id);
            }
        }
        out
    }

    /// Structural invariants; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        for e in self.entries.values() {
            if e.dep.is_some() != (e.state == CacheState::Dependent) {
                return Err(format!("{}: dep set iff dependent violated ({})", e.id, e.state));
            }
            if e.answer.is_some() != (e.state == CacheState::Closed) {
                return Err(format!("{}: answer set iff closed violated ({})", e.id, e.state));
            }
            if let Some(t) = e.dep {
                let Some(target) = self.entries.get(&t) else {
                    return Err(format!("{}: dependency target {t} missing", e.id));
                };
                if target.state == CacheState::Dependent {
                    return Err(format!("{}: dependency target {t} is itself dependent", e.id));
                }
                if !target.dependents.contains(&e.id) {
                    return Err(format!("{}: not registered at its target {t}", e.id));
                }
            }
            if !e.dependents.is_empty() && !matches!(e.state, CacheState::Principal | CacheState::PrincipalRw | CacheState::Declined) {
                return Err(format!("{}: has dependents while {}", e.id, e.state));
            }
            if !self.index.get(&e.key).is_some_and(|s| s.contains(&e.id)) {
                return Err(format!("{}: missing from the expression index", e.id));
            }
        }
        let indexed: usize = self.index.values().map(BTreeSet::len).sum();
        if indexed != self.entries.len() {
            return Err(format!("index holds {indexed} ids for {} entries", self.entries.len()));
        }
        Ok(())
    }

    /// Declined entries must have a dependent once a sweep has run.
    pub fn check_declined_have_dependents(&self) -> Result<(), String> {
        match self.entries.values().find(|e| e.state == CacheState::Declined && e.dependents.is_empty()) {
            Some(e) => Err(format!("{}: declined without dependents", e.id)),
            None => Ok(()),
        }
    }
}
