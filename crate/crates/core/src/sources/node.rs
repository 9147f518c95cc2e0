use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::mem;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AppPath, EvalMode, NodeConfig, Role};
use crate::bgraph::{BGraph, NodeId};
use crate::cache::{Admit, CacheEntry, CacheKey, CacheKind, Notify, QueryCache};
use crate::model::{AnswerSet, Interpretation, Query, SourceId, TermId};
use crate::protocol::{evaluate_rewrite, group_by_source, Body, Payload, QueryId, QueryProgram, RewriteNode, TellPayload, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    /// This source's own queues.
    Local,
    Remote(SourceId),
    /// The local application.
    App,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emit {
    pub dest: Dest,
    pub body: Body,
    /// The application query on whose behalf the message travels.
    pub tag: Option<QueryId>,
}

#[derive(Debug, Clone, Default)]
pub struct StepOut {
    pub emits: Vec<Emit>,
    /// Local interpretation lookups performed by the step.
    pub disk: u32,
}

/// Where the final answer of an entry goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reply {
    /// Sub-query entries answer through tells.
    #[default]
    None,
    App,
    Local,
    Remote(SourceId),
}

#[derive(Debug, Clone)]
struct Stage {
    rewrite: RewriteNode,
    extents: BTreeMap<TermId, AnswerSet>,
    pending: BTreeSet<SourceId>,
}

/// Engine data attached to every cache entry.
#[derive(Debug, Clone, Default)]
pub struct EntryExt {
    pub reply: Reply,
    pub tag: Option<QueryId>,
    /// The real term evaluated by the entry; `None` for a fresh query term.
    pub term: Option<TermId>,
    pub query: Option<Query>,
    /// Created by an ask from another source; tells go back to the id's origin.
    pub remote: bool,
    /// The entry answers a rewrite request.
    pub rewrite_root: bool,
    pub server: Option<SourceId>,
    stage: Option<Box<Stage>>,
}

pub struct Node {
    pub id: SourceId,
    pub role: Role,
    graph: Option<Arc<BGraph>>,
    interp: Option<Arc<Interpretation>>,
    servers: Vec<SourceId>,
    cache: QueryCache<EntryExt>,
    next_serial: u64,
    next_fresh: u32,
    rewrite_waits: HashMap<QueryId, QueryId>,
    rng: ChaCha8Rng,
    now: Time,
    out: StepOut,
}

impl Node {
    pub fn new(
        id: SourceId,
        role: Role,
        graph: Option<Arc<BGraph>>,
        interp: Option<Arc<Interpretation>>,
        servers: Vec<SourceId>,
        cfg: NodeConfig,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (u64::from(id.0) << 32) ^ 0x5eed);
        Node {
            id,
            role,
            graph,
            interp,
            servers,
            cache: QueryCache::new(cfg.answer_timeout, cfg.cache_timeout),
            next_serial: 1,
            next_fresh: 0,
            rewrite_waits: HashMap::new(),
            rng,
            now: 0,
            out: StepOut::default(),
        }
    }

    pub fn cache(&self) -> &QueryCache<EntryExt> {
        &self.cache
    }

    pub fn next_timeout(&self) -> Option<Time> {
        self.cache.next_timeout()
    }

    fn begin(&mut self, now: Time) {
        self.now = now;
        self.out = StepOut::default();
    }

    fn finish(&mut self) -> StepOut {
        mem::take(&mut self.out)
    }

    fn emit(&mut self, dest: Dest, body: Body, tag: Option<QueryId>) {
        self.out.emits.push(Emit { dest, body, tag });
    }

    fn new_id(&mut self) -> QueryId {
        let id = QueryId::new(self.id, self.next_serial);
        self.next_serial += 1;
        id
    }

    fn mode(&self) -> EvalMode {
        self.role.eval_mode()
    }

    fn kind(&self) -> CacheKind {
        match self.mode() {
            EvalMode::Direct => CacheKind::Answer,
            EvalMode::Rewrite => CacheKind::Rewrite,
        }
    }

    fn back(&self, from: SourceId) -> Dest {
        if from == self.id {
            Dest::Local
        } else {
            Dest::Remote(from)
        }
    }

    fn route(&self, t: TermId) -> Dest {
        if self.role.global_graph() || t.source == self.id {
            Dest::Local
        } else {
            Dest::Remote(t.source)
        }
    }

    fn choose_server(&mut self) -> Option<SourceId> {
        if self.servers.is_empty() {
            None
        } else {
            Some(self.servers[self.rng.gen_range(0..self.servers.len())])
        }
    }

    fn extent(&mut self, t: TermId) -> AnswerSet {
        self.out.disk += 1;
        self.interp.as_ref().map(|i| i.extent(t).clone()).unwrap_or_default()
    }

    fn evaluate(&mut self, rw: &RewriteNode) -> AnswerSet {
        let leaves = rw.leaves();
        let extents: BTreeMap<TermId, AnswerSet> = leaves.into_iter().map(|t| (t, self.extent(t))).collect();
        evaluate_rewrite(rw, &mut |t| extents.get(&t).cloned().unwrap_or_default())
    }

    /// The result contributed by a term itself.
    fn leaf(&mut self, x: TermId) -> Payload {
        match self.mode() {
            EvalMode::Direct => Payload::Answer(self.extent(x)),
            EvalMode::Rewrite => Payload::Rewrite(RewriteNode::Term(x)),
        }
    }

    /// A query from the local application.
    pub fn submit(&mut self, now: Time, query: Query) -> (QueryId, StepOut) {
        self.begin(now);
        let id = self.new_id();
        let tag = Some(id);
        let ext = EntryExt { reply: Reply::App, tag, ..EntryExt::default() };
        match self.cache.admit(id, CacheKey::new(&query, CacheKind::Answer), now, ext) {
            Admit::AnswerNow(p) => self.emit(Dest::App, Body::Answer { id, answer: p.as_answer().cloned() }, tag),
            Admit::Dependent(_) => {}
            Admit::Evaluate => self.launch(id, query, tag),
        }
        (id, self.finish())
    }

    /// Rewrites a query here and hands the rewrite to the application.
    pub fn submit_rewrite(&mut self, now: Time, query: Query) -> (QueryId, StepOut) {
        self.begin(now);
        let id = self.new_id();
        let tag = Some(id);
        let ext = EntryExt { reply: Reply::App, tag, rewrite_root: true, ..EntryExt::default() };
        match self.cache.admit(id, CacheKey::new(&query, CacheKind::Rewrite), now, ext) {
            Admit::AnswerNow(p) => self.emit(Dest::App, Body::RewriteResult { id, rewrite: p.as_rewrite().cloned() }, tag),
            Admit::Dependent(_) => {}
            Admit::Evaluate => self.start_root(id, &query, tag),
        }
        (id, self.finish())
    }

    fn launch(&mut self, id: QueryId, query: Query, tag: Option<QueryId>) {
        let path = self.role.app_path();
        let server = match path {
            AppPath::Forward | AppPath::RemoteRewrite | AppPath::LocalRewriteShipped => match self.choose_server() {
                Some(s) => Some(s),
                None => {
                    self.finish_root(id, None);
                    return;
                }
            },
            _ => None,
        };
        if let Some(e) = self.cache.get_mut(id) {
            e.ext.server = server;
            e.ext.query = Some(query.clone());
        }
        match path {
            AppPath::Forward => self.emit(Dest::Remote(server.expect("chosen")), Body::Query { id, query }, tag),
            AppPath::Direct => self.start_root(id, &query, tag),
            AppPath::RemoteRewrite => {
                let r = self.new_id();
                self.rewrite_waits.insert(r, id);
                self.emit(Dest::Remote(server.expect("chosen")), Body::RewriteRequest { id: r, query }, tag);
            }
            AppPath::LocalRewriteGrouped | AppPath::LocalRewriteShipped | AppPath::LocalRewriteLocal => {
                let r = self.new_id();
                self.rewrite_waits.insert(r, id);
                self.emit(Dest::Local, Body::RewriteRequest { id: r, query }, tag);
            }
        }
    }

    /// Launches the ask/tell evaluation of an admitted entry: the term itself
    /// for a term query, a fresh term subsumed by the query otherwise.
    fn start_root(&mut self, id: QueryId, query: &Query, tag: Option<QueryId>) {
        let term = query.as_term();
        if let Some(e) = self.cache.get_mut(id) {
            e.ext.query = Some(query.clone());
            e.ext.term = term;
        }
        match term {
            Some(t) => self.emit(self.route(t), Body::Ask { id, term: t, visited: vec![t] }, tag),
            None => {
                let tq = TermId::fresh(self.id, self.next_fresh);
                self.next_fresh = self.next_fresh.wrapping_add(1);
                self.emit(Dest::Local, Body::Ask { id, term: tq, visited: vec![tq] }, tag);
            }
        }
    }

    pub fn handle(&mut self, now: Time, from: SourceId, body: Body, tag: Option<QueryId>) -> StepOut {
        self.begin(now);
        match body {
            Body::Query { id, query } => self.on_query(from, id, query, tag),
            Body::Answer { id, answer } => self.finish_root(id, answer.map(Payload::Answer)),
            Body::Ask { id, term, visited } => self.on_ask(from, id, term, visited, tag),
            Body::Tell { id, payload } => self.on_tell(id, payload, tag),
            Body::RewriteRequest { id, query } => self.on_rewrite_request(from, id, query, tag),
            Body::RewriteResult { id, rewrite } => self.on_rewrite_result(id, rewrite, tag),
            Body::InterpRequest { id, terms } => {
                if self.interp.is_some() {
                    let extents = terms.into_iter().map(|t| (t, self.extent(t))).collect();
                    self.emit(self.back(from), Body::InterpAnswer { id, extents }, tag);
                }
            }
            Body::InterpAnswer { id, extents } => self.on_interp_answer(from, id, extents, tag),
            Body::Eval { id, rewrite } => {
                if self.interp.is_some() {
                    let answer = self.evaluate(&rewrite);
                    self.emit(self.back(from), Body::Answer { id, answer: Some(answer) }, tag);
                }
            }
        }
        self.finish()
    }

    fn on_query(&mut self, from: SourceId, id: QueryId, query: Query, tag: Option<QueryId>) {
        if self.role.app_path() != AppPath::Direct {
            return;
        }
        let reply = if from == self.id { Reply::Local } else { Reply::Remote(from) };
        let ext = EntryExt { reply, tag, ..EntryExt::default() };
        match self.cache.admit(id, CacheKey::new(&query, CacheKind::Answer), self.now, ext) {
            Admit::AnswerNow(p) => self.emit(self.back(from), Body::Answer { id, answer: p.as_answer().cloned() }, tag),
            Admit::Dependent(_) => {}
            Admit::Evaluate => self.start_root(id, &query, tag),
        }
    }

    fn on_rewrite_request(&mut self, from: SourceId, id: QueryId, query: Query, tag: Option<QueryId>) {
        if !self.role.has_graph() || self.mode() != EvalMode::Rewrite {
            return;
        }
        let reply = if from == self.id { Reply::Local } else { Reply::Remote(from) };
        let ext = EntryExt { reply, tag, rewrite_root: true, ..EntryExt::default() };
        match self.cache.admit(id, CacheKey::new(&query, CacheKind::Rewrite), self.now, ext) {
            Admit::AnswerNow(p) => self.emit(self.back(from), Body::RewriteResult { id, rewrite: p.as_rewrite().cloned() }, tag),
            Admit::Dependent(_) => {}
            Admit::Evaluate => self.start_root(id, &query, tag),
        }
    }

    /// Hyperedges usable to expand `x`: tails disjoint from the path.
    fn eligible_tails(&self, id: QueryId, x: TermId, visited: &[TermId]) -> Vec<Vec<TermId>> {
        if x.is_fresh() {
            let Some(q) = self.cache.get(id).and_then(|e| e.ext.query.as_ref()) else { return Vec::new() };
            let mut tails: Vec<Vec<TermId>> = q
                .disjuncts()
                .iter()
                .map(|d| d.terms().iter().copied().collect::<Vec<_>>())
                .filter(|tail| tail.iter().all(|t| !visited.contains(t)))
                .collect();
            tails.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
            tails.dedup();
            return tails;
        }
        let Some(g) = &self.graph else { return Vec::new() };
        g.incoming(NodeId::Term(x))
            .filter_map(|e| {
                e.tail
                    .iter()
                    .map(|n| match n {
                        NodeId::Term(t) if !visited.contains(t) => Some(*t),
                        _ => None,
                    })
                    .collect::<Option<Vec<TermId>>>()
            })
            .collect()
    }

    fn on_ask(&mut self, from: SourceId, id: QueryId, x: TermId, visited: Vec<TermId>, tag: Option<QueryId>) {
        let kind = self.kind();
        if !x.is_fresh() {
            if let Some(p) = self.cache.lookup_closed(&CacheKey::term(x, kind), self.now).cloned() {
                self.cache.stats.hits += 1;
                self.emit(self.back(from), Body::Tell { id, payload: TellPayload::Value(p) }, tag);
                return;
            }
        }
        if from != self.id {
            if self.cache.get(id).is_some() {
                return;
            }
            let ext = EntryExt { reply: Reply::Remote(from), tag, term: Some(x), remote: true, ..EntryExt::default() };
            self.cache.insert_sub(id, x, kind, &visited, None, self.now, ext);
        } else if self.cache.get(id).is_none() {
            return;
        }
        let tails = self.eligible_tails(id, x, &visited);
        if tails.is_empty() {
            let p = if x.is_fresh() { self.empty_result() } else { self.leaf(x) };
            self.tell_for(id, TellPayload::Value(p), tag);
            return;
        }
        let mut subs = Vec::with_capacity(tails.len());
        for tail in tails {
            let mut ids = Vec::with_capacity(tail.len());
            for u in tail {
                let child = self.new_id();
                let mut path = visited.clone();
                path.push(u);
                let ext = EntryExt { tag, term: Some(u), ..EntryExt::default() };
                self.cache.insert_sub(child, u, kind, &path, Some(id), self.now, ext);
                self.emit(self.route(u), Body::Ask { id: child, term: u, visited: path }, tag);
                ids.push(child);
            }
            subs.push(ids);
        }
        if let Some(e) = self.cache.get_mut(id) {
            e.qp = Some(QueryProgram::new(subs));
        }
    }

    fn empty_result(&self) -> Payload {
        match self.mode() {
            EvalMode::Direct => Payload::Answer(AnswerSet::new()),
            EvalMode::Rewrite => Payload::Rewrite(RewriteNode::Union(Vec::new())),
        }
    }

    /// Sends the result of entry `id` to whoever holds its caller. An entry
    /// serving a remote ask applies the cache rule here before replying.
    fn tell_for(&mut self, id: QueryId, payload: TellPayload, tag: Option<QueryId>) {
        let remote = self.cache.get(id).is_some_and(|e| e.ext.remote);
        if remote {
            let value = match &payload {
                TellPayload::Value(p) => Some(p),
                TellPayload::Epsilon => None,
            };
            self.cache.close_sub(id, value, self.now);
            self.emit(Dest::Remote(id.origin), Body::Tell { id, payload }, tag);
        } else {
            self.emit(Dest::Local, Body::Tell { id, payload }, tag);
        }
    }

    /// ε stands for no information: the empty set, or in a rewrite the bare
    /// term, which is all that is known about it without evaluation.
    fn resolve(&self, payload: TellPayload, term: Option<TermId>) -> Payload {
        match payload {
            TellPayload::Value(p) => p,
            TellPayload::Epsilon => match (self.mode(), term) {
                (EvalMode::Rewrite, Some(t)) => Payload::Rewrite(RewriteNode::Term(t)),
                _ => self.empty_result(),
            },
        }
    }

    fn on_tell(&mut self, id: QueryId, payload: TellPayload, tag: Option<QueryId>) {
        let Some(e) = self.cache.get(id) else { return };
        if e.state.is_pending_root() {
            let value = self.resolve(payload, e.ext.term);
            self.finish_root(id, Some(value));
            return;
        }
        if !matches!(e.state, crate::cache::CacheState::Total | crate::cache::CacheState::Partial) {
            return;
        }
        let parent = e.parent;
        let term = e.ext.term;
        let cached = match &payload {
            TellPayload::Value(p) => Some(p.clone()),
            TellPayload::Epsilon => None,
        };
        let value = self.resolve(payload, term);
        self.cache.close_sub(id, cached.as_ref(), self.now);
        let Some(p) = parent else { return };
        let Some(qp) = self.cache.get_mut(p).and_then(|l1| l1.qp.as_mut()) else { return };
        if qp.close_call(id, value).is_err() || !qp.is_closed() {
            return;
        }
        self.complete(p, tag);
    }

    /// The program of `p` is closed: combine it and pass the result up.
    fn complete(&mut self, p: QueryId, tag: Option<QueryId>) {
        let Some(e) = self.cache.get(p) else { return };
        let Some(qp) = e.qp.as_ref() else { return };
        let own = e.ext.term;
        let result = match self.mode() {
            EvalMode::Direct => {
                let mut s = match qp.compute_answer() {
                    Ok(s) => s,
                    Err(_) => AnswerSet::new(),
                };
                if let Some(x) = own {
                    s.union_with(&self.extent(x));
                }
                Payload::Answer(s)
            }
            EvalMode::Rewrite => Payload::Rewrite(qp.compose_rewrite(own)),
        };
        if own.is_some() {
            self.tell_for(p, TellPayload::Value(result), tag);
        } else {
            self.finish_root(p, Some(result));
        }
    }

    fn finish_root(&mut self, id: QueryId, result: Option<Payload>) {
        let notes = self.cache.on_answer(id, result, self.now);
        for n in notes {
            self.deliver(n);
        }
    }

    fn deliver(&mut self, n: Notify<EntryExt>) {
        let dest = match n.ext.reply {
            Reply::None => return,
            Reply::App => Dest::App,
            Reply::Local => Dest::Local,
            Reply::Remote(s) => Dest::Remote(s),
        };
        let body = if n.ext.rewrite_root {
            Body::RewriteResult { id: n.id, rewrite: n.answer.and_then(|p| p.as_rewrite().cloned()) }
        } else {
            Body::Answer { id: n.id, answer: n.answer.and_then(|p| p.as_answer().cloned()) }
        };
        self.emit(dest, body, n.ext.tag);
    }

    fn on_rewrite_result(&mut self, r: QueryId, rewrite: Option<RewriteNode>, tag: Option<QueryId>) {
        let Some(a) = self.rewrite_waits.remove(&r) else { return };
        let Some(e) = self.cache.get(a) else { return };
        if !e.state.is_pending_root() {
            return;
        }
        let server = e.ext.server;
        let Some(rw) = rewrite else {
            self.finish_root(a, None);
            return;
        };
        self.cache.mark_rewritten(a);
        match self.role.app_path() {
            AppPath::LocalRewriteShipped => match server {
                Some(s) => self.emit(Dest::Remote(s), Body::Eval { id: a, rewrite: rw }, tag),
                None => self.finish_root(a, None),
            },
            AppPath::LocalRewriteLocal => {
                let answer = self.evaluate(&rw);
                self.finish_root(a, Some(Payload::Answer(answer)));
            }
            _ => self.fetch_grouped(a, rw, tag),
        }
    }

    /// Second stage: one interpretation request per foreign source owning a
    /// leaf; local leaves are read here.
    fn fetch_grouped(&mut self, a: QueryId, rw: RewriteNode, tag: Option<QueryId>) {
        let mut groups = group_by_source(rw.leaves());
        let mut extents = BTreeMap::new();
        if let Some(local) = groups.remove(&self.id) {
            for t in local {
                let ext = self.extent(t);
                extents.insert(t, ext);
            }
        }
        if groups.is_empty() {
            let answer = evaluate_rewrite(&rw, &mut |t| extents.get(&t).cloned().unwrap_or_default());
            self.finish_root(a, Some(Payload::Answer(answer)));
            return;
        }
        for (s, terms) in &groups {
            self.emit(Dest::Remote(*s), Body::InterpRequest { id: a, terms: terms.iter().copied().collect() }, tag);
        }
        let stage = Stage { rewrite: rw, extents, pending: groups.into_keys().collect() };
        if let Some(e) = self.cache.get_mut(a) {
            e.ext.stage = Some(Box::new(stage));
        }
    }

    fn on_interp_answer(&mut self, from: SourceId, a: QueryId, extents: Vec<(TermId, AnswerSet)>, _tag: Option<QueryId>) {
        let Some(e) = self.cache.get_mut(a) else { return };
        let Some(stage) = e.ext.stage.as_mut() else { return };
        if !stage.pending.remove(&from) {
            return;
        }
        stage.extents.extend(extents);
        if !stage.pending.is_empty() {
            return;
        }
        let stage = e.ext.stage.take().expect("present");
        let answer = evaluate_rewrite(&stage.rewrite, &mut |t| stage.extents.get(&t).cloned().unwrap_or_default());
        self.finish_root(a, Some(Payload::Answer(answer)));
    }

    /// Periodic cache inspection.
    pub fn sweep(&mut self, now: Time) -> StepOut {
        self.begin(now);
        let out = self.cache.sweep(now);
        for n in out.notify {
            self.deliver(n);
        }
        for id in out.epsilon {
            let tag = self.cache.get(id).and_then(|e| e.ext.tag);
            self.tell_for(id, TellPayload::Epsilon, tag);
        }
        self.finish()
    }

    pub fn entry(&self, id: QueryId) -> Option<&CacheEntry<EntryExt>> {
        self.cache.get(id)
    }
}
