//! Source components for the five architectures.
//!
//! Every role is the same engine configured with a taxonomy scope, an
//! interpretation scope, an evaluation mode and a path for application
//! queries. Handlers are synchronous steps returning the emitted messages;
//! the caller decides when they are delivered.

mod node;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bgraph::source_graph;
use crate::model::{network_source, AnswerSet, Interpretation, Network, Query, SourceId};
use crate::protocol::{Body, QueryId, Time};

pub use node::{Dest, Emit, EntryExt, Node, Reply, StepOut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Architecture {
    Ccd,
    Cdr,
    Dcr,
    Ddr,
    Ddd,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [Architecture::Ccd, Architecture::Cdr, Architecture::Dcr, Architecture::Ddr, Architecture::Ddd];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Ccd => "CCD",
            Architecture::Cdr => "CDR",
            Architecture::Dcr => "DCR",
            Architecture::Ddr => "DDR",
            Architecture::Ddd => "DDD",
        }
    }

    /// Role of source `id` when the first `servers` ids are servers.
    pub fn role(self, id: SourceId, servers: usize) -> Role {
        let server = (id.0 as usize) < servers;
        match (self, server) {
            (Architecture::Ccd, true) => Role::CcdServer,
            (Architecture::Ccd, false) => Role::CcdClient,
            (Architecture::Cdr, true) => Role::CdrTaxonomyServer,
            (Architecture::Cdr, false) => Role::CdrPeer,
            (Architecture::Dcr, true) => Role::DcrInterpretationServer,
            (Architecture::Dcr, false) => Role::DcrPeer,
            (Architecture::Ddr, _) => Role::DdrPeer,
            (Architecture::Ddd, _) => Role::DddPeer,
        }
    }

    pub fn needs_servers(self) -> bool {
        matches!(self, Architecture::Ccd | Architecture::Cdr | Architecture::Dcr)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown architecture `{s}` (expected CCD, CDR, DCR, DDR or DDD)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    CcdClient,
    CcdServer,
    DddPeer,
    CdrPeer,
    CdrTaxonomyServer,
    DcrPeer,
    DcrInterpretationServer,
    DdrPeer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvalMode {
    Direct,
    Rewrite,
}

/// What a source does with a query from its local application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AppPath {
    /// Send the whole query to a server.
    Forward,
    /// Evaluate it here with ask/tell.
    Direct,
    /// Obtain a rewrite from a server, then fetch interpretations.
    RemoteRewrite,
    /// Rewrite here, then fetch interpretations.
    LocalRewriteGrouped,
    /// Rewrite here, then ship the rewrite to a server for evaluation.
    LocalRewriteShipped,
    /// Rewrite here, then evaluate against the local global interpretation.
    LocalRewriteLocal,
}

impl Role {
    pub fn app_path(self) -> AppPath {
        match self {
            Role::CcdClient => AppPath::Forward,
            Role::CcdServer | Role::DddPeer => AppPath::Direct,
            Role::CdrPeer => AppPath::RemoteRewrite,
            Role::CdrTaxonomyServer | Role::DdrPeer => AppPath::LocalRewriteGrouped,
            Role::DcrPeer => AppPath::LocalRewriteShipped,
            Role::DcrInterpretationServer => AppPath::LocalRewriteLocal,
        }
    }

    /// Mode of the ask/tell evaluations this role runs.
    pub fn eval_mode(self) -> EvalMode {
        match self {
            Role::CcdClient | Role::CcdServer | Role::DddPeer => EvalMode::Direct,
            _ => EvalMode::Rewrite,
        }
    }

    /// Whether ask/tell evaluation sees the whole network taxonomy.
    pub fn global_graph(self) -> bool {
        matches!(self, Role::CcdServer | Role::CdrTaxonomyServer)
    }

    pub fn has_graph(self) -> bool {
        !matches!(self, Role::CcdClient | Role::CdrPeer)
    }

    pub fn global_interpretation(self) -> bool {
        matches!(self, Role::CcdServer | Role::DcrInterpretationServer)
    }

    pub fn has_interpretation(self) -> bool {
        !matches!(self, Role::CcdClient | Role::DcrPeer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub answer_timeout: Time,
    pub cache_timeout: Time,
    /// Seed of the per-source server choice.
    pub seed: u64,
}

/// Builds one node per source with the roles of `arch`; the first
/// `servers` ids are servers.
pub fn build_nodes(net: &Network, arch: Architecture, servers: usize, cfg: NodeConfig) -> Vec<Node> {
    let server_ids: Vec<SourceId> = net.sources().map(|s| s.id).filter(|id| (id.0 as usize) < servers).collect();
    let needs_global_graph = net.sources().any(|s| arch.role(s.id, servers).global_graph());
    let needs_global_interp = net.sources().any(|s| arch.role(s.id, servers).global_interpretation());
    let global = (needs_global_graph || needs_global_interp).then(|| network_source(net));
    let global_graph = needs_global_graph.then(|| Arc::new(source_graph(global.as_ref().expect("built"))));
    let global_interp = needs_global_interp.then(|| Arc::new(global.as_ref().expect("built").interpretation.clone()));
    net.sources()
        .map(|s| {
            let role = arch.role(s.id, servers);
            let graph = if !role.has_graph() {
                None
            } else if role.global_graph() {
                global_graph.clone()
            } else {
                Some(Arc::new(source_graph(s)))
            };
            let interp: Option<Arc<Interpretation>> = if !role.has_interpretation() {
                None
            } else if role.global_interpretation() {
                global_interp.clone()
            } else {
                Some(Arc::new(s.interpretation.clone()))
            };
            Node::new(s.id, role, graph, interp, server_ids.clone(), cfg)
        })
        .collect()
}

/// A single self-contained source evaluating with ask/tell in `mode`.
pub fn standalone(source: &crate::model::Source, mode: EvalMode, cfg: NodeConfig) -> Node {
    let role = match mode {
        EvalMode::Direct => Role::DddPeer,
        EvalMode::Rewrite => Role::DdrPeer,
    };
    Node::new(source.id, role, Some(Arc::new(source_graph(source))), Some(Arc::new(source.interpretation.clone())), Vec::new(), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PumpError {
    #[error("no node for source {0}")]
    UnknownSource(SourceId),
    #[error("messages ran out before the application answer")]
    Unanswered,
}

/// Submits `query` at `origin` and delivers every message first-in
/// first-out at time `now` until none is left; returns the application
/// answer. `observe` sees each delivery as (sender, receiver, message).
pub fn pump(
    nodes: &mut [Node],
    origin: SourceId,
    query: Query,
    now: Time,
    observe: &mut dyn FnMut(SourceId, SourceId, &Body),
) -> Result<Option<AnswerSet>, PumpError> {
    let slot = |nodes: &[Node], id: SourceId| nodes.binary_search_by_key(&id, |n| n.id).map_err(|_| PumpError::UnknownSource(id));
    let i = slot(nodes, origin)?;
    let (root, out) = nodes[i].submit(now, query);
    let mut queue: VecDeque<(SourceId, SourceId, Body, Option<QueryId>)> = VecDeque::new();
    let mut answer = None;
    let push = |queue: &mut VecDeque<_>, at: SourceId, out: StepOut, answer: &mut Option<Option<AnswerSet>>| {
        for e in out.emits {
            match e.dest {
                Dest::App => {
                    if let Body::Answer { id, answer: a } = e.body {
                        if id == root {
                            *answer = Some(a);
                        }
                    }
                }
                Dest::Local => queue.push_back((at, at, e.body, e.tag)),
                Dest::Remote(to) => queue.push_back((at, to, e.body, e.tag)),
            }
        }
    };
    push(&mut queue, origin, out, &mut answer);
    while let Some((from, to, body, tag)) = queue.pop_front() {
        observe(from, to, &body);
        let j = slot(nodes, to)?;
        let out = nodes[j].handle(now, from, body, tag);
        push(&mut queue, to, out, &mut answer);
    }
    answer.ok_or(PumpError::Unanswered)
}
