use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::delay::{DelayModel, Link, SECOND};
use super::stats::{correlation, cumulative_rt_per_object, stabilization_check, std_dev, QueryRecord, StatsBucket, BUCKET};
use super::topology::{articulated_neighbours, generate_topology, Topology, TopologyError, TopologySpec};
use super::workload::{Arrival, Workload, WorkloadSpec};
use crate::cache::CacheStats;
use crate::model::{write_network, AnswerSet, Query, SourceId, Vocabulary};
use crate::protocol::{Body, QueryId, Time};
use crate::sources::{build_nodes, Architecture, Dest, Node, NodeConfig, StepOut};
use crate::trace::trace_line;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stop {
    Duration { minutes: f64 },
    /// Stop at stabilization, or at `max_minutes` without it.
    UntilStable { max_minutes: f64 },
}

impl Default for Stop {
    fn default() -> Self {
        Stop::UntilStable { max_minutes: 48.0 * 60.0 }
    }
}

impl Stop {
    fn horizon(self) -> Time {
        let minutes = match self {
            Stop::Duration { minutes } | Stop::UntilStable { max_minutes: minutes } => minutes,
        };
        (minutes * 60.0 * SECOND as f64).round() as Time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub topology: TopologySpec,
    pub workload: WorkloadSpec,
    pub delay: DelayModel,
    pub stop: Stop,
    pub sweep_period_s: f64,
    /// Keep-alive packets per second on every articulated link; counted in
    /// packet totals only.
    pub ping_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            topology: TopologySpec::default(),
            workload: WorkloadSpec::default(),
            delay: DelayModel::default(),
            stop: Stop::default(),
            sweep_period_s: 1.0,
            ping_rate: 0.0,
        }
    }
}

/// Independent generator seeds derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub topology: u64,
    pub workload: u64,
    pub nodes: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Seeds { topology: rng.next_u64(), workload: rng.next_u64(), nodes: rng.next_u64() }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.topology.validate().map_err(|e| e.to_string())?;
        self.workload.validate()?;
        self.delay.validate()?;
        if !(self.sweep_period_s > 0.0) {
            return Err("sweep_period_s must be positive".into());
        }
        if !(self.ping_rate >= 0.0) {
            return Err("ping_rate must be non-negative".into());
        }
        let minutes = match self.stop {
            Stop::Duration { minutes } | Stop::UntilStable { max_minutes: minutes } => minutes,
        };
        if !(minutes >= 0.0 && minutes.is_finite()) {
            return Err("stop duration must be a non-negative number of minutes".into());
        }
        Ok(())
    }

    pub fn build_topology(&self) -> Result<Topology, TopologyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(Seeds::derive(self.seed).topology);
        generate_topology(&self.topology, &self.delay, &mut rng)
    }

    pub fn workload(&self, topology: &Topology) -> Workload {
        Workload::new(&self.workload, &topology.network, Seeds::derive(self.seed).workload)
    }
}

fn hex(h: u64) -> String {
    format!("{h:016x}")
}

pub fn network_hash(topology: &Topology) -> String {
    let mut h = DefaultHasher::new();
    write_network(&topology.network).hash(&mut h);
    for l in &topology.links {
        l.latency.hash(&mut h);
        l.bandwidth.to_bits().hash(&mut h);
    }
    hex(h.finish())
}

/// Arrivals folded into the workload hash.
pub const WORKLOAD_HASH_PREFIX: usize = 1000;

pub fn workload_hash(arrivals: impl Iterator<Item = Arrival>) -> String {
    let mut h = DefaultHasher::new();
    for a in arrivals.take(WORKLOAD_HASH_PREFIX) {
        (a.index, a.time, a.origin).hash(&mut h);
        a.query.hash(&mut h);
    }
    hex(h.finish())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub sub_queries_messages: Option<f64>,
    pub messages_visited: Option<f64>,
    pub messages_answer_size: Option<f64>,
}

impl Correlations {
    pub fn of(records: &[QueryRecord]) -> Correlations {
        let col = |f: fn(&QueryRecord) -> u64| records.iter().map(|r| f(r) as f64).collect::<Vec<f64>>();
        let subs = col(|r| r.sub_queries);
        let msgs = col(|r| r.messages);
        let visited = col(|r| r.visited);
        let size = col(|r| r.size);
        Correlations {
            sub_queries_messages: correlation(&subs, &msgs).ok(),
            messages_visited: correlation(&msgs, &visited).ok(),
            messages_answer_size: correlation(&msgs, &size).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record the canonical trace line of every delivered message.
    pub trace: bool,
    /// Keep every application query with its answer.
    pub answers: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answered {
    pub issued: Time,
    pub origin: SourceId,
    pub query: Query,
    /// `None` when the query timed out.
    pub answer: Option<AnswerSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub architecture: Architecture,
    pub seed: u64,
    pub config: SimConfig,
    pub network_hash: String,
    pub workload_hash: String,
    pub end_time_s: f64,
    /// Minutes of virtual time until stabilization.
    pub stabilized_min: Option<f64>,
    /// The event queue ran dry before stabilization.
    pub starved: bool,
    pub queries_issued: u64,
    pub queries_answered: u64,
    pub timeouts: u64,
    /// Cumulative response time per retrieved object at the stop, ms.
    pub avg_rt_per_object_ms: Option<f64>,
    /// Spread of the per-bucket values, ms.
    pub std_dev_ms: Option<f64>,
    pub visited_mean: Option<f64>,
    /// Spread of the per-bucket visit averages.
    pub visited_std_dev: Option<f64>,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_in_flight: u64,
    pub packets: u64,
    pub correlations: Correlations,
    pub cache: CacheStats,
    pub buckets: Vec<StatsBucket>,
    #[serde(skip)]
    pub records: Vec<QueryRecord>,
    #[serde(skip)]
    pub trace: Vec<String>,
    #[serde(skip)]
    pub answers: Vec<Answered>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("period,avg_rt_per_obj_ms,cum_rt_per_obj_ms,queries,objects,msgs,packets,visited_avg,sub_queries,timeouts\n");
        let cumulative = cumulative_rt_per_object(&self.buckets);
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        for (b, c) in self.buckets.iter().zip(cumulative) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                b.period,
                opt(b.rt_per_object()),
                opt(c),
                b.queries,
                b.objects,
                b.messages,
                b.packets,
                opt(b.visited_avg()),
                b.sub_queries,
                b.timeouts
            ));
        }
        out
    }
}

enum EventKind {
    Arrival(Arrival),
    Deliver { from: SourceId, to: SourceId, body: Body, tag: Option<QueryId> },
    Sweep { node: usize },
}

struct Event {
    time: Time,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed: the heap pops the earliest event, then the lowest sequence.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Default)]
struct Pending {
    issued: Time,
    query: Option<(SourceId, Query)>,
    sub_queries: u64,
    messages: u64,
    packets: u64,
    visited: HashSet<SourceId>,
}

struct Sim<'a> {
    topology: &'a Topology,
    delay: &'a DelayModel,
    nodes: Vec<Node>,
    heap: BinaryHeap<Event>,
    seq: u64,
    in_queue: Vec<usize>,
    sweep_at: Vec<Option<Time>>,
    sweep_period: Time,
    pending: HashMap<QueryId, Pending>,
    buckets: Vec<StatsBucket>,
    records: Vec<QueryRecord>,
    sent: u64,
    delivered: u64,
    packets: u64,
    issued: u64,
    trace: Option<(Vec<String>, Vocabulary)>,
    answers: Option<Vec<Answered>>,
}

impl Sim<'_> {
    fn push(&mut self, time: Time, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event { time, seq: self.seq, kind });
    }

    fn index(&self, s: SourceId) -> usize {
        s.0 as usize
    }

    fn link(&self, a: SourceId, b: SourceId) -> Link {
        Link::between(self.topology.links[self.index(a)], self.topology.links[self.index(b)])
    }

    /// Schedules the emissions of one step of node `at`.
    fn dispatch(&mut self, now: Time, at: SourceId, out: StepOut) {
        let disk_delay = self.delay.processing(0, out.disk);
        for e in out.emits {
            let pending = e.tag.and_then(|t| self.pending.get_mut(&t));
            let to = match e.dest {
                Dest::App => {
                    self.complete(now + disk_delay, e.body);
                    continue;
                }
                Dest::Local => at,
                Dest::Remote(s) => s,
            };
            if let Some(p) = pending {
                p.messages += 1;
                if matches!(e.body, Body::Ask { .. }) {
                    p.sub_queries += 1;
                }
                if to != at {
                    p.packets += 1;
                }
                if e.tag.is_some_and(|t| t.origin != to) && to != at {
                    p.visited.insert(to);
                }
            }
            let slot = self.index(to);
            let queue = self.in_queue[slot];
            let delay = if to == at {
                queue as Time * self.delay.processing_per_packet_ns + self.delay.processing(1, out.disk)
            } else {
                self.packets += 1;
                self.delay.message_delay(e.body.size_bytes(), self.link(at, to), queue, out.disk)
            };
            self.in_queue[slot] += 1;
            self.sent += 1;
            self.push(now + delay, EventKind::Deliver { from: at, to, body: e.body, tag: e.tag });
        }
        self.schedule_sweep(now, self.index(at));
    }

    fn schedule_sweep(&mut self, now: Time, i: usize) {
        let Some(t) = self.nodes[i].next_timeout() else { return };
        let p = self.sweep_period;
        let at = t.max(now + 1).div_ceil(p) * p;
        if self.sweep_at[i].is_none_or(|s| at < s) {
            self.sweep_at[i] = Some(at);
            self.push(at, EventKind::Sweep { node: i });
        }
    }

    fn complete(&mut self, time: Time, body: Body) {
        let (id, answer): (QueryId, Option<AnswerSet>) = match body {
            Body::Answer { id, answer } => (id, answer),
            _ => return,
        };
        let Some(p) = self.pending.remove(&id) else { return };
        let record = QueryRecord {
            issued: p.issued,
            rt: time - p.issued,
            size: answer.as_ref().map_or(0, |a| a.len() as u64),
            sub_queries: p.sub_queries,
            messages: p.messages,
            packets: p.packets,
            visited: p.visited.len() as u64,
            timed_out: answer.is_none(),
        };
        let period = (time / BUCKET) as usize;
        while self.buckets.len() <= period {
            let n = self.buckets.len();
            self.buckets.push(StatsBucket { period: n, ..StatsBucket::default() });
        }
        self.buckets[period].absorb(&record);
        self.records.push(record);
        if let (Some(list), Some((origin, query))) = (self.answers.as_mut(), p.query) {
            list.push(Answered { issued: p.issued, origin, query, answer });
        }
    }

    fn step(&mut self, ev: Event) {
        let now = ev.time;
        match ev.kind {
            EventKind::Arrival(a) => {
                self.issued += 1;
                let i = self.index(a.origin);
                let kept = self.answers.is_some().then(|| (a.origin, a.query.clone()));
                let (id, out) = self.nodes[i].submit(now, a.query);
                self.pending.insert(id, Pending { issued: now, query: kept, ..Pending::default() });
                self.dispatch(now, a.origin, out);
            }
            EventKind::Deliver { from, to, body, tag } => {
                let i = self.index(to);
                self.in_queue[i] -= 1;
                self.delivered += 1;
                if let Some((lines, vocab)) = self.trace.as_mut() {
                    lines.push(trace_line(now, from, to, &body, Some(vocab)));
                }
                let out = self.nodes[i].handle(now, from, body, tag);
                self.dispatch(now, to, out);
            }
            EventKind::Sweep { node } => {
                if self.sweep_at[node] != Some(now) {
                    return;
                }
                self.sweep_at[node] = None;
                let out = self.nodes[node].sweep(now);
                let at = self.nodes[node].id;
                self.dispatch(now, at, out);
            }
        }
    }
}

/// Simulates `arch` on `topology` under the workload, delays and stop rule
/// of `cfg`.
pub fn run(arch: Architecture, topology: &Topology, cfg: &SimConfig, opts: RunOptions) -> RunReport {
    let seeds = Seeds::derive(cfg.seed);
    let node_cfg = NodeConfig {
        answer_timeout: cfg.workload.answer_timeout(),
        cache_timeout: cfg.workload.cache_timeout(),
        seed: seeds.nodes,
    };
    let nodes = build_nodes(&topology.network, arch, topology.servers, node_cfg);
    let n = nodes.len();
    let mut sim = Sim {
        topology,
        delay: &cfg.delay,
        nodes,
        heap: BinaryHeap::new(),
        seq: 0,
        in_queue: vec![0; n],
        sweep_at: vec![None; n],
        sweep_period: ((cfg.sweep_period_s * SECOND as f64).round() as Time).max(1),
        pending: HashMap::new(),
        buckets: Vec::new(),
        records: Vec::new(),
        sent: 0,
        delivered: 0,
        packets: 0,
        issued: 0,
        trace: opts.trace.then(|| (Vec::new(), topology.network.vocabulary())),
        answers: opts.answers.then(Vec::new),
    };
    let horizon = cfg.stop.horizon();
    let until_stable = matches!(cfg.stop, Stop::UntilStable { .. });
    let mut workload = cfg.workload(topology);
    let mut upcoming = workload.next();
    let mut stabilized: Option<usize> = None;
    let mut checked = 0usize;
    let mut end = 0;
    let mut starved = false;
    loop {
        if let Some(a) = upcoming.take_if(|a| sim.heap.peek().is_none_or(|e| a.time < e.time)) {
            upcoming = workload.next();
            if a.time > horizon {
                upcoming = None;
            } else {
                sim.push(a.time, EventKind::Arrival(a));
            }
            continue;
        }
        let Some(ev) = sim.heap.pop() else {
            starved = true;
            break;
        };
        if ev.time > horizon {
            sim.heap.push(ev);
            end = horizon;
            break;
        }
        let period = (ev.time / BUCKET) as usize;
        if until_stable && period > checked {
            checked = period;
            let closed = &sim.buckets[..sim.buckets.len().min(period)];
            if let Some(b) = stabilization_check(&cumulative_rt_per_object(closed)) {
                stabilized = Some(b);
                sim.heap.push(ev);
                end = period as Time * BUCKET;
                break;
            }
        }
        end = ev.time;
        sim.step(ev);
    }
    if sim.issued == 0 {
        stabilized = Some(0);
        starved = false;
    }
    let buckets: Vec<StatsBucket> = match stabilized {
        Some(b) => sim.buckets.iter().take(b).cloned().collect(),
        None => sim.buckets.clone(),
    };
    let mut buckets = buckets;
    for b in &mut buckets {
        b.packets += ping_packets(topology, cfg.ping_rate);
    }
    let cumulative = cumulative_rt_per_object(&buckets);
    let per_bucket: Vec<f64> = buckets.iter().filter_map(StatsBucket::rt_per_object).collect();
    let visits: Vec<f64> = buckets.iter().filter_map(StatsBucket::visited_avg).collect();
    let answered = buckets.iter().map(|b| b.queries).sum();
    let timeouts = buckets.iter().map(|b| b.timeouts).sum();
    let total_visited: u64 = buckets.iter().map(|b| b.visited).sum();
    let horizon_records: Vec<QueryRecord> = sim
        .records
        .iter()
        .filter(|r| ((r.issued + r.rt) / BUCKET) < buckets.len() as Time)
        .copied()
        .collect();
    let mut cache = CacheStats::default();
    for node in &sim.nodes {
        let s = node.cache().stats;
        cache.hits += s.hits;
        cache.dependents += s.dependents;
        cache.declines += s.declines;
        cache.epsilon_tells += s.epsilon_tells;
    }
    let in_flight = sim.heap.iter().filter(|e| matches!(e.kind, EventKind::Deliver { .. })).count() as u64;
    RunReport {
        architecture: arch,
        seed: cfg.seed,
        config: cfg.clone(),
        network_hash: network_hash(topology),
        workload_hash: workload_hash(cfg.workload(topology)),
        end_time_s: end as f64 / SECOND as f64,
        stabilized_min: stabilized.map(|b| (b as Time * BUCKET) as f64 / (60 * SECOND) as f64),
        starved: starved && stabilized.is_none(),
        queries_issued: sim.issued,
        queries_answered: answered,
        timeouts,
        avg_rt_per_object_ms: cumulative.last().copied().flatten(),
        std_dev_ms: std_dev(&per_bucket),
        visited_mean: (answered > 0).then(|| total_visited as f64 / answered as f64),
        visited_std_dev: std_dev(&visits),
        messages_sent: sim.sent,
        messages_delivered: sim.delivered,
        messages_in_flight: in_flight,
        packets: sim.packets,
        correlations: Correlations::of(&horizon_records),
        cache,
        buckets,
        records: horizon_records,
        trace: sim.trace.map(|(lines, _)| lines).unwrap_or_default(),
        answers: sim.answers.unwrap_or_default(),
    }
}

/// Keep-alive packets per bucket over every articulated pair of sources.
fn ping_packets(topology: &Topology, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let links: usize = topology.network.sources().map(|s| articulated_neighbours(s).len()).sum();
    (rate * links as f64 * (BUCKET / SECOND) as f64).round() as u64
}

/// Convenience for tests and the CLI: build the topology and run once.
pub fn simulate(arch: Architecture, cfg: &SimConfig) -> Result<RunReport, TopologyError> {
    let topology = cfg.build_topology()?;
    Ok(run(arch, &topology, cfg, RunOptions::default()))
}
