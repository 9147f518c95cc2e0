//! Self-checks shared by the acceptance suite and the command-line `verify`:
//! randomized oracle comparisons and replays of the worked example.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bgraph::{count_simple_paths, source_graph, NodeId};
use crate::eval::{answer, answer_oracle, qe, EvalTrace};
use crate::model::{
    network_source, parse_query, samples, AnswerSet, ConjunctiveQuery, ObjectId, Query, Source, SourceId,
    SubsumptionPair, TermId,
};
use crate::protocol::{evaluate_rewrite, linearize, parse_rewrite, Time};
use crate::simnet::{generate_topology, run, DelayModel, RunOptions, SimConfig, Stop, Topology, TopologySpec, WorkloadSpec};
use crate::sources::{build_nodes, pump, Architecture, EvalMode, NodeConfig};
use crate::trace::replay;

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, detail: impl Into<String>) -> Check {
        Check { passed, detail: detail.into() }
    }
}

/// `qe(a2, {a2})` on the example source, one row per call.
pub const QE_CALLS: &str = "\
Call | Result
QE(a2,{a2}) | I(a2) ∪ QE(b3,{a2,b3}) ∪ (QE(b1,{a2,b1}) ∩ QE(b2,{a2,b2}))
QE(b3,{a2,b3}) | I(b3)
QE(b1,{a2,b1}) | I(b1) ∪ QE(c1,{a2,b1,c1}) ∪ QE(c2,{a2,b1,c2})
QE(b2,{a2,b2}) | I(b2) ∪ (QE(c2,{a2,b2,c2}) ∩ QE(c3,{a2,b2,c3}))
QE(c1,{a2,b1,c1}) | I(c1)
QE(c2,{a2,b1,c2}) | I(c2) ★
QE(c2,{a2,b2,c2}) | I(c2) ∪ (QE(b1,{a2,b2,c2,b1}) ∩ QE(b3,{a2,b2,c2,b3}))
QE(c3,{a2,b2,c3}) | I(c3)
QE(b1,{a2,b2,c2,b1}) | I(b1) ∪ QE(c1,{a2,b2,c2,b1,c1}) ★
QE(b3,{a2,b2,c2,b3}) | I(b3)
QE(c1,{a2,b2,c2,b1,c1}) | I(c1)
";

/// Direct-mode replay of `a2`: incoming message, generated messages and
/// query program. The last row delivers the root's tell to the application.
pub const DIRECT_MESSAGES: &str = "\
Incoming message | Generated messages | Q. Program
ask(1,a2,{a2}) | ask(2,b3,{a2,b3}), ask(3,b1,{a2,b1}), ask(4,b2,{a2,b2}) | {{2},{3,4}}
ask(2,b3,{a2,b3}) | tell(2,I(b3)) |
ask(3,b1,{a2,b1}) | ask(5,c1,{a2,b1,c1}), ask(6,c2,{a2,b1,c2}) | {{5},{6}}
ask(4,b2,{a2,b2}) | ask(7,c2,{a2,b2,c2}), ask(8,c3,{a2,b2,c3}) | {{7,8}}
ask(5,c1,{a2,b1,c1}) | tell(5,I(c1)) |
ask(6,c2,{a2,b1,c2}) | tell(6,I(c2)) |
ask(7,c2,{a2,b2,c2}) | ask(9,b1,{a2,b2,c2,b1}), ask(10,b3,{a2,b2,c2,b3}) | {{9,10}}
ask(8,c3,{a2,b2,c3}) | tell(8,I(c3)) |
ask(9,b1,{a2,b2,c2,b1}) | ask(11,c1,{a2,b2,c2,b1,c1}) | {{11}}
ask(10,b3,{a2,b2,c2,b3}) | tell(10,I(b3)) |
ask(11,c1,{a2,b2,c2,b1,c1}) | tell(11,I(c1)) |
tell(11,I(c1)) | tell(9,I(b1) ∪ R(11)) |
tell(10,I(b3)) | the query program of 7 becomes {{9,R(10)}} |
tell(9,I(b1) ∪ R(11)) | tell(7,I(c2) ∪ (R(9) ∩ R(10))) |
tell(8,I(c3)) | the query program of 4 becomes {{7,R(8)}} |
tell(7,I(c2) ∪ (R(9) ∩ R(10))) | tell(4,I(b2) ∪ (R(7) ∩ R(8))) |
tell(6,I(c2)) | the query program of 3 becomes {{5},{R(6)}} |
tell(5,I(c1)) | tell(3,I(b1) ∪ R(5) ∪ R(6)) |
tell(4,I(b2) ∪ (R(7) ∩ R(8))) | the query program of 1 becomes {{2},{3,R(4)}} |
tell(3,I(b1) ∪ R(5) ∪ R(6)) | the query program of 1 becomes {{2},{R(3),R(4)}} |
tell(2,I(b3)) | tell(1,I(a2) ∪ R(2) ∪ (R(3) ∩ R(4))) |
tell(1,I(a2) ∪ R(2) ∪ (R(3) ∩ R(4))) | answer(1,{o1}) |
";

/// Rewrite-mode replay of `a2`, rows that only generate asks omitted.
pub const REWRITE_TELLS: &str = "\
Incoming message | Generated messages
ask(2,b3,{a2,b3}) | tell(2,\"b3\")
ask(5,c1,{a2,b1,c1}) | tell(5,\"c1\")
ask(6,c2,{a2,b1,c2}) | tell(6,\"c2\")
ask(8,c3,{a2,b2,c3}) | tell(8,\"c3\")
ask(10,b3,{a2,b2,c2,b3}) | tell(10,\"b3\")
ask(11,c1,{a2,b2,c2,b1,c1}) | tell(11,\"c1\")
tell(11,\"c1\") | tell(9,\"b1 ∪ R(11)\")
tell(10,\"b3\") | the query program of 7 becomes {{9,R(10)}}
tell(9,\"b1 ∪ R(11)\") | tell(7,\"c2 ∪ (R(9) ∩ R(10))\")
tell(8,\"c3\") | the query program of 4 becomes {{7,R(8)}}
tell(7,\"c2 ∪ (R(9) ∩ R(10))\") | tell(4,\"b2 ∪ (R(7) ∩ R(8))\")
tell(6,\"c2\") | the query program of 3 becomes {{5},{R(6)}}
tell(5,\"c1\") | tell(3,\"b1 ∪ R(5) ∪ R(6)\")
tell(4,\"b2 ∪ (R(7) ∩ R(8))\") | the query program of 1 becomes {{2},{3,R(4)}}
tell(3,\"b1 ∪ R(5) ∪ R(6)\") | the query program of 1 becomes {{2},{R(3),R(4)}}
tell(2,\"b3\") | tell(1,\"a2 ∪ R(2) ∪ (R(3) ∩ R(4))\")
tell(1,\"a2 ∪ R(2) ∪ (R(3) ∩ R(4))\") | rewrite(1,\"a2 ∪ b3 ∪ ((b1 ∪ c1 ∪ c2) ∩ (b2 ∪ ((c2 ∪ ((b1 ∪ c1) ∩ b3)) ∩ c3)))\")
";

/// The rewrite tree of the example query, written out by hand.
pub const REWRITE_TREE: &str = "a2 ∪ b3 ∪ ((b1 ∪ c1 ∪ c2) ∩ (b2 ∪ ((c2 ∪ ((b1 ∪ c1) ∩ b3)) ∩ c3)))";

const FOREVER: Time = Time::MAX / 4;

/// Random single source: 1 to 12 terms, up to twice as many pairs with
/// tails of 1 to 3 terms (cycles arise freely), objects `o0..o9`.
pub fn random_source(rng: &mut ChaCha8Rng) -> Source {
    let mut s = Source::new(SourceId(0), "r");
    let n = rng.gen_range(1..=12);
    let ids: Vec<TermId> = (0..n).map(|i| s.add_term(format!("t{i}"))).collect();
    for _ in 0..rng.gen_range(0..=2 * n) {
        let k = rng.gen_range(1..=3.min(n));
        let tail = ConjunctiveQuery::new(ids.choose_multiple(rng, k).copied()).unwrap();
        s.add_pair(SubsumptionPair::new(tail, *ids.choose(rng).unwrap())).unwrap();
    }
    for _ in 0..rng.gen_range(0..=15) {
        s.index(ObjectId(rng.gen_range(0..10)), *ids.choose(rng).unwrap()).unwrap();
    }
    s
}

pub fn random_dnf(rng: &mut ChaCha8Rng, terms: &[TermId]) -> Query {
    let disjuncts = (0..rng.gen_range(1..=3))
        .map(|_| {
            let k = rng.gen_range(1..=3.min(terms.len()));
            ConjunctiveQuery::new(terms.choose_multiple(rng, k).copied()).unwrap()
        })
        .collect();
    Query::new(disjuncts).unwrap()
}

/// Some term reaches itself over tail-to-head steps.
pub fn has_cycle(s: &Source) -> bool {
    let mut next: BTreeMap<TermId, BTreeSet<TermId>> = BTreeMap::new();
    for p in s.all_pairs() {
        for t in p.tail.terms() {
            next.entry(*t).or_default().insert(p.head);
        }
    }
    s.terms().any(|start| {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<TermId> = next.get(&start).into_iter().flatten().copied().collect();
        while let Some(t) = stack.pop() {
            if t == start {
                return true;
            }
            if seen.insert(t) {
                stack.extend(next.get(&t).into_iter().flatten().copied());
            }
        }
        false
    })
}

/// `answer` against the closure oracle on `sources` random sources, five
/// random DNF queries each.
pub fn oracle(sources: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let (mut queries, mut cyclic, mut mismatches) = (0usize, 0usize, 0usize);
    for _ in 0..sources {
        let s = random_source(&mut rng);
        cyclic += usize::from(has_cycle(&s));
        let terms: Vec<TermId> = s.terms().collect();
        for _ in 0..5 {
            let q = random_dnf(&mut rng, &terms);
            queries += 1;
            if answer(&s, &q).ok() != Some(answer_oracle(&s, &q)) {
                mismatches += 1;
            }
        }
    }
    Check::new(
        mismatches == 0 && (sources == 0 || cyclic > 0),
        format!("{sources} sources ({cyclic} cyclic), {queries} queries, {mismatches} mismatches, {:.2?}", start.elapsed()),
    )
}

/// The call table of `qe` for `a2` on the example source.
pub fn qe_table() -> Check {
    let s = samples::example_source();
    let a2 = s.vocabulary.resolve("a2").expect("fixture term");
    let mut trace = EvalTrace::default();
    qe(&source_graph(&s), &s.interpretation, a2, &[a2], Some(&mut trace));
    let text = trace.render_table(&s.vocabulary);
    let pruned = trace.calls.iter().filter(|c| c.pruned).count();
    Check::new(
        text == QE_CALLS && trace.calls.len() == 11 && pruned == 2,
        format!("{} calls, {pruned} pruned, byte-exact: {}", trace.calls.len(), text == QE_CALLS),
    )
}

/// Direct-mode messages for `a2`: one ask and one tell per term visit.
pub fn direct_messages() -> Check {
    let s = samples::example_source();
    let q = parse_query("a2", &s.vocabulary).expect("fixture query");
    let r = replay(&s, &q, EvalMode::Direct);
    let a2 = s.vocabulary.resolve("a2").expect("fixture term");
    let mut trace = EvalTrace::default();
    qe(&source_graph(&s), &s.interpretation, a2, &[a2], Some(&mut trace));
    let visits = trace.calls.len();
    let text = r.render_messages();
    let passed = r.asks == 11 && r.tells == 11 && r.asks + r.tells == 2 * visits && text == DIRECT_MESSAGES;
    Check::new(passed, format!("{} asks, {} tells, {visits} term visits, rows match: {}", r.asks, r.tells, text == DIRECT_MESSAGES))
}

/// Rewrite-mode tells for `a2`, the final tree against the hand-written one
/// under random interpretations, and its evaluation against direct mode.
pub fn rewrite_messages() -> Check {
    let s = samples::example_source();
    let q = parse_query("a2", &s.vocabulary).expect("fixture query");
    let r = replay(&s, &q, EvalMode::Rewrite);
    let direct = replay(&s, &q, EvalMode::Direct).answer;
    let text = r.render_tells();
    let Some(tree) = r.rewrite.clone() else { return Check::new(false, "no rewrite") };
    let expected = parse_rewrite(REWRITE_TREE, &s.vocabulary).expect("fixture rewrite");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let terms: Vec<TermId> = s.terms().collect();
    let equivalent = (0..500).all(|_| {
        let ext: BTreeMap<TermId, AnswerSet> =
            terms.iter().map(|&t| (t, (0..6).filter(|_| rng.gen_bool(0.4)).map(ObjectId).collect())).collect();
        let mut look = |t: TermId| ext[&t].clone();
        evaluate_rewrite(&tree, &mut look) == evaluate_rewrite(&expected, &mut look)
    });
    let evaluated = evaluate_rewrite(&tree, &mut |t| s.extent(t).clone());
    let passed = text == REWRITE_TELLS && equivalent && Some(&evaluated) == direct.as_ref() && r.answer == direct;
    Check::new(
        passed,
        format!(
            "rows match: {}, rewrite {}, equivalent to the hand tree: {equivalent}, evaluates to {evaluated}",
            text == REWRITE_TELLS,
            linearize(&tree, &s.vocabulary)
        ),
    )
}

/// `2^(n-1)` simple paths from u1 to t for every n in `ns`, while the
/// terms `qe` visits grow by a constant step.
pub fn paths(ns: impl IntoIterator<Item = usize>) -> Check {
    let mut counts_ok = true;
    let mut visited = Vec::new();
    let mut counts = Vec::new();
    for n in ns {
        let s = samples::path_family(n);
        let g = source_graph(&s);
        let node = |name: &str| NodeId::Term(s.vocabulary.resolve(name).expect("family term"));
        let count = count_simple_paths(&g, node("u1"), node("t"), u64::MAX);
        counts_ok &= count == 1 << (n - 1);
        counts.push(count);
        let t = s.vocabulary.resolve("t").expect("family term");
        let mut trace = EvalTrace::default();
        qe(&g, &s.interpretation, t, &[t], Some(&mut trace));
        visited.push(trace.visited_terms().len());
    }
    let steps: BTreeSet<i64> = visited.windows(2).map(|w| w[1] as i64 - w[0] as i64).collect();
    let linear = steps.len() <= 1;
    Check::new(counts_ok && linear, format!("simple paths {counts:?}; QE visited terms {visited:?}"))
}

fn equivalence_spec(rng: &mut ChaCha8Rng) -> TopologySpec {
    let sources = rng.gen_range(2..=20);
    TopologySpec {
        sources,
        servers: rng.gen_range(1..=3.min(sources)),
        terms_min: 2,
        terms_max: 30,
        extent_min: 0,
        extent_max: 5,
        object_pool: 60,
        articulation_fraction: 0.15,
        ..TopologySpec::default()
    }
}

/// Every architecture against the central answer on `networks` random
/// networks of at most 20 sources and 30 terms each, `queries` random DNF
/// queries per network, with timeouts that never fire. With `simulate`,
/// each network also runs a minute of simulated workload.
pub fn architectures(networks: u64, queries: usize, seed: u64, simulate: bool) -> Check {
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for k in 0..networks {
        let net_seed = seed.wrapping_add(k);
        let mut rng = ChaCha8Rng::seed_from_u64(net_seed);
        let spec = equivalence_spec(&mut rng);
        let topo: Topology = match generate_topology(&spec, &DelayModel::default(), &mut rng) {
            Ok(t) => t,
            Err(e) => return Check::new(false, format!("network {k}: {e}")),
        };
        let net = &topo.network;
        let central = network_source(net);
        let terms: Vec<TermId> = net.sources().flat_map(|s| s.terms()).collect();
        let ids: Vec<SourceId> = net.sources().map(|s| s.id).collect();
        let batch: Vec<(SourceId, Query)> =
            (0..queries).map(|_| (*ids.choose(&mut rng).expect("sources"), random_dnf(&mut rng, &terms))).collect();
        let cfg = NodeConfig { answer_timeout: FOREVER, cache_timeout: FOREVER, seed: net_seed };
        for arch in Architecture::ALL {
            let mut nodes = build_nodes(net, arch, topo.servers, cfg);
            for (origin, q) in &batch {
                checked += 1;
                let got = pump(&mut nodes, *origin, q.clone(), 0, &mut |_, _, _| {});
                if got.ok().flatten() != answer(&central, q).ok() {
                    failures.push(format!("{arch} network {k}"));
                }
            }
        }
        if simulate {
            let sim = SimConfig {
                seed: net_seed,
                workload: WorkloadSpec { base_rate: 1.0, answer_timeout_s: 1e9, cache_timeout_s: 1e9, ..WorkloadSpec::default() },
                stop: Stop::Duration { minutes: 1.0 },
                ..SimConfig::default()
            };
            for arch in Architecture::ALL {
                for a in run(arch, &topo, &sim, RunOptions { answers: true, trace: false }).answers {
                    checked += 1;
                    if a.answer != answer(&central, &a.query).ok() {
                        failures.push(format!("{arch} network {k} simulated"));
                    }
                }
            }
        }
    }
    failures.dedup();
    Check::new(failures.is_empty(), format!("{networks} networks, {checked} answers compared, mismatches: {failures:?}"))
}
