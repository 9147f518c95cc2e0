use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taxonet_core::eval::answer;
use taxonet_core::model::{network_source, parse_query, samples, ConjunctiveQuery, Network, Query, SourceId, TermId};
use taxonet_core::protocol::{Body, Time};
use taxonet_core::simnet::{generate_topology, DelayModel, TopologySpec};
use taxonet_core::sources::{build_nodes, pump, Architecture, Dest, Node, NodeConfig};

const FOREVER: Time = Time::MAX / 4;

fn cfg() -> NodeConfig {
    NodeConfig { answer_timeout: FOREVER, cache_timeout: FOREVER, seed: 3 }
}

fn nodes(net: &Network, arch: Architecture) -> Vec<Node> {
    build_nodes(net, arch, net.len().min(2), cfg())
}

fn small_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = TopologySpec {
        sources: rng.gen_range(2..=8),
        servers: 1,
        terms_min: 2,
        terms_max: 12,
        extent_min: 0,
        extent_max: 4,
        taxonomy_fraction: 0.5,
        articulation_fraction: 0.25,
        object_pool: 12,
        ..TopologySpec::default()
    };
    generate_topology(&spec, &DelayModel::default(), &mut rng).unwrap().network
}

/// Random DNF over the whole network: 1-2 disjuncts of 1-2 terms.
fn random_query(rng: &mut ChaCha8Rng, terms: &[TermId]) -> Query {
    let disjuncts = (0..rng.gen_range(1..=2))
        .map(|_| {
            let k = rng.gen_range(1..=2);
            ConjunctiveQuery::new(terms.choose_multiple(rng, k).copied()).unwrap()
        })
        .collect();
    Query::new(disjuncts).unwrap()
}

fn check_equivalence(net: &Network, queries: &[(SourceId, Query)]) {
    let central = network_source(net);
    for arch in Architecture::ALL {
        let mut ns = nodes(net, arch);
        for (origin, q) in queries {
            let got = pump(&mut ns, *origin, q.clone(), 0, &mut |_, _, _| {}).unwrap();
            let want = answer(&central, q).unwrap();
            assert_eq!(got.as_ref(), Some(&want), "{arch} from {origin} on {q:?}");
        }
    }
}

#[test]
fn example_network_all_architectures_agree() {
    let net = samples::example_network();
    let vocab = net.vocabulary();
    let texts = ["a2", "a1", "b1", "c2", "a2 & a3", "b1 | c3", "a1 & c1 | b2"];
    let mut queries = Vec::new();
    for s in net.sources() {
        for t in texts {
            queries.push((s.id, parse_query(t, &vocab).unwrap()));
        }
    }
    check_equivalence(&net, &queries);
}

#[test]
fn random_networks_all_architectures_agree() {
    for seed in 0..20 {
        let net = small_network(seed);
        let terms: Vec<TermId> = net.sources().flat_map(|s| s.terms()).collect();
        let ids: Vec<SourceId> = net.sources().map(|s| s.id).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let queries: Vec<(SourceId, Query)> =
            (0..25).map(|_| (*ids.choose(&mut rng).unwrap(), random_query(&mut rng, &terms))).collect();
        check_equivalence(&net, &queries);
    }
}

#[test]
fn asks_reach_only_the_owner() {
    for seed in 0..10 {
        let net = small_network(seed);
        let terms: Vec<TermId> = net.sources().flat_map(|s| s.terms()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for arch in [Architecture::Ddd, Architecture::Ddr, Architecture::Dcr] {
            let mut ns = nodes(&net, arch);
            for _ in 0..10 {
                let q = random_query(&mut rng, &terms);
                let origin = SourceId(rng.gen_range(0..net.len() as u32));
                pump(&mut ns, origin, q, 0, &mut |from, to, body| {
                    if let Body::Ask { term, .. } = body {
                        assert!(term.is_fresh() || term.source == to, "{arch}: ask for {term} delivered to {to}");
                        if term.is_fresh() {
                            assert_eq!(from, to);
                        }
                    }
                })
                .unwrap();
            }
        }
    }
}

#[test]
fn cdr_contacts_each_leaf_owner_once() {
    for seed in 0..10 {
        let net = small_network(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ns = nodes(&net, Architecture::Cdr);
        let terms: Vec<TermId> = net.sources().flat_map(|s| s.terms()).collect();
        for _ in 0..10 {
            let q = random_query(&mut rng, &terms);
            let origin = SourceId(rng.gen_range(0..net.len() as u32));
            let mut leaves: BTreeSet<SourceId> = BTreeSet::new();
            let mut requests: BTreeMap<SourceId, usize> = BTreeMap::new();
            pump(&mut ns, origin, q, 0, &mut |_, to, body| match body {
                Body::RewriteResult { rewrite: Some(rw), .. } if to == origin => {
                    leaves.extend(rw.leaves().into_iter().map(|t| t.source).filter(|s| *s != origin));
                }
                Body::InterpRequest { .. } => *requests.entry(to).or_default() += 1,
                _ => {}
            })
            .unwrap();
            assert!(requests.values().all(|&n| n == 1), "{requests:?}");
            assert!(requests.keys().all(|s| leaves.contains(s)));
            assert!(requests.len() <= leaves.len());
        }
    }
}

#[test]
fn ccd_client_forwards_and_coalesces() {
    let net = samples::example_network();
    let vocab = net.vocabulary();
    let q = parse_query("a2", &vocab).unwrap();
    let mut ns = build_nodes(&net, Architecture::Ccd, 1, cfg());
    let client = &mut ns[2];
    let (_, first) = client.submit(0, q.clone());
    assert_eq!(first.emits.len(), 1);
    assert_eq!(first.emits[0].dest, Dest::Remote(SourceId(0)));
    assert!(matches!(first.emits[0].body, Body::Query { .. }));
    let (_, second) = client.submit(1, q.clone());
    assert!(second.emits.is_empty(), "in-flight duplicate becomes dependent");

    // The server answers: both application queries are served.
    let fwd = first.emits[0].clone();
    let out = ns[0].handle(2, SourceId(2), fwd.body, fwd.tag);
    let mut queue: Vec<_> = out.emits.into_iter().map(|e| (SourceId(0), e)).collect();
    let mut app = 0;
    while let Some((at, e)) = queue.pop() {
        let to = match e.dest {
            Dest::App => {
                app += 1;
                continue;
            }
            Dest::Local => at,
            Dest::Remote(s) => s,
        };
        let i = to.0 as usize;
        for next in ns[i].handle(3, at, e.body, e.tag).emits {
            queue.push((to, next));
        }
    }
    assert_eq!(app, 2);
    // A closed repeat is answered at once.
    let (_, third) = ns[2].submit(4, q);
    assert!(matches!(third.emits.as_slice(), [e] if e.dest == Dest::App));
}

#[test]
fn ddd_asks_cross_to_the_articulated_source() {
    let net = samples::example_network();
    let vocab = net.vocabulary();
    let mut ns = nodes(&net, Architecture::Ddd);
    let a2 = vocab.resolve("a2").unwrap();
    let mut first_hop = Vec::new();
    pump(&mut ns, SourceId(0), Query::term(a2), 0, &mut |from, to, body| {
        if let Body::Ask { term, .. } = body {
            if from == SourceId(0) && *term != a2 {
                first_hop.push((to, vocab.display(*term)));
            }
        }
    })
    .unwrap();
    first_hop.sort();
    let names: Vec<&str> = first_hop.iter().map(|(_, n)| n.as_str()).collect();
    assert_eq!(names, ["b1", "b2", "b3"]);
    assert!(first_hop.iter().all(|(to, _)| *to == SourceId(1)));
}

#[test]
fn local_query_stays_local_in_ddr() {
    let net = samples::example_network();
    let vocab = net.vocabulary();
    let mut ns = nodes(&net, Architecture::Ddr);
    let c3 = vocab.resolve("c3").unwrap();
    let mut remote = 0;
    let got = pump(&mut ns, SourceId(2), Query::term(c3), 0, &mut |from, to, _| remote += usize::from(from != to)).unwrap();
    assert_eq!(remote, 0);
    assert_eq!(got.unwrap().len(), 1);
}

#[test]
fn repeated_rewrite_reuses_the_cache() {
    let net = samples::example_network();
    let vocab = net.vocabulary();
    let q = parse_query("a2", &vocab).unwrap();
    let mut ns = build_nodes(&net, Architecture::Cdr, 1, cfg());
    let count = |ns: &mut Vec<Node>, origin: u32| {
        let mut asks = 0;
        pump(ns, SourceId(origin), q.clone(), 0, &mut |_, _, b| asks += usize::from(matches!(b, Body::Ask { .. }))).unwrap();
        asks
    };
    assert!(count(&mut ns, 1) > 0);
    // Another peer, same expression: the server rewrites from its cache.
    assert_eq!(count(&mut ns, 2), 0);
}
