use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::delay::{DelayModel, Link};
use crate::model::{ConjunctiveQuery, Network, ObjectId, Source, SourceId, SubsumptionPair, TermId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySpec {
    pub sources: usize,
    pub servers: usize,
    pub terms_min: usize,
    pub terms_max: usize,
    pub extent_min: usize,
    pub extent_max: usize,
    pub fanout_min: usize,
    pub fanout_max: usize,
    /// Local pairs per source as a fraction of its terminology.
    pub taxonomy_fraction: f64,
    /// Articulations as a fraction of the network terminology.
    pub articulation_fraction: f64,
    /// Size of the global object pool; 0 picks `sources * extent_max`.
    pub object_pool: usize,
    /// Largest tail of a generated pair.
    pub tail_max: usize,
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec {
            sources: 11_400,
            servers: 57,
            terms_min: 1,
            terms_max: 500,
            extent_min: 1,
            extent_max: 100,
            fanout_min: 1,
            fanout_max: 4,
            taxonomy_fraction: 0.25,
            articulation_fraction: 0.06,
            object_pool: 0,
            tail_max: 2,
        }
    }
}

impl TopologySpec {
    /// The scaled-down network used for desk experiments.
    pub fn desk() -> Self {
        TopologySpec { sources: 1000, servers: 5, terms_max: 50, extent_max: 20, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let bad = |m: &str| Err(TopologyError::Invalid(m.to_string()));
        if self.sources == 0 {
            return bad("at least one source is required");
        }
        if self.servers > self.sources {
            return bad("servers must not exceed sources");
        }
        if self.terms_min == 0 || self.terms_min > self.terms_max {
            return bad("need 1 <= terms_min <= terms_max");
        }
        if self.extent_min > self.extent_max {
            return bad("need extent_min <= extent_max");
        }
        if self.fanout_min == 0 || self.fanout_min > self.fanout_max {
            return bad("need 1 <= fanout_min <= fanout_max");
        }
        if self.tail_max == 0 {
            return bad("tail_max must be positive");
        }
        if !(self.taxonomy_fraction >= 0.0 && self.articulation_fraction >= 0.0) {
            return bad("fractions must be non-negative");
        }
        if self.object_pool != 0 && self.object_pool < self.extent_max {
            return bad("object_pool must hold at least extent_max objects");
        }
        Ok(())
    }

    fn pool(&self) -> usize {
        if self.object_pool == 0 {
            self.sources * self.extent_max.max(1)
        } else {
            self.object_pool
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("invalid topology: {0}")]
    Invalid(String),
    #[error("infeasible topology: {0}")]
    Infeasible(String),
}

/// A generated network with the connection of every source.
#[derive(Debug, Clone)]
pub struct Topology {
    pub network: Network,
    pub links: Vec<Link>,
    pub servers: usize,
}

/// Number of distinct local pairs available with tails of at most `tail_max`
/// terms drawn from `n` terms, the head outside the tail.
fn local_pair_capacity(n: usize, tail_max: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for k in 1..=tail_max.min(n.saturating_sub(1)) {
        binom = binom * (n - k + 1) as u128 / k as u128;
        total = total.saturating_add(binom.saturating_mul((n - k) as u128));
    }
    total
}

/// Number of non-empty sets of at most `tail_max` terms out of `n`.
fn tail_count(n: usize, tail_max: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for k in 1..=tail_max.min(n) {
        binom = binom * (n - k + 1) as u128 / k as u128;
        total = total.saturating_add(binom);
    }
    total
}

/// Splits `total` over `weights` proportionally, by largest remainder.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|&w| total as f64 * w as f64 / sum as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

fn pick_tail<R: Rng + ?Sized>(rng: &mut R, terms: &[TermId], tail_max: usize, exclude: Option<TermId>) -> ConjunctiveQuery {
    let pool: Vec<TermId> = terms.iter().copied().filter(|t| Some(*t) != exclude).collect();
    let k = rng.gen_range(1..=tail_max.min(pool.len()));
    let picked = sample(rng, pool.len(), k).into_iter().map(|i| pool[i]);
    ConjunctiveQuery::new(picked).expect("non-empty")
}

pub fn generate_topology<R: Rng + ?Sized>(spec: &TopologySpec, delay: &DelayModel, rng: &mut R) -> Result<Topology, TopologyError> {
    spec.validate()?;
    let n = spec.sources;
    let pool = spec.pool();
    let mut sources: Vec<Source> = Vec::with_capacity(n);
    let mut terms: Vec<Vec<TermId>> = Vec::with_capacity(n);
    for i in 0..n {
        let id = SourceId(i as u32);
        let mut s = Source::new(id, format!("s{i}"));
        let size = rng.gen_range(spec.terms_min..=spec.terms_max);
        let ts: Vec<TermId> = (0..size).map(|j| s.add_term(format!("s{i}t{j}"))).collect();
        for &t in &ts {
            let k = rng.gen_range(spec.extent_min..=spec.extent_max);
            for o in sample(rng, pool, k) {
                s.index(ObjectId(o as u32), t).expect("local term");
            }
        }
        let pairs = (spec.taxonomy_fraction * size as f64).round() as usize;
        if pairs as u128 > local_pair_capacity(size, spec.tail_max) {
            return Err(TopologyError::Infeasible(format!("source {i} needs {pairs} pairs over {size} terms")));
        }
        let mut added = 0;
        while added < pairs {
            let head = ts[rng.gen_range(0..ts.len())];
            let tail = pick_tail(rng, &ts, spec.tail_max, Some(head));
            if s.add_pair(SubsumptionPair::new(tail, head)).expect("local pair") {
                added += 1;
            }
        }
        sources.push(s);
        terms.push(ts);
    }

    let sizes: Vec<usize> = terms.iter().map(Vec::len).collect();
    let total_terms: usize = sizes.iter().sum();
    let articulations = (spec.articulation_fraction * total_terms as f64).round() as usize;
    if articulations > 0 && n < 2 {
        return Err(TopologyError::Infeasible(format!("{articulations} articulations need at least two sources")));
    }
    let quota = apportion(articulations, &sizes);
    for i in 0..n {
        if quota[i] == 0 {
            continue;
        }
        let fanout = rng.gen_range(spec.fanout_min..=spec.fanout_max).min(n - 1);
        let neighbours: Vec<usize> = sample(rng, n - 1, fanout).into_iter().map(|j| if j >= i { j + 1 } else { j }).collect();
        let capacity: u128 = neighbours.iter().map(|&j| tail_count(sizes[j], spec.tail_max)).sum::<u128>() * sizes[i] as u128;
        if quota[i] as u128 > capacity {
            return Err(TopologyError::Infeasible(format!("source {i} cannot hold {} articulations", quota[i])));
        }
        let mut added = 0;
        while added < quota[i] {
            let head = terms[i][rng.gen_range(0..terms[i].len())];
            let j = neighbours[rng.gen_range(0..neighbours.len())];
            let tail = pick_tail(rng, &terms[j], spec.tail_max, None);
            if sources[i].add_articulation(SubsumptionPair::new(tail, head)).expect("local head") {
                added += 1;
            }
        }
    }

    let mut network = Network::new();
    for s in sources {
        network.add(s).map_err(|e| TopologyError::Invalid(e.to_string()))?;
    }
    let links = (0..n).map(|_| delay.sample_link(rng)).collect();
    Ok(Topology { network, links, servers: spec.servers })
}

/// Sources owning the tail terms of a source's articulations.
pub fn articulated_neighbours(s: &Source) -> BTreeSet<SourceId> {
    s.articulations().iter().flat_map(|p| p.tail.terms().iter().map(|t| t.source)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::write_network;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn generate(spec: &TopologySpec, seed: u64) -> Result<Topology, TopologyError> {
        generate_topology(spec, &DelayModel::default(), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn apportion_by_largest_remainder() {
        assert_eq!(apportion(3, &[1, 1, 1]), vec![1, 1, 1]);
        assert_eq!(apportion(2, &[1, 1, 2]), vec![1, 0, 1]);
        assert_eq!(apportion(10, &[3, 7]), vec![3, 7]);
        assert_eq!(apportion(0, &[3, 7]), vec![0, 0]);
        let q = apportion(17, &[5, 9, 1, 30]);
        assert_eq!(q.iter().sum::<usize>(), 17);
    }

    #[test]
    fn pair_capacity() {
        assert_eq!(local_pair_capacity(1, 2), 0);
        assert_eq!(local_pair_capacity(2, 2), 2);
        // 3 singletons x 2 heads + 3 two-term tails x 1 head
        assert_eq!(local_pair_capacity(3, 2), 9);
        assert_eq!(tail_count(3, 2), 6);
        assert_eq!(tail_count(1, 2), 1);
    }

    #[test]
    fn single_standalone_source() {
        let spec = TopologySpec { sources: 1, servers: 0, terms_min: 8, terms_max: 8, articulation_fraction: 0.0, ..TopologySpec::desk() };
        let t = generate(&spec, 3).unwrap();
        let s = t.network.get(SourceId(0)).unwrap();
        assert_eq!(s.terms().count(), 8);
        assert_eq!(s.taxonomy.pairs().len(), 2);
        assert!(s.articulations().is_empty());
    }

    #[test]
    fn lone_source_cannot_articulate() {
        let spec = TopologySpec { sources: 1, servers: 0, terms_min: 40, terms_max: 40, ..TopologySpec::desk() };
        assert!(matches!(generate(&spec, 3), Err(TopologyError::Infeasible(_))));
    }

    #[test]
    fn invalid_ranges_rejected() {
        let spec = TopologySpec { servers: 2000, ..TopologySpec::desk() };
        assert!(matches!(generate(&spec, 1), Err(TopologyError::Invalid(_))));
        let spec = TopologySpec { terms_min: 9, terms_max: 3, ..TopologySpec::desk() };
        assert!(matches!(generate(&spec, 1), Err(TopologyError::Invalid(_))));
    }

    #[test]
    fn desk_shape() {
        let spec = TopologySpec::desk();
        let t = generate(&spec, 11).unwrap();
        let net = &t.network;
        assert_eq!(net.len(), 1000);
        let total = net.terminology_size();
        let arts: usize = net.sources().map(|s| s.articulations().len()).sum();
        assert!((arts as f64 - 0.06 * total as f64).abs() <= 1.0, "{arts} vs {total}");
        for s in net.sources() {
            let n = s.terms().count();
            assert!((1..=50).contains(&n));
            assert_eq!(s.taxonomy.pairs().len(), (0.25 * n as f64).round() as usize);
            for t in s.terms() {
                assert!((1..=20).contains(&s.extent(t).len()));
            }
            let nb = articulated_neighbours(s);
            assert!(nb.len() <= 4 && !nb.contains(&s.id));
            for p in s.articulations() {
                let owners: BTreeSet<SourceId> = p.tail.terms().iter().map(|t| t.source).collect();
                assert_eq!(owners.len(), 1);
                assert!(s.owns(p.head));
            }
        }
        assert_eq!(t.links.len(), 1000);
    }

    #[test]
    fn reproducible() {
        let spec = TopologySpec { sources: 60, ..TopologySpec::desk() };
        let a = generate(&spec, 5).unwrap();
        let b = generate(&spec, 5).unwrap();
        assert_eq!(write_network(&a.network), write_network(&b.network));
        assert_eq!(a.links, b.links);
        let c = generate(&spec, 6).unwrap();
        assert_ne!(write_network(&a.network), write_network(&c.network));
    }
}
