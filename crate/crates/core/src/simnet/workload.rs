use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::delay::SECOND;
use crate::model::{ConjunctiveQuery, Network, Query, SourceId, TermId};
use crate::protocol::Time;

/// Query arrivals follow `base_rate * (1 + amplitude * sin(2 pi (t / period + phase)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Mean queries per second over the whole network.
    pub base_rate: f64,
    /// In [0, 1].
    pub amplitude: f64,
    pub period_s: f64,
    /// Fraction of a period.
    pub phase: f64,
    pub terms_min: usize,
    pub terms_max: usize,
    pub answer_timeout_s: f64,
    pub cache_timeout_s: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            base_rate: 10.0,
            amplitude: 0.5,
            period_s: 86_400.0,
            phase: 0.0,
            terms_min: 1,
            terms_max: 3,
            answer_timeout_s: 60.0,
            cache_timeout_s: 600.0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_rate >= 0.0 && self.base_rate.is_finite()) {
            return Err("base_rate must be a non-negative number".into());
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return Err("amplitude must lie in [0, 1]".into());
        }
        if !(self.period_s > 0.0) {
            return Err("period_s must be positive".into());
        }
        if self.terms_min == 0 || self.terms_min > self.terms_max {
            return Err("need 1 <= terms_min <= terms_max".into());
        }
        if !(self.answer_timeout_s > 0.0 && self.cache_timeout_s >= 0.0) {
            return Err("timeouts must be positive".into());
        }
        Ok(())
    }

    /// Queries per second at virtual time `t`.
    pub fn rate(&self, t: Time) -> f64 {
        let x = t as f64 / SECOND as f64 / self.period_s + self.phase;
        (self.base_rate * (1.0 + self.amplitude * (std::f64::consts::TAU * x).sin())).max(0.0)
    }

    pub fn peak_rate(&self) -> f64 {
        self.base_rate * (1.0 + self.amplitude)
    }

    pub fn answer_timeout(&self) -> Time {
        (self.answer_timeout_s * SECOND as f64).round() as Time
    }

    pub fn cache_timeout(&self) -> Time {
        (self.cache_timeout_s * SECOND as f64).round() as Time
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrival {
    pub index: u64,
    pub time: Time,
    pub origin: SourceId,
    pub query: Query,
}

/// Endless arrival stream, thinned from a homogeneous process at the peak
/// rate. It owns its generator, so every consumer sees the same stream.
pub struct Workload {
    spec: WorkloadSpec,
    terms: Vec<(SourceId, Vec<TermId>)>,
    rng: ChaCha8Rng,
    clock: f64,
    next_index: u64,
}

impl Workload {
    pub fn new(spec: &WorkloadSpec, network: &Network, seed: u64) -> Self {
        let terms = network.sources().map(|s| (s.id, s.terms().collect())).collect();
        Workload { spec: spec.clone(), terms, rng: ChaCha8Rng::seed_from_u64(seed), clock: 0.0, next_index: 0 }
    }
}

impl Iterator for Workload {
    type Item = Arrival;

    fn next(&mut self) -> Option<Arrival> {
        let peak = self.spec.peak_rate();
        if peak <= 0.0 || self.terms.is_empty() {
            return None;
        }
        let gap = Exp::new(peak).expect("positive rate");
        loop {
            self.clock += gap.sample(&mut self.rng);
            let time = (self.clock * SECOND as f64).round() as Time;
            if self.rng.gen::<f64>() * peak >= self.spec.rate(time) {
                continue;
            }
            let (origin, ts) = &self.terms[self.rng.gen_range(0..self.terms.len())];
            let k = self.rng.gen_range(self.spec.terms_min..=self.spec.terms_max).min(ts.len());
            let picked = sample(&mut self.rng, ts.len(), k).into_iter().map(|i| ts[i]);
            let query = Query::conjunction(ConjunctiveQuery::new(picked).expect("non-empty terminology"));
            let index = self.next_index;
            self.next_index += 1;
            return Some(Arrival { index, time, origin: *origin, query });
        }
    }
}
