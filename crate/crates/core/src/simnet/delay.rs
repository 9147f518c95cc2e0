use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::Time;

pub const MS: Time = 1_000_000;
pub const SECOND: Time = 1_000_000_000;

/// Propagation and bandwidth of one source's connection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub latency: Time,
    /// Bits per second; `f64::INFINITY` makes transmission free.
    pub bandwidth: f64,
}

impl Link {
    /// The path between two sources: mean latency, narrower bandwidth.
    pub fn between(a: Link, b: Link) -> Link {
        Link { latency: (a.latency + b.latency) / 2, bandwidth: a.bandwidth.min(b.bandwidth) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayModel {
    pub processing_per_packet_ns: Time,
    pub disk_access_ns: Time,
    pub latency_floor_ms: f64,
    pub latency_low_ms: f64,
    pub latency_high_ms: f64,
    pub latency_ceiling_ms: f64,
    /// Probability mass below `latency_low_ms` and above `latency_high_ms`.
    pub latency_tail: f64,
    pub narrowband_bps: f64,
    pub broadband_fraction: f64,
    pub broadband_min_bps: f64,
    pub broadband_max_bps: f64,
    pub fast_threshold_bps: f64,
    /// Fraction of all users above `fast_threshold_bps`.
    pub fast_fraction: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            processing_per_packet_ns: 1_000,
            disk_access_ns: 6 * MS,
            latency_floor_ms: 10.0,
            latency_low_ms: 70.0,
            latency_high_ms: 280.0,
            latency_ceiling_ms: 1000.0,
            latency_tail: 0.2,
            narrowband_bps: 56_000.0,
            broadband_fraction: 0.78,
            broadband_min_bps: 1e6,
            broadband_max_bps: 10e6,
            fast_threshold_bps: 3e6,
            fast_fraction: 0.30,
        }
    }
}

fn ms(x: f64) -> Time {
    (x * MS as f64).round() as Time
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), String> {
        let ordered = self.latency_floor_ms <= self.latency_low_ms
            && self.latency_low_ms <= self.latency_high_ms
            && self.latency_high_ms <= self.latency_ceiling_ms
            && self.latency_floor_ms >= 0.0;
        if !ordered {
            return Err("latency bands must satisfy 0 <= floor <= low <= high <= ceiling".into());
        }
        if !(0.0..=0.5).contains(&self.latency_tail) {
            return Err("latency_tail must lie in [0, 0.5]".into());
        }
        if !(0.0..=1.0).contains(&self.broadband_fraction) || !(0.0..=self.broadband_fraction).contains(&self.fast_fraction) {
            return Err("need 0 <= fast_fraction <= broadband_fraction <= 1".into());
        }
        let fast = self.fast_threshold_bps;
        if !(self.narrowband_bps > 0.0 && self.broadband_min_bps <= fast && fast <= self.broadband_max_bps) {
            return Err("need narrowband > 0 and broadband_min <= fast_threshold <= broadband_max".into());
        }
        Ok(())
    }

    /// Three bands: a low tail, a uniform middle and a high tail.
    pub fn sample_latency<R: Rng + ?Sized>(&self, rng: &mut R) -> Time {
        let u: f64 = rng.gen();
        let (lo, hi) = if u < self.latency_tail {
            (self.latency_floor_ms, self.latency_low_ms)
        } else if u < 1.0 - self.latency_tail {
            (self.latency_low_ms, self.latency_high_ms)
        } else {
            (self.latency_high_ms, self.latency_ceiling_ms)
        };
        ms(rng.gen_range(lo..=hi))
    }

    /// Narrowband users at a fixed rate; broadband users log-uniform on two
    /// pieces split at the fast threshold so the stated mass lies above it.
    pub fn sample_bandwidth<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.gen::<f64>() >= self.broadband_fraction {
            return self.narrowband_bps;
        }
        let fast_given_broad = if self.broadband_fraction > 0.0 { self.fast_fraction / self.broadband_fraction } else { 0.0 };
        if rng.gen::<f64>() < fast_given_broad {
            log_uniform(rng, self.fast_threshold_bps, self.broadband_max_bps)
        } else {
            log_uniform(rng, self.broadband_min_bps, self.fast_threshold_bps)
        }
    }

    pub fn sample_link<R: Rng + ?Sized>(&self, rng: &mut R) -> Link {
        let latency = self.sample_latency(rng);
        Link { latency, bandwidth: self.sample_bandwidth(rng) }
    }

    pub fn transmission(&self, size_bytes: f64, bandwidth: f64) -> Time {
        (size_bytes * 8.0 / bandwidth * SECOND as f64).round() as Time
    }

    /// Time a node spends on one step: its packets plus its disk accesses.
    pub fn processing(&self, packets: u64, disk: u32) -> Time {
        packets * self.processing_per_packet_ns + u64::from(disk) * self.disk_access_ns
    }

    /// Queue wait, processing, transmission and propagation of one
    /// single-packet message.
    pub fn message_delay(&self, size_bytes: f64, link: Link, queue_len: usize, disk: u32) -> Time {
        let queue = queue_len as Time * self.processing_per_packet_ns;
        queue + self.processing(1, disk) + self.transmission(size_bytes, link.bandwidth) + link.latency
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Body, QueryId, TellPayload, HEADER_BYTES, ID_BYTES, OBJECT_BYTES};
    use crate::model::{AnswerSet, ObjectId, SourceId};
    use crate::protocol::Payload;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const N: usize = 100_000;

    #[test]
    fn latency_quantiles() {
        let m = DelayModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Time> = (0..N).map(|_| m.sample_latency(&mut rng)).collect();
        let below = xs.iter().filter(|&&x| x < 70 * MS).count() as f64 / N as f64;
        let upto = xs.iter().filter(|&&x| x <= 280 * MS).count() as f64 / N as f64;
        assert!((below - 0.20).abs() <= 0.01, "{below}");
        assert!((upto - 0.80).abs() <= 0.01, "{upto}");
        assert!(xs.iter().all(|&x| (10 * MS..=1000 * MS).contains(&x)));
    }

    #[test]
    fn bandwidth_quantiles() {
        let m = DelayModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..N).map(|_| m.sample_bandwidth(&mut rng)).collect();
        let fast = xs.iter().filter(|&&x| x > 3e6).count() as f64 / N as f64;
        let broad = xs.iter().filter(|&&x| x > 56_000.0).count() as f64 / N as f64;
        assert!((fast - 0.30).abs() <= 0.01, "{fast}");
        assert!((broad - 0.78).abs() <= 0.01, "{broad}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = DelayModel::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| m.sample_link(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn delay_decomposition() {
        let m = DelayModel::default();
        let link = Link { latency: 100 * MS, bandwidth: 3e6 };
        let tell = |n: u32| Body::Tell {
            id: QueryId::new(SourceId(0), 1),
            payload: TellPayload::Value(Payload::Answer((0..n).map(ObjectId).collect::<AnswerSet>())),
        };
        let empty = tell(0).size_bytes();
        assert_eq!(empty, HEADER_BYTES + ID_BYTES);
        let expected = 100 * MS + 1_000 + ((empty * 8.0 / 3e6) * 1e9).round() as Time;
        assert_eq!(m.message_delay(empty, link, 0, 0), expected);

        let ten = tell(10).size_bytes();
        assert!((ten - empty - 10.0 * OBJECT_BYTES).abs() < 1e-9);
        let grown = m.message_delay(ten, link, 0, 0) - m.message_delay(empty, link, 0, 0);
        let oracle = 634.0 * 8.0 / 3e6 * 1e9;
        assert!((grown as f64 - oracle).abs() <= 1.0);

        let free = Link { latency: 5 * MS, bandwidth: f64::INFINITY };
        assert_eq!(m.message_delay(0.0, free, 0, 0), 5 * MS + 1_000);
        assert_eq!(m.message_delay(0.0, free, 3, 2), 5 * MS + 4_000 + 12 * MS);
    }
}
