use serde::{Deserialize, Serialize};

use super::delay::{MS, SECOND};
use crate::protocol::Time;

pub const BUCKET: Time = 300 * SECOND;
/// Largest change, in ms, tolerated across the stabilization window.
pub const STABLE_EPS_MS: f64 = 1e-2;
pub const STABLE_WINDOW: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsBucket {
    pub period: usize,
    pub queries: u64,
    pub rt_sum_ms: f64,
    pub objects: u64,
    pub messages: u64,
    pub packets: u64,
    pub visited: u64,
    pub sub_queries: u64,
    pub timeouts: u64,
}

impl StatsBucket {
    /// Response time per retrieved object in this period, ms.
    pub fn rt_per_object(&self) -> Option<f64> {
        (self.objects > 0).then(|| self.rt_sum_ms / self.objects as f64)
    }

    pub fn visited_avg(&self) -> Option<f64> {
        (self.queries > 0).then(|| self.visited as f64 / self.queries as f64)
    }

    pub fn absorb(&mut self, q: &QueryRecord) {
        self.queries += 1;
        self.rt_sum_ms += q.rt as f64 / MS as f64;
        self.objects += q.size;
        self.messages += q.messages;
        self.packets += q.packets;
        self.visited += q.visited;
        self.sub_queries += q.sub_queries;
        self.timeouts += u64::from(q.timed_out);
    }
}

/// Measurements of one completed application query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub issued: Time,
    pub rt: Time,
    pub size: u64,
    pub sub_queries: u64,
    pub messages: u64,
    pub packets: u64,
    pub visited: u64,
    pub timed_out: bool,
}

/// Running response time per object after each bucket, over all buckets so
/// far; `None` until some object has been retrieved.
pub fn cumulative_rt_per_object(buckets: &[StatsBucket]) -> Vec<Option<f64>> {
    let mut rt = 0.0;
    let mut objects = 0u64;
    buckets
        .iter()
        .map(|b| {
            rt += b.rt_sum_ms;
            objects += b.objects;
            (objects > 0).then(|| rt / objects as f64)
        })
        .collect()
}

/// One-based index of the first bucket closing a window of three defined
/// values whose spread is below the tolerance.
pub fn stabilization_check(series: &[Option<f64>]) -> Option<usize> {
    if series.len() < STABLE_WINDOW {
        return None;
    }
    series.windows(STABLE_WINDOW).position(|w| {
        let vals: Option<Vec<f64>> = w.iter().copied().collect();
        vals.is_some_and(|v| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo < STABLE_EPS_MS
        })
    })
    .map(|i| i + STABLE_WINDOW)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("need two samples of equal length, got {0} and {1}")]
    Length(usize, usize),
    #[error("a sample has zero variance")]
    Degenerate,
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt())
}

/// Pearson correlation coefficient.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(StatsError::Length(xs.len(), ys.len()));
    }
    let mx = mean(xs).expect("non-empty");
    let my = mean(ys).expect("non-empty");
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn some(xs: &[f64]) -> Vec<Option<f64>> {
        xs.iter().copied().map(Some).collect()
    }

    #[test]
    fn constant_series_stable_at_third() {
        assert_eq!(stabilization_check(&some(&[4.0; 6])), Some(3));
    }

    #[test]
    fn worked_series() {
        // Buckets 2..4 span 25.000 - 24.991 = 0.009 < 0.01.
        assert_eq!(stabilization_check(&some(&[30.0, 25.0, 24.991, 24.995, 24.992])), Some(4));
        assert_eq!(stabilization_check(&some(&[30.0, 25.02, 24.991, 24.995, 24.992])), Some(5));
    }

    #[test]
    fn diverging_and_short_series() {
        let xs: Vec<f64> = (0..50).map(|i| f64::from(i) * 0.5).collect();
        assert_eq!(stabilization_check(&some(&xs)), None);
        assert_eq!(stabilization_check(&some(&[1.0, 1.0])), None);
        assert_eq!(stabilization_check(&[None, Some(1.0), Some(1.0), Some(1.0)]), Some(4));
    }

    #[test]
    fn cumulative_average() {
        let b = |rt: f64, objects: u64| StatsBucket { rt_sum_ms: rt, objects, ..StatsBucket::default() };
        let c = cumulative_rt_per_object(&[b(5.0, 0), b(10.0, 3), b(6.0, 2)]);
        assert_eq!(c, vec![None, Some(5.0), Some(21.0 / 5.0)]);
    }

    #[test]
    fn pearson_extremes() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let twice: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((correlation(&xs, &twice).unwrap() - 1.0).abs() < 1e-12);
        assert!((correlation(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(correlation(&xs, &[1.0; 20]), Err(StatsError::Degenerate));
        assert_eq!(correlation(&[1.0], &[1.0]), Err(StatsError::Length(1, 1)));
    }

    #[test]
    fn independent_samples_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let ys: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        assert!(correlation(&xs, &ys).unwrap().abs() < 0.05);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[]), None);
        assert_eq!(std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), Some(2.0));
    }

    proptest! {
        #[test]
        fn correlation_bounded_and_symmetric(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..60)) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(r) = correlation(&xs, &ys) {
                prop_assert!((-1.0..=1.0).contains(&r));
                let s = correlation(&ys, &xs).unwrap();
                prop_assert!((r - s).abs() < 1e-9);
            }
        }
    }
}
