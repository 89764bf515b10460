//! Synthetic worlds: brokers with hidden sign-up curves, a request
//! schedule split into days and intervals, and lazily evaluated pair
//! utilities.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Broker, BrokerId, Request, RequestId, UtilityModel};
use crate::error::{Error, Result};

/// Knee range of the sign-up curve, inclusive.
pub const KAPPA_RANGE: (u32, u32) = (10, 50);
/// Base sign-up rate range.
pub const QUALITY_RANGE: (f64, f64) = (0.16, 0.30);
/// Per-request decay of the sign-up rate past the knee.
pub const SLOPE_RANGE: (f64, f64) = (0.008, 0.02);
pub const SIGNUP_FLOOR: f64 = 0.02;
pub const SIGNUP_NOISE: f64 = 0.02;
/// Request attractiveness range.
pub const AFFINITY_RANGE: (f64, f64) = (0.2, 1.0);
/// Half-width of the uniform pair noise added to utilities.
pub const UTILITY_NOISE: f64 = 0.02;
/// Std of the noise on the informative broker features.
pub const FEATURE_NOISE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_brokers: usize,
    /// Requested total; the schedule rounds it to whole batches.
    pub n_requests: usize,
    pub n_days: u32,
    /// Requests per batch divided by the broker count.
    pub sigma: f64,
    pub feature_dim: usize,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig { n_brokers: 2000, n_requests: 50000, n_days: 14, sigma: 0.015, feature_dim: 18, rng_seed: 0 }
    }
}

impl WorldConfig {
    /// Requests per batch, `ceil(sigma * n_brokers)`.
    pub fn batch_size(&self) -> usize {
        (self.sigma * self.n_brokers as f64 - 1e-9).ceil().max(0.0) as usize
    }

    /// Intervals per day needed to carry `n_requests` at the batch size.
    pub fn intervals_per_day(&self) -> u32 {
        let per_day = self.batch_size() * self.n_days as usize;
        if per_day == 0 {
            return 0;
        }
        ((self.n_requests as f64 / per_day as f64).round() as u32).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidConfig("sigma must be a non-negative number".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be at least 1".into()));
        }
        if self.n_requests > 0 && (self.n_brokers == 0 || self.n_days == 0 || self.batch_size() == 0) {
            return Err(Error::InfeasibleWorld(format!(
                "{} requests cannot be split into batches ({} brokers, {} days, sigma {})",
                self.n_requests, self.n_brokers, self.n_days, self.sigma
            )));
        }
        Ok(())
    }
}

/// Hidden per-broker sign-up curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kappa: Vec<u32>,
    pub q: Vec<f64>,
    pub rho: Vec<f64>,
    pub floor: f64,
    pub noise: f64,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }
}

/// Noise-free sign-up rate of `broker` at `workload`.
pub fn true_signup_rate(gt: &GroundTruth, broker: BrokerId, workload: u32) -> f64 {
    let b = broker.0 as usize;
    let (kappa, q) = (gt.kappa[b], gt.q[b]);
    if workload <= kappa {
        q
    } else {
        gt.floor.max(q - gt.rho[b] * (workload - kappa) as f64)
    }
}

/// Sign-up rate with seeded Gaussian noise, clipped to `[0, 1]`.
pub fn sample_signup_rate<R: Rng + ?Sized>(gt: &GroundTruth, broker: BrokerId, workload: u32, rng: &mut R) -> f64 {
    let base = true_signup_rate(gt, broker, workload);
    if gt.noise <= 0.0 {
        return base;
    }
    let n = Normal::new(0.0, gt.noise).expect("positive std");
    (base + n.sample(rng)).clamp(0.0, 1.0)
}

/// Expected normalized day reward of capping `broker` at `capacity` when
/// `demand` requests would come its way.
pub fn expected_reward(gt: &GroundTruth, broker: BrokerId, capacity: u32, demand: u32, max_capacity: u32) -> f64 {
    let served = capacity.min(demand);
    served as f64 * true_signup_rate(gt, broker, served) / max_capacity.max(1) as f64
}

/// Exhaustive scan of `candidates` for the best expected reward. Ties go
/// to the smaller capacity.
pub fn oracle_best_capacity(gt: &GroundTruth, broker: BrokerId, demand: u32, candidates: &[u32]) -> (u32, f64) {
    let max_c = candidates.iter().copied().max().unwrap_or(1);
    let mut best = (candidates.first().copied().unwrap_or(1), f64::NEG_INFINITY);
    for &c in candidates {
        let r = expected_reward(gt, broker, c, demand, max_c);
        if r > best.1 {
            best = (c, r);
        }
    }
    best
}

/// Pair utilities `clip(q_b * a_r + eps)`, computed on demand so that large
/// worlds never hold the dense matrix. An explicit table overrides the
/// formula for pairs it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairUtilities {
    seed: u64,
    quality: Vec<f64>,
    affinity: Vec<f64>,
    noise: f64,
    table: Option<HashMap<(RequestId, BrokerId), f64>>,
}

impl PairUtilities {
    pub fn generated(seed: u64, quality: Vec<f64>, affinity: Vec<f64>, noise: f64) -> Self {
        PairUtilities { seed, quality, affinity, noise, table: None }
    }

    /// Utilities given entirely by a table; missing pairs are forbidden.
    pub fn from_table(table: HashMap<(RequestId, BrokerId), f64>) -> Self {
        PairUtilities { seed: 0, quality: Vec::new(), affinity: Vec::new(), noise: 0.0, table: Some(table) }
    }

    pub fn affinity(&self) -> &[f64] {
        &self.affinity
    }

    fn formula(&self, r: RequestId, b: BrokerId) -> Option<f64> {
        let q = *self.quality.get(b.0 as usize)?;
        let a = *self.affinity.get(r.0 as usize)?;
        let eps = self.noise * (2.0 * unit_hash(self.seed, r.0, b.0) - 1.0);
        Some((q * a + eps).clamp(1e-6, 1.0))
    }
}

impl UtilityModel for PairUtilities {
    fn utility(&self, request: RequestId, broker: BrokerId) -> Option<f64> {
        match &self.table {
            Some(t) => t.get(&(request, broker)).copied(),
            None => self.formula(request, broker),
        }
    }
}

/// Uniform value in `[0, 1)` determined by `(seed, r, b)` (splitmix64
/// finalizer).
fn unit_hash(seed: u64, r: u32, b: u32) -> f64 {
    let mut z = seed ^ ((r as u64) << 32 | b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub brokers: Vec<Broker>,
    /// Sorted by (day, interval, id).
    pub requests: Vec<Request>,
    pub utilities: PairUtilities,
    pub truth: GroundTruth,
    pub intervals_per_day: u32,
}

impl World {
    pub fn batch_size(&self) -> usize {
        self.config.batch_size()
    }

    pub fn n_days(&self) -> u32 {
        self.config.n_days
    }

    pub fn broker_ids(&self) -> Vec<BrokerId> {
        self.brokers.iter().map(|b| b.id).collect()
    }

    /// Requests arriving in `(day, interval)`.
    pub fn batch(&self, day: u32, interval: u32) -> &[Request] {
        let key = |r: &Request| (r.day, r.interval);
        let lo = self.requests.partition_point(|r| key(r) < (day, interval));
        let hi = self.requests.partition_point(|r| key(r) <= (day, interval));
        &self.requests[lo..hi]
    }

    pub fn write_csv(&self, dir: &Path, with_utilities: bool) -> Result<()> {
        crate::io::write_world(self, dir, with_utilities)
    }
}

pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(1);
    let feat_noise = Normal::new(0.0, FEATURE_NOISE).expect("positive std");
    let n = config.n_brokers;
    let mut truth = GroundTruth {
        kappa: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        rho: Vec::with_capacity(n),
        floor: SIGNUP_FLOOR,
        noise: SIGNUP_NOISE,
    };
    let mut brokers = Vec::with_capacity(n);
    for b in 0..n {
        let kappa = rng.random_range(KAPPA_RANGE.0..=KAPPA_RANGE.1);
        let q = rng.random_range(QUALITY_RANGE.0..QUALITY_RANGE.1);
        let rho = rng.random_range(SLOPE_RANGE.0..SLOPE_RANGE.1);
        let informative = [
            1.0,
            scale(kappa as f64, KAPPA_RANGE.0 as f64, KAPPA_RANGE.1 as f64) + feat_noise.sample(&mut rng),
            scale(q, QUALITY_RANGE.0, QUALITY_RANGE.1) + feat_noise.sample(&mut rng),
            scale(rho, SLOPE_RANGE.0, SLOPE_RANGE.1) + feat_noise.sample(&mut rng),
        ];
        let features: Vec<f64> = (0..config.feature_dim)
            .map(|i| if i < informative.len() { informative[i] } else { rng.random::<f64>() })
            .collect();
        truth.kappa.push(kappa);
        truth.q.push(q);
        truth.rho.push(rho);
        brokers.push(Broker::new(BrokerId(b as u32), features));
    }

    let ipd = config.intervals_per_day();
    let per_batch = config.batch_size();
    let mut requests = Vec::new();
    if config.n_requests > 0 {
        for day in 0..config.n_days {
            for interval in 0..ipd {
                for _ in 0..per_batch {
                    let id = RequestId(requests.len() as u32);
                    requests.push(Request { id, day, interval });
                }
            }
        }
    }
    let mut rng_req = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng_req.set_stream(2);
    let affinity = (0..requests.len()).map(|_| rng_req.random_range(AFFINITY_RANGE.0..AFFINITY_RANGE.1)).collect();
    let utilities = PairUtilities::generated(config.rng_seed, truth.q.clone(), affinity, UTILITY_NOISE);

    Ok(World {
        config: config.clone(),
        brokers,
        requests,
        utilities,
        truth,
        intervals_per_day: if config.n_requests > 0 { ipd } else { 0 },
    })
}

fn scale(x: f64, lo: f64, hi: f64) -> f64 {
    (x - lo) / (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig { n_brokers: 40, n_requests: 600, n_days: 3, sigma: 0.1, feature_dim: 6, rng_seed: 9 }
    }

    #[test]
    fn default_batch_is_thirty() {
        let c = WorldConfig::default();
        assert_eq!(c.batch_size(), 30);
        assert_eq!(c.intervals_per_day(), 119);
    }

    #[test]
    fn empty_schedule() {
        let w = generate_world(&WorldConfig { n_requests: 0, ..small() }).unwrap();
        assert!(w.requests.is_empty());
        assert_eq!(w.brokers.len(), 40);
    }

    #[test]
    fn zero_batches_rejected() {
        let e = generate_world(&WorldConfig { sigma: 0.0, ..small() }).unwrap_err();
        assert!(matches!(e, Error::InfeasibleWorld(_)));
        let e = generate_world(&WorldConfig { n_days: 0, ..small() }).unwrap_err();
        assert!(matches!(e, Error::InfeasibleWorld(_)));
    }

    #[test]
    fn batches_have_uniform_size() {
        let w = generate_world(&small()).unwrap();
        assert_eq!(w.batch_size(), 4);
        for day in 0..3 {
            for i in 0..w.intervals_per_day {
                assert_eq!(w.batch(day, i).len(), 4);
            }
        }
        assert_eq!(w.requests.len(), 4 * 3 * w.intervals_per_day as usize);
    }

    #[test]
    fn knee_continuity() {
        let gt = GroundTruth { kappa: vec![20], q: vec![0.25], rho: vec![0.01], floor: 0.02, noise: 0.0 };
        let b = BrokerId(0);
        assert_eq!(true_signup_rate(&gt, b, 0), 0.25);
        assert_eq!(true_signup_rate(&gt, b, 20), 0.25);
        assert!((true_signup_rate(&gt, b, 21) - 0.24).abs() < 1e-15);
        assert_eq!(true_signup_rate(&gt, b, 500), 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_signup_rate(&gt, b, 3, &mut rng), 0.25);
    }

    #[test]
    fn oracle_cases() {
        let c = [10, 20, 30, 40, 50, 60];
        // steep decline: smallest capacity covering demand
        let gt = GroundTruth { kappa: vec![0], q: vec![0.3], rho: vec![0.001], floor: 0.0, noise: 0.0 };
        assert_eq!(oracle_best_capacity(&gt, BrokerId(0), 18, &c).0, 20);
        // flat curve with no demand: all ties
        let flat = GroundTruth { kappa: vec![100], q: vec![0.2], rho: vec![0.0], floor: 0.0, noise: 0.0 };
        assert_eq!(oracle_best_capacity(&flat, BrokerId(0), 0, &c).0, 10);
        // knee below the smallest arm
        let low = GroundTruth { kappa: vec![3], q: vec![0.3], rho: vec![0.05], floor: 0.0, noise: 0.0 };
        assert_eq!(oracle_best_capacity(&low, BrokerId(0), 200, &c).0, 10);
        // knee at 34 with abundant demand
        let mid = GroundTruth { kappa: vec![34], q: vec![0.3], rho: vec![0.02], floor: 0.02, noise: 0.0 };
        let best = c
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let f = |x: u32| x as f64 * true_signup_rate(&mid, BrokerId(0), x);
                f(a).partial_cmp(&f(b)).unwrap().then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(oracle_best_capacity(&mid, BrokerId(0), 200, &c).0, best);
    }

    #[test]
    fn utilities_in_unit_interval() {
        let w = generate_world(&small()).unwrap();
        for r in &w.requests {
            for b in &w.brokers {
                let u = w.utilities.utility(r.id, b.id).unwrap();
                assert!((0.0..=1.0).contains(&u));
            }
        }
        assert_eq!(w.utilities.utility(RequestId(100_000), BrokerId(0)), None);
    }

    #[test]
    fn features_carry_truth() {
        let w = generate_world(&WorldConfig { n_brokers: 400, ..small() }).unwrap();
        for broker in &w.brokers {
            assert_eq!(broker.features.len(), 6);
            assert_eq!(broker.features[0], 1.0);
        }
        let n = w.brokers.len() as f64;
        let x: Vec<f64> = w.brokers.iter().map(|b| b.features[1]).collect();
        let y: Vec<f64> = w.truth.kappa.iter().map(|&k| k as f64).collect();
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        assert!(cov / (vx * vy).sqrt() > 0.5);
    }

    #[test]
    fn same_seed_same_world() {
        let a = generate_world(&small()).unwrap();
        let b = generate_world(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_world(&WorldConfig { rng_seed: 10, ..small() }).unwrap();
        assert_ne!(a.truth, c.truth);
    }
}
