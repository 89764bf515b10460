//! Domain types shared by every module and the two global metrics: total
//! utility and capacity feasibility.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use crate::config::EngineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BrokerId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u32);

impl fmt::Display for BrokerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A broker and its daily counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Broker {
    pub id: BrokerId,
    /// Working-status context.
    pub features: Vec<f64>,
    /// Requests served in the current day.
    pub workload: u32,
    /// Current estimated daily capacity, always at least 1.
    pub capacity: u32,
    pub accumulated_utility: f64,
    /// Days on which workload reached capacity.
    pub capacity_hits: u32,
    pub days_active: u32,
}

impl Broker {
    pub fn new(id: BrokerId, features: Vec<f64>) -> Self {
        Broker {
            id,
            features,
            workload: 0,
            capacity: 1,
            accumulated_utility: 0.0,
            capacity_hits: 0,
            days_active: 0,
        }
    }

    pub fn residue(&self) -> u32 {
        self.capacity.saturating_sub(self.workload)
    }

    pub fn is_available(&self) -> bool {
        self.workload < self.capacity
    }

    /// Closes the day: records whether capacity was hit and resets the
    /// daily counters.
    pub fn close_day(&mut self) {
        self.days_active += 1;
        if self.workload >= self.capacity {
            self.capacity_hits += 1;
        }
        self.workload = 0;
        self.accumulated_utility = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub day: u32,
    /// Interval index within the day.
    pub interval: u32,
}

impl Request {
    /// Global batch index across days.
    pub fn batch(&self, intervals_per_day: u32) -> u64 {
        self.day as u64 * intervals_per_day as u64 + self.interval as u64
    }
}

/// One bandit observation: context, the workload actually served and the
/// reward it earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTriple<T = f64> {
    pub context: Vec<T>,
    pub workload: u32,
    pub reward: T,
}

impl<T: Real> TrialTriple<T> {
    pub fn new(context: Vec<T>, workload: u32, reward: T) -> Self {
        TrialTriple { context, workload, reward }
    }
}

/// Source of pair utilities `u_{r,b}`.
pub trait UtilityModel {
    fn utility(&self, request: RequestId, broker: BrokerId) -> Option<f64>;
}

impl UtilityModel for HashMap<(RequestId, BrokerId), f64> {
    fn utility(&self, request: RequestId, broker: BrokerId) -> Option<f64> {
        self.get(&(request, broker)).copied()
    }
}

impl UtilityModel for BTreeMap<(RequestId, BrokerId), f64> {
    fn utility(&self, request: RequestId, broker: BrokerId) -> Option<f64> {
        self.get(&(request, broker)).copied()
    }
}

/// A single matched pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub day: u32,
    pub interval: u32,
    pub request: RequestId,
    pub broker: BrokerId,
    /// Raw pair utility at assignment time. Zeroed when the client rejects
    /// the broker.
    pub utility: f64,
    /// Utility realized after the day's workload is known.
    pub realized: f64,
    pub rejected: bool,
}

/// Assignment indicators for every interval of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    assignments: Vec<Assignment>,
}

impl MatchResult {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, a: Assignment) {
        self.assignments.push(a);
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn assignments_mut(&mut self) -> &mut [Assignment] {
        &mut self.assignments
    }

    /// Pairs still in force, i.e. not rejected by the client.
    pub fn active(&self) -> impl Iterator<Item = &Assignment> {
        self.assignments.iter().filter(|a| !a.rejected)
    }

    /// Concatenates results over disjoint intervals.
    pub fn merge(&mut self, other: MatchResult) {
        self.assignments.extend(other.assignments);
    }

    pub fn for_day(&self, day: u32) -> MatchResult {
        MatchResult {
            assignments: self.assignments.iter().filter(|a| a.day == day).cloned().collect(),
        }
    }

    pub fn realized_total(&self) -> f64 {
        self.active().map(|a| a.realized).sum()
    }

    /// Active assignment count per broker, over the whole result.
    pub fn served(&self) -> BTreeMap<BrokerId, u32> {
        let mut out = BTreeMap::new();
        for a in self.active() {
            *out.entry(a.broker).or_insert(0) += 1;
        }
        out
    }

    /// True when, within every interval, no request and no broker appears
    /// in more than one active pair.
    pub fn is_one_to_one(&self) -> bool {
        let mut seen_r = std::collections::HashSet::new();
        let mut seen_b = std::collections::HashSet::new();
        for a in self.active() {
            if !seen_r.insert((a.day, a.interval, a.request)) {
                return false;
            }
            if !seen_b.insert((a.day, a.interval, a.broker)) {
                return false;
            }
        }
        true
    }
}

/// Sum of `u_{r,b}` over every active pair.
pub fn total_utility(result: &MatchResult, utilities: &impl UtilityModel) -> Result<f64> {
    let mut total = 0.0;
    for a in result.active() {
        let u = utilities
            .utility(a.request, a.broker)
            .ok_or(Error::MissingUtility { request: a.request, broker: a.broker })?;
        total += u;
    }
    Ok(total)
}

/// True iff every broker's active assignment count is within its capacity.
/// Brokers missing from `capacities` are treated as capacity 0.
pub fn assert_capacity_feasible(result: &MatchResult, capacities: &HashMap<BrokerId, u32>) -> bool {
    result
        .served()
        .into_iter()
        .all(|(b, n)| n <= capacities.get(&b).copied().unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(day: u32, interval: u32, r: u32, b: u32, u: f64) -> Assignment {
        Assignment {
            day,
            interval,
            request: RequestId(r),
            broker: BrokerId(b),
            utility: u,
            realized: u,
            rejected: false,
        }
    }

    fn fig7_utilities() -> HashMap<(RequestId, BrokerId), f64> {
        HashMap::from([
            ((RequestId(1), BrokerId(1)), 0.4),
            ((RequestId(2), BrokerId(1)), 0.3),
            ((RequestId(1), BrokerId(2)), 0.4),
            ((RequestId(2), BrokerId(2)), 0.5),
        ])
    }

    #[test]
    fn worked_example_total() {
        let mut m = MatchResult::new();
        m.push(pair(0, 0, 2, 1, 0.3));
        m.push(pair(0, 0, 1, 2, 0.4));
        let t = total_utility(&m, &fig7_utilities()).unwrap();
        assert!((t - 0.7).abs() < 1e-12);
    }

    #[test]
    fn empty_total_is_zero() {
        assert_eq!(total_utility(&MatchResult::new(), &fig7_utilities()).unwrap(), 0.0);
    }

    #[test]
    fn missing_pair_is_reported() {
        let mut m = MatchResult::new();
        m.push(pair(0, 0, 9, 1, 0.0));
        match total_utility(&m, &fig7_utilities()) {
            Err(Error::MissingUtility { request, broker }) => {
                assert_eq!((request, broker), (RequestId(9), BrokerId(1)))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejected_pairs_contribute_nothing() {
        let mut m = MatchResult::new();
        let mut a = pair(0, 0, 1, 1, 0.4);
        a.rejected = true;
        a.utility = 0.0;
        m.push(a);
        assert_eq!(total_utility(&m, &fig7_utilities()).unwrap(), 0.0);
        assert!(m.served().is_empty());
    }

    #[test]
    fn capacity_violation_detected() {
        let mut m = MatchResult::new();
        for i in 0..3 {
            m.push(pair(0, i, i, 7, 0.1));
        }
        let caps = HashMap::from([(BrokerId(7), 2)]);
        assert!(!assert_capacity_feasible(&m, &caps));
        let caps = HashMap::from([(BrokerId(7), 3)]);
        assert!(assert_capacity_feasible(&m, &caps));
    }

    #[test]
    fn empty_result_is_feasible() {
        assert!(assert_capacity_feasible(&MatchResult::new(), &HashMap::new()));
    }

    #[test]
    fn one_to_one_detects_double_use() {
        let mut m = MatchResult::new();
        m.push(pair(0, 0, 1, 1, 0.1));
        m.push(pair(0, 1, 2, 1, 0.1));
        assert!(m.is_one_to_one());
        m.push(pair(0, 1, 3, 1, 0.1));
        assert!(!m.is_one_to_one());
    }

    #[test]
    fn random_instance_matches_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut utils = HashMap::new();
        let mut indicator = [[0u8; 6]; 6];
        let mut u = [[0.0f64; 6]; 6];
        for r in 0..6 {
            for b in 0..6 {
                u[r][b] = rng.random::<f64>();
                utils.insert((RequestId(r as u32), BrokerId(b as u32)), u[r][b]);
            }
        }
        // a random permutation as the matching
        let mut perm: Vec<usize> = (0..6).collect();
        for i in (1..6).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut m = MatchResult::new();
        for r in 0..6 {
            indicator[r][perm[r]] = 1;
            m.push(pair(0, 0, r as u32, perm[r] as u32, u[r][perm[r]]));
        }
        let mut oracle = 0.0;
        for r in 0..6 {
            for b in 0..6 {
                oracle += u[r][b] * indicator[r][b] as f64;
            }
        }
        assert_eq!(total_utility(&m, &utils).unwrap(), oracle);
    }
}
