//! Day-by-day simulation of every assignment policy over a world.
//!
//! Each day starts with capacity estimates (for the policies that have
//! them), then walks the intervals: pending requests plus the interval's
//! arrivals are assigned, unmatched ones roll over. At day end the final
//! workloads fix the realized utilities, which feed the bandit.

mod estimator;
mod ledger;
mod policy;

use std::collections::{HashMap, VecDeque};
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use estimator::CapacityEstimator;
pub use ledger::{reassign, DayLedger, PendingRequest};
pub use policy::Policy;

use crate::cbs;
use crate::config::EngineConfig;
use crate::domain::{Assignment, Broker, BrokerId, MatchResult, RequestId, TrialTriple, UtilityModel};
use crate::error::{Error, Result};
use crate::matching::{solve_max_weight_matching, WeightedBipartiteGraph};
use crate::simgen::{self, World};
use crate::valuefn::{SaturationTracker, ValueTable};

/// Trailing days behind the random baseline's quality weights.
pub const RR_WINDOW_DAYS: usize = 7;
pub const RR_WEIGHT_FLOOR: f64 = 0.01;
/// KM weight of a pair the client has ruled out. Such a pair is dropped
/// if the solver is forced to use it.
const FORBIDDEN: f64 = -1.0e6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Report per-interval assignment wall-clock in the metrics.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetric {
    pub policy: String,
    pub day: u32,
    pub interval: u32,
    pub batch_utility: f64,
    pub cumulative_utility: f64,
    pub wallclock_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub broker_id: u32,
    pub day: u32,
    pub capacity: Option<u32>,
    pub workload: u32,
    pub day_utility: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub policy: Policy,
    pub result: MatchResult,
    pub metrics: Vec<IntervalMetric>,
    pub ledger: Vec<LedgerRow>,
    /// Assignment-step wall-clock per interval, always measured.
    pub assign_ms: Vec<f64>,
    /// Requests still pending after the last interval.
    pub unassigned: usize,
    pub value_table: Option<ValueTable<f64>>,
}

impl RunReport {
    /// Sum of raw pair utilities over active pairs, in assignment order.
    pub fn total_utility(&self) -> f64 {
        self.result.active().map(|a| a.utility).sum()
    }

    /// Sum of workload-adjusted utilities.
    pub fn realized_utility(&self) -> f64 {
        self.result.realized_total()
    }

    /// Capacities in force on `day`, for capacity-aware policies.
    pub fn capacities(&self, day: u32) -> HashMap<BrokerId, u32> {
        self.ledger
            .iter()
            .filter(|r| r.day == day)
            .filter_map(|r| r.capacity.map(|c| (BrokerId(r.broker_id), c)))
            .collect()
    }
}

/// Runs `policy` from scratch; bandit policies start from a warm-started
/// pooled model.
pub fn run_policy(policy: Policy, world: &World, cfg: &EngineConfig, opts: RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    policy.validate()?;
    if policy.uses_bandit() {
        let personalized = policy != Policy::An;
        let mut est = CapacityEstimator::warm_started(world, personalized, cfg)?;
        Sim::new(policy, world, cfg, opts, Some(&mut est)).run()
    } else {
        Sim::new(policy, world, cfg, opts, None).run()
    }
}

/// Value-guided assignment with capacities from `bandits`.
pub fn run_vfga(world: &World, bandits: &mut CapacityEstimator, cfg: &EngineConfig, opts: RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    Sim::new(Policy::Lacb, world, cfg, opts, Some(bandits)).run()
}

/// `run_vfga` with candidate broker pruning before each KM solve.
pub fn run_lacb_opt(world: &World, bandits: &mut CapacityEstimator, cfg: &EngineConfig, opts: RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    Sim::new(Policy::LacbOpt, world, cfg, opts, Some(bandits)).run()
}

/// Any comparison policy. `Lacb` and `LacbOpt` are routed to their own
/// runners with a default estimator.
pub fn run_baseline(policy: Policy, world: &World, cfg: &EngineConfig) -> Result<RunReport> {
    run_policy(policy, world, cfg, RunOptions::default())
}

/// One KM assignment step over explicit requests and brokers, updating the
/// ledger's workloads. Returns the pairs and their weight total.
pub fn assign_interval(
    requests: &[RequestId],
    brokers: &[BrokerId],
    weight: impl Fn(RequestId, BrokerId) -> Option<f64>,
    ledger: &mut DayLedger,
) -> Result<(Vec<(RequestId, BrokerId)>, f64)> {
    let (pairs, total) = km_pairs(requests.len(), brokers, |i, b| weight(requests[i], b))?;
    let out: Vec<_> = pairs.into_iter().map(|(i, b)| (requests[i], b)).collect();
    for &(_, b) in &out {
        ledger.workload[b.0 as usize] += 1;
    }
    Ok((out, total))
}

/// Balanced KM over `rows x cols`; pairs on forbidden or padding cells are
/// dropped.
fn km_pairs(
    rows: usize,
    cols: &[BrokerId],
    weight: impl Fn(usize, BrokerId) -> Option<f64>,
) -> Result<(Vec<(usize, BrokerId)>, f64)> {
    if rows == 0 || cols.is_empty() {
        return Ok((Vec::new(), 0.0));
    }
    let g = WeightedBipartiteGraph::from_fn(rows, cols.len(), |i, j| weight(i, cols[j]).unwrap_or(FORBIDDEN))?;
    let m = solve_max_weight_matching(&g.balance())?;
    let mut pairs = Vec::with_capacity(m.pairs.len());
    let mut total = 0.0;
    for (i, j) in m.pairs {
        if let Some(w) = weight(i, cols[j]) {
            pairs.push((i, cols[j]));
            total += w;
        }
    }
    Ok((pairs, total))
}

struct Sim<'a> {
    policy: Policy,
    world: &'a World,
    cfg: &'a EngineConfig,
    opts: RunOptions,
    est: Option<&'a mut CapacityEstimator>,
    brokers: Vec<Broker>,
    result: MatchResult,
    metrics: Vec<IntervalMetric>,
    ledger_rows: Vec<LedgerRow>,
    assign_ms: Vec<f64>,
    pending: Vec<PendingRequest>,
    choice_rng: ChaCha8Rng,
    appeal_rng: ChaCha8Rng,
    table: ValueTable<f64>,
    saturation: SaturationTracker,
    /// Per broker: trailing (realized total, served) per day.
    quality: Vec<VecDeque<(f64, u32)>>,
    cumulative: f64,
}

impl<'a> Sim<'a> {
    fn new(policy: Policy, world: &'a World, cfg: &'a EngineConfig, opts: RunOptions, est: Option<&'a mut CapacityEstimator>) -> Self {
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            r.set_stream(s);
            r
        };
        Sim {
            policy,
            world,
            cfg,
            opts,
            est,
            brokers: world.brokers.clone(),
            result: MatchResult::new(),
            metrics: Vec::new(),
            ledger_rows: Vec::new(),
            assign_ms: Vec::new(),
            pending: Vec::new(),
            choice_rng: stream(12),
            appeal_rng: stream(13),
            table: ValueTable::new(cfg.max_capacity(), cfg.beta, cfg.gamma).expect("validated config"),
            saturation: SaturationTracker::new(cfg.saturation_window),
            quality: vec![VecDeque::new(); world.brokers.len()],
            cumulative: 0.0,
        }
    }

    fn run(mut self) -> Result<RunReport> {
        if self.policy.uses_bandit() && self.est.is_none() {
            return Err(Error::InvalidConfig(format!("{} needs a capacity estimator", self.policy)));
        }
        for day in 0..self.world.n_days() {
            self.run_day(day)?;
        }
        let uses_table = matches!(self.policy, Policy::Lacb | Policy::LacbOpt);
        Ok(RunReport {
            policy: self.policy,
            result: self.result,
            metrics: self.metrics,
            ledger: self.ledger_rows,
            assign_ms: self.assign_ms,
            unassigned: self.pending.len(),
            value_table: uses_table.then_some(self.table),
        })
    }

    fn day_capacities(&mut self) -> Result<Vec<Option<u32>>> {
        let n = self.brokers.len();
        Ok(match self.policy {
            Policy::Lacb | Policy::LacbOpt | Policy::An => {
                let ctx: Vec<(BrokerId, &[f64])> = self.world.brokers.iter().map(|b| (b.id, b.features.as_slice())).collect();
                let est = self.est.as_deref_mut().expect("checked in run");
                est.estimate_day(&ctx)?.into_iter().map(Some).collect()
            }
            Policy::CTopK { fixed_capacity, .. } => vec![Some(fixed_capacity); n],
            _ => vec![None; n],
        })
    }

    fn run_day(&mut self, day: u32) -> Result<()> {
        let caps = self.day_capacities()?;
        for (b, c) in self.brokers.iter_mut().zip(&caps) {
            if let Some(c) = c {
                b.capacity = *c;
            }
        }
        let mut ledger = DayLedger::new(day, caps);
        let rr_weights = (self.policy == Policy::Rr).then(|| self.rr_weights());
        let first_metric = self.metrics.len();

        for interval in 0..self.world.intervals_per_day {
            let mut pool = std::mem::take(&mut self.pending);
            pool.extend(self.world.batch(day, interval).iter().map(|r| PendingRequest::new(r.id)));
            pool.sort_by_key(|p| p.request);

            let t0 = Instant::now();
            let pairs = self.assign(&pool, &ledger, rr_weights.as_ref())?;
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            self.assign_ms.push(ms);

            let mut matched = vec![false; pool.len()];
            let mut fresh = Vec::with_capacity(pairs.len());
            for (i, b) in pairs {
                matched[i] = true;
                let r = pool[i].request;
                let u = self.utility(r, b)?;
                let idx = self.result.len();
                self.result.push(Assignment { day, interval, request: r, broker: b, utility: u, realized: 0.0, rejected: false });
                ledger.record(idx, b);
                self.brokers[b.0 as usize].workload += 1;
                self.brokers[b.0 as usize].accumulated_utility += u;
                fresh.push(i);
            }
            for (i, p) in pool.iter().enumerate() {
                if !matched[i] {
                    self.pending.push(p.clone());
                }
            }
            if self.cfg.appeal_rate > 0.0 {
                for i in fresh {
                    if self.appeal_rng.random::<f64>() < self.cfg.appeal_rate {
                        let p = &pool[i];
                        let b = reassign(&mut self.result, &mut ledger, &mut self.pending, p.request, &p.excluded)?;
                        let broker = &mut self.brokers[b.0 as usize];
                        broker.workload -= 1;
                        broker.accumulated_utility -= self.world.utilities.utility(p.request, b).unwrap_or(0.0);
                    }
                }
            }
            self.metrics.push(IntervalMetric {
                policy: self.policy.name(),
                day,
                interval,
                batch_utility: 0.0,
                cumulative_utility: 0.0,
                wallclock_ms: self.opts.timing.then_some(ms),
            });
        }
        self.close_day(ledger, first_metric)
    }

    fn close_day(&mut self, mut ledger: DayLedger, first_metric: usize) -> Result<()> {
        let day = ledger.day;
        let gt = &self.world.truth;
        for &idx in &ledger.assigned {
            let a = &mut self.result.assignments_mut()[idx];
            if a.rejected {
                continue;
            }
            let b = a.broker.0 as usize;
            let rate = simgen::true_signup_rate(gt, a.broker, ledger.workload[b]);
            a.realized = a.utility * rate / gt.q[b];
            ledger.realized[b] += a.realized;
            self.metrics[first_metric + a.interval as usize].batch_utility += a.realized;
        }
        for m in &mut self.metrics[first_metric..] {
            self.cumulative += m.batch_utility;
            m.cumulative_utility = self.cumulative;
        }

        if !ledger.consistent_with(&self.result) {
            return Err(Error::InvalidConfig(format!("day {day}: ledger workloads disagree with assignments")));
        }
        if self.policy.is_capacity_aware() {
            if let Some((broker, served, capacity)) = ledger.violation() {
                return Err(Error::CapacityViolation { broker, day, served, capacity });
            }
        }

        for (i, b) in self.brokers.iter_mut().enumerate() {
            self.ledger_rows.push(LedgerRow {
                broker_id: b.id.0,
                day,
                capacity: ledger.capacity[i],
                workload: ledger.workload[i],
                day_utility: ledger.realized[i],
            });
            if let Some(est) = self.est.as_deref_mut() {
                let s = ledger.realized[i] / ledger.workload[i].max(1) as f64;
                est.feedback(b.id, TrialTriple::new(b.features.clone(), ledger.workload[i], s))?;
            }
            if let Some(c) = ledger.capacity[i] {
                self.saturation.record(b.id, ledger.workload[i] >= c);
            }
            let q = &mut self.quality[i];
            q.push_back((ledger.realized[i], ledger.workload[i]));
            if q.len() > RR_WINDOW_DAYS {
                q.pop_front();
            }
            b.close_day();
        }
        Ok(())
    }

    fn utility(&self, r: RequestId, b: BrokerId) -> Result<f64> {
        self.world.utilities.utility(r, b).ok_or(Error::MissingUtility { request: r, broker: b })
    }

    fn assign(&mut self, pool: &[PendingRequest], ledger: &DayLedger, rr: Option<&WeightedIndex<f64>>) -> Result<Vec<(usize, BrokerId)>> {
        if pool.is_empty() {
            return Ok(Vec::new());
        }
        match self.policy {
            Policy::Lacb | Policy::LacbOpt | Policy::An | Policy::KmBatch => self.assign_km(pool, ledger),
            Policy::TopK(k) => Ok(self.assign_topk(pool, ledger, k, None)),
            Policy::CTopK { k, fixed_capacity } => Ok(self.assign_topk(pool, ledger, k, Some(fixed_capacity))),
            Policy::Rr => Ok(self.assign_rr(pool, rr.expect("weights built for rr"))),
        }
    }

    fn assign_km(&mut self, pool: &[PendingRequest], ledger: &DayLedger) -> Result<Vec<(usize, BrokerId)>> {
        let avail: Vec<BrokerId> = self.brokers.iter().map(|b| b.id).filter(|&b| ledger.is_available(b)).collect();
        if avail.is_empty() {
            return Ok(Vec::new());
        }
        let refine = matches!(self.policy, Policy::Lacb | Policy::LacbOpt);
        let n = self.brokers.len();
        let mut freq = vec![0.0; n];
        let mut residue = vec![0u32; n];
        if refine {
            for &b in &avail {
                freq[b.0 as usize] = self.saturation.frequency(b);
                residue[b.0 as usize] = ledger.residue(b).expect("capacity-aware");
            }
        }
        let utilities = &self.world.utilities;
        let table = &self.table;
        let delta = self.cfg.delta;
        let weight = |i: usize, b: BrokerId| -> Option<f64> {
            let p = &pool[i];
            if !p.allows(b) {
                return None;
            }
            let u = utilities.utility(p.request, b)?;
            let j = b.0 as usize;
            Some(if refine { table.refine_utility(u, freq[j], delta, residue[j]) } else { u })
        };

        let cols = if self.policy == Policy::LacbOpt {
            let ids: Vec<RequestId> = pool.iter().map(|p| p.request).collect();
            let row_of = |r: RequestId| ids.binary_search(&r).expect("pool request");
            cbs::prune_brokers(&ids, &avail, |r, b| weight(row_of(r), b), self.cfg.rng_seed)
        } else {
            avail.clone()
        };
        let (pairs, _) = km_pairs(pool.len(), &cols, weight)?;

        if refine {
            let mut got: HashMap<BrokerId, f64> = HashMap::with_capacity(pairs.len());
            for &(i, b) in &pairs {
                got.insert(b, self.utility(pool[i].request, b)?);
            }
            for &b in &avail {
                let cr = residue[b.0 as usize];
                match got.get(&b) {
                    Some(&u) => self.table.td_update(cr, cr - 1, u)?,
                    None => self.table.td_update(cr, cr, 0.0)?,
                };
            }
        }
        Ok(pairs)
    }

    fn assign_topk(&mut self, pool: &[PendingRequest], ledger: &DayLedger, k: usize, cap: Option<u32>) -> Vec<(usize, BrokerId)> {
        let mut extra = vec![0u32; self.brokers.len()];
        let mut out = Vec::new();
        let mut row = Vec::with_capacity(self.brokers.len());
        for (i, p) in pool.iter().enumerate() {
            row.clear();
            for b in &self.brokers {
                let j = b.id.0 as usize;
                if cap.is_some_and(|c| ledger.workload[j] + extra[j] >= c) || !p.allows(b.id) {
                    continue;
                }
                if let Some(u) = self.world.utilities.utility(p.request, b.id) {
                    row.push((b.id, u));
                }
            }
            if row.is_empty() {
                continue;
            }
            let mut rng = cbs::request_rng(self.cfg.rng_seed, p.request);
            let top = cbs::select_candidates(p.request, k, &row, &mut rng).brokers;
            let pick = top[self.choice_rng.random_range(0..top.len())];
            extra[pick.0 as usize] += 1;
            out.push((i, pick));
        }
        out
    }

    fn rr_weights(&self) -> WeightedIndex<f64> {
        let w = self.quality.iter().map(|days| {
            let (sum, n) = days.iter().fold((0.0, 0u32), |(s, n), &(u, w)| (s + u, n + w));
            if n == 0 {
                RR_WEIGHT_FLOOR
            } else {
                (sum / n as f64).max(RR_WEIGHT_FLOOR)
            }
        });
        WeightedIndex::new(w).expect("positive weights")
    }

    fn assign_rr(&mut self, pool: &[PendingRequest], weights: &WeightedIndex<f64>) -> Vec<(usize, BrokerId)> {
        let mut out = Vec::new();
        for (i, p) in pool.iter().enumerate() {
            for _ in 0..64 {
                let b = BrokerId(weights.sample(&mut self.choice_rng) as u32);
                if p.allows(b) && self.world.utilities.utility(p.request, b).is_some() {
                    out.push((i, b));
                    break;
                }
            }
        }
        out
    }
}
