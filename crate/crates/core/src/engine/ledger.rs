use crate::domain::{BrokerId, MatchResult, RequestId};
use crate::error::{Error, Result};

/// A request waiting for the next interval, with the brokers it has
/// already rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingRequest {
    pub request: RequestId,
    pub excluded: Vec<BrokerId>,
}

impl PendingRequest {
    pub fn new(request: RequestId) -> Self {
        PendingRequest { request, excluded: Vec::new() }
    }

    pub fn allows(&self, broker: BrokerId) -> bool {
        !self.excluded.contains(&broker)
    }
}

/// Per-broker state of the current day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayLedger {
    pub day: u32,
    pub workload: Vec<u32>,
    /// `None` for policies without a capacity.
    pub capacity: Vec<Option<u32>>,
    /// Indices into the run's `MatchResult` of today's pairs.
    pub assigned: Vec<usize>,
    /// Realized utility per broker, filled at day end.
    pub realized: Vec<f64>,
}

impl DayLedger {
    pub fn new(day: u32, capacity: Vec<Option<u32>>) -> Self {
        let n = capacity.len();
        DayLedger { day, workload: vec![0; n], capacity, assigned: Vec::new(), realized: vec![0.0; n] }
    }

    pub fn is_available(&self, b: BrokerId) -> bool {
        let i = b.0 as usize;
        self.capacity[i].is_none_or(|c| self.workload[i] < c)
    }

    /// Residue capacity, or `None` when uncapped.
    pub fn residue(&self, b: BrokerId) -> Option<u32> {
        let i = b.0 as usize;
        self.capacity[i].map(|c| c.saturating_sub(self.workload[i]))
    }

    pub fn record(&mut self, index: usize, broker: BrokerId) {
        self.assigned.push(index);
        self.workload[broker.0 as usize] += 1;
    }

    /// Workloads equal the active pair counts of the day.
    pub fn consistent_with(&self, result: &MatchResult) -> bool {
        let mut counts = vec![0u32; self.workload.len()];
        for &i in &self.assigned {
            let a = &result.assignments()[i];
            if a.day != self.day {
                return false;
            }
            if !a.rejected {
                counts[a.broker.0 as usize] += 1;
            }
        }
        counts == self.workload
    }

    /// First broker over its capacity, as `(broker, served, capacity)`.
    pub fn violation(&self) -> Option<(BrokerId, u32, u32)> {
        self.workload.iter().zip(&self.capacity).enumerate().find_map(|(i, (&w, c))| match c {
            Some(c) if w > *c => Some((BrokerId(i as u32), w, *c)),
            _ => None,
        })
    }
}

/// Client appeal: zeroes the request's latest active pair, gives the
/// broker its slot back and queues the request for the next interval with
/// that broker excluded. `excluded` lists brokers rejected earlier.
pub fn reassign(
    result: &mut MatchResult,
    ledger: &mut DayLedger,
    pending: &mut Vec<PendingRequest>,
    request: RequestId,
    excluded: &[BrokerId],
) -> Result<BrokerId> {
    let idx = ledger
        .assigned
        .iter()
        .rev()
        .copied()
        .find(|&i| {
            let a = &result.assignments()[i];
            a.request == request && !a.rejected
        })
        .ok_or(Error::NotMatched(request))?;
    let a = &mut result.assignments_mut()[idx];
    a.utility = 0.0;
    a.realized = 0.0;
    a.rejected = true;
    let broker = a.broker;
    let w = &mut ledger.workload[broker.0 as usize];
    *w = w.checked_sub(1).ok_or(Error::NotMatched(request))?;
    let mut ex = excluded.to_vec();
    ex.push(broker);
    pending.push(PendingRequest { request, excluded: ex });
    Ok(broker)
}
