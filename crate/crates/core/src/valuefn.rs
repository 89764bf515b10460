//! Tabular value function over residue capacity, trained by temporal
//! difference, and the utility refinement it drives for brokers that often
//! run out of capacity.

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::BrokerId;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `V(cr)` for `cr` in `0..=cr_max`. Residues above `cr_max` clamp to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable<T> {
    values: Vec<T>,
    beta: T,
    gamma: T,
}

impl<T: Real> ValueTable<T> {
    pub fn new(cr_max: u32, beta: T, gamma: T) -> Result<Self> {
        if !(beta > T::zero() && beta <= T::one()) {
            return Err(Error::InvalidConfig(format!("beta {beta} outside (0, 1]")));
        }
        if !(gamma >= T::zero() && gamma <= T::one()) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(ValueTable {
            values: vec![T::zero(); cr_max as usize + 1],
            beta,
            gamma,
        })
    }

    pub fn cr_max(&self) -> u32 {
        (self.values.len() - 1) as u32
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    fn slot(&self, cr: u32) -> usize {
        (cr as usize).min(self.values.len() - 1)
    }

    pub fn get(&self, cr: u32) -> T {
        self.values[self.slot(cr)]
    }

    pub fn set(&mut self, cr: u32, v: T) {
        let i = self.slot(cr);
        self.values[i] = v;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `V(cr) += beta * (u + gamma * V(cr') - V(cr))`; returns the new
    /// `V(cr)`.
    pub fn td_update(&mut self, cr: u32, cr_next: u32, u: T) -> Result<T> {
        if cr_next > cr {
            return Err(Error::ResidueIncrease { from: cr, to: cr_next });
        }
        let target = u + self.gamma * self.get(cr_next);
        let i = self.slot(cr);
        let v = self.values[i];
        self.values[i] = v + self.beta * (target - v);
        Ok(self.values[i])
    }

    /// Value-difference term added to a saturated broker's utility when one
    /// unit of residue `cr` is consumed.
    pub fn consumption_term(&self, cr: u32) -> T {
        let next = cr.saturating_sub(1);
        self.gamma * self.get(next) - self.get(cr)
    }

    /// Refined utility: unchanged when `f_b <= delta`, otherwise shifted by
    /// `gamma * V(cr - 1) - V(cr)`.
    pub fn refine_utility(&self, u: T, f_b: T, delta: T, cr: u32) -> T {
        if f_b <= delta {
            u
        } else {
            u + self.consumption_term(cr)
        }
    }

    /// Writes `cr,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["cr", "value"]).map_err(|e| Error::csv(path, e))?;
        for (cr, v) in self.values.iter().enumerate() {
            w.write_record([cr.to_string(), format!("{v}")]).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "cr,value").ok();
        for (cr, v) in self.values.iter().enumerate() {
            writeln!(out, "{cr},{v}").ok();
        }
        String::from_utf8(out).expect("ascii")
    }
}

impl ValueTable<f64> {
    pub fn read_csv(path: &Path, beta: f64, gamma: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut values = Vec::new();
        for (i, rec) in r.deserialize::<(u32, f64)>().enumerate() {
            let (cr, v) = rec.map_err(|e| Error::csv(path, e))?;
            if cr as usize != i {
                return Err(Error::Schema { path: path.into(), detail: format!("expected cr {i}, found {cr}") });
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Schema { path: path.into(), detail: "empty table".into() });
        }
        let mut t = ValueTable::new(values.len() as u32 - 1, beta, gamma)?;
        t.values = values;
        Ok(t)
    }
}

/// Rolling per-broker record of whether the day's workload reached
/// capacity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SaturationTracker {
    window: usize,
    history: HashMap<BrokerId, VecDeque<bool>>,
}

impl SaturationTracker {
    pub fn new(window: usize) -> Self {
        SaturationTracker { window: window.max(1), history: HashMap::new() }
    }

    pub fn record(&mut self, broker: BrokerId, hit: bool) {
        let h = self.history.entry(broker).or_default();
        h.push_back(hit);
        while h.len() > self.window {
            h.pop_front();
        }
    }

    /// Hits over observed days within the window; `0` with no history.
    pub fn frequency(&self, broker: BrokerId) -> f64 {
        match self.history.get(&broker) {
            Some(h) if !h.is_empty() => h.iter().filter(|&&x| x).count() as f64 / h.len() as f64,
            _ => 0.0,
        }
    }
}

/// Alias kept for call sites that read more naturally as a free function.
pub fn saturation_frequency(tracker: &SaturationTracker, broker: BrokerId) -> f64 {
    tracker.frequency(broker)
}
