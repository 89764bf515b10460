use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Engine hyperparameters. Field names double as keys of the flat
/// key-value config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// UCB exploration coefficient.
    pub alpha: f64,
    /// Bandit observation buffer size.
    pub batch_size: usize,
    /// Regularization weight, also the initial diagonal of `D`.
    pub lambda: f64,
    /// TD learning rate.
    pub beta: f64,
    /// TD discount factor.
    pub gamma: f64,
    /// Capacity-hit frequency threshold for utility refinement.
    pub delta: f64,
    /// Candidate capacities, strictly increasing.
    pub candidate_capacities: Vec<u32>,
    /// Hidden layer widths of the reward network.
    pub layer_sizes: Vec<usize>,
    /// Gradient-descent step size of the bandit.
    pub learning_rate: f64,
    /// Full-batch steps applied when personalizing a broker's model.
    pub finetune_steps: usize,
    /// Rolling window, in days, for capacity-hit frequencies.
    pub saturation_window: usize,
    /// Days of exploratory history used to warm-start the pooled bandit.
    pub warmup_days: u32,
    /// Offline passes over the warm-up history before the first day.
    pub pretrain_epochs: usize,
    /// Probability that a client rejects the assigned broker.
    pub appeal_rate: f64,
    /// Fixed capacity used by the constrained top-k baseline.
    pub fixed_capacity: u32,
    pub rng_seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            alpha: 0.001,
            batch_size: 16,
            lambda: 0.001,
            beta: 0.25,
            gamma: 0.9,
            delta: 0.8,
            candidate_capacities: vec![10, 20, 30, 40, 50, 60],
            layer_sizes: vec![16, 8],
            learning_rate: 0.01,
            finetune_steps: 50,
            saturation_window: 7,
            warmup_days: 7,
            pretrain_epochs: 50,
            appeal_rate: 0.0,
            fixed_capacity: 45,
            rng_seed: 0,
        }
    }
}

/// Fixed capacities of the constrained top-k baseline for the three city
/// profiles.
pub const CITY_FIXED_CAPACITIES: [(&str, u32); 3] = [("city_a", 45), ("city_b", 55), ("city_c", 40)];

impl EngineConfig {
    /// Full-width reward network (128/64/16 hidden units).
    pub fn wide() -> Self {
        EngineConfig { layer_sizes: vec![128, 64, 16], ..Self::default() }
    }

    pub fn for_city(name: &str) -> Option<Self> {
        CITY_FIXED_CAPACITIES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, cap)| EngineConfig { fixed_capacity: cap, ..Self::default() })
    }

    pub fn max_capacity(&self) -> u32 {
        self.candidate_capacities.last().copied().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if self.candidate_capacities.is_empty() {
            return bad("candidate_capacities must be nonempty");
        }
        if self.candidate_capacities[0] == 0 {
            return bad("candidate capacities must be positive");
        }
        if self.candidate_capacities.windows(2).any(|w| w[0] >= w[1]) {
            return bad("candidate_capacities must be strictly increasing");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.layer_sizes.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.lambda <= 0.0 {
            return bad("lambda must be positive");
        }
        if self.saturation_window == 0 {
            return bad("saturation_window must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.appeal_rate) {
            return bad("appeal_rate must lie in [0, 1]");
        }
        if self.fixed_capacity == 0 {
            return bad("fixed_capacity must be at least 1");
        }
        Ok(())
    }
}
