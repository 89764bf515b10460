//! Regret accounting and the numeric form of the regret bound
//! `n |C| ξ^L / π^(L-1)`.

use super::net::RewardNet;
use crate::scalar::Real;

/// `Σ_t [oracle(x_t) - s_t]`.
pub fn cumulative_regret<C, T, F>(trials: &[(C, T)], oracle: F) -> T
where
    T: Real,
    F: Fn(&C) -> T,
{
    trials.iter().fold(T::zero(), |acc, (x, s)| acc + oracle(x) - *s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretBound<T> {
    pub batches: usize,
    pub arm_count: usize,
    pub depth: usize,
    /// Largest singular value over all layers.
    pub xi: T,
}

impl<T: Real> RegretBound<T> {
    pub fn for_net(net: &RewardNet<T>, batches: usize, arm_count: usize) -> Self {
        RegretBound { batches, arm_count, depth: net.depth(), xi: net.max_singular_value() }
    }

    pub fn value(&self) -> T {
        let pi = T::of(std::f64::consts::PI);
        let n = T::of(self.batches as f64);
        let arms = T::of(self.arm_count as f64);
        n * arms * self.xi.powi(self.depth as i32) / pi.powi(self.depth as i32 - 1)
    }

    pub fn holds(&self, regret: T) -> bool {
        regret <= self.value()
    }
}
