//! Neural-UCB contextual bandit for online workload-capacity estimation.
//!
//! Arms are candidate capacities. The expected reward of arm `c` under
//! context `x` is a small ReLU network `S(x, c)`; the exploration bonus is
//! `alpha * sqrt(g^T D^{-1} g)` with `g` the parameter gradient of `S` and
//! `D^{-1}` maintained by rank-1 inverse updates.

mod covariance;
mod model;
mod net;
mod regret;

pub use covariance::CovarianceState;
pub use model::{BanditModel, BanditParams, BanditSnapshot, SNAPSHOT_VERSION};
pub use net::{Layer, RewardNet};
pub use regret::{cumulative_regret, RegretBound};
