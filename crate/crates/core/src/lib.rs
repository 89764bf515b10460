//! Capacity-aware broker-to-request assignment.
//!
//! Brokers have an unknown daily workload capacity. A neural-UCB contextual
//! bandit estimates it online, and each request batch is matched with the
//! Kuhn–Munkres algorithm over utilities refined by a tabular value function
//! of residue capacity. Candidate broker selection prunes the bipartite graph
//! without changing the optimum.
//!
//! The numeric kernels (`matching`, `cbs`, `valuefn`, `bandit`) are generic
//! over the scalar type; the simulation layer (`simgen`, `engine`) runs on
//! `f64`. The aliases below fix the scalar for the common case.

pub mod bandit;
pub mod cbs;
pub mod config;
pub mod domain;
pub mod engine;
pub mod error;
pub mod io;
pub mod matching;
pub mod scalar;
pub mod simgen;
pub mod valuefn;

pub use config::EngineConfig;
pub use engine::{Policy, RunOptions, RunReport};
pub use error::{Error, Result};
pub use simgen::{World, WorldConfig};

/// Bipartite graph over `f64` utilities.
pub type Graph = matching::WeightedBipartiteGraph<f64>;
/// Exact-arithmetic graph, used where float ties must be ruled out.
pub type RationalGraph = matching::WeightedBipartiteGraph<num_rational::Rational64>;
/// Reward network over `f64`.
pub type Net = bandit::RewardNet<f64>;
/// Single-precision reward network.
pub type NetF32 = bandit::RewardNet<f32>;
/// Neural-UCB bandit over `f64`.
pub type Bandit = bandit::BanditModel<f64>;
/// Single-precision bandit.
pub type BanditF32 = bandit::BanditModel<f32>;
/// Residue-capacity value table over `f64`.
pub type ValueTable = valuefn::ValueTable<f64>;
/// Trial triple over `f64`.
pub type Trial = domain::TrialTriple<f64>;

