use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    /// Bandit capacities with value-guided KM.
    Lacb,
    /// `Lacb` with candidate broker pruning before KM.
    LacbOpt,
    /// Client picks uniformly among its `k` best brokers; capacity ignored.
    TopK(usize),
    /// Quality-weighted random broker.
    Rr,
    /// Plain per-batch KM, no capacity logic.
    KmBatch,
    /// `TopK` over brokers still under a fixed capacity.
    CTopK { k: usize, fixed_capacity: u32 },
    /// Pooled bandit capacities with plain KM.
    An,
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Policy::TopK(0) | Policy::CTopK { k: 0, .. } => Err(Error::InvalidConfig("k must be at least 1".into())),
            Policy::CTopK { fixed_capacity: 0, .. } => Err(Error::InvalidConfig("fixed_capacity must be at least 1".into())),
            _ => Ok(()),
        }
    }

    /// Policies whose runs must respect a per-broker daily capacity.
    pub fn is_capacity_aware(&self) -> bool {
        matches!(self, Policy::Lacb | Policy::LacbOpt | Policy::An | Policy::CTopK { .. })
    }

    pub fn uses_bandit(&self) -> bool {
        matches!(self, Policy::Lacb | Policy::LacbOpt | Policy::An)
    }

    /// Parses a CLI policy name; `ctopk<k>` takes its capacity from
    /// `fixed_capacity`.
    pub fn parse(name: &str, fixed_capacity: u32) -> Result<Self> {
        let n = name.trim().to_ascii_lowercase();
        let num = |rest: &str| rest.parse::<usize>().ok().filter(|&k| k >= 1);
        let p = match n.as_str() {
            "lacb" => Policy::Lacb,
            "lacb_opt" | "lacb-opt" => Policy::LacbOpt,
            "rr" => Policy::Rr,
            "km" | "km_batch" => Policy::KmBatch,
            "an" => Policy::An,
            _ => {
                if let Some(k) = n.strip_prefix("ctopk").and_then(num) {
                    Policy::CTopK { k, fixed_capacity }
                } else if let Some(k) = n.strip_prefix("topk").and_then(num) {
                    Policy::TopK(k)
                } else {
                    return Err(Error::UnknownPolicy(name.to_string()));
                }
            }
        };
        p.validate()?;
        Ok(p)
    }

    pub fn parse_list(list: &str, fixed_capacity: u32) -> Result<Vec<Self>> {
        list.split(',').filter(|s| !s.trim().is_empty()).map(|s| Policy::parse(s, fixed_capacity)).collect()
    }

    pub fn name(&self) -> String {
        match self {
            Policy::Lacb => "lacb".into(),
            Policy::LacbOpt => "lacb_opt".into(),
            Policy::TopK(k) => format!("topk{k}"),
            Policy::Rr => "rr".into(),
            Policy::KmBatch => "km".into(),
            Policy::CTopK { k, .. } => format!("ctopk{k}"),
            Policy::An => "an".into(),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::parse(s, crate::config::EngineConfig::default().fixed_capacity)
    }
}
