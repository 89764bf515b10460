use std::fs;
use std::path::{Path, PathBuf};

use broker_assign::domain::assert_capacity_feasible;
use broker_assign::engine::run_policy;
use broker_assign::{io, simgen, EngineConfig, Policy, RunOptions, RunReport, World, WorldConfig};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{io_err, CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEDGER_FILE: &str = "ledger.csv";

/// Everything needed to repeat one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub rep: u32,
    pub policies: Vec<String>,
    pub timing: bool,
    /// World directory the run was loaded from, if any.
    pub world_dir: Option<PathBuf>,
    pub engine: EngineConfig,
    pub world: WorldConfig,
}

pub fn generate(cfg: &RunConfig, seed: Option<u64>, out: &Path, utilities: bool) -> CliResult<()> {
    let mut wc = cfg.world.clone();
    if let Some(s) = seed {
        wc.rng_seed = s;
    }
    let world = simgen::generate_world(&wc)?;
    io::write_world(&world, out, utilities)?;
    println!("wrote {} brokers and {} requests to {}", world.brokers.len(), world.requests.len(), out.display());
    Ok(())
}

pub struct RunSpec {
    pub config: RunConfig,
    pub world_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub policies: Vec<Policy>,
    pub out: PathBuf,
    pub reps: u32,
    pub timing: bool,
}

pub fn run(spec: &RunSpec) -> CliResult<()> {
    if spec.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if spec.policies.is_empty() {
        return Err(CliError::Usage("no policies given".into()));
    }
    let loaded = spec.world_dir.as_deref().map(io::load_world).transpose()?;
    for rep in 0..spec.reps {
        let dir = if spec.reps == 1 { spec.out.clone() } else { spec.out.join(format!("rep-{rep}")) };
        let seed = spec.seed.unwrap_or(spec.config.engine.rng_seed) + rep as u64;
        let engine = EngineConfig { rng_seed: seed, ..spec.config.engine.clone() };
        let generated;
        let world = match &loaded {
            Some(w) => w,
            None => {
                let base = spec.seed.unwrap_or(spec.config.world.rng_seed);
                generated = simgen::generate_world(&WorldConfig { rng_seed: base + rep as u64, ..spec.config.world.clone() })?;
                &generated
            }
        };
        run_rep(spec, rep, seed, &engine, world, &dir)?;
    }
    Ok(())
}

fn run_rep(spec: &RunSpec, rep: u32, seed: u64, engine: &EngineConfig, world: &World, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let opts = RunOptions { timing: spec.timing };
    let mut metrics = Vec::new();
    let mut reports: Vec<RunReport> = Vec::new();
    for &p in &spec.policies {
        let report = run_policy(p, world, engine, opts)?;
        check_report(&report, world)?;
        let ledger_dir = dir.join(p.name());
        fs::create_dir_all(&ledger_dir).map_err(|e| io_err(&ledger_dir, e))?;
        io::write_ledger(&ledger_dir.join(LEDGER_FILE), &report.ledger)?;
        println!(
            "rep {rep} {}: realized utility {:.4} over {} pairs, {} unassigned",
            p,
            report.realized_utility(),
            report.result.active().count(),
            report.unassigned
        );
        metrics.extend(report.metrics.iter().cloned());
        reports.push(report);
    }
    check_pruning_equivalence(&reports)?;
    io::write_metrics(&dir.join(METRICS_FILE), &metrics)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        rep,
        policies: spec.policies.iter().map(|p| p.name()).collect(),
        timing: spec.timing,
        world_dir: spec.world_dir.clone(),
        engine: engine.clone(),
        world: world.config.clone(),
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

fn check_report(report: &RunReport, world: &World) -> CliResult<()> {
    let name = report.policy.name();
    if report.policy.is_capacity_aware() {
        for day in 0..world.n_days() {
            if !assert_capacity_feasible(&report.result.for_day(day), &report.capacities(day)) {
                return Err(CliError::Invariant(format!("{name}: capacity exceeded on day {day}")));
            }
        }
    }
    if report.metrics.windows(2).any(|w| w[1].cumulative_utility < w[0].cumulative_utility) {
        return Err(CliError::Invariant(format!("{name}: cumulative utility decreased")));
    }
    Ok(())
}

/// Pruning must not change the outcome of a paired run.
fn check_pruning_equivalence(reports: &[RunReport]) -> CliResult<()> {
    let find = |p: Policy| reports.iter().find(|r| r.policy == p);
    if let (Some(full), Some(pruned)) = (find(Policy::Lacb), find(Policy::LacbOpt)) {
        let same = full.metrics.len() == pruned.metrics.len()
            && full
                .metrics
                .iter()
                .zip(&pruned.metrics)
                .all(|(a, b)| a.cumulative_utility.to_bits() == b.cumulative_utility.to_bits());
        if !same || full.ledger != pruned.ledger {
            return Err(CliError::Invariant("lacb and lacb_opt diverged".into()));
        }
    }
    Ok(())
}
