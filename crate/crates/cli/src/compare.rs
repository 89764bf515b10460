use std::fs;
use std::path::{Path, PathBuf};

use broker_assign::domain::BrokerId;
use broker_assign::engine::{IntervalMetric, LedgerRow};
use broker_assign::simgen::{self, GroundTruth};
use broker_assign::io;
use serde::Serialize;

use crate::error::{io_err, CliError, CliResult};
use crate::run::{Manifest, LEDGER_FILE, MANIFEST_FILE};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: usize,
    pub mean_utility: f64,
    pub median_wallclock_ms: Option<f64>,
    /// Median wall-clock relative to the reference policy.
    pub speedup: Option<f64>,
    /// Mean cumulative capacity regret against the ground-truth oracle.
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    pub reference: Option<String>,
    pub policies: Vec<PolicySummary>,
}

struct Block {
    policy: String,
    final_utility: f64,
    wallclock: Vec<f64>,
    regret: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn blocks(metrics: &[IntervalMetric]) -> Vec<Block> {
    let mut out: Vec<Block> = Vec::new();
    for m in metrics {
        if out.last().is_none_or(|b| b.policy != m.policy) {
            out.push(Block { policy: m.policy.clone(), final_utility: 0.0, wallclock: Vec::new(), regret: None });
        }
        let b = out.last_mut().expect("pushed above");
        b.final_utility = m.cumulative_utility;
        b.wallclock.extend(m.wallclock_ms);
    }
    out
}

/// Oracle expected reward minus that of the estimated capacity, summed
/// over capacity-bearing ledger rows. Demand is taken as unconstrained.
fn capacity_regret(rows: &[LedgerRow], gt: &GroundTruth, candidates: &[u32]) -> Option<f64> {
    let max_c = candidates.iter().copied().max()?;
    let mut total = 0.0;
    let mut any = false;
    for r in rows {
        let Some(c) = r.capacity else { continue };
        let b = BrokerId(r.broker_id);
        let (_, best) = simgen::oracle_best_capacity(gt, b, max_c, candidates);
        total += best - simgen::expected_reward(gt, b, c, max_c, max_c);
        any = true;
    }
    any.then_some(total)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn compare(files: &[PathBuf], world: Option<&Path>) -> CliResult<Summary> {
    if files.is_empty() {
        return Err(CliError::Usage("no metrics files given".into()));
    }
    let truth = world.map(|w| io::read_groundtruth(&w.join(io::GROUNDTRUTH_FILE))).transpose()?;
    let mut all: Vec<Block> = Vec::new();
    for f in files {
        let metrics = io::read_metrics(f)?;
        let dir = f.parent().unwrap_or(Path::new("."));
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Option<Manifest> = manifest_path.exists().then(|| io::read_json(&manifest_path)).transpose()?;
        for mut b in blocks(&metrics) {
            let ledger_path = dir.join(&b.policy).join(LEDGER_FILE);
            if ledger_path.exists() {
                let rows = io::read_ledger(&ledger_path)?;
                let from_ledger: f64 = rows.iter().map(|r| r.day_utility).sum();
                if !close(from_ledger, b.final_utility) {
                    return Err(CliError::Invariant(format!(
                        "{}: ledger total {from_ledger} disagrees with metrics total {}",
                        ledger_path.display(),
                        b.final_utility
                    )));
                }
                if let (Some(gt), Some(m)) = (&truth, &manifest) {
                    b.regret = capacity_regret(&rows, gt, &m.engine.candidate_capacities);
                }
            }
            all.push(b);
        }
    }

    let mut names: Vec<String> = Vec::new();
    for b in &all {
        if !names.contains(&b.policy) {
            names.push(b.policy.clone());
        }
    }
    let mut policies: Vec<PolicySummary> = names
        .iter()
        .map(|name| {
            let mine: Vec<&Block> = all.iter().filter(|b| &b.policy == name).collect();
            let runs = mine.len();
            let regrets: Vec<f64> = mine.iter().filter_map(|b| b.regret).collect();
            PolicySummary {
                policy: name.clone(),
                runs,
                mean_utility: mine.iter().map(|b| b.final_utility).sum::<f64>() / runs as f64,
                median_wallclock_ms: median(mine.iter().flat_map(|b| b.wallclock.iter().copied()).collect()),
                speedup: None,
                regret: (!regrets.is_empty()).then(|| regrets.iter().sum::<f64>() / regrets.len() as f64),
            }
        })
        .collect();

    let timed: Vec<usize> = (0..policies.len()).filter(|&i| policies[i].median_wallclock_ms.is_some()).collect();
    let reference = if timed.len() >= 2 {
        timed.iter().copied().find(|&i| policies[i].policy == "lacb_opt").or(timed.first().copied())
    } else {
        None
    };
    if let Some(r) = reference {
        let base = policies[r].median_wallclock_ms.expect("timed");
        for &i in &timed {
            if i != r {
                policies[i].speedup = policies[i].median_wallclock_ms.map(|t| t / base);
            }
        }
    }
    Ok(Summary { files: files.to_vec(), reference: reference.map(|r| policies[r].policy.clone()), policies })
}

pub fn write_summary(summary: &Summary, out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    io::write_json(&out.join(SUMMARY_FILE), summary)?;
    Ok(())
}

pub fn render_table(summary: &Summary) -> String {
    let opt = |v: Option<f64>, prec: usize| v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into());
    let mut s = format!("{:<10} {:>5} {:>14} {:>12} {:>9} {:>10}\n", "policy", "runs", "mean utility", "median ms", "speedup", "regret");
    for p in &summary.policies {
        s.push_str(&format!(
            "{:<10} {:>5} {:>14.4} {:>12} {:>9} {:>10}\n",
            p.policy,
            p.runs,
            p.mean_utility,
            opt(p.median_wallclock_ms, 3),
            opt(p.speedup, 2),
            opt(p.regret, 3)
        ));
    }
    if let Some(r) = &summary.reference {
        s.push_str(&format!("speedups relative to {r}\n"));
    }
    s
}
